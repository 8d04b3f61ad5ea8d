//! Numerical engine for a two-pathogen SIRS model in which the behavioral
//! response to one disease can suppress transmission of the other.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds parameters, the state vector and the right-hand side.
//! * [`integrator`] is an adaptive Dormand–Prince 5(4) solver with dense
//!   output at requested sample times.
//! * [`equilibria`] locates the four equilibria by nested bisection.
//! * [`stability`] classifies them with Routh–Hurwitz block criteria and
//!   numerical eigenvalues of the reduced Jacobian.
//! * [`sweep`] builds the `(s, R0_B)` phase diagrams.
//! * [`identifiability`] runs the Monte Carlo practical-identifiability
//!   protocol.

pub mod equilibria;
pub mod identifiability;
pub mod integrator;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod roots;
pub mod stability;
pub mod sweep;

pub use equilibria::{all_equilibria, EquilibriumKind, EquilibriumReport};
pub use integrator::{integrate, IntegrationConfig, Trajectory};
pub use model::{ModelParams, Observables, StateVector};
pub use stability::{classify, Stability, StabilityVerdict};
