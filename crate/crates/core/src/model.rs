//! Parameters, state and the right-hand side of the coupled SIRS system.
//!
//! A single spillover fraction `s` covers the three transmission scenarios:
//! `s = 0` gives two independent diseases, `s = 1` perfect spillover and
//! anything in between imperfect spillover.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("cannot read parameter file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse parameters: {0}")]
    Parse(String),
}

/// Rate constants, delays and behavioral coefficients shared by both
/// diseases. Infectivities are derived as `r0 / tau_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub r0_a: f64,
    pub r0_b: f64,
    /// Infectious period, days.
    pub tau_i: f64,
    /// Immunity period, days.
    pub tau_r: f64,
    /// Risk-perception adjustment delay, days.
    pub tau_p: f64,
    /// Sensitivity to perceived risk.
    pub k: f64,
    /// Spillover fraction in `[0, 1]`.
    pub s: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            r0_a: 3.0,
            r0_b: 2.0,
            tau_i: 7.0,
            tau_r: 100.0,
            tau_p: 30.0,
            k: 100.0,
            s: 0.0,
        }
    }
}

impl ModelParams {
    pub fn with_spillover(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    pub fn with_r0_b(mut self, r0_b: f64) -> Self {
        self.r0_b = r0_b;
        self
    }

    pub fn with_r0_a(mut self, r0_a: f64) -> Self {
        self.r0_a = r0_a;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        fn positive(name: &'static str, value: f64) -> Result<(), ParamError> {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(ParamError::Invalid {
                    name,
                    value,
                    reason: "must be finite and > 0",
                })
            }
        }
        positive("r0_a", self.r0_a)?;
        positive("r0_b", self.r0_b)?;
        positive("tau_i", self.tau_i)?;
        positive("tau_r", self.tau_r)?;
        positive("tau_p", self.tau_p)?;
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(ParamError::Invalid {
                name: "k",
                value: self.k,
                reason: "must be finite and >= 0",
            });
        }
        if !(0.0..=1.0).contains(&self.s) {
            return Err(ParamError::Invalid {
                name: "s",
                value: self.s,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(())
    }

    pub fn beta0_a(&self) -> f64 {
        self.r0_a / self.tau_i
    }

    pub fn beta0_b(&self) -> f64 {
        self.r0_b / self.tau_i
    }

    /// Relabels disease A as B and vice versa.
    pub fn swapped(&self) -> Self {
        Self {
            r0_a: self.r0_b,
            r0_b: self.r0_a,
            ..*self
        }
    }

    /// Parses the flat `key = value` parameter file and validates it.
    pub fn from_kv_str(text: &str) -> Result<Self, ParamError> {
        let params: Self = toml::from_str(text).map_err(|e| ParamError::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_kv_file(path: impl AsRef<Path>) -> Result<Self, ParamError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ParamError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_kv_str(&text)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "r0_a = {:?}\nr0_b = {:?}\ntau_i = {:?}\ntau_r = {:?}\ntau_p = {:?}\nk = {:?}\ns = {:?}\n",
            self.r0_a, self.r0_b, self.tau_i, self.tau_r, self.tau_p, self.k, self.s
        )
    }

    pub fn from_json_str(text: &str) -> Result<Self, ParamError> {
        let params: Self =
            serde_json::from_str(text).map_err(|e| ParamError::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("plain struct of f64 always serializes")
    }
}

/// The eight compartments as population fractions, in the order
/// `(S_A, I_A, R_A, Ĩ_A, S_B, I_B, R_B, Ĩ_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub s_a: f64,
    pub i_a: f64,
    pub r_a: f64,
    pub it_a: f64,
    pub s_b: f64,
    pub i_b: f64,
    pub r_b: f64,
    pub it_b: f64,
}

impl StateVector {
    pub const LEN: usize = 8;

    pub fn disease_free() -> Self {
        Self {
            s_a: 1.0,
            s_b: 1.0,
            ..Self::default()
        }
    }

    /// Standard initial condition: one in ten thousand infectious for each
    /// disease, nobody recovered, no perceived prevalence.
    pub fn initial() -> Self {
        Self {
            s_a: 0.9999,
            i_a: 0.0001,
            r_a: 0.0,
            it_a: 0.0,
            s_b: 0.9999,
            i_b: 0.0001,
            r_b: 0.0,
            it_b: 0.0,
        }
    }

    /// Equilibrium-shaped state: `R = (tau_r / tau_i) I`, `Ĩ = I`,
    /// `S = 1 - I - R`.
    pub fn from_infectious(p: &ModelParams, i_a: f64, i_b: f64) -> Self {
        let ratio = p.tau_r / p.tau_i;
        let r_a = ratio * i_a;
        let r_b = ratio * i_b;
        Self {
            s_a: 1.0 - i_a - r_a,
            i_a,
            r_a,
            it_a: i_a,
            s_b: 1.0 - i_b - r_b,
            i_b,
            r_b,
            it_b: i_b,
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.s_a, self.i_a, self.r_a, self.it_a, self.s_b, self.i_b, self.r_b, self.it_b,
        ]
    }

    pub fn from_array(x: [f64; 8]) -> Self {
        Self {
            s_a: x[0],
            i_a: x[1],
            r_a: x[2],
            it_a: x[3],
            s_b: x[4],
            i_b: x[5],
            r_b: x[6],
            it_b: x[7],
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            s_a: self.s_b,
            i_a: self.i_b,
            r_a: self.r_b,
            it_a: self.it_b,
            s_b: self.s_a,
            i_b: self.i_a,
            r_b: self.r_a,
            it_b: self.it_a,
        }
    }

    /// Largest of `|S + I + R - 1|` over the two diseases.
    pub fn conservation_drift(&self) -> f64 {
        let a = (self.s_a + self.i_a + self.r_a - 1.0).abs();
        let b = (self.s_b + self.i_b + self.r_b - 1.0).abs();
        a.max(b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(S_A={:.6e}, I_A={:.6e}, R_A={:.6e}, It_A={:.6e}, S_B={:.6e}, I_B={:.6e}, R_B={:.6e}, It_B={:.6e})",
            self.s_a, self.i_a, self.r_a, self.it_a, self.s_b, self.i_b, self.r_b, self.it_b
        )
    }
}

/// Quantities derived from a state: transmission rates, behavioral
/// multipliers and effective reproduction numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub beta_a: f64,
    pub beta_b: f64,
    pub re_a: f64,
    pub re_b: f64,
    pub m_a: f64,
    pub m_b: f64,
}

impl Observables {
    pub fn of(p: &ModelParams, x: &StateVector) -> Self {
        let m_a = behavioral_multiplier(p.k, x.it_a);
        let m_b = behavioral_multiplier(p.k, x.it_b);
        let (beta_a, beta_b) = rates_from_multipliers(p, m_a, m_b);
        Self {
            beta_a,
            beta_b,
            re_a: beta_a * x.s_a * p.tau_i,
            re_b: beta_b * x.s_b * p.tau_i,
            m_a,
            m_b,
        }
    }
}

/// `exp(-k Ĩ)`. Negative perceived prevalence (integrator overshoot) is
/// treated as zero.
#[inline]
pub fn behavioral_multiplier(k: f64, it: f64) -> f64 {
    (-k * it.max(0.0)).exp()
}

#[inline]
fn rates_from_multipliers(p: &ModelParams, m_a: f64, m_b: f64) -> (f64, f64) {
    let beta_a = m_a * (1.0 - p.s * (1.0 - m_b)) * p.beta0_a();
    let beta_b = (1.0 - p.s * (1.0 - m_a)) * m_b * p.beta0_b();
    (beta_a, beta_b)
}

/// Effective transmission rates `(beta_A, beta_B)` for the given perceived
/// prevalences.
pub fn transmission_rates(p: &ModelParams, it_a: f64, it_b: f64) -> (f64, f64) {
    let m_a = behavioral_multiplier(p.k, it_a);
    let m_b = behavioral_multiplier(p.k, it_b);
    rates_from_multipliers(p, m_a, m_b)
}

/// Effective reproduction numbers `R_e,i = beta_i S_i tau_I`.
pub fn effective_r(p: &ModelParams, x: &StateVector) -> (f64, f64) {
    let (beta_a, beta_b) = transmission_rates(p, x.it_a, x.it_b);
    (beta_a * x.s_a * p.tau_i, beta_b * x.s_b * p.tau_i)
}

/// Time derivative of the full eight-dimensional system.
pub fn rhs(p: &ModelParams, x: &StateVector) -> StateVector {
    StateVector::from_array(rhs_array(p, &x.to_array()))
}

#[inline]
pub fn rhs_array(p: &ModelParams, x: &[f64; 8]) -> [f64; 8] {
    let [s_a, i_a, r_a, it_a, s_b, i_b, r_b, it_b] = *x;
    let (beta_a, beta_b) = transmission_rates(p, it_a, it_b);
    let inv_i = 1.0 / p.tau_i;
    let inv_r = 1.0 / p.tau_r;
    let inv_p = 1.0 / p.tau_p;

    let inf_a = beta_a * s_a * i_a;
    let rec_a = i_a * inv_i;
    let wan_a = r_a * inv_r;
    let inf_b = beta_b * s_b * i_b;
    let rec_b = i_b * inv_i;
    let wan_b = r_b * inv_r;
    [
        wan_a - inf_a,
        inf_a - rec_a,
        rec_a - wan_a,
        (i_a - it_a) * inv_p,
        wan_b - inf_b,
        inf_b - rec_b,
        rec_b - wan_b,
        (i_b - it_b) * inv_p,
    ]
}
