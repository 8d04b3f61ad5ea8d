//! The four equilibria of the coupled system and their existence conditions.
//!
//! At any fixed point `R_i = (tau_r / tau_i) I_i` and `Ĩ_i = I_i`, so each
//! equilibrium is determined by its infectious levels. A single-disease
//! (boundary) level solves
//!
//! ```text
//! exp(k I) = r0 - (r0 / tau_i)(tau_i + tau_r) I
//! ```
//!
//! which does not depend on the spillover fraction. The endemic pair solves
//! two such equations coupled through the spillover factor
//! `L_s(I) = exp(kI) / (exp(kI) - s (exp(kI) - 1))`, found here by nested
//! bisection.

use serde::Serialize;
use thiserror::Error;

use crate::model::{rhs, ModelParams, StateVector};
use crate::roots::{bisect, RootError};

pub const BOUNDARY_TOL: f64 = 1e-12;
const INNER_TOL: f64 = 1e-14;
const OUTER_TOL: f64 = 1e-13;
const MAX_OUTER_ITER: usize = 200;
const MAX_INNER_ITER: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EquilibriumKind {
    DiseaseFree,
    BoundaryA,
    BoundaryB,
    Endemic,
}

impl EquilibriumKind {
    pub const ALL: [EquilibriumKind; 4] = [
        EquilibriumKind::DiseaseFree,
        EquilibriumKind::BoundaryA,
        EquilibriumKind::BoundaryB,
        EquilibriumKind::Endemic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EquilibriumKind::DiseaseFree => "DiseaseFree",
            EquilibriumKind::BoundaryA => "BoundaryA",
            EquilibriumKind::BoundaryB => "BoundaryB",
            EquilibriumKind::Endemic => "Endemic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disease {
    A,
    B,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("bracket failure in boundary solve: {0}")]
    BracketFailure(RootError),
    #[error("endemic solve did not converge (existence margin {margin:e}): {detail}")]
    ConvergenceFailure { margin: f64, detail: String },
    #[error("axis intercept undefined for s = 0")]
    DomainError,
    #[error("spillover threshold needs r0_a > r0_b > 1, got r0_a = {r0_a}, r0_b = {r0_b}")]
    OrderingError { r0_a: f64, r0_b: f64 },
    #[error("{kind:?} equilibrium: {source}")]
    Solver {
        kind: EquilibriumKind,
        #[source]
        source: Box<EquilibriumError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub kind: EquilibriumKind,
    pub exists: bool,
    pub i_a: f64,
    pub i_b: f64,
    pub full_state: StateVector,
    /// Signed gap of the binding existence inequality; positive means the
    /// equilibrium exists. `None` for the disease-free state, which always
    /// exists.
    pub existence_margin: Option<f64>,
    /// `max |rhs|` at `full_state`.
    pub residual_norm: f64,
}

impl EquilibriumReport {
    fn new(p: &ModelParams, kind: EquilibriumKind, levels: Option<(f64, f64)>, margin: Option<f64>) -> Self {
        let (exists, i_a, i_b) = match levels {
            Some((a, b)) => (true, a, b),
            None => (false, 0.0, 0.0),
        };
        let full_state = StateVector::from_infectious(p, i_a, i_b);
        let residual_norm = if exists { rhs(p, &full_state).max_abs() } else { 0.0 };
        Self {
            kind,
            exists,
            i_a,
            i_b,
            full_state,
            existence_margin: margin,
            residual_norm,
        }
    }
}

/// Upper end of the boundary-level bracket: where the linear right-hand side
/// drops to 1. Since `exp(kI) >= 1`, the root lies below it.
pub fn linear_root(r0: f64, tau_i: f64, tau_r: f64) -> f64 {
    (r0 - 1.0) * tau_i / (r0 * (tau_i + tau_r))
}

// The linear root is exact when k = 0, so rounding can leave the residual
// slightly negative there; widen the bracket a hair.
fn bracket_hi(r0: f64, tau_i: f64, tau_r: f64) -> f64 {
    linear_root(r0, tau_i, tau_r) * (1.0 + 1e-9)
}

/// Infectious level of the single-disease equilibrium, or `None` when
/// `r0 <= 1`.
pub fn boundary_infectious_level(
    r0: f64,
    k: f64,
    tau_i: f64,
    tau_r: f64,
) -> Result<Option<f64>, EquilibriumError> {
    if r0 <= 1.0 {
        return Ok(None);
    }
    let slope = r0 / tau_i * (tau_i + tau_r);
    let hi = bracket_hi(r0, tau_i, tau_r);
    bisect(
        |i| (k * i).exp() - r0 + slope * i,
        0.0,
        hi,
        BOUNDARY_TOL,
        MAX_INNER_ITER,
    )
    .map(Some)
    .map_err(EquilibriumError::BracketFailure)
}

/// `L_s(I) = exp(kI) / (exp(kI) - s (exp(kI) - 1))`, written in the
/// overflow-free form `1 / (1 - s (1 - exp(-kI)))`.
pub fn spillover_factor(s: f64, k: f64, level: f64) -> f64 {
    1.0 / (1.0 - s * (1.0 - (-k * level).exp()))
}

/// Boundary levels of both diseases.
pub fn boundary_levels(p: &ModelParams) -> Result<(Option<f64>, Option<f64>), EquilibriumError> {
    let a = boundary_infectious_level(p.r0_a, p.k, p.tau_i, p.tau_r).map_err(|e| {
        EquilibriumError::Solver {
            kind: EquilibriumKind::BoundaryA,
            source: Box::new(e),
        }
    })?;
    let b = boundary_infectious_level(p.r0_b, p.k, p.tau_i, p.tau_r).map_err(|e| {
        EquilibriumError::Solver {
            kind: EquilibriumKind::BoundaryB,
            source: Box::new(e),
        }
    })?;
    Ok((a, b))
}

/// Gaps of the two endemic existence inequalities,
/// `(r0_a - L_s(Ī_B), r0_b - L_s(Ī_A))`. `None` if a boundary level does
/// not exist.
pub fn endemic_existence_gaps(
    p: &ModelParams,
    level_a: Option<f64>,
    level_b: Option<f64>,
) -> Option<(f64, f64)> {
    let a = level_a?;
    let b = level_b?;
    Some((
        p.r0_a - spillover_factor(p.s, p.k, b),
        p.r0_b - spillover_factor(p.s, p.k, a),
    ))
}

fn endemic_margin(p: &ModelParams, level_a: Option<f64>, level_b: Option<f64>) -> f64 {
    match endemic_existence_gaps(p, level_a, level_b) {
        Some((ga, gb)) => ga.min(gb),
        None => (p.r0_a - 1.0).min(p.r0_b - 1.0),
    }
}

/// Disease-A level on the A-nullcline for a given disease-B level. Zero
/// once the spillover factor alone exceeds `r0_a` (beyond the axis
/// intercept).
fn level_a_given_b(p: &ModelParams, i_b: f64) -> Result<f64, RootError> {
    let factor = spillover_factor(p.s, p.k, i_b);
    if factor >= p.r0_a {
        return Ok(0.0);
    }
    let slope = p.beta0_a() * (p.tau_i + p.tau_r);
    let hi = bracket_hi(p.r0_a, p.tau_i, p.tau_r);
    bisect(
        |i_a| (p.k * i_a).exp() * factor - p.r0_a + slope * i_a,
        0.0,
        hi,
        INNER_TOL,
        MAX_INNER_ITER,
    )
}

/// Infectious levels of the endemic (coexistence) equilibrium, or `None`
/// when it does not exist.
pub fn endemic_levels(p: &ModelParams) -> Result<Option<(f64, f64)>, EquilibriumError> {
    let (level_a, level_b) = boundary_levels(p)?;
    let (Some(bar_a), Some(bar_b)) = (level_a, level_b) else {
        return Ok(None);
    };
    if p.s == 0.0 {
        return Ok(Some((bar_a, bar_b)));
    }
    let (gap_a, gap_b) = endemic_existence_gaps(p, level_a, level_b).expect("both levels exist");
    let margin = gap_a.min(gap_b);
    if margin <= 0.0 {
        return Ok(None);
    }

    let slope_b = p.beta0_b() * (p.tau_i + p.tau_r);
    let mut inner_failure = None;
    // residual of the B-nullcline along the A-nullcline
    let mut closure = |i_b: f64| match level_a_given_b(p, i_b) {
        Ok(i_a) => (p.k * i_b).exp() * spillover_factor(p.s, p.k, i_a) - p.r0_b + slope_b * i_b,
        Err(e) => {
            inner_failure = Some(e);
            f64::NAN
        }
    };
    let hi = bracket_hi(p.r0_b, p.tau_i, p.tau_r);
    let outer = bisect(&mut closure, 0.0, hi, OUTER_TOL, MAX_OUTER_ITER);
    if let Some(e) = inner_failure {
        return Err(EquilibriumError::ConvergenceFailure {
            margin,
            detail: format!("inner solve: {e}"),
        });
    }
    let i_b = outer.map_err(|e| EquilibriumError::ConvergenceFailure {
        margin,
        detail: e.to_string(),
    })?;
    let i_a = level_a_given_b(p, i_b).map_err(|e| EquilibriumError::ConvergenceFailure {
        margin,
        detail: e.to_string(),
    })?;
    if !(i_a > 0.0 && i_b > 0.0) {
        return Err(EquilibriumError::ConvergenceFailure {
            margin,
            detail: format!("root left the interior: I_A = {i_a:e}, I_B = {i_b:e}"),
        });
    }
    Ok(Some((i_a, i_b)))
}

/// Where the nullcline of disease `which`'s competitor meets the axis of
/// `which`: for `Disease::B` this is the disease-B level at which disease A
/// can no longer sustain itself, `(1/k) ln(s r0_a / (1 - r0_a (1 - s)))`.
/// `None` when no positive real solution exists.
pub fn closed_form_axis_intercept(
    p: &ModelParams,
    which: Disease,
) -> Result<Option<f64>, EquilibriumError> {
    if p.s == 0.0 {
        return Err(EquilibriumError::DomainError);
    }
    let r0 = match which {
        Disease::B => p.r0_a,
        Disease::A => p.r0_b,
    };
    let denom = 1.0 - r0 * (1.0 - p.s);
    if denom <= 0.0 || p.k == 0.0 {
        return Ok(None);
    }
    let level = (p.s * r0 / denom).ln() / p.k;
    Ok((level > 0.0).then_some(level))
}

/// Minimum spillover for exclusion of the weaker disease, under the
/// approximation that the dominant disease leaves `S_A ≈ 1`.
pub fn spillover_threshold(r0_a: f64, r0_b: f64) -> Result<f64, EquilibriumError> {
    if !(r0_a > r0_b && r0_b > 1.0) {
        return Err(EquilibriumError::OrderingError { r0_a, r0_b });
    }
    Ok(threshold_formula(r0_a, r0_b))
}

pub(crate) fn threshold_formula(r0_a: f64, r0_b: f64) -> f64 {
    (1.0 - 1.0 / r0_b) / (1.0 - 1.0 / r0_a)
}

/// All four equilibria in the order disease-free, boundary A, boundary B,
/// endemic.
pub fn all_equilibria(p: &ModelParams) -> Result<Vec<EquilibriumReport>, EquilibriumError> {
    let (level_a, level_b) = boundary_levels(p)?;
    let endemic = endemic_levels(p).map_err(|e| match e {
        e @ EquilibriumError::Solver { .. } => e,
        other => EquilibriumError::Solver {
            kind: EquilibriumKind::Endemic,
            source: Box::new(other),
        },
    })?;
    Ok(vec![
        EquilibriumReport::new(p, EquilibriumKind::DiseaseFree, Some((0.0, 0.0)), None),
        EquilibriumReport::new(
            p,
            EquilibriumKind::BoundaryA,
            level_a.map(|a| (a, 0.0)),
            Some(p.r0_a - 1.0),
        ),
        EquilibriumReport::new(
            p,
            EquilibriumKind::BoundaryB,
            level_b.map(|b| (0.0, b)),
            Some(p.r0_b - 1.0),
        ),
        EquilibriumReport::new(
            p,
            EquilibriumKind::Endemic,
            endemic,
            Some(endemic_margin(p, level_a, level_b)),
        ),
    ])
}
