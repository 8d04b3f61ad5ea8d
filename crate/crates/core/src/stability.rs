//! Local stability of the equilibria.
//!
//! Each susceptible population is eliminated through `R = 1 - S - I`, which
//! leaves the six coordinates `(S_A, I_A, Ĩ_A, S_B, I_B, Ĩ_B)`. At the
//! boundary equilibria the reduced Jacobian is block upper-triangular, so its
//! spectrum splits into a resident 3×3 block and an invader 3×3 block, each
//! tested with the Routh–Hurwitz conditions. Every verdict is cross-checked
//! against the eigenvalues of the full 6×6 matrix.

use nalgebra::{Matrix3, Matrix6};
use serde::Serialize;
use thiserror::Error;

use crate::equilibria::{EquilibriumKind, EquilibriumReport};
use crate::model::{rhs_array, transmission_rates, ModelParams, StateVector};

/// Eigenvalues whose real part is this close to zero are not classified.
pub const MARGINAL_BAND: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("equilibrium {0:?} does not exist")]
    NotExisting(EquilibriumKind),
    #[error("leading eigenvalue real part {leading:e} lies inside the marginal band")]
    MarginalStability { leading: f64 },
    #[error(
        "Routh-Hurwitz verdict ({rh}) disagrees with leading eigenvalue {leading:e} for {kind:?}"
    )]
    PathDisagreement {
        kind: EquilibriumKind,
        rh: bool,
        leading: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    RouthHurwitz,
    NumericEigen,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Stability,
    pub method: Method,
    /// Largest real part among the eigenvalues of the reduced Jacobian.
    pub leading_eigen_real: f64,
    /// `(a1, a2, a3)` of each 3×3 block tested, empty when the numeric path
    /// alone decided.
    pub rh_coefficients: Vec<[f64; 3]>,
    /// Endemic equilibrium under spillover, where the analytic condition is
    /// only conjectured.
    pub conjecture_region: bool,
}

impl StabilityVerdict {
    pub fn is_stable(&self) -> bool {
        self.verdict == Stability::Stable
    }
}

/// `(a1, a2, a3)` satisfy the Routh–Hurwitz conditions for the monic cubic
/// `λ³ + a1 λ² + a2 λ + a3`.
pub fn routh_hurwitz_block(a1: f64, a2: f64, a3: f64) -> bool {
    a1 > 0.0 && a3 > 0.0 && a1 * a2 - a3 > 0.0
}

/// Characteristic-polynomial coefficients of a 3×3 matrix.
pub fn char_poly_coefficients(m: &Matrix3<f64>) -> [f64; 3] {
    let a1 = -m.trace();
    let a2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let a3 = -m.determinant();
    [a1, a2, a3]
}

/// Analytic Jacobian of the reduced six-dimensional system.
pub fn reduced_jacobian(p: &ModelParams, x: &StateVector) -> Matrix6<f64> {
    let (beta_a, beta_b) = transmission_rates(p, x.it_a, x.it_b);
    let m_a = crate::model::behavioral_multiplier(p.k, x.it_a);
    let m_b = crate::model::behavioral_multiplier(p.k, x.it_b);
    // right derivative at the clamp, zero below it
    let own = |it: f64, beta: f64| if it >= 0.0 { -p.k * beta } else { 0.0 };
    let cross = |it: f64, beta0: f64| {
        if it >= 0.0 {
            -p.s * p.k * beta0 * m_a * m_b
        } else {
            0.0
        }
    };
    let db_a = [own(x.it_a, beta_a), cross(x.it_b, p.beta0_a())];
    let db_b = [cross(x.it_a, p.beta0_b()), own(x.it_b, beta_b)];

    let inv_i = 1.0 / p.tau_i;
    let inv_r = 1.0 / p.tau_r;
    let inv_p = 1.0 / p.tau_p;
    let si_a = x.s_a * x.i_a;
    let si_b = x.s_b * x.i_b;

    let mut j = Matrix6::zeros();
    // disease A rows: S_A, I_A, Ĩ_A
    j[(0, 0)] = -beta_a * x.i_a - inv_r;
    j[(0, 1)] = -beta_a * x.s_a - inv_r;
    j[(0, 2)] = -si_a * db_a[0];
    j[(0, 5)] = -si_a * db_a[1];
    j[(1, 0)] = beta_a * x.i_a;
    j[(1, 1)] = beta_a * x.s_a - inv_i;
    j[(1, 2)] = si_a * db_a[0];
    j[(1, 5)] = si_a * db_a[1];
    j[(2, 1)] = inv_p;
    j[(2, 2)] = -inv_p;
    // disease B rows
    j[(3, 3)] = -beta_b * x.i_b - inv_r;
    j[(3, 4)] = -beta_b * x.s_b - inv_r;
    j[(3, 2)] = -si_b * db_b[0];
    j[(3, 5)] = -si_b * db_b[1];
    j[(4, 3)] = beta_b * x.i_b;
    j[(4, 4)] = beta_b * x.s_b - inv_i;
    j[(4, 2)] = si_b * db_b[0];
    j[(4, 5)] = si_b * db_b[1];
    j[(5, 4)] = inv_p;
    j[(5, 5)] = -inv_p;
    j
}

fn reduced_rhs(p: &ModelParams, y: &[f64; 6]) -> [f64; 6] {
    let [s_a, i_a, it_a, s_b, i_b, it_b] = *y;
    let full = [
        s_a,
        i_a,
        1.0 - s_a - i_a,
        it_a,
        s_b,
        i_b,
        1.0 - s_b - i_b,
        it_b,
    ];
    let d = rhs_array(p, &full);
    [d[0], d[1], d[3], d[4], d[5], d[7]]
}

/// Finite-difference Jacobian of the reduced system with step `h`.
///
/// Central differences everywhere except the perceived-prevalence
/// coordinates within `2h` of zero, where the clamp makes the right-hand side
/// non-smooth; those columns use the second-order forward formula.
pub fn reduced_jacobian_fd(p: &ModelParams, x: &StateVector, h: f64) -> Matrix6<f64> {
    let y = [x.s_a, x.i_a, x.it_a, x.s_b, x.i_b, x.it_b];
    let eval = |col: usize, offset: f64| {
        let mut z = y;
        z[col] += offset;
        reduced_rhs(p, &z)
    };
    let mut j = Matrix6::zeros();
    for col in 0..6 {
        let perceived = col == 2 || col == 5;
        let column: [f64; 6] = if perceived && y[col].abs() < 2.0 * h {
            let f0 = eval(col, 0.0);
            let f1 = eval(col, h);
            let f2 = eval(col, 2.0 * h);
            std::array::from_fn(|r| (-3.0 * f0[r] + 4.0 * f1[r] - f2[r]) / (2.0 * h))
        } else {
            let fp = eval(col, h);
            let fm = eval(col, -h);
            std::array::from_fn(|r| (fp[r] - fm[r]) / (2.0 * h))
        };
        for (row, v) in column.into_iter().enumerate() {
            j[(row, col)] = v;
        }
    }
    j
}

/// Largest real part among the eigenvalues of `j`.
pub fn leading_eigen_real(j: &Matrix6<f64>) -> f64 {
    j.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Resident block at a single-disease equilibrium with infectious level
/// `level`, after substituting the equilibrium condition `beta S = 1/tau_i`.
pub fn resident_block(p: &ModelParams, r0: f64, level: f64) -> Matrix3<f64> {
    let b = r0 / p.tau_i * (-p.k * level).exp();
    let (inv_i, inv_r, inv_p) = (1.0 / p.tau_i, 1.0 / p.tau_r, 1.0 / p.tau_p);
    Matrix3::new(
        -b * level - inv_r,
        -inv_i - inv_r,
        p.k * level * inv_i,
        b * level,
        0.0,
        -p.k * level * inv_i,
        0.0,
        inv_p,
        -inv_p,
    )
}

/// Closed-form Routh–Hurwitz coefficients of [`resident_block`].
pub fn resident_rh_coefficients(p: &ModelParams, r0: f64, level: f64) -> [f64; 3] {
    let b = r0 / p.tau_i * (-p.k * level).exp();
    let bi = b * level;
    let ki = p.k * level;
    let (ti, tr, tp) = (p.tau_i, p.tau_r, p.tau_p);
    let a1 = 1.0 / tp + 1.0 / tr + bi;
    let a2 = ki / (ti * tp) + 1.0 / (tr * tp) + bi / tp + bi / ti + bi / tr;
    let a3 = bi / (ti * tp) + bi / (tr * tp) + ki / (ti * tp * tr);
    [a1, a2, a3]
}

/// Block of a disease absent from the population (`S = 1`, `I = Ĩ = 0`)
/// facing a resident at infectious level `resident_level`.
pub fn invader_block(p: &ModelParams, r0_invader: f64, resident_level: f64) -> Matrix3<f64> {
    let beta_eff =
        r0_invader / p.tau_i * (1.0 - p.s * (1.0 - (-p.k * resident_level).exp()));
    let (inv_i, inv_r, inv_p) = (1.0 / p.tau_i, 1.0 / p.tau_r, 1.0 / p.tau_p);
    Matrix3::new(
        -inv_r,
        -beta_eff - inv_r,
        0.0,
        0.0,
        beta_eff - inv_i,
        0.0,
        0.0,
        inv_p,
        -inv_p,
    )
}

/// Routh–Hurwitz blocks for an equilibrium, or `None` where no block
/// decomposition is available (endemic with spillover).
fn rh_blocks(p: &ModelParams, report: &EquilibriumReport) -> Option<Vec<[f64; 3]>> {
    match report.kind {
        EquilibriumKind::DiseaseFree => Some(vec![
            char_poly_coefficients(&invader_block(p, p.r0_a, 0.0)),
            char_poly_coefficients(&invader_block(p, p.r0_b, 0.0)),
        ]),
        EquilibriumKind::BoundaryA => Some(vec![
            resident_rh_coefficients(p, p.r0_a, report.i_a),
            char_poly_coefficients(&invader_block(p, p.r0_b, report.i_a)),
        ]),
        EquilibriumKind::BoundaryB => Some(vec![
            resident_rh_coefficients(p, p.r0_b, report.i_b),
            char_poly_coefficients(&invader_block(p, p.r0_a, report.i_b)),
        ]),
        EquilibriumKind::Endemic if p.s == 0.0 => Some(vec![
            resident_rh_coefficients(p, p.r0_a, report.i_a),
            resident_rh_coefficients(p, p.r0_b, report.i_b),
        ]),
        EquilibriumKind::Endemic => None,
    }
}

/// Verdict for an existing equilibrium, with marginal cases reported as
/// [`Stability::Marginal`] instead of an error.
pub fn assess(p: &ModelParams, report: &EquilibriumReport) -> Result<StabilityVerdict, StabilityError> {
    if !report.exists {
        return Err(StabilityError::NotExisting(report.kind));
    }
    let j = reduced_jacobian(p, &report.full_state);
    let leading = leading_eigen_real(&j);
    let blocks = rh_blocks(p, report);
    let conjecture_region = blocks.is_none();
    let method = if conjecture_region {
        Method::NumericEigen
    } else {
        Method::Both
    };
    let verdict = if leading.abs() < MARGINAL_BAND {
        Stability::Marginal
    } else {
        let numeric = leading < 0.0;
        if let Some(blocks) = &blocks {
            let rh = blocks.iter().all(|&[a1, a2, a3]| routh_hurwitz_block(a1, a2, a3));
            if rh != numeric {
                return Err(StabilityError::PathDisagreement {
                    kind: report.kind,
                    rh,
                    leading,
                });
            }
        }
        if numeric {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    };
    Ok(StabilityVerdict {
        verdict,
        method,
        leading_eigen_real: leading,
        rh_coefficients: blocks.unwrap_or_default(),
        conjecture_region,
    })
}

/// Classifies an existing equilibrium as stable or unstable.
pub fn classify(p: &ModelParams, report: &EquilibriumReport) -> Result<StabilityVerdict, StabilityError> {
    let verdict = assess(p, report)?;
    if verdict.verdict == Stability::Marginal {
        return Err(StabilityError::MarginalStability {
            leading: verdict.leading_eigen_real,
        });
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{all_equilibria, boundary_infectious_level, spillover_factor};
    use proptest::prelude::*;

    fn report(p: &ModelParams, kind: EquilibriumKind) -> EquilibriumReport {
        all_equilibria(p)
            .unwrap()
            .into_iter()
            .find(|r| r.kind == kind)
            .unwrap()
    }

    #[test]
    fn rh_examples() {
        assert!(routh_hurwitz_block(3.0, 3.0, 1.0));
        assert!(!routh_hurwitz_block(-1.0, 1.0, 1.0));
        assert!(!routh_hurwitz_block(1.0, 1.0, 1.0));
    }

    #[test]
    fn char_poly_of_triple_root() {
        let m = Matrix3::new(-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0);
        let c = char_poly_coefficients(&m);
        assert!((c[0] - 3.0).abs() < 1e-14 && (c[1] - 3.0).abs() < 1e-14 && (c[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn resident_coefficients_match_block() {
        let p = ModelParams::default();
        let level = boundary_infectious_level(3.0, p.k, p.tau_i, p.tau_r).unwrap().unwrap();
        let closed = resident_rh_coefficients(&p, 3.0, level);
        let generic = char_poly_coefficients(&resident_block(&p, 3.0, level));
        for i in 0..3 {
            assert!((closed[i] - generic[i]).abs() < 1e-14 * closed[i].abs().max(1.0));
        }
        assert!(routh_hurwitz_block(closed[0], closed[1], closed[2]));
    }

    #[test]
    fn dfe_diagonal_has_invasion_rates() {
        let p = ModelParams::default();
        let j = reduced_jacobian(&p, &StateVector::disease_free());
        assert!((j[(1, 1)] - (p.beta0_a() - 1.0 / p.tau_i)).abs() < 1e-15);
        assert!((j[(4, 4)] - (p.beta0_b() - 1.0 / p.tau_i)).abs() < 1e-15);
        for r in 3..6 {
            for c in 0..3 {
                assert_eq!(j[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn boundary_a_resident_block() {
        let p = ModelParams::default().with_spillover(0.4);
        let r = report(&p, EquilibriumKind::BoundaryA);
        let j = reduced_jacobian(&p, &r.full_state);
        assert!(j[(1, 1)].abs() < 1e-10);
        let expected = resident_block(&p, p.r0_a, r.i_a);
        for a in 0..3 {
            for b in 0..3 {
                assert!((j[(a, b)] - expected[(a, b)]).abs() < 1e-10);
            }
        }
        let inv = invader_block(&p, p.r0_b, r.i_a);
        for a in 0..3 {
            for b in 0..3 {
                assert!((j[(a + 3, b + 3)] - inv[(a, b)]).abs() < 1e-12);
                assert_eq!(j[(a + 3, b)], 0.0);
            }
        }
    }

    #[test]
    fn fd_matches_analytic_at_equilibria() {
        for s in [0.0, 0.3, 0.7, 1.0] {
            let p = ModelParams::default().with_spillover(s).with_r0_b(1.5);
            for r in all_equilibria(&p).unwrap().into_iter().filter(|r| r.exists) {
                let a = reduced_jacobian(&p, &r.full_state);
                let f = reduced_jacobian_fd(&p, &r.full_state, FD_STEP);
                assert!((a - f).amax() < 1e-5, "{:?} s={s}: {}", r.kind, (a - f).amax());
            }
        }
    }

    #[test]
    fn classify_examples() {
        let p = ModelParams::default().with_r0_a(0.5).with_r0_b(0.5);
        assert!(classify(&p, &report(&p, EquilibriumKind::DiseaseFree)).unwrap().is_stable());

        let p = ModelParams::default().with_spillover(1.0).with_r0_b(1.3);
        let r = report(&p, EquilibriumKind::BoundaryA);
        let v = classify(&p, &r).unwrap();
        assert!(v.is_stable());
        assert_eq!(v.method, Method::Both);
        assert!(p.r0_b < (p.k * r.i_a).exp());

        let p = ModelParams::default();
        let v = classify(&p, &report(&p, EquilibriumKind::Endemic)).unwrap();
        assert!(v.is_stable());
        assert!(!v.conjecture_region);

        let p = ModelParams::default().with_spillover(0.5).with_r0_b(2.9);
        let v = classify(&p, &report(&p, EquilibriumKind::Endemic)).unwrap();
        assert!(v.conjecture_region);
        assert_eq!(v.method, Method::NumericEigen);
    }

    #[test]
    fn missing_equilibrium_rejected() {
        let p = ModelParams::default().with_spillover(1.0).with_r0_b(1.3);
        assert_eq!(
            classify(&p, &report(&p, EquilibriumKind::Endemic)),
            Err(StabilityError::NotExisting(EquilibriumKind::Endemic))
        );
    }

    #[test]
    fn dfe_at_threshold_is_marginal() {
        let p = ModelParams::default().with_r0_a(1.0).with_r0_b(0.5);
        assert!(matches!(
            classify(&p, &report(&p, EquilibriumKind::DiseaseFree)),
            Err(StabilityError::MarginalStability { .. })
        ));
        assert_eq!(
            assess(&p, &report(&p, EquilibriumKind::DiseaseFree)).unwrap().verdict,
            Stability::Marginal
        );
    }

    fn interior_state() -> impl Strategy<Value = StateVector> {
        (0.05..0.95f64, 0.0..0.05f64, 0.0..0.05f64, 0.05..0.95f64, 0.0..0.05f64, 0.0..0.05f64)
            .prop_map(|(s_a, i_a, it_a, s_b, i_b, it_b)| {
                StateVector::from_array([s_a, i_a, 1.0 - s_a - i_a, it_a, s_b, i_b, 1.0 - s_b - i_b, it_b])
            })
    }

    proptest! {
        #[test]
        fn fd_matches_analytic_at_random_states(x in interior_state(), s in 0.0..=1.0f64, r0_b in 1.05..3.0f64) {
            let p = ModelParams::default().with_spillover(s).with_r0_b(r0_b);
            let a = reduced_jacobian(&p, &x);
            let f = reduced_jacobian_fd(&p, &x, FD_STEP);
            prop_assert!((a - f).amax() < 1e-5);
        }

        #[test]
        fn boundary_verdict_matches_invasion_condition(s in 0.0..=1.0f64, r0_b in 1.05..3.0f64) {
            let p = ModelParams::default().with_spillover(s).with_r0_b(r0_b);
            let r = report(&p, EquilibriumKind::BoundaryA);
            let invades = p.r0_b > spillover_factor(p.s, p.k, r.i_a);
            match assess(&p, &r).unwrap().verdict {
                Stability::Stable => {
                    prop_assert!(!invades);
                    if s > 0.0 { prop_assert!(p.r0_a > p.r0_b); }
                }
                Stability::Unstable => prop_assert!(invades),
                Stability::Marginal => {}
            }
        }

        #[test]
        fn endemic_without_spillover_always_stable(r0_a in 1.05..5.0f64, r0_b in 1.05..5.0f64) {
            let p = ModelParams::default().with_r0_a(r0_a).with_r0_b(r0_b);
            let v = classify(&p, &report(&p, EquilibriumKind::Endemic)).unwrap();
            prop_assert!(v.is_stable());
        }
    }
}
