//! Phase diagrams over the spillover fraction and the reproduction number of
//! the weaker disease.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::equilibria::{
    boundary_levels, endemic_existence_gaps, threshold_formula, EquilibriumError,
};
use crate::integrator::{integrate, IntegrationConfig, IntegrationError, Trajectory};
use crate::model::{ModelParams, StateVector};
use crate::roots::bisect;

pub const GRID_CSV_HEADER: &str = "s,r0_b,persists_b,dominance_pct_b,analytic_coexist,margin";
pub const THRESHOLD_CSV_HEADER: &str = "r0_b,s_threshold";
pub const NA: &str = "NA";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid axis {axis}: {reason}")]
    InvalidAxis { axis: &'static str, reason: String },
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error("invalid grid spec {0:?}, expected <n_s>x<n_r0b>")]
    GridSpec(String),
}

/// The two sweep axes; the spillover fraction is the outer (row) index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxes {
    pub s_values: Vec<f64>,
    pub r0b_values: Vec<f64>,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

impl SweepAxes {
    pub fn uniform(n_s: usize, r0b_lo: f64, r0b_hi: f64, n_r0b: usize) -> Self {
        Self {
            s_values: linspace(0.0, 1.0, n_s),
            r0b_values: linspace(r0b_lo, r0b_hi, n_r0b),
        }
    }

    /// Parses `"<n_s>x<n_r0b>"` into a uniform grid over `[0, 1] × [lo, hi]`.
    pub fn from_spec(spec: &str, r0b_lo: f64, r0b_hi: f64) -> Result<Self, SweepError> {
        let err = || SweepError::GridSpec(spec.to_string());
        let (a, b) = spec.split_once(['x', 'X']).ok_or_else(err)?;
        let n_s: usize = a.trim().parse().map_err(|_| err())?;
        let n_r: usize = b.trim().parse().map_err(|_| err())?;
        if n_s < 2 || n_r < 2 {
            return Err(err());
        }
        let axes = Self::uniform(n_s, r0b_lo, r0b_hi, n_r);
        axes.validate()?;
        Ok(axes)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        check_axis("s", &self.s_values, |v| (0.0..=1.0).contains(&v))?;
        check_axis("r0_b", &self.r0b_values, |v| v > 0.0)
    }

    pub fn len(&self) -> usize {
        self.s_values.len() * self.r0b_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell coordinates in row-major `(s, r0_b)` order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.s_values
            .iter()
            .flat_map(|&s| self.r0b_values.iter().map(move |&r| (s, r)))
            .collect()
    }
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self::uniform(101, 1.0, 3.0, 101)
    }
}

fn check_axis(axis: &'static str, v: &[f64], ok: impl Fn(f64) -> bool) -> Result<(), SweepError> {
    if v.is_empty() {
        return Err(SweepError::InvalidAxis {
            axis,
            reason: "empty".into(),
        });
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite() || !ok(**x)) {
        return Err(SweepError::InvalidAxis {
            axis,
            reason: format!("value {bad} out of range"),
        });
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SweepError::InvalidAxis {
            axis,
            reason: "not strictly increasing".into(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSettings {
    pub horizon: f64,
    pub threshold: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            horizon: 365.0,
            threshold: 1e-4,
        }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<(), SweepError> {
        if !(self.horizon.is_finite() && self.horizon >= 1.0) {
            return Err(SweepError::InvalidSetting(format!(
                "horizon must be at least one day, got {}",
                self.horizon
            )));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(SweepError::InvalidSetting(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Share of the sampled days on which disease B is more prevalent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Dominance {
    Percent(f64),
    /// The two diseases are identical, so neither dominates.
    NotDominant,
}

impl fmt::Display for Dominance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dominance::Percent(v) => write!(f, "{v}"),
            Dominance::NotDominant => f.write_str(NA),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub s: f64,
    pub r0_b: f64,
    pub persists_b: Option<bool>,
    pub dominance_pct_b: Option<Dominance>,
    pub analytic_coexist: Option<bool>,
    pub margin: Option<f64>,
    /// Why the cell could not be (fully) evaluated.
    pub error: Option<String>,
}

impl CellRecord {
    fn empty(s: f64, r0_b: f64) -> Self {
        Self {
            s,
            r0_b,
            persists_b: None,
            dominance_pct_b: None,
            analytic_coexist: None,
            margin: None,
            error: None,
        }
    }

    fn push_error(&mut self, msg: String) {
        self.error = Some(match self.error.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }

    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub axes: SweepAxes,
    pub r0_a: f64,
    /// Row-major in `(s, r0_b)`.
    pub cells: Vec<CellRecord>,
}

impl SweepGrid {
    pub fn cell(&self, i_s: usize, i_r: usize) -> &CellRecord {
        &self.cells[i_s * self.axes.r0b_values.len() + i_r]
    }

    pub fn invalid_cells(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| !c.is_valid())
    }

    pub fn invalid_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.invalid_cells().count() as f64 / self.cells.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{GRID_CSV_HEADER}")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.s,
                c.r0_b,
                opt(c.persists_b),
                opt(c.dominance_pct_b),
                opt(c.analytic_coexist),
                opt(c.margin),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Cells where disease B persists although it was already excluded at a
    /// smaller spillover fraction with the same `r0_b`.
    pub fn frontier_violations(&self) -> Vec<&CellRecord> {
        let n_r = self.axes.r0b_values.len();
        let mut out = Vec::new();
        for i_r in 0..n_r {
            let mut excluded = false;
            for i_s in 0..self.axes.s_values.len() {
                let c = self.cell(i_s, i_r);
                match c.persists_b {
                    Some(false) => excluded = true,
                    Some(true) if excluded => out.push(c),
                    _ => {}
                }
            }
        }
        out
    }
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| NA.to_string(), |v| v.to_string())
}

fn cell_params(template: &ModelParams, s: f64, r0_b: f64) -> ModelParams {
    template.with_spillover(s).with_r0_b(r0_b)
}

/// Dominance over the sampled days after the start (where both diseases
/// are seeded equally).
pub fn dominance_from_trajectory(p: &ModelParams, traj: &Trajectory) -> Dominance {
    if p.r0_a == p.r0_b {
        return Dominance::NotDominant;
    }
    let (n, above) = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t > 0.0)
        .fold((0usize, 0usize), |(n, above), (_, x)| {
            (n + 1, above + usize::from(x.i_b > x.i_a))
        });
    if n == 0 {
        return Dominance::Percent(0.0);
    }
    Dominance::Percent(100.0 * above as f64 / n as f64)
}

/// Percentage of days in `[1, horizon]` on which `I_B > I_A`, starting from
/// the default initial state.
pub fn dominance_percentage(p: &ModelParams, horizon: f64) -> Result<Dominance, IntegrationError> {
    if p.r0_a == p.r0_b {
        return Ok(Dominance::NotDominant);
    }
    let traj = integrate(p, &StateVector::initial(), &IntegrationConfig::daily(horizon))?;
    Ok(dominance_from_trajectory(p, &traj))
}

fn simulate_cell(template: &ModelParams, settings: &SweepSettings, cell: &mut CellRecord) {
    let p = cell_params(template, cell.s, cell.r0_b);
    if let Err(e) = p.validate() {
        cell.push_error(e.to_string());
        return;
    }
    match integrate(&p, &StateVector::initial(), &IntegrationConfig::daily(settings.horizon)) {
        Ok(traj) => {
            let last = traj.last().expect("daily grid is nonempty");
            cell.persists_b = Some(last.i_b >= settings.threshold);
            cell.dominance_pct_b = Some(dominance_from_trajectory(&p, &traj));
        }
        Err(e) => cell.push_error(format!("integration: {e}")),
    }
}

/// Signed gap of the binding coexistence condition, `None` if a boundary
/// level is missing (a disease below its epidemic threshold).
pub fn coexistence_margin(p: &ModelParams) -> Result<Option<f64>, EquilibriumError> {
    let (a, b) = boundary_levels(p)?;
    Ok(endemic_existence_gaps(p, a, b).map(|(ga, gb)| ga.min(gb)))
}

fn analytic_cell(template: &ModelParams, cell: &mut CellRecord) {
    let p = cell_params(template, cell.s, cell.r0_b);
    if let Err(e) = p.validate() {
        cell.push_error(e.to_string());
        return;
    }
    match coexistence_margin(&p) {
        Ok(Some(m)) => {
            cell.margin = Some(m);
            cell.analytic_coexist = Some(m > 0.0);
        }
        Ok(None) => cell.analytic_coexist = Some(false),
        Err(e) => cell.push_error(format!("root finding: {e}")),
    }
}

fn run_cells(
    template: &ModelParams,
    axes: &SweepAxes,
    work: impl Fn(&ModelParams, &mut CellRecord) + Sync,
) -> Result<SweepGrid, SweepError> {
    axes.validate()?;
    let cells = axes
        .cells()
        .into_par_iter()
        .map(|(s, r)| {
            let mut cell = CellRecord::empty(s, r);
            work(template, &mut cell);
            cell
        })
        .collect();
    Ok(SweepGrid {
        axes: axes.clone(),
        r0_a: template.r0_a,
        cells,
    })
}

/// Integrates every cell for `settings.horizon` days and records whether
/// disease B is still above `settings.threshold`, plus its dominance.
pub fn simulated_persistence(
    template: &ModelParams,
    axes: &SweepAxes,
    settings: &SweepSettings,
) -> Result<SweepGrid, SweepError> {
    settings.validate()?;
    run_cells(template, axes, |p, c| simulate_cell(p, settings, c))
}

/// Evaluates the coexistence conditions in every cell.
pub fn analytic_persistence(template: &ModelParams, axes: &SweepAxes) -> Result<SweepGrid, SweepError> {
    run_cells(template, axes, analytic_cell)
}

/// Both the simulated and the analytic columns.
pub fn full_sweep(
    template: &ModelParams,
    axes: &SweepAxes,
    settings: &SweepSettings,
) -> Result<SweepGrid, SweepError> {
    settings.validate()?;
    run_cells(template, axes, |p, c| {
        simulate_cell(p, settings, c);
        analytic_cell(p, c);
    })
}

/// Approximate spillover threshold for each `r0_b` in `[1, r0_a]`.
pub fn threshold_curve(r0_a: f64, r0b_values: &[f64]) -> Vec<Result<(f64, f64), EquilibriumError>> {
    r0b_values
        .iter()
        .map(|&r0_b| {
            if r0_a > 1.0 && (1.0..=r0_a).contains(&r0_b) {
                Ok((r0_b, threshold_formula(r0_a, r0_b)))
            } else {
                Err(EquilibriumError::OrderingError { r0_a, r0_b })
            }
        })
        .collect()
}

pub fn write_threshold_csv<W: Write>(mut out: W, curve: &[(f64, f64)]) -> io::Result<()> {
    writeln!(out, "{THRESHOLD_CSV_HEADER}")?;
    for (r, s) in curve {
        writeln!(out, "{r},{s}")?;
    }
    Ok(())
}

/// Largest spillover fraction at which the coexistence conditions still
/// hold for the given `r0_b`; `1` if they hold everywhere on `[0, 1]` and
/// `0` if they fail already at `s = 0`.
pub fn coexistence_frontier(template: &ModelParams, r0_b: f64) -> Result<f64, EquilibriumError> {
    let margin_at = |s: f64| -> Result<f64, EquilibriumError> {
        Ok(coexistence_margin(&cell_params(template, s, r0_b))?.unwrap_or(f64::NEG_INFINITY))
    };
    if margin_at(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    if margin_at(1.0)? > 0.0 {
        return Ok(1.0);
    }
    // boundary levels do not depend on s, so evaluation cannot fail here
    bisect(|s| margin_at(s).unwrap_or(f64::NAN), 0.0, 1.0, 1e-12, 200)
        .map_err(EquilibriumError::BracketFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{boundary_infectious_level, spillover_threshold};
    use proptest::prelude::*;

    #[test]
    fn grid_spec_parsing() {
        let axes = SweepAxes::from_spec("11x5", 1.0, 3.0).unwrap();
        assert_eq!(axes.s_values.len(), 11);
        assert_eq!(axes.r0b_values, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        assert!(SweepAxes::from_spec("11", 1.0, 3.0).is_err());
        assert!(SweepAxes::from_spec("1x5", 1.0, 3.0).is_err());
        assert!(SweepAxes::from_spec("ax5", 1.0, 3.0).is_err());
    }

    #[test]
    fn axes_must_increase() {
        let axes = SweepAxes {
            s_values: vec![0.0, 0.5, 0.5],
            r0b_values: vec![2.0],
        };
        assert!(axes.validate().is_err());
    }

    #[test]
    fn dominance_examples() {
        let p = ModelParams::default().with_r0_b(3.0).with_spillover(0.4);
        assert_eq!(dominance_percentage(&p, 365.0).unwrap(), Dominance::NotDominant);

        let p = ModelParams::default().with_spillover(1.0).with_r0_b(1.3);
        assert_eq!(dominance_percentage(&p, 365.0).unwrap(), Dominance::Percent(0.0));

        let p = ModelParams::default().with_r0_b(2.9);
        match dominance_percentage(&p, 365.0).unwrap() {
            Dominance::Percent(v) => assert!(v > 0.0 && v < 100.0, "{v}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn persistence_examples() {
        let axes = SweepAxes {
            s_values: vec![0.0, 1.0],
            r0b_values: vec![1.3, 2.9],
        };
        let g = simulated_persistence(&ModelParams::default(), &axes, &SweepSettings::default()).unwrap();
        assert_eq!(g.cell(0, 1).persists_b, Some(true));
        assert_eq!(g.cell(1, 0).persists_b, Some(false));
        assert_eq!(g.invalid_fraction(), 0.0);
    }

    #[test]
    fn analytic_examples() {
        let axes = SweepAxes {
            s_values: vec![0.0, 1.0],
            r0b_values: vec![1.1, 2.0],
        };
        let g = analytic_persistence(&ModelParams::default(), &axes).unwrap();
        assert_eq!(g.cell(0, 0).analytic_coexist, Some(true));
        assert_eq!(g.cell(0, 1).analytic_coexist, Some(true));
        assert_eq!(g.cell(1, 1).analytic_coexist, Some(false));
        assert_eq!(g.cell(0, 0).persists_b, None);
    }

    #[test]
    fn subthreshold_disease_never_coexists() {
        let axes = SweepAxes {
            s_values: vec![0.0],
            r0b_values: vec![0.8],
        };
        let g = analytic_persistence(&ModelParams::default(), &axes).unwrap();
        assert_eq!(g.cells[0].analytic_coexist, Some(false));
        assert_eq!(g.cells[0].margin, None);
    }

    #[test]
    fn csv_layout() {
        let axes = SweepAxes {
            s_values: vec![0.0, 1.0],
            r0b_values: vec![3.0],
        };
        let g = full_sweep(&ModelParams::default(), &axes, &SweepSettings::default()).unwrap();
        let csv = g.to_csv_string();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], GRID_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,3,true,NA,true,"));
        assert!(lines[2].starts_with("1,3,"));
    }

    #[test]
    fn threshold_curve_limits() {
        let curve = threshold_curve(3.0, &[1.0, 1.2, 3.0, 3.5]);
        assert_eq!(curve[0].clone().unwrap(), (1.0, 0.0));
        assert!((curve[1].clone().unwrap().1 - 0.25).abs() < 1e-12);
        assert!((curve[2].clone().unwrap().1 - 1.0).abs() < 1e-12);
        assert!(curve[3].is_err());
    }

    #[test]
    fn frontier_matches_closed_form() {
        let p = ModelParams::default();
        let level_a = boundary_infectious_level(p.r0_a, p.k, p.tau_i, p.tau_r).unwrap().unwrap();
        for r0_b in [1.1, 1.5, 2.0, 2.5] {
            let s_star = coexistence_frontier(&p, r0_b).unwrap();
            // B's condition binds: r0_b (1 - s (1 - exp(-k Ī_A))) = 1
            let expected = (1.0 - 1.0 / r0_b) / (1.0 - (-p.k * level_a).exp());
            assert!((s_star - expected.min(1.0)).abs() < 1e-9, "{r0_b}: {s_star} vs {expected}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn frontier_above_threshold(r0_b in 1.001..2.999f64) {
            let p = ModelParams::default();
            let s_star = coexistence_frontier(&p, r0_b).unwrap();
            prop_assert!(s_star >= spillover_threshold(3.0, r0_b).unwrap());
        }

        #[test]
        fn dominance_in_range(s in 0.0..=1.0f64, r0_b in 1.05..3.0f64) {
            let p = ModelParams::default().with_spillover(s).with_r0_b(r0_b);
            if let Dominance::Percent(v) = dominance_percentage(&p, 60.0).unwrap() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }
    }
}
