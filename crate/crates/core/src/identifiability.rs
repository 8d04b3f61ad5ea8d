//! Monte Carlo practical identifiability.
//!
//! Synthetic observations are generated at the true parameters, perturbed
//! with multiplicative Gaussian noise and refitted by bounded Nelder–Mead
//! started at the truth. The average relative error (ARE) of the refits at
//! each noise level decides whether a parameter is strongly identifiable,
//! weakly identifiable or not identifiable.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate_states, IntegrationConfig, IntegrationError};
use crate::model::{ModelParams, ParamError, StateVector};
use crate::optim::{minimize_bounded, NelderMeadOptions, OptimError};
use crate::parallel;

pub const ARE_CSV_HEADER: &str = "parameter,sigma,ARE";
pub const FITS_CSV_HEADER: &str = "sigma,dataset,converged,sse,sse_true";
/// ARE (in percent) below which a zero-noise refit counts as exact.
pub const ZERO_NOISE_ARE_TOL: f64 = 1e-4;
/// Share of non-converged fits at one noise level that fails a run.
pub const MAX_NON_CONVERGED: f64 = 0.10;

#[derive(Debug, Error)]
pub enum IdentError {
    #[error("invalid identifiability config: {0}")]
    Config(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("true value of {0} is zero, relative error undefined")]
    DivisionByZero(String),
    #[error("synthetic data: {0}")]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("{fraction:.1}% of fits did not converge at sigma = {sigma}")]
    AggregateNonConvergence {
        sigma: f64,
        fraction: f64,
        report: Box<IdentReport>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    BetaA,
    BetaB,
    K,
    TauR,
    TauI,
    TauP,
    KA,
    KB,
}

impl FitParam {
    pub const MODEL: [FitParam; 6] = [
        FitParam::BetaA,
        FitParam::BetaB,
        FitParam::K,
        FitParam::TauR,
        FitParam::TauI,
        FitParam::TauP,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FitParam::BetaA => "beta_a",
            FitParam::BetaB => "beta_b",
            FitParam::K => "k",
            FitParam::TauR => "tau_r",
            FitParam::TauI => "tau_i",
            FitParam::TauP => "tau_p",
            FitParam::KA => "k_a",
            FitParam::KB => "k_b",
        }
    }
}

impl fmt::Display for FitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What is observed of each disease.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputModel {
    /// `I_A(t), I_B(t)`.
    // a struct variant, so that stray keys next to `kind` are rejected
    Prevalence {},
    /// `K_A Ĩ_A(t), K_B Ĩ_B(t)`: a reported fraction of perceived prevalence.
    RecognizedPrevalence { k_a: f64, k_b: f64 },
}

impl Default for OutputModel {
    fn default() -> Self {
        OutputModel::Prevalence {}
    }
}

impl OutputModel {
    pub fn recognized(k_a: f64, k_b: f64) -> Self {
        OutputModel::RecognizedPrevalence { k_a, k_b }
    }

    pub fn validate(&self) -> Result<(), IdentError> {
        if let OutputModel::RecognizedPrevalence { k_a, k_b } = *self {
            for (name, v) in [("k_a", k_a), ("k_b", k_b)] {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(IdentError::Config(format!("{name} must lie in (0, 1], got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Parameters that can be refitted under this output.
    pub fn default_fit_params(&self) -> Vec<FitParam> {
        let mut v = FitParam::MODEL.to_vec();
        if matches!(self, OutputModel::RecognizedPrevalence { .. }) {
            v.extend([FitParam::KA, FitParam::KB]);
        }
        v
    }

    fn observe(&self, x: &StateVector) -> (f64, f64) {
        match *self {
            OutputModel::Prevalence {} => (x.i_a, x.i_b),
            OutputModel::RecognizedPrevalence { k_a, k_b } => (k_a * x.it_a, k_b * x.it_b),
        }
    }
}

/// Everything a fit may vary, in the units the fit reports (transmission
/// rates rather than reproduction numbers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPoint {
    pub model: ModelParams,
    pub output: OutputModel,
}

impl ParamPoint {
    pub fn get(&self, which: FitParam) -> Option<f64> {
        let p = &self.model;
        Some(match which {
            FitParam::BetaA => p.beta0_a(),
            FitParam::BetaB => p.beta0_b(),
            FitParam::K => p.k,
            FitParam::TauR => p.tau_r,
            FitParam::TauI => p.tau_i,
            FitParam::TauP => p.tau_p,
            FitParam::KA | FitParam::KB => match self.output {
                OutputModel::Prevalence {} => return None,
                OutputModel::RecognizedPrevalence { k_a, k_b } => {
                    if which == FitParam::KA {
                        k_a
                    } else {
                        k_b
                    }
                }
            },
        })
    }

    /// Copy with the listed parameters replaced. Transmission rates are
    /// converted with the new infectious period, and rates that are not
    /// listed keep their value.
    pub fn with_values(&self, which: &[FitParam], values: &[f64]) -> Self {
        let mut beta = (self.model.beta0_a(), self.model.beta0_b());
        let mut out = *self;
        for (&w, &v) in which.iter().zip(values) {
            match w {
                FitParam::BetaA => beta.0 = v,
                FitParam::BetaB => beta.1 = v,
                FitParam::K => out.model.k = v,
                FitParam::TauR => out.model.tau_r = v,
                FitParam::TauI => out.model.tau_i = v,
                FitParam::TauP => out.model.tau_p = v,
                FitParam::KA | FitParam::KB => {
                    if let OutputModel::RecognizedPrevalence { k_a, k_b } = &mut out.output {
                        if w == FitParam::KA {
                            *k_a = v;
                        } else {
                            *k_b = v;
                        }
                    }
                }
            }
        }
        out.model.r0_a = beta.0 * out.model.tau_i;
        out.model.r0_b = beta.1 * out.model.tau_i;
        out
    }
}

fn default_noise_levels() -> Vec<f64> {
    vec![0.0, 0.01, 0.05, 0.10, 0.20, 0.30]
}

fn default_n_datasets() -> usize {
    1000
}

fn default_horizon() -> f64 {
    365.0
}

fn default_n_samples() -> usize {
    100
}

fn default_x_tol() -> f64 {
    1e-7
}

fn default_iter_per_param() -> usize {
    5000
}

/// `n` evenly spaced sample times over `[0, horizon]`.
pub fn even_sample_times(horizon: f64, n: usize) -> Vec<f64> {
    crate::sweep::linspace(0.0, horizon, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentConfig {
    #[serde(default)]
    pub true_params: ModelParams,
    #[serde(default)]
    pub output: OutputModel,
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_n_datasets")]
    pub n_datasets: usize,
    /// With `n_samples`, builds evenly spaced sample times when
    /// `sample_times` is absent.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub sample_times: Option<Vec<f64>>,
    #[serde(default)]
    pub fit_params: Option<Vec<FitParam>>,
    /// Per-parameter `[lo, hi]`; missing entries default to
    /// `[0.1, 10] ×` the true value.
    #[serde(default)]
    pub bounds: BTreeMap<FitParam, [f64; 2]>,
    #[serde(default)]
    pub rng_seed: u64,
    /// Simplex size tolerance in the transformed coordinates.
    #[serde(default = "default_x_tol")]
    pub x_tol: f64,
    #[serde(default = "default_iter_per_param")]
    pub max_iter_per_param: usize,
}

impl Default for IdentConfig {
    fn default() -> Self {
        Self {
            true_params: ModelParams::default(),
            output: OutputModel::default(),
            noise_levels: default_noise_levels(),
            n_datasets: default_n_datasets(),
            horizon: default_horizon(),
            n_samples: default_n_samples(),
            sample_times: None,
            fit_params: None,
            bounds: BTreeMap::new(),
            rng_seed: 0,
            x_tol: default_x_tol(),
            max_iter_per_param: default_iter_per_param(),
        }
    }
}

impl IdentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, IdentError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, IdentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IdentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn truth(&self) -> ParamPoint {
        ParamPoint {
            model: self.true_params,
            output: self.output,
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_times
            .clone()
            .unwrap_or_else(|| even_sample_times(self.horizon, self.n_samples))
    }

    pub fn fit_params(&self) -> Vec<FitParam> {
        self.fit_params
            .clone()
            .unwrap_or_else(|| self.output.default_fit_params())
    }

    pub fn bounds_of(&self, which: FitParam) -> [f64; 2] {
        self.bounds.get(&which).copied().unwrap_or_else(|| {
            let v = self.truth().get(which).unwrap_or(f64::NAN);
            [0.1 * v, 10.0 * v]
        })
    }

    pub fn validate(&self) -> Result<(), IdentError> {
        let bad = |m: String| Err(IdentError::Config(m));
        self.true_params.validate()?;
        self.output.validate()?;
        if self.noise_levels.is_empty() {
            return bad("noise_levels is empty".into());
        }
        if let Some(s) = self.noise_levels.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return bad(format!("noise level {s} must be finite and >= 0"));
        }
        if self.n_datasets == 0 {
            return bad("n_datasets must be > 0".into());
        }
        if self.n_datasets > u32::MAX as usize || self.noise_levels.len() > u32::MAX as usize {
            return bad("too many datasets or noise levels".into());
        }
        if self.sample_times.is_none() && self.n_samples < 2 {
            return bad("n_samples must be at least 2".into());
        }
        let times = self.sample_times();
        if times.is_empty() {
            return bad("no sample times".into());
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sample times must be finite, >= 0 and strictly increasing".into());
        }
        if *times.last().unwrap() <= 0.0 {
            return bad("the last sample time must be > 0".into());
        }
        let params = self.fit_params();
        if params.is_empty() {
            return bad("fit_params is empty".into());
        }
        let mut seen = params.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != params.len() {
            return bad("fit_params lists a parameter twice".into());
        }
        let truth = self.truth();
        for &w in &params {
            let Some(v) = truth.get(w) else {
                return bad(format!("{w} cannot be fitted with prevalence output"));
            };
            if v <= 0.0 {
                return Err(IdentError::DivisionByZero(w.to_string()));
            }
            let [lo, hi] = self.bounds_of(w);
            if !(lo > 0.0 && lo < hi && lo <= v && v <= hi && hi.is_finite()) {
                return bad(format!("bounds [{lo}, {hi}] for {w} must be positive and contain {v}"));
            }
        }
        for w in self.bounds.keys() {
            if !params.contains(w) {
                return bad(format!("bounds given for {w}, which is not fitted"));
            }
        }
        if !(self.x_tol > 0.0) || self.max_iter_per_param == 0 {
            return bad("x_tol and max_iter_per_param must be > 0".into());
        }
        Ok(())
    }
}

/// Two observation series, one per disease.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Model output at `times`, starting from the default initial state.
pub fn synthesize(p: &ModelParams, output: &OutputModel, times: &[f64]) -> Result<Observations, IntegrationError> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let cfg = IntegrationConfig::with_samples(t_end, times.to_vec());
    let x0 = StateVector::initial();
    let states = if t_end == 0.0 {
        vec![x0; times.len()]
    } else {
        integrate_states(p, &x0, &cfg)?
    };
    let (a, b) = states.iter().map(|x| output.observe(x)).unzip();
    Ok(Observations { a, b })
}

/// `y = g (1 + sigma eps)` with standard-normal `eps`, floored at zero.
pub fn add_noise<R: Rng + ?Sized>(series: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return series.to_vec();
    }
    series
        .iter()
        .map(|&g| {
            let eps: f64 = rng.sample(StandardNormal);
            (g * (1.0 + sigma * eps)).max(0.0)
        })
        .collect()
}

/// Private stream for one dataset, independent of scheduling.
pub fn dataset_rng(seed: u64, noise_index: usize, dataset: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((noise_index as u64) << 32) | dataset as u64);
    rng
}

pub fn noisy_dataset<R: Rng + ?Sized>(clean: &Observations, sigma: f64, rng: &mut R) -> Observations {
    let a = add_noise(&clean.a, sigma, rng);
    let b = add_noise(&clean.b, sigma, rng);
    Observations { a, b }
}

pub fn sse(model: &Observations, data: &Observations) -> f64 {
    let sq = |m: &[f64], d: &[f64]| m.iter().zip(d).map(|(m, d)| (m - d).powi(2)).sum::<f64>();
    sq(&model.a, &data.a) + sq(&model.b, &data.b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutcome {
    pub values: Vec<f64>,
    pub sse: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Least-squares refit of `data`, started at the true parameters. The
/// search runs over log-parameters inside the configured bounds.
pub fn fit(cfg: &IdentConfig, data: &Observations) -> Result<FitOutcome, IdentError> {
    let params = cfg.fit_params();
    let truth = cfg.truth();
    let times = cfg.sample_times();
    let x0: Vec<f64> = params.iter().map(|&w| truth.get(w).unwrap().ln()).collect();
    let (lo, hi): (Vec<f64>, Vec<f64>) = params
        .iter()
        .map(|&w| {
            let [lo, hi] = cfg.bounds_of(w);
            (lo.ln(), hi.ln())
        })
        .unzip();
    let objective = |logs: &[f64]| {
        // exp(ln x) need not equal x; evaluate the start point exactly
        let point = if logs == x0.as_slice() {
            truth
        } else {
            let values: Vec<f64> = logs.iter().map(|v| v.exp()).collect();
            truth.with_values(&params, &values)
        };
        match synthesize(&point.model, &point.output, &times) {
            Ok(model) => sse(&model, data),
            Err(_) => f64::INFINITY,
        }
    };
    let opts = NelderMeadOptions {
        x_tol: cfg.x_tol,
        max_iter: cfg.max_iter_per_param * params.len(),
        ..NelderMeadOptions::for_dimension(params.len())
    };
    let m = minimize_bounded(objective, &x0, &lo, &hi, &opts)?;
    let values = if m.x == x0 {
        params.iter().map(|&w| truth.get(w).unwrap()).collect()
    } else {
        m.x.iter().map(|v| v.exp()).collect()
    };
    Ok(FitOutcome {
        values,
        sse: m.f,
        converged: m.converged,
        evaluations: m.evaluations,
    })
}

/// `100 · mean_j |p - p_j| / |p|` for every parameter.
pub fn are(truth: &[f64], fits: &[Vec<f64>]) -> Result<Vec<f64>, IdentError> {
    if fits.is_empty() {
        return Err(IdentError::Config("ARE needs at least one fit".into()));
    }
    truth
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if p == 0.0 {
                return Err(IdentError::DivisionByZero(format!("component {k}")));
            }
            let total: f64 = fits.iter().map(|f| (p - f[k]).abs() / p.abs()).sum();
            Ok(100.0 * total / fits.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Identifiability {
    Strong,
    Weak,
    NonIdentifiable,
}

impl Identifiability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Identifiability::Strong => "Strong",
            Identifiability::Weak => "Weak",
            Identifiability::NonIdentifiable => "NonIdentifiable",
        }
    }
}

/// Classification from one parameter's ARE column (percent) at the given
/// noise levels (fractions). At `sigma = 0` the refit must be exact up to
/// [`ZERO_NOISE_ARE_TOL`].
pub fn classify_are(noise_levels: &[f64], are_column: &[f64]) -> Identifiability {
    let mut strong = true;
    for (&sigma, &a) in noise_levels.iter().zip(are_column) {
        let (lower, upper) = if sigma == 0.0 {
            (ZERO_NOISE_ARE_TOL, ZERO_NOISE_ARE_TOL)
        } else {
            (100.0 * sigma, 1000.0 * sigma)
        };
        if !(a <= upper) {
            return Identifiability::NonIdentifiable;
        }
        if a > lower {
            strong = false;
        }
    }
    if strong {
        Identifiability::Strong
    } else {
        Identifiability::Weak
    }
}

/// Classifies every column of an ARE table laid out `[noise][parameter]`.
pub fn classify(noise_levels: &[f64], are_table: &[Vec<f64>]) -> Vec<Identifiability> {
    let n_params = are_table.first().map_or(0, Vec::len);
    (0..n_params)
        .map(|k| {
            let column: Vec<f64> = are_table.iter().map(|row| row[k]).collect();
            classify_are(noise_levels, &column)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFit {
    pub sigma: f64,
    pub dataset: usize,
    pub converged: bool,
    pub sse: f64,
    /// Objective at the true parameters for the same dataset.
    pub sse_true: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentReport {
    pub params: Vec<FitParam>,
    pub truth: Vec<f64>,
    pub noise_levels: Vec<f64>,
    /// ARE in percent, `[noise][parameter]`.
    pub are: Vec<Vec<f64>>,
    pub classification: Vec<Identifiability>,
    pub fits: Vec<DatasetFit>,
}

impl IdentReport {
    pub fn are_of(&self, which: FitParam, sigma: f64) -> Option<f64> {
        let k = self.params.iter().position(|&p| p == which)?;
        let i = self.noise_levels.iter().position(|&s| s == sigma)?;
        Some(self.are[i][k])
    }

    pub fn class_of(&self, which: FitParam) -> Option<Identifiability> {
        let k = self.params.iter().position(|&p| p == which)?;
        Some(self.classification[k])
    }

    /// Share of fits at each noise level that hit the iteration limit.
    pub fn non_converged_fractions(&self) -> Vec<f64> {
        self.noise_levels
            .iter()
            .map(|&sigma| {
                let at: Vec<_> = self.fits.iter().filter(|f| f.sigma == sigma).collect();
                let bad = at.iter().filter(|f| !f.converged).count();
                bad as f64 / at.len().max(1) as f64
            })
            .collect()
    }

    pub fn write_are_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{ARE_CSV_HEADER}")?;
        for (k, p) in self.params.iter().enumerate() {
            for (i, sigma) in self.noise_levels.iter().enumerate() {
                writeln!(out, "{p},{sigma},{}", self.are[i][k])?;
            }
        }
        Ok(())
    }

    pub fn are_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_are_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Per-dataset outcomes, one row per fit with the fitted values last.
    pub fn write_fits_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "{FITS_CSV_HEADER}")?;
        for p in &self.params {
            write!(out, ",{p}")?;
        }
        writeln!(out)?;
        for f in &self.fits {
            write!(out, "{},{},{},{},{}", f.sigma, f.dataset, f.converged, f.sse, f.sse_true)?;
            for v in &f.values {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// JSON object mapping each parameter to its classification.
    pub fn summary_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .params
            .iter()
            .zip(&self.classification)
            .map(|(p, c)| (p.name().to_string(), c.as_str().into()))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes") + "\n"
    }
}

/// Runs the full protocol with `jobs` workers (`0` for rayon's default).
/// The report does not depend on `jobs`.
pub fn run_mc(cfg: &IdentConfig, jobs: usize) -> Result<IdentReport, IdentError> {
    cfg.validate()?;
    let params = cfg.fit_params();
    let truth_point = cfg.truth();
    let truth: Vec<f64> = params.iter().map(|&w| truth_point.get(w).unwrap()).collect();
    let clean = synthesize(&cfg.true_params, &cfg.output, &cfg.sample_times())?;

    let tasks: Vec<(usize, usize)> = (0..cfg.noise_levels.len())
        .flat_map(|i| (0..cfg.n_datasets).map(move |j| (i, j)))
        .filter(|&(i, j)| cfg.noise_levels[i] != 0.0 || j == 0)
        .collect();
    let run_task = |&(i, j): &(usize, usize)| -> Result<DatasetFit, IdentError> {
        let sigma = cfg.noise_levels[i];
        let mut rng = dataset_rng(cfg.rng_seed, i, j);
        let data = noisy_dataset(&clean, sigma, &mut rng);
        let outcome = fit(cfg, &data)?;
        Ok(DatasetFit {
            sigma,
            dataset: j,
            converged: outcome.converged,
            sse: outcome.sse,
            sse_true: sse(&clean, &data),
            values: outcome.values,
        })
    };
    let done: Vec<Result<DatasetFit, IdentError>> =
        parallel::install(jobs, || tasks.par_iter().map(run_task).collect())
            .map_err(|e| IdentError::Pool(e.to_string()))?;

    // noise-free datasets are all identical, so one fit stands for all
    let mut fits = Vec::with_capacity(cfg.noise_levels.len() * cfg.n_datasets);
    for result in done {
        let f = result?;
        if f.sigma == 0.0 {
            fits.extend((0..cfg.n_datasets).map(|j| DatasetFit {
                dataset: j,
                ..f.clone()
            }));
        } else {
            fits.push(f);
        }
    }

    let are_table = cfg
        .noise_levels
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let level: Vec<Vec<f64>> = fits[i * cfg.n_datasets..(i + 1) * cfg.n_datasets]
                .iter()
                .map(|f| f.values.clone())
                .collect();
            are(&truth, &level)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let classification = classify(&cfg.noise_levels, &are_table);
    let report = IdentReport {
        params,
        truth,
        noise_levels: cfg.noise_levels.clone(),
        are: are_table,
        classification,
        fits,
    };
    let worst = report
        .non_converged_fractions()
        .into_iter()
        .zip(&report.noise_levels)
        .find(|(frac, _)| *frac > MAX_NON_CONVERGED);
    if let Some((frac, &sigma)) = worst {
        return Err(IdentError::AggregateNonConvergence {
            sigma,
            fraction: 100.0 * frac,
            report: Box::new(report),
        });
    }
    Ok(report)
}
