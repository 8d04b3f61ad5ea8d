//! Adaptive Dormand–Prince 5(4) integration with PI step-size control and
//! fifth-order dense output.
//!
//! States are reported at the requested sample times by interpolating
//! accepted steps; the step sequence itself is never forced onto the
//! sample grid.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{rhs_array, ModelParams, Observables, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}: h = {h:e} below {h_min:e}")]
    StepSizeUnderflow { t: f64, h: f64, h_min: f64 },
    #[error("step limit of {max_steps} exceeded at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub sample_times: Vec<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl IntegrationConfig {
    pub const DEFAULT_REL_TOL: f64 = 1e-8;
    pub const DEFAULT_ABS_TOL: f64 = 1e-10;

    /// Samples every day from 0 to `t_end` (inclusive, integer days).
    pub fn daily(t_end: f64) -> Self {
        let n = t_end.floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|d| d as f64).collect();
        if *times.last().unwrap() < t_end {
            times.push(t_end);
        }
        Self::with_samples(t_end, times)
    }

    /// `n` evenly spaced samples over `[0, t_end]`, endpoints included.
    pub fn evenly_spaced(t_end: f64, n: usize) -> Self {
        let times = match n {
            0 => Vec::new(),
            1 => vec![t_end],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        t_end
                    } else {
                        t_end * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        };
        Self::with_samples(t_end, times)
    }

    pub fn with_samples(t_end: f64, sample_times: Vec<f64>) -> Self {
        Self {
            rel_tol: Self::DEFAULT_REL_TOL,
            abs_tol: Self::DEFAULT_ABS_TOL,
            t_start: 0.0,
            t_end,
            sample_times,
            max_step: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |msg: String| Err(IntegrationError::InvalidConfig(msg));
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_start < self.t_end) {
            return bad(format!(
                "need finite t_start < t_end, got [{}, {}]",
                self.t_start, self.t_end
            ));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be > 0".into());
        }
        if !(self.max_step > 0.0) {
            return bad("max_step must be > 0".into());
        }
        if self.sample_times.is_empty() {
            return bad("no sample times".into());
        }
        for w in self.sample_times.windows(2) {
            if !(w[0] < w[1]) {
                return bad(format!("sample times not strictly increasing at {}", w[1]));
            }
        }
        let first = self.sample_times[0];
        let last = *self.sample_times.last().unwrap();
        if first < self.t_start || last > self.t_end {
            return bad(format!(
                "sample times [{first}, {last}] outside [{}, {}]",
                self.t_start, self.t_end
            ));
        }
        Ok(())
    }
}

/// States and observables at the configured sample times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub observables: Vec<Observables>,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str =
        "t,S_A,I_A,R_A,It_A,S_B,I_B,R_B,It_B,beta_A,beta_B,Re_A,Re_B";

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&StateVector> {
        self.states.last()
    }

    /// Writes the trajectory as CSV with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for ((t, x), o) in self.times.iter().zip(&self.states).zip(&self.observables) {
            write!(out, "{}", fmt_full(*t))?;
            for v in x.to_array() {
                write!(out, ",{}", fmt_full(v))?;
            }
            for v in [o.beta_a, o.beta_b, o.re_a, o.re_b] {
                write!(out, ",{}", fmt_full(v))?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Integrates the model and records states plus observables at every
/// sample time.
pub fn integrate(
    p: &ModelParams,
    x0: &StateVector,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, IntegrationError> {
    let mut traj = Trajectory {
        times: Vec::with_capacity(cfg.sample_times.len()),
        states: Vec::with_capacity(cfg.sample_times.len()),
        observables: Vec::with_capacity(cfg.sample_times.len()),
    };
    solve(p, x0, cfg, |t, x| {
        let state = StateVector::from_array(*x);
        traj.times.push(t);
        traj.observables.push(Observables::of(p, &state));
        traj.states.push(state);
    })?;
    Ok(traj)
}

/// Integrates the model and returns only the sampled states.
pub fn integrate_states(
    p: &ModelParams,
    x0: &StateVector,
    cfg: &IntegrationConfig,
) -> Result<Vec<StateVector>, IntegrationError> {
    let mut states = Vec::with_capacity(cfg.sample_times.len());
    solve(p, x0, cfg, |_, x| states.push(StateVector::from_array(*x)))?;
    Ok(states)
}

/// State at `t_end` only.
pub fn integrate_to(
    p: &ModelParams,
    x0: &StateVector,
    t_end: f64,
) -> Result<StateVector, IntegrationError> {
    let cfg = IntegrationConfig::with_samples(t_end, vec![t_end]);
    let mut last = *x0;
    solve(p, x0, &cfg, |_, x| last = StateVector::from_array(*x))?;
    Ok(last)
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes c_i
// are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients: 5th-order minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

type Vec8 = [f64; 8];

#[inline]
fn axpy(y: &Vec8, h: f64, terms: &[(f64, &Vec8)]) -> Vec8 {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// Core stepping loop. `emit` receives each sample time and its state in
/// order.
fn solve<F: FnMut(f64, &Vec8)>(
    p: &ModelParams,
    x0: &StateVector,
    cfg: &IntegrationConfig,
    mut emit: F,
) -> Result<(), IntegrationError> {
    cfg.validate()?;
    let f = |y: &Vec8| rhs_array(p, y);
    let span = cfg.t_end - cfg.t_start;
    let h_min = 1e-12 * span;
    let h_max = cfg.max_step.min(span);

    let mut t = cfg.t_start;
    let mut y = x0.to_array();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFinite { t });
    }
    let mut samples = cfg.sample_times.iter().copied().peekable();
    while let Some(&ts) = samples.peek() {
        if ts <= t {
            emit(ts, &y);
            samples.next();
        } else {
            break;
        }
    }
    if samples.peek().is_none() {
        return Ok(());
    }

    let mut k1 = f(&y);
    let mut h = initial_step(&f, t, &y, &k1, cfg, h_max);
    let mut fac_old: f64 = 1e-4;
    let mut steps = 0usize;
    let mut last_rejected = false;

    loop {
        if steps >= cfg.max_steps {
            return Err(IntegrationError::TooManySteps {
                t,
                max_steps: cfg.max_steps,
            });
        }
        let remaining = cfg.t_end - t;
        let mut final_step = false;
        if h >= remaining {
            h = remaining;
            final_step = true;
        } else if h < h_min {
            return Err(IntegrationError::StepSizeUnderflow { t, h, h_min });
        }
        steps += 1;

        let k2 = f(&axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(&axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(&axpy(
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ));
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(&y_new);

        let mut err_sq = 0.0;
        for i in 0..8 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sk) * (e / sk);
        }
        let err = (err_sq / 8.0).sqrt();
        if !err.is_finite() {
            // treat as a hard rejection and retry with a much smaller step
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let t_new = if final_step { cfg.t_end } else { t + h };
            // dense output on [t, t_new]
            if samples.peek().is_some_and(|&ts| ts <= t_new) {
                let mut rc2 = [0.0; 8];
                let mut rc3 = [0.0; 8];
                let mut rc4 = [0.0; 8];
                let mut rc5 = [0.0; 8];
                for i in 0..8 {
                    let dy = y_new[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    rc2[i] = dy;
                    rc3[i] = bspl;
                    rc4[i] = dy - h * k7[i] - bspl;
                    rc5[i] = h
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                }
                while let Some(&ts) = samples.peek() {
                    if ts > t_new {
                        break;
                    }
                    if ts == t_new {
                        emit(ts, &y_new);
                    } else {
                        let theta = (ts - t) / h;
                        let theta1 = 1.0 - theta;
                        let mut yi = [0.0; 8];
                        for i in 0..8 {
                            yi[i] = y[i]
                                + theta
                                    * (rc2[i]
                                        + theta1
                                            * (rc3[i] + theta * (rc4[i] + theta1 * rc5[i])));
                        }
                        emit(ts, &yi);
                    }
                    samples.next();
                }
            }

            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFinite { t: t_new });
            }
            y = y_new;
            k1 = k7;
            t = t_new;
            if final_step || samples.peek().is_none() {
                return Ok(());
            }

            let mut fac = fac11 / fac_old.powf(BETA);
            fac_old = err.max(1e-4);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

/// Starting step from the usual two-derivative estimate.
fn initial_step<F: Fn(&Vec8) -> Vec8>(
    f: &F,
    _t: f64,
    y: &Vec8,
    f0: &Vec8,
    cfg: &IntegrationConfig,
    h_max: f64,
) -> f64 {
    let sk = |i: usize| cfg.abs_tol + cfg.rel_tol * y[i].abs();
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..8 {
        dnf += (f0[i] / sk(i)).powi(2);
        dny += (y[i] / sk(i)).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(h_max);
    let y1 = axpy(y, h, &[(1.0, f0)]);
    let f1 = f(&y1);
    let mut der2 = 0.0;
    for i in 0..8 {
        der2 += ((f1[i] - f0[i]) / sk(i)).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(h_max)
}
