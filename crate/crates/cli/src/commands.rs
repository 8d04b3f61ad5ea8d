use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use spillover_core::equilibria::{all_equilibria, spillover_threshold};
use spillover_core::identifiability::{run_mc, IdentConfig, IdentError, IdentReport};
use spillover_core::integrator::{integrate, IntegrationConfig};
use spillover_core::parallel;
use spillover_core::stability::{assess, Stability, StabilityVerdict};
use spillover_core::sweep::{
    full_sweep, linspace, threshold_curve, write_threshold_csv, SweepAxes, SweepSettings,
};
use spillover_core::{ModelParams, StateVector};

use crate::{CliError, EquilibriaArgs, IdentifyArgs, SimulateArgs, SweepArgs, ThresholdArgs};

/// Runs with fewer invalid cells than this still succeed.
const MAX_INVALID_FRACTION: f64 = 0.10;

fn load_params(path: &Path) -> Result<ModelParams, CliError> {
    ModelParams::from_kv_file(path).map_err(CliError::config)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let p = load_params(&args.config)?;
    if !(args.t_end.is_finite() && args.t_end > 0.0) {
        return Err(CliError::Config(format!("--t-end must be > 0, got {}", args.t_end)));
    }
    let cfg = match args.samples {
        Some(n) if n < 2 => {
            return Err(CliError::Config(format!("--samples must be at least 2, got {n}")))
        }
        Some(n) => IntegrationConfig::evenly_spaced(args.t_end, n),
        None => IntegrationConfig::daily(args.t_end),
    };
    cfg.validate().map_err(CliError::config)?;

    let traj = integrate(&p, &StateVector::initial(), &cfg).map_err(CliError::numeric)?;
    write_file(&args.out, traj.to_csv_string())?;

    let last = traj.last().expect("at least two samples");
    let range = |f: fn(&spillover_core::Observables) -> f64| {
        traj.observables.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    };
    let (re_a_min, re_a_max) = range(|o| o.re_a);
    let (re_b_min, re_b_max) = range(|o| o.re_b);
    print_json(&json!({
        "t_end": args.t_end,
        "final_I_A": last.i_a,
        "final_I_B": last.i_b,
        "min_Re_A": re_a_min,
        "max_Re_A": re_a_max,
        "min_Re_B": re_b_min,
        "max_Re_B": re_b_max,
    }));
    Ok(())
}

fn verdict_json(v: &StabilityVerdict) -> Value {
    json!({
        "verdict": v.verdict.as_str(),
        "method": format!("{:?}", v.method),
        "leading_eigen_real": v.leading_eigen_real,
        "conjecture_region": v.conjecture_region,
        "rh_coefficients": v.rh_coefficients,
    })
}

pub fn equilibria(args: &EquilibriaArgs) -> Result<(), CliError> {
    let p = load_params(&args.config)?;
    let reports = all_equilibria(&p).map_err(CliError::numeric)?;
    let mut out = Vec::with_capacity(reports.len());
    for r in &reports {
        let stability = if r.exists {
            let v = assess(&p, r).map_err(CliError::numeric)?;
            if v.conjecture_region && v.verdict == Stability::Unstable {
                eprintln!(
                    "note: endemic equilibrium under spillover is unstable (leading eigenvalue {:e}); \
                     counterexample to the conjectured stability",
                    v.leading_eigen_real
                );
            }
            verdict_json(&v)
        } else {
            Value::Null
        };
        let level = |v: f64| if r.exists { json!(v) } else { Value::Null };
        out.push(json!({
            "kind": r.kind.as_str(),
            "exists": r.exists,
            "I_A": level(r.i_a),
            "I_B": level(r.i_b),
            "residual_norm": level(r.residual_norm),
            "existence_margin": r.existence_margin,
            "stability": stability,
        }));
    }
    let text = serde_json::to_string_pretty(&Value::Array(out)).expect("JSON values serialize") + "\n";
    match &args.out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let template = load_params(&args.config)?;
    let axes = SweepAxes::from_spec(&args.grid, args.r0b_min, args.r0b_max).map_err(CliError::config)?;
    let settings = SweepSettings {
        horizon: args.horizon,
        threshold: args.threshold,
    };
    settings.validate().map_err(CliError::config)?;
    for r in &axes.r0b_values {
        template.with_r0_b(*r).validate().map_err(CliError::config)?;
    }

    let grid = parallel::install(args.jobs, || full_sweep(&template, &axes, &settings))
        .map_err(CliError::config)?
        .map_err(CliError::config)?;

    let curve: Vec<(f64, f64)> = threshold_curve(template.r0_a, &axes.r0b_values)
        .into_iter()
        .filter_map(Result::ok)
        .collect();

    let mut log = String::new();
    for c in grid.invalid_cells() {
        let _ = writeln!(log, "invalid cell s={} r0_b={}: {}", c.s, c.r0_b, c.error.as_deref().unwrap_or(""));
    }
    let violations = grid.frontier_violations();
    for c in &violations {
        let _ = writeln!(log, "disease B persists at s={} r0_b={} after exclusion at a smaller s", c.s, c.r0_b);
    }

    write_file(&args.out, grid.to_csv_string())?;
    if let Some(path) = &args.threshold_out {
        let mut buf = Vec::new();
        write_threshold_csv(&mut buf, &curve).expect("writing to a Vec cannot fail");
        write_file(path, buf)?;
    }
    if !log.is_empty() {
        write_file(&args.out.with_extension("log"), &log)?;
    }

    let invalid = grid.invalid_cells().count();
    print_json(&json!({
        "cells": grid.cells.len(),
        "invalid_cells": invalid,
        "frontier_violations": violations.len(),
    }));
    if grid.invalid_fraction() >= MAX_INVALID_FRACTION {
        return Err(CliError::Numeric(format!(
            "{invalid} of {} cells failed",
            grid.cells.len()
        )));
    }
    Ok(())
}

fn write_ident_outputs(prefix: &Path, report: &IdentReport) -> Result<(), CliError> {
    write_file(&with_suffix(prefix, ".csv"), report.are_csv())?;
    write_file(&with_suffix(prefix, ".json"), report.summary_json())?;
    let mut fits = Vec::new();
    report.write_fits_csv(&mut fits).expect("writing to a Vec cannot fail");
    write_file(&with_suffix(prefix, "_fits.csv"), fits)?;

    let mut log = String::new();
    for f in report.fits.iter().filter(|f| !f.converged) {
        let _ = writeln!(log, "fit did not converge: sigma={} dataset={} sse={}", f.sigma, f.dataset, f.sse);
    }
    if !log.is_empty() {
        write_file(&with_suffix(prefix, ".log"), log)?;
    }
    Ok(())
}

pub fn identify(args: &IdentifyArgs) -> Result<(), CliError> {
    let mut cfg = IdentConfig::from_toml_file(&args.config).map_err(CliError::config)?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    match run_mc(&cfg, args.jobs) {
        Ok(report) => {
            write_ident_outputs(&args.out, &report)?;
            print!("{}", report.summary_json());
            Ok(())
        }
        Err(IdentError::AggregateNonConvergence { sigma, fraction, report }) => {
            write_ident_outputs(&args.out, &report)?;
            Err(CliError::Numeric(format!(
                "{fraction:.1}% of fits did not converge at sigma = {sigma}"
            )))
        }
        Err(e @ (IdentError::Integration(_) | IdentError::Optim(_))) => Err(CliError::numeric(e)),
        Err(e) => Err(CliError::config(e)),
    }
}

/// Twelve decimals with trailing zeros removed, so exact values print
/// exactly (`0.25`, not `0.25000000000000006`).
fn format_short(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn threshold(args: &ThresholdArgs) -> Result<(), CliError> {
    if args.r0b.is_none() && args.curve_out.is_none() {
        return Err(CliError::Config("give --r0b, --curve-out or both".into()));
    }
    let curve = match &args.curve_out {
        Some(_) => {
            if !(args.r0a > 1.0 && args.r0a.is_finite()) || args.points < 2 {
                return Err(CliError::Config("the curve needs r0a > 1 and at least 2 points".into()));
            }
            let values = linspace(1.0, args.r0a, args.points);
            Some(
                threshold_curve(args.r0a, &values)
                    .into_iter()
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(CliError::config)?,
            )
        }
        None => None,
    };
    let single = args
        .r0b
        .map(|r0b| spillover_threshold(args.r0a, r0b).map_err(CliError::config))
        .transpose()?;
    if let (Some(path), Some(curve)) = (&args.curve_out, &curve) {
        let mut buf = Vec::new();
        write_threshold_csv(&mut buf, curve).expect("writing to a Vec cannot fail");
        write_file(path, buf)?;
    }
    if let Some(v) = single {
        println!("{}", format_short(v));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_format() {
        assert_eq!(format_short(0.25000000000000006), "0.25");
        assert_eq!(format_short(1.0), "1");
        assert_eq!(format_short(0.0), "0");
        assert_eq!(format_short(0.75), "0.75");
    }

    #[test]
    fn suffixes() {
        assert_eq!(with_suffix(Path::new("out/run"), "_fits.csv"), PathBuf::from("out/run_fits.csv"));
    }
}
