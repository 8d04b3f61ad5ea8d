//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spillover_core::equilibria::{
    all_equilibria, boundary_levels, endemic_existence_gaps, spillover_threshold,
};
use spillover_core::identifiability::{
    run_mc, FitParam, IdentConfig, IdentReport, Identifiability, OutputModel, ZERO_NOISE_ARE_TOL,
};
use spillover_core::integrator::integrate_to;
use spillover_core::stability::{assess, reduced_jacobian, reduced_jacobian_fd, Stability, FD_STEP};
use spillover_core::sweep::{coexistence_frontier, linspace, threshold_curve};
use spillover_core::{ModelParams, StateVector};
use tempfile::TempDir;

const YEAR: f64 = 365.0;
const SEED: u64 = 2024;
const SPILLOVERS: [f64; 5] = [0.0, 0.1, 0.5, 0.9, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn defaults() -> ModelParams {
    ModelParams::default()
}

/// The 21×21 grid over s in [0, 1] and r0_b in [1.05, 3].
fn grid() -> Vec<ModelParams> {
    let mut cells = Vec::with_capacity(441);
    for s in linspace(0.0, 1.0, 21) {
        for r in linspace(1.05, 3.0, 21) {
            cells.push(defaults().with_spillover(s).with_r0_b(r));
        }
    }
    cells
}

fn exclusion() -> Outcome {
    let mut worst_b: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for (s, r0_b) in [(1.0, 2.0), (0.5, 1.3), (1.0, 1.3)] {
        let p = defaults().with_spillover(s).with_r0_b(r0_b);
        let one_year = integrate_to(&p, &StateVector::initial(), YEAR).unwrap();
        let five_years = integrate_to(&p, &StateVector::initial(), 5.0 * YEAR).unwrap();
        let level_a = boundary_levels(&p).unwrap().0.unwrap();
        worst_b = worst_b.max(one_year.i_b);
        worst_a = worst_a.max((five_years.i_a - level_a).abs());
    }
    outcome(
        worst_b < 1e-4 && worst_a < 1e-3,
        format!("max I_B(1y) = {worst_b:.3e}, max |I_A(5y) - level| = {worst_a:.3e}"),
    )
}

fn coexistence() -> Outcome {
    let p = defaults().with_r0_b(2.9);
    let one_year = integrate_to(&p, &StateVector::initial(), YEAR).unwrap();
    let ten_years = integrate_to(&p, &StateVector::initial(), 10.0 * YEAR).unwrap();
    let (a, b) = boundary_levels(&p).unwrap();
    let (dev_a, dev_b) = ((ten_years.i_a - a.unwrap()).abs(), (ten_years.i_b - b.unwrap()).abs());
    outcome(
        one_year.i_a > 1e-4 && one_year.i_b > 1e-4 && dev_a < 1e-4 && dev_b < 1e-4,
        format!(
            "I(1y) = ({:.3e}, {:.3e}), 10y deviation = ({dev_a:.1e}, {dev_b:.1e})",
            one_year.i_a, one_year.i_b
        ),
    )
}

fn threshold() -> Outcome {
    let v = spillover_threshold(3.0, 1.2).unwrap();
    let ends: Vec<f64> = threshold_curve(3.0, &[1.0, 3.0])
        .into_iter()
        .map(|r| r.unwrap().1)
        .collect();
    outcome(
        (v - 0.25).abs() <= 1e-12 && ends[0].abs() <= 1e-12 && (ends[1] - 1.0).abs() <= 1e-12,
        format!("s(3, 1.2) = {v}, curve ends = {ends:?}"),
    )
}

fn residuals() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in grid() {
        for r in all_equilibria(&p).unwrap().iter().filter(|r| r.exists) {
            worst = worst.max(r.residual_norm);
            count += 1;
        }
    }
    outcome(worst <= 1e-10, format!("{count} equilibria, max |rhs| = {worst:.2e}"))
}

/// Distance of the cell from any existence (equivalently invasion) boundary.
fn existence_margin(p: &ModelParams) -> f64 {
    let (a, b) = boundary_levels(p).unwrap();
    let mut m = (p.r0_a - 1.0).abs().min((p.r0_b - 1.0).abs());
    if let Some((ga, gb)) = endemic_existence_gaps(p, a, b) {
        m = m.min(ga.abs()).min(gb.abs());
    }
    m
}

fn attractors() -> Outcome {
    let (mut evaluated, mut matched) = (0usize, 0usize);
    let mut misses = Vec::new();
    for p in grid() {
        if existence_margin(&p) < 0.02 {
            continue;
        }
        evaluated += 1;
        let stable: Vec<_> = all_equilibria(&p)
            .unwrap()
            .into_iter()
            .filter(|r| r.exists && assess(&p, r).map(|v| v.verdict == Stability::Stable).unwrap_or(false))
            .collect();
        let end = integrate_to(&p, &StateVector::initial(), 20.0 * YEAR).unwrap();
        match stable.as_slice() {
            [only] if only.full_state.max_abs_diff(&end) <= 1e-4 => matched += 1,
            _ => misses.push(format!("(s={:.2}, r0_b={:.4})", p.s, p.r0_b)),
        }
    }
    let share = matched as f64 / evaluated as f64;
    let mut detail = format!("{matched}/{evaluated} cells match ({:.1}%)", 100.0 * share);
    if !misses.is_empty() {
        detail += &format!(", misses: {}", misses.join(" "));
    }
    outcome(share >= 0.98, detail)
}

fn containment() -> Outcome {
    let mut worst = f64::INFINITY;
    for r0_b in linspace(1.0, 3.0, 101) {
        let frontier = coexistence_frontier(&defaults(), r0_b).unwrap();
        let approx = threshold_curve(3.0, &[r0_b])[0].as_ref().unwrap().1;
        // the frontier is bisected to 1e-12
        worst = worst.min(frontier - approx + 1e-12);
    }
    outcome(worst >= 0.0, format!("min (s* - threshold) = {:.3e}", worst - 1e-12))
}

/// `(S, I, R, Ĩ)` for one disease; every fifth draw puts Ĩ on the clamp.
fn random_half(rng: &mut impl Rng) -> (f64, f64, f64, f64) {
    let s: f64 = rng.random_range(0.05..1.0);
    let i: f64 = rng.random_range(0.0..(1.0 - s));
    let it: f64 = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.05) };
    (s, i, 1.0 - s - i, it)
}

fn random_state(rng: &mut impl Rng) -> StateVector {
    let (s_a, i_a, r_a, it_a) = random_half(rng);
    let (s_b, i_b, r_b, it_b) = random_half(rng);
    StateVector {
        s_a,
        i_a,
        r_a,
        it_a,
        s_b,
        i_b,
        r_b,
        it_b,
    }
}

fn jacobians() -> Outcome {
    let gap = |p: &ModelParams, x: &StateVector| {
        (reduced_jacobian(p, x) - reduced_jacobian_fd(p, x, FD_STEP)).abs().max()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_random: f64 = 0.0;
    for _ in 0..100 {
        let p = defaults()
            .with_spillover(rng.random_range(0.0..=1.0))
            .with_r0_b(rng.random_range(1.05..3.0));
        worst_random = worst_random.max(gap(&p, &random_state(&mut rng)));
    }
    let mut worst_eq: f64 = 0.0;
    let mut count = 0;
    for p in grid() {
        for r in all_equilibria(&p).unwrap().iter().filter(|r| r.exists) {
            worst_eq = worst_eq.max(gap(&p, &r.full_state));
            count += 1;
        }
    }
    outcome(
        worst_random <= 1e-5 && worst_eq <= 1e-5,
        format!("max gap: 100 random states {worst_random:.2e}, {count} equilibria {worst_eq:.2e}"),
    )
}

fn zero_noise_config(s: f64, output: OutputModel) -> IdentConfig {
    IdentConfig {
        true_params: defaults().with_spillover(s),
        output,
        noise_levels: vec![0.0],
        n_datasets: 10,
        rng_seed: SEED,
        ..IdentConfig::default()
    }
}

fn outputs() -> [(&'static str, OutputModel); 2] {
    [
        ("prevalence", OutputModel::Prevalence {}),
        ("recognized", OutputModel::recognized(0.5, 0.5)),
    ]
}

fn zero_noise() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for (_, output) in outputs() {
        for s in SPILLOVERS {
            let report = run_mc(&zero_noise_config(s, output), 0).unwrap();
            worst = worst.max(report.are[0].iter().copied().fold(0.0, f64::max));
            runs += 1;
        }
    }
    outcome(
        worst <= ZERO_NOISE_ARE_TOL,
        format!("{runs} runs, max ARE at sigma = 0: {worst:.2e} %"),
    )
}

fn desk_scale_config() -> IdentConfig {
    IdentConfig {
        true_params: defaults(),
        n_datasets: 100,
        rng_seed: SEED,
        ..IdentConfig::default()
    }
}

fn classification() -> Outcome {
    use Identifiability::*;
    let report: IdentReport = run_mc(&desk_scale_config(), 0).unwrap();
    let class = |w| report.class_of(w).unwrap();
    let pattern_ok = [
        (FitParam::BetaA, Strong),
        (FitParam::BetaB, Strong),
        (FitParam::K, Weak),
        (FitParam::TauI, Weak),
        (FitParam::TauP, Strong),
    ]
    .iter()
    .all(|&(w, c)| class(w) == c)
        && matches!(class(FitParam::TauR), Weak | NonIdentifiable);

    // reference no-spillover prevalence AREs at 1% and 5% noise
    let reference_are = [
        (FitParam::BetaA, 0.2763, 1.2771),
        (FitParam::BetaB, 0.4924, 2.2904),
        (FitParam::TauP, 0.1852, 1.0242),
    ];
    let mut ratios = Vec::new();
    for (w, at1, at5) in reference_are {
        for (sigma, reference) in [(0.01, at1), (0.05, at5)] {
            ratios.push(report.are_of(w, sigma).unwrap() / reference);
        }
    }
    let ratios_ok = ratios.iter().all(|r| (0.5..=2.0).contains(r));
    let classes: Vec<String> = report
        .params
        .iter()
        .zip(&report.classification)
        .map(|(p, c)| format!("{p}={}", c.as_str()))
        .collect();
    let ratio_text: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    outcome(
        pattern_ok && ratios_ok,
        format!("{}; ARE/reference = [{}]", classes.join(" "), ratio_text.join(", ")),
    )
}

fn write_ident_config(path: &Path, cfg: &IdentConfig) {
    let p = &cfg.true_params;
    let output = match cfg.output {
        OutputModel::Prevalence {} => "kind = \"prevalence\"".to_string(),
        OutputModel::RecognizedPrevalence { k_a, k_b } => {
            format!("kind = \"recognized_prevalence\"\nk_a = {k_a:?}\nk_b = {k_b:?}")
        }
    };
    let noise: Vec<String> = cfg.noise_levels.iter().map(|v| format!("{v:?}")).collect();
    let text = format!(
        "noise_levels = [{}]\nn_datasets = {}\nrng_seed = {}\n\n[true_params]\n{}\n[output]\n{output}\n",
        noise.join(", "),
        cfg.n_datasets,
        cfg.rng_seed,
        p.to_kv_string(),
    );
    fs::write(path, text).unwrap();
}

fn cli_reports(dir: &Path, config: &Path, tag: &str, jobs: &str) -> Vec<Vec<u8>> {
    let prefix = dir.join(tag);
    let status = Command::new(env!("CARGO_BIN_EXE_spillover"))
        .args(["identify", "--config", config.to_str().unwrap(), "--jobs", jobs, "--out"])
        .arg(&prefix)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    [".csv", ".json", "_fits.csv"]
        .iter()
        .map(|suffix| fs::read(dir.join(format!("{tag}{suffix}"))).unwrap())
        .collect()
}

fn determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let mut configs = vec![("desk".to_string(), desk_scale_config())];
    for (name, output) in outputs() {
        for s in SPILLOVERS {
            configs.push((format!("zero_{name}_{s}"), zero_noise_config(s, output)));
        }
    }
    let mut differing = Vec::new();
    for (tag, cfg) in &configs {
        let path = dir.path().join(format!("{tag}.toml"));
        write_ident_config(&path, cfg);
        let one = cli_reports(dir.path(), &path, &format!("{tag}_j1"), "1");
        let eight = cli_reports(dir.path(), &path, &format!("{tag}_j8"), "8");
        if one != eight {
            differing.push(tag.clone());
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} configurations, report files identical", configs.len())
        } else {
            format!("reports differ for {}", differing.join(", "))
        },
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let criteria: [Criterion; 10] = [
        (1, "exclusion regime", exclusion, secs(5)),
        (2, "coexistence regime", coexistence, None),
        (3, "spillover threshold value", threshold, secs(1)),
        (4, "fixed-point residuals", residuals, secs(10)),
        (5, "stability matches long-run attractor", attractors, secs(300)),
        (6, "threshold under-estimates coexistence frontier", containment, None),
        (7, "analytic vs finite-difference Jacobian", jacobians, None),
        (8, "zero-noise refits are exact", zero_noise, secs(120)),
        (9, "desk-scale identifiability classes", classification, secs(1800)),
        (10, "reports independent of worker count", determinism, None),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let Some(limit) = budget {
            if elapsed > limit {
                result.pass = false;
                result.detail += &format!("; over the {} s budget", limit.as_secs());
            }
        }
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {} ({:.2} s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
