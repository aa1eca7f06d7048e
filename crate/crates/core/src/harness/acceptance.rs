//! End-to-end acceptance checks, shared by the `accept` subcommand and the
//! `acceptance` test target.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{Analyses, ExperimentConfig, InduceConfig, MapConfig, MeasureConfig, SamplingConfig, TargetConfig};
use super::run::{read_artifacts, run_experiment};
use crate::error::Result;
use crate::inducing::{
    first_return_time, first_return_with, kac_constant, markov_neighborhood, return_branches, rmap_certificate,
    InducedSystem, ReturnTime, DEFAULT_BRANCH_TOL,
};
use crate::interval::{Interval, IntervalSet};
use crate::maps::{builtin, Dithered, Dynamics, PiecewiseMap};
use crate::measures::{
    birkhoff_measure, correlation_sequence, decay_rate, invariant_mass, EmpiricalMeasure, MeasureKind,
};
use crate::shift::{cylinder_return_law, cylinder_word, empirical_atoms, enumerate_short_returns, sup_distance};
use crate::stats::{
    chebyshev_check, edf, hsv_quantities, poisson_fit, sample_hitting_times, sample_return_times,
    sample_return_times_with, sandwich_check, visit_counts, EdfReport, SamplingMode, SamplingOptions,
};

const SEED: u64 = 2718;
const Z: f64 = std::f64::consts::FRAC_1_SQRT_2;
const N_MAX: u64 = 10_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} criterion {:>2} {:<28} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

/// Sample sets produced along the way, re-checked by the Chebyshev criterion.
#[derive(Default)]
struct Collected {
    reports: Vec<(String, EdfReport)>,
}

type Check = fn(&mut Collected, &Path) -> Result<(bool, String)>;

const CRITERIA: [(u32, &str, Check); 13] = [
    (1, "kac mean return", kac),
    (2, "short-return oracle", short_returns),
    (3, "exponential law doubling", exponential_doubling),
    (4, "exponential law lsv", exponential_lsv),
    (5, "tower time accounting", tower_accounting),
    (6, "sandwich inequality", sandwich),
    (7, "full-branch structure", full_branches),
    (8, "induced-map certificate", certificate),
    (9, "correlation decay", correlation),
    (10, "poisson visits", poisson),
    (11, "chebyshev bound", chebyshev),
    (12, "logistic density", density),
    (13, "determinism", determinism),
];

/// Runs every criterion, writing run artifacts under `root`. `on_result` sees
/// each outcome as soon as it is known.
pub fn run_acceptance(root: &Path, mut on_result: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    let mut collected = Collected::default();
    let mut out = Vec::new();
    for (id, name, check) in CRITERIA {
        let start = Instant::now();
        let (passed, detail) = match check(&mut collected, root) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let outcome = CriterionOutcome { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() };
        on_result(&outcome);
        out.push(outcome);
    }
    out
}

fn doubling() -> PiecewiseMap {
    builtin("doubling", &[]).expect("doubling")
}

fn lsv() -> PiecewiseMap {
    builtin("lsv_alpha", &[0.5]).expect("lsv")
}

fn half() -> IntervalSet {
    IntervalSet::interval(0.5, 1.0).expect("[1/2, 1)")
}

/// Birkhoff mass with at least 40000 expected visits.
fn mass(map: &PiecewiseMap, u: &IntervalSet) -> Result<f64> {
    let steps = ((40_000.0 / u.total_length()).ceil() as u64).max(10_000_000);
    Ok(invariant_mass(map, u, steps, map.default_burn_in(), SEED)?.mass)
}

fn kac(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let start = Instant::now();
    let sys = InducedSystem::new(doubling(), half(), N_MAX)?;
    let est = kac_constant(&sys, 1_000_000, SEED)?;
    let secs = start.elapsed().as_secs_f64();
    let full = InducedSystem::new(doubling(), IntervalSet::full(), N_MAX)?;
    let trivial = kac_constant(&full, 1_000, SEED)?;
    let ok = (est.mean_return - 2.0).abs() <= 3.0 * est.stderr && secs < 10.0 && trivial.mean_return == 1.0;
    Ok((
        ok,
        format!(
            "mean {:.5} stderr {:.5} entries {} in {secs:.2}s; full space {}",
            est.mean_return, est.stderr, est.n_entries, trivial.mean_return
        ),
    ))
}

fn short_returns(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let u = IntervalSet::interval(0.0, 0.25)?;
    let enumerated = enumerate_short_returns(&u, 2, 4)?;
    let automaton = cylinder_return_law(&[0, 0], 0.0, 2).cdf(2);
    let mc = hsv_quantities(&doubling(), &u, &EmpiricalMeasure::lebesgue(256), 2, 8, 100_000, SEED)?;
    let ok = enumerated == 0.5 && automaton == 0.5 && (mc.a_n - 0.5).abs() <= 3.0 * mc.a_n_stderr;
    Ok((
        ok,
        format!("enumeration {enumerated}, automaton {automaton}, monte carlo {:.4} ± {:.4}", mc.a_n, mc.a_n_stderr),
    ))
}

fn exponential_doubling(c: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let d = doubling();
    let ball = IntervalSet::ball(Z, 2f64.powi(-10))?;
    let mu = mass(&d, &ball)?;
    let samples = sample_return_times(&d, &ball, mu, 20_000, N_MAX, SEED)?;
    let rep = edf(&samples)?;

    let word = cylinder_word(Z, 12)?;
    let exact = cylinder_return_law(&word, 1e-12, 1 << 22);
    let exact_atoms = exact.normalized_atoms();
    let ball_vs_exact = sup_distance(&empirical_atoms(&rep.times), &exact_atoms);

    let cyl = IntervalSet::dyadic_cylinder(Z, 12)?;
    let cyl_samples = sample_return_times(&d, &cyl, cyl.total_length(), 20_000, N_MAX, SEED)?;
    let cyl_rep = edf(&cyl_samples)?;
    let cyl_vs_exact = sup_distance(&empirical_atoms(&cyl_rep.times), &exact_atoms);

    let ok = rep.n_effective >= 20_000 && rep.ks_distance <= 0.05 && ball_vs_exact <= 0.03 && cyl_vs_exact <= 0.03;
    let detail = format!(
        "n {} ks {:.4} mu {:.6e} (|U| {:.6e}); vs exact cylinder law: ball {:.4}, cylinder sample {:.4}",
        rep.n_effective,
        rep.ks_distance,
        mu,
        ball.total_length(),
        ball_vs_exact,
        cyl_vs_exact
    );
    c.reports.push(("doubling ball returns".into(), rep));
    c.reports.push(("doubling cylinder returns".into(), cyl_rep));
    Ok((ok, detail))
}

fn exponential_lsv(c: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let start = Instant::now();
    let m = lsv();
    let ball = IntervalSet::ball(0.7, 1e-3)?;
    let mu = mass(&m, &ball)?;
    let opts = SamplingOptions { burn_in: Some(100_000), ..Default::default() };
    let samples = sample_return_times_with(&m, &ball, mu, 20_000, N_MAX, SEED, &opts)?;
    let rep = edf(&samples)?;
    let secs = start.elapsed().as_secs_f64();
    let ok = rep.n_effective >= 20_000 && rep.ks_distance <= 0.08 && secs < 300.0;
    let detail = format!(
        "n {} ks {:.4} mu {:.6e} censored {:.1e} in {secs:.1}s",
        rep.n_effective, rep.ks_distance, mu, rep.censored_fraction
    );
    c.reports.push(("lsv ball returns".into(), rep));
    Ok((ok, detail))
}

/// Compares direct return times with accumulated induced return times on
/// identical orbit sources. Returns `(mismatches, compared, censored)`.
fn compare_tower(sys: &InducedSystem, u: &IntervalSet, starts: usize, stage: &str) -> Result<(usize, usize, usize)> {
    let mut dynamics = Dithered::stream(&sys.base, SEED, stage, 0);
    let mut x = dynamics.typical_point(sys.base.default_burn_in());
    let (mut bad, mut compared, mut censored) = (0, 0, 0);
    for _ in 0..starts {
        while !u.contains(x) {
            x = dynamics.advance(x);
        }
        let mut a = dynamics.clone();
        let mut b = dynamics.clone();
        let (direct, end) = first_return_with(&mut a, u, x, N_MAX);
        let tower = sys.tower_return_time(&mut b, u, x, N_MAX)?;
        match (direct, tower) {
            (ReturnTime::Returned(n), Some((total, _))) => {
                compared += 1;
                if n != total {
                    bad += 1;
                }
            }
            (ReturnTime::Censored(_), None) => censored += 1,
            _ => bad += 1,
        }
        dynamics = a;
        x = end;
    }
    Ok((bad, compared, censored))
}

fn tower_accounting(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let logistic = builtin("logistic", &[4.0])?;
    let nb = markov_neighborhood(&logistic, 0.75, Interval::new(0.5, 1.0)?, 100)?;
    let configs = [
        ("doubling", InducedSystem::new(doubling(), half(), N_MAX)?, IntervalSet::ball(Z, 2f64.powi(-10))?),
        ("lsv", InducedSystem::new(lsv(), half(), N_MAX)?, IntervalSet::ball(0.7, 1e-3)?),
        ("logistic", InducedSystem::new(logistic, nb.as_set()?, N_MAX)?, IntervalSet::ball(0.7, 0.01)?),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, sys, u) in &configs {
        let (bad, compared, censored) = compare_tower(sys, u, 10_000, &format!("tower_{name}"))?;
        ok &= bad == 0 && compared == 10_000;
        parts.push(format!("{name} {bad} mismatches / {compared} (censored {censored})"));
    }
    Ok((ok, parts.join("; ")))
}

fn sandwich(c: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, map, u) in
        [("doubling", doubling(), IntervalSet::ball(Z, 2f64.powi(-10))?), ("lsv", lsv(), IntervalSet::ball(0.7, 1e-3)?)]
    {
        let mu = mass(&map, &u)?;
        let sys = InducedSystem::new(map, half(), N_MAX)?;
        let kac = kac_constant(&sys, 1_000_000, SEED)?;
        let (r, samples) = sandwich_check(&sys, &u, mu, kac.mean_return, 0.05, 20_000, N_MAX, SEED)?;
        ok &= r.holds;
        parts.push(format!(
            "{name} c {:.4} margins {:.4}/{:.4} slack {:.4}",
            kac.mean_return, r.lower_margin, r.upper_margin, r.slack
        ));
        let times: Vec<f64> = samples.iter().map(|s| s.base as f64 * mu).collect();
        c.reports.push((format!("{name} sandwich base returns"), EdfReport::from_times(times, r.censored as usize)?));
    }
    let d = doubling();
    let u = IntervalSet::ball(Z, 2f64.powi(-10))?;
    let full = InducedSystem::new(d, IntervalSet::full(), N_MAX)?;
    let (r, _) = sandwich_check(&full, &u, u.total_length(), 1.0, 0.05, 5_000, N_MAX, SEED)?;
    ok &= r.identical && r.holds;
    parts.push(format!("full space identical {}", r.identical));
    Ok((ok, parts.join("; ")))
}

fn full_branches(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let m = lsv();
    let sys = InducedSystem::new(m.clone(), half(), N_MAX)?;
    let p = return_branches(&sys, 20, DEFAULT_BRANCH_TOL)?;
    let mut worst_image: f64 = 0.0;
    let mut wrong_time = 0;
    let mut seen = [false; 21];
    for b in &p.branches {
        if b.return_time > 20 {
            continue;
        }
        seen[b.return_time as usize] = true;
        worst_image = worst_image.max((b.image_lo - 0.5).abs()).max((b.image_hi - 1.0).abs());
        match first_return_time(&m, &sys.domain, b.midpoint(), 100)? {
            ReturnTime::Returned(n) if n == b.return_time => {}
            _ => wrong_time += 1,
        }
    }
    let missing = (1..=20).filter(|&k| !seen[k]).count();
    let ok = worst_image <= 1e-6 && wrong_time == 0 && missing == 0;
    Ok((
        ok,
        format!(
            "{} branches, worst image gap {worst_image:.2e}, midpoint mismatches {wrong_time}, missing p {missing}",
            p.branches.len()
        ),
    ))
}

fn certificate(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let sys = InducedSystem::new(lsv(), half(), N_MAX)?;
    let cert = rmap_certificate(&sys, 20, 64)?;
    let inc = cert.weight_increments();
    // inc[p - 1] is the term for return time p
    let ratios: Vec<f64> = (10..inc.len()).map(|p| inc[p - 1] / inc[p]).collect();
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let first_below = ratios.iter().position(|&r| r < 1.2).map(|i| i + 10);
    let lsv_ok = cert.expansion_inf > 1.0 && cert.distortion_k.is_finite() && worst >= 1.2;

    let dsys = InducedSystem::new(doubling(), half(), N_MAX)?;
    let dcert = rmap_certificate(&dsys, 20, 64)?;
    let exact_slopes = dcert.branches.iter().all(|b| {
        let s = (b.return_time as f64).exp2();
        b.min_derivative == s && b.max_derivative == s
    });
    let doubling_ok = dcert.distortion_k == 1.0 && exact_slopes;
    Ok((
        lsv_ok && doubling_ok,
        format!(
            "lsv expansion {:.4} K {:.4} smallest tail ratio {worst:.4}{}; doubling K {} exact 2^p slopes {exact_slopes}",
            cert.expansion_inf,
            cert.distortion_k,
            first_below.map(|p| format!(" (below 1.2 from p={p}->{})", p + 1)).unwrap_or_default(),
            dcert.distortion_k
        ),
    ))
}

fn correlation(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    // midpoint quadrature of ∫ x·(2x mod 1) dx − 1/4
    let q = 1_000_000;
    let c1_exact = (0..q)
        .map(|k| {
            let x = (k as f64 + 0.5) / q as f64;
            x * ((2.0 * x) % 1.0)
        })
        .sum::<f64>()
        / q as f64
        - 0.25;
    let grid = EmpiricalMeasure::lebesgue(1024);
    let phi: Vec<f64> = grid.bin_centers().iter().map(|c| c - 0.5).collect();
    let c = correlation_sequence(&doubling(), &grid, &phi, &phi, 12, 1 << 24, SEED)?;
    let fit = decay_rate(&c)?;
    let rel = (c.values[1] / c1_exact - 1.0).abs();
    let ok = rel <= 0.1 && (0.45..=0.55).contains(&fit.theta) && fit.r_squared >= 0.98;
    Ok((
        ok,
        format!(
            "C1 {:.5} vs {:.5} ({:.1}%), theta {:.4}, R2 {:.4} over {} lags",
            c.values[1],
            c1_exact,
            100.0 * rel,
            fit.theta,
            fit.r_squared,
            fit.points_used
        ),
    ))
}

fn poisson(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let d = doubling();
    let u = IntervalSet::dyadic_cylinder(Z, 10)?;
    let mut failures = 0;
    let mut ps = Vec::new();
    for seed in 1..=5 {
        let h = visit_counts(&d, &u, u.total_length(), 1.0, 10_000, seed)?;
        let fit = poisson_fit(&h)?;
        if fit.p_value < 0.01 {
            failures += 1;
        }
        ps.push(format!("{:.3}", fit.p_value));
    }
    Ok((failures <= 1, format!("p-values [{}], {failures} below 0.01", ps.join(", "))))
}

fn chebyshev(c: &mut Collected, _: &Path) -> Result<(bool, String)> {
    // hitting times from the hyperbolic fixture join the return-time sets
    let d = doubling();
    let ball = IntervalSet::ball(Z, 2f64.powi(-10))?;
    let hits = sample_hitting_times(&d, &ball, ball.total_length(), 20_000, N_MAX, SEED)?;
    c.reports.push(("doubling ball hitting".into(), edf(&hits)?));
    if c.reports.len() < 2 {
        return Ok((false, "no fixture samples were produced".into()));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, rep) in &c.reports {
        let ch = chebyshev_check(rep);
        ok &= ch.ok;
        parts.push(format!("{name} {:.3}/{:.3}", ch.worst_value, ch.bound));
    }
    Ok((ok, format!("{} sets: {}", c.reports.len(), parts.join("; "))))
}

fn density(_: &mut Collected, _: &Path) -> Result<(bool, String)> {
    let l = builtin("logistic", &[4.0])?;
    let m = birkhoff_measure(&l, 0.3, 1_000_000, 10_000, 256, SEED)?;
    let arcsine = EmpiricalMeasure::from_cdf(256, |x| 2.0 / std::f64::consts::PI * x.sqrt().asin());
    // uniform points pushed through the conjugacy x = sin²(πy/2)
    let n = 1_000_000u64;
    let mut counts = vec![0.0; 256];
    for k in 0..n {
        let y = (k as f64 + 0.5) / n as f64;
        let x = (std::f64::consts::FRAC_PI_2 * y).sin().powi(2);
        counts[((x * 256.0) as usize).min(255)] += 1.0;
    }
    let pushed =
        EmpiricalMeasure::from_weights(EmpiricalMeasure::uniform_edges(256), counts, n, MeasureKind::Analytic)?;
    let d_arcsine = m.l1_distance(&arcsine)?;
    let d_pushed = m.l1_distance(&pushed)?;
    let ok = d_arcsine <= 0.05 && d_pushed <= 0.05;
    Ok((ok, format!("L1 to arcsine {d_arcsine:.4}, to conjugacy pushforward {d_pushed:.4}")))
}

fn determinism_configs(root: &Path) -> Vec<ExperimentConfig> {
    let base = |name: &str, spec: &str, center: f64, radius: f64| ExperimentConfig {
        seed: SEED,
        output_dir: root.join(name),
        workers: None,
        map: MapConfig { spec: spec.into(), rows: None },
        target: Some(TargetConfig { center, radius: Some(radius), cylinder_depth: None }),
        sampling: SamplingConfig { n_samples: 5_000, ..Default::default() },
        measure: MeasureConfig { steps: 2_000_000, min_hits: 10_000, ..Default::default() },
        induce: Some(InduceConfig {
            domain: Some(vec![[0.5, 1.0]]),
            markov_point: None,
            markov_target: None,
            max_steps: N_MAX,
            p_max: 12,
            grid: 16,
            kac_entries: 100_000,
        }),
        analyses: Analyses {
            ks: true,
            hitting: true,
            poisson: true,
            sandwich: true,
            certificate: true,
            hsv: true,
            decay: false,
        },
        poisson: Default::default(),
        sandwich: Default::default(),
        hsv: super::config::HsvConfig { n: 20, partition_depth: 6, n_mc: 5_000 },
        decay: Default::default(),
    };
    let mut lsv = base("lsv", "lsv_alpha(0.5)", 0.7, 1e-3);
    lsv.sampling.hitting_mode = SamplingMode::SingleOrbit;
    vec![base("doubling", "doubling", Z, 2f64.powi(-10)), lsv]
}

fn determinism(_: &mut Collected, root: &Path) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for cfg in determinism_configs(&root.join("determinism")) {
        let name = cfg.output_dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut runs = Vec::new();
        for (tag, workers) in [("w1", 1), ("w4", 4), ("w4-again", 4)] {
            let mut c = cfg.clone();
            c.workers = Some(workers);
            c.output_dir = cfg.output_dir.join(tag);
            let report = run_experiment(&c)?;
            let mut files = read_artifacts(&report.output_dir)?;
            files.remove("timings.json");
            // the config echo differs only in the worker count and directory
            files.remove("report.json");
            runs.push(files);
        }
        let csvs = runs[0].keys().filter(|k| k.ends_with(".csv")).count();
        let same = runs.windows(2).all(|w| w[0] == w[1]);
        ok &= same && csvs >= 5;
        parts.push(format!("{name}: {} files ({csvs} csv) identical {same}", runs[0].len()));
    }
    Ok((ok, parts.join("; ")))
}

/// Default location for acceptance artifacts.
pub fn default_root() -> PathBuf {
    match std::env::var_os(super::config::OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join("acceptance"),
        None => std::env::temp_dir().join("retstat-acceptance"),
    }
}
