use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MeasureSource};
use crate::error::{Error, Result};
use crate::inducing::{
    kac_constant, return_branches, rmap_certificate, CertificateReport, KacEstimate, DEFAULT_BRANCH_TOL,
};
use crate::interval::IntervalSet;
use crate::maps::{MapKind, PiecewiseMap};
use crate::measures::{birkhoff_measure, correlation_sequence, decay_rate, invariant_mass, DecayFit, EmpiricalMeasure};
use crate::rng::fnv1a;
use crate::shift::{empirical_atoms, sup_distance};
use crate::stats::{
    chebyshev_check, edf, hsv_quantities, poisson_fit, sample_hitting_times_with, sample_return_times_with,
    samples_to_csv, sandwich_check, short_return, visit_counts, visits_to_csv, ChebyshevCheck, EdfReport, HsvReport,
    PoissonFit, ReturnSample, SamplingOptions, SandwichReport,
};

/// Start point for Birkhoff histograms; `2 − φ`.
const HISTOGRAM_START: f64 = 0.381_966_011_250_105_1;

/// Scan limits for the shortest return time.
const TAU_SCAN_STEPS: u64 = 10_000;
const TAU_SCAN_GRID: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    pub source: MeasureSource,
    pub mu_u: f64,
    pub mu_u_stderr: f64,
    pub steps: u64,
    pub lebesgue_length: f64,
    /// `μ(U)/|U| − 1`, reported for maps that preserve Lebesgue measure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lebesgue_relative_gap: Option<f64>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSummary {
    pub n: u64,
    pub n_effective: usize,
    pub censored_fraction: f64,
    pub ks_distance: f64,
    pub ks_location: f64,
    pub mean_normalized: f64,
    /// `|mean − 1| ≤ 5/√n`
    pub kac_normalization_ok: bool,
    pub chebyshev: ChebyshevCheck,
    pub tau_u: Option<u64>,
    pub mu_provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingSummary {
    pub n: u64,
    pub censored_fraction: f64,
    pub ks_distance: f64,
    /// Sup distance between the hitting and return distribution functions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_vs_hitting: Option<f64>,
    pub mu_provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSummary {
    pub window_len: u64,
    pub n_windows: u64,
    pub mean_visits: f64,
    pub fit: PoissonFit,
    pub mu_provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvSummary {
    pub quantities: HsvReport,
    /// Ingredients of the `c(U)` bound.
    pub mu_u: f64,
    pub tau_u: Option<u64>,
    pub theta: Option<f64>,
    pub mu_provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub c1: f64,
    pub noise: f64,
    pub fit: DecayFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub expansion_inf: f64,
    #[serde(rename = "distortion_K")]
    pub distortion_k: f64,
    pub variation_estimate: f64,
    pub koebe_bound: f64,
    pub branches_checked: usize,
    pub unresolved_length: f64,
}

impl From<&CertificateReport> for CertificateSummary {
    fn from(c: &CertificateReport) -> Self {
        CertificateSummary {
            expansion_inf: c.expansion_inf,
            distortion_k: c.distortion_k,
            variation_estimate: c.variation_estimate,
            koebe_bound: c.koebe_bound,
            branches_checked: c.branches_checked,
            unresolved_length: c.unresolved_length,
        }
    }
}

/// Everything a run produced. `timings` go to their own file so that
/// `report.json` is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub map: String,
    #[serde(rename = "U", skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<MassSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub returns: Option<ReturnSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hitting: Option<HittingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kac: Option<KacEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sandwich: Option<SandwichReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poisson: Option<PoissonSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecaySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hsv: Option<HsvSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

/// The fixed-schema summary written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub map: String,
    #[serde(rename = "U")]
    pub target: Option<String>,
    #[serde(rename = "mu_U")]
    pub mu_u: Option<f64>,
    pub n: Option<u64>,
    pub censored_fraction: Option<f64>,
    pub ks_distance: Option<f64>,
    pub kac_mean: Option<f64>,
    pub chebyshev_ok: Option<bool>,
}

impl RunReport {
    pub fn summary(&self) -> Summary {
        Summary {
            map: self.map.clone(),
            target: self.target.clone(),
            mu_u: self.measure.as_ref().map(|m| m.mu_u),
            n: self.returns.as_ref().map(|r| r.n),
            censored_fraction: self.returns.as_ref().map(|r| r.censored_fraction),
            ks_distance: self.returns.as_ref().map(|r| r.ks_distance),
            kac_mean: self.kac.as_ref().map(|k| k.mean_return),
            chebyshev_ok: self.returns.as_ref().map(|r| r.chebyshev.ok),
        }
    }
}

pub const FAILED_MARKER: &str = "FAILED";

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn open(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let probe = dir.join(".write-probe");
        fs::write(&probe, b"").map_err(|e| Error::Io(format!("{} is not writable: {e}", dir.display())))?;
        fs::remove_file(&probe)?;
        let marker = dir.join(FAILED_MARKER);
        if marker.exists() {
            fs::remove_file(marker)?;
        }
        Ok(Artifacts { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage));
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    out
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn preserves_lebesgue(map: &PiecewiseMap) -> bool {
    matches!(map.kind, MapKind::Doubling | MapKind::Tent)
}

/// Invariant mass of the target, from the configured source.
pub fn target_mass(cfg: &ExperimentConfig, map: &PiecewiseMap, u: &IntervalSet) -> Result<MassSummary> {
    let length = u.total_length();
    let burn_in = cfg.sampling.burn_in.unwrap_or_else(|| map.default_burn_in());
    let (mu_u, stderr, steps) = match cfg.measure.source {
        MeasureSource::Lebesgue => (length, 0.0, 0),
        MeasureSource::Birkhoff => {
            let steps = cfg.measure.steps.max((cfg.measure.min_hits as f64 / length).ceil() as u64);
            let est = invariant_mass(map, u, steps, burn_in, cfg.seed)?;
            if !(est.mass > 0.0) {
                return Err(Error::NoVisit(steps));
            }
            (est.mass, est.stderr, est.n_steps)
        }
    };
    let provenance = format!("measure:{:016x}", fnv1a(format!("{}|{u}|{mu_u:?}|{steps}", cfg.seed).as_bytes()));
    Ok(MassSummary {
        source: cfg.measure.source,
        mu_u,
        mu_u_stderr: stderr,
        steps,
        lebesgue_length: length,
        lebesgue_relative_gap: preserves_lebesgue(map).then(|| mu_u / length - 1.0),
        provenance,
    })
}

fn sampling_options(cfg: &ExperimentConfig, mode: crate::stats::SamplingMode) -> SamplingOptions {
    SamplingOptions { mode, burn_in: cfg.sampling.burn_in, ..Default::default() }
}

/// Return-time samples, their EDF and the derived summary.
pub fn return_statistics(
    cfg: &ExperimentConfig,
    map: &PiecewiseMap,
    u: &IntervalSet,
    mass: &MassSummary,
) -> Result<(Vec<ReturnSample>, EdfReport, ReturnSummary)> {
    let s = &cfg.sampling;
    let samples =
        sample_return_times_with(map, u, mass.mu_u, s.n_samples, s.n_max, cfg.seed, &sampling_options(cfg, s.mode))?;
    let report = edf(&samples)?;
    let mean = report.mean();
    let summary = ReturnSummary {
        n: samples.len() as u64,
        n_effective: report.n_effective,
        censored_fraction: report.censored_fraction,
        ks_distance: report.ks_distance,
        ks_location: report.ks_location,
        mean_normalized: mean,
        kac_normalization_ok: (mean - 1.0).abs() <= 5.0 / (report.n_effective as f64).sqrt(),
        chebyshev: chebyshev_check(&report),
        tau_u: short_return(map, u, TAU_SCAN_STEPS, TAU_SCAN_GRID).ok(),
        mu_provenance: mass.provenance.clone(),
    };
    Ok((samples, report, summary))
}

/// Runs the requested analyses in dependency order and writes their
/// artifacts. On failure a `FAILED` marker naming the stage is left next to
/// whatever was already written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut art = Artifacts::open(cfg.resolved_output_dir())?;
    let result = with_workers(cfg.workers, || pipeline(cfg, &mut art)).and_then(|r| r);
    match result {
        Ok(mut report) => {
            report.artifacts = art.written.clone();
            report.artifacts.push("report.json".into());
            art.write_json("report.json", &report)?;
            fs::write(art.dir.join("timings.json"), serde_json::to_string_pretty(&report.timings).unwrap_or_default())?;
            report.output_dir = art.dir.clone();
            Ok(report)
        }
        Err(e) => {
            let _ = fs::write(art.dir.join(FAILED_MARKER), format!("{e}\n"));
            Err(e)
        }
    }
}

fn pipeline(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<RunReport> {
    let mut timings = BTreeMap::new();
    let map = cfg.map.build().map_err(|e| e.in_stage("config"))?;
    let u = cfg.target.as_ref().map(|t| t.build()).transpose().map_err(|e| e.in_stage("config"))?;
    let a = cfg.analyses;
    let mut report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        map: map.spec_string(),
        target: u.as_ref().map(|u| u.to_string()),
        measure: None,
        returns: None,
        hitting: None,
        kac: None,
        sandwich: None,
        poisson: None,
        decay: None,
        hsv: None,
        certificate: None,
        artifacts: Vec::new(),
        timings: BTreeMap::new(),
        output_dir: PathBuf::new(),
    };

    let needs_mass = a.ks || a.hitting || a.poisson || a.sandwich || a.hsv;
    let mass = match (&u, needs_mass) {
        (Some(u), true) => Some(timed(&mut timings, "measure", || target_mass(cfg, &map, u))?),
        _ => None,
    };
    report.measure = mass.clone();

    let mut return_samples = None;
    if a.ks {
        let (u, mass) = (u.as_ref().unwrap(), mass.as_ref().unwrap());
        let (samples, _, summary) = timed(&mut timings, "returns", || return_statistics(cfg, &map, u, mass))?;
        art.write("returns.csv", &samples_to_csv(&samples))?;
        report.returns = Some(summary);
        return_samples = Some(samples);
    }

    if a.hitting {
        let (u, mass) = (u.as_ref().unwrap(), mass.as_ref().unwrap());
        let s = &cfg.sampling;
        let samples = timed(&mut timings, "hitting", || {
            sample_hitting_times_with(
                &map,
                u,
                mass.mu_u,
                s.n_samples,
                s.n_max,
                cfg.seed,
                &sampling_options(cfg, s.hitting_mode),
            )
        })?;
        art.write("hitting.csv", &samples_to_csv(&samples))?;
        let rep = edf(&samples).map_err(|e| e.in_stage("hitting"))?;
        let normalized =
            |v: &[ReturnSample]| -> Vec<f64> { v.iter().filter(|s| !s.censored).map(|s| s.normalized).collect() };
        report.hitting = Some(HittingSummary {
            n: samples.len() as u64,
            censored_fraction: rep.censored_fraction,
            ks_distance: rep.ks_distance,
            return_vs_hitting: return_samples
                .as_ref()
                .map(|r| sup_distance(&empirical_atoms(&normalized(r)), &empirical_atoms(&normalized(&samples)))),
            mu_provenance: mass.provenance.clone(),
        });
    }

    let system = match &cfg.induce {
        Some(ind) if a.sandwich || a.certificate => Some(timed(&mut timings, "induce", || ind.system(&map))?),
        _ => None,
    };

    if let (Some(sys), true) = (&system, a.sandwich) {
        let ind = cfg.induce.as_ref().unwrap();
        let kac = timed(&mut timings, "kac", || kac_constant(sys, ind.kac_entries, cfg.seed))?;
        report.kac = Some(kac);
        let (u, mass) = (u.as_ref().unwrap(), mass.as_ref().unwrap());
        let (sw, samples) = timed(&mut timings, "sandwich", || {
            sandwich_check(
                sys,
                u,
                mass.mu_u,
                kac.mean_return,
                cfg.sandwich.epsilon,
                cfg.sampling.n_samples,
                cfg.sampling.n_max,
                cfg.seed,
            )
        })?;
        let mut csv = String::from("base_time,induced_time\n");
        for s in &samples {
            let _ = writeln!(csv, "{},{}", s.base, s.induced);
        }
        art.write("sandwich.csv", &csv)?;
        report.sandwich = Some(sw);
    }

    if a.poisson {
        let (u, mass) = (u.as_ref().unwrap(), mass.as_ref().unwrap());
        let (hist, fit) = timed(&mut timings, "poisson", || {
            let h = visit_counts(&map, u, mass.mu_u, cfg.poisson.t, cfg.poisson.windows, cfg.seed)?;
            let f = poisson_fit(&h)?;
            Ok((h, f))
        })?;
        art.write("visits.csv", &visits_to_csv(&hist))?;
        report.poisson = Some(PoissonSummary {
            window_len: hist.window_len,
            n_windows: hist.n_windows,
            mean_visits: hist.mean(),
            fit,
            mu_provenance: mass.provenance.clone(),
        });
    }

    if a.decay {
        let d = &cfg.decay;
        let (values, summary) = timed(&mut timings, "decay", || {
            let grid = EmpiricalMeasure::lebesgue(d.bins);
            let phi: Vec<f64> = grid.bin_centers().iter().map(|c| c - 0.5).collect();
            let c = correlation_sequence(&map, &grid, &phi, &phi, d.lags, d.orbit_len, cfg.seed)?;
            let fit = decay_rate(&c)?;
            let c1 = c.values.get(1).copied().unwrap_or(f64::NAN);
            Ok((c.values.clone(), DecaySummary { c1, noise: c.noise, fit }))
        })?;
        let mut csv = String::from("lag,correlation\n");
        for (n, v) in values.iter().enumerate() {
            let _ = writeln!(csv, "{n},{v:?}");
        }
        art.write("correlations.csv", &csv)?;
        report.decay = Some(summary);
    }

    if a.hsv {
        let (u, mass) = (u.as_ref().unwrap(), mass.as_ref().unwrap());
        let h = &cfg.hsv;
        let (mu, quantities) = timed(&mut timings, "hsv", || {
            let mu = match cfg.measure.source {
                MeasureSource::Lebesgue => EmpiricalMeasure::lebesgue(cfg.measure.bins),
                MeasureSource::Birkhoff => {
                    let burn_in = cfg.sampling.burn_in.unwrap_or_else(|| map.default_burn_in());
                    birkhoff_measure(&map, HISTOGRAM_START, cfg.measure.steps, burn_in, cfg.measure.bins, cfg.seed)?
                }
            };
            let q = hsv_quantities(&map, u, &mu, h.n, h.partition_depth, h.n_mc, cfg.seed)?;
            Ok((mu, q))
        })?;
        art.write("measure.csv", &mu.to_csv())?;
        report.hsv = Some(HsvSummary {
            quantities,
            mu_u: mass.mu_u,
            tau_u: report.returns.as_ref().and_then(|r| r.tau_u),
            theta: report.decay.as_ref().map(|d| d.fit.theta),
            mu_provenance: mass.provenance.clone(),
        });
    }

    if let (Some(sys), true) = (&system, a.certificate) {
        let ind = cfg.induce.as_ref().unwrap();
        let (partition, cert) = timed(&mut timings, "certificate", || {
            let p = return_branches(sys, ind.p_max, DEFAULT_BRANCH_TOL)?;
            let c = rmap_certificate(sys, ind.p_max, ind.grid)?;
            Ok((p, c))
        })?;
        art.write("branches.csv", &branches_csv(&partition))?;
        art.write_json("certificate.json", &cert)?;
        report.certificate = Some(CertificateSummary::from(&cert));
    }

    art.write_json("summary.json", &report.summary())?;
    report.timings = timings;
    Ok(report)
}

fn branches_csv(p: &crate::inducing::BranchPartition) -> String {
    let mut s = String::from("lo,hi,return_time,image_lo,image_hi\n");
    for b in &p.branches {
        let _ = writeln!(s, "{:?},{:?},{},{:?},{:?}", b.lo, b.hi, b.return_time, b.image_lo, b.image_hi);
    }
    s
}

/// Return-branch partition and certificate only; used by `induce`.
pub fn run_induce(cfg: &ExperimentConfig) -> Result<(CertificateReport, PathBuf)> {
    let ind = cfg.induce.as_ref().ok_or_else(|| Error::Config("config has no [induce] section".into()))?;
    let map = cfg.map.build()?;
    let mut art = Artifacts::open(cfg.resolved_output_dir())?;
    let result = with_workers(cfg.workers, || -> Result<CertificateReport> {
        let sys = ind.system(&map).map_err(|e| e.in_stage("induce"))?;
        let p = return_branches(&sys, ind.p_max, DEFAULT_BRANCH_TOL).map_err(|e| e.in_stage("branches"))?;
        art.write("branches.csv", &branches_csv(&p))?;
        let c = rmap_certificate(&sys, ind.p_max, ind.grid).map_err(|e| e.in_stage("certificate"))?;
        art.write_json("certificate.json", &c)?;
        Ok(c)
    })
    .and_then(|r| r);
    match result {
        Ok(c) => Ok((c, art.dir)),
        Err(e) => {
            let _ = fs::write(art.dir.join(FAILED_MARKER), format!("{e}\n"));
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub mu_u: Option<f64>,
    pub ks_distance: Option<f64>,
    pub tau_u: Option<u64>,
    pub censored_fraction: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub center: f64,
    pub rows: Vec<SweepRow>,
    /// Spearman correlation of KS distance against radius over the rows that
    /// succeeded; positive when the distance shrinks with the radius.
    pub spearman: Option<f64>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut s = String::from("radius,mu_u,ks_distance,tau_u,censored_fraction,error\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:?},{},{},{},{},{}",
                r.radius,
                opt(r.mu_u),
                opt(r.ks_distance),
                r.tau_u.map(|t| t.to_string()).unwrap_or_default(),
                opt(r.censored_fraction),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }
}

/// KS distance of the return-time law across decreasing radii around the
/// configured center. The sample count stays fixed; the mass estimate's orbit
/// grows as `1/|U|` through `min_hits`.
pub fn radius_sweep(cfg: &ExperimentConfig, radii: &[f64]) -> Result<SweepTable> {
    cfg.validate()?;
    let center =
        cfg.target.as_ref().map(|t| t.center).ok_or_else(|| Error::Config("sweep needs a [target] center".into()))?;
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("radii must be positive and strictly decreasing".into()));
    }
    let map = cfg.map.build()?;
    let mut art = Artifacts::open(cfg.resolved_output_dir())?;
    let rows = with_workers(cfg.workers, || {
        radii
            .iter()
            .map(|&r| {
                let row = (|| -> Result<SweepRow> {
                    let u = IntervalSet::ball(center, r)?;
                    let mass = target_mass(cfg, &map, &u)?;
                    let (_, _, summary) = return_statistics(cfg, &map, &u, &mass)?;
                    Ok(SweepRow {
                        radius: r,
                        mu_u: Some(mass.mu_u),
                        ks_distance: Some(summary.ks_distance),
                        tau_u: summary.tau_u,
                        censored_fraction: Some(summary.censored_fraction),
                        error: None,
                    })
                })();
                row.unwrap_or_else(|e| SweepRow {
                    radius: r,
                    mu_u: None,
                    ks_distance: None,
                    tau_u: None,
                    censored_fraction: None,
                    error: Some(e.to_string()),
                })
            })
            .collect::<Vec<_>>()
    })?;
    let ok: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.ks_distance.map(|k| (r.radius, k))).collect();
    let table = SweepTable {
        center,
        spearman: spearman(&ok.iter().map(|p| p.0).collect::<Vec<_>>(), &ok.iter().map(|p| p.1).collect::<Vec<_>>()),
        rows,
    };
    art.write("sweep.csv", &table.to_csv())?;
    art.write_json("sweep.json", &table)?;
    Ok(table)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Rank correlation with averaged ties; `None` for fewer than two points or a
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Reads every regular file under `dir`, sorted by name.
pub fn read_artifacts(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path())?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        // ties get averaged ranks: x ranks (1, 2.5, 2.5, 4)
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / (5.0f64 * 4.5).sqrt()).abs() < 1e-12);
    }
}
