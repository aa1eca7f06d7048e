use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inducing::{markov_neighborhood, InducedSystem, DEFAULT_MAX_STEPS};
use crate::interval::{Interval, IntervalSet};
use crate::maps::{parse_map_spec, piecewise_linear_markov, PiecewiseMap};
use crate::stats::SamplingMode;

/// Environment variable naming the directory that relative `output_dir`
/// values are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "RETSTAT_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub map: MapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub induce: Option<InduceConfig>,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default)]
    pub poisson: PoissonConfig,
    #[serde(default)]
    pub sandwich: SandwichConfig,
    #[serde(default)]
    pub hsv: HsvConfig,
    #[serde(default)]
    pub decay: DecayConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    /// `name` or `name(p1, p2, ...)`.
    pub spec: String,
    /// Branch rows `[lo, hi, slope, intercept]` for `piecewise_linear_markov`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<[f64; 4]>>,
}

impl MapConfig {
    pub fn build(&self) -> Result<PiecewiseMap> {
        match &self.rows {
            Some(rows) => {
                if self.spec.trim() != "piecewise_linear_markov" {
                    return Err(Error::Config("`rows` is only valid for piecewise_linear_markov".into()));
                }
                piecewise_linear_markov(rows)
            }
            None => parse_map_spec(&self.spec),
        }
    }
}

/// A ball `[center − radius, center + radius)` or the dyadic cylinder of
/// depth `cylinder_depth` containing `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub center: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cylinder_depth: Option<u32>,
}

impl TargetConfig {
    pub fn build(&self) -> Result<IntervalSet> {
        match (self.radius, self.cylinder_depth) {
            (Some(r), None) => {
                if !(r > 0.0) {
                    return Err(Error::Config(format!("radius must be positive, got {r}")));
                }
                IntervalSet::ball(self.center, r)
            }
            (None, Some(d)) => IntervalSet::dyadic_cylinder(self.center, d),
            _ => Err(Error::Config("target needs exactly one of `radius` and `cylinder_depth`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub n_samples: u64,
    pub n_max: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    pub mode: SamplingMode,
    pub hitting_mode: SamplingMode,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_samples: 20_000,
            n_max: DEFAULT_MAX_STEPS,
            burn_in: None,
            mode: SamplingMode::SingleOrbit,
            hitting_mode: SamplingMode::Independent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureSource {
    Birkhoff,
    Lebesgue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureConfig {
    pub source: MeasureSource,
    /// Orbit length for the mass of the target.
    pub steps: u64,
    /// Raises `steps` so the target is expected to be visited this often.
    pub min_hits: u64,
    /// Histogram resolution for the invariant density.
    pub bins: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig { source: MeasureSource::Birkhoff, steps: 10_000_000, min_hits: 40_000, bins: 256 }
    }
}

/// Inducing domain: explicit components, or the Markov neighborhood of
/// `markov_point` pulled back from `markov_target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InduceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov_point: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov_target: Option<[f64; 2]>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_p_max")]
    pub p_max: u64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_kac_entries")]
    pub kac_entries: u64,
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}
fn default_p_max() -> u64 {
    20
}
fn default_grid() -> usize {
    64
}
fn default_kac_entries() -> u64 {
    1_000_000
}

impl InduceConfig {
    pub fn domain(&self, map: &PiecewiseMap) -> Result<IntervalSet> {
        match (&self.domain, self.markov_point) {
            (Some(parts), None) => {
                IntervalSet::new(parts.iter().map(|&[lo, hi]| Interval::new(lo, hi)).collect::<Result<Vec<_>>>()?)
            }
            (None, Some(x)) => {
                let [lo, hi] =
                    self.markov_target.ok_or_else(|| Error::Config("`markov_point` needs `markov_target`".into()))?;
                markov_neighborhood(map, x, Interval::new(lo, hi)?, 10_000)?.as_set()
            }
            _ => Err(Error::Config("induce needs exactly one of `domain` and `markov_point`".into())),
        }
    }

    pub fn system(&self, map: &PiecewiseMap) -> Result<InducedSystem> {
        InducedSystem::new(map.clone(), self.domain(map)?, self.max_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Analyses {
    pub ks: bool,
    pub hitting: bool,
    pub poisson: bool,
    pub sandwich: bool,
    pub certificate: bool,
    pub hsv: bool,
    pub decay: bool,
}

impl Analyses {
    pub fn any(&self) -> bool {
        self.ks || self.hitting || self.poisson || self.sandwich || self.certificate || self.hsv || self.decay
    }

    fn needs_target(&self) -> bool {
        self.ks || self.hitting || self.poisson || self.sandwich || self.hsv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoissonConfig {
    pub t: f64,
    pub windows: u64,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig { t: 1.0, windows: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandwichConfig {
    pub epsilon: f64,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        SandwichConfig { epsilon: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HsvConfig {
    pub n: u64,
    pub partition_depth: u32,
    pub n_mc: u64,
}

impl Default for HsvConfig {
    fn default() -> Self {
        HsvConfig { n: 40, partition_depth: 8, n_mc: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub lags: usize,
    pub orbit_len: u64,
    pub bins: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { lags: 12, orbit_len: 1 << 24, bins: 1024 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without running the pipeline.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        let map = self.map.build().map_err(cfg_err)?;
        if let Some(t) = &self.target {
            t.build().map_err(cfg_err)?;
        } else if self.analyses.needs_target() {
            return Err(Error::Config("the requested analyses need a [target]".into()));
        }
        if (self.analyses.sandwich || self.analyses.certificate) && self.induce.is_none() {
            return Err(Error::Config("sandwich and certificate analyses need an [induce] section".into()));
        }
        if let Some(ind) = &self.induce {
            let domain = ind.domain(&map).map_err(cfg_err)?;
            if self.analyses.sandwich {
                let u = self.target.as_ref().expect("checked above").build()?;
                if !u.is_subset_of(&domain) {
                    return Err(Error::Config(format!("target {u} is not inside the inducing domain {domain}")));
                }
            }
        }
        if self.sampling.n_samples == 0 || self.sampling.n_max == 0 {
            return Err(Error::Config("n_samples and n_max must be positive".into()));
        }
        if self.measure.bins == 0 || self.measure.steps == 0 {
            return Err(Error::Config("measure bins and steps must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !(self.poisson.t > 0.0) {
            return Err(Error::Config("poisson t must be positive".into()));
        }
        Ok(())
    }

    /// `output_dir`, resolved against the output root when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }
}
