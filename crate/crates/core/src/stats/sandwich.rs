use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inducing::InducedSystem;
use crate::interval::IntervalSet;
use crate::maps::{Dithered, Dynamics};
use crate::rng::DEFAULT_STREAMS;

/// Return time to `U` under the base map and under the induced map, for one start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandwichSample {
    pub base: u64,
    pub induced: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub holds: bool,
    /// `min_t F(t) − F̂(t/(1−ε/c)) + 2ε`
    pub lower_margin: f64,
    /// `min_t F̂(t/(1+ε/c)) + 2ε − F(t)`
    pub upper_margin: f64,
    pub lower_worst_t: f64,
    pub upper_worst_t: f64,
    pub slack: f64,
    pub epsilon: f64,
    pub kac_c: f64,
    pub mu_u: f64,
    pub mu_hat_u: f64,
    pub n_samples: usize,
    pub censored: u64,
    /// Every start has equal base and induced return times.
    pub identical: bool,
}

/// Survival function of a sample of positive integers scaled by `scale`.
struct Survival {
    sorted: Vec<u64>,
    scale: f64,
}

impl Survival {
    fn new(mut v: Vec<u64>, scale: f64) -> Self {
        v.sort_unstable();
        Survival { sorted: v, scale }
    }

    /// `(S(t⁻), S(t))`
    fn at(&self, t: f64) -> (f64, f64) {
        let n = self.sorted.len() as f64;
        let lt = self.sorted.partition_point(|&k| (k as f64 * self.scale) < t);
        let le = self.sorted.partition_point(|&k| (k as f64 * self.scale) <= t);
        ((self.sorted.len() - lt) as f64 / n, (self.sorted.len() - le) as f64 / n)
    }

    fn jumps(&self, stretch: f64) -> impl Iterator<Item = f64> + '_ {
        let mut last = None;
        self.sorted.iter().filter_map(move |&k| {
            if last == Some(k) {
                return None;
            }
            last = Some(k);
            Some(k as f64 * self.scale * stretch)
        })
    }
}

/// Compares the normalized return-time survival `F` of `u` under the base
/// map with the survival `F̂` under the induced map, along the two-sided bound
/// `F̂(t/(1−ε/c)) − 2ε ≤ F(t) ≤ F̂(t/(1+ε/c)) + 2ε` at every jump point.
/// Starts are successive entries to `u` along μ-typical orbits; `kac_c` is
/// the mean return time to the inducing domain.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_check(
    sys: &InducedSystem,
    u: &IntervalSet,
    mu_u: f64,
    kac_c: f64,
    epsilon: f64,
    n_samples: u64,
    n_max: u64,
    seed: u64,
) -> Result<(SandwichReport, Vec<SandwichSample>)> {
    if !(epsilon > 0.0 && epsilon < kac_c) {
        return Err(Error::InvalidParameter(format!("need 0 < ε < c, got ε={epsilon}, c={kac_c}")));
    }
    if !(mu_u > 0.0) || n_samples == 0 {
        return Err(Error::InvalidParameter("need positive mass and sample count".into()));
    }
    if !u.is_subset_of(&sys.domain) {
        return Err(Error::InvalidIntervalSet(format!("{u} is not contained in {}", sys.domain)));
    }
    let streams = DEFAULT_STREAMS as u64;
    let burn_in = sys.base.default_burn_in();
    let budget = (20.0 * n_samples as f64 / mu_u).ceil() as u64 / streams + 4 * n_max;

    let parts: Vec<Result<(Vec<SandwichSample>, u64)>> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let q = (n_samples / streams + u64::from(s < n_samples % streams)) as usize;
            let mut dynamics = Dithered::stream(&sys.base, seed, "sandwich", s);
            let mut out = Vec::with_capacity(q);
            let mut censored = 0u64;
            let mut used = 0u64;
            let mut x = dynamics.typical_point(burn_in);
            while out.len() < q {
                while !u.contains(x) {
                    x = dynamics.advance(x);
                    used += 1;
                }
                if used > budget {
                    return Err(Error::TooFewEntries { found: out.len() as u64, wanted: q as u64 });
                }
                match sys.tower_walk(&mut dynamics, u, x, n_max)? {
                    Some(w) => {
                        out.push(SandwichSample { base: w.base_steps, induced: w.induced_steps });
                        used += w.base_steps;
                        x = w.end;
                    }
                    None => {
                        // position lost; restart from a fresh typical point
                        censored += 1;
                        used += n_max;
                        x = dynamics.typical_point(burn_in);
                    }
                }
            }
            Ok((out, censored))
        })
        .collect();

    let mut samples = Vec::with_capacity(n_samples as usize);
    let mut censored = 0;
    for p in parts {
        let (v, c) = p?;
        samples.extend(v);
        censored += c;
    }

    let mu_hat_u = kac_c * mu_u;
    let f = Survival::new(samples.iter().map(|s| s.base).collect(), mu_u);
    let f_hat = Survival::new(samples.iter().map(|s| s.induced).collect(), mu_hat_u);
    let shrink = 1.0 - epsilon / kac_c;
    let grow = 1.0 + epsilon / kac_c;

    let mut points: Vec<f64> = f.jumps(1.0).chain(f_hat.jumps(shrink)).chain(f_hat.jumps(grow)).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let (mut lower, mut lower_t) = (f64::INFINITY, 0.0);
    let (mut upper, mut upper_t) = (f64::INFINITY, 0.0);
    for &t in &points {
        let (f_left, f_right) = f.at(t);
        let (lo_left, lo_right) = f_hat.at(t / shrink);
        let (hi_left, hi_right) = f_hat.at(t / grow);
        for (fv, lo, hi) in [(f_left, lo_left, hi_left), (f_right, lo_right, hi_right)] {
            let l = fv - (lo - 2.0 * epsilon);
            if l < lower {
                lower = l;
                lower_t = t;
            }
            let h = hi + 2.0 * epsilon - fv;
            if h < upper {
                upper = h;
                upper_t = t;
            }
        }
    }

    let slack = 3.0 / (samples.len() as f64).sqrt();
    let identical = kac_c == 1.0 && samples.iter().all(|s| s.base == s.induced);
    let report = SandwichReport {
        holds: lower >= -slack && upper >= -slack,
        lower_margin: lower,
        upper_margin: upper,
        lower_worst_t: lower_t,
        upper_worst_t: upper_t,
        slack,
        epsilon,
        kac_c,
        mu_u,
        mu_hat_u,
        n_samples: samples.len(),
        censored,
        identical,
    };
    Ok((report, samples))
}
