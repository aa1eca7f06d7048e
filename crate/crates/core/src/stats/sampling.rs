use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inducing::{first_return_with, ReturnTime};
use crate::interval::IntervalSet;
use crate::maps::{Dithered, Dynamics, PiecewiseMap};
use crate::rng::DEFAULT_STREAMS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub start: f64,
    /// Steps until the orbit was in `U`, or the cutoff when censored.
    pub raw_time: u64,
    pub censored: bool,
    pub normalized: f64,
}

impl ReturnSample {
    fn new(start: f64, time: ReturnTime, mu_u: f64) -> Self {
        let (raw_time, censored) = match time {
            ReturnTime::Returned(n) => (n, false),
            ReturnTime::Censored(n) => (n, true),
        };
        ReturnSample { start, raw_time, censored, normalized: raw_time as f64 * mu_u }
    }
}

/// `start,raw_time,censored,normalized` rows.
pub fn samples_to_csv(samples: &[ReturnSample]) -> String {
    let mut s = String::from("start,raw_time,censored,normalized\n");
    for r in samples {
        let _ = writeln!(s, "{:?},{},{},{:?}", r.start, r.raw_time, u8::from(r.censored), r.normalized);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Starts taken along one long orbit per stream.
    #[default]
    SingleOrbit,
    /// A fresh burned-in orbit for every sample.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SamplingOptions {
    pub mode: SamplingMode,
    /// Defaults to the map's burn-in.
    pub burn_in: Option<u64>,
    /// Total iteration budget across all streams.
    pub budget: Option<u64>,
    /// Spacing of hitting-time starts along a single orbit; defaults to `⌈1/μ(U)⌉`.
    pub gap: Option<u64>,
}

impl SamplingOptions {
    pub fn independent() -> Self {
        SamplingOptions { mode: SamplingMode::Independent, ..Default::default() }
    }

    fn burn_in(&self, map: &PiecewiseMap) -> u64 {
        self.burn_in.unwrap_or_else(|| map.default_burn_in())
    }

    fn budget(&self, n_samples: u64, mu_u: f64, n_max: u64) -> u64 {
        self.budget.unwrap_or_else(|| (20.0 * n_samples as f64 / mu_u).ceil() as u64 + 4 * n_max)
    }
}

fn check_inputs(mu_u: f64, n_samples: u64, n_max: u64) -> Result<()> {
    if !(mu_u > 0.0 && mu_u <= 1.0) {
        return Err(Error::InvalidParameter(format!("measure estimate {mu_u} outside (0,1]")));
    }
    if n_samples == 0 || n_max == 0 {
        return Err(Error::InvalidParameter("need positive sample count and cutoff".into()));
    }
    Ok(())
}

fn quota(n: u64, stream: u64) -> u64 {
    let streams = DEFAULT_STREAMS as u64;
    n / streams + u64::from(stream < n % streams)
}

/// Collects per-stream results in stream order, or reports how many samples
/// were gathered before the budget ran out.
fn merge(parts: Vec<std::result::Result<Vec<ReturnSample>, u64>>, wanted: u64) -> Result<Vec<ReturnSample>> {
    let mut found = 0;
    let mut short = false;
    let mut out = Vec::with_capacity(wanted as usize);
    for p in parts {
        match p {
            Ok(v) => {
                found += v.len() as u64;
                out.extend(v);
            }
            Err(n) => {
                found += n;
                short = true;
            }
        }
    }
    if short {
        return Err(Error::TooFewEntries { found, wanted });
    }
    Ok(out)
}

/// Advances until the orbit is in `u`; `None` if the budget runs out.
fn enter<D: Dynamics>(dynamics: &mut D, u: &IntervalSet, mut x: f64, used: &mut u64, budget: u64) -> Option<f64> {
    while !u.contains(x) {
        if *used >= budget {
            return None;
        }
        x = dynamics.advance(x);
        *used += 1;
    }
    Some(x)
}

/// Return times to `u`, with starts at successive entries of μ-typical orbits.
pub fn sample_return_times(
    map: &PiecewiseMap,
    u: &IntervalSet,
    mu_u: f64,
    n_samples: u64,
    n_max: u64,
    seed: u64,
) -> Result<Vec<ReturnSample>> {
    sample_return_times_with(map, u, mu_u, n_samples, n_max, seed, &SamplingOptions::default())
}

pub fn sample_return_times_with(
    map: &PiecewiseMap,
    u: &IntervalSet,
    mu_u: f64,
    n_samples: u64,
    n_max: u64,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Vec<ReturnSample>> {
    check_inputs(mu_u, n_samples, n_max)?;
    let burn_in = opts.burn_in(map);
    let budget = opts.budget(n_samples, mu_u, n_max);
    match opts.mode {
        SamplingMode::SingleOrbit => {
            let per_stream = budget / DEFAULT_STREAMS as u64 + 1;
            let parts = (0..DEFAULT_STREAMS as u64)
                .into_par_iter()
                .map(|s| {
                    let q = quota(n_samples, s);
                    let mut dynamics = Dithered::stream(map, seed, "return_times", s);
                    let x0 = dynamics.typical_point(burn_in);
                    let mut used = 0u64;
                    let mut out = Vec::with_capacity(q as usize);
                    let Some(mut x) = enter(&mut dynamics, u, x0, &mut used, per_stream) else {
                        return Err(0);
                    };
                    while (out.len() as u64) < q {
                        if used >= per_stream {
                            return Err(out.len() as u64);
                        }
                        let (time, y) = first_return_with(&mut dynamics, u, x, n_max);
                        out.push(ReturnSample::new(x, time, mu_u));
                        used += match time {
                            ReturnTime::Returned(n) | ReturnTime::Censored(n) => n,
                        };
                        x = match enter(&mut dynamics, u, y, &mut used, per_stream) {
                            Some(x) => x,
                            None if (out.len() as u64) < q => return Err(out.len() as u64),
                            None => break,
                        };
                    }
                    Ok(out)
                })
                .collect();
            merge(parts, n_samples)
        }
        SamplingMode::Independent => {
            let per_sample = budget / n_samples + 1;
            let parts: Vec<std::result::Result<ReturnSample, ()>> = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut dynamics = Dithered::stream(map, seed, "return_times_independent", i);
                    let x0 = dynamics.typical_point(burn_in);
                    let mut used = 0;
                    let x = enter(&mut dynamics, u, x0, &mut used, per_sample).ok_or(())?;
                    let (time, _) = first_return_with(&mut dynamics, u, x, n_max);
                    Ok(ReturnSample::new(x, time, mu_u))
                })
                .collect();
            collect_independent(parts, n_samples)
        }
    }
}

fn collect_independent(parts: Vec<std::result::Result<ReturnSample, ()>>, wanted: u64) -> Result<Vec<ReturnSample>> {
    let found = parts.iter().filter(|p| p.is_ok()).count() as u64;
    if found < wanted {
        return Err(Error::TooFewEntries { found, wanted });
    }
    Ok(parts.into_iter().flatten().collect())
}

/// Hitting times of `u` from μ-distributed starts. Independent mode by default:
/// each start ends a fresh burn-in segment.
pub fn sample_hitting_times(
    map: &PiecewiseMap,
    u: &IntervalSet,
    mu_u: f64,
    n_samples: u64,
    n_max: u64,
    seed: u64,
) -> Result<Vec<ReturnSample>> {
    sample_hitting_times_with(map, u, mu_u, n_samples, n_max, seed, &SamplingOptions::independent())
}

pub fn sample_hitting_times_with(
    map: &PiecewiseMap,
    u: &IntervalSet,
    mu_u: f64,
    n_samples: u64,
    n_max: u64,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Vec<ReturnSample>> {
    check_inputs(mu_u, n_samples, n_max)?;
    let burn_in = opts.burn_in(map);
    match opts.mode {
        SamplingMode::Independent => {
            let parts: Vec<std::result::Result<ReturnSample, ()>> = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut dynamics = Dithered::stream(map, seed, "hitting_times_independent", i);
                    let x = dynamics.typical_point(burn_in);
                    let (time, _) = first_return_with(&mut dynamics, u, x, n_max);
                    Ok(ReturnSample::new(x, time, mu_u))
                })
                .collect();
            collect_independent(parts, n_samples)
        }
        SamplingMode::SingleOrbit => {
            let gap = opts.gap.unwrap_or_else(|| (1.0 / mu_u).ceil() as u64).max(1);
            // starts are spaced `gap` apart, so the orbit must cover n·gap steps
            let budget = opts
                .budget
                .unwrap_or((n_samples.saturating_mul(gap)).saturating_add(opts.budget(n_samples, mu_u, n_max)));
            let per_stream = budget / DEFAULT_STREAMS as u64 + 1;
            let parts = (0..DEFAULT_STREAMS as u64)
                .into_par_iter()
                .map(|s| {
                    let q = quota(n_samples, s) as usize;
                    let mut dynamics = Dithered::stream(map, seed, "hitting_times", s);
                    let mut x = dynamics.typical_point(burn_in);
                    let mut pending: VecDeque<(u64, f64)> = VecDeque::new();
                    let mut issued = 0usize;
                    let mut out = Vec::with_capacity(q);
                    let mut t = 0u64;
                    while out.len() < q {
                        if t >= per_stream {
                            return Err(out.len() as u64);
                        }
                        if t.is_multiple_of(gap) && issued < q {
                            pending.push_back((t, x));
                            issued += 1;
                        }
                        x = dynamics.advance(x);
                        t += 1;
                        while let Some(&(s0, x0)) = pending.front() {
                            if t - s0 > n_max {
                                out.push(ReturnSample::new(x0, ReturnTime::Censored(n_max), mu_u));
                                pending.pop_front();
                            } else {
                                break;
                            }
                        }
                        if u.contains(x) {
                            for (s0, x0) in pending.drain(..) {
                                out.push(ReturnSample::new(x0, ReturnTime::Returned(t - s0), mu_u));
                            }
                        }
                    }
                    Ok(out)
                })
                .collect();
            merge(parts, n_samples)
        }
    }
}
