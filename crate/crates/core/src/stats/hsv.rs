use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inducing::stderr_of_means;
use crate::interval::IntervalSet;
use crate::maps::{Dithered, Dynamics, PiecewiseMap};
use crate::measures::EmpiricalMeasure;
use crate::rng::DEFAULT_STREAMS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvReport {
    pub n: u64,
    pub partition_depth: u32,
    /// `μ_U(τ_U ≤ N)`
    pub a_n: f64,
    pub a_n_stderr: f64,
    /// Largest `μ_U(T^{-N}V) − μ(V)` over unions `V` of depth-`d` dyadic bins.
    pub b_n: f64,
    /// Expected value of `b_n` from sampling noise alone when the two laws agree.
    pub b_n_noise_floor: f64,
    /// `sup_k |μ_U(τ_U > k) − μ(τ_U > k)|`
    pub c_sup: f64,
    pub c_sup_at: u64,
    pub n_starts: u64,
}

const BATCHES_PER_STREAM: usize = 10;

struct StreamPart {
    gaps: Vec<u64>,
    image_bins: Vec<u64>,
}

/// Estimates `a_N`, `b_N` and `c(U)` from successive entries to `u` along
/// μ-typical orbits. Every entry is a `μ_U` start whose return time is the gap
/// to the next entry; every orbit point is a μ start whose hitting time is the
/// distance to the next entry, so both laws come from the same gap sequence.
pub fn hsv_quantities(
    map: &PiecewiseMap,
    u: &IntervalSet,
    mu: &EmpiricalMeasure,
    n: u64,
    partition_depth: u32,
    n_mc: u64,
    seed: u64,
) -> Result<HsvReport> {
    if partition_depth > 20 {
        return Err(Error::InvalidParameter(format!("partition depth {partition_depth} too large")));
    }
    let streams = DEFAULT_STREAMS as u64;
    if n_mc < streams * BATCHES_PER_STREAM as u64 {
        return Err(Error::InvalidParameter(format!("need at least {} starts", streams * BATCHES_PER_STREAM as u64)));
    }
    let mu_u = mu.mass_of(u);
    if !(mu_u > 0.0) {
        return Err(Error::InvalidParameter(format!("{u} has no mass under the supplied measure")));
    }
    let n_bins = 1usize << partition_depth;
    let burn_in = map.default_burn_in();
    let budget = ((50.0 * n_mc as f64 / mu_u).ceil() as u64 + n) / streams + 1;

    let parts: Vec<std::result::Result<StreamPart, u64>> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let q = (n_mc / streams + u64::from(s < n_mc % streams)) as usize;
            let mut dynamics = Dithered::stream(map, seed, "hsv", s);
            let mut x = dynamics.typical_point(burn_in);
            let mut t = 0u64;
            while !u.contains(x) {
                x = dynamics.advance(x);
                t += 1;
                if t > budget {
                    return Err(0);
                }
            }
            let mut entries = 0usize;
            let mut last_entry = t;
            let mut gaps = Vec::with_capacity(q);
            let mut image_bins = Vec::with_capacity(q);
            let mut pending: VecDeque<u64> = VecDeque::new();
            loop {
                if u.contains(x) {
                    if entries > 0 && gaps.len() < q {
                        gaps.push(t - last_entry);
                    }
                    if entries < q {
                        pending.push_back(t);
                    }
                    entries += 1;
                    last_entry = t;
                }
                while pending.front() == Some(&(t.wrapping_sub(n))) && t >= n {
                    pending.pop_front();
                    image_bins.push(((x * n_bins as f64) as usize).min(n_bins - 1) as u64);
                }
                if gaps.len() == q && image_bins.len() == q {
                    break;
                }
                if t > budget {
                    return Err(gaps.len() as u64);
                }
                x = dynamics.advance(x);
                t += 1;
            }
            Ok(StreamPart { gaps, image_bins })
        })
        .collect();

    let mut found = 0;
    let mut ok = Vec::new();
    for p in parts {
        match p {
            Ok(part) => {
                found += part.gaps.len() as u64;
                ok.push(part);
            }
            Err(k) => found += k,
        }
    }
    if ok.len() < streams as usize {
        return Err(Error::TooFewEntries { found, wanted: n_mc });
    }

    let total = n_mc as f64;
    let mut indicator_means = Vec::new();
    let mut short = 0u64;
    for p in &ok {
        let hits: Vec<u64> = p.gaps.iter().map(|&g| u64::from(g <= n)).collect();
        short += hits.iter().sum::<u64>();
        indicator_means.extend(crate::inducing::batch_means(&hits, BATCHES_PER_STREAM));
    }
    let a_n = short as f64 / total;

    let mut hist = vec![0u64; n_bins];
    for p in &ok {
        for &b in &p.image_bins {
            hist[b as usize] += 1;
        }
    }
    let (mut b_n, mut floor) = (0.0, 0.0);
    for (i, &h) in hist.iter().enumerate() {
        let lo = i as f64 / n_bins as f64;
        let bin = IntervalSet::interval(lo, (i + 1) as f64 / n_bins as f64)?;
        let target = mu.mass_of(&bin);
        b_n += (h as f64 / total - target).max(0.0);
        floor += (target * (1.0 - target) / total).sqrt() / (2.0 * std::f64::consts::PI).sqrt();
    }

    let mut gaps: Vec<u64> = ok.iter().flat_map(|p| p.gaps.iter().copied()).collect();
    gaps.sort_unstable();
    let (c_sup, c_sup_at) = return_vs_hitting(&gaps);

    Ok(HsvReport {
        n,
        partition_depth,
        a_n,
        a_n_stderr: stderr_of_means(&indicator_means),
        b_n,
        b_n_noise_floor: floor,
        c_sup,
        c_sup_at,
        n_starts: n_mc,
    })
}

/// `sup_k |P(G > k) − Σ_g (g − k)⁺ / Σ_g g|` for sorted gaps `g`: the return
/// survival against the hitting survival of a point uniform between entries.
fn return_vs_hitting(sorted: &[u64]) -> (f64, u64) {
    let m = sorted.len() as f64;
    let total: f64 = sorted.iter().map(|&g| g as f64).sum();
    // suffix sums of gaps
    let mut suffix = vec![0.0; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        suffix[i] = suffix[i + 1] + sorted[i] as f64;
    }
    let eval = |k: u64| -> f64 {
        let i = sorted.partition_point(|&g| g <= k);
        let count = (sorted.len() - i) as f64;
        let ret = count / m;
        let hit = (suffix[i] - k as f64 * count) / total;
        (ret - hit).abs()
    };
    let mut best = (eval(0), 0);
    for &g in sorted {
        for k in [g.saturating_sub(1), g] {
            let d = eval(k);
            if d > best.0 {
                best = (d, k);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use crate::shift;

    #[test]
    fn a_n_matches_enumeration() {
        let d = builtin("doubling", &[]).unwrap();
        let u = IntervalSet::interval(0.0, 0.25).unwrap();
        let exact = shift::enumerate_short_returns(&u, 2, 4).unwrap();
        assert_eq!(exact, 0.5);
        let lebesgue = EmpiricalMeasure::lebesgue(256);
        let r = hsv_quantities(&d, &u, &lebesgue, 2, 8, 100_000, 7).unwrap();
        assert!((r.a_n - exact).abs() <= 3.0 * r.a_n_stderr, "{r:?}");
        let zero = hsv_quantities(&d, &u, &lebesgue, 0, 8, 1_000, 7).unwrap();
        assert_eq!(zero.a_n, 0.0);
    }

    #[test]
    fn a_n_is_monotone_and_bounded() {
        let d = builtin("doubling", &[]).unwrap();
        let u = IntervalSet::ball(0.3, 0.01).unwrap();
        let lebesgue = EmpiricalMeasure::lebesgue(1024);
        let mut prev = 0.0;
        for n in [0, 1, 5, 20, 100, 1000] {
            let r = hsv_quantities(&d, &u, &lebesgue, n, 6, 10_000, 3).unwrap();
            assert!(r.a_n >= prev && r.a_n <= 1.0);
            assert!((0.0..=1.0).contains(&r.c_sup));
            prev = r.a_n;
        }
    }

    #[test]
    fn b_n_is_noise_for_mixed_cylinders() {
        let d = builtin("doubling", &[]).unwrap();
        let depth = 6;
        let u = IntervalSet::dyadic_cylinder(std::f64::consts::FRAC_1_SQRT_2, depth).unwrap();
        let lebesgue = EmpiricalMeasure::lebesgue(1024);
        let r = hsv_quantities(&d, &u, &lebesgue, 4 * depth as u64, 8, 200_000, 5).unwrap();
        assert!(r.b_n <= 1.5 * r.b_n_noise_floor, "{r:?}");
        // before mixing, the image of U is concentrated and far from μ
        let early = hsv_quantities(&d, &u, &lebesgue, 1, 8, 20_000, 5).unwrap();
        assert!(early.b_n > 0.9, "{early:?}");
    }

    #[test]
    fn c_sup_matches_exact_laws() {
        // for a cylinder the return and hitting laws are known exactly
        let d = builtin("doubling", &[]).unwrap();
        let word = shift::cylinder_word(0.3, 3).unwrap();
        let ret = shift::cylinder_return_law(&word, 1e-14, 10_000);
        let hit = shift::cylinder_hitting_law(&word, 1e-14, 10_000);
        let exact = (0..200).map(|k| (ret.survival(k) - hit.survival(k)).abs()).fold(0.0, f64::max);
        let u = IntervalSet::dyadic_cylinder(0.3, 3).unwrap();
        let r = hsv_quantities(&d, &u, &EmpiricalMeasure::lebesgue(8), 1, 3, 200_000, 2).unwrap();
        assert!((r.c_sup - exact).abs() < 0.01, "{} vs {exact}", r.c_sup);
    }

    #[test]
    fn gap_law_helper() {
        // gaps all equal to 2: return survival 1,0,..; hitting times uniform on {1,2}
        let (c, k) = return_vs_hitting(&[2, 2, 2]);
        assert_eq!((c, k), (0.5, 1));
    }
}
