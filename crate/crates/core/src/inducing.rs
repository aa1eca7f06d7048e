//! First-return (induced) systems.
//!
//! An [`InducedSystem`] restricts a base map to a domain `X̂` and iterates until
//! the orbit re-enters it. The return-time level sets `Z_p` are located by
//! bisection on the integer-valued return-time function, and
//! [`rmap_certificate`] evaluates the expansion, distortion and weight
//! summability of the induced branches along the return orbits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalSet};
use crate::maps::{Dithered, Dynamics, Exact, PiecewiseMap};
use crate::rng::DEFAULT_STREAMS;

/// Default per-sample censoring cutoff.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

/// Default absolute tolerance for branch endpoints.
pub const DEFAULT_BRANCH_TOL: f64 = 1e-12;

/// Points sampled per domain component before bisection refinement.
const SCAN_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnTime {
    Returned(u64),
    Censored(u64),
}

impl ReturnTime {
    pub fn returned(self) -> Option<u64> {
        match self {
            ReturnTime::Returned(n) => Some(n),
            ReturnTime::Censored(_) => None,
        }
    }
}

/// Least `n` in `1..=n_max` with `T^n(x)` in `u`.
pub fn first_return_time(map: &PiecewiseMap, u: &IntervalSet, x: f64, n_max: u64) -> Result<ReturnTime> {
    map.evaluate(x)?;
    Ok(first_return_with(&mut Exact(map), u, x, n_max).0)
}

/// As [`first_return_time`] along an arbitrary orbit source. Also returns the
/// last point reached.
#[inline]
pub fn first_return_with<D: Dynamics>(dynamics: &mut D, u: &IntervalSet, x: f64, n_max: u64) -> (ReturnTime, f64) {
    let mut y = x;
    for n in 1..=n_max {
        y = dynamics.advance(y);
        if u.contains(y) {
            return (ReturnTime::Returned(n), y);
        }
    }
    (ReturnTime::Censored(n_max), y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedSystem {
    pub base: PiecewiseMap,
    pub domain: IntervalSet,
    pub max_steps: u64,
}

impl InducedSystem {
    pub fn new(base: PiecewiseMap, domain: IntervalSet, max_steps: u64) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        Ok(InducedSystem { base, domain, max_steps })
    }

    /// `(T̂(x), n(x))` under plain iteration.
    pub fn induced_step(&self, x: f64) -> Result<(f64, u64)> {
        self.induced_step_with(&mut Exact(&self.base), x)
    }

    pub fn induced_step_with<D: Dynamics>(&self, dynamics: &mut D, x: f64) -> Result<(f64, u64)> {
        if !self.domain.contains(x) {
            return Err(Error::NotInDomain(x));
        }
        match first_return_with(dynamics, &self.domain, x, self.max_steps) {
            (ReturnTime::Returned(n), y) => Ok((y, n)),
            (ReturnTime::Censored(n), _) => Err(Error::Censored(n)),
        }
    }

    /// The return time to `u ⊂ X̂` accumulated through induced steps: returns
    /// `(Σ n(T̂^i x), τ̂_U(x))`, or `None` when any induced step is censored or
    /// more than `n_max` base steps elapse.
    pub fn tower_return_time<D: Dynamics>(
        &self,
        dynamics: &mut D,
        u: &IntervalSet,
        x: f64,
        n_max: u64,
    ) -> Result<Option<(u64, u64)>> {
        Ok(self.tower_walk(dynamics, u, x, n_max)?.map(|w| (w.base_steps, w.induced_steps)))
    }

    /// As [`tower_return_time`](Self::tower_return_time), also reporting the
    /// point where the walk stopped.
    pub fn tower_walk<D: Dynamics>(
        &self,
        dynamics: &mut D,
        u: &IntervalSet,
        x: f64,
        n_max: u64,
    ) -> Result<Option<TowerWalk>> {
        if !u.is_subset_of(&self.domain) {
            return Err(Error::InvalidIntervalSet(format!("{u} is not contained in {}", self.domain)));
        }
        let mut y = x;
        let mut total = 0u64;
        let mut count = 0u64;
        loop {
            let (z, n) = match self.induced_step_with(dynamics, y) {
                Ok(step) => step,
                Err(Error::Censored(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            total += n;
            count += 1;
            if u.contains(z) {
                return Ok(Some(TowerWalk { base_steps: total, induced_steps: count, end: z }));
            }
            if total >= n_max {
                return Ok(None);
            }
            y = z;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerWalk {
    pub base_steps: u64,
    pub induced_steps: u64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnBranch {
    /// Branch domain `[lo, hi)`; both endpoints are within the bisection
    /// tolerance of the true boundary.
    pub lo: f64,
    pub hi: f64,
    /// Largest point checked to have return time `return_time`.
    pub inner_hi: f64,
    pub return_time: u64,
    pub image_lo: f64,
    pub image_hi: f64,
}

impl ReturnBranch {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.inner_hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPartition {
    pub branches: Vec<ReturnBranch>,
    /// Parts of the domain with return time above `p_max`.
    pub unresolved: Vec<(f64, f64)>,
}

impl BranchPartition {
    pub fn unresolved_length(&self) -> f64 {
        self.unresolved.iter().map(|(a, b)| b - a).sum()
    }
}

/// Return-time level sets `Z_p` with `p <= p_max`.
pub fn return_branches(sys: &InducedSystem, p_max: u64, tol: f64) -> Result<BranchPartition> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let class = |x: f64| first_return_with(&mut Exact(&sys.base), &sys.domain, x, p_max).0.returned();

    let mut branches = Vec::new();
    let mut unresolved = Vec::new();
    for comp in sys.domain.components() {
        let last = (comp.hi).next_down();
        let mut pts: Vec<(f64, Option<u64>)> = (0..SCAN_POINTS)
            .map(|i| comp.lo + comp.length() * i as f64 / SCAN_POINTS as f64)
            .filter(|&x| x < last)
            .chain(std::iter::once(last))
            .map(|x| (x, class(x)))
            .collect();
        pts.dedup_by(|a, b| a.0 == b.0);

        // boundaries: (left point, its class, right point, its class)
        let mut bounds: Vec<(f64, Option<u64>, f64, Option<u64>)> = Vec::new();
        for w in pts.windows(2) {
            if w[0].1 != w[1].1 {
                refine(&class, w[0], w[1], tol, &mut bounds)?;
            }
        }

        // runs between consecutive boundaries
        let mut run_lo = comp.lo;
        let mut run_class = pts[0].1;
        let mut ends: Vec<(f64, f64, Option<u64>)> = Vec::new(); // (lo, inner_hi, class)
        for &(l, cl, r, cr) in &bounds {
            debug_assert_eq!(cl, run_class);
            ends.push((run_lo, l, run_class));
            run_lo = r;
            run_class = cr;
        }
        ends.push((run_lo, last, run_class));

        for (i, &(lo, inner_hi, c)) in ends.iter().enumerate() {
            let hi = ends.get(i + 1).map_or(comp.hi, |n| n.0);
            match c {
                Some(p) => {
                    let a = iterate(&sys.base, lo, p);
                    let b = iterate(&sys.base, inner_hi, p);
                    branches.push(ReturnBranch {
                        lo,
                        hi,
                        inner_hi,
                        return_time: p,
                        image_lo: a.min(b),
                        image_hi: a.max(b),
                    });
                }
                None => unresolved.push((lo, hi)),
            }
        }
    }
    Ok(BranchPartition { branches, unresolved })
}

type Classed = (f64, Option<u64>);

fn refine<F: Fn(f64) -> Option<u64>>(
    class: &F,
    left: Classed,
    right: Classed,
    tol: f64,
    out: &mut Vec<(f64, Option<u64>, f64, Option<u64>)>,
) -> Result<()> {
    let ((l, cl), (r, cr)) = (left, right);
    if r - l <= tol {
        out.push((l, cl, r, cr));
        return Ok(());
    }
    let m = 0.5 * (l + r);
    if m <= l || m >= r {
        return Err(Error::ResolutionExceeded(l));
    }
    let cm = class(m);
    if cm != cl {
        refine(class, (l, cl), (m, cm), tol, out)?;
    }
    if cm != cr {
        refine(class, (m, cm), (r, cr), tol, out)?;
    }
    Ok(())
}

fn iterate(map: &PiecewiseMap, x: f64, n: u64) -> f64 {
    (0..n).fold(x, |y, _| map.apply(y))
}

/// `|(T^n)'(x)|` by the chain rule along the orbit.
pub fn orbit_derivative(map: &PiecewiseMap, x: f64, n: u64) -> f64 {
    let mut y = x;
    let mut d = 1.0;
    for _ in 0..n {
        d *= map.derivative_unchecked(y).abs();
        y = map.apply(y);
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KacEstimate {
    pub mean_return: f64,
    pub stderr: f64,
    pub n_entries: u64,
    pub censored: u64,
}

impl KacEstimate {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / (self.n_entries + self.censored).max(1) as f64
    }
}

const KAC_BATCHES_PER_STREAM: usize = 20;

/// Mean return time to `X̂` along long typical orbits, estimating
/// `1/μ(X̂)`. The standard error comes from batch means, so it accounts for
/// correlation between successive returns.
pub fn kac_constant(sys: &InducedSystem, n_entries: u64, seed: u64) -> Result<KacEstimate> {
    kac_constant_with_burn_in(sys, n_entries, seed, sys.base.default_burn_in())
}

pub fn kac_constant_with_burn_in(sys: &InducedSystem, n_entries: u64, seed: u64, burn_in: u64) -> Result<KacEstimate> {
    if n_entries < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 entries, got {n_entries}")));
    }
    if sys.domain.is_full() {
        return Ok(KacEstimate { mean_return: 1.0, stderr: 0.0, n_entries, censored: 0 });
    }
    let streams = DEFAULT_STREAMS as u64;
    let per_stream: Vec<(Vec<u64>, u64)> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let quota = n_entries / streams + u64::from(s < n_entries % streams);
            let mut dynamics = Dithered::stream(&sys.base, seed, "kac", s);
            let mut x = dynamics.typical_point(burn_in);
            // wait for the first entry
            let (first, y) = first_return_with(&mut dynamics, &sys.domain, x, sys.max_steps);
            if first.returned().is_none() {
                return (Vec::new(), quota);
            }
            x = y;
            let mut times = Vec::with_capacity(quota as usize);
            let mut censored = 0u64;
            while (times.len() as u64) < quota && censored <= quota {
                match first_return_with(&mut dynamics, &sys.domain, x, sys.max_steps) {
                    (ReturnTime::Returned(n), y) => {
                        times.push(n);
                        x = y;
                    }
                    (ReturnTime::Censored(_), y) => {
                        censored += 1;
                        x = y;
                        // resume at the next entry
                        while !sys.domain.contains(x) {
                            x = dynamics.advance(x);
                        }
                    }
                }
            }
            (times, censored)
        })
        .collect();

    let censored: u64 = per_stream.iter().map(|(_, c)| c).sum();
    let total: u64 = per_stream.iter().map(|(t, _)| t.len() as u64).sum();
    if total == 0 || censored as f64 > 0.01 * (total + censored) as f64 {
        return Err(Error::TooManyCensored { censored, total: total + censored });
    }
    let sum: u64 = per_stream.iter().flat_map(|(t, _)| t.iter()).sum();
    let mean = sum as f64 / total as f64;
    let batch_means: Vec<f64> = per_stream.iter().flat_map(|(t, _)| batch_means(t, KAC_BATCHES_PER_STREAM)).collect();
    Ok(KacEstimate { mean_return: mean, stderr: stderr_of_means(&batch_means), n_entries: total, censored })
}

pub(crate) fn batch_means(values: &[u64], batches: usize) -> Vec<f64> {
    let size = values.len() / batches;
    if size == 0 {
        return Vec::new();
    }
    values.chunks_exact(size).take(batches).map(|c| c.iter().sum::<u64>() as f64 / size as f64).collect()
}

pub(crate) fn stderr_of_means(means: &[f64]) -> f64 {
    let k = means.len() as f64;
    if k < 2.0 {
        return f64::NAN;
    }
    let mu = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovNeighborhood {
    /// `U` with `T^n(U) = Y` monotonically.
    pub lo: f64,
    pub hi: f64,
    pub n: u64,
}

impl MarkovNeighborhood {
    pub fn as_set(&self) -> Result<IntervalSet> {
        IntervalSet::interval(self.lo, self.hi)
    }
}

/// Pulls `y` back along the orbit of `x` to the maximal interval around `x`
/// mapped monotonically onto `y` by `T^n`, where `n` is the first visit of
/// the orbit to the open interval `y`.
///
/// The closure of the critical orbit must meet `y` at most in its endpoints;
/// this is the caller's responsibility.
pub fn markov_neighborhood(map: &PiecewiseMap, x: f64, y: Interval, n_max: u64) -> Result<MarkovNeighborhood> {
    map.evaluate(x)?;
    let inside = |p: f64| p > y.lo && p < y.hi;
    let mut orbit = vec![x];
    let mut p = x;
    let mut n = None;
    for k in 1..=n_max {
        p = map.apply(p);
        orbit.push(p);
        if inside(p) {
            n = Some(k);
            break;
        }
    }
    let n = n.ok_or(Error::NoVisit(n_max))?;

    let (mut lo, mut hi) = (y.lo, y.hi);
    for k in (0..n as usize).rev() {
        let b = map.branch_at(orbit[k]);
        let (a, c) = (b.f.eval(b.lo), b.f.eval(b.hi));
        let solve = |target: f64| -> f64 {
            let (mut l, mut r) = (b.lo, b.hi);
            for _ in 0..200 {
                let m = 0.5 * (l + r);
                if m <= l || m >= r {
                    break;
                }
                let below = b.f.eval(m) < target;
                if below == b.increasing {
                    l = m;
                } else {
                    r = m;
                }
            }
            0.5 * (l + r)
        };
        let (img_min, img_max) = (a.min(c), a.max(c));
        let pre = |t: f64| -> f64 {
            if t <= img_min {
                if b.increasing {
                    b.lo
                } else {
                    b.hi
                }
            } else if t >= img_max {
                if b.increasing {
                    b.hi
                } else {
                    b.lo
                }
            } else {
                solve(t)
            }
        };
        let (p1, p2) = (pre(lo), pre(hi));
        lo = p1.min(p2);
        hi = p1.max(p2);
        let scale = orbit[k].abs().max(f64::MIN_POSITIVE);
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            return Err(Error::PullbackDegenerate(k));
        }
    }
    Ok(MarkovNeighborhood { lo, hi, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCertificate {
    pub lo: f64,
    pub hi: f64,
    pub return_time: u64,
    pub min_derivative: f64,
    pub max_derivative: f64,
    pub distortion: f64,
    /// `sup_Z 1/|T̂'|`
    pub sup_weight: f64,
    /// Grid estimate of `∫_Z |g'|`.
    pub weight_variation: f64,
    pub image_lo: f64,
    pub image_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub expansion_inf: f64,
    #[serde(rename = "distortion_K")]
    pub distortion_k: f64,
    pub variation_estimate: f64,
    /// Partial sums over `p = 1..=p_max` of `sup_{Z_p} 1/|T̂'|`.
    pub weight_tail: Vec<f64>,
    pub branches_checked: usize,
    /// `K (2 + log K)`
    pub koebe_bound: f64,
    pub unresolved_length: f64,
    pub branches: Vec<BranchCertificate>,
}

impl CertificateReport {
    /// Successive terms of the weight series.
    pub fn weight_increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.weight_tail
            .iter()
            .map(|&s| {
                let d = s - prev;
                prev = s;
                d
            })
            .collect()
    }
}

/// Numerical evidence that the induced map is uniformly expanding with bounded
/// distortion and a summable weight `g = 1/|T̂'|`.
pub fn rmap_certificate(sys: &InducedSystem, p_max: u64, grid: usize) -> Result<CertificateReport> {
    if grid < 2 {
        return Err(Error::InvalidParameter("certificate grid needs at least 2 points".into()));
    }
    let partition = return_branches(sys, p_max, DEFAULT_BRANCH_TOL)?;
    let rows: Vec<BranchCertificate> = partition
        .branches
        .par_iter()
        .map(|b| {
            let p = b.return_time;
            let mut min_d = f64::INFINITY;
            let mut max_d: f64 = 0.0;
            let mut sup_g: f64 = 0.0;
            let mut var = 0.0;
            let mut prev_g: Option<f64> = None;
            for j in 0..grid {
                let x = b.lo + (b.inner_hi - b.lo) * j as f64 / (grid - 1) as f64;
                let d = orbit_derivative(&sys.base, x, p);
                min_d = min_d.min(d);
                max_d = max_d.max(d);
                let g = 1.0 / d;
                sup_g = sup_g.max(g);
                if let Some(pg) = prev_g {
                    var += (g - pg).abs();
                }
                prev_g = Some(g);
            }
            BranchCertificate {
                lo: b.lo,
                hi: b.hi,
                return_time: p,
                min_derivative: min_d,
                max_derivative: max_d,
                distortion: max_d / min_d,
                sup_weight: sup_g,
                weight_variation: var,
                image_lo: b.image_lo,
                image_hi: b.image_hi,
            }
        })
        .collect();

    let expansion_inf = rows.iter().map(|r| r.min_derivative).fold(f64::INFINITY, f64::min);
    let distortion_k = rows.iter().map(|r| r.distortion).fold(1.0, f64::max);
    let mut weight_tail = Vec::with_capacity(p_max as usize);
    let mut acc = 0.0;
    for p in 1..=p_max {
        acc += rows.iter().filter(|r| r.return_time == p).map(|r| r.sup_weight).sum::<f64>();
        weight_tail.push(acc);
    }
    let variation_estimate = rows.iter().map(|r| r.weight_variation + 2.0 * r.sup_weight).sum();
    Ok(CertificateReport {
        expansion_inf,
        distortion_k,
        variation_estimate,
        weight_tail,
        branches_checked: rows.len(),
        koebe_bound: distortion_k * (2.0 + distortion_k.ln()),
        unresolved_length: partition.unresolved_length(),
        branches: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;

    fn doubling() -> PiecewiseMap {
        builtin("doubling", &[]).unwrap()
    }

    fn lsv() -> PiecewiseMap {
        builtin("lsv_alpha", &[0.5]).unwrap()
    }

    #[test]
    fn return_time_examples() {
        let u = IntervalSet::interval(0.0, 0.25).unwrap();
        // 1/5 is approximated; its first four iterates still behave like the rational orbit
        assert_eq!(first_return_time(&doubling(), &u, 0.2, 100).unwrap(), ReturnTime::Returned(4));
        assert_eq!(first_return_time(&doubling(), &u, 0.125, 100).unwrap(), ReturnTime::Returned(3));
        let l = builtin("logistic", &[4.0]).unwrap();
        let u = IntervalSet::ball(0.75, 0.01).unwrap();
        assert_eq!(first_return_time(&l, &u, 0.75, 10).unwrap(), ReturnTime::Returned(1));
        let u = IntervalSet::interval(0.9, 0.95).unwrap();
        assert_eq!(first_return_time(&l, &u, 0.75, 10).unwrap(), ReturnTime::Censored(10));
    }

    #[test]
    fn induced_step_examples() {
        let sys = InducedSystem::new(doubling(), IntervalSet::interval(0.5, 1.0).unwrap(), 100).unwrap();
        assert_eq!(sys.induced_step(0.75).unwrap(), (0.5, 1));
        assert_eq!(sys.induced_step(0.25), Err(Error::NotInDomain(0.25)));

        let full = InducedSystem::new(lsv(), IntervalSet::full(), 100).unwrap();
        for x in [0.1, 0.3, 0.7, 0.99] {
            assert_eq!(full.induced_step(x).unwrap(), (lsv().evaluate(x).unwrap(), 1));
        }

        let sys = InducedSystem::new(lsv(), IntervalSet::interval(0.5, 1.0).unwrap(), 1000).unwrap();
        // T(3/4) = 1/2 belongs to [1/2, 1), so it returns at once
        assert_eq!(sys.induced_step(0.75).unwrap(), (0.5, 1));
        let (y, n) = sys.induced_step(0.7).unwrap();
        assert!(n >= 2);
        let mut z = 0.7;
        for k in 1..=n {
            z = lsv().evaluate(z).unwrap();
            assert_eq!(k == n, z >= 0.5);
        }
        assert_eq!(z, y);
    }

    #[test]
    fn censoring() {
        // 1/2 -> 0 is stuck at the neutral fixed point
        let sys = InducedSystem::new(lsv(), IntervalSet::interval(0.5, 1.0).unwrap(), 50).unwrap();
        assert_eq!(sys.induced_step(0.5), Err(Error::Censored(50)));
    }

    #[test]
    fn doubling_branches_are_dyadic() {
        let sys = InducedSystem::new(doubling(), IntervalSet::interval(0.5, 1.0).unwrap(), 100).unwrap();
        let part = return_branches(&sys, 3, 1e-12).unwrap();
        let b: Vec<(f64, f64, u64)> = part.branches.iter().map(|b| (b.lo, b.hi, b.return_time)).collect();
        assert_eq!(b, vec![(0.5625, 0.625, 3), (0.625, 0.75, 2), (0.75, 1.0, 1)]);
        assert_eq!(part.unresolved, vec![(0.5, 0.5625)]);

        // brute-force scan on a 2^-20 grid
        let step = 2f64.powi(-20);
        let mut x = 0.5;
        while x < 1.0 {
            let t = first_return_time(&doubling(), &sys.domain, x, 3).unwrap().returned();
            let owner = part.branches.iter().find(|b| x >= b.lo && x < b.hi).map(|b| b.return_time);
            assert_eq!(t, owner, "x = {x}");
            x += step;
        }
    }

    #[test]
    fn full_space_is_one_branch() {
        let sys = InducedSystem::new(doubling(), IntervalSet::full(), 10).unwrap();
        let part = return_branches(&sys, 5, 1e-12).unwrap();
        assert_eq!(part.branches.len(), 1);
        assert_eq!(part.branches[0].return_time, 1);
        assert_eq!((part.branches[0].lo, part.branches[0].hi), (0.0, 1.0));
        assert!(part.unresolved.is_empty());
    }

    #[test]
    fn lsv_branches_are_onto() {
        let sys = InducedSystem::new(lsv(), IntervalSet::interval(0.5, 1.0).unwrap(), 1000).unwrap();
        let part = return_branches(&sys, 20, 1e-12).unwrap();
        assert_eq!(part.branches.len(), 20);
        for (i, b) in part.branches.iter().rev().enumerate() {
            assert_eq!(b.return_time, i as u64 + 1);
            assert!((b.image_lo - 0.5).abs() < 1e-6, "{b:?}");
            assert!((b.image_hi - 1.0).abs() < 1e-6, "{b:?}");
            let t = first_return_time(&lsv(), &sys.domain, b.midpoint(), 100).unwrap();
            assert_eq!(t, ReturnTime::Returned(b.return_time));
        }
        // partition property
        let mut pieces: Vec<(f64, f64)> = part.branches.iter().map(|b| (b.lo, b.hi)).collect();
        pieces.extend(part.unresolved.iter().copied());
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(pieces[0].0, 0.5);
        assert_eq!(pieces.last().unwrap().1, 1.0);
        for w in pieces.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn bad_tolerance() {
        let sys = InducedSystem::new(doubling(), IntervalSet::full(), 10).unwrap();
        assert!(return_branches(&sys, 5, 0.0).is_err());
    }

    #[test]
    fn kac_examples() {
        let sys = InducedSystem::new(doubling(), IntervalSet::full(), 10).unwrap();
        let k = kac_constant(&sys, 1000, 1).unwrap();
        assert_eq!(k.mean_return, 1.0);

        let sys = InducedSystem::new(doubling(), IntervalSet::interval(0.5, 1.0).unwrap(), 10_000).unwrap();
        let k = kac_constant(&sys, 100_000, 3).unwrap();
        assert!((k.mean_return - 2.0).abs() <= 3.0 * k.stderr, "{k:?}");
        assert!(k.stderr > 0.0 && k.stderr < 0.01);
        assert!(kac_constant(&sys, 10, 3).is_err());
    }

    #[test]
    fn kac_is_deterministic() {
        let sys = InducedSystem::new(lsv(), IntervalSet::interval(0.5, 1.0).unwrap(), 1_000_000).unwrap();
        let a = kac_constant_with_burn_in(&sys, 2000, 9, 1000).unwrap();
        let b = kac_constant_with_burn_in(&sys, 2000, 9, 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn markov_neighborhood_examples() {
        let l = builtin("logistic", &[4.0]).unwrap();
        let y = Interval { lo: 0.5, hi: 1.0 };
        let nb = markov_neighborhood(&l, 0.75, y, 10).unwrap();
        assert_eq!(nb.n, 1);
        assert!((nb.lo - 0.5).abs() < 1e-12);
        assert!((nb.hi - (2.0 + 2f64.sqrt()) / 4.0).abs() < 1e-12);

        // doubling: dyadic pullback of length |Y| 2^-n
        let d = doubling();
        let y = Interval { lo: 0.25, hi: 0.5 };
        let nb = markov_neighborhood(&d, 0.3, y, 60).unwrap();
        let mut p = 0.3;
        for _ in 0..nb.n {
            p = d.apply(p);
        }
        assert!(p > 0.25 && p < 0.5);
        assert!(((nb.hi - nb.lo) - 0.25 * 2f64.powi(-(nb.n as i32))).abs() < 1e-14);
        assert!(nb.lo <= 0.3 && 0.3 <= nb.hi);
        // grid scan: points of U land in Y after n steps, points just outside do not
        for i in 1..100 {
            let x = nb.lo + (nb.hi - nb.lo) * i as f64 / 100.0;
            let mut z = x;
            for _ in 0..nb.n {
                z = d.apply(z);
            }
            assert!(z > 0.25 - 1e-12 && z < 0.5 + 1e-12);
        }

        assert_eq!(markov_neighborhood(&l, 0.75, Interval { lo: 0.1, hi: 0.2 }, 10), Err(Error::NoVisit(10)));
    }

    #[test]
    fn single_branch_pullback() {
        let t = builtin("tent", &[]).unwrap();
        // T(0.3) = 0.6 in (0.55, 0.7); branch [0, 1/2) increasing
        let nb = markov_neighborhood(&t, 0.3, Interval { lo: 0.55, hi: 0.7 }, 5).unwrap();
        assert_eq!(nb.n, 1);
        assert!((nb.lo - 0.275).abs() < 1e-15 && (nb.hi - 0.35).abs() < 1e-15);
    }

    #[test]
    fn doubling_certificate() {
        let sys = InducedSystem::new(doubling(), IntervalSet::interval(0.5, 1.0).unwrap(), 100).unwrap();
        let c = rmap_certificate(&sys, 10, 64).unwrap();
        assert_eq!(c.expansion_inf, 2.0);
        assert_eq!(c.distortion_k, 1.0);
        for b in &c.branches {
            assert_eq!(b.min_derivative, 2f64.powi(b.return_time as i32));
            assert_eq!(b.max_derivative, b.min_derivative);
        }
        assert_eq!(c.branches_checked, 10);

        let full = InducedSystem::new(doubling(), IntervalSet::full(), 100).unwrap();
        let c = rmap_certificate(&full, 10, 64).unwrap();
        assert_eq!((c.expansion_inf, c.distortion_k), (2.0, 1.0));
        assert_eq!(c.weight_tail[0], 0.5);
    }

    #[test]
    fn lsv_certificate() {
        let sys = InducedSystem::new(lsv(), IntervalSet::interval(0.5, 1.0).unwrap(), 1000).unwrap();
        let c = rmap_certificate(&sys, 30, 64).unwrap();
        assert!(c.expansion_inf > 1.0);
        assert!(c.distortion_k.is_finite() && c.distortion_k > 1.0);
        let inc = c.weight_increments();
        for w in inc.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(c.variation_estimate.is_finite());

        // grid density stability
        let c2 = rmap_certificate(&sys, 30, 128).unwrap();
        assert!((c2.expansion_inf / c.expansion_inf - 1.0).abs() < 0.01);
        assert!((c2.distortion_k / c.distortion_k - 1.0).abs() < 0.01);
    }
}
