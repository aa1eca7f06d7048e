//! Return and hitting time statistics.
//!
//! Samples are normalized by the invariant mass of the target set and
//! compared with the exponential law through their empirical survival
//! functions.

mod hsv;
mod sampling;
mod sandwich;
mod visits;

pub use hsv::{hsv_quantities, HsvReport};
pub use sampling::{
    sample_hitting_times, sample_hitting_times_with, sample_return_times, sample_return_times_with, samples_to_csv,
    ReturnSample, SamplingMode, SamplingOptions,
};
pub use sandwich::{sandwich_check, SandwichReport, SandwichSample};
pub use visits::{poisson_fit, visit_counts, visits_to_csv, PoissonFit, VisitHistogram};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inducing::{first_return_time, ReturnTime};
use crate::interval::IntervalSet;
use crate::maps::PiecewiseMap;

/// Empirical survival function `t ↦ #{T_i > t}/n` of the uncensored
/// normalized times, with its distance to `e^{-t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfReport {
    /// Sorted normalized times.
    pub times: Vec<f64>,
    /// `survival[i]` is the survival just after `times[i]`.
    pub survival: Vec<f64>,
    pub ks_distance: f64,
    /// Where the distance to `e^{-t}` is attained.
    pub ks_location: f64,
    pub n_effective: usize,
    pub censored_fraction: f64,
}

impl EdfReport {
    pub fn from_times(mut times: Vec<f64>, censored: usize) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::AllCensored);
        }
        times.sort_by(f64::total_cmp);
        let n = times.len();
        let nf = n as f64;
        let mut survival = vec![0.0; n];
        let mut ks = 0.0f64;
        let mut loc = times[0];
        let mut i = 0;
        while i < n {
            let t = times[i];
            let mut j = i;
            while j < n && times[j] == t {
                j += 1;
            }
            let before = (n - i) as f64 / nf;
            let after = (n - j) as f64 / nf;
            let exact = (-t).exp();
            for v in &mut survival[i..j] {
                *v = after;
            }
            let d = (before - exact).abs().max((after - exact).abs());
            if d > ks {
                ks = d;
                loc = t;
            }
            i = j;
        }
        Ok(EdfReport {
            times,
            survival,
            ks_distance: ks,
            ks_location: loc,
            n_effective: n,
            censored_fraction: censored as f64 / (n + censored) as f64,
        })
    }

    /// Survival at `t` (right-continuous).
    pub fn survival_at(&self, t: f64) -> f64 {
        let above = self.times.len() - self.times.partition_point(|&v| v <= t);
        above as f64 / self.n_effective as f64
    }

    /// Left limit of the survival at `t`.
    pub fn survival_before(&self, t: f64) -> f64 {
        let above = self.times.len() - self.times.partition_point(|&v| v < t);
        above as f64 / self.n_effective as f64
    }

    pub fn mean(&self) -> f64 {
        self.times.iter().sum::<f64>() / self.n_effective as f64
    }
}

pub fn edf(samples: &[ReturnSample]) -> Result<EdfReport> {
    let times: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.normalized).collect();
    let censored = samples.len() - times.len();
    EdfReport::from_times(times, censored)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevCheck {
    pub ok: bool,
    pub bound: f64,
    /// Largest `t·S(t⁻)` over jump points, and where it occurs.
    pub worst_value: f64,
    pub worst_t: f64,
}

/// Checks `t·S(t) ≤ 1 + 5/√n` for every `t`; between jumps `t·S(t)` increases,
/// so the left limits at jump points are the worst cases.
pub fn chebyshev_check(report: &EdfReport) -> ChebyshevCheck {
    let bound = 1.0 + 5.0 / (report.n_effective as f64).sqrt();
    let n = report.n_effective as f64;
    let (mut worst_value, mut worst_t) = (0.0, 0.0);
    for (i, &t) in report.times.iter().enumerate() {
        if i > 0 && report.times[i - 1] == t {
            continue;
        }
        let v = t * (report.times.len() - i) as f64 / n;
        if v > worst_value {
            worst_value = v;
            worst_t = t;
        }
    }
    ChebyshevCheck { ok: worst_value <= bound, bound, worst_value, worst_t }
}

/// Smallest first-return time over `u`, from a grid scan refined by bisection
/// wherever neighbouring grid points disagree.
pub fn short_return(map: &PiecewiseMap, u: &IntervalSet, n_max_scan: u64, grid: usize) -> Result<u64> {
    let grid = grid.max(2);
    let time = |x: f64| -> Result<u64> {
        Ok(match first_return_time(map, u, x, n_max_scan)? {
            ReturnTime::Returned(n) => n,
            ReturnTime::Censored(_) => u64::MAX,
        })
    };
    let mut best = u64::MAX;
    for c in u.components() {
        let h = c.length() / grid as f64;
        let xs: Vec<f64> = (0..grid).map(|i| c.lo + i as f64 * h).collect();
        let ts = xs.iter().map(|&x| time(x)).collect::<Result<Vec<_>>>()?;
        best = best.min(ts.iter().copied().min().unwrap_or(u64::MAX));
        for i in 0..grid {
            let (a, ta) = (xs[i], ts[i]);
            let (b, tb) =
                if i + 1 < grid { (xs[i + 1], ts[i + 1]) } else { (c.hi.next_down(), time(c.hi.next_down())?) };
            best = best.min(tb);
            if ta != tb {
                best = best.min(bisect_min(&time, a, ta, b, tb, 60)?);
            }
        }
    }
    if best == u64::MAX {
        return Err(Error::Censored(n_max_scan));
    }
    Ok(best)
}

fn bisect_min<F: Fn(f64) -> Result<u64>>(
    time: &F,
    mut a: f64,
    ta: u64,
    mut b: f64,
    tb: u64,
    depth: u32,
) -> Result<u64> {
    let mut best = ta.min(tb);
    let mut ta = ta;
    for _ in 0..depth {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let tm = time(m)?;
        best = best.min(tm);
        if tm != ta {
            b = m;
        } else {
            a = m;
            ta = tm;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use crate::rng;
    use rand::Rng;

    fn naive_ks(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mut sup = 0.0f64;
        for &t in values {
            let after = values.iter().filter(|&&v| v > t).count() as f64 / n;
            let before = values.iter().filter(|&&v| v >= t).count() as f64 / n;
            let e = (-t).exp();
            sup = sup.max((after - e).abs()).max((before - e).abs());
        }
        sup
    }

    #[test]
    fn ks_examples() {
        let r = EdfReport::from_times(vec![std::f64::consts::LN_2], 0).unwrap();
        assert!((r.ks_distance - 0.5).abs() < 1e-15);
        let r = EdfReport::from_times(vec![10.0; 7], 0).unwrap();
        assert!((r.ks_distance - (1.0 - (-10.0f64).exp())).abs() < 1e-15);
        assert_eq!(r.survival, vec![0.0; 7]);
        assert_eq!(EdfReport::from_times(vec![], 3), Err(Error::AllCensored));
    }

    #[test]
    fn ks_of_exponential_draws() {
        let mut g = rng::stream(5, "test", 0);
        let v: Vec<f64> = (0..100_000).map(|_| -(1.0 - g.gen::<f64>()).ln()).collect();
        let r = EdfReport::from_times(v, 0).unwrap();
        assert!(r.ks_distance <= 0.01, "{}", r.ks_distance);
        assert!((r.mean() - 1.0).abs() < 5.0 / (1e5f64).sqrt());
        assert!(chebyshev_check(&r).ok);
    }

    #[test]
    fn ks_matches_naive_on_subsets() {
        let mut g = rng::stream(6, "test", 0);
        for n in [1usize, 2, 17, 300, 1000] {
            // integer-valued times produce ties
            let v: Vec<f64> = (0..n).map(|_| (g.gen::<f64>() * 40.0).floor() / 16.0).collect();
            let r = EdfReport::from_times(v.clone(), 0).unwrap();
            assert!((r.ks_distance - naive_ks(&v)).abs() < 1e-12, "n={n}");
            // no grid point beats the jump-point supremum
            for k in 0..2000 {
                let t = k as f64 * 0.002;
                assert!((r.survival_at(t) - (-t).exp()).abs() <= r.ks_distance + 1e-12);
            }
        }
    }

    #[test]
    fn survival_shape() {
        let r = EdfReport::from_times(vec![0.5, 1.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(r.survival, vec![0.75, 0.25, 0.25, 0.0]);
        assert_eq!(r.survival_at(0.0), 1.0);
        assert_eq!(r.survival_at(1.0), 0.25);
        assert_eq!(r.survival_before(1.0), 0.75);
        assert_eq!(r.censored_fraction, 0.2);
        assert!(r.survival.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn chebyshev_examples() {
        let exact: Vec<f64> = (1..10_000).map(|i| -(1.0 - i as f64 / 10_000.0).ln()).collect();
        let c = chebyshev_check(&EdfReport::from_times(exact, 0).unwrap());
        assert!(c.ok);
        assert!(c.worst_value <= (-1.0f64).exp() + 1e-3);

        // mean 2 through a uniform law on [1.5, 2.5]: t·S(t⁻) = 1.5 at the first jump
        let shifted: Vec<f64> = (0..10_000).map(|i| 1.5 + i as f64 / 10_000.0).collect();
        let c = chebyshev_check(&EdfReport::from_times(shifted, 0).unwrap());
        assert!(!c.ok);
        assert_eq!((c.worst_t, c.worst_value), (1.5, 1.5));

        let c = chebyshev_check(&EdfReport::from_times(vec![2.0; 100], 0).unwrap());
        assert!(!c.ok);
        assert_eq!((c.worst_t, c.worst_value), (2.0, 2.0));
    }

    /// Exact `τ(U)` for the doubling map: the first `n` whose image
    /// `T^n U = [2^n a, 2^n b) mod 1` meets `U`.
    fn doubling_tau(lo: f64, hi: f64) -> u64 {
        for n in 1..64 {
            let s = (n as f64).exp2();
            if s * (hi - lo) >= 1.0 {
                return n;
            }
            let a = (s * lo) % 1.0;
            let b = a + s * (hi - lo);
            let hits = |x: f64, y: f64| x < hi && lo < y;
            if hits(a, b.min(1.0)) || (b > 1.0 && hits(0.0, b - 1.0)) {
                return n;
            }
        }
        unreachable!()
    }

    #[test]
    fn short_return_examples() {
        let d = builtin("doubling", &[]).unwrap();
        let quarter = IntervalSet::interval(0.0, 0.25).unwrap();
        assert_eq!(short_return(&d, &quarter, 100, 64).unwrap(), 1);
        assert_eq!(short_return(&d, &IntervalSet::full(), 100, 64).unwrap(), 1);

        let z = std::f64::consts::FRAC_1_SQRT_2;
        let r = 2f64.powi(-12);
        let ball = IntervalSet::ball(z, r).unwrap();
        let tau = short_return(&d, &ball, 1000, 4096).unwrap();
        assert!(tau >= 8);
        assert_eq!(tau, doubling_tau(z - r, z + r));

        for (c, r) in [(0.3, 1e-3), (0.123, 2e-4), (0.9, 1e-2), (0.55, 1e-3), (0.05, 4e-4)] {
            let ball = IntervalSet::ball(c, r).unwrap();
            assert_eq!(short_return(&d, &ball, 1000, 4096).unwrap(), doubling_tau(c - r, c + r), "{c} {r}");
        }
        let tiny = IntervalSet::ball(z, 1e-9).unwrap();
        assert_eq!(short_return(&d, &tiny, 5, 16), Err(Error::Censored(5)));
    }

    #[test]
    fn short_return_tent_fixed_point() {
        let t = builtin("tent", &[]).unwrap();
        let u = IntervalSet::ball(2.0 / 3.0, 1e-3).unwrap();
        assert_eq!(short_return(&t, &u, 1000, 1024).unwrap(), 1);
    }
}
