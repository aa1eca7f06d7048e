use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::maps::{Dithered, Dynamics, PiecewiseMap};
use crate::rng::DEFAULT_STREAMS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitHistogram {
    pub t: f64,
    pub window_len: u64,
    pub n_windows: u64,
    /// `counts[k]` windows saw exactly `k` visits.
    pub counts: Vec<u64>,
}

impl VisitHistogram {
    pub fn mean(&self) -> f64 {
        self.counts.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / self.n_windows as f64
    }
}

/// Visits to `u` in consecutive disjoint windows of `round(t/μ(U))` steps
/// along μ-typical orbits.
pub fn visit_counts(
    map: &PiecewiseMap,
    u: &IntervalSet,
    mu_u: f64,
    t: f64,
    n_windows: u64,
    seed: u64,
) -> Result<VisitHistogram> {
    if !(t > 0.0) || !(mu_u > 0.0) || n_windows == 0 {
        return Err(Error::InvalidParameter("need t > 0, μ(U) > 0 and at least one window".into()));
    }
    let window_len = ((t / mu_u).round() as u64).max(1);
    let streams = DEFAULT_STREAMS as u64;
    let burn_in = map.default_burn_in();
    let parts: Vec<Vec<u64>> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let q = n_windows / streams + u64::from(s < n_windows % streams);
            let mut dynamics = Dithered::stream(map, seed, "visits", s);
            let mut x = dynamics.typical_point(burn_in);
            let mut counts = Vec::new();
            for _ in 0..q {
                let mut k = 0usize;
                for _ in 0..window_len {
                    x = dynamics.advance(x);
                    k += usize::from(u.contains(x));
                }
                if counts.len() <= k {
                    counts.resize(k + 1, 0);
                }
                counts[k] += 1;
            }
            counts
        })
        .collect();
    let width = parts.iter().map(Vec::len).max().unwrap_or(0);
    let mut counts = vec![0u64; width];
    for p in parts {
        for (k, c) in p.into_iter().enumerate() {
            counts[k] += c;
        }
    }
    Ok(VisitHistogram { t, window_len, n_windows, counts })
}

/// `visits,windows,poisson_expected` rows.
pub fn visits_to_csv(h: &VisitHistogram) -> String {
    let poisson = Poisson::new(h.t).ok();
    let mut s = String::from("visits,windows,poisson_expected\n");
    for (k, &c) in h.counts.iter().enumerate() {
        let expected = poisson.as_ref().map_or(f64::NAN, |p| p.pmf(k as u64) * h.n_windows as f64);
        let _ = writeln!(s, "{k},{c},{expected:?}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    /// Windows with 0, 1, 2 and at least 3 visits.
    pub observed: [u64; 4],
    pub expected: [f64; 4],
    pub chi_square: f64,
    pub p_value: f64,
}

/// Pearson goodness of fit against Poisson(`t`) on the cells 0, 1, 2, ≥3.
pub fn poisson_fit(h: &VisitHistogram) -> Result<PoissonFit> {
    let law = Poisson::new(h.t).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut observed = [0u64; 4];
    for (k, &c) in h.counts.iter().enumerate() {
        observed[k.min(3)] += c;
    }
    let n = h.n_windows as f64;
    let p: [f64; 3] = [law.pmf(0), law.pmf(1), law.pmf(2)];
    let expected = [p[0] * n, p[1] * n, p[2] * n, (1.0 - p[0] - p[1] - p[2]) * n];
    let chi_square = observed.iter().zip(&expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum::<f64>();
    let dist = ChiSquared::new(3.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(PoissonFit { observed, expected, chi_square, p_value: dist.sf(chi_square) })
}
