//! Invariant measures and correlation decay.
//!
//! Birkhoff histograms along long orbits are the primary estimator of the
//! invariant measure; the Ulam discretization of the transfer operator is an
//! independent cross-check.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inducing::stderr_of_means;
use crate::interval::IntervalSet;
use crate::maps::{Dithered, Dynamics, PiecewiseMap};
use crate::rng::DEFAULT_STREAMS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Birkhoff,
    Ulam,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub n_samples: u64,
    pub kind: MeasureKind,
    #[serde(skip)]
    uniform: bool,
}

impl EmpiricalMeasure {
    /// Normalizes `weights` into a probability measure on the given bins.
    pub fn from_weights(bin_edges: Vec<f64>, weights: Vec<f64>, n_samples: u64, kind: MeasureKind) -> Result<Self> {
        if bin_edges.len() != weights.len() + 1 || weights.is_empty() {
            return Err(Error::InvalidParameter("bin edges and masses are misaligned".into()));
        }
        if bin_edges[0] != 0.0 || *bin_edges.last().unwrap() != 1.0 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("bin edges must increase from 0 to 1".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameter("masses must be nonnegative with positive total".into()));
        }
        let n = weights.len();
        let uniform = bin_edges.iter().enumerate().all(|(i, &e)| e == i as f64 / n as f64);
        Ok(EmpiricalMeasure {
            bin_edges,
            masses: weights.into_iter().map(|w| w / total).collect(),
            n_samples,
            kind,
            uniform,
        })
    }

    pub fn uniform_edges(n_bins: usize) -> Vec<f64> {
        (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect()
    }

    /// Lebesgue measure on `n_bins` equal bins.
    pub fn lebesgue(n_bins: usize) -> Self {
        Self::from_weights(Self::uniform_edges(n_bins), vec![1.0; n_bins], 0, MeasureKind::Analytic)
            .expect("valid uniform bins")
    }

    /// Bin masses of an absolutely continuous measure given by its CDF.
    pub fn from_cdf<F: Fn(f64) -> f64>(n_bins: usize, cdf: F) -> Self {
        let edges = Self::uniform_edges(n_bins);
        let w = edges.windows(2).map(|e| (cdf(e[1]) - cdf(e[0])).max(0.0)).collect();
        Self::from_weights(edges, w, 0, MeasureKind::Analytic).expect("valid cdf")
    }

    pub fn n_bins(&self) -> usize {
        self.masses.len()
    }

    #[inline]
    pub fn bin_index(&self, x: f64) -> usize {
        let n = self.masses.len();
        if self.uniform {
            ((x * n as f64) as usize).min(n - 1)
        } else {
            self.bin_edges.partition_point(|&e| e <= x).clamp(1, n) - 1
        }
    }

    pub fn density(&self, i: usize) -> f64 {
        self.masses[i] / (self.bin_edges[i + 1] - self.bin_edges[i])
    }

    /// Mass of a set, treating the density as constant inside each bin.
    pub fn mass_of(&self, set: &IntervalSet) -> f64 {
        let mut total = 0.0;
        for c in set.components() {
            for i in 0..self.n_bins() {
                let (a, b) = (self.bin_edges[i], self.bin_edges[i + 1]);
                let overlap = c.hi.min(b) - c.lo.max(a);
                if overlap > 0.0 {
                    total += self.masses[i] * overlap / (b - a);
                }
            }
        }
        total
    }

    pub fn l1_distance(&self, other: &EmpiricalMeasure) -> Result<f64> {
        if self.bin_edges != other.bin_edges {
            return Err(Error::InvalidParameter("measures live on different bins".into()));
        }
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Integral of a per-bin observable.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.masses.iter().zip(values).map(|(m, v)| m * v).sum()
    }

    /// Bin midpoints, handy for building binned observables.
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// `bin_left,bin_right,mass` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,mass\n");
        for (i, m) in self.masses.iter().enumerate() {
            let _ = writeln!(s, "{:?},{:?},{:?}", self.bin_edges[i], self.bin_edges[i + 1], m);
        }
        s
    }
}

/// Normalized orbit histogram after `burn_in` steps.
pub fn birkhoff_measure(
    map: &PiecewiseMap,
    x0: f64,
    n: u64,
    burn_in: u64,
    n_bins: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    map.evaluate(x0)?;
    if n_bins == 0 || n == 0 {
        return Err(Error::InvalidParameter("need at least one bin and one sample".into()));
    }
    let mut dynamics = Dithered::stream(map, seed, "birkhoff", 0);
    let mut x = x0;
    for _ in 0..burn_in {
        x = dynamics.advance(x);
    }
    let mut counts = vec![0u64; n_bins];
    for _ in 0..n {
        counts[((x * n_bins as f64) as usize).min(n_bins - 1)] += 1;
        x = dynamics.advance(x);
    }
    EmpiricalMeasure::from_weights(
        EmpiricalMeasure::uniform_edges(n_bins),
        counts.into_iter().map(|c| c as f64).collect(),
        n,
        MeasureKind::Birkhoff,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub mass: f64,
    pub stderr: f64,
    pub n_steps: u64,
}

/// Birkhoff average of the indicator of `set` over independent typical orbits.
pub fn invariant_mass(map: &PiecewiseMap, set: &IntervalSet, n: u64, burn_in: u64, seed: u64) -> Result<MassEstimate> {
    const BATCHES: u64 = 25;
    let streams = DEFAULT_STREAMS as u64;
    let per = n / streams;
    if per < BATCHES {
        return Err(Error::InvalidParameter(format!("orbit budget {n} too small")));
    }
    let batch_len = per / BATCHES;
    let batches: Vec<Vec<f64>> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let mut dynamics = Dithered::stream(map, seed, "invariant_mass", s);
            let mut x = dynamics.typical_point(burn_in);
            (0..BATCHES)
                .map(|_| {
                    let mut hits = 0u64;
                    for _ in 0..batch_len {
                        x = dynamics.advance(x);
                        hits += u64::from(set.contains(x));
                    }
                    hits as f64 / batch_len as f64
                })
                .collect()
        })
        .collect();
    let means: Vec<f64> = batches.into_iter().flatten().collect();
    let mass = means.iter().sum::<f64>() / means.len() as f64;
    Ok(MassEstimate { mass, stderr: stderr_of_means(&means), n_steps: batch_len * BATCHES * streams })
}

/// Row-stochastic Ulam matrix, stored by rows as `(column, probability)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamOperator {
    pub n_bins: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl UlamOperator {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|(c, _)| *c == j).map_or(0.0, |(_, p)| *p)
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n_bins]; self.n_bins];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[i][j] = p;
            }
        }
        m
    }

    /// `v ↦ v P`
    pub fn push_forward(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        for (i, row) in self.rows.iter().enumerate() {
            let vi = v[i];
            if vi != 0.0 {
                for &(j, p) in row {
                    out[j] += vi * p;
                }
            }
        }
        out
    }

    /// Dense CSV up to 1024 bins, `row,col,value` triplets above.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        if self.n_bins <= 1024 {
            for row in self.dense() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
        } else {
            s.push_str("row,col,value\n");
            for (i, row) in self.rows.iter().enumerate() {
                for &(j, p) in row {
                    let _ = writeln!(s, "{i},{j},{p:?}");
                }
            }
        }
        s
    }
}

/// Maps `samples_per_bin` evenly spaced points of each bin and bins the images.
pub fn ulam_operator(map: &PiecewiseMap, n_bins: usize, samples_per_bin: usize) -> Result<UlamOperator> {
    if n_bins == 0 || samples_per_bin == 0 {
        return Err(Error::InvalidParameter("need at least one bin and one sample per bin".into()));
    }
    let nf = n_bins as f64;
    let rows = (0..n_bins)
        .into_par_iter()
        .map(|i| {
            let mut counts: Vec<(usize, u64)> = Vec::new();
            for k in 0..samples_per_bin {
                let x = (i as f64 + (k as f64 + 0.5) / samples_per_bin as f64) / nf;
                let y = map.apply(x);
                let j = ((y * nf) as usize).min(n_bins - 1);
                match counts.binary_search_by_key(&j, |c| c.0) {
                    Ok(pos) => counts[pos].1 += 1,
                    Err(pos) => counts.insert(pos, (j, 1)),
                }
            }
            counts.into_iter().map(|(j, c)| (j, c as f64 / samples_per_bin as f64)).collect()
        })
        .collect();
    Ok(UlamOperator { n_bins, rows })
}

/// Left fixed vector of the operator by power iteration from the uniform vector.
pub fn invariant_density(op: &UlamOperator, tol: f64, max_iters: usize) -> Result<EmpiricalMeasure> {
    let n = op.n_bins;
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..max_iters {
        let mut w = op.push_forward(&v);
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let diff: f64 = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        v = w;
        if diff < tol {
            return EmpiricalMeasure::from_weights(EmpiricalMeasure::uniform_edges(n), v, 0, MeasureKind::Ulam);
        }
    }
    Err(Error::NoConvergence(max_iters))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSequence {
    /// `C_n` for `n = 0..=n_max`.
    pub values: Vec<f64>,
    /// Standard deviation of a single `C_n` estimate under independence.
    pub noise: f64,
    pub orbit_len: u64,
}

/// Time-average estimates of `∫ φ∘Tⁿ ψ dμ − ∫φ dμ ∫ψ dμ` along typical orbits.
/// `phi` and `psi` hold one value per bin of `mu`.
pub fn correlation_sequence(
    map: &PiecewiseMap,
    mu: &EmpiricalMeasure,
    phi: &[f64],
    psi: &[f64],
    n_max: usize,
    orbit_len: u64,
    seed: u64,
) -> Result<CorrelationSequence> {
    if phi.len() != mu.n_bins() || psi.len() != mu.n_bins() {
        return Err(Error::InvalidParameter("observables must have one value per bin".into()));
    }
    let streams = DEFAULT_STREAMS as u64;
    let per = orbit_len / streams;
    if per <= n_max as u64 {
        return Err(Error::InvalidParameter("orbit too short for the requested lag".into()));
    }
    let burn_in = map.default_burn_in();
    let window = n_max + 1;

    struct Sums {
        lag: Vec<f64>,
        phi: f64,
        psi: f64,
        phi2: f64,
        psi2: f64,
        count: u64,
    }

    let parts: Vec<Sums> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let mut dynamics = Dithered::stream(map, seed, "correlation", s);
            let mut x = dynamics.typical_point(burn_in);
            let mut ring = vec![0.0; window];
            let mut sums = Sums { lag: vec![0.0; window], phi: 0.0, psi: 0.0, phi2: 0.0, psi2: 0.0, count: 0 };
            for k in 0..per as usize {
                let b = mu.bin_index(x);
                let (f, g) = (phi[b], psi[b]);
                ring[k % window] = g;
                if k >= n_max {
                    for (n, acc) in sums.lag.iter_mut().enumerate() {
                        *acc += f * ring[(k - n) % window];
                    }
                    sums.phi += f;
                    sums.phi2 += f * f;
                    sums.count += 1;
                }
                // psi is paired with the later phi values; count it over the same range
                if k + n_max < per as usize {
                    sums.psi += g;
                    sums.psi2 += g * g;
                }
                x = dynamics.advance(x);
            }
            sums
        })
        .collect();

    let count: u64 = parts.iter().map(|p| p.count).sum();
    let c = count as f64;
    let mean_phi = parts.iter().map(|p| p.phi).sum::<f64>() / c;
    let mean_psi = parts.iter().map(|p| p.psi).sum::<f64>() / c;
    let var_phi = (parts.iter().map(|p| p.phi2).sum::<f64>() / c - mean_phi * mean_phi).max(0.0);
    let var_psi = (parts.iter().map(|p| p.psi2).sum::<f64>() / c - mean_psi * mean_psi).max(0.0);
    let values = (0..window).map(|n| parts.iter().map(|p| p.lag[n]).sum::<f64>() / c - mean_phi * mean_psi).collect();
    Ok(CorrelationSequence { values, noise: (var_phi * var_psi / c).sqrt(), orbit_len: count })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub theta: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Least-squares fit of `log|C_n|` against `n` for `n >= 1`, stopping at the
/// first lag whose magnitude drops below three times the noise.
pub fn decay_rate(c: &CorrelationSequence) -> Result<DecayFit> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (n, &v) in c.values.iter().enumerate().skip(1) {
        if v.abs() < 3.0 * c.noise || v == 0.0 {
            break;
        }
        pts.push((n as f64, v.abs().ln()));
    }
    if pts.len() < 4 {
        return Err(Error::InsufficientDecay(pts.len()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(DecayFit { theta: slope.exp(), r_squared, points_used: pts.len() })
}
