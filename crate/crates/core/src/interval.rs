//! Finite unions of half-open subintervals of `[0,1]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || lo < 0.0 || hi > 1.0 {
            return Err(Error::InvalidIntervalSet(format!("[{lo}, {hi}) is not a subinterval of [0,1]")));
        }
        Ok(Interval { lo, hi })
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?})", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    components: Vec<Interval>,
    total_length: f64,
}

impl IntervalSet {
    /// Components must be sorted and pairwise disjoint (touching is allowed).
    pub fn new(components: Vec<Interval>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidIntervalSet("empty interval set".into()));
        }
        for c in &components {
            Interval::new(c.lo, c.hi)?;
        }
        for w in components.windows(2) {
            if w[0].hi > w[1].lo {
                return Err(Error::InvalidIntervalSet(format!(
                    "components {} and {} overlap or are unsorted",
                    w[0], w[1]
                )));
            }
        }
        let total_length = components.iter().map(Interval::length).sum();
        Ok(IntervalSet { components, total_length })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Interval::new(lo, hi)?])
    }

    /// `[0,1)`, the whole space up to the null set `{1}`.
    pub fn full() -> Self {
        Self::interval(0.0, 1.0).expect("unit interval")
    }

    /// The ball `U_r(z) = [z - r, z + r)` clipped to `[0,1]`.
    pub fn ball(center: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidIntervalSet(format!("radius must be positive, got {radius}")));
        }
        if !(0.0..=1.0).contains(&center) {
            return Err(Error::OutOfDomain(center));
        }
        Self::interval((center - radius).max(0.0), (center + radius).min(1.0))
    }

    /// The dyadic interval of depth `depth` that contains `z`.
    pub fn dyadic_cylinder(z: f64, depth: u32) -> Result<Self> {
        if !(0.0..1.0).contains(&z) {
            return Err(Error::OutOfDomain(z));
        }
        let scale = (depth as f64).exp2();
        let k = (z * scale).floor();
        Self::interval(k / scale, (k + 1.0) / scale)
    }

    pub fn components(&self) -> &[Interval] {
        &self.components
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        if let [only] = self.components.as_slice() {
            return only.contains(x);
        }
        let i = self.components.partition_point(|c| c.lo <= x);
        i > 0 && self.components[i - 1].contains(x)
    }

    pub fn is_full(&self) -> bool {
        self.components.len() == 1 && self.components[0].lo == 0.0 && self.components[0].hi == 1.0
    }

    /// Whether every component lies inside some component of `other`.
    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        self.components.iter().all(|c| other.components.iter().any(|o| o.lo <= c.lo && c.hi <= o.hi))
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.components.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(" u "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_and_membership() {
        let s = IntervalSet::new(vec![Interval { lo: 0.0, hi: 0.25 }, Interval { lo: 0.5, hi: 0.75 }]).unwrap();
        assert_eq!(s.total_length(), 0.5);
        assert!(s.contains(0.0));
        assert!(!s.contains(0.25));
        assert!(s.contains(0.6));
        assert!(!s.contains(0.75));
        assert!(!s.contains(0.9));
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(IntervalSet::new(vec![]).is_err());
        assert!(IntervalSet::interval(0.5, 0.5).is_err());
        assert!(IntervalSet::interval(-0.1, 0.5).is_err());
        assert!(IntervalSet::new(vec![Interval { lo: 0.0, hi: 0.5 }, Interval { lo: 0.4, hi: 0.6 },]).is_err());
        assert!(IntervalSet::ball(0.5, 0.0).is_err());
    }

    #[test]
    fn balls_and_cylinders() {
        let b = IntervalSet::ball(0.01, 0.1).unwrap();
        assert_eq!(b.components()[0].lo, 0.0);
        let c = IntervalSet::dyadic_cylinder(std::f64::consts::FRAC_1_SQRT_2, 12).unwrap();
        let iv = c.components()[0];
        assert_eq!(iv.length(), 2f64.powi(-12));
        assert!(iv.contains(std::f64::consts::FRAC_1_SQRT_2));
        assert!(c.is_subset_of(&IntervalSet::interval(0.5, 1.0).unwrap()));
        assert!(!IntervalSet::full().is_subset_of(&c));
    }
}
