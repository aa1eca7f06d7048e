//! Piecewise-monotone interval maps.
//!
//! A [`PiecewiseMap`] is an ordered list of half-open branch domains `[lo, hi)`
//! covering `[0,1)`; the right endpoint `1` belongs to the last branch. With this
//! convention every point of `[0,1]` is evaluated deterministically, including
//! the points of the singular set.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Below this start points are rejected: escape from the neutral point of
/// `lsv_alpha` is too slow to sample reliably.
pub const MIN_TYPICAL_START: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchFn {
    /// `slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `a * x * (1 - x)`
    Logistic { a: f64 },
    /// `x * (1 + 2^alpha x^alpha)`, the left branch of the parabolic family.
    NeutralLeft { alpha: f64, coef: f64 },
}

impl BranchFn {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BranchFn::Affine { slope, intercept } => slope * x + intercept,
            BranchFn::Logistic { a } => a * x * (1.0 - x),
            BranchFn::NeutralLeft { alpha, coef } => x * (1.0 + coef * x.powf(alpha)),
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            BranchFn::Affine { slope, .. } => slope,
            BranchFn::Logistic { a } => a * (1.0 - 2.0 * x),
            BranchFn::NeutralLeft { alpha, coef } => 1.0 + (1.0 + alpha) * coef * x.powf(alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub f: BranchFn,
    pub increasing: bool,
}

impl Branch {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Doubling,
    Tent,
    Logistic,
    LsvAlpha,
    PiecewiseLinearMarkov,
}

impl MapKind {
    pub fn name(&self) -> &'static str {
        match self {
            MapKind::Doubling => "doubling",
            MapKind::Tent => "tent",
            MapKind::Logistic => "logistic",
            MapKind::LsvAlpha => "lsv_alpha",
            MapKind::PiecewiseLinearMarkov => "piecewise_linear_markov",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseMap {
    pub label: String,
    pub kind: MapKind,
    pub params: Vec<f64>,
    pub branches: Vec<Branch>,
    /// Branch endpoints and critical points.
    pub singular: Vec<f64>,
    pub critical: Vec<f64>,
    /// Affine branches with power-of-two slopes: floating iteration shifts
    /// the mantissa and collapses onto a dyadic grid, so long orbits refresh
    /// the lowest bit (see [`Dithered`]).
    pub exact_shift: bool,
}

impl fmt::Display for PiecewiseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub start: f64,
    pub points: Vec<f64>,
}

impl Orbit {
    /// Number of steps taken (`points.len() - 1`).
    pub fn length(&self) -> usize {
        self.points.len() - 1
    }
}

impl PiecewiseMap {
    /// Builds a map from explicit branches and validates the partition.
    pub fn from_branches(
        label: impl Into<String>,
        kind: MapKind,
        params: Vec<f64>,
        branches: Vec<Branch>,
        critical: Vec<f64>,
    ) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidParameter("map has no branches".into()));
        }
        if branches[0].lo != 0.0 || branches[branches.len() - 1].hi != 1.0 {
            return Err(Error::InvalidParameter("branch domains must cover [0,1]".into()));
        }
        for w in branches.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::InvalidParameter(format!(
                    "branch domains must be contiguous: {} != {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        for b in &branches {
            if !(b.lo < b.hi) {
                return Err(Error::InvalidParameter(format!("empty branch [{}, {})", b.lo, b.hi)));
            }
        }
        let mut singular: Vec<f64> = branches.iter().map(|b| b.lo).collect();
        singular.push(1.0);
        singular.extend(critical.iter().copied());
        singular.sort_by(f64::total_cmp);
        singular.dedup();
        let exact_shift = branches.iter().all(|b| match b.f {
            BranchFn::Affine { slope, .. } => {
                let l = slope.abs().log2();
                l.is_finite() && l.fract() == 0.0
            }
            _ => false,
        });
        Ok(PiecewiseMap { label: label.into(), kind, params, branches, singular, critical, exact_shift })
    }

    #[inline]
    pub fn branch_index(&self, x: f64) -> usize {
        let i = self.branches.partition_point(|b| b.lo <= x);
        i.saturating_sub(1)
    }

    pub fn branch_at(&self, x: f64) -> &Branch {
        &self.branches[self.branch_index(x)]
    }

    /// `T(x)` for `x` already known to lie in `[0,1]`.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        let y = self.branches[self.branch_index(x)].f.eval(x);
        y.clamp(0.0, 1.0)
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.apply(x))
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.branches[self.branch_index(x)].f.deriv(x))
    }

    #[inline]
    pub(crate) fn derivative_unchecked(&self, x: f64) -> f64 {
        self.branches[self.branch_index(x)].f.deriv(x)
    }

    pub fn is_singular(&self, x: f64) -> bool {
        self.singular.contains(&x)
    }

    /// `n` iterates of `x`. Landing exactly on a singular point is an error.
    pub fn orbit(&self, x: f64, n: usize) -> Result<Orbit> {
        check_domain(x)?;
        let mut points = Vec::with_capacity(n + 1);
        points.push(x);
        let mut y = x;
        for k in 1..=n {
            y = self.apply(y);
            if self.is_singular(y) {
                return Err(Error::OrbitHitsSingularSet(k));
            }
            points.push(y);
        }
        Ok(Orbit { start: x, points })
    }

    pub fn default_burn_in(&self) -> u64 {
        match self.kind {
            MapKind::LsvAlpha => 100_000,
            _ => 10_000,
        }
    }

    /// Textual form accepted by [`parse_map_spec`], e.g. `lsv_alpha(0.5)`.
    pub fn spec_string(&self) -> String {
        if self.params.is_empty() {
            self.kind.name().to_string()
        } else {
            let ps: Vec<String> = self.params.iter().map(|p| format!("{p:?}")).collect();
            format!("{}({})", self.kind.name(), ps.join(","))
        }
    }
}

fn check_domain(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfDomain(x))
    }
}

fn affine(lo: f64, hi: f64, slope: f64, intercept: f64) -> Branch {
    Branch { lo, hi, f: BranchFn::Affine { slope, intercept }, increasing: slope > 0.0 }
}

/// Constructs one of the built-in maps.
///
/// * `doubling` : `2x mod 1`
/// * `tent` : `1 - |2x - 1|`
/// * `logistic(a)` : `a x (1-x)`, `a` in `(0, 4]`
/// * `lsv_alpha(alpha)` : `x(1 + 2^alpha x^alpha)` on `[0,1/2)`, `2x - 1` otherwise
/// * `piecewise_linear_markov(l0,r0,s0,c0, l1,r1,s1,c1, ...)` : affine rows
pub fn builtin(name: &str, params: &[f64]) -> Result<PiecewiseMap> {
    let expect = |n: usize| -> Result<()> {
        if params.len() == n {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} takes {n} parameter(s), got {}", params.len())))
        }
    };
    match name {
        "doubling" => {
            expect(0)?;
            PiecewiseMap::from_branches(
                "doubling",
                MapKind::Doubling,
                vec![],
                vec![affine(0.0, 0.5, 2.0, 0.0), affine(0.5, 1.0, 2.0, -1.0)],
                vec![],
            )
        }
        "tent" => {
            expect(0)?;
            PiecewiseMap::from_branches(
                "tent",
                MapKind::Tent,
                vec![],
                vec![affine(0.0, 0.5, 2.0, 0.0), affine(0.5, 1.0, -2.0, 2.0)],
                vec![0.5],
            )
        }
        "logistic" => {
            expect(1)?;
            let a = params[0];
            if !(a > 0.0 && a <= 4.0) {
                return Err(Error::InvalidParameter(format!("logistic parameter must lie in (0,4], got {a}")));
            }
            let f = BranchFn::Logistic { a };
            PiecewiseMap::from_branches(
                format!("logistic({a:?})"),
                MapKind::Logistic,
                vec![a],
                vec![
                    Branch { lo: 0.0, hi: 0.5, f, increasing: true },
                    Branch { lo: 0.5, hi: 1.0, f, increasing: false },
                ],
                vec![0.5],
            )
        }
        "lsv_alpha" => {
            expect(1)?;
            let alpha = params[0];
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidParameter(format!("lsv_alpha parameter must lie in (0,1), got {alpha}")));
            }
            PiecewiseMap::from_branches(
                format!("lsv_alpha({alpha:?})"),
                MapKind::LsvAlpha,
                vec![alpha],
                vec![
                    Branch {
                        lo: 0.0,
                        hi: 0.5,
                        f: BranchFn::NeutralLeft { alpha, coef: 2f64.powf(alpha) },
                        increasing: true,
                    },
                    affine(0.5, 1.0, 2.0, -1.0),
                ],
                vec![],
            )
        }
        "piecewise_linear_markov" => {
            if params.is_empty() || !params.len().is_multiple_of(4) {
                return Err(Error::InvalidParameter(
                    "piecewise_linear_markov takes rows of (left, right, slope, intercept)".into(),
                ));
            }
            let rows: Vec<[f64; 4]> = params.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            piecewise_linear_markov(&rows)
        }
        other => Err(Error::UnknownMap(other.to_string())),
    }
}

/// Affine Markov map from `(left, right, slope, intercept)` rows. The image of
/// every branch must be a union of partition intervals.
pub fn piecewise_linear_markov(rows: &[[f64; 4]]) -> Result<PiecewiseMap> {
    const TOL: f64 = 1e-12;
    let mut branches = Vec::with_capacity(rows.len());
    for &[lo, hi, slope, intercept] in rows {
        if slope == 0.0 || !slope.is_finite() {
            return Err(Error::InvalidParameter(format!("branch [{lo}, {hi}) has slope {slope}")));
        }
        branches.push(affine(lo, hi, slope, intercept));
    }
    let mut points: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    points.push(1.0);
    for b in &branches {
        let (a, c) = (b.f.eval(b.lo), b.f.eval(b.hi));
        for y in [a, c] {
            if !(-TOL..=1.0 + TOL).contains(&y) {
                return Err(Error::InvalidParameter(format!("branch [{}, {}) maps outside [0,1]", b.lo, b.hi)));
            }
            if !points.iter().any(|p| (p - y).abs() <= TOL) {
                return Err(Error::InvalidParameter(format!(
                    "branch [{}, {}) image endpoint {y} is not a partition point",
                    b.lo, b.hi
                )));
            }
        }
    }
    let params = rows.iter().flatten().copied().collect();
    PiecewiseMap::from_branches("piecewise_linear_markov", MapKind::PiecewiseLinearMarkov, params, branches, vec![])
}

/// Parses `name`, `name()` or `name(p1, p2, ...)`.
pub fn parse_map_spec(spec: &str) -> Result<PiecewiseMap> {
    let spec = spec.trim();
    let (name, params) = match spec.find('(') {
        None => (spec, Vec::new()),
        Some(open) => {
            let close = spec
                .rfind(')')
                .filter(|&c| c > open && c == spec.len() - 1)
                .ok_or_else(|| Error::Config(format!("malformed map spec `{spec}`")))?;
            let inner = &spec[open + 1..close];
            let params = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad parameter `{p}` in `{spec}`")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            (spec[..open].trim(), params)
        }
    };
    builtin(name, &params)
}

/// A source of successive iterates.
pub trait Dynamics {
    fn map(&self) -> &PiecewiseMap;
    fn advance(&mut self, x: f64) -> f64;
}

/// Plain floating-point iteration.
#[derive(Clone, Copy)]
pub struct Exact<'a>(pub &'a PiecewiseMap);

impl Dynamics for Exact<'_> {
    fn map(&self) -> &PiecewiseMap {
        self.0
    }

    #[inline]
    fn advance(&mut self, x: f64) -> f64 {
        self.0.apply(x)
    }
}

/// Iteration for long μ-typical orbits.
///
/// For maps with `exact_shift` set, every iterate gets a fresh random bit at
/// `2^-53`. Points stay on the `2^-53` grid, so for the doubling map this is
/// exactly the shift on an infinite random binary expansion viewed through a
/// 53-bit window. Other maps are iterated unchanged.
#[derive(Clone)]
pub struct Dithered<'a> {
    map: &'a PiecewiseMap,
    rng: ChaCha8Rng,
    bits: u64,
    left: u32,
}

const LOW_BIT: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

impl<'a> Dithered<'a> {
    pub fn new(map: &'a PiecewiseMap, rng: ChaCha8Rng) -> Self {
        Dithered { map, rng, bits: 0, left: 0 }
    }

    /// A stream keyed by `(seed, stage, index)`.
    pub fn stream(map: &'a PiecewiseMap, seed: u64, stage: &str, index: u64) -> Self {
        Self::new(map, rng::stream(seed, stage, index))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// A start point drawn uniformly from `[MIN_TYPICAL_START, 1)` and pushed
    /// through `burn_in` iterates.
    pub fn typical_point(&mut self, burn_in: u64) -> f64 {
        let mut x: f64 = loop {
            let u: f64 = self.rng.gen();
            if u >= MIN_TYPICAL_START {
                break u;
            }
        };
        for _ in 0..burn_in {
            x = self.advance(x);
        }
        x
    }

    #[inline]
    fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.bits = self.rng.gen();
            self.left = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.left -= 1;
        b
    }
}

impl Dynamics for Dithered<'_> {
    fn map(&self) -> &PiecewiseMap {
        self.map
    }

    #[inline]
    fn advance(&mut self, x: f64) -> f64 {
        let y = self.map.apply(x);
        if self.map.exact_shift && self.next_bit() {
            let z = y + LOW_BIT;
            if z < 1.0 {
                return z;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doubling() -> PiecewiseMap {
        builtin("doubling", &[]).unwrap()
    }

    #[test]
    fn lsv_examples() {
        let m = builtin("lsv_alpha", &[0.5]).unwrap();
        assert_eq!(m.evaluate(0.75).unwrap(), 0.5);
        assert_eq!(m.evaluate(0.0).unwrap(), 0.0);
        assert_eq!(m.branches.len(), 2);
        assert_eq!(m.branches[0].hi, 0.5);
        assert_eq!(m.singular, vec![0.0, 0.5, 1.0]);
        assert!(m.evaluate(0.5 - 1e-12).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn lsv_alpha_one_formula() {
        // alpha = 1 sits outside the admissible range; check the branch formula directly.
        let f = BranchFn::NeutralLeft { alpha: 1.0, coef: 2.0 };
        assert_eq!(f.eval(0.25), 0.375);
        assert_eq!(f.deriv(0.25), 2.0);
    }

    #[test]
    fn derivatives() {
        assert_eq!(doubling().derivative(0.3).unwrap(), 2.0);
        let l = builtin("logistic", &[4.0]).unwrap();
        assert_eq!(l.derivative(0.5).unwrap(), 0.0);
        assert_eq!(l.critical, vec![0.5]);
    }

    #[test]
    fn orbits() {
        let o = doubling().orbit(0.2, 4).unwrap();
        assert_eq!(o.length(), 4);
        // 1/5 is not a dyadic rational; compare against exact rational iteration.
        let expected = [1.0 / 5.0, 2.0 / 5.0, 4.0 / 5.0, 3.0 / 5.0, 1.0 / 5.0];
        for (a, b) in o.points.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        let t = builtin("tent", &[]).unwrap();
        let o = t.orbit(0.4, 2).unwrap();
        assert_eq!(o.points[1], 0.8);
        assert!((o.points[2] - 0.4).abs() < 1e-15);
        let o = t.orbit(2.0 / 3.0, 3).unwrap();
        assert!(o.points.iter().all(|&p| (p - 2.0 / 3.0).abs() < 1e-15));
        let l = builtin("logistic", &[4.0]).unwrap();
        assert_eq!(l.orbit(0.75, 3).unwrap().points, vec![0.75; 4]);
    }

    #[test]
    fn orbit_landing_on_singular_set_is_reported() {
        // 1/8 -> 1/4 -> 1/2
        assert_eq!(doubling().orbit(0.125, 5), Err(Error::OrbitHitsSingularSet(2)));
    }

    #[test]
    fn logistic_critical_orbit() {
        let l = builtin("logistic", &[4.0]).unwrap();
        let mut c = 0.5;
        let mut orb = vec![c];
        for _ in 0..3 {
            c = l.evaluate(c).unwrap();
            orb.push(c);
        }
        assert_eq!(orb, vec![0.5, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn builtin_errors() {
        assert_eq!(builtin("nope", &[]), Err(Error::UnknownMap("nope".into())));
        assert!(matches!(builtin("lsv_alpha", &[1.5]), Err(Error::InvalidParameter(_))));
        assert!(matches!(builtin("lsv_alpha", &[0.0]), Err(Error::InvalidParameter(_))));
        assert!(matches!(builtin("logistic", &[]), Err(Error::InvalidParameter(_))));
        assert!(matches!(doubling().evaluate(1.5), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(parse_map_spec("lsv_alpha(0.5)").unwrap().kind, MapKind::LsvAlpha);
        assert_eq!(parse_map_spec(" doubling ").unwrap().kind, MapKind::Doubling);
        assert_eq!(parse_map_spec("tent()").unwrap().kind, MapKind::Tent);
        assert_eq!(parse_map_spec("logistic(4.0)").unwrap().params, vec![4.0]);
        assert!(parse_map_spec("logistic(4.0").is_err());
        assert!(parse_map_spec("logistic(x)").is_err());
        let m = parse_map_spec("piecewise_linear_markov(0,0.5,1,0.5, 0.5,1,2,-1)").unwrap();
        assert_eq!(m.evaluate(0.25).unwrap(), 0.75);
        assert!(m.exact_shift);
        assert_eq!(parse_map_spec(&m.spec_string()).unwrap(), m);
    }

    #[test]
    fn markov_validation() {
        // image endpoint 0.3 is not a partition point
        assert!(piecewise_linear_markov(&[[0.0, 0.5, 0.6, 0.0], [0.5, 1.0, 2.0, -1.0]]).is_err());
        assert!(piecewise_linear_markov(&[[0.0, 0.4, 2.5, 0.0], [0.5, 1.0, 2.0, -1.0]]).is_err());
    }

    #[test]
    fn dithered_doubling_does_not_collapse() {
        let m = doubling();
        let mut d = Dithered::stream(&m, 1, "test", 0);
        let mut x = d.typical_point(0);
        let mut below_half = 0;
        for _ in 0..100_000 {
            x = d.advance(x);
            if x < 0.5 {
                below_half += 1;
            }
        }
        assert!((below_half as f64 / 1e5 - 0.5).abs() < 0.01);
        // the plain iteration sticks at 0 after at most 53 doublings
        let mut y = 0.3141592653589793;
        for _ in 0..60 {
            y = m.apply(y);
        }
        assert_eq!(y, 0.0);
    }

    fn builtins() -> Vec<PiecewiseMap> {
        vec![
            doubling(),
            builtin("tent", &[]).unwrap(),
            builtin("logistic", &[4.0]).unwrap(),
            builtin("lsv_alpha", &[0.5]).unwrap(),
            builtin("lsv_alpha", &[0.2]).unwrap(),
            builtin("piecewise_linear_markov", &[0.0, 0.5, 1.0, 0.5, 0.5, 1.0, 2.0, -1.0]).unwrap(),
        ]
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-7;
        for m in builtins() {
            for b in &m.branches {
                for i in 1..1000 {
                    let x = b.lo + (b.hi - b.lo) * i as f64 / 1000.0;
                    if x - h < b.lo || x + h >= b.hi {
                        continue;
                    }
                    let d = m.derivative(x).unwrap();
                    let fd = (b.f.eval(x + h) - b.f.eval(x - h)) / (2.0 * h);
                    assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()), "{}: x={x} d={d} fd={fd}", m.label);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_on_branches(u in 0.0f64..1.0, v in 0.0f64..1.0, which in 0usize..6) {
            let m = &builtins()[which];
            for b in &m.branches {
                let x = b.lo + (b.hi - b.lo) * u.min(v);
                let y = b.lo + (b.hi - b.lo) * u.max(v);
                prop_assume!(x < y && y < b.hi);
                let (fx, fy) = (m.evaluate(x).unwrap(), m.evaluate(y).unwrap());
                if b.increasing { prop_assert!(fy >= fx) } else { prop_assert!(fy <= fx) }
            }
        }

        #[test]
        fn orbit_composes_evaluate(x in 0.001f64..0.999, n in 1usize..60, which in 0usize..6) {
            let m = &builtins()[which];
            if let Ok(o) = m.orbit(x, n) {
                let mut y = x;
                for k in 0..=n {
                    prop_assert_eq!(o.points[k], y);
                    y = m.evaluate(y).unwrap();
                }
            }
        }

        #[test]
        fn values_stay_in_unit_interval(x in 0.0f64..=1.0, which in 0usize..6) {
            let y = builtins()[which].evaluate(x).unwrap();
            prop_assert!((0.0..=1.0).contains(&y));
        }
    }
}
