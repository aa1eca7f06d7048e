//! Exact return and hitting laws for dyadic cylinders under the doubling map.
//!
//! Lebesgue measure is invariant and makes binary digits i.i.d. fair bits, so
//! `T^n x ∈ [w]` is the event that the digit string matches `w` at offset
//! `n`. The survival `P(τ > n)` is the non-absorption probability of a
//! pattern-matching automaton driven by fair coin flips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalSet;

/// The first `depth` binary digits of `z`.
pub fn cylinder_word(z: f64, depth: u32) -> Result<Vec<u8>> {
    if !(0.0..1.0).contains(&z) {
        return Err(Error::OutOfDomain(z));
    }
    if depth == 0 || depth > 52 {
        return Err(Error::InvalidParameter(format!("cylinder depth {depth} outside 1..=52")));
    }
    let mut x = z;
    Ok((0..depth)
        .map(|_| {
            x *= 2.0;
            if x >= 1.0 {
                x -= 1.0;
                1
            } else {
                0
            }
        })
        .collect())
}

/// Matching automaton over `{0,1}` for a word; state `k` means the last `k`
/// digits read are a prefix of the word, state `len` is a full match.
#[derive(Debug, Clone)]
struct Automaton {
    next: Vec<[usize; 2]>,
}

impl Automaton {
    fn new(word: &[u8]) -> Self {
        let k = word.len();
        let mut fail = vec![0usize; k];
        let mut j = 0;
        for i in 1..k {
            while j > 0 && word[i] != word[j] {
                j = fail[j - 1];
            }
            if word[i] == word[j] {
                j += 1;
            }
            fail[i] = j;
        }
        let mut next = vec![[0usize; 2]; k + 1];
        for s in 0..=k {
            for b in 0..2u8 {
                next[s][b as usize] = if s < k && word[s] == b {
                    s + 1
                } else if s == 0 {
                    0
                } else {
                    // fall back as if the last digit of the current match were dropped
                    let t = if s == k { fail[k - 1] } else { fail[s - 1] };
                    next[t][b as usize]
                };
            }
        }
        Automaton { next }
    }

    fn step(&self, dist: &[f64]) -> (Vec<f64>, f64) {
        let k = self.next.len() - 1;
        let mut out = vec![0.0; k + 1];
        let mut absorbed = 0.0;
        for (s, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for b in 0..2 {
                let t = self.next[s][b];
                if t == k {
                    absorbed += 0.5 * p;
                } else {
                    out[t] += 0.5 * p;
                }
            }
        }
        (out, absorbed)
    }
}

/// Law of a positive integer time, `pmf[n-1] = P(τ = n)`; mass beyond
/// `pmf.len()` is `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactLaw {
    pub mu: f64,
    pub pmf: Vec<f64>,
    pub tail: f64,
}

impl ExactLaw {
    /// `P(τ > n)`
    pub fn survival(&self, n: u64) -> f64 {
        let n = n as usize;
        if n >= self.pmf.len() {
            return self.tail;
        }
        self.tail + self.pmf[n..].iter().sum::<f64>()
    }

    /// `P(τ ≤ n)`
    pub fn cdf(&self, n: u64) -> f64 {
        self.pmf.iter().take(n as usize).sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// Atoms at `n·μ`, for comparison with normalized samples.
    pub fn normalized_atoms(&self) -> Vec<(f64, f64)> {
        self.pmf.iter().enumerate().map(|(i, &p)| ((i + 1) as f64 * self.mu, p)).collect()
    }
}

fn run_law(word: &[u8], start: Vec<f64>, tail_tol: f64, max_len: usize) -> ExactLaw {
    let aut = Automaton::new(word);
    let mut dist = start;
    let mut pmf = Vec::new();
    let mut alive: f64 = dist.iter().sum();
    while alive > tail_tol && pmf.len() < max_len {
        let (next, absorbed) = aut.step(&dist);
        pmf.push(absorbed);
        dist = next;
        alive = dist.iter().sum();
    }
    ExactLaw { mu: (-(word.len() as f64)).exp2(), pmf, tail: alive }
}

/// Law of the first return time to `[w]` for starts uniform on `[w]`.
pub fn cylinder_return_law(word: &[u8], tail_tol: f64, max_len: usize) -> ExactLaw {
    let k = word.len();
    let mut start = vec![0.0; k + 1];
    start[k] = 1.0;
    run_law(word, start, tail_tol, max_len)
}

/// Law of the first hitting time `min{n ≥ 1 : T^n x ∈ [w]}` for uniform `x`.
pub fn cylinder_hitting_law(word: &[u8], tail_tol: f64, max_len: usize) -> ExactLaw {
    let k = word.len();
    let aut = Automaton::new(word);
    // digits 0..k-1 are free; a match there is time 0 and does not count
    let mut start = vec![0.0; k + 1];
    start[0] = 1.0;
    for _ in 0..k {
        let mut out = vec![0.0; k + 1];
        for (s, &p) in start.iter().enumerate() {
            for b in 0..2 {
                out[aut.next[s][b]] += 0.5 * p;
            }
        }
        start = out;
    }
    run_law(word, start, tail_tol, max_len)
}

/// `μ_U(τ_U ≤ n_max)` by direct iteration of the left endpoints of all
/// depth-`depth` dyadic intervals. Exact when `U` is a union of dyadic
/// intervals of depth at most `depth − n_max`.
pub fn enumerate_short_returns(u: &IntervalSet, n_max: u32, depth: u32) -> Result<f64> {
    if depth > 30 || n_max > depth {
        return Err(Error::InvalidParameter("enumeration depth out of range".into()));
    }
    let cells = 1u64 << depth;
    let mut inside = 0u64;
    let mut early = 0u64;
    for j in 0..cells {
        let x = j as f64 / cells as f64;
        if !u.contains(x) {
            continue;
        }
        inside += 1;
        let mut y = x;
        for _ in 0..n_max {
            y = (2.0 * y) % 1.0;
            if u.contains(y) {
                early += 1;
                break;
            }
        }
    }
    if inside == 0 {
        return Err(Error::InvalidIntervalSet(format!("{u} contains no depth-{depth} cell")));
    }
    Ok(early as f64 / inside as f64)
}

/// `sup_t |F(t) − G(t)|` for two discrete laws given as `(point, mass)` atoms.
/// Missing mass is treated as lying beyond every atom.
pub fn sup_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut a: Vec<(f64, f64)> = a.to_vec();
    let mut b: Vec<(f64, f64)> = b.to_vec();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut sup = 0.0f64;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 == t {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == t {
            fb += b[j].1;
            j += 1;
        }
        sup = sup.max((fa - fb).abs());
    }
    sup
}

/// Equal-weight atoms for a sample.
pub fn empirical_atoms(values: &[f64]) -> Vec<(f64, f64)> {
    let w = 1.0 / values.len() as f64;
    values.iter().map(|&v| (v, w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `P(no match at offsets 1..=n)` by enumerating all digit strings.
    fn brute_survival(word: &[u8], n: usize, conditioned: bool) -> f64 {
        let k = word.len();
        let len = k + n;
        let mut count = 0u64;
        let mut total = 0u64;
        for bits in 0u64..(1 << len) {
            let d: Vec<u8> = (0..len).map(|i| ((bits >> (len - 1 - i)) & 1) as u8).collect();
            if conditioned && d[..k] != *word {
                continue;
            }
            total += 1;
            if (1..=n).all(|off| d[off..off + k] != *word) {
                count += 1;
            }
        }
        count as f64 / total as f64
    }

    #[test]
    fn words() {
        assert_eq!(cylinder_word(0.75, 3).unwrap(), vec![1, 1, 0]);
        assert_eq!(cylinder_word(std::f64::consts::FRAC_1_SQRT_2, 8).unwrap(), vec![1, 0, 1, 1, 0, 1, 0, 1]);
        assert!(cylinder_word(1.0, 3).is_err());
        assert!(cylinder_word(0.5, 0).is_err());
    }

    #[test]
    fn automaton_matches_enumeration() {
        for word in [vec![0, 0], vec![0, 1], vec![1, 0, 1], vec![1, 1, 0, 1], vec![0, 1, 0, 0, 1]] {
            let ret = cylinder_return_law(&word, 0.0, 10);
            let hit = cylinder_hitting_law(&word, 0.0, 10);
            for n in 0..=8 {
                let r = brute_survival(&word, n, true);
                let h = brute_survival(&word, n, false);
                assert!((ret.survival(n as u64) - r).abs() < 1e-14, "{word:?} n={n}");
                assert!((hit.survival(n as u64) - h).abs() < 1e-14, "{word:?} n={n}");
            }
        }
    }

    #[test]
    fn return_law_has_kac_mean() {
        let word = cylinder_word(std::f64::consts::FRAC_1_SQRT_2, 12).unwrap();
        let law = cylinder_return_law(&word, 1e-15, 1 << 20);
        assert!(law.tail < 1e-15);
        assert!((law.mean() - 4096.0).abs() < 1e-6);
    }

    #[test]
    fn short_return_enumeration() {
        let u = IntervalSet::interval(0.0, 0.25).unwrap();
        assert_eq!(enumerate_short_returns(&u, 2, 4).unwrap(), 0.5);
        assert_eq!(enumerate_short_returns(&u, 0, 4).unwrap(), 0.0);
        let law = cylinder_return_law(&[0, 0], 0.0, 4);
        assert_eq!(law.cdf(2), 0.5);
        assert_eq!(law.pmf[1], 0.0);
        // a deeper enumeration cannot change an exact answer
        assert_eq!(enumerate_short_returns(&u, 2, 10).unwrap(), 0.5);
    }

    #[test]
    fn sup_distance_of_steps() {
        let a = [(1.0, 0.5), (2.0, 0.5)];
        let b = [(1.0, 0.25), (3.0, 0.75)];
        assert_eq!(sup_distance(&a, &b), 0.75);
        assert_eq!(sup_distance(&a, &a), 0.0);
        assert_eq!(sup_distance(&empirical_atoms(&[1.0, 1.0]), &[(1.0, 1.0)]), 0.0);
    }
}
