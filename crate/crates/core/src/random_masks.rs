//! Random masks and random monotone edge orderings.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mask::{Mask, Position};
use crate::rng::{rng_from_seed, Rng};

/// Restarts allowed before [`sample_biregular`] gives up.
pub const MAX_RESTARTS: usize = 10_000;

/// Each position present independently with probability `p`.
pub fn sample_er(m: usize, n: usize, p: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut pos = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(p) {
                pos.push(Position::new(i, j));
            }
        }
    }
    Mask::new(m, n, pos)
}

/// A simple bipartite graph with every row of degree `d` and every column
/// of degree `d_prime`.
///
/// Stubs are paired one edge at a time, each time choosing a random
/// remaining row stub and column stub and rejecting pairs that would repeat
/// an edge. When no admissible pair is left the attempt restarts.
pub fn sample_biregular(m: usize, n: usize, d: usize, d_prime: usize, seed: u64) -> Result<Mask> {
    if m * d != n * d_prime {
        return Err(Error::InfeasibleDegrees(format!("{m}*{d} != {n}*{d_prime}")));
    }
    if d > n || d_prime > m {
        return Err(Error::InfeasibleDegrees(format!(
            "row degree {d} > {n} columns or column degree {d_prime} > {m} rows"
        )));
    }
    let mut rng = rng_from_seed(seed);
    for restart in 0..MAX_RESTARTS {
        if let Some(mask) = try_pairing(m, n, d, d_prime, &mut rng) {
            if restart > 0 {
                log::debug!("biregular sample needed {restart} restarts");
            }
            return Ok(mask);
        }
    }
    Err(Error::TooManyRestarts(MAX_RESTARTS))
}

fn try_pairing(m: usize, n: usize, d: usize, d_prime: usize, rng: &mut Rng) -> Option<Mask> {
    let mut row_stubs: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    let mut col_stubs: Vec<usize> = (0..n).flat_map(|j| std::iter::repeat_n(j, d_prime)).collect();
    let mut present = vec![false; m * n];
    let mut edges = Vec::with_capacity(m * d);
    let mut misses = 0;
    while !row_stubs.is_empty() {
        let a = rng.random_range(0..row_stubs.len());
        let b = rng.random_range(0..col_stubs.len());
        let (i, j) = (row_stubs[a], col_stubs[b]);
        if present[i * n + j] {
            misses += 1;
            if misses > 64 {
                let stuck = row_stubs.iter().all(|&i| col_stubs.iter().all(|&j| present[i * n + j]));
                if stuck {
                    return None;
                }
                misses = 0;
            }
            continue;
        }
        misses = 0;
        present[i * n + j] = true;
        edges.push(Position::new(i, j));
        row_stubs.swap_remove(a);
        col_stubs.swap_remove(b);
    }
    Some(Mask::new(m, n, edges).expect("in bounds"))
}

/// A permutation of all `m n` positions. Prefixes form a nested mask family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeOrdering {
    pub m: usize,
    pub n: usize,
    pub order: Vec<Position>,
    /// Index at which the prefix has a designated structure (`2 r n` for the
    /// regular orderings).
    pub marker: Option<usize>,
}

impl EdgeOrdering {
    /// The mask of the first `k` positions (clamped to `m n`).
    pub fn prefix(&self, k: usize) -> Mask {
        let k = k.min(self.order.len());
        Mask::new(self.m, self.n, self.order[..k].iter().copied()).expect("in bounds")
    }

    /// The prefix `marker + offset`, or `None` outside `0..=m n`.
    pub fn prefix_at_offset(&self, offset: i64) -> Option<Mask> {
        let k = self.marker? as i64 + offset;
        (0..=self.order.len() as i64).contains(&k).then(|| self.prefix(k as usize))
    }
}

/// A uniformly random order of all positions.
pub fn monotone_order(m: usize, n: usize, seed: u64) -> EdgeOrdering {
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<Position> = Mask::full(m, n).positions().to_vec();
    order.shuffle(&mut rng);
    EdgeOrdering {
        m,
        n,
        order,
        marker: None,
    }
}

fn with_complement(mask: &Mask, rng: &mut Rng, marker: usize) -> EdgeOrdering {
    let mut head = mask.positions().to_vec();
    head.shuffle(rng);
    let mut tail = mask.complement();
    tail.shuffle(rng);
    head.extend(tail);
    EdgeOrdering {
        m: mask.rows(),
        n: mask.cols(),
        order: head,
        marker: Some(marker),
    }
}

/// A random `2r`-regular `n x n` mask in random order, then the remaining
/// positions in random order.
pub fn regular_plus_order(n: usize, r: usize, seed: u64) -> Result<EdgeOrdering> {
    if 2 * r > n {
        return Err(Error::InvalidArgument(format!("2r = {} exceeds n = {n}", 2 * r)));
    }
    let mask = sample_biregular(n, n, 2 * r, 2 * r, crate::rng::derive_seed(seed, 0))?;
    let mut rng = rng_from_seed(crate::rng::derive_seed(seed, 1));
    Ok(with_complement(&mask, &mut rng, 2 * r * n))
}

/// Every row gets `2r` uniformly random columns (independently per row);
/// those positions come first in random order, then the rest.
pub fn rowwise_regular_order(n: usize, r: usize, seed: u64) -> Result<EdgeOrdering> {
    if 2 * r > n {
        return Err(Error::InvalidArgument(format!("2r = {} exceeds n = {n}", 2 * r)));
    }
    let mut rng = rng_from_seed(seed);
    let mut pos = Vec::with_capacity(2 * r * n);
    for i in 0..n {
        for j in rand::seq::index::sample(&mut rng, n, 2 * r) {
            pos.push(Position::new(i, j));
        }
    }
    let mask = Mask::new(n, n, pos)?;
    Ok(with_complement(&mask, &mut rng, 2 * r * n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes_and_count() {
        assert!(sample_er(5, 7, 0.0, 1).unwrap().is_empty());
        assert!(sample_er(5, 7, 1.0, 1).unwrap().is_full());
        assert!(sample_er(5, 7, 1.5, 1).is_err());
        // Binomial(10^4, 0.1): sd = 30
        for seed in 0..100 {
            let e = sample_er(100, 100, 0.1, seed).unwrap().len() as f64;
            assert!((e - 1000.0).abs() <= 4.0 * 30.0, "seed {seed}: {e}");
        }
    }

    #[test]
    fn biregular_examples() {
        assert!(sample_biregular(4, 4, 4, 4, 0).unwrap().is_full());
        for seed in 0..100 {
            let m = sample_biregular(10, 10, 4, 4, seed).unwrap();
            assert!(m.row_degrees().iter().all(|&d| d == 4));
            assert!(m.col_degrees().iter().all(|&d| d == 4));
        }
        let m = sample_biregular(4, 6, 3, 2, 5).unwrap();
        assert!(m.row_degrees().iter().all(|&d| d == 3));
        assert!(m.col_degrees().iter().all(|&d| d == 2));
        assert!(matches!(sample_biregular(4, 6, 3, 3, 0), Err(Error::InfeasibleDegrees(_))));
        assert!(matches!(sample_biregular(3, 3, 4, 4, 0), Err(Error::InfeasibleDegrees(_))));
    }

    #[test]
    fn biregular_dense_cases_terminate() {
        for seed in 0..20 {
            let m = sample_biregular(12, 12, 10, 10, seed).unwrap();
            assert!(m.row_degrees().iter().all(|&d| d == 10));
            let m = sample_biregular(40, 40, 6, 6, seed).unwrap();
            assert!(m.col_degrees().iter().all(|&d| d == 6));
        }
    }

    #[test]
    fn monotone_order_examples() {
        let o = monotone_order(4, 5, 3);
        assert!(o.prefix(20).is_full());
        assert!(o.prefix(7).is_subset(&o.prefix(12)));
        assert_eq!(o, monotone_order(4, 5, 3));
        let mut sorted = o.order.clone();
        sorted.sort();
        assert_eq!(sorted, Mask::full(4, 5).positions());
    }

    #[test]
    fn regular_plus_examples() {
        let (n, r) = (20, 2);
        let o = regular_plus_order(n, r, 9).unwrap();
        let at = o.prefix(2 * r * n);
        assert!(at.row_degrees().iter().chain(at.col_degrees().iter()).all(|&d| d == 2 * r));
        let before = o.prefix_at_offset(-1).unwrap();
        let low = before
            .row_degrees()
            .into_iter()
            .chain(before.col_degrees())
            .filter(|&d| d == 2 * r - 1)
            .count();
        assert_eq!(low, 2);
        assert_eq!(o, regular_plus_order(n, r, 9).unwrap());
        assert!(o.prefix_at_offset(-((2 * r * n) as i64) - 1).is_none());
    }

    #[test]
    fn rowwise_examples() {
        let o = rowwise_regular_order(40, 2, 4).unwrap();
        let at = o.prefix(160);
        assert!(at.row_degrees().iter().all(|&d| d == 4));
        assert_ne!(at.col_degrees().iter().min(), at.col_degrees().iter().max());
        assert_eq!(o, rowwise_regular_order(40, 2, 4).unwrap());
    }
}
