//! Distribution of `R_{d,k}(u)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::{binomial, hypergeom, hypergeom_exact, UrnError, UrnParams};

/// Sequences a brute-force enumeration may visit.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// `probs[j] = P(R = j)` for `j = 0..=u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    pub probs: Vec<f64>,
}

impl Pmf {
    pub fn get(&self, j: u64) -> f64 {
        self.probs.get(j as usize).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(j, p)| j as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs.iter().enumerate().map(|(j, p)| (j as f64 - m).powi(2) * p).sum()
    }

    /// `(j, P(R = j))` for every `j` with positive probability.
    pub fn support(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(j, p)| (j as u64, *p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPmf {
    pub probs: Vec<BigRational>,
}

impl ExactPmf {
    pub fn get(&self, j: u64) -> BigRational {
        self.probs.get(j as usize).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> BigRational {
        self.probs.iter().fold(BigRational::zero(), |a, p| a + p)
    }

    pub fn mean(&self) -> BigRational {
        self.probs
            .iter()
            .enumerate()
            .fold(BigRational::zero(), |a, (j, p)| a + p * BigRational::from(BigInt::from(j)))
    }

    pub fn variance(&self) -> BigRational {
        let m = self.mean();
        self.probs.iter().enumerate().fold(BigRational::zero(), |a, (j, p)| {
            let dev = BigRational::from(BigInt::from(j)) - &m;
            a + p * &dev * &dev
        })
    }

    pub fn to_f64(&self) -> Pmf {
        Pmf { probs: self.probs.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect() }
    }
}

/// Tracks the number of black balls drawing by drawing. With `b` black balls
/// the next drawing picks up `Hyp(d, u - b, b)` red ones.
pub fn pmf_removed(u: u64, d: u64, k: u64) -> Result<Pmf, UrnError> {
    UrnParams::new(u, d, k)?;
    let mut dist = vec![0.0; u as usize + 1];
    dist[0] = 1.0;
    for round in 0..k {
        let mut next = vec![0.0; u as usize + 1];
        let reach = (round * d).min(u);
        for b in 0..=reach {
            let mass = dist[b as usize];
            if mass == 0.0 {
                continue;
            }
            let row = hypergeom(d, u - b, b)?;
            for (l, q) in row.pmf.iter().enumerate() {
                if *q > 0.0 {
                    next[b as usize + l] += mass * q;
                }
            }
        }
        dist = next;
    }
    let total: f64 = dist.iter().sum();
    dist.iter_mut().for_each(|p| *p /= total);
    Ok(Pmf { probs: dist })
}

/// [`pmf_removed`] in exact rational arithmetic.
pub fn pmf_removed_exact(u: u64, d: u64, k: u64) -> Result<ExactPmf, UrnError> {
    UrnParams::new(u, d, k)?;
    let mut dist = vec![BigRational::zero(); u as usize + 1];
    dist[0] = BigRational::from(BigInt::from(1));
    for round in 0..k {
        let mut next = vec![BigRational::zero(); u as usize + 1];
        let reach = (round * d).min(u);
        for b in 0..=reach {
            if dist[b as usize].is_zero() {
                continue;
            }
            let row = hypergeom_exact(d, u - b, b)?;
            for (l, q) in row.iter().enumerate() {
                if !q.is_zero() {
                    next[b as usize + l] += &dist[b as usize] * q;
                }
            }
        }
        dist = next;
    }
    Ok(ExactPmf { probs: dist })
}

/// Enumerates every ordered sequence of `k` subsets of size `d` and counts
/// how many distinct balls each sequence touches.
pub fn brute_force_pmf(u: u64, d: u64, k: u64) -> Result<ExactPmf, UrnError> {
    UrnParams::new(u, d, k)?;
    let per_drawing = binomial(u, d).to_u128().unwrap_or(u128::MAX);
    let count = per_drawing.checked_pow(k as u32).unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_LIMIT || u > 64 {
        return Err(UrnError::TooLarge { count, limit: BRUTE_FORCE_LIMIT });
    }
    let subsets: Vec<u64> = (0u64..1 << u).filter(|m| m.count_ones() as u64 == d).collect();
    let mut hits = vec![0u64; u as usize + 1];

    fn walk(subsets: &[u64], left: u64, seen: u64, hits: &mut [u64]) {
        if left == 0 {
            hits[seen.count_ones() as usize] += 1;
            return;
        }
        for s in subsets {
            walk(subsets, left - 1, seen | s, hits);
        }
    }
    walk(&subsets, k, 0, &mut hits);

    let total = BigInt::from(count);
    Ok(ExactPmf { probs: hits.into_iter().map(|h| BigRational::new(h.into(), total.clone())).collect() })
}
