//! Simulation of the urn, the ground truth for the mean-field formulas.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::UrnError;

/// One round: `k` drawings of `min(d, u)` balls each. Returns the number of
/// distinct balls drawn.
pub fn simulate_urn_round<R: Rng + ?Sized>(u: u64, d: u64, k: u64, rng: &mut R) -> u64 {
    let size = d.min(u) as usize;
    let mut black = HashSet::new();
    for _ in 0..k {
        for ball in sample(rng, u as usize, size) {
            black.insert(ball);
        }
    }
    black.len() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McRow {
    pub round: u64,
    pub mean_width: f64,
    pub p025: f64,
    pub p975: f64,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[u64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] as f64 + (h - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64)
}

/// `trials` independent runs of the width process for `rounds` rounds.
/// Trial `t` draws from stream `t` of a generator seeded with `seed`, so the
/// result does not depend on thread scheduling.
pub fn monte_carlo_trajectory(
    u0: u64,
    d: u64,
    k: u64,
    rounds: u64,
    trials: u64,
    seed: u64,
) -> Result<Vec<McRow>, UrnError> {
    if trials == 0 {
        return Err(UrnError::NoTrials);
    }
    let paths: Vec<Vec<u64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let mut u = u0;
            let mut path = Vec::with_capacity(rounds as usize + 1);
            path.push(u);
            for _ in 0..rounds {
                u = u + k - simulate_urn_round(u, d, k, &mut rng);
                path.push(u);
            }
            path
        })
        .collect();

    Ok((0..=rounds as usize)
        .map(|n| {
            let mut col: Vec<u64> = paths.iter().map(|p| p[n]).collect();
            col.sort_unstable();
            let mean = col.iter().sum::<u64>() as f64 / col.len() as f64;
            McRow { round: n as u64, mean_width: mean, p025: quantile(&col, 0.025), p975: quantile(&col, 0.975) }
        })
        .collect())
}
