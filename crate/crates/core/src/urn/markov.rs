//! The width process `U_{n+1} = U_n + k - R_{d,k}(U_n)` and its mean-field
//! approximation.

use serde::Serialize;

use super::{expected_removed_at, pmf_removed, variance_removed_at, UrnError, UrnParams};

/// Iteration cap for [`rounds_until_convergence`].
pub const MAX_CONVERGENCE_ROUNDS: u64 = 10_000_000;

/// `P(U_{n+1} = j | U_n = i)`, that is `P(R(i) = i + k - j)`.
pub fn transition_probability(i: u64, j: u64, d: u64, k: u64) -> Result<f64, UrnError> {
    let pmf = pmf_removed(i, d, k)?;
    Ok(match (i + k).checked_sub(j) {
        Some(removed) => pmf.get(removed),
        None => 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub round: u64,
    pub mean_width: f64,
    /// Standard deviation of one round's removal at `mean_width`.
    pub stddev_removal: f64,
}

/// Expected removal and its variance at a real-valued width. At or below
/// `d` every drawing takes all balls, so everything goes.
fn removal_at(u: f64, d: u64, k: u64) -> (f64, f64) {
    if u <= d as f64 {
        return (u, 0.0);
    }
    let e = expected_removed_at(u, d, k).expect("u > d");
    let v = variance_removed_at(u, d, k).expect("u > d");
    (e, v)
}

/// One step of the mean recursion: `u + k - E(R(u))`.
pub fn mean_step(u: f64, d: u64, k: u64) -> f64 {
    u + k as f64 - removal_at(u, d, k).0
}

/// Rows `0..=rounds` of `E(U_n)`. The formulas are evaluated at the real
/// mean, a mean-field approximation of the chain.
pub fn mean_trajectory(u0: f64, d: u64, k: u64, rounds: u64) -> Result<Vec<TrajectoryRow>, UrnError> {
    if d < 2 {
        return Err(UrnError::DrawSize(d));
    }
    if k == 0 {
        return Err(UrnError::NoDrawings);
    }
    let mut rows = Vec::with_capacity(rounds as usize + 1);
    let mut u = u0;
    for round in 0..=rounds {
        let (e, v) = removal_at(u, d, k);
        rows.push(TrajectoryRow { round, mean_width: u, stddev_removal: v.sqrt() });
        u = u + k as f64 - e;
    }
    Ok(rows)
}

/// Smallest `u > d` at which a round is expected to remove at least `k`.
pub fn fixed_point(d: u64, k: u64) -> Result<u64, UrnError> {
    UrnParams::new(d + 1, d, k)?;
    let mut u = d + 1;
    while expected_removed_at(u as f64, d, k)? < k as f64 {
        u += 1;
    }
    Ok(u)
}

/// Smallest `n` with `E(U_n) - E(U_{n+1}) < 1`.
pub fn rounds_until_convergence(u0: f64, d: u64, k: u64) -> Result<u64, UrnError> {
    if d < 2 {
        return Err(UrnError::DrawSize(d));
    }
    if k == 0 {
        return Err(UrnError::NoDrawings);
    }
    let mut u = u0;
    for n in 0..MAX_CONVERGENCE_ROUNDS {
        let next = mean_step(u, d, k);
        if u - next < 1.0 {
            return Ok(n);
        }
        u = next;
    }
    Err(UrnError::NoConvergence(MAX_CONVERGENCE_ROUNDS))
}
