//! The forward-extremity urn.
//!
//! `u` red balls stand for the current extremities. Each of `k` replicas
//! draws `d` balls without replacement, recolors the red ones black and puts
//! them back. `R_{d,k}(u)` is the number of balls that are black after all
//! `k` drawings, i.e. the extremities one round of events eliminates.
//!
//! The analytic functions reject `d >= u`. The simulated process instead
//! draws `min(d, u)` balls.

mod hypergeom;
mod markov;
mod montecarlo;
mod pmf;

use num_rational::BigRational;
use thiserror::Error;

pub use hypergeom::{binomial, hypergeom, hypergeom_exact, Hypergeom};
pub use markov::{
    fixed_point, mean_step, mean_trajectory, rounds_until_convergence, transition_probability, TrajectoryRow,
    MAX_CONVERGENCE_ROUNDS,
};
pub use montecarlo::{monte_carlo_trajectory, simulate_urn_round, McRow};
pub use pmf::{brute_force_pmf, pmf_removed, pmf_removed_exact, ExactPmf, Pmf, BRUTE_FORCE_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrnError {
    #[error("draw size d = {d} must be smaller than the urn size u = {u}")]
    Domain { u: u64, d: u64 },
    #[error("draw size d must be at least 2, got {0}")]
    DrawSize(u64),
    #[error("number of drawings k must be at least 1")]
    NoDrawings,
    #[error("cannot draw {m} balls from {b} black and {w} white")]
    Hypergeom { m: u64, b: u64, w: u64 },
    #[error("enumeration needs {count} sequences, limit is {limit}")]
    TooLarge { count: u128, limit: u128 },
    #[error("mean width still decreasing by at least 1 after {0} rounds")]
    NoConvergence(u64),
    #[error("at least one trial is required")]
    NoTrials,
}

/// Validated urn parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UrnParams {
    pub u: u64,
    pub d: u64,
    pub k: u64,
}

impl UrnParams {
    pub fn new(u: u64, d: u64, k: u64) -> Result<Self, UrnError> {
        if d < 2 {
            return Err(UrnError::DrawSize(d));
        }
        if d >= u {
            return Err(UrnError::Domain { u, d });
        }
        if k == 0 {
            return Err(UrnError::NoDrawings);
        }
        Ok(Self { u, d, k })
    }

    /// More drawings than balls per drawing. The model assumes this, the
    /// formulas do not need it.
    pub fn is_model_regime(&self) -> bool {
        self.k > self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticConstants {
    /// Chance that a given red ball survives one drawing.
    pub p: f64,
    pub v: f64,
    pub w_const: f64,
}

impl AnalyticConstants {
    /// Constants at a real-valued urn size, `d < u`.
    pub fn at(u: f64, d: f64) -> Self {
        Self {
            p: (u - d) / u,
            v: d * (u - d) / (u * u * (u - 1.0)),
            w_const: (u - d) * (u - d - 1.0) / (u * (u - 1.0)),
        }
    }
}

fn real_domain(u: f64, d: u64, k: u64) -> Result<(), UrnError> {
    if d < 2 {
        return Err(UrnError::DrawSize(d));
    }
    if k == 0 {
        return Err(UrnError::NoDrawings);
    }
    if !(u > d as f64) {
        return Err(UrnError::Domain { u: u.max(0.0) as u64, d });
    }
    Ok(())
}

pub fn retention_probability(u: u64, d: u64) -> Result<f64, UrnError> {
    UrnParams::new(u, d, 1)?;
    Ok(AnalyticConstants::at(u as f64, d as f64).p)
}

pub fn retention_probability_exact(u: u64, d: u64) -> Result<BigRational, UrnError> {
    UrnParams::new(u, d, 1)?;
    Ok(BigRational::new((u - d).into(), u.into()))
}

/// `E(R) = d (1 - p^k) / (1 - p)`.
pub fn expected_removed(u: u64, d: u64, k: u64) -> Result<f64, UrnError> {
    UrnParams::new(u, d, k)?;
    expected_removed_at(u as f64, d, k)
}

/// [`expected_removed`] at a real-valued urn size.
pub fn expected_removed_at(u: f64, d: u64, k: u64) -> Result<f64, UrnError> {
    real_domain(u, d, k)?;
    let df = d as f64;
    // 1 - p^k without cancellation for p close to 1.
    let one_minus_pk = -(k as f64 * (-df / u).ln_1p()).exp_m1();
    Ok(df * one_minus_pk / (df / u))
}

/// `sum_{i < n} x^i`.
fn geometric(x: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if (1.0 - x).abs() > 1e-2 {
        (1.0 - x.powi(n as i32)) / (1.0 - x)
    } else {
        let mut term = 1.0;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += term;
            term *= x;
        }
        sum
    }
}

/// Closed-form `Var(R)`.
pub fn variance_removed(u: u64, d: u64, k: u64) -> Result<f64, UrnError> {
    UrnParams::new(u, d, k)?;
    variance_removed_at(u as f64, d, k)
}

/// [`variance_removed`] at a real-valued urn size.
pub fn variance_removed_at(u: f64, d: u64, k: u64) -> Result<f64, UrnError> {
    real_domain(u, d, k)?;
    let df = d as f64;
    let AnalyticConstants { p, v, w_const: w } = AnalyticConstants::at(u, df);
    let n = k - 1;
    let q = 1.0 - p;
    let pn = p.powi(n as i32);
    let g_w = geometric(w, n);
    let g_wp = geometric(w / p, n);
    let g_wp2 = geometric(w / (p * p), n);
    let first = v * u * df / q * (g_w - pn * g_wp);
    let second = v * df * df / (q * q) * (g_w - 2.0 * pn * g_wp + pn * pn * g_wp2);
    Ok((first - second).max(0.0))
}

/// `Var(R)` by conditioning on the state after `k - 1` drawings:
/// `V_k = p^2 V_{k-1} + v (u E_{k-1} - V_{k-1} - E_{k-1}^2)`, `V_1 = 0`.
pub fn variance_removed_recursive(u: u64, d: u64, k: u64) -> Result<f64, UrnError> {
    UrnParams::new(u, d, k)?;
    let (uf, df) = (u as f64, d as f64);
    let AnalyticConstants { p, v, .. } = AnalyticConstants::at(uf, df);
    let (mut e, mut var) = (df, 0.0);
    for _ in 1..k {
        var = p * p * var + v * (uf * e - var - e * e);
        e = df + p * e;
    }
    Ok(var)
}

/// `E(R)` by the recursion `E_k = d + p E_{k-1}`, `E_1 = d`.
pub fn expected_removed_recursive(u: u64, d: u64, k: u64) -> Result<f64, UrnError> {
    UrnParams::new(u, d, k)?;
    let p = AnalyticConstants::at(u as f64, d as f64).p;
    Ok((1..k).fold(d as f64, |e, _| d as f64 + p * e))
}
