//! Hypergeometric distribution `Hyp(m, b, w)`: the number of black balls
//! among `m` drawn without replacement from `b` black and `w` white.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::UrnError;

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergeom {
    /// `pmf[j] = P(X = j)` for `j = 0..=m`.
    pub pmf: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

fn check(m: u64, b: u64, w: u64) -> Result<(), UrnError> {
    if m > b + w {
        return Err(UrnError::Hypergeom { m, b, w });
    }
    Ok(())
}

/// Floating-point distribution. Probabilities come from the ratio
/// `P(j+1)/P(j) = (b-j)(m-j) / ((j+1)(w-m+j+1))` accumulated in log space
/// and normalized, so large urns neither overflow nor lose precision.
pub fn hypergeom(m: u64, b: u64, w: u64) -> Result<Hypergeom, UrnError> {
    check(m, b, w)?;
    let lo = m.saturating_sub(w);
    let hi = m.min(b);
    let mut logs = Vec::with_capacity((hi - lo + 1) as usize);
    let mut acc = 0.0f64;
    logs.push(acc);
    for j in lo..hi {
        let num = ((b - j) as f64).ln() + ((m - j) as f64).ln();
        let den = ((j + 1) as f64).ln() + ((w + j + 1 - m) as f64).ln();
        acc += num - den;
        logs.push(acc);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    let mut pmf = vec![0.0; m as usize + 1];
    for (i, l) in logs.iter().enumerate() {
        pmf[lo as usize + i] = (l - top).exp() / total;
    }

    let (mf, bw) = (m as f64, (b + w) as f64);
    let mean = if b + w == 0 { 0.0 } else { mf * b as f64 / bw };
    let variance = if b + w <= 1 {
        0.0
    } else {
        let q = b as f64 / bw;
        mf * q * (1.0 - q) * (1.0 - (mf - 1.0) / (bw - 1.0))
    };
    Ok(Hypergeom { pmf, mean, variance })
}

/// Exact probabilities `C(b, j) C(w, m-j) / C(b+w, m)` for `j = 0..=m`.
pub fn hypergeom_exact(m: u64, b: u64, w: u64) -> Result<Vec<BigRational>, UrnError> {
    check(m, b, w)?;
    let total = binomial(b + w, m);
    Ok((0..=m)
        .map(|j| {
            let num = binomial(b, j) * binomial(w, m - j);
            BigRational::new(num.into(), total.clone().into())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use num_traits::ToPrimitive;

    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), BigUint::from(10u32));
        assert_eq!(binomial(4, 5), BigUint::zero());
        assert_eq!(binomial(0, 0), BigUint::one());
        assert_eq!(binomial(60, 30), BigUint::from(118_264_581_564_861_424u64));
    }

    #[test]
    fn hyp_2_2_2() {
        assert_eq!(hypergeom_exact(2, 2, 2).unwrap(), vec![r(1, 6), r(2, 3), r(1, 6)]);
        let h = hypergeom(2, 2, 2).unwrap();
        for (a, b) in h.pmf.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((h.mean - 1.0).abs() < 1e-15);
        assert!((h.variance - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_black_is_a_point_mass() {
        let h = hypergeom(3, 5, 0).unwrap();
        assert_eq!(h.pmf, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(h.variance, 0.0);
        let e = hypergeom_exact(3, 5, 0).unwrap();
        assert!(e[3].is_one() && e[..3].iter().all(Zero::is_zero));
    }

    #[test]
    fn float_matches_exact() {
        for (m, b, w) in [(5, 7, 9), (10, 3, 30), (4, 4, 1), (0, 3, 3), (6, 20, 0)] {
            let f = hypergeom(m, b, w).unwrap();
            let e = hypergeom_exact(m, b, w).unwrap();
            for (x, y) in f.pmf.iter().zip(&e) {
                assert!((x - y.to_f64().unwrap()).abs() < 1e-14, "Hyp({m},{b},{w})");
            }
            let mean: f64 = f.pmf.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
            let var: f64 = f.pmf.iter().enumerate().map(|(j, p)| (j as f64 - mean).powi(2) * p).sum();
            assert!((mean - f.mean).abs() < 1e-12);
            assert!((var - f.variance).abs() < 1e-12);
        }
    }

    #[test]
    fn large_urn_stays_normalized() {
        let h = hypergeom(500, 40_000, 60_000).unwrap();
        let total: f64 = h.pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = h.pmf.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
        assert!((mean - 200.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_overdraw() {
        assert_eq!(hypergeom(5, 2, 2).unwrap_err(), UrnError::Hypergeom { m: 5, b: 2, w: 2 });
    }
}
