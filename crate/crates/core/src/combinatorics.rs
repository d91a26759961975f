//! Exact integer evaluation of the topological counts attached to the
//! mean-field problem: binomials with arbitrary integer top argument,
//! Euler characteristics of configuration and barycenter spaces, and the
//! Leray-Schauder degree per `tau`-window.
//!
//! Everything here is exact (`BigInt` / `BigRational`); there is no floating
//! point except in locating the window of a given `tau`.

use std::f64::consts::PI;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative distance to a threshold `64 k pi^2` below which the degree is
/// reported as undefined.
pub const DEFAULT_THRESHOLD_TOL: f64 = 1e-12;

/// `64 pi^2`, the energy quantum of one bubble.
pub const BUBBLE_QUANTUM: f64 = 64.0 * PI * PI;

/// Euler characteristic of a space.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EulerChar(pub BigInt);

impl EulerChar {
    pub fn new(value: i64) -> Self {
        EulerChar(BigInt::from(value))
    }

    pub fn to_i64(&self) -> Option<i64> {
        self.0.to_i64()
    }
}

impl From<i64> for EulerChar {
    fn from(value: i64) -> Self {
        EulerChar::new(value)
    }
}

impl From<BigInt> for EulerChar {
    fn from(value: BigInt) -> Self {
        EulerChar(value)
    }
}

impl fmt::Display for EulerChar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The open interval `(64 k pi^2, 64 (k+1) pi^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeWindow {
    pub k: u64,
    pub tau_lo: f64,
    pub tau_hi: f64,
}

impl DegreeWindow {
    pub fn new(k: u64) -> Self {
        DegreeWindow { k, tau_lo: BUBBLE_QUANTUM * k as f64, tau_hi: BUBBLE_QUANTUM * (k + 1) as f64 }
    }

    /// Window containing `tau`, refusing values within `rel_tol` (relative) of
    /// any threshold.
    pub fn containing(tau: f64, rel_tol: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return invalid(format!("tau must be positive and finite, got {tau}"));
        }
        let ratio = tau / BUBBLE_QUANTUM;
        let nearest = ratio.round();
        if nearest >= 1.0 {
            let threshold = nearest * BUBBLE_QUANTUM;
            if ((tau - threshold) / threshold).abs() <= rel_tol {
                return Err(Error::Threshold { tau, k: nearest as u64, threshold });
            }
        }
        Ok(DegreeWindow::new(ratio.floor() as u64))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.tau_lo + self.tau_hi)
    }

    pub fn contains(&self, tau: f64) -> bool {
        tau > self.tau_lo && tau < self.tau_hi
    }
}

/// Standard binomial `k1 (k1-1) ... (k1-k2+1) / k2!` for any integer `k1`.
///
/// `binomial(0, k2) = 0` for `k2 >= 1`.
pub fn binomial(k1: &BigInt, k2: i64) -> Result<BigInt> {
    if k2 < 0 {
        return invalid(format!("binomial lower argument must be non-negative, got {k2}"));
    }
    // Each partial quotient is itself a binomial, so the division is exact.
    let mut acc = BigInt::one();
    for i in 0..k2 {
        acc *= k1 - BigInt::from(i);
        acc /= BigInt::from(i + 1);
    }
    Ok(acc)
}

/// Binomial with the convention that a vanishing top argument yields 1.
///
/// This differs from [`binomial`] only at `k1 = 0, k2 >= 1`.
pub fn generalized_binomial(k1: i64, k2: i64) -> Result<BigInt> {
    if k2 < 0 {
        return invalid(format!("binomial lower argument must be non-negative, got {k2}"));
    }
    if k1 == 0 {
        return Ok(BigInt::one());
    }
    binomial(&BigInt::from(k1), k2)
}

fn check_k(k: i64) -> Result<()> {
    if k < 1 {
        return invalid(format!("k must be at least 1, got {k}"));
    }
    Ok(())
}

fn sign(k: i64) -> BigInt {
    if k % 2 == 0 {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

/// Euler characteristic of the ordered configuration space of `k` distinct
/// points: `chi (chi-1) ... (chi-k+1)`.
pub fn config_space_euler(chi: &EulerChar, k: i64) -> Result<EulerChar> {
    check_k(k)?;
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= &chi.0 - BigInt::from(i);
    }
    Ok(EulerChar(acc))
}

/// Relative Euler characteristic of the stratum pair `(Sigma_k, Sigma_{k-1})`:
/// `(-1)^{k-1} binom(chi, k)`.
///
/// This is the form for which `chi(Sigma_k) = chi(Sigma_{k-1}) + pair(k)`
/// holds with `chi(Sigma_0) = 0`; it equals
/// `(-1)^{k-1} chi(X_k) / k!` for the configuration space `X_k`.
pub fn barycenter_pair_euler(chi: &EulerChar, k: i64) -> Result<EulerChar> {
    check_k(k)?;
    Ok(EulerChar(sign(k - 1) * binomial(&chi.0, k)?))
}

/// The pair formula in the shape `(-1)^{k-1} binom(chi - k, k)`.
///
/// Kept for auditing only; it is not additive over the strata (for
/// `chi = 0, k = 2` it gives `-3` while the strata differ by `0`).
pub fn barycenter_pair_euler_shifted(chi: &EulerChar, k: i64) -> Result<EulerChar> {
    check_k(k)?;
    let top = &chi.0 - BigInt::from(k);
    Ok(EulerChar(sign(k - 1) * binomial(&top, k)?))
}

/// `chi(Sigma_k) = 1 - binom(k - chi, k)`; defined for `k >= 0` with
/// `chi(Sigma_0) = 0` (the empty stratum).
pub fn barycenter_euler(chi: &EulerChar, k: i64) -> Result<EulerChar> {
    if k < 0 {
        return invalid(format!("k must be non-negative, got {k}"));
    }
    let top = BigInt::from(k) - &chi.0;
    Ok(EulerChar(BigInt::one() - binomial(&top, k)?))
}

/// `(-1)^{k-1} chi(X_k) / k!`, the predicted alternating count of critical
/// points of the barycenter Morse function.
pub fn morse_count_sum(chi: &EulerChar, k: i64) -> Result<BigRational> {
    let config = config_space_euler(chi, k)?;
    let mut fact = BigInt::one();
    for i in 2..=k {
        fact *= BigInt::from(i);
    }
    Ok(BigRational::new(sign(k - 1) * config.0, fact))
}

/// Leray-Schauder degree in the window containing `tau`:
/// `binom(k - chi, k)` with `k = floor(tau / 64 pi^2)` (equal to 1 for `k = 0`).
pub fn degree_from_tau(tau: f64, chi: &EulerChar) -> Result<BigInt> {
    degree_from_tau_with_tol(tau, chi, DEFAULT_THRESHOLD_TOL)
}

pub fn degree_from_tau_with_tol(tau: f64, chi: &EulerChar, rel_tol: f64) -> Result<BigInt> {
    let window = DegreeWindow::containing(tau, rel_tol)?;
    degree_in_window(window.k, chi)
}

pub fn degree_in_window(k: u64, chi: &EulerChar) -> Result<BigInt> {
    if k == 0 {
        return Ok(BigInt::one());
    }
    let k = k as i64;
    binomial(&(BigInt::from(k) - &chi.0), k)
}

/// Right-hand side of the telescoped additivity relation:
/// `sum_{j=1..k} (-1)^{j-1} binom(chi, j)`.
pub fn telescoped_barycenter_euler(chi: &EulerChar, k: i64) -> Result<EulerChar> {
    if k < 0 {
        return invalid(format!("k must be non-negative, got {k}"));
    }
    let mut acc = BigInt::zero();
    for j in 1..=k {
        acc += barycenter_pair_euler(chi, j)?.0;
    }
    Ok(EulerChar(acc))
}

/// One row of the Euler-characteristic table printed by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EulerRow {
    pub k: u64,
    pub config_space: String,
    pub pair: String,
    pub barycenter: String,
    pub degree: String,
}

pub fn euler_table(chi: &EulerChar, k_max: u64) -> Result<Vec<EulerRow>> {
    let mut rows = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        let ki = k as i64;
        let (config, pair) = if k == 0 {
            (BigInt::one(), BigInt::zero())
        } else {
            (config_space_euler(chi, ki)?.0, barycenter_pair_euler(chi, ki)?.0)
        };
        rows.push(EulerRow {
            k,
            config_space: config.to_string(),
            pair: pair.to_string(),
            barycenter: barycenter_euler(chi, ki)?.0.to_string(),
            degree: degree_in_window(k, chi)?.to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(k1: i64, k2: i64) -> BigInt {
        binomial(&BigInt::from(k1), k2).unwrap()
    }

    // Falling-factorial product evaluated in i128, independent of `binomial`.
    fn falling_oracle(k1: i128, k2: i128) -> i128 {
        let mut num = 1i128;
        let mut den = 1i128;
        for i in 0..k2 {
            num *= k1 - i;
            den *= i + 1;
        }
        assert_eq!(num % den, 0);
        num / den
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(generalized_binomial(5, 2).unwrap(), BigInt::from(10));
        assert_eq!(generalized_binomial(0, 7).unwrap(), BigInt::from(1));
        assert_eq!(generalized_binomial(-2, 2).unwrap(), BigInt::from(3));
        assert_eq!(generalized_binomial(3, 5).unwrap(), BigInt::from(0));
        assert_eq!(b(0, 7), BigInt::from(0));
        assert_eq!(b(0, 0), BigInt::from(1));
        assert!(matches!(generalized_binomial(3, -1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn binomial_matches_falling_factorial_oracle() {
        for k1 in -20i64..=20 {
            for k2 in 0i64..=12 {
                assert_eq!(b(k1, k2), BigInt::from(falling_oracle(k1 as i128, k2 as i128)));
            }
        }
    }

    #[test]
    fn wide_arguments_do_not_overflow() {
        // binom(128, 64) exceeds u64 and needs exact division along the way.
        let v = b(128, 64);
        assert_eq!(v.to_string(), "23951146041928082866135587776380551750");
        let neg = b(-64, 64);
        assert_eq!(neg, b(127, 64));
    }

    #[test]
    fn config_space_examples() {
        assert_eq!(config_space_euler(&1.into(), 2).unwrap(), EulerChar::new(0));
        assert_eq!(config_space_euler(&(-1).into(), 2).unwrap(), EulerChar::new(2));
        assert_eq!(config_space_euler(&0.into(), 3).unwrap(), EulerChar::new(0));
        assert!(config_space_euler(&0.into(), 0).is_err());
    }

    #[test]
    fn pair_and_barycenter_examples() {
        assert_eq!(barycenter_pair_euler(&1.into(), 1).unwrap(), EulerChar::new(1));
        assert_eq!(barycenter_pair_euler(&(-1).into(), 2).unwrap(), EulerChar::new(-1));
        assert_eq!(barycenter_pair_euler(&0.into(), 1).unwrap(), EulerChar::new(0));
        for k in 1..6 {
            assert_eq!(barycenter_euler(&1.into(), k).unwrap(), EulerChar::new(1));
        }
        assert_eq!(barycenter_euler(&0.into(), 3).unwrap(), EulerChar::new(0));
        assert_eq!(barycenter_euler(&(-1).into(), 2).unwrap(), EulerChar::new(-2));
        assert_eq!(barycenter_euler(&5.into(), 0).unwrap(), EulerChar::new(0));
    }

    #[test]
    fn shifted_pair_formula_is_not_additive() {
        let chi = EulerChar::new(0);
        let step = barycenter_euler(&chi, 2).unwrap().0 - barycenter_euler(&chi, 1).unwrap().0;
        assert_eq!(step, BigInt::from(0));
        assert_eq!(barycenter_pair_euler_shifted(&chi, 2).unwrap(), EulerChar::new(-3));
    }

    #[test]
    fn morse_count_examples() {
        let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        assert_eq!(morse_count_sum(&0.into(), 2).unwrap(), r(0, 1));
        assert_eq!(morse_count_sum(&1.into(), 1).unwrap(), r(1, 1));
        assert_eq!(morse_count_sum(&(-1).into(), 2).unwrap(), r(-1, 1));
    }

    #[test]
    fn degree_examples() {
        let pi2 = PI * PI;
        for chi in -3..=3 {
            assert_eq!(degree_from_tau(32.0 * pi2, &chi.into()).unwrap(), BigInt::from(1));
        }
        assert_eq!(degree_from_tau(80.0 * pi2, &1.into()).unwrap(), BigInt::from(0));
        assert!(matches!(degree_from_tau(64.0 * pi2, &0.into()), Err(Error::Threshold { k: 1, .. })));
        assert!(degree_from_tau(64.0 * pi2 * (1.0 + 1e-13), &0.into()).is_err());
        assert!(degree_from_tau(64.0 * pi2 * (1.0 + 1e-9), &0.into()).is_ok());
        assert!(degree_from_tau(-1.0, &0.into()).is_err());
    }

    #[test]
    fn window_bookkeeping() {
        let w = DegreeWindow::containing(100.0 * PI * PI, DEFAULT_THRESHOLD_TOL).unwrap();
        assert_eq!(w.k, 1);
        assert!(w.contains(w.midpoint()));
        assert!(w.tau_lo < w.tau_hi);
    }

    #[test]
    fn euler_table_degree_columns() {
        let col = |chi: i64, kmax: u64| -> Vec<String> {
            euler_table(&chi.into(), kmax).unwrap().into_iter().map(|r| r.degree).collect()
        };
        assert_eq!(col(0, 4), vec!["1"; 5]);
        assert_eq!(col(1, 4), vec!["1", "0", "0", "0", "0"]);
        assert_eq!(col(-2, 2), vec!["1", "3", "6"]);
    }
}
