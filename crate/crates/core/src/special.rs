//! Standard normal density, distribution and Mills-ratio helpers.
//!
//! `ln_cdf` and `inv_mills` stay finite far into the lower tail: below
//! `TAIL_SWITCH` they are evaluated from a continued fraction for the Mills
//! ratio rather than from `erfc`, which underflows near z = -38.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TAIL_SWITCH: f64 = -8.0;
const CF_TERMS: usize = 120;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Mills ratio `Φ(-x) / φ(x)` for `x > 0`, by backward evaluation of
/// `1 / (x + 1/(x + 2/(x + 3/(x + ...))))`.
fn mills_ratio(x: f64) -> f64 {
    let mut tail = x;
    for k in (1..=CF_TERMS).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}

/// `ln Φ(z)`.
pub fn ln_cdf(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        ln_pdf(z) + mills_ratio(-z).ln()
    } else if z > 0.0 {
        (-0.5 * libm::erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else {
        cdf(z).ln()
    }
}

/// Inverse Mills ratio `R(z) = φ(z) / Φ(z)`.
pub fn inv_mills(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        1.0 / mills_ratio(-z)
    } else {
        pdf(z) / cdf(z)
    }
}

/// Density of `N(x | mean, var)`.
pub fn gauss_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

pub fn gauss_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - 0.5 * d * d / var
}

/// Logistic function `1 / (1 + e^{-x})`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_branch_agrees_with_erfc_at_the_switch() {
        for &z in &[-8.0, -9.0, -12.0, -20.0, -30.0] {
            let direct = cdf(z).ln();
            let tail = ln_pdf(z) + mills_ratio(-z).ln();
            assert!((direct - tail).abs() < 1e-12 * direct.abs(), "z={z}: {direct} vs {tail}");
        }
    }

    #[test]
    fn inv_mills_is_asymptotically_minus_z() {
        let r = inv_mills(-1.0e3);
        assert!((r - 1.0e3).abs() / 1.0e3 < 1e-5);
        assert!(ln_cdf(-1.0e3).is_finite());
    }

    #[test]
    fn reference_values() {
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((cdf(-0.5) - 0.308_537_538_725_986_9).abs() < 1e-15);
        assert_eq!(cdf(0.0), 0.5);
        assert!((gauss_pdf(0.0, 0.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_logit_roundtrip() {
        for &x in &[-30.0, -2.0, 0.0, 0.7, 12.0] {
            assert!((logit(sigmoid(x)) - x).abs() < 1e-9);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
