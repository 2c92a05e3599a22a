//! Brute-force reference computations for checking the engine.
//!
//! Nothing here calls into the engine's numerical paths: densities, the
//! normal CDF (taken from `statrs`), the network interpreter and the
//! integrals are all computed independently, so agreement between the two
//! routes is meaningful.

mod quad;

pub use quad::integrate;

use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bnn::Activation;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Denominator floor used by [`relative_error`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Standard normal CDF from `statrs`.
pub fn reference_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

fn gauss(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-(d * d) / (2.0 * var)).exp() / (std::f64::consts::TAU * var).sqrt()
}

/// The non-Gaussian factor multiplying the cavity in a tilted distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TiltFactor {
    /// `p·N(w | 0, slab_var) + (1 - p)·δ(w)`.
    SpikeSlab { slab_prob: f64, slab_var: f64 },
    /// `Φ(slope·w + offset)`.
    Probit { slope: f64, offset: f64 },
}

/// Normalizer and raw moments of `N(w | m, v)·factor(w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedOracle {
    pub z: f64,
    pub mean: f64,
    pub second_moment: f64,
}

const SD_WINDOW: f64 = 40.0;
const PIECES: usize = 64;
const QUAD_TOL: f64 = 1e-13;

pub fn quad_tilted_moments(
    cavity_mean: f64,
    cavity_var: f64,
    factor: TiltFactor,
) -> Result<TiltedOracle> {
    if !(cavity_var > 0.0) || !cavity_mean.is_finite() {
        return Err(Error::Oracle("cavity variance must be positive".into()));
    }
    let sd = cavity_var.sqrt();
    let (mut lo, mut hi) = (cavity_mean - SD_WINDOW * sd, cavity_mean + SD_WINDOW * sd);
    let raw = |k: i32, lo: f64, hi: f64, g: &dyn Fn(f64) -> f64| {
        if lo >= hi {
            return Ok(0.0);
        }
        integrate(|w| gauss(w, cavity_mean, cavity_var) * g(w) * w.powi(k), lo, hi, PIECES, QUAD_TOL)
    };
    match factor {
        TiltFactor::SpikeSlab { slab_prob, slab_var } => {
            if !(0.0..=1.0).contains(&slab_prob) || !(slab_var > 0.0) {
                return Err(Error::Oracle("invalid spike-and-slab mixture".into()));
            }
            let s = slab_var.sqrt();
            lo = lo.max(-SD_WINDOW * s);
            hi = hi.min(SD_WINDOW * s);
            let slab = |w: f64| gauss(w, 0.0, slab_var);
            let m0 = raw(0, lo, hi, &slab)?;
            let m1 = raw(1, lo, hi, &slab)?;
            let m2 = raw(2, lo, hi, &slab)?;
            let spike = (1.0 - slab_prob) * gauss(0.0, cavity_mean, cavity_var);
            let z = slab_prob * m0 + spike;
            Ok(TiltedOracle { z, mean: slab_prob * m1 / z, second_moment: slab_prob * m2 / z })
        }
        TiltFactor::Probit { slope, offset } => {
            let phi = |w: f64| reference_normal_cdf(slope * w + offset);
            let m0 = raw(0, lo, hi, &phi)?;
            let m1 = raw(1, lo, hi, &phi)?;
            let m2 = raw(2, lo, hi, &phi)?;
            Ok(TiltedOracle { z: m0, mean: m1 / m0, second_moment: m2 / m0 })
        }
    }
}

/// Straight-line evaluation of the scaled MLP recursion, one layer at a
/// time with explicit matrices.
pub fn reference_forward(widths: &[usize], activation: Activation, weights: &[f64], input: &[f64]) -> f64 {
    let mut h: Vec<f64> = input.to_vec();
    let mut cursor = 0;
    let layers = widths.len() - 1;
    for m in 1..=layers {
        let cols = widths[m - 1] + 1;
        let rows = widths[m];
        let mut next = vec![0.0; rows];
        for (j, out) in next.iter_mut().enumerate() {
            let row = &weights[cursor + j * cols..cursor + (j + 1) * cols];
            let mut acc = row[cols - 1];
            for t in 0..cols - 1 {
                acc += row[t] * h[t];
            }
            acc /= (cols as f64).sqrt();
            *out = if m == layers {
                acc
            } else {
                match activation {
                    Activation::Relu => {
                        if acc > 0.0 {
                            acc
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => acc.tanh(),
                    Activation::Identity => acc,
                }
            };
        }
        cursor += rows * cols;
        h = next;
    }
    h[0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McMoments {
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    pub var_se: f64,
}

/// Monte-Carlo mean and variance of the network output when every weight and
/// input coordinate is drawn independently from its Gaussian.
pub fn mc_output_moments(
    widths: &[usize],
    activation: Activation,
    means: &[f64],
    vars: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<McMoments> {
    let n_weights: usize = widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
    if means.len() != n_weights + widths[0] || vars.len() != means.len() {
        return Err(Error::Oracle("parameter vectors do not fit the widths".into()));
    }
    if n_samples < 2 {
        return Err(Error::Oracle("need at least two samples".into()));
    }
    let sds: Vec<f64> = vars.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut rng = stream(seed, Purpose::Oracle);
    let mut draw = vec![0.0; means.len()];
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for ((d, &m), &s) in draw.iter_mut().zip(means).zip(&sds) {
            *d = if s == 0.0 {
                m
            } else {
                let e: f64 = StandardNormal.sample(&mut rng);
                m + s * e
            };
        }
        values.push(reference_forward(widths, activation, &draw[..n_weights], &draw[n_weights..]));
    }
    // Deviations are taken from the first draw so that identical samples
    // give exactly zero variance.
    let n = n_samples as f64;
    let shift = values[0];
    let mean_shifted = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let mean = shift + mean_shifted;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in &values {
        let d = (v - shift) - mean_shifted;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let var_biased = m2 / n;
    m4 /= n;
    let var = m2 / (n - 1.0);
    Ok(McMoments {
        mean,
        var,
        mean_se: (var / n).sqrt(),
        var_se: ((m4 - var_biased * var_biased).max(0.0) / n).sqrt(),
    })
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, point: &[f64], step: f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..point.len())
        .map(|j| {
            let orig = x[j];
            x[j] = orig + step;
            let up = f(&x);
            x[j] = orig - step;
            let down = f(&x);
            x[j] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Exact posterior of `θ ~ N(prior_mean, prior_var)` after observing
/// `y = x·θ + ε`, `ε ~ N(0, noise_var)`.
pub fn conjugate_linear_update(prior_mean: f64, prior_var: f64, x: f64, y: f64, noise_var: f64) -> (f64, f64) {
    let precision = 1.0 / prior_var + x * x / noise_var;
    let post_var = 1.0 / precision;
    (post_var * (prior_mean / prior_var + x * y / noise_var), post_var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_product_normalizer() {
        for &(m, v, s2) in &[(0.3, 0.5, 1.0), (-2.0, 0.01, 3.0), (4.0, 2.0, 0.2)] {
            let got = quad_tilted_moments(m, v, TiltFactor::SpikeSlab { slab_prob: 1.0, slab_var: s2 }).unwrap();
            assert!((got.z - gauss(0.0, m, v + s2)).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_point_mass_has_zero_mean() {
        let got = quad_tilted_moments(1.3, 0.4, TiltFactor::SpikeSlab { slab_prob: 0.0, slab_var: 1.0 }).unwrap();
        assert_eq!(got.mean, 0.0);
        assert_eq!(got.second_moment, 0.0);
        assert!((got.z - gauss(0.0, 1.3, 0.4)).abs() < 1e-15);
    }

    #[test]
    fn probit_tilted_mean_matches_classical_identity() {
        // E[w] = m + v·R(z)·c/sqrt(1 + c²v), z = (c·m + d)/sqrt(1 + c²v)
        for &(m, v, c, d) in &[(0.2, 0.7, 1.0, 0.0), (-1.0, 2.0, -0.5, 0.3), (3.0, 0.1, 2.0, -1.0)] {
            let got = quad_tilted_moments(m, v, TiltFactor::Probit { slope: c, offset: d }).unwrap();
            let s = (1.0 + c * c * v).sqrt();
            let z = (c * m + d) / s;
            let r = gauss(z, 0.0, 1.0) / reference_normal_cdf(z);
            assert!((got.z - reference_normal_cdf(z)).abs() < 1e-10);
            assert!((got.mean - (m + v * r * c / s)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_rejects_bad_cavity() {
        assert!(quad_tilted_moments(0.0, 0.0, TiltFactor::Probit { slope: 1.0, offset: 0.0 }).is_err());
    }

    #[test]
    fn mc_zero_variance_and_determinism() {
        let widths = [2, 3, 1];
        let n = 3 * 3 + 4 + 2;
        let means: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let zero = mc_output_moments(&widths, Activation::Tanh, &means, &vec![0.0; n], 100, 1).unwrap();
        assert_eq!(zero.var, 0.0);
        let vars = vec![0.01; n];
        let a = mc_output_moments(&widths, Activation::Tanh, &means, &vars, 1000, 4).unwrap();
        let b = mc_output_moments(&widths, Activation::Tanh, &means, &vars, 1000, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mc_linear_network_matches_exact_variance() {
        // f = (w0·x + w1)/sqrt(2) with w0 random and x fixed: Var = x²·v0/2
        let means = [0.5, -0.2, 1.5];
        let vars = [0.3, 0.0, 0.0];
        let mc = mc_output_moments(&[1, 1], Activation::Identity, &means, &vars, 200_000, 9).unwrap();
        let exact = 1.5 * 1.5 * 0.3 / 2.0;
        assert!((mc.var - exact).abs() < 3.0 * mc.var_se);
    }

    #[test]
    fn fd_of_quadratic_is_exact_up_to_rounding() {
        let g = fd_gradient(|x| 3.0 * x[0] * x[0] - x[0] * x[1] + 2.0 * x[1], &[1.0, -2.0], 1e-5);
        assert!((g[0] - 8.0).abs() < 1e-8);
        assert!((g[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fd_detects_corrupted_gradient() {
        let f = |x: &[f64]| x[0].sin() * x[1];
        let fd = fd_gradient(f, &[0.4, 2.0], 1e-5);
        let mut analytic = [0.4f64.cos() * 2.0, 0.4f64.sin()];
        assert!(analytic.iter().zip(&fd).all(|(a, b)| relative_error(*a, *b) < 1e-6));
        analytic[1] *= 1.01;
        assert!(analytic.iter().zip(&fd).any(|(a, b)| relative_error(*a, *b) > 1e-6));
    }

    #[test]
    fn conjugate_limits() {
        assert_eq!(conjugate_linear_update(0.7, 2.0, 0.0, 5.0, 1.0), (0.7, 2.0));
        let (m, v) = conjugate_linear_update(0.7, 2.0, 1.0, 5.0, 1e12);
        assert!((m - 0.7).abs() < 1e-10 && (v - 2.0).abs() < 1e-10);
        // one unit observation on a unit prior halves the variance
        let (m, v) = conjugate_linear_update(0.0, 1.0, 1.0, 2.0, 1.0);
        assert!((m - 1.0).abs() < 1e-15 && (v - 0.5).abs() < 1e-15);
    }
}
