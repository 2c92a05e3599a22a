//! Adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_DEPTH: u32 = 60;

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]`, first splitting into `pieces` equal parts so
/// features narrower than the whole interval are not skipped.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    pieces: usize,
    abs_tol: f64,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Oracle(format!("bad integration interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let pieces = pieces.max(1);
    let width = (b - a) / pieces as f64;
    let mut total = 0.0;
    let mut stack: Vec<(f64, f64, u32)> = (0..pieces)
        .map(|i| (a + i as f64 * width, if i + 1 == pieces { b } else { a + (i + 1) as f64 * width }, 0))
        .collect();
    let span = b - a;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = kronrod(&f, lo, hi);
        if !val.is_finite() {
            return Err(Error::Oracle("integrand is not finite".into()));
        }
        let budget = abs_tol * (hi - lo) / span;
        if err <= budget.max(1e-15 * val.abs()) {
            total += val;
        } else if depth >= MAX_DEPTH {
            return Err(Error::Oracle(format!(
                "quadrature did not converge on [{lo}, {hi}] (error {err:e})"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 2.0 * x * x, -1.0, 2.0, 1, 1e-14).unwrap();
        let want = (64.0 - 1.0) / 6.0 - 2.0 * (8.0 + 1.0) / 3.0;
        assert!((v - want).abs() < 1e-13);
    }

    #[test]
    fn narrow_peak_is_found() {
        // 64 pieces of width 1.25 against a peak of width 0.05.
        let s = 0.05;
        let v = integrate(
            |x| (-0.5 * (x - 0.3) * (x - 0.3) / (s * s)).exp(),
            -40.0,
            40.0,
            64,
            1e-13,
        )
        .unwrap();
        assert!((v - s * (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }
}
