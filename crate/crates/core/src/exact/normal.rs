//! Standard normal distribution function and its inverse.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Φ(z), evaluated through `erfc` so that both tails keep full relative accuracy.
pub fn normal_cdf<T: Real>(z: T) -> T {
    if z.is_nan() {
        return z;
    }
    let half = T::lit(0.5);
    let x = -z * T::FRAC_1_SQRT_2();
    let p = half * x.erfc();
    if z < T::lit(-2.0) {
        // In the lower tail erfc(x) behaves like exp(-x²), so the rounding of
        // x against z/√2 is amplified by 2x². Undo it with an exactly split
        // difference x² - z²/2.
        let xx = x * x;
        let xx_lo = x.mul_add(x, -xx);
        let zz = z * z;
        let zz_lo = z.mul_add(z, -zz);
        let d = (xx - zz * half) + (xx_lo - zz_lo * half);
        return p * d.exp();
    }
    p
}

/// Standard normal density.
pub fn normal_pdf<T: Real>(z: T) -> T {
    (-(z * z) * T::lit(0.5)).exp() / (T::TAU()).sqrt()
}

/// Φ⁻¹(p) for 0 < p < 1.
pub fn normal_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::ProbabilityDomain(p.as_f64()));
    }
    Ok(quantile_unchecked(p))
}

/// Φ⁻¹(p) without the domain check; callers guarantee 0 < p < 1.
pub(crate) fn quantile_unchecked<T: Real>(p: T) -> T {
    let half = T::lit(0.5);
    if p > half {
        // 1 - p is exact here.
        -lower_quantile(T::one() - p)
    } else {
        lower_quantile(p)
    }
}

// Rational starting approximation (relative error ~1e-9) refined by one Halley step.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
const P_LOW: f64 = 0.02425;

fn horner<T: Real>(coef: &[f64], x: T) -> T {
    coef.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

fn lower_quantile<T: Real>(p: T) -> T {
    let x = if p < T::lit(P_LOW) {
        let q = (T::lit(-2.0) * p.ln()).sqrt();
        horner(&C, q) / (horner(&D, q) * q + T::one())
    } else {
        let q = p - T::lit(0.5);
        let r = q * q;
        horner(&A, r) * q / (horner(&B, r) * r + T::one())
    };
    let e = normal_cdf(x) - p;
    let u = e * T::TAU().sqrt() * (x * x * T::lit(0.5)).exp();
    x - u / (T::one() + x * u * T::lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 50-digit arithmetic.
    const CDF_REF: [(f64, f64); 7] = [
        (-8.0, 6.220960574271784e-16),
        (-3.0, 1.3498980316300945e-3),
        (-1.0, 0.15865525393145705),
        (0.5, 0.6914624612740131),
        (1.959963984540054, 0.975),
        (3.0, 0.99865010196836991),
        (-37.0, 5.7255712225245768e-300),
    ];

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(normal_cdf(0.0_f64), 0.5);
    }

    #[test]
    fn cdf_matches_reference_values() {
        for (z, want) in CDF_REF {
            let got = normal_cdf(z);
            assert!(((got - want) / want).abs() < 1e-14, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn quantile_975() {
        let z = normal_quantile(0.975_f64).unwrap();
        assert!((z - 1.959963984540054).abs() < 1e-13);
        assert!((z - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for p in [1e-300_f64, 1e-10, 0.001, 0.02, 0.3, 0.5, 0.7, 0.999, 1.0 - 1e-12] {
            let z = normal_quantile(p).unwrap();
            let back = normal_cdf(z);
            assert!(((back - p) / p.min(1.0 - p).max(1e-300)).abs() < 1e-10 || (back - p).abs() < 1e-15, "p={p}");
        }
    }

    #[test]
    fn quantile_rejects_boundary() {
        assert!(normal_quantile(0.0_f64).is_err());
        assert!(normal_quantile(1.0_f64).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn single_precision_is_usable() {
        let z = normal_quantile(0.975_f32).unwrap();
        assert!((z - 1.959964).abs() < 1e-5);
        assert!((normal_cdf(z) - 0.975).abs() < 1e-6);
    }
}
