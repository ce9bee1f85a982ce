//! Exact conditional coverage of the known-variance two-stage interval under
//! compound symmetry, plus the normal and bivariate normal primitives.

pub mod bvn;
pub mod normal;

pub use bvn::{bvn_cdf, bvn_rect, bvn_upper, BvnMoments};
pub use normal::{normal_cdf, normal_pdf, normal_quantile};

use crate::error::{Error, Result};
use crate::estimators::{q_factor, XStats};
use crate::scalar::Real;

/// Conditional moments of `(g_I, h)` and `(g_J, h)` given the covariates.
///
/// `g_I`, `g_J` are the standardized errors of the random- and fixed-effects
/// centres, `h` the signed root of the Hausman statistic.
pub fn conditional_moments<T: Real>(p: T, r: T, psi: T, tau: T, t: usize) -> Result<(BvnMoments<T>, BvnMoments<T>)> {
    if !(p > T::zero() && r > T::zero()) {
        return Err(Error::Inadmissible(format!("need p > 0 and r > 0, got p = {p}, r = {r}")));
    }
    if !(tau.abs() < T::one() && psi >= T::zero()) {
        return Err(Error::Inadmissible(format!("tau = {tau}, psi = {psi}")));
    }
    let one = T::one();
    let q = q_factor(psi, t);
    let tp = tau * psi;
    let tp2 = tp * tp;
    let a = q + q * q / r;
    let b = r + q;
    let var_g = one - tp2 / a;
    let var_h = one - tp2 / b;
    if !(var_g > T::zero() && var_h > T::zero()) {
        return Err(Error::Inadmissible(format!("conditional variances ({var_g}, {var_h}) not positive")));
    }
    let spread = (one + q / r).sqrt();
    let gi = BvnMoments {
        mean_g: tp * p / a.sqrt(),
        mean_h: -tp * p / b.sqrt(),
        var_g,
        var_h,
        cov_gh: tp2 / ((q * r + q * q).sqrt() * spread),
    };
    let gj = BvnMoments { mean_g: T::zero(), mean_h: gi.mean_h, var_g: one, var_h, cov_gh: one / spread };
    Ok((gi, gj))
}

/// Normal critical values for one `(α, α̃)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Critical<T: Real = f64> {
    pub alpha: T,
    /// `z_{1-α/2}`.
    pub z_ci: T,
    /// `z_{1-α̃/2}`.
    pub z_test: T,
}

impl<T: Real> Critical<T> {
    pub fn new(alpha: T, alpha_tilde: T) -> Result<Self> {
        let half = T::lit(0.5);
        Ok(Self {
            alpha,
            z_ci: normal_quantile(T::one() - alpha * half)?,
            z_test: normal_quantile(T::one() - alpha_tilde * half)?,
        })
    }

    /// Acceptance threshold for the Hausman statistic, `z²_{1-α̃/2}`.
    pub fn threshold(&self) -> T {
        self.z_test * self.z_test
    }
}

/// `P(β ∈ K | x)` from the moments of the standardized statistics.
pub fn coverage_from_moments<T: Real>(gi: &BvnMoments<T>, gj: &BvnMoments<T>, crit: &Critical<T>) -> T {
    let (z, zt) = (crit.z_ci, crit.z_test);
    let with_i = bvn_rect(gi, -z, z, -zt, zt);
    let with_j = bvn_rect(gj, -z, z, -zt, zt);
    (T::one() - crit.alpha + with_i - with_j).max(T::zero()).min(T::one())
}

/// Exact coverage of the two-stage interval given the covariates, known variances.
pub fn conditional_coverage_known<T: Real>(
    xs: &XStats<T>,
    psi: T,
    tau: T,
    t: usize,
    alpha: T,
    alpha_tilde: T,
) -> Result<T> {
    let crit = Critical::new(alpha, alpha_tilde)?;
    conditional_coverage_with(xs, psi, tau, t, &crit)
}

pub(crate) fn conditional_coverage_with<T: Real>(
    xs: &XStats<T>,
    psi: T,
    tau: T,
    t: usize,
    crit: &Critical<T>,
) -> Result<T> {
    let p2 = xs.p_squared.ok_or(Error::UnsupportedStructure)?;
    let (gi, gj) = conditional_moments(p2.sqrt(), xs.r, psi, tau, t)?;
    Ok(coverage_from_moments(&gi, &gj, crit))
}
