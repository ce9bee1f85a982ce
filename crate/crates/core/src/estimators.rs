//! Slope estimators, covariate summaries, the random- and fixed-effects
//! intervals and the three variance-component estimator pairs.

use crate::error::{Degeneracy, Error, Result};
use crate::exact::normal::normal_quantile;
use crate::model::Panel;
use crate::scalar::Real;

/// Covariate summaries that drive every coverage formula.
#[derive(Debug, Clone, PartialEq)]
pub struct XStats<T: Real = f64> {
    pub xbar_i: Vec<T>,
    pub xbar: T,
    pub ssb: T,
    pub ssw: T,
    /// `ssb / ssw`.
    pub r: T,
    /// `ssb / Var(x̄_i)`; compound symmetry only.
    pub p_squared: Option<T>,
}

/// Estimated (or known) error and random-effect variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePair<T: Real = f64> {
    pub sigma_eps_sq: T,
    pub sigma_mu_sq: T,
    /// `√(σ_μ²/σ_ε²)`.
    pub psi: T,
}

impl<T: Real> VariancePair<T> {
    pub fn new(sigma_eps_sq: T, sigma_mu_sq: T) -> Result<Self> {
        if !(sigma_eps_sq > T::zero() && sigma_eps_sq.is_finite()) {
            return Err(Error::Degenerate(Degeneracy::NonPositiveErrorVariance));
        }
        if !(sigma_mu_sq >= T::zero() && sigma_mu_sq.is_finite()) {
            return Err(Error::InvalidConfig(format!("random-effect variance {sigma_mu_sq} is invalid")));
        }
        Ok(Self { sigma_eps_sq, sigma_mu_sq, psi: (sigma_mu_sq / sigma_eps_sq).sqrt() })
    }

    /// The true pair, keeping `ψ` exactly as configured.
    pub fn known(sigma_eps: T, psi: T) -> Self {
        let sigma_mu = psi * sigma_eps;
        Self { sigma_eps_sq: sigma_eps * sigma_eps, sigma_mu_sq: sigma_mu * sigma_mu, psi }
    }

    pub fn sigma_eps(&self) -> T {
        self.sigma_eps_sq.sqrt()
    }
}

/// A symmetric confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T: Real = f64> {
    pub lower: T,
    pub upper: T,
    pub center: T,
    pub half_width: T,
}

impl<T: Real> Interval<T> {
    pub fn new(center: T, half_width: T) -> Self {
        Self { lower: center - half_width, upper: center + half_width, center, half_width }
    }

    /// Closed-interval membership, evaluated as `|v - center| <= half_width`.
    pub fn contains(&self, v: T) -> bool {
        (v - self.center).abs() <= self.half_width
    }
}

fn degenerate<T>(d: Degeneracy) -> Result<T> {
    Err(Error::Degenerate(d))
}

// Sums of squares below this fraction of the raw second moment are treated as zero.
fn tiny<T: Real>() -> T {
    T::epsilon() * T::lit(64.0)
}

fn means<T: Real>(p: &Panel<T>) -> (Vec<T>, T) {
    let tt = T::from_count(p.t());
    let m: Vec<T> = p.rows().map(|row| row.iter().copied().sum::<T>() / tt).collect();
    let grand = m.iter().copied().sum::<T>() / T::from_count(m.len());
    (m, grand)
}

/// Covariate summaries. `var_xbar` is `Var(x̄_i)` when known (compound symmetry).
pub fn xstats<T: Real>(x: &Panel<T>, var_xbar: Option<T>) -> Result<XStats<T>> {
    if x.n() < 2 || x.t() < 2 {
        return Err(Error::InvalidConfig(format!("panel must be at least 2x2, got {}x{}", x.n(), x.t())));
    }
    let (xbar_i, xbar) = means(x);
    let mut ssw = T::zero();
    let mut raw = T::zero();
    for (row, &m) in x.rows().zip(&xbar_i) {
        for &v in row {
            ssw = ssw + (v - m) * (v - m);
            raw = raw + v * v;
        }
    }
    let mut ssb = T::zero();
    let mut raw_b = T::zero();
    for &m in &xbar_i {
        ssb = ssb + (m - xbar) * (m - xbar);
        raw_b = raw_b + m * m;
    }
    if !(ssw > tiny::<T>() * raw) {
        return degenerate(Degeneracy::NoWithinVariation);
    }
    if !(ssb > tiny::<T>() * raw_b) {
        return degenerate(Degeneracy::NoBetweenVariation);
    }
    Ok(XStats { xbar_i, xbar, ssb, ssw, r: ssb / ssw, p_squared: var_xbar.map(|v| ssb / v) })
}

/// All first- and second-order sums needed by the estimators, computed in one pass.
#[derive(Debug, Clone)]
pub struct PanelSums<T: Real = f64> {
    pub xs: XStats<T>,
    pub ybar_i: Vec<T>,
    pub ybar: T,
    pub sxy_within: T,
    pub syy_within: T,
    pub sxy_between: T,
    pub syy_between: T,
}

impl<T: Real> PanelSums<T> {
    pub fn new(x: &Panel<T>, y: &Panel<T>, var_xbar: Option<T>) -> Result<Self> {
        if (x.n(), x.t()) != (y.n(), y.t()) {
            return Err(Error::InvalidConfig("x and y dimensions differ".into()));
        }
        let xs = xstats(x, var_xbar)?;
        let (ybar_i, ybar) = means(y);
        let (mut sxy_w, mut syy_w) = (T::zero(), T::zero());
        for ((&mx, &my), (xr, yr)) in xs.xbar_i.iter().zip(&ybar_i).zip(x.rows().zip(y.rows())) {
            for (&xv, &yv) in xr.iter().zip(yr) {
                let (dx, dy) = (xv - mx, yv - my);
                sxy_w = sxy_w + dx * dy;
                syy_w = syy_w + dy * dy;
            }
        }
        let (mut sxy_b, mut syy_b) = (T::zero(), T::zero());
        for (&mx, &my) in xs.xbar_i.iter().zip(&ybar_i) {
            let (dx, dy) = (mx - xs.xbar, my - ybar);
            sxy_b = sxy_b + dx * dy;
            syy_b = syy_b + dy * dy;
        }
        Ok(Self { xs, ybar_i, ybar, sxy_within: sxy_w, syy_within: syy_w, sxy_between: sxy_b, syy_between: syy_b })
    }

    pub fn beta_within(&self) -> T {
        self.sxy_within / self.xs.ssw
    }

    pub fn beta_between(&self) -> T {
        self.sxy_between / self.xs.ssb
    }

    fn n(&self) -> usize {
        self.ybar_i.len()
    }

    /// Within-model residual sum of squares (no intercept after demeaning).
    fn within_rss(&self, x: &Panel<T>, y: &Panel<T>) -> T {
        let b = self.beta_within();
        let mut s = T::zero();
        for i in 0..self.n() {
            let (mx, my) = (self.xs.xbar_i[i], self.ybar_i[i]);
            for (&xv, &yv) in x.row(i).iter().zip(y.row(i)) {
                let e = (yv - my) - b * (xv - mx);
                s = s + e * e;
            }
        }
        s
    }

    /// Between-model residual sum of squares, intercept included.
    fn between_rss(&self) -> T {
        let b = self.beta_between();
        self.xs
            .xbar_i
            .iter()
            .zip(&self.ybar_i)
            .map(|(&mx, &my)| {
                let e = (my - self.ybar) - b * (mx - self.xs.xbar);
                e * e
            })
            .sum()
    }
}

/// Fixed-effects (within) slope.
pub fn beta_within<T: Real>(x: &Panel<T>, y: &Panel<T>) -> Result<T> {
    Ok(PanelSums::new(x, y, None)?.beta_within())
}

/// Between-effects slope.
pub fn beta_between<T: Real>(x: &Panel<T>, y: &Panel<T>) -> Result<T> {
    Ok(PanelSums::new(x, y, None)?.beta_between())
}

/// `ψ² + 1/T`.
pub fn q_factor<T: Real>(psi: T, t: usize) -> T {
    psi * psi + T::one() / T::from_count(t)
}

/// Weight on the within estimator in the GLS combination, `q / (q + r)`.
pub fn gls_weight<T: Real>(r: T, q: T) -> T {
    q / (q + r)
}

/// Random-effects GLS slope as the precision-weighted combination of the
/// within and between slopes.
pub fn beta_gls<T: Real>(beta_w: T, beta_b: T, r: T, psi: T, t: usize) -> T {
    let w = gls_weight(r, q_factor(psi, t));
    w * beta_w + (T::one() - w) * beta_b
}

fn z_half<T: Real>(alpha: T) -> Result<T> {
    normal_quantile(T::one() - alpha * T::lit(0.5))
}

/// `I(ψ)`: interval centred at the GLS slope with variance `σ_ε² q / (SSW (q + r))`.
pub fn ci_random_effects<T: Real>(
    beta_gls: T,
    ssw: T,
    r: T,
    psi: T,
    t: usize,
    sigma_eps: T,
    alpha: T,
) -> Result<Interval<T>> {
    let q = q_factor(psi, t);
    let var = sigma_eps * sigma_eps * q / (ssw * (q + r));
    Ok(Interval::new(beta_gls, z_half(alpha)? * var.sqrt()))
}

/// `J(σ_ε)`: interval centred at the within slope with variance `σ_ε² / SSW`.
pub fn ci_within<T: Real>(beta_w: T, ssw: T, sigma_eps: T, alpha: T) -> Result<Interval<T>> {
    Ok(Interval::new(beta_w, z_half(alpha)? * sigma_eps / ssw.sqrt()))
}

/// Moment estimators from within and between residuals.
pub fn variance_unbiased<T: Real>(x: &Panel<T>, y: &Panel<T>) -> Result<VariancePair<T>> {
    unbiased_from(&PanelSums::new(x, y, None)?, x, y)
}

pub(crate) fn unbiased_from<T: Real>(s: &PanelSums<T>, x: &Panel<T>, y: &Panel<T>) -> Result<VariancePair<T>> {
    let (n, t) = (x.n(), x.t());
    let rss_w = s.within_rss(x, y);
    if !(rss_w > tiny::<T>() * s.syy_within) {
        return degenerate(Degeneracy::PerfectWithinFit);
    }
    let dof_w = n * (t - 1) - 1;
    let eps_sq = rss_w / T::from_count(dof_w);
    let mu_raw = s.between_rss() / T::from_count(n - 2) - rss_w / T::from_count(t * dof_w);
    VariancePair::new(eps_sq, mu_raw.max(T::zero()))
}

/// Moment estimators from pooled-OLS residuals with `dof_correction ∈ {0, 2}`.
pub fn variance_wooldridge<T: Real>(x: &Panel<T>, y: &Panel<T>, dof_correction: u8) -> Result<VariancePair<T>> {
    wooldridge_from(&PanelSums::new(x, y, None)?, x, y, dof_correction)
}

/// Relative clamp applied to a negative error-variance estimate.
pub const WOOLDRIDGE_CLAMP: f64 = 1e-6;

pub(crate) fn wooldridge_from<T: Real>(
    s: &PanelSums<T>,
    x: &Panel<T>,
    y: &Panel<T>,
    dof_correction: u8,
) -> Result<VariancePair<T>> {
    let (n, t) = (x.n(), x.t());
    let k = dof_correction as usize;
    let pairs = n * t * (t - 1) / 2;
    if n * t <= k || pairs <= k {
        return Err(Error::InvalidConfig(format!("panel {n}x{t} too small for dof correction {k}")));
    }
    let tt = T::from_count(t);
    let slope = (s.sxy_within + tt * s.sxy_between) / (s.xs.ssw + tt * s.xs.ssb);
    let mut resid = vec![T::zero(); t];
    let (mut ss, mut cross) = (T::zero(), T::zero());
    for i in 0..n {
        for (e, (&xv, &yv)) in resid.iter_mut().zip(x.row(i).iter().zip(y.row(i))) {
            *e = (yv - s.ybar) - slope * (xv - s.xs.xbar);
            ss = ss + *e * *e;
        }
        for a in 0..t {
            for b in a + 1..t {
                cross = cross + resid[a] * resid[b];
            }
        }
    }
    let mu_raw = cross / T::from_count(pairs - k);
    let eps_raw = ss / T::from_count(n * t - k) - mu_raw;
    let eps_sq = eps_raw.max(-T::lit(WOOLDRIDGE_CLAMP) * eps_raw);
    if !(eps_sq > T::zero()) {
        return degenerate(Degeneracy::NonPositiveErrorVariance);
    }
    VariancePair::new(eps_sq, mu_raw.max(T::zero()))
}

/// Upper end of the `ψ` search interval for the likelihood maximiser.
pub const PSI_MAX: f64 = 50.0;
const PSI_TOL: f64 = 1e-10;

struct Profile<'a, T: Real> {
    s: &'a PanelSums<T>,
    n: T,
    t: T,
    nt: T,
    scale: T,
}

impl<'a, T: Real> Profile<'a, T> {
    fn new(s: &'a PanelSums<T>, n: usize, t: usize) -> Self {
        let scale = s.syy_within + s.syy_between;
        let scale = if scale > T::zero() { scale } else { T::one() };
        Self { s, n: T::from_count(n), t: T::from_count(t), nt: T::from_count(n * t), scale }
    }

    /// Generalised residual sum of squares at the optimal slope for this `ψ`.
    fn q_sum(&self, psi: T) -> T {
        let s = self.s;
        let inv_q = T::one() / (psi * psi + T::one() / self.t);
        let beta = (s.sxy_within + inv_q * s.sxy_between) / (s.xs.ssw + inv_q * s.xs.ssb);
        let w = s.syy_within - T::lit(2.0) * beta * s.sxy_within + beta * beta * s.xs.ssw;
        let b = s.syy_between - T::lit(2.0) * beta * s.sxy_between + beta * beta * s.xs.ssb;
        w + inv_q * b
    }

    // Profile log-likelihood up to an additive constant depending only on the data scale.
    fn relative(&self, psi: T) -> T {
        let half = T::lit(0.5);
        -half * self.nt * (self.q_sum(psi) / self.scale).ln() - half * self.n * (T::one() + self.t * psi * psi).ln()
    }

    fn absolute(&self, psi: T) -> T {
        let half = T::lit(0.5);
        let var = self.q_sum(psi) / self.nt;
        -half * self.nt * ((T::TAU() * var).ln() + T::one()) - half * self.n * (T::one() + self.t * psi * psi).ln()
    }
}

/// Gaussian log-likelihood of the random-effects working model, maximised
/// over the intercept and slope, at the given variance pair.
pub fn log_likelihood<T: Real>(x: &Panel<T>, y: &Panel<T>, sigma_eps_sq: T, sigma_mu_sq: T) -> Result<T> {
    let s = PanelSums::new(x, y, None)?;
    let (n, t) = (x.n(), x.t());
    let psi = (sigma_mu_sq / sigma_eps_sq).sqrt();
    let q = Profile::new(&s, n, t).q_sum(psi);
    let half = T::lit(0.5);
    let nt = T::from_count(n * t);
    Ok(-half * nt * (T::TAU() * sigma_eps_sq).ln()
        - half * T::from_count(n) * (T::one() + T::from_count(t) * psi * psi).ln()
        - half * q / sigma_eps_sq)
}

/// Maximum likelihood under the working random-effects model with `σ_μ² ≥ 0`.
///
/// `(a, β)` and `σ_ε²` are profiled out in closed form; the remaining
/// one-dimensional problem in `ψ ∈ [0, 50]` is bracketed on a log-spaced scan
/// and finished with golden-section search.
pub fn variance_mle<T: Real>(x: &Panel<T>, y: &Panel<T>) -> Result<VariancePair<T>> {
    mle_from(&PanelSums::new(x, y, None)?, x, y)
}

pub(crate) fn mle_from<T: Real>(s: &PanelSums<T>, x: &Panel<T>, y: &Panel<T>) -> Result<VariancePair<T>> {
    let (n, t) = (x.n(), x.t());
    if !(s.within_rss(x, y) > tiny::<T>() * s.syy_within) {
        return degenerate(Degeneracy::PerfectWithinFit);
    }
    let prof = Profile::new(s, n, t);
    let f = |psi: T| prof.relative(psi);

    // Scan: 0 followed by a geometric grid on [1e-3, PSI_MAX].
    const SCAN: usize = 48;
    let mut grid = Vec::with_capacity(SCAN + 1);
    grid.push(T::zero());
    let (lo, hi) = (T::lit(1e-3).ln(), T::lit(PSI_MAX).ln());
    for j in 0..SCAN {
        grid.push((lo + (hi - lo) * T::from_count(j) / T::from_count(SCAN - 1)).exp());
    }
    let vals: Vec<T> = grid.iter().map(|&g| f(g)).collect();
    let best = (0..grid.len()).filter(|&j| vals[j].is_finite()).fold(None, |acc: Option<usize>, j| match acc {
        Some(b) if vals[b] >= vals[j] => Some(b),
        _ => Some(j),
    });
    let Some(best) = best else {
        return Err(Error::NonConvergence { best_psi: f64::NAN, best_loglik: f64::NAN });
    };
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];

    let inv_phi = T::lit(0.5) * (T::lit(5.0).sqrt() - T::one());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let tol = T::lit(PSI_TOL).max(T::epsilon() * T::lit(4.0));
    let mut iters = 0;
    while (b - a) > tol {
        iters += 1;
        if iters > 200 {
            let p = if fc > fd { c } else { d };
            return Err(Error::NonConvergence { best_psi: p.as_f64(), best_loglik: prof.absolute(p).as_f64() });
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = T::lit(0.5) * (a + b);
    let mut psi = mid;
    let mut fbest = f(mid);
    let v = f(grid[best]);
    if v > fbest {
        psi = grid[best];
        fbest = v;
    }
    // The boundary wins ties up to rounding.
    let v = f(T::zero());
    if v >= fbest - T::epsilon() * T::lit(16.0) * fbest.abs() {
        psi = T::zero();
        fbest = v;
    }
    if !fbest.is_finite() {
        return Err(Error::NonConvergence { best_psi: psi.as_f64(), best_loglik: prof.absolute(psi).as_f64() });
    }
    let eps_sq = prof.q_sum(psi) / prof.nt;
    VariancePair::new(eps_sq, psi * psi * eps_sq)
}
