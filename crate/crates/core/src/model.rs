//! Data-generating process for the one-way panel model
//! `y_it = a + β x_it + μ_i + ε_it` with a correlated random effect.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Correlation structure of `(x_i1, …, x_iT)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrStructure {
    /// Unit diagonal, `ρ` everywhere else.
    CompoundSymmetry,
    /// `G_ij = ρ^|i-j|`.
    Ar1,
}

impl CorrStructure {
    pub fn name(self) -> &'static str {
        match self {
            CorrStructure::CompoundSymmetry => "cs",
            CorrStructure::Ar1 => "ar1",
        }
    }
}

impl std::fmt::Display for CorrStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which error/random-effect variances feed the two-stage interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// The true `(σ_ε², σ_μ²)`.
    KnownVariances,
    /// Within/between residual moment estimators.
    Unbiased,
    /// Profile maximum likelihood under the random-effects working model.
    Mle,
    /// Pooled-OLS residual moment estimators with `K ∈ {0, 2}`.
    Wooldridge { dof_correction: u8 },
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::KnownVariances => "known",
            EstimatorKind::Unbiased => "unbiased",
            EstimatorKind::Mle => "mle",
            EstimatorKind::Wooldridge { dof_correction: 0 } => "wooldridge0",
            EstimatorKind::Wooldridge { .. } => "wooldridge2",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-exogeneity as given by the caller: `τ` directly, or `λ = √N τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonexogeneity<T: Real = f64> {
    Tau(T),
    Lambda(T),
}

/// A validated simulation scenario.
///
/// `σ_μ` is not stored; it is always `ψ σ_ε`, so `ψ = σ_μ/σ_ε` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig<T: Real = f64> {
    n: usize,
    t: usize,
    structure: CorrStructure,
    rho: T,
    tau: T,
    psi: T,
    sigma_eps: T,
    sigma_x: T,
    a: T,
    beta: T,
    alpha: T,
    alpha_tilde: T,
    estimator: EstimatorKind,
}

/// Builder for [`ModelConfig`]. Defaults reproduce the compound-symmetry
/// scenario with `ρ = 0.3, N = 100, T = 3, ψ = 1/3, α = α̃ = 0.05`, unbiased
/// variance estimators and `τ = 0`.
#[derive(Debug, Clone)]
pub struct ConfigBuilder<T: Real = f64> {
    pub n: usize,
    pub t: usize,
    pub structure: CorrStructure,
    pub rho: T,
    pub nonexogeneity: Nonexogeneity<T>,
    pub psi: Option<T>,
    pub sigma_mu: Option<T>,
    pub sigma_eps: T,
    pub sigma_x: T,
    pub a: T,
    pub beta: T,
    pub alpha: T,
    pub alpha_tilde: T,
    pub estimator: EstimatorKind,
}

impl<T: Real> Default for ConfigBuilder<T> {
    fn default() -> Self {
        Self {
            n: 100,
            t: 3,
            structure: CorrStructure::CompoundSymmetry,
            rho: T::lit(0.3),
            nonexogeneity: Nonexogeneity::Tau(T::zero()),
            psi: Some(T::one() / T::lit(3.0)),
            sigma_mu: None,
            sigma_eps: T::one(),
            sigma_x: T::one(),
            a: T::zero(),
            beta: T::zero(),
            alpha: T::lit(0.05),
            alpha_tilde: T::lit(0.05),
            estimator: EstimatorKind::Unbiased,
        }
    }
}

macro_rules! setter {
    ($name:ident, $ty:ty) => {
        pub fn $name(mut self, v: $ty) -> Self {
            self.$name = v;
            self
        }
    };
}

impl<T: Real> ConfigBuilder<T> {
    setter!(n, usize);
    setter!(t, usize);
    setter!(structure, CorrStructure);
    setter!(rho, T);
    setter!(sigma_eps, T);
    setter!(sigma_x, T);
    setter!(a, T);
    setter!(beta, T);
    setter!(alpha, T);
    setter!(alpha_tilde, T);
    setter!(estimator, EstimatorKind);

    pub fn tau(mut self, tau: T) -> Self {
        self.nonexogeneity = Nonexogeneity::Tau(tau);
        self
    }

    pub fn lambda(mut self, lambda: T) -> Self {
        self.nonexogeneity = Nonexogeneity::Lambda(lambda);
        self
    }

    pub fn psi(mut self, psi: T) -> Self {
        self.psi = Some(psi);
        self.sigma_mu = None;
        self
    }

    pub fn sigma_mu(mut self, sigma_mu: T) -> Self {
        self.sigma_mu = Some(sigma_mu);
        self.psi = None;
        self
    }

    pub fn build(self) -> Result<ModelConfig<T>> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 3 {
            return invalid(format!("N must be at least 3, got {}", self.n));
        }
        if self.t < 2 {
            return invalid(format!("T must be at least 2, got {}", self.t));
        }
        if !(self.sigma_eps > T::zero() && self.sigma_eps.is_finite()) {
            return invalid(format!("sigma_eps must be positive, got {}", self.sigma_eps));
        }
        let psi = match (self.psi, self.sigma_mu) {
            (Some(p), None) => p,
            (None, Some(s)) => s / self.sigma_eps,
            (Some(p), Some(s)) if p * self.sigma_eps == s => p,
            (Some(_), Some(_)) => return invalid("psi and sigma_mu disagree".into()),
            (None, None) => return invalid("one of psi or sigma_mu is required".into()),
        };
        let tau = match self.nonexogeneity {
            Nonexogeneity::Tau(t) => t,
            Nonexogeneity::Lambda(l) => {
                let root_n = T::from_count(self.n).sqrt();
                if !(l.abs() < root_n) {
                    return invalid(format!("lambda = {l} outside (-sqrt(N), sqrt(N)) = (-{root_n}, {root_n})"));
                }
                l / root_n
            }
        };
        let cfg = ModelConfig {
            n: self.n,
            t: self.t,
            structure: self.structure,
            rho: self.rho,
            tau,
            psi,
            sigma_eps: self.sigma_eps,
            sigma_x: self.sigma_x,
            a: self.a,
            beta: self.beta,
            alpha: self.alpha,
            alpha_tilde: self.alpha_tilde,
            estimator: self.estimator,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl<T: Real> ModelConfig<T> {
    pub fn builder() -> ConfigBuilder<T> {
        ConfigBuilder::default()
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        let zero = T::zero();
        let one = T::one();
        if !(self.rho.abs() < one) {
            return invalid(format!("|rho| must be below 1, got {}", self.rho));
        }
        if !(self.tau.abs() < one) {
            return invalid(format!("|tau| must be below 1, got {}", self.tau));
        }
        if !(self.psi >= zero && self.psi.is_finite()) {
            return invalid(format!("psi must be non-negative, got {}", self.psi));
        }
        if !(self.sigma_x > zero && self.sigma_x.is_finite()) {
            return invalid(format!("sigma_x must be positive, got {}", self.sigma_x));
        }
        if !(self.a.is_finite() && self.beta.is_finite()) {
            return invalid("a and beta must be finite".into());
        }
        if !(self.alpha > zero && self.alpha < one) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.alpha_tilde > zero && self.alpha_tilde < one) {
            return invalid(format!("alpha_tilde must lie in (0, 1), got {}", self.alpha_tilde));
        }
        if let EstimatorKind::Wooldridge { dof_correction } = self.estimator {
            if dof_correction != 0 && dof_correction != 2 {
                return invalid(format!("Wooldridge dof correction must be 0 or 2, got {dof_correction}"));
            }
        }
        crate::exact::Critical::new(self.alpha, self.alpha_tilde).map_err(|_| {
            Error::InvalidConfig("alpha or alpha_tilde too close to 0 for the working precision".into())
        })?;
        let tt = tau_to_tautilde(self.tau, self.rho, self.t, self.structure)?;
        unit_factor(tt, self.rho, self.t, self.structure)?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn structure(&self) -> CorrStructure {
        self.structure
    }
    pub fn rho(&self) -> T {
        self.rho
    }
    pub fn tau(&self) -> T {
        self.tau
    }
    /// `λ = √N τ`.
    pub fn lambda(&self) -> T {
        self.tau * T::from_count(self.n).sqrt()
    }
    pub fn psi(&self) -> T {
        self.psi
    }
    pub fn sigma_eps(&self) -> T {
        self.sigma_eps
    }
    pub fn sigma_mu(&self) -> T {
        self.psi * self.sigma_eps
    }
    pub fn sigma_x(&self) -> T {
        self.sigma_x
    }
    pub fn intercept(&self) -> T {
        self.a
    }
    pub fn slope(&self) -> T {
        self.beta
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }
    pub fn alpha_tilde(&self) -> T {
        self.alpha_tilde
    }
    pub fn estimator(&self) -> EstimatorKind {
        self.estimator
    }

    pub fn tautilde(&self) -> T {
        // validated at construction
        tau_to_tautilde(self.tau, self.rho, self.t, self.structure).unwrap_or_else(|_| T::nan())
    }

    /// `Var(x̄_i)`, available for compound symmetry only.
    pub fn var_xbar(&self) -> Option<T> {
        match self.structure {
            CorrStructure::CompoundSymmetry => var_xbar_cs(self.rho, self.sigma_x, self.t).ok(),
            CorrStructure::Ar1 => None,
        }
    }

    /// Returns an edited copy after re-validating.
    pub fn edit(&self, f: impl FnOnce(&mut ConfigBuilder<T>)) -> Result<Self> {
        let mut b = self.to_builder();
        f(&mut b);
        b.build()
    }

    pub fn to_builder(&self) -> ConfigBuilder<T> {
        ConfigBuilder {
            n: self.n,
            t: self.t,
            structure: self.structure,
            rho: self.rho,
            nonexogeneity: Nonexogeneity::Tau(self.tau),
            psi: Some(self.psi),
            sigma_mu: None,
            sigma_eps: self.sigma_eps,
            sigma_x: self.sigma_x,
            a: self.a,
            beta: self.beta,
            alpha: self.alpha,
            alpha_tilde: self.alpha_tilde,
            estimator: self.estimator,
        }
    }

    pub fn with_tau(&self, tau: T) -> Result<Self> {
        self.edit(|b| b.nonexogeneity = Nonexogeneity::Tau(tau))
    }

    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        self.edit(|b| b.nonexogeneity = Nonexogeneity::Lambda(lambda))
    }

    pub fn with_estimator(&self, estimator: EstimatorKind) -> Result<Self> {
        self.edit(|b| b.estimator = estimator)
    }
}

/// `τ = τ̃ · factor`; this returns `factor²`.
fn tau_factor_sq<T: Real>(rho: T, t: usize, structure: CorrStructure) -> T {
    let tt = T::from_count(t);
    let one = T::one();
    match structure {
        CorrStructure::CompoundSymmetry => tt / (one + (tt - one) * rho),
        CorrStructure::Ar1 => (tt * (one - rho) + T::lit(2.0) * rho) / (one + rho),
    }
}

fn tau_factor<T: Real>(rho: T, t: usize, structure: CorrStructure) -> Result<T> {
    let f2 = tau_factor_sq(rho, t, structure);
    if !(f2 > T::zero() && f2.is_finite()) {
        return Err(Error::Inadmissible(format!("conversion factor undefined for rho = {rho}, T = {t}, {structure}")));
    }
    Ok(f2.sqrt())
}

/// Converts the non-exogeneity correlation `τ` to the covariance parameter `τ̃`.
pub fn tau_to_tautilde<T: Real>(tau: T, rho: T, t: usize, structure: CorrStructure) -> Result<T> {
    if t < 2 || !(rho.abs() < T::one()) {
        return Err(Error::Inadmissible(format!("rho = {rho}, T = {t}")));
    }
    if !(tau.abs() < T::one()) {
        return Err(Error::Inadmissible(format!("tau = {tau}")));
    }
    let tt = tau / tau_factor(rho, t, structure)?;
    unit_factor(tt, rho, t, structure)?;
    Ok(tt)
}

/// Inverse of [`tau_to_tautilde`].
pub fn tautilde_to_tau<T: Real>(tautilde: T, rho: T, t: usize, structure: CorrStructure) -> Result<T> {
    Ok(tautilde * tau_factor(rho, t, structure)?)
}

/// `Var(x̄_i) = σ_x²(1 + (T-1)ρ)/T` under compound symmetry.
pub fn var_xbar_cs<T: Real>(rho: T, sigma_x: T, t: usize) -> Result<T> {
    let tt = T::from_count(t);
    let v = sigma_x * sigma_x * (T::one() + (tt - T::one()) * rho) / tt;
    if !(v > T::zero()) {
        return Err(Error::Inadmissible(format!("Var(xbar) = {v} is not positive for rho = {rho}, T = {t}")));
    }
    Ok(v)
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T: Real = f64> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Lower Cholesky factor, row-major.
    ///
    /// Pivots in `[-1e-12·scale, 0]` are clamped to zero so that matrices on
    /// the positive-semidefinite boundary factor cleanly; anything more
    /// negative is rejected.
    pub fn cholesky(&self) -> Result<Vec<T>> {
        let n = self.dim;
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(T::zero(), T::max);
        let tol = T::lit(1e-12) * scale.max(T::min_positive_value());
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if d < -tol || d.is_nan() {
                return Err(Error::Inadmissible(format!(
                    "covariance matrix not positive semidefinite (pivot {d} at {j})"
                )));
            }
            let ljj = if d <= tol { T::zero() } else { d.sqrt() };
            l[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = if ljj > T::zero() { s / ljj } else { T::zero() };
            }
        }
        Ok(l)
    }
}

fn g_entry<T: Real>(rho: T, i: usize, j: usize, structure: CorrStructure) -> T {
    if i == j {
        return T::one();
    }
    match structure {
        CorrStructure::CompoundSymmetry => rho,
        CorrStructure::Ar1 => rho.powi(i.abs_diff(j) as i32),
    }
}

/// The `(T+1)×(T+1)` covariance of `(μ_i, x_i1, …, x_iT)`.
pub fn build_covariance<T: Real>(
    tautilde: T,
    rho: T,
    sigma_mu: T,
    sigma_x: T,
    t: usize,
    structure: CorrStructure,
) -> Result<SymMatrix<T>> {
    let dim = t + 1;
    let mut data = vec![T::zero(); dim * dim];
    data[0] = sigma_mu * sigma_mu;
    let off = tautilde * sigma_mu * sigma_x;
    for j in 1..dim {
        data[j] = off;
        data[j * dim] = off;
        for k in 1..dim {
            data[j * dim + k] = sigma_x * sigma_x * g_entry(rho, j - 1, k - 1, structure);
        }
    }
    let m = SymMatrix { dim, data };
    m.cholesky()
        .map_err(|_| Error::Inadmissible(format!("inadmissible (tautilde, rho, T) = ({tautilde}, {rho}, {t})")))?;
    Ok(m)
}

/// Cholesky factor of the unit-scale covariance `[[1, τ̃e'], [τ̃e, G]]`.
fn unit_factor<T: Real>(tautilde: T, rho: T, t: usize, structure: CorrStructure) -> Result<Vec<T>> {
    build_covariance(tautilde, rho, T::one(), T::one(), t, structure)?.cholesky()
}

/// An `N×T` matrix, one row per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel<T: Real = f64> {
    n: usize,
    t: usize,
    data: Vec<T>,
}

impl<T: Real> Panel<T> {
    pub fn new(n: usize, t: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * t {
            return Err(Error::InvalidConfig(format!("panel data has {} entries, expected {n}x{t}", data.len())));
        }
        Ok(Self { n, t, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != t) {
            return Err(Error::InvalidConfig("ragged panel rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(n, t, data)
    }

    pub fn zeros(n: usize, t: usize) -> Self {
        Self { n, t, data: vec![T::zero(); n * t] }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn get(&self, i: usize, t: usize) -> T {
        self.data[i * self.t + t]
    }
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.t..(i + 1) * self.t]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.t.max(1))
    }
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { n: self.n, t: self.t, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Element-wise combination; dimensions must agree.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.n, self.t), (other.n, other.t), "panel dimensions differ");
        Self { n: self.n, t: self.t, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }
}

/// Standard-normal base draws for one simulated dataset.
///
/// `z_mu_x` holds `N` rows of `T+1` values feeding `(μ_i, x_i1, …, x_iT)`;
/// `z_eps` holds `N` rows of `T` values feeding `ε_it`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseNoise<T: Real = f64> {
    n: usize,
    t: usize,
    z_mu_x: Vec<T>,
    z_eps: Vec<T>,
}

impl<T: Real> BaseNoise<T> {
    pub fn from_parts(n: usize, t: usize, z_mu_x: Vec<T>, z_eps: Vec<T>) -> Result<Self> {
        if z_mu_x.len() != n * (t + 1) || z_eps.len() != n * t {
            return Err(Error::InvalidConfig(format!("noise dimensions do not match N = {n}, T = {t}")));
        }
        if z_mu_x.iter().chain(&z_eps).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("noise contains non-finite values".into()));
        }
        Ok(Self { n, t, z_mu_x, z_eps })
    }

    pub fn zeros(n: usize, t: usize) -> Self {
        Self { n, t, z_mu_x: vec![T::zero(); n * (t + 1)], z_eps: vec![T::zero(); n * t] }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn z_mu_x(&self) -> &[T] {
        &self.z_mu_x
    }
    pub fn z_eps(&self) -> &[T] {
        &self.z_eps
    }
}

/// One realised dataset together with its latent components.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDraw<T: Real = f64> {
    pub x: Panel<T>,
    pub y: Panel<T>,
    pub mu: Vec<T>,
    pub eps: Panel<T>,
}

/// Turns base noise into panels for a fixed configuration.
///
/// The Cholesky factor is computed once at construction.
#[derive(Debug, Clone)]
pub struct PanelGenerator<T: Real = f64> {
    config: ModelConfig<T>,
    factor: Vec<T>,
}

impl<T: Real> PanelGenerator<T> {
    pub fn new(config: &ModelConfig<T>) -> Result<Self> {
        let factor = unit_factor(config.tautilde(), config.rho, config.t, config.structure)?;
        Ok(Self { config: config.clone(), factor })
    }

    pub fn config(&self) -> &ModelConfig<T> {
        &self.config
    }

    /// Generates with the configured intercept and slope.
    pub fn generate(&self, noise: &BaseNoise<T>) -> Result<PanelDraw<T>> {
        self.generate_with(noise, self.config.a, self.config.beta)
    }

    /// Generates with an explicit intercept and slope.
    pub fn generate_with(&self, noise: &BaseNoise<T>, a: T, beta: T) -> Result<PanelDraw<T>> {
        let cfg = &self.config;
        let (n, t) = (cfg.n, cfg.t);
        if noise.n != n || noise.t != t {
            return Err(Error::InvalidConfig(format!("noise is {}x{}, configuration needs {n}x{t}", noise.n, noise.t)));
        }
        let dim = t + 1;
        let sigma_mu = cfg.sigma_mu();
        let mut x = Vec::with_capacity(n * t);
        let mut mu = Vec::with_capacity(n);
        let mut std = vec![T::zero(); dim];
        for z in noise.z_mu_x.chunks_exact(dim) {
            for (r, out) in std.iter_mut().enumerate() {
                let row = &self.factor[r * dim..r * dim + r + 1];
                *out = row.iter().zip(z).fold(T::zero(), |acc, (&l, &zz)| acc + l * zz);
            }
            mu.push(sigma_mu * std[0]);
            x.extend(std[1..].iter().map(|&v| cfg.sigma_x * v));
        }
        let eps: Vec<T> = noise.z_eps.iter().map(|&z| cfg.sigma_eps * z).collect();
        let y = (0..n * t).map(|k| a + beta * x[k] + mu[k / t] + eps[k]).collect();
        Ok(PanelDraw { x: Panel { n, t, data: x }, y: Panel { n, t, data: y }, mu, eps: Panel { n, t, data: eps } })
    }
}

/// Builds one panel from base noise.
pub fn generate_panel<T: Real>(config: &ModelConfig<T>, noise: &BaseNoise<T>) -> Result<PanelDraw<T>> {
    PanelGenerator::new(config)?.generate(noise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ConfigBuilder<f64> {
        ModelConfig::builder()
    }

    #[test]
    fn tau_zero_maps_to_zero() {
        let tt = tau_to_tautilde(0.0, 0.7, 5, CorrStructure::CompoundSymmetry).unwrap();
        assert_eq!(tt, 0.0);
    }

    #[test]
    fn tau_conversion_cs_example() {
        let tt = tau_to_tautilde(0.2739_f64, 0.3, 3, CorrStructure::CompoundSymmetry).unwrap();
        // 0.2739 / sqrt(3/1.6), 50-digit reference
        assert!((tt - 0.20002827800088666).abs() < 1e-15);
        assert!((tt - 0.2).abs() < 5e-5);
    }

    #[test]
    fn structures_coincide_at_rho_zero() {
        for s in [CorrStructure::CompoundSymmetry, CorrStructure::Ar1] {
            assert!((tau_to_tautilde(0.5_f64, 0.0, 4, s).unwrap() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_entries() {
        let m = build_covariance(0.0_f64, 0.0, 1.0, 1.0, 2, CorrStructure::CompoundSymmetry).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let m = build_covariance(0.3_f64, 0.1, 2.0, 0.5, 2, CorrStructure::Ar1).unwrap();
        assert!((m.get(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(m.get(0, 0), 4.0);
        assert!((m.get(1, 2) - 0.25 * 0.1).abs() < 1e-16);
    }

    #[test]
    fn covariance_rejects_indefinite_g() {
        let err = build_covariance(0.0_f64, -0.9, 1.0, 1.0, 3, CorrStructure::CompoundSymmetry);
        assert!(matches!(err, Err(Error::Inadmissible(_))));
        assert!(tau_to_tautilde(0.1_f64, -0.9, 3, CorrStructure::CompoundSymmetry).is_err());
    }

    #[test]
    fn var_xbar_examples() {
        assert_eq!(var_xbar_cs(0.0_f64, 1.0, 4).unwrap(), 0.25);
        assert!((var_xbar_cs(0.3_f64, 1.0, 3).unwrap() - 1.6 / 3.0).abs() < 1e-15);
        assert!((var_xbar_cs(1.0_f64 - 1e-12, 2.0, 2).unwrap() - 4.0).abs() < 1e-10);
        assert!(var_xbar_cs(-1.0_f64, 1.0, 2).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg().n(2).build().is_err());
        assert!(cfg().t(1).build().is_err());
        assert!(cfg().rho(1.0).build().is_err());
        assert!(cfg().tau(1.0).build().is_err());
        assert!(cfg().alpha(1.0).build().is_err());
        assert!(cfg().alpha_tilde(0.0).build().is_err());
        assert!(cfg().sigma_eps(0.0).build().is_err());
        assert!(cfg().estimator(EstimatorKind::Wooldridge { dof_correction: 1 }).build().is_err());
        assert!(cfg().lambda(10.0).build().is_err());
        let c = cfg().lambda(5.0).build().unwrap();
        assert!((c.tau() - 0.5).abs() < 1e-15);
        assert!((c.lambda() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn psi_and_sigma_mu_stay_consistent() {
        let c = cfg().sigma_eps(2.0).sigma_mu(1.0).build().unwrap();
        assert_eq!(c.psi(), 0.5);
        assert_eq!(c.sigma_mu(), 1.0);
        let c = cfg().sigma_eps(3.0).psi(1.0 / 3.0).build().unwrap();
        assert_eq!(c.sigma_mu(), 3.0 * (1.0 / 3.0));
    }

    #[test]
    fn zero_noise_gives_zero_panel() {
        let c = cfg().tau(0.4).build().unwrap();
        let d = generate_panel(&c, &BaseNoise::zeros(100, 3)).unwrap();
        assert!(d.x.as_slice().iter().chain(d.y.as_slice()).chain(&d.mu).all(|&v| v == 0.0));
    }

    #[test]
    fn noise_dimension_mismatch_is_rejected() {
        let c = cfg().build().unwrap();
        assert!(generate_panel(&c, &BaseNoise::zeros(10, 3)).is_err());
        assert!(BaseNoise::<f64>::from_parts(2, 2, vec![0.0; 5], vec![0.0; 4]).is_err());
    }

    #[test]
    fn factor_matches_direct_cholesky_of_covariance() {
        let c = cfg()
            .n(3)
            .t(4)
            .rho(0.5)
            .tau(0.6)
            .psi(0.7)
            .sigma_eps(1.3)
            .sigma_x(2.1)
            .structure(CorrStructure::Ar1)
            .build()
            .unwrap();
        let gen = PanelGenerator::new(&c).unwrap();
        let cov = build_covariance(c.tautilde(), c.rho(), c.sigma_mu(), c.sigma_x(), 4, CorrStructure::Ar1).unwrap();
        let l = cov.cholesky().unwrap();
        let scale = [c.sigma_mu(), 2.1, 2.1, 2.1, 2.1];
        for i in 0..5 {
            for j in 0..5 {
                assert!((gen.factor[i * 5 + j] * scale[i] - l[i * 5 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_random_effect_scale_is_admissible() {
        let c = cfg().psi(0.0).tau(0.9).build().unwrap();
        let noise = BaseNoise::from_parts(100, 3, vec![1.0; 400], vec![0.5; 300]).unwrap();
        let d = generate_panel(&c, &noise).unwrap();
        assert!(d.mu.iter().all(|&m| m == 0.0));
    }
}
