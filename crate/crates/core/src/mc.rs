//! Monte Carlo coverage estimation: brute force, control variate, common
//! random numbers across parameter grids.
//!
//! Run `k` draws its base noise from its own ChaCha8 stream keyed by
//! `(seed, k)`, so results do not depend on the number of worker threads.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{PanelSums, VariancePair};
use crate::exact::normal::quantile_unchecked;
use crate::exact::{conditional_coverage_with, Critical};
use crate::model::{BaseNoise, CorrStructure, EstimatorKind, ModelConfig, PanelGenerator};
use crate::pretest::{estimate_variances, two_stage_from};
use crate::scalar::Real;

/// Outcome of one simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord<T: Real = f64> {
    /// `β ∈ K` with the configured variance estimator.
    pub covered_estimated: bool,
    /// `β ∈ K` with the true variances.
    pub covered_known: bool,
    /// `P(β ∈ K | x)` with the true variances; `None` for AR(1).
    pub exact_cond_cp: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    BruteForce,
    ControlVariate,
    Exact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BruteForce => "brute",
            Method::ControlVariate => "cv",
            Method::Exact => "exact",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageEstimate<T: Real = f64> {
    pub value: T,
    pub std_error: T,
    pub runs: usize,
    pub method: Method,
    pub degenerate_runs: usize,
}

impl<T: Real> CoverageEstimate<T> {
    /// Variance of the estimator, `std_error²`.
    pub fn variance(&self) -> T {
        self.std_error * self.std_error
    }
}

/// Replication count, master seed and optional worker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Settings {
    pub runs: usize,
    pub seed: u64,
    /// `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Settings {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self { runs, seed, threads: None }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

/// Default replication count for single curves.
pub const DEFAULT_RUNS: usize = 20_000;
/// Default replication count for multi-N overlays.
pub const DEFAULT_RUNS_OVERLAY: usize = 5_000;

/// Uniform on the open interval (0, 1) with 53 random bits.
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Base noise for run `run` under master seed `seed`.
///
/// Normals are produced by inverse-CDF transform in double precision and then
/// rounded to `T`, so `f32` and `f64` runs consume identical draws.
pub fn draw_noise<T: Real>(n: usize, t: usize, seed: u64, run: usize) -> BaseNoise<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let mut normal = || T::lit(quantile_unchecked(open_uniform(&mut rng)));
    let z_mu_x: Vec<T> = (0..n * (t + 1)).map(|_| normal()).collect();
    let z_eps: Vec<T> = (0..n * t).map(|_| normal()).collect();
    BaseNoise::from_parts(n, t, z_mu_x, z_eps).expect("inverse-CDF draws are finite")
}

fn with_pool<R: Send>(threads: Option<usize>, job: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Applies `f` to the base noise of every run in parallel and returns the
/// results in run order. The first failing run (lowest index) aborts.
pub fn simulate_map<T, R, F>(n: usize, t: usize, settings: &Settings, f: F) -> Result<Vec<R>>
where
    T: Real,
    R: Send,
    F: Fn(usize, &BaseNoise<T>) -> Result<R> + Sync + Send,
{
    let seed = settings.seed;
    let out: Vec<Result<R>> = with_pool(settings.threads, || {
        (0..settings.runs).into_par_iter().map(|k| f(k, &draw_noise(n, t, seed, k))).collect()
    })?;
    out.into_iter().enumerate().map(|(k, r)| r.map_err(|e| Error::Run { run: k, source: Box::new(e) })).collect()
}

/// A configuration prepared for repeated evaluation: Cholesky factor,
/// critical values and the true variance pair are computed once.
///
/// Coverage does not depend on `a`, `β`, `σ_ε` or `σ_x` once `ψ` is fixed,
/// so panels are generated with `a = β = 0` and `σ_ε = σ_x = 1`. Two
/// configurations that differ only in those values give identical records.
#[derive(Debug, Clone)]
pub struct Scenario<T: Real = f64> {
    config: ModelConfig<T>,
    gen: PanelGenerator<T>,
    crit: Critical<T>,
    known: VariancePair<T>,
    var_xbar: Option<T>,
}

impl<T: Real> Scenario<T> {
    pub fn new(config: &ModelConfig<T>) -> Result<Self> {
        let reduced = config.edit(|b| {
            b.sigma_eps = T::one();
            b.sigma_x = T::one();
            b.a = T::zero();
            b.beta = T::zero();
        })?;
        Ok(Self {
            config: config.clone(),
            crit: Critical::new(config.alpha(), config.alpha_tilde())?,
            known: VariancePair::known(T::one(), config.psi()),
            var_xbar: reduced.var_xbar(),
            gen: PanelGenerator::new(&reduced)?,
        })
    }

    pub fn config(&self) -> &ModelConfig<T> {
        &self.config
    }

    /// Full record.
    pub fn run(&self, noise: &BaseNoise<T>) -> Result<RunRecord<T>> {
        self.evaluate(noise, true)
    }

    /// Only the estimated-variance indicator is computed; the other fields are
    /// `false` / `None`.
    pub fn run_estimated_only(&self, noise: &BaseNoise<T>) -> Result<RunRecord<T>> {
        self.evaluate(noise, false)
    }

    fn evaluate(&self, noise: &BaseNoise<T>, full: bool) -> Result<RunRecord<T>> {
        let cfg = self.gen.config();
        let zero = T::zero();
        let draw = self.gen.generate_with(noise, zero, zero)?;
        let sums = PanelSums::new(&draw.x, &draw.y, self.var_xbar)?;
        let t = cfg.t();
        let pair = estimate_variances(cfg.estimator(), &sums, &draw.x, &draw.y, self.known)?;
        let est = two_stage_from(&sums, pair, t, &self.crit)?;
        let covered_estimated = est.interval.contains(zero);
        if !full {
            return Ok(RunRecord { covered_estimated, covered_known: false, exact_cond_cp: None });
        }
        let covered_known = if cfg.estimator() == EstimatorKind::KnownVariances {
            covered_estimated
        } else {
            two_stage_from(&sums, self.known, t, &self.crit)?.interval.contains(zero)
        };
        let exact_cond_cp = match cfg.structure() {
            CorrStructure::CompoundSymmetry => {
                Some(conditional_coverage_with(&sums.xs, cfg.psi(), cfg.tau(), t, &self.crit)?)
            }
            CorrStructure::Ar1 => None,
        };
        Ok(RunRecord { covered_estimated, covered_known, exact_cond_cp })
    }
}

/// One simulation run: generates a panel and evaluates the two-stage interval
/// with estimated and with true variances, plus the exact conditional coverage.
pub fn run_once<T: Real>(config: &ModelConfig<T>, noise: &BaseNoise<T>) -> Result<RunRecord<T>> {
    Scenario::new(config)?.run(noise)
}

fn check_runs(settings: &Settings) -> Result<()> {
    if settings.runs == 0 {
        return Err(Error::InvalidConfig("need at least one run".into()));
    }
    Ok(())
}

fn check_method<T: Real>(config: &ModelConfig<T>, method: Method) -> Result<()> {
    match (method, config.structure()) {
        (Method::Exact, _) => Err(Error::InvalidConfig("exact method has no Monte Carlo estimate".into())),
        (Method::ControlVariate, CorrStructure::Ar1) => Err(Error::UnsupportedStructure),
        _ => Ok(()),
    }
}

fn mean_and_se<T: Real>(terms: impl Iterator<Item = T> + Clone, m: usize) -> (T, T) {
    let mf = T::from_count(m);
    let mean = terms.clone().fold(T::zero(), |a, v| a + v) / mf;
    let ss = terms.fold(T::zero(), |a, v| a + (v - mean) * (v - mean));
    // A single run has no sample variance.
    let se = if m < 2 { T::nan() } else { (ss / T::from_count(m - 1) / mf).sqrt() };
    (mean, se)
}

/// Summarises the records of one scenario.
pub fn summarize<T: Real>(records: &[RunRecord<T>], method: Method) -> Result<CoverageEstimate<T>> {
    let m = records.len();
    if m == 0 {
        return Err(Error::InvalidConfig("need at least one run".into()));
    }
    let one = T::one();
    let ind = |b: bool| if b { one } else { T::zero() };
    let (value, std_error) = match method {
        Method::BruteForce => {
            let v = records.iter().map(|r| ind(r.covered_estimated)).fold(T::zero(), |a, b| a + b) / T::from_count(m);
            (v, (v * (one - v) / T::from_count(m)).sqrt())
        }
        Method::ControlVariate => {
            if records.iter().any(|r| r.exact_cond_cp.is_none()) {
                return Err(Error::UnsupportedStructure);
            }
            let terms = records
                .iter()
                .map(|r| ind(r.covered_estimated) - ind(r.covered_known) + r.exact_cond_cp.unwrap_or(T::nan()));
            mean_and_se(terms, m)
        }
        Method::Exact => {
            let terms = records.iter().map(|r| r.exact_cond_cp.unwrap_or(T::nan()));
            if records.iter().any(|r| r.exact_cond_cp.is_none()) {
                return Err(Error::UnsupportedStructure);
            }
            mean_and_se(terms, m)
        }
    };
    Ok(CoverageEstimate { value, std_error, runs: m, method, degenerate_runs: 0 })
}

/// Evaluates several configurations on the same base noise (common random
/// numbers). All configurations must share `N` and `T`.
pub fn crn_estimates<T: Real>(
    configs: &[ModelConfig<T>],
    settings: &Settings,
    method: Method,
) -> Result<Vec<CoverageEstimate<T>>> {
    check_runs(settings)?;
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    let (n, t) = (first.n(), first.t());
    for c in configs {
        if (c.n(), c.t()) != (n, t) {
            return Err(Error::InvalidConfig("common random numbers need equal N and T".into()));
        }
        check_method(c, method)?;
    }
    let scenarios = configs.iter().map(Scenario::new).collect::<Result<Vec<_>>>()?;
    let full = method != Method::BruteForce;
    let records = simulate_map(n, t, settings, |_, noise| {
        scenarios
            .iter()
            .map(|s| if full { s.run(noise) } else { s.run_estimated_only(noise) })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut column = Vec::with_capacity(records.len());
    (0..scenarios.len())
        .map(|j| {
            column.clear();
            column.extend(records.iter().map(|row| row[j]));
            summarize(&column, method)
        })
        .collect()
}

/// `ĈP`: fraction of runs whose estimated-variance interval covers `β`.
pub fn estimate_cp_bruteforce<T: Real>(config: &ModelConfig<T>, settings: &Settings) -> Result<CoverageEstimate<T>> {
    Ok(crn_estimates(std::slice::from_ref(config), settings, Method::BruteForce)?[0])
}

/// `C̃P`: brute force corrected by the known-variance control variate.
pub fn estimate_cp_cv<T: Real>(config: &ModelConfig<T>, settings: &Settings) -> Result<CoverageEstimate<T>> {
    Ok(crn_estimates(std::slice::from_ref(config), settings, Method::ControlVariate)?[0])
}

/// Per-run records for one configuration, in run order.
pub fn simulate_records<T: Real>(config: &ModelConfig<T>, settings: &Settings) -> Result<Vec<RunRecord<T>>> {
    let scenario = Scenario::new(config)?;
    simulate_map(config.n(), config.t(), settings, |_, noise| scenario.run(noise))
}

/// Coverage along a `λ` grid with shared base noise.
pub fn crn_grid<T: Real>(
    config_base: &ModelConfig<T>,
    lambda_grid: &[T],
    settings: &Settings,
    method: Method,
) -> Result<Vec<(T, CoverageEstimate<T>)>> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let configs = lambda_grid.iter().map(|&l| config_base.with_lambda(l)).collect::<Result<Vec<_>>>()?;
    let est = crn_estimates(&configs, settings, method)?;
    Ok(lambda_grid.iter().copied().zip(est).collect())
}

/// An estimate together with the wall time it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timed<T: Real = f64> {
    pub estimate: CoverageEstimate<T>,
    pub wall_time: Duration,
}

pub fn timed<T: Real>(f: impl FnOnce() -> Result<CoverageEstimate<T>>) -> Result<Timed<T>> {
    let start = Instant::now();
    let estimate = f()?;
    Ok(Timed { estimate, wall_time: start.elapsed() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    /// `(T̂/T̃)·(Var ĈP / Var C̃P)`, or `+∞` when the control-variate variance is zero.
    pub ratio: f64,
    pub variance_ratio: f64,
    pub time_ratio: f64,
    /// Set when the control-variate variance is zero.
    pub infinite: bool,
}

/// Relative efficiency of the control-variate estimator over brute force.
pub fn efficiency<T: Real>(brute: &Timed<T>, cv: &Timed<T>) -> Result<Efficiency> {
    if brute.estimate.runs != cv.estimate.runs {
        return Err(Error::InvalidConfig("efficiency needs equal replication counts".into()));
    }
    let time_ratio = brute.wall_time.as_secs_f64() / cv.wall_time.as_secs_f64();
    Ok(efficiency_from(brute.estimate.variance().as_f64(), cv.estimate.variance().as_f64(), time_ratio))
}

/// Efficiency from the two variances and the time ratio `T̂/T̃`.
pub fn efficiency_from(var_brute: f64, var_cv: f64, time_ratio: f64) -> Efficiency {
    if var_cv == 0.0 {
        return Efficiency { ratio: f64::INFINITY, variance_ratio: f64::INFINITY, time_ratio, infinite: true };
    }
    let variance_ratio = var_brute / var_cv;
    Efficiency { ratio: time_ratio * variance_ratio, variance_ratio, time_ratio, infinite: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig<f64> {
        ModelConfig::builder().build().unwrap()
    }

    #[test]
    fn noise_is_deterministic_and_run_specific() {
        let a: BaseNoise<f64> = draw_noise(5, 3, 42, 7);
        let b: BaseNoise<f64> = draw_noise(5, 3, 42, 7);
        let c: BaseNoise<f64> = draw_noise(5, 3, 42, 8);
        assert_eq!(a, b);
        assert_ne!(a.z_mu_x(), c.z_mu_x());
        let s: BaseNoise<f32> = draw_noise(5, 3, 42, 7);
        assert_eq!(s.z_eps()[3], a.z_eps()[3] as f32);
    }

    #[test]
    fn noise_moments() {
        let z: BaseNoise<f64> = draw_noise(20_000, 4, 1, 0);
        let v = z.z_mu_x();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s2 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        assert!(m.abs() < 0.01);
        assert!((s2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let c = cfg().with_lambda(3.0).unwrap();
        let one = estimate_cp_cv(&c, &Settings::new(300, 9).with_threads(1)).unwrap();
        let many = estimate_cp_cv(&c, &Settings::new(300, 9).with_threads(4)).unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn known_variances_collapse_cv_to_exact_average() {
        let c = cfg().with_estimator(EstimatorKind::KnownVariances).unwrap().with_lambda(2.0).unwrap();
        let s = Settings::new(200, 3);
        let cv = estimate_cp_cv(&c, &s).unwrap();
        let recs = simulate_records(&c, &s).unwrap();
        let ex = summarize(&recs, Method::Exact).unwrap();
        assert!((cv.value - ex.value).abs() < 1e-14);
        assert!((cv.std_error - ex.std_error).abs() < 1e-14);
    }

    #[test]
    fn cv_rejects_ar1() {
        let c = cfg().edit(|b| b.structure = CorrStructure::Ar1).unwrap();
        assert_eq!(estimate_cp_cv(&c, &Settings::new(10, 1)), Err(Error::UnsupportedStructure));
        assert!(estimate_cp_bruteforce(&c, &Settings::new(10, 1)).is_ok());
    }

    #[test]
    fn grid_of_one_matches_single_estimate() {
        let c = cfg();
        let s = Settings::new(200, 5);
        let g = crn_grid(&c, &[2.5], &s, Method::ControlVariate).unwrap();
        let single = estimate_cp_cv(&c.with_lambda(2.5).unwrap(), &s).unwrap();
        assert_eq!(g[0].1, single);
        let dup = crn_grid(&c, &[0.0, 0.0], &s, Method::BruteForce).unwrap();
        assert_eq!(dup[0].1, dup[1].1);
    }

    #[test]
    fn brute_force_standard_error_is_binomial() {
        let e = estimate_cp_bruteforce(&cfg(), &Settings::new(400, 2)).unwrap();
        assert!((e.std_error - (e.value * (1.0 - e.value) / 400.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn efficiency_arithmetic() {
        assert_eq!(efficiency_from(2.0, 2.0, 1.0).ratio, 1.0);
        assert_eq!(efficiency_from(8.0, 1.0, 0.5).ratio, 4.0);
        let z = efficiency_from(1.0, 0.0, 1.0);
        assert!(z.infinite && z.ratio.is_infinite());
    }

    #[test]
    fn single_run() {
        assert!(estimate_cp_bruteforce(&cfg(), &Settings::new(0, 0)).is_err());
        let b = estimate_cp_bruteforce(&cfg(), &Settings::new(1, 0)).unwrap();
        assert_eq!(b.std_error, 0.0);
        assert!(b.value == 0.0 || b.value == 1.0);
        assert_eq!(b, estimate_cp_bruteforce(&cfg(), &Settings::new(1, 0)).unwrap());
        assert!(estimate_cp_cv(&cfg(), &Settings::new(1, 0)).unwrap().std_error.is_nan());
    }
}
