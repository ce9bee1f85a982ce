//! Parameter studies built on the Monte Carlo engine: minimum coverage over
//! the non-exogeneity parameter, sweeps over `ρ` and `ψ`, and curves for
//! several `N`.

use crate::error::{Error, Result};
use crate::mc::{crn_estimates, CoverageEstimate, Method, Settings};
use crate::model::{CorrStructure, ModelConfig};
use crate::scalar::Real;

/// Minimum of a coverage curve over `λ ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinCoverageResult<T: Real = f64> {
    pub min_cp: T,
    pub argmin_lambda: T,
    /// Every `λ` examined, ascending, coarse and refined together.
    pub grid: Vec<T>,
    pub estimates: Vec<CoverageEstimate<T>>,
    /// Size of the associated two-stage test, `1 - min_cp`.
    pub test_size: T,
}

/// Coarse grid on `[0, λ_max]` plus one local refinement around its minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T: Real = f64> {
    /// Defaults to `min(8, 0.98 √N)`.
    pub lambda_max: Option<T>,
    pub coarse_points: usize,
    /// Points in the refinement, spaced one third of the coarse step apart.
    pub refine_points: usize,
}

impl<T: Real> Default for GridSpec<T> {
    fn default() -> Self {
        Self { lambda_max: None, coarse_points: 33, refine_points: 9 }
    }
}

impl<T: Real> GridSpec<T> {
    pub fn lambda_max_for(&self, n: usize) -> T {
        self.lambda_max.unwrap_or_else(|| T::lit(8.0).min(T::lit(0.98) * T::from_count(n).sqrt()))
    }

    fn coarse(&self, n: usize) -> Result<Vec<T>> {
        let hi = self.lambda_max_for(n);
        if !(hi >= T::zero() && hi < T::from_count(n).sqrt()) {
            return Err(Error::InvalidConfig(format!("lambda_max = {hi} must lie in [0, sqrt(N))")));
        }
        if self.coarse_points < 2 {
            return Err(Error::InvalidConfig("coarse grid needs at least 2 points".into()));
        }
        let step = hi / T::from_count(self.coarse_points - 1);
        Ok((0..self.coarse_points).map(|j| step * T::from_count(j)).collect())
    }
}

/// Control variate under compound symmetry, brute force otherwise.
pub fn default_method<T: Real>(config: &ModelConfig<T>) -> Method {
    match config.structure() {
        CorrStructure::CompoundSymmetry => Method::ControlVariate,
        CorrStructure::Ar1 => Method::BruteForce,
    }
}

fn eval_grid<T: Real>(
    base: &ModelConfig<T>,
    grid: &[T],
    settings: &Settings,
    method: Method,
) -> Result<Vec<CoverageEstimate<T>>> {
    let configs = grid.iter().map(|&l| base.with_lambda(l)).collect::<Result<Vec<_>>>()?;
    crn_estimates(&configs, settings, method)
}

fn argmin<T: Real>(values: impl Iterator<Item = T>) -> usize {
    values.enumerate().fold((0, T::infinity()), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) }).0
}

/// Minimum coverage over `λ ∈ [0, λ_max]`; evenness in `λ` makes the
/// negative half redundant.
pub fn min_coverage_over_tau<T: Real>(
    config_base: &ModelConfig<T>,
    settings: &Settings,
    grid_spec: &GridSpec<T>,
    method: Method,
) -> Result<MinCoverageResult<T>> {
    let n = config_base.n();
    let coarse = grid_spec.coarse(n)?;
    let coarse_est = eval_grid(config_base, &coarse, settings, method)?;
    let hi = *coarse.last().unwrap_or(&T::zero());
    let best = argmin(coarse_est.iter().map(|e| e.value));

    let mut points: Vec<(T, CoverageEstimate<T>)> = coarse.iter().copied().zip(coarse_est).collect();
    if grid_spec.refine_points > 0 && coarse.len() > 1 {
        let fine_step = (coarse[1] - coarse[0]) / T::lit(3.0);
        let centre = coarse[best];
        let half = (grid_spec.refine_points / 2) as isize;
        let mut fine: Vec<T> = (-half..=half)
            .map(|k| (centre + fine_step * T::lit(k as f64)).max(T::zero()).min(hi))
            .filter(|l| !coarse.contains(l))
            .collect();
        fine.dedup();
        if !fine.is_empty() {
            let fine_est = eval_grid(config_base, &fine, settings, method)?;
            points.extend(fine.into_iter().zip(fine_est));
        }
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let j = argmin(points.iter().map(|p| p.1.value));
    let min_cp = points[j].1.value;
    Ok(MinCoverageResult {
        min_cp,
        argmin_lambda: points[j].0,
        grid: points.iter().map(|p| p.0).collect(),
        estimates: points.iter().map(|p| p.1).collect(),
        test_size: T::one() - min_cp,
    })
}

/// One cell of a `ρ` or `ψ` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell<T: Real = f64> {
    pub structure: CorrStructure,
    pub value: T,
    /// `Err` holds the reason an inadmissible cell was skipped.
    pub result: std::result::Result<MinCoverageResult<T>, Error>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Rho,
    Psi,
}

fn sweep<T: Real>(
    config_base: &ModelConfig<T>,
    param: SweepParam,
    values: &[T],
    structures: &[CorrStructure],
    settings: &Settings,
    grid_spec: &GridSpec<T>,
) -> Result<Vec<SweepCell<T>>> {
    let mut cells = Vec::with_capacity(values.len() * structures.len());
    for &structure in structures {
        for &value in values {
            let cfg = config_base.edit(|b| {
                b.structure = structure;
                match param {
                    SweepParam::Rho => b.rho = value,
                    SweepParam::Psi => {
                        b.psi = Some(value);
                        b.sigma_mu = None;
                    }
                }
            });
            let result = match cfg {
                Ok(cfg) => match min_coverage_over_tau(&cfg, settings, grid_spec, default_method(&cfg)) {
                    Ok(r) => Ok(r),
                    Err(e @ Error::Inadmissible(_)) => Err(e),
                    Err(e) => return Err(e),
                },
                Err(e @ (Error::Inadmissible(_) | Error::InvalidConfig(_))) => Err(e),
                Err(e) => return Err(e),
            };
            cells.push(SweepCell { structure, value, result });
        }
    }
    Ok(cells)
}

/// Minimum coverage as a function of `ρ`, for each structure.
pub fn sweep_rho<T: Real>(
    config_base: &ModelConfig<T>,
    rho_grid: &[T],
    structures: &[CorrStructure],
    settings: &Settings,
    grid_spec: &GridSpec<T>,
) -> Result<Vec<SweepCell<T>>> {
    sweep(config_base, SweepParam::Rho, rho_grid, structures, settings, grid_spec)
}

/// Minimum coverage as a function of `ψ`, for each structure.
pub fn sweep_psi<T: Real>(
    config_base: &ModelConfig<T>,
    psi_grid: &[T],
    structures: &[CorrStructure],
    settings: &Settings,
    grid_spec: &GridSpec<T>,
) -> Result<Vec<SweepCell<T>>> {
    sweep(config_base, SweepParam::Psi, psi_grid, structures, settings, grid_spec)
}

/// One point of a coverage curve for a given `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint<T: Real = f64> {
    pub n: usize,
    pub lambda: T,
    pub estimate: CoverageEstimate<T>,
}

/// Master seed for the curve with `n` individuals.
pub fn seed_for_n(seed: u64, n: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Coverage curves for several `N`, each with its own seed. `λ` values
/// outside `(-√N, √N)` are dropped for that `N`.
pub fn stability_curves<T: Real>(
    config_base: &ModelConfig<T>,
    n_list: &[usize],
    lambda_grid: &[T],
    settings: &Settings,
) -> Result<Vec<CurvePoint<T>>> {
    let mut out = Vec::new();
    for &n in n_list {
        let base = config_base.edit(|b| b.n = n)?;
        let root = T::from_count(n).sqrt();
        let grid: Vec<T> = lambda_grid.iter().copied().filter(|l| l.abs() < root).collect();
        if grid.is_empty() {
            continue;
        }
        let s = Settings { seed: seed_for_n(settings.seed, n), ..*settings };
        let est = eval_grid(&base, &grid, &s, default_method(&base))?;
        out.extend(grid.into_iter().zip(est).map(|(lambda, estimate)| CurvePoint { n, lambda, estimate }));
    }
    Ok(out)
}
