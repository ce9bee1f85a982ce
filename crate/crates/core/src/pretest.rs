//! Hausman pretest and the resulting two-stage confidence interval.

use crate::error::Result;
use crate::estimators::{
    beta_gls, mle_from, q_factor, unbiased_from, wooldridge_from, Interval, PanelSums, VariancePair,
};
use crate::exact::Critical;
use crate::model::{EstimatorKind, ModelConfig, Panel, PanelDraw};
use crate::scalar::Real;

/// Which interval the pretest selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Null accepted: `I(ψ̂)`.
    RandomEffects,
    /// Null rejected: `J(σ̂_ε)`.
    FixedEffects,
}

/// Everything computed for one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStageResult<T: Real = f64> {
    pub beta_w: T,
    pub beta_b: T,
    pub beta_gls: T,
    pub variance_pair: VariancePair<T>,
    pub hausman: T,
    pub branch: Branch,
    pub interval: Interval<T>,
}

/// `(β̃_W - β̃_B)² / (σ_ε²/SSW + σ_ε² q/SSB)`.
pub fn hausman_stat<T: Real>(beta_w: T, beta_b: T, ssw: T, ssb: T, sigma_eps_sq: T, q: T) -> T {
    let d = beta_w - beta_b;
    d * d / (sigma_eps_sq / ssw + sigma_eps_sq * q / ssb)
}

/// Accepts (random effects) when `h <= threshold`.
pub fn select_branch<T: Real>(h: T, threshold: T) -> Branch {
    if h <= threshold {
        Branch::RandomEffects
    } else {
        Branch::FixedEffects
    }
}

/// Variance pair selected by `kind`; `known` is used for [`EstimatorKind::KnownVariances`].
pub fn estimate_variances<T: Real>(
    kind: EstimatorKind,
    sums: &PanelSums<T>,
    x: &Panel<T>,
    y: &Panel<T>,
    known: VariancePair<T>,
) -> Result<VariancePair<T>> {
    match kind {
        EstimatorKind::KnownVariances => Ok(known),
        EstimatorKind::Unbiased => unbiased_from(sums, x, y),
        EstimatorKind::Mle => mle_from(sums, x, y),
        EstimatorKind::Wooldridge { dof_correction } => wooldridge_from(sums, x, y, dof_correction),
    }
}

/// Two-stage interval from precomputed sums and a variance pair.
pub fn two_stage_from<T: Real>(
    sums: &PanelSums<T>,
    pair: VariancePair<T>,
    t: usize,
    crit: &Critical<T>,
) -> Result<TwoStageResult<T>> {
    let xs = &sums.xs;
    let beta_w = sums.beta_within();
    let beta_b = sums.beta_between();
    let q = q_factor(pair.psi, t);
    let gls = beta_gls(beta_w, beta_b, xs.r, pair.psi, t);
    let hausman = hausman_stat(beta_w, beta_b, xs.ssw, xs.ssb, pair.sigma_eps_sq, q);
    let branch = select_branch(hausman, crit.threshold());
    let sigma_eps = pair.sigma_eps();
    let interval = match branch {
        Branch::RandomEffects => {
            let var = pair.sigma_eps_sq * q / (xs.ssw * (q + xs.r));
            Interval::new(gls, crit.z_ci * var.sqrt())
        }
        Branch::FixedEffects => Interval::new(beta_w, crit.z_ci * sigma_eps / xs.ssw.sqrt()),
    };
    Ok(TwoStageResult { beta_w, beta_b, beta_gls: gls, variance_pair: pair, hausman, branch, interval })
}

/// Runs the pretest on one dataset and returns the selected interval.
pub fn two_stage_ci<T: Real>(draw: &PanelDraw<T>, config: &ModelConfig<T>) -> Result<TwoStageResult<T>> {
    let sums = PanelSums::new(&draw.x, &draw.y, config.var_xbar())?;
    let known = VariancePair::known(config.sigma_eps(), config.psi());
    let pair = estimate_variances(config.estimator(), &sums, &draw.x, &draw.y, known)?;
    let crit = Critical::new(config.alpha(), config.alpha_tilde())?;
    two_stage_from(&sums, pair, config.t(), &crit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{ci_random_effects, ci_within};
    use crate::model::{BaseNoise, PanelGenerator};

    #[test]
    fn hausman_examples() {
        assert_eq!(hausman_stat(1.0_f64, 1.0, 2.0, 3.0, 1.0, 0.5), 0.0);
        let h = hausman_stat(1.8_f64, 3.0, 2.5, 0.125, 1.0, 1.5);
        assert!((h - 1.44 / 12.4).abs() < 1e-14);
        assert!((h - 0.116129).abs() < 1e-6);
    }

    #[test]
    fn branch_flips_at_threshold() {
        let c = Critical::new(0.05_f64, 0.05).unwrap();
        let th = c.threshold();
        assert_eq!(select_branch(th, th), Branch::RandomEffects);
        assert_eq!(select_branch(th - 1e-12, th), Branch::RandomEffects);
        assert_eq!(select_branch(th + 1e-12, th), Branch::FixedEffects);
    }

    fn noise(n: usize, t: usize, k: u64) -> BaseNoise<f64> {
        let mut s = k;
        let mut u = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let v = ((s >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            crate::exact::normal::normal_quantile(v).unwrap()
        };
        let a = (0..n * (t + 1)).map(|_| u()).collect();
        let b = (0..n * t).map(|_| u()).collect();
        BaseNoise::from_parts(n, t, a, b).unwrap()
    }

    #[test]
    fn extreme_pretest_levels_fix_the_branch() {
        let base = ModelConfig::builder().tau(0.3).build().unwrap();
        for k in 0..20 {
            let z = noise(100, 3, k);
            let draw = PanelGenerator::new(&base).unwrap().generate(&z).unwrap();
            let hi = base.edit(|b| b.alpha_tilde = 1.0 - 1e-15).unwrap();
            assert_eq!(two_stage_ci(&draw, &hi).unwrap().branch, Branch::FixedEffects);
            let lo = base.edit(|b| b.alpha_tilde = 1e-15).unwrap();
            assert_eq!(two_stage_ci(&draw, &lo).unwrap().branch, Branch::RandomEffects);
        }
    }

    #[test]
    fn large_tau_rejects() {
        // With ψ = 1 the mean of the signed root statistic is about -7.
        let cfg = ModelConfig::builder().tau(0.9).psi(1.0).estimator(EstimatorKind::KnownVariances).build().unwrap();
        let gen = PanelGenerator::new(&cfg).unwrap();
        let fe = (0..200)
            .filter(|&k| {
                two_stage_ci(&gen.generate(&noise(100, 3, k)).unwrap(), &cfg).unwrap().branch == Branch::FixedEffects
            })
            .count();
        assert!(fe >= 198);
    }

    #[test]
    fn interval_matches_branch() {
        for est in [EstimatorKind::Unbiased, EstimatorKind::Mle, EstimatorKind::Wooldridge { dof_correction: 2 }] {
            let cfg = ModelConfig::builder().tau(0.2).estimator(est).build().unwrap();
            let gen = PanelGenerator::new(&cfg).unwrap();
            for k in 0..30 {
                let draw = gen.generate(&noise(100, 3, 100 + k)).unwrap();
                let xs = crate::estimators::xstats(&draw.x, None).unwrap();
                let r = two_stage_ci(&draw, &cfg).unwrap();
                let p = r.variance_pair;
                assert!(r.hausman >= 0.0);
                let want = match r.branch {
                    Branch::RandomEffects => {
                        ci_random_effects(r.beta_gls, xs.ssw, xs.r, p.psi, 3, p.sigma_eps(), 0.05).unwrap()
                    }
                    Branch::FixedEffects => ci_within(r.beta_w, xs.ssw, p.sigma_eps(), 0.05).unwrap(),
                };
                assert_eq!(r.interval.center, want.center);
                assert!((want.half_width - r.interval.half_width).abs() < 1e-13);
            }
        }
    }
}
