//! Coverage of the confidence interval for a panel-data slope after a
//! Hausman pretest chooses between random- and fixed-effects inference.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.
//!
//! ```
//! use pretest_coverage::{Config, Settings, estimate_cp_cv};
//!
//! let config = Config::builder().lambda(2.0).build().unwrap();
//! let cp = estimate_cp_cv(&config, &Settings::new(200, 7)).unwrap();
//! assert!(cp.value > 0.5 && cp.value <= 1.0);
//! ```

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod exact;
pub mod mc;
pub mod model;
pub mod pretest;
pub mod scalar;
pub mod study;

pub use error::{Degeneracy, Error, Result};
pub use estimators::{
    beta_between, beta_gls, beta_within, ci_random_effects, ci_within, gls_weight, log_likelihood, q_factor,
    variance_mle, variance_unbiased, variance_wooldridge, xstats,
};
pub use exact::{
    bvn_cdf, bvn_rect, conditional_coverage_known, conditional_moments, normal_cdf, normal_pdf, normal_quantile,
};
pub use mc::{
    crn_estimates, crn_grid, draw_noise, efficiency, efficiency_from, estimate_cp_bruteforce, estimate_cp_cv, run_once,
    simulate_map, simulate_records, summarize, Efficiency, Method, Settings,
};
pub use model::{
    build_covariance, generate_panel, tau_to_tautilde, tautilde_to_tau, var_xbar_cs, CorrStructure, EstimatorKind,
    Nonexogeneity,
};
pub use pretest::{hausman_stat, select_branch, two_stage_ci, Branch};
pub use scalar::Real;
pub use study::{min_coverage_over_tau, stability_curves, sweep_psi, sweep_rho, GridSpec};

/// Double-precision aliases.
pub type Config = model::ModelConfig<f64>;
pub type ConfigBuilder = model::ConfigBuilder<f64>;
pub type Panel = model::Panel<f64>;
pub type PanelDraw = model::PanelDraw<f64>;
pub type BaseNoise = model::BaseNoise<f64>;
pub type XStats = estimators::XStats<f64>;
pub type VariancePair = estimators::VariancePair<f64>;
pub type Interval = estimators::Interval<f64>;
pub type TwoStageResult = pretest::TwoStageResult<f64>;
pub type BvnMoments = exact::BvnMoments<f64>;
pub type RunRecord = mc::RunRecord<f64>;
pub type CoverageEstimate = mc::CoverageEstimate<f64>;
pub type Timed = mc::Timed<f64>;
pub type MinCoverageResult = study::MinCoverageResult<f64>;
pub type SweepCell = study::SweepCell<f64>;
pub type CurvePoint = study::CurvePoint<f64>;

/// Single-precision aliases.
pub type Config32 = model::ModelConfig<f32>;
pub type CoverageEstimate32 = mc::CoverageEstimate<f32>;
