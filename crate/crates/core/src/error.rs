use thiserror::Error;

/// Why a covariate/response panel cannot be analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// Every individual's covariate is constant over time.
    NoWithinVariation,
    /// All individual covariate means coincide.
    NoBetweenVariation,
    /// The within-model residuals vanish, so the error variance estimate is zero.
    PerfectWithinFit,
    /// Both variance clamps are active and the error variance estimate is not positive.
    NonPositiveErrorVariance,
}

impl std::fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Degeneracy::NoWithinVariation => "sum of squares within is zero",
            Degeneracy::NoBetweenVariation => "sum of squares between is zero",
            Degeneracy::PerfectWithinFit => "within-model residual sum of squares is zero",
            Degeneracy::NonPositiveErrorVariance => "error variance estimate is not positive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tau out of admissible range for this (rho, T): {0}")]
    Inadmissible(String),

    #[error("degenerate design: {0}")]
    Degenerate(Degeneracy),

    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityDomain(f64),

    #[error("likelihood maximisation did not converge (best psi = {best_psi}, log-likelihood = {best_loglik})")]
    NonConvergence { best_psi: f64, best_loglik: f64 },

    #[error("exact conditional coverage requires compound symmetry; use brute force for AR(1)")]
    UnsupportedStructure,

    #[error("simulation run {run} failed: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
