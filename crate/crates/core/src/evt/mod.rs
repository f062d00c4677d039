//! Tail-risk estimation: empirical CVaR, peaks-over-threshold GPD fitting,
//! POT VaR/CVaR with delta-method variances, and spectral risk measures.

mod empirical;
mod fit;
mod gpd;
mod pot;
mod sample;
mod spectral;

pub use empirical::{empirical_cvar, empirical_var, TailTransform};
pub use fit::{expected_information, fit_gpd, fit_gpd_at, FitConfig, GpdFit};
pub use gpd::{gpd_cdf, gpd_logpdf, gpd_quantile, log_density_gradient, log_density_hessian, XI_ZERO};
pub use pot::{
    cvar_gradient, delta_variance, delta_variance_with, pot_cvar, pot_cvar_value, pot_cvar_with, pot_var, CvarGradient,
};
pub use sample::Sample;
pub use spectral::{spectral_pot, SpectralMeasure};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::QuadError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvtError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample value at index {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("tail level alpha = {0} must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error("need at least {needed} observations at or above the empirical VaR, found {found}")]
    InsufficientTail { needed: usize, found: usize },
    #[error("sample of {n} observations is too small for a tail fit (need at least {required})")]
    InsufficientData { n: usize, required: usize },
    #[error("only {found} threshold exceedances (need at least {required})")]
    InsufficientExceedances { found: usize, required: usize },
    #[error("GPD scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("z = {z} lies outside the support of GPD(xi = {xi}, beta = {beta})")]
    OutsideSupport { xi: f64, beta: f64, z: f64 },
    #[error("GPD likelihood maximisation failed: {0}")]
    NoConvergence(String),
    #[error("empirical information matrix is numerically singular (condition number {condition:e})")]
    SingularInformation { condition: f64 },
    #[error("alpha = {alpha} is below the threshold level {threshold_level}; the tail model does not cover it")]
    AlphaBelowThreshold { alpha: f64, threshold_level: f64 },
    #[error("CVaR is infinite for shape xi = {xi} >= 1")]
    InfiniteCvar { xi: f64 },
    #[error("spectrum puts weight below lambda = {lambda0}, under the threshold level {threshold_level}")]
    SpectralMassBelowThreshold { lambda0: f64, threshold_level: f64 },
    #[error("invalid risk spectrum: {0}")]
    InvalidSpectrum(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

impl EvtError {
    /// Whether the error reflects bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            EvtError::NoConvergence(_) | EvtError::SingularInformation { .. } | EvtError::Quadrature(_)
        )
    }
}

/// Which estimator produced a [`RiskEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    EmpiricalCvar,
    PotCvar,
    Spectral,
}

/// Point estimate of a tail risk measure together with its estimated variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub variance: f64,
    pub alpha: f64,
    pub method: RiskMethod,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), EvtError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(EvtError::InvalidAlpha(alpha))
    }
}
