//! Simulation test beds with known tail risk: a two-dimensional benchmark
//! surface under three additive noise families, and a five-activity
//! stochastic activity network.

mod benchmark;
mod san;

pub use benchmark::{benchmark_mean, noise_cvar, sample_noise, true_cvar_benchmark};
pub use san::{san_cdf, san_mean, san_simulate, san_survival, san_true_cvar, san_var};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::QuadError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} lies outside [{lower}, {upper}]")]
    OutOfDomain { name: &'static str, value: f64, lower: f64, upper: f64 },
    #[error("tail level alpha = {0} must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error("sample count must be at least 1")]
    EmptyRequest,
    #[error("root finding for the quantile at alpha = {alpha} failed: {reason}")]
    RootFinding { alpha: f64, reason: String },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

impl ModelError {
    /// Whether the error reflects bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Self::RootFinding { .. } | Self::Quadrature(_))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), ModelError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidAlpha(alpha))
    }
}

fn check_range(name: &'static str, value: f64, lower: f64, upper: f64) -> Result<(), ModelError> {
    if value >= lower && value <= upper {
        Ok(())
    } else {
        Err(ModelError::OutOfDomain { name, value, lower, upper })
    }
}

/// A location of the benchmark surface, `[-pi, pi]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x1: f64,
    pub x2: f64,
}

impl Point2D {
    pub const LOWER: f64 = -PI;
    pub const UPPER: f64 = PI;

    pub fn new(x1: f64, x2: f64) -> Result<Self, ModelError> {
        check_range("x1", x1, Self::LOWER, Self::UPPER)?;
        check_range("x2", x2, Self::LOWER, Self::UPPER)?;
        Ok(Self { x1, x2 })
    }

    /// Euclidean distance to the origin, which scales every noise family.
    pub fn radius(&self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x1, self.x2]
    }
}

/// Additive noise family on the benchmark surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScenario {
    /// `N(0, r^2)`.
    Normal,
    /// Symmetric triangular on `[0, r]`.
    Triangular,
    /// Pareto type I, shape 2, scale `2 + r`.
    Pareto,
}

impl NoiseScenario {
    pub const ALL: [NoiseScenario; 3] = [Self::Normal, Self::Triangular, Self::Pareto];

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Triangular => "triangular",
            Self::Pareto => "pareto",
        }
    }
}

impl fmt::Display for NoiseScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| format!("unknown noise scenario '{s}' (expected normal, triangular or pareto)"))
    }
}

/// Mean of the third activity time in the activity network, `[0.3, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanParam {
    pub x: f64,
}

impl SanParam {
    pub const LOWER: f64 = 0.3;
    pub const UPPER: f64 = 2.0;

    pub fn new(x: f64) -> Result<Self, ModelError> {
        check_range("x", x, Self::LOWER, Self::UPPER)?;
        Ok(Self { x })
    }
}
