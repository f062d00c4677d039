//! POT VaR and CVaR from a fitted GPD tail, and the delta-method variance of
//! the CVaR estimate.

use serde::{Deserialize, Serialize};

use super::fit::GpdFit;
use super::gpd::XI_ZERO;
use super::{check_alpha, EvtError, RiskEstimate, RiskMethod};

/// Slack allowed when comparing alpha against the threshold level `1 - zeta`.
const LEVEL_SLACK: f64 = 1e-12;

/// `ln(zeta / (1 - alpha))`, the log of the tail-probability ratio.
fn log_ratio(fit: &GpdFit, alpha: f64) -> Result<f64, EvtError> {
    check_alpha(alpha)?;
    let level = fit.threshold_level();
    if alpha < level - LEVEL_SLACK {
        return Err(EvtError::AlphaBelowThreshold { alpha, threshold_level: level });
    }
    Ok((fit.zeta / (1.0 - alpha)).ln().max(0.0))
}

/// `q - u = beta/xi * (((1-alpha)/zeta)^(-xi) - 1)`, with the `beta * L` limit at `xi = 0`.
fn excess_quantile(xi: f64, beta: f64, l: f64) -> f64 {
    if xi.abs() < XI_ZERO {
        beta * l
    } else {
        beta / xi * (xi * l).exp_m1()
    }
}

/// `d(q - u)/dxi`.
fn excess_quantile_dxi(xi: f64, beta: f64, l: f64) -> f64 {
    let t = xi * l;
    if t.abs() < 1e-4 {
        beta * (l * l / 2.0 + xi * l.powi(3) / 3.0 + xi * xi * l.powi(4) / 8.0)
    } else {
        beta * (l * t.exp() / xi - t.exp_m1() / (xi * xi))
    }
}

/// POT Value-at-Risk `u + beta/xi * (((1-alpha)/zeta)^(-xi) - 1)`.
pub fn pot_var(fit: &GpdFit, alpha: f64) -> Result<f64, EvtError> {
    let l = log_ratio(fit, alpha)?;
    Ok(fit.threshold + excess_quantile(fit.xi, fit.beta, l))
}

/// POT VaR indexed by the tail mass `1 - alpha`, usable where `alpha` itself
/// would round to 1. No threshold check.
pub(crate) fn var_at_tail_mass(fit: &GpdFit, tail: f64) -> f64 {
    fit.threshold + excess_quantile(fit.xi, fit.beta, (fit.zeta / tail).ln().max(0.0))
}

/// POT CVaR point value `q + (beta + xi (q - u)) / (1 - xi)`.
pub fn pot_cvar_value(fit: &GpdFit, alpha: f64) -> Result<f64, EvtError> {
    if fit.xi >= 1.0 {
        return Err(EvtError::InfiniteCvar { xi: fit.xi });
    }
    let l = log_ratio(fit, alpha)?;
    let d = excess_quantile(fit.xi, fit.beta, l);
    Ok(fit.threshold + (d + fit.beta) / (1.0 - fit.xi))
}

/// How the CVaR gradient treats the POT quantile `q(xi, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvarGradient {
    /// Differentiate through `q(xi, beta)` as well.
    #[default]
    Total,
    /// Treat `q` as a constant: `((q - u + beta)/(1 - xi)^2, 1/(1 - xi))`.
    QuantileHeld,
}

/// Gradient of the POT CVaR with respect to `(xi, beta)`.
pub fn cvar_gradient(fit: &GpdFit, alpha: f64, mode: CvarGradient) -> Result<[f64; 2], EvtError> {
    let (xi, beta) = (fit.xi, fit.beta);
    if xi >= 1.0 {
        return Err(EvtError::InfiniteCvar { xi });
    }
    let l = log_ratio(fit, alpha)?;
    let d = excess_quantile(xi, beta, l);
    let held = [(d + beta) / (1.0 - xi).powi(2), 1.0 / (1.0 - xi)];
    Ok(match mode {
        CvarGradient::QuantileHeld => held,
        CvarGradient::Total => {
            // dh/dq = 1/(1 - xi)
            let dq_dxi = excess_quantile_dxi(xi, beta, l);
            let dq_dbeta = d / beta;
            [held[0] + dq_dxi / (1.0 - xi), held[1] + dq_dbeta / (1.0 - xi)]
        }
    })
}

/// `(1/N_u) g^T I^{-1} g` for a gradient `g` in `(xi, beta)`.
pub(crate) fn quadratic_form(fit: &GpdFit, g: [f64; 2], max_condition: f64) -> Result<f64, EvtError> {
    let condition = fit.info_condition();
    if !(condition <= max_condition) {
        return Err(EvtError::SingularInformation { condition });
    }
    let m = &fit.info;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    let q = g[0] * (inv[0][0] * g[0] + inv[0][1] * g[1]) + g[1] * (inv[1][0] * g[0] + inv[1][1] * g[1]);
    let v = q / fit.n_exceed as f64;
    if v < 0.0 {
        let scale = (g[0] * g[0] + g[1] * g[1]) * inv[0][0].abs().max(inv[1][1].abs()) / fit.n_exceed as f64;
        if -v <= 1e-12 * scale {
            log::warn!("delta-method variance {v:e} clamped to zero");
            return Ok(0.0);
        }
        return Err(EvtError::SingularInformation { condition });
    }
    Ok(v)
}

/// Delta-method variance of the POT CVaR at level `alpha`.
pub fn delta_variance(fit: &GpdFit, alpha: f64) -> Result<f64, EvtError> {
    delta_variance_with(fit, alpha, CvarGradient::default())
}

pub fn delta_variance_with(fit: &GpdFit, alpha: f64, mode: CvarGradient) -> Result<f64, EvtError> {
    if fit.xi >= 0.5 {
        log::debug!("shape xi = {:.3} >= 0.5: MLE asymptotics are not regular", fit.xi);
    }
    let g = cvar_gradient(fit, alpha, mode)?;
    quadratic_form(fit, g, 1e12)
}

/// POT CVaR with its delta-method variance.
pub fn pot_cvar(fit: &GpdFit, alpha: f64) -> Result<RiskEstimate, EvtError> {
    pot_cvar_with(fit, alpha, CvarGradient::default())
}

pub fn pot_cvar_with(fit: &GpdFit, alpha: f64, mode: CvarGradient) -> Result<RiskEstimate, EvtError> {
    let value = pot_cvar_value(fit, alpha)?;
    let variance = delta_variance_with(fit, alpha, mode)?;
    Ok(RiskEstimate { value, variance, alpha, method: RiskMethod::PotCvar })
}
