//! Spectral risk measures `R = ∫ VaR_λ φ(λ) dλ` evaluated on a POT tail.

use serde::{Deserialize, Serialize};

use super::fit::GpdFit;
use super::pot::{quadratic_form, var_at_tail_mass};
use super::{EvtError, RiskEstimate, RiskMethod};
use crate::quadrature::{integrate, QuadOptions};

/// A risk spectrum on `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralMeasure {
    /// `φ = 1/(1-α)` on `[α, 1)`: the CVaR spectrum.
    Cvar { alpha: f64 },
    /// Piecewise-constant weights: `weights[i]` on `[knots[i], knots[i+1])`,
    /// the last weight extending to 1.
    Step { knots: Vec<f64>, weights: Vec<f64> },
}

const MASS_TOL: f64 = 1e-8;

impl SpectralMeasure {
    pub fn cvar(alpha: f64) -> Result<Self, EvtError> {
        super::check_alpha(alpha)?;
        Ok(Self::Cvar { alpha })
    }

    /// Nonnegative step weights integrating to one. Monotonicity is not
    /// required here; see [`Self::is_admissible`].
    pub fn step(knots: Vec<f64>, weights: Vec<f64>) -> Result<Self, EvtError> {
        if knots.is_empty() || knots.len() != weights.len() {
            return Err(EvtError::InvalidSpectrum("need one weight per knot".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) || !(knots[0] >= 0.0) || !(knots[knots.len() - 1] < 1.0) {
            return Err(EvtError::InvalidSpectrum("knots must increase strictly within [0, 1)".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(EvtError::InvalidSpectrum("weights must be finite and nonnegative".into()));
        }
        let s = Self::Step { knots, weights };
        let mass = s.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(EvtError::InvalidSpectrum(format!("weights integrate to {mass}, not 1")));
        }
        Ok(s)
    }

    /// Step spectrum that must also be nondecreasing (a coherent risk measure).
    pub fn admissible_step(knots: Vec<f64>, weights: Vec<f64>) -> Result<Self, EvtError> {
        let s = Self::step(knots, weights)?;
        if !s.is_admissible() {
            return Err(EvtError::InvalidSpectrum("weights must be nondecreasing".into()));
        }
        Ok(s)
    }

    /// `(a, b, φ)` constant pieces with positive weight.
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        match self {
            Self::Cvar { alpha } => vec![(*alpha, 1.0, 1.0 / (1.0 - alpha))],
            Self::Step { knots, weights } => knots
                .iter()
                .enumerate()
                .map(|(i, &a)| (a, knots.get(i + 1).copied().unwrap_or(1.0), weights[i]))
                .filter(|p| p.2 > 0.0)
                .collect(),
        }
    }

    pub fn mass(&self) -> f64 {
        self.pieces().iter().map(|(a, b, w)| (b - a) * w).sum()
    }

    /// Lower end of the support.
    pub fn lower(&self) -> f64 {
        self.pieces().first().map_or(1.0, |p| p.0)
    }

    pub fn is_admissible(&self) -> bool {
        match self {
            Self::Cvar { .. } => true,
            Self::Step { weights, .. } => weights.windows(2).all(|w| w[0] <= w[1]),
        }
    }

    fn reaches_one(&self) -> bool {
        self.pieces().last().is_some_and(|p| p.1 >= 1.0)
    }
}

fn integrate_spectrum(fit: &GpdFit, phi: &SpectralMeasure, opts: &QuadOptions) -> Result<f64, EvtError> {
    let mut total = 0.0;
    for (a, b, w) in phi.pieces() {
        let part = if b < 1.0 {
            integrate(|lambda| var_at_tail_mass(fit, 1.0 - lambda), a, b, opts)?.value
        } else {
            // 1 - λ = t^(1/γ); with γ = 1 - ξ the (1-λ)^(-ξ) growth cancels the Jacobian
            let gamma = if fit.xi > 0.0 { 1.0 - fit.xi } else { 0.5 };
            let top = (1.0 - a).powf(gamma);
            let inv = 1.0 / gamma;
            integrate(
                |t: f64| {
                    if t <= 0.0 {
                        return 0.0;
                    }
                    let tail = t.powf(inv);
                    var_at_tail_mass(fit, tail) * inv * tail / t
                },
                0.0,
                top,
                opts,
            )?
            .value
        };
        total += w * part;
    }
    Ok(total)
}

/// POT estimate of a spectral risk measure with a delta-method variance whose
/// gradient comes from central differences of the quadrature value.
pub fn spectral_pot(fit: &GpdFit, phi: &SpectralMeasure) -> Result<RiskEstimate, EvtError> {
    let level = fit.threshold_level();
    let lambda0 = phi.lower();
    if lambda0 < level - 1e-12 {
        return Err(EvtError::SpectralMassBelowThreshold { lambda0, threshold_level: level });
    }
    if fit.xi >= 1.0 && phi.reaches_one() {
        return Err(EvtError::InfiniteCvar { xi: fit.xi });
    }
    let value_opts = QuadOptions { rel_tol: 1e-8, ..Default::default() };
    let value = integrate_spectrum(fit, phi, &value_opts)?;

    // tighter tolerance so the difference quotient is not dominated by quadrature error
    let fd_opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-15, max_intervals: 4000 };
    let at = |xi: f64, beta: f64| integrate_spectrum(&GpdFit { xi, beta, ..fit.clone() }, phi, &fd_opts);
    let hx = 1e-5 * fit.xi.abs().max(1.0);
    let hb = 1e-5 * fit.beta.abs().max(1.0);
    let g = [
        (at(fit.xi + hx, fit.beta)? - at(fit.xi - hx, fit.beta)?) / (2.0 * hx),
        (at(fit.xi, fit.beta + hb)? - at(fit.xi, fit.beta - hb)?) / (2.0 * hb),
    ];
    let variance = quadratic_form(fit, g, 1e12)?;
    let alpha = match phi {
        SpectralMeasure::Cvar { alpha } => *alpha,
        SpectralMeasure::Step { .. } => lambda0,
    };
    Ok(RiskEstimate { value, variance, alpha, method: RiskMethod::Spectral })
}
