//! Maximum-likelihood peaks-over-threshold fit of the GPD.
//!
//! The likelihood is searched over the box `xi in [-0.49, 0.99]`,
//! `log beta in [log(b0/1e3), log(b0*1e3)]` (b0 the mean excess) with a
//! multi-start Nelder-Mead, seeded among others by the probability-weighted
//! moments estimate, and then polished by Newton steps on the closed-form
//! gradient and Hessian. Candidates violating `1 + xi z / beta > 0` for any
//! excess get log-likelihood `-inf`.

use serde::{Deserialize, Serialize};

use super::gpd::{gradient_unchecked, hessian_unchecked, logpdf_unchecked, XI_ZERO};
use super::{empirical_var, EvtError, Sample};
use crate::optim::{nelder_mead, Bounds, NelderMeadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Level of the empirical quantile used as the threshold.
    pub threshold_quantile: f64,
    /// Floor on the number of exceedances; the threshold is lowered to meet it.
    pub min_exceedances: usize,
    /// Samples smaller than this are rejected outright.
    pub min_sample: usize,
    pub xi_lower: f64,
    pub xi_upper: f64,
    /// `beta` is searched within `[b0 / span, b0 * span]`.
    pub beta_span: f64,
    pub max_evals_per_start: usize,
    /// Condition number above which the information matrix counts as singular.
    pub max_condition: f64,
    /// Fail the fit when the information matrix is singular. When false the
    /// singularity surfaces later, from [`super::delta_variance`].
    pub strict_information: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            threshold_quantile: 0.9,
            min_exceedances: 30,
            min_sample: 60,
            xi_lower: -0.49,
            xi_upper: 0.99,
            beta_span: 1e3,
            max_evals_per_start: 1500,
            max_condition: 1e12,
            strict_information: true,
        }
    }
}

/// A fitted tail model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    /// Threshold `u`.
    #[serde(rename = "u")]
    pub threshold: f64,
    pub n_total: usize,
    pub n_exceed: usize,
    /// Exceedance fraction `N_u / N`.
    pub zeta: f64,
    pub xi: f64,
    pub beta: f64,
    /// Empirical Fisher information per exceedance, ordered `(xi, beta)`.
    pub info: [[f64; 2]; 2],
    pub loglik: f64,
    /// Euclidean norm of the log-likelihood gradient at the optimum.
    pub gradient_norm: f64,
    /// The optimum sits on a face of the search box.
    pub at_boundary: bool,
}

impl GpdFit {
    /// A fit with the given parameters and the expected (rather than
    /// empirical) Fisher information of `GPD(xi, beta)`.
    pub fn exact(threshold: f64, n_total: usize, n_exceed: usize, xi: f64, beta: f64) -> Self {
        Self {
            threshold,
            n_total,
            n_exceed,
            zeta: n_exceed as f64 / n_total as f64,
            xi,
            beta,
            info: expected_information(xi, beta),
            loglik: f64::NAN,
            gradient_norm: 0.0,
            at_boundary: false,
        }
    }

    /// Threshold level `1 - zeta`; tail quantities are defined for alpha at or above it.
    pub fn threshold_level(&self) -> f64 {
        1.0 - self.zeta
    }

    /// Condition number of the information matrix, infinite unless positive definite.
    pub fn info_condition(&self) -> f64 {
        condition_number(&self.info)
    }
}

/// Expected Fisher information of one GPD observation (valid for `xi > -1/2`).
pub fn expected_information(xi: f64, beta: f64) -> [[f64; 2]; 2] {
    let a = (1.0 + xi) * (1.0 + 2.0 * xi);
    [[2.0 / a, 1.0 / (beta * a)], [1.0 / (beta * a), 1.0 / (beta * beta * (1.0 + 2.0 * xi))]]
}

pub(crate) fn condition_number(m: &[[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = ((m[0][0] - m[1][1]).powi(2) + 4.0 * m[0][1] * m[1][0]).max(0.0).sqrt();
    let hi = 0.5 * (tr + disc);
    let lo = 0.5 * (tr - disc);
    if !(lo > 0.0) || !det.is_finite() {
        return f64::INFINITY;
    }
    hi / lo
}

/// Fit the GPD above the `threshold_quantile` empirical quantile, lowering the
/// threshold if needed so that at least `min_exceedances` observations remain.
pub fn fit_gpd(sample: &Sample, config: &FitConfig) -> Result<GpdFit, EvtError> {
    let n = sample.len();
    if n < config.min_sample {
        return Err(EvtError::InsufficientData { n, required: config.min_sample });
    }
    let mut u = empirical_var(sample, config.threshold_quantile)?;
    let sorted = sample.sorted();
    let above = n - sorted.partition_point(|&x| x <= u);
    if above < config.min_exceedances {
        u = sorted[n - config.min_exceedances - 1];
    }
    fit_gpd_at(sample, u, config)
}

/// Fit the GPD to the excesses over a given threshold `u`.
pub fn fit_gpd_at(sample: &Sample, u: f64, config: &FitConfig) -> Result<GpdFit, EvtError> {
    let sorted = sample.sorted();
    let first = sorted.partition_point(|&x| x <= u);
    let excesses: Vec<f64> = sorted[first..].iter().map(|&x| x - u).collect();
    if excesses.len() < config.min_exceedances.max(2) {
        return Err(EvtError::InsufficientExceedances {
            found: excesses.len(),
            required: config.min_exceedances.max(2),
        });
    }
    fit_excesses(&excesses, sample.len(), u, config)
}

fn fit_excesses(z: &[f64], n_total: usize, u: f64, config: &FitConfig) -> Result<GpdFit, EvtError> {
    let n_exceed = z.len();
    let nf = n_exceed as f64;
    let z_max = z.iter().copied().fold(0.0, f64::max);
    let b0 = z.iter().sum::<f64>() / nf;
    if !(b0 > 0.0) {
        return Err(EvtError::InsufficientExceedances { found: 0, required: config.min_exceedances });
    }
    let bounds = Bounds::new(
        vec![config.xi_lower, (b0 / config.beta_span).ln()],
        vec![config.xi_upper, (b0 * config.beta_span).ln()],
    );

    let neg_loglik = |p: &[f64]| -> f64 {
        let (xi, beta) = (p[0], p[1].exp());
        if xi < 0.0 && 1.0 + xi * z_max / beta <= 0.0 {
            return f64::INFINITY;
        }
        -z.iter().map(|&zi| logpdf_unchecked(xi, beta, zi)).sum::<f64>()
    };

    let feasible = |xi: f64, beta: f64| -> [f64; 2] {
        let xi = xi.clamp(config.xi_lower + 1e-3, config.xi_upper - 1e-3);
        let mut beta = beta.clamp(b0 / config.beta_span * 1.01, b0 * config.beta_span / 1.01);
        if xi < 0.0 {
            beta = beta.max(-xi * z_max * 1.05);
        }
        [xi, beta.ln()]
    };
    let (pwm_xi, pwm_beta) = pwm_estimate(z);
    let starts = [
        feasible(pwm_xi, pwm_beta),
        feasible(0.0, b0),
        feasible(0.2, 0.8 * b0),
        feasible(-0.2, 1.2 * b0),
        feasible(0.5, 0.6 * b0),
    ];

    let nm_opts = NelderMeadOptions {
        max_evals: config.max_evals_per_start,
        x_tol: 1e-9,
        f_tol: 1e-13,
        initial_step: 0.05,
    };
    let best = starts
        .iter()
        .map(|s| nelder_mead(neg_loglik, s, &bounds, &nm_opts))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(EvtError::NoConvergence("no start reached a finite likelihood".into()));
    }

    let (mut xi, mut beta) = (best.x[0], best.x[1].exp());
    let mut loglik = -best.value;
    newton_polish(z, &mut xi, &mut beta, &mut loglik, &bounds, z_max);

    let (grad, hess) = sums(z, xi, beta);
    let gradient_norm = grad[0].hypot(grad[1]);
    let at_boundary = bounds.on_boundary(&[xi, beta.ln()], 1e-6);
    if !at_boundary && gradient_norm > 1e-3 * nf {
        return Err(EvtError::NoConvergence(format!(
            "interior optimum with gradient norm {gradient_norm:e} over {n_exceed} exceedances"
        )));
    }
    let info = [
        [-hess[0][0] / nf, -hess[0][1] / nf],
        [-hess[1][0] / nf, -hess[1][1] / nf],
    ];
    let fit = GpdFit {
        threshold: u,
        n_total,
        n_exceed,
        zeta: nf / n_total as f64,
        xi,
        beta,
        info,
        loglik,
        gradient_norm,
        at_boundary,
    };
    if config.strict_information {
        let condition = fit.info_condition();
        if condition > config.max_condition {
            return Err(EvtError::SingularInformation { condition });
        }
    }
    if at_boundary {
        log::debug!("GPD fit on the search-box boundary: xi = {xi}, beta = {beta}");
    }
    Ok(fit)
}

fn sums(z: &[f64], xi: f64, beta: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for &zi in z {
        let gi = gradient_unchecked(xi, beta, zi);
        let hi = hessian_unchecked(xi, beta, zi);
        g[0] += gi[0];
        g[1] += gi[1];
        for r in 0..2 {
            for c in 0..2 {
                h[r][c] += hi[r][c];
            }
        }
    }
    (g, h)
}

fn loglik_at(z: &[f64], xi: f64, beta: f64, z_max: f64) -> f64 {
    if beta <= 0.0 || (xi < 0.0 && 1.0 + xi * z_max / beta <= 0.0) {
        return f64::NEG_INFINITY;
    }
    z.iter().map(|&zi| logpdf_unchecked(xi, beta, zi)).sum()
}

/// Damped Newton ascent in `(xi, beta)`; stops on a small gradient, a tiny
/// step, or when no damped step improves the likelihood.
fn newton_polish(z: &[f64], xi: &mut f64, beta: &mut f64, loglik: &mut f64, bounds: &Bounds, z_max: f64) {
    let nf = z.len() as f64;
    for _ in 0..50 {
        let (g, h) = sums(z, *xi, *beta);
        if g[0].hypot(g[1]) < 1e-8 * nf {
            break;
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        // Newton needs a negative-definite Hessian to be an ascent direction
        if !(h[0][0] < 0.0 && det > 0.0) {
            break;
        }
        let step = [
            -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
            -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
        ];
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand_xi = *xi + t * step[0];
            let cand_beta = *beta + t * step[1];
            if cand_beta > 0.0 && bounds.contains(&[cand_xi, cand_beta.ln()]) {
                let ll = loglik_at(z, cand_xi, cand_beta, z_max);
                if ll >= *loglik {
                    *xi = cand_xi;
                    *beta = cand_beta;
                    *loglik = ll;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        let size = (t * step[0]).hypot(t * step[1] / beta.max(1e-300));
        if !moved || size < 1e-10 {
            break;
        }
    }
    if xi.abs() < XI_ZERO {
        *loglik = loglik_at(z, *xi, *beta, z_max);
    }
}

/// Probability-weighted moments estimate, used only as a start point.
fn pwm_estimate(z: &[f64]) -> (f64, f64) {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let a0 = s.iter().sum::<f64>() / n;
    let a1 = s
        .iter()
        .enumerate()
        .map(|(j, &x)| (1.0 - (j as f64 + 0.65) / n) * x)
        .sum::<f64>()
        / n;
    let d = a0 - 2.0 * a1;
    if !(d > 0.0) {
        return (0.0, a0);
    }
    (2.0 - a0 / d, 2.0 * a0 * a1 / d)
}
