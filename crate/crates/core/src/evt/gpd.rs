//! Generalized Pareto distribution: CDF, log-density and the closed-form first
//! and second derivatives of the log-density in `(xi, beta)`.

use super::EvtError;

/// Shapes with `|xi|` below this use the exponential (`xi = 0`) formulas.
pub const XI_ZERO: f64 = 1e-9;

/// Below this `|xi|` the xi-derivatives switch to their Taylor expansions, where
/// the closed forms lose digits to cancellation between `log(1 + xi y) / xi^k`
/// terms.
const XI_SERIES: f64 = 1e-4;

fn check_support(xi: f64, beta: f64, z: f64) -> Result<(), EvtError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(EvtError::InvalidScale(beta));
    }
    if !(z >= 0.0) || !z.is_finite() || 1.0 + xi * z / beta <= 0.0 {
        return Err(EvtError::OutsideSupport { xi, beta, z });
    }
    Ok(())
}

/// `G(z) = 1 - (1 + xi z / beta)^(-1/xi)`, or `1 - exp(-z/beta)` at `xi = 0`.
pub fn gpd_cdf(xi: f64, beta: f64, z: f64) -> Result<f64, EvtError> {
    if xi < 0.0 && z >= -beta / xi && z.is_finite() && z >= 0.0 && beta > 0.0 {
        // at or past the finite right endpoint
        return Ok(1.0);
    }
    check_support(xi, beta, z)?;
    Ok(cdf_unchecked(xi, beta, z))
}

fn cdf_unchecked(xi: f64, beta: f64, z: f64) -> f64 {
    let y = z / beta;
    if xi.abs() < XI_ZERO {
        -(-y).exp_m1()
    } else {
        -((-1.0 / xi) * (xi * y).ln_1p()).exp_m1()
    }
}

/// `log g(z) = -log beta - (1 + 1/xi) log(1 + xi z / beta)`.
pub fn gpd_logpdf(xi: f64, beta: f64, z: f64) -> Result<f64, EvtError> {
    check_support(xi, beta, z)?;
    Ok(logpdf_unchecked(xi, beta, z))
}

pub(crate) fn logpdf_unchecked(xi: f64, beta: f64, z: f64) -> f64 {
    let y = z / beta;
    if xi.abs() < XI_ZERO {
        -beta.ln() - y
    } else {
        -beta.ln() - (1.0 + 1.0 / xi) * (xi * y).ln_1p()
    }
}

/// Inverse CDF, `beta/xi * ((1-p)^(-xi) - 1)`.
pub fn gpd_quantile(xi: f64, beta: f64, p: f64) -> f64 {
    let l = -(-p).ln_1p();
    if xi.abs() < XI_ZERO {
        beta * l
    } else {
        beta / xi * (xi * l).exp_m1()
    }
}

/// `(d/dxi, d/dbeta)` of `log g(z)`.
pub fn log_density_gradient(xi: f64, beta: f64, z: f64) -> Result<[f64; 2], EvtError> {
    check_support(xi, beta, z)?;
    Ok(gradient_unchecked(xi, beta, z))
}

/// Second derivatives of `log g(z)` as `[[d2/dxi2, d2/dxi dbeta], [.., d2/dbeta2]]`.
pub fn log_density_hessian(xi: f64, beta: f64, z: f64) -> Result<[[f64; 2]; 2], EvtError> {
    check_support(xi, beta, z)?;
    Ok(hessian_unchecked(xi, beta, z))
}

pub(crate) fn gradient_unchecked(xi: f64, beta: f64, z: f64) -> [f64; 2] {
    let w = beta + xi * z;
    let d_beta = ((z * (xi + 1.0)) / w - 1.0) / beta;
    let y = z / beta;
    let d_xi = if xi.abs() < XI_SERIES {
        let (y2, y3, y4) = (y * y, y * y * y, y * y * y * y);
        y2 / 2.0 - y + xi * (y2 - 2.0 * y3 / 3.0) + xi * xi * (0.75 * y4 - y3)
    } else {
        (xi * y).ln_1p() / (xi * xi) - (1.0 / xi + 1.0) * z / w
    };
    [d_xi, d_beta]
}

pub(crate) fn hessian_unchecked(xi: f64, beta: f64, z: f64) -> [[f64; 2]; 2] {
    let w = beta + xi * z;
    let a = z * (xi + 1.0) / w;
    let d2_beta = -(a - 1.0) / (beta * beta) - z * (xi + 1.0) / (beta * w * w);
    let d_xi_beta = (z / w - z * z * (xi + 1.0) / (w * w)) / beta;
    let y = z / beta;
    let d2_xi = if xi.abs() < XI_SERIES {
        let (y2, y3, y4, y5) = (y * y, y.powi(3), y.powi(4), y.powi(5));
        y2 - 2.0 * y3 / 3.0 + xi * (1.5 * y4 - 2.0 * y3) + xi * xi * (3.0 * y4 - 2.4 * y5)
    } else {
        -2.0 * (xi * y).ln_1p() / xi.powi(3) + 2.0 * z / (xi * xi * w) + (1.0 / xi + 1.0) * z * z / (w * w)
    };
    [[d2_xi, d_xi_beta], [d_xi_beta, d2_beta]]
}
