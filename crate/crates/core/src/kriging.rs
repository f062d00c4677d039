//! Stochastic kriging with a constant trend, Gaussian correlation and known
//! heterogeneous intrinsic noise.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{lhs, Domain};
use crate::optim::{nelder_mead, Bounds, NelderMeadOptions};
use crate::rng::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrigingError {
    #[error("need at least 2 design sites, got {0}")]
    TooFewSites(usize),
    #[error("location has {found} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("site {index} has invalid intrinsic variance {value}")]
    InvalidVariance { index: usize, value: f64 },
    #[error("site {index} has a non-finite location or response")]
    NonFinite { index: usize },
    #[error("sites {first} and {second} share a location with zero intrinsic variance")]
    DuplicateSites { first: usize, second: usize },
    #[error("covariance is not positive definite even with nugget {nugget:e}")]
    NotPositiveDefinite { nugget: f64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidParameters(String),
    #[error("likelihood maximisation found no finite value")]
    OptimizerFailed,
}

impl KrigingError {
    /// Whether the error reflects bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Self::NotPositiveDefinite { .. } | Self::OptimizerFailed)
    }
}

/// A design point with its aggregated response and intrinsic variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSite {
    pub location: Vec<f64>,
    pub response: f64,
    pub intrinsic_variance: f64,
}

/// `exp(-sum theta_i (a_i - b_i)^2)`.
pub fn kernel(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).zip(theta).map(|((x, y), t)| t * (x - y) * (x - y)).sum();
    (-s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Diagonal jitter in units of `tau2`; escalated on factorization failure.
    pub nugget: f64,
    pub max_nugget: f64,
    /// Number of Latin hypercube starts in the log-parameter box.
    pub starts: usize,
    pub max_evals: usize,
    /// Per-dimension domain widths scaling the `theta` box; defaults to the
    /// site extent.
    pub widths: Option<Vec<f64>>,
    /// `theta_i` ranges over `[lo, hi] / width_i^2`.
    pub theta_range: (f64, f64),
    /// `tau2` ranges over this multiple of the response variance.
    pub tau2_range: (f64, f64),
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            nugget: 0.0,
            max_nugget: 1e-6,
            starts: 10,
            max_evals: 2000,
            widths: None,
            theta_range: (1e-3, 1e3),
            tau2_range: (1e-6, 1e3),
            seed: 0,
        }
    }
}

/// A fitted surface. Immutable; prediction only reads cached solves.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    beta0: f64,
    tau2: f64,
    theta: Vec<f64>,
    nugget: f64,
    sites: Vec<DesignSite>,
    /// Lower Cholesky factor `L` of `Sigma`.
    factor: DMatrix<f64>,
    /// `L^-1 (Y - beta0)`.
    white_resid: DVector<f64>,
    /// `L^-1 1`.
    white_ones: DVector<f64>,
    loglik: f64,
}

/// Serialized layout of a [`KrigingModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParts {
    pub beta0: f64,
    pub tau2: f64,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub nugget: f64,
    pub sites: Vec<DesignSite>,
}

fn validate(sites: &[DesignSite]) -> Result<usize, KrigingError> {
    if sites.len() < 2 {
        return Err(KrigingError::TooFewSites(sites.len()));
    }
    let dim = sites[0].location.len();
    for (index, s) in sites.iter().enumerate() {
        if s.location.len() != dim {
            return Err(KrigingError::DimensionMismatch { expected: dim, found: s.location.len() });
        }
        if !s.response.is_finite() || s.location.iter().any(|v| !v.is_finite()) {
            return Err(KrigingError::NonFinite { index });
        }
        if !(s.intrinsic_variance >= 0.0) || !s.intrinsic_variance.is_finite() {
            return Err(KrigingError::InvalidVariance { index, value: s.intrinsic_variance });
        }
    }
    Ok(dim)
}

fn check_duplicates(sites: &[DesignSite]) -> Result<(), KrigingError> {
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            if sites[i].location == sites[j].location
                && sites[i].intrinsic_variance == 0.0
                && sites[j].intrinsic_variance == 0.0
            {
                return Err(KrigingError::DuplicateSites { first: i, second: j });
            }
        }
    }
    Ok(())
}

fn covariance(sites: &[DesignSite], tau2: f64, theta: &[f64], nugget: f64) -> DMatrix<f64> {
    let k = sites.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        m[(i, i)] = tau2 * (1.0 + nugget) + sites[i].intrinsic_variance;
        for j in 0..i {
            let c = tau2 * kernel(&sites[i].location, &sites[j].location, theta);
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    m
}

/// Cholesky factor of `Sigma`, escalating the nugget by factors of 10 from
/// `1e-12` up to `max_nugget` when the factorization fails.
fn factor(
    sites: &[DesignSite],
    tau2: f64,
    theta: &[f64],
    nugget: f64,
    max_nugget: f64,
) -> Result<(Cholesky<f64, Dyn>, f64), KrigingError> {
    let mut current = nugget;
    loop {
        if let Some(c) = Cholesky::new(covariance(sites, tau2, theta, current)) {
            return Ok((c, current));
        }
        let next = if current <= 0.0 { 1e-12 } else { current * 10.0 };
        if next > max_nugget * (1.0 + 1e-9) {
            return Err(KrigingError::NotPositiveDefinite { nugget: current });
        }
        current = next;
    }
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

struct Profile {
    beta0: f64,
    loglik: f64,
}

fn profile(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> Profile {
    let k = y.len();
    let ones = chol.solve(&DVector::from_element(k, 1.0));
    let sy = chol.solve(y);
    let beta0 = sy.sum() / ones.sum();
    let quad = y.add_scalar(-beta0).dot(&(&sy - &ones * beta0));
    let loglik = -0.5 * (k as f64 * LN_2PI + log_det(chol) + quad);
    Profile { beta0, loglik }
}

fn responses(sites: &[DesignSite]) -> DVector<f64> {
    DVector::from_iterator(sites.len(), sites.iter().map(|s| s.response))
}

/// Log-likelihood `-k/2 ln 2pi - 1/2 ln|Sigma| - 1/2 r' Sigma^-1 r` at the
/// profiled constant trend, which is returned alongside.
pub fn log_likelihood(sites: &[DesignSite], tau2: f64, theta: &[f64], nugget: f64) -> Result<(f64, f64), KrigingError> {
    let dim = validate(sites)?;
    check_params(dim, tau2, theta)?;
    let (chol, _) = factor(sites, tau2, theta, nugget, nugget)?;
    let p = profile(&chol, &responses(sites));
    Ok((p.loglik, p.beta0))
}

/// Log-likelihood at a given trend `beta0` rather than the profiled one.
pub fn log_likelihood_at(sites: &[DesignSite], beta0: f64, tau2: f64, theta: &[f64], nugget: f64) -> Result<f64, KrigingError> {
    let dim = validate(sites)?;
    check_params(dim, tau2, theta)?;
    let (chol, _) = factor(sites, tau2, theta, nugget, nugget)?;
    let r = responses(sites).add_scalar(-beta0);
    let quad = r.dot(&chol.solve(&r));
    Ok(-0.5 * (sites.len() as f64 * LN_2PI + log_det(&chol) + quad))
}

fn check_params(dim: usize, tau2: f64, theta: &[f64]) -> Result<(), KrigingError> {
    if theta.len() != dim {
        return Err(KrigingError::DimensionMismatch { expected: dim, found: theta.len() });
    }
    if !(tau2 > 0.0) || !tau2.is_finite() {
        return Err(KrigingError::InvalidParameters(format!("tau2 = {tau2}")));
    }
    if theta.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(KrigingError::InvalidParameters(format!("theta = {theta:?}")));
    }
    Ok(())
}

/// Maximum-likelihood fit over `(log tau2, log theta)` with the trend profiled
/// out, from Latin hypercube starts in the log box.
pub fn fit(sites: Vec<DesignSite>, opts: &FitOptions) -> Result<KrigingModel, KrigingError> {
    let dim = validate(&sites)?;
    check_duplicates(&sites)?;
    let widths = match &opts.widths {
        Some(w) if w.len() != dim => return Err(KrigingError::DimensionMismatch { expected: dim, found: w.len() }),
        Some(w) => w.clone(),
        None => (0..dim)
            .map(|d| {
                let (lo, hi) = sites.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    (lo.min(s.location[d]), hi.max(s.location[d]))
                });
                if hi > lo { hi - lo } else { 1.0 }
            })
            .collect(),
    };
    let y = responses(&sites);
    let mean = y.mean();
    let var_y = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
    let scale = if var_y > 0.0 { var_y } else { 1.0 };

    let mut lower = vec![(opts.tau2_range.0 * scale).ln()];
    let mut upper = vec![(opts.tau2_range.1 * scale).ln()];
    for w in &widths {
        lower.push((opts.theta_range.0 / (w * w)).ln());
        upper.push((opts.theta_range.1 / (w * w)).ln());
    }
    let bounds = Bounds::new(lower.clone(), upper.clone());

    let objective = |p: &[f64]| -> f64 {
        let tau2 = p[0].exp();
        let theta: Vec<f64> = p[1..].iter().map(|v| v.exp()).collect();
        match factor(&sites, tau2, &theta, opts.nugget, opts.max_nugget) {
            Ok((chol, _)) => -profile(&chol, &y).loglik,
            Err(_) => f64::INFINITY,
        }
    };

    let box_domain = Domain::new(lower, upper).map_err(|e| KrigingError::InvalidParameters(e.to_string()))?;
    let starts = lhs(&box_domain, opts.starts.max(1), &RngStream::new(opts.seed, 0x6b72_6967))
        .map_err(|e| KrigingError::InvalidParameters(e.to_string()))?;
    let nm = NelderMeadOptions { max_evals: opts.max_evals, x_tol: 1e-6, f_tol: 1e-10, initial_step: 0.1 };
    let best = starts
        .iter()
        .map(|s| nelder_mead(objective, s, &bounds, &nm))
        .filter(|m| m.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(KrigingError::OptimizerFailed)?;

    let tau2 = best.x[0].exp();
    let theta: Vec<f64> = best.x[1..].iter().map(|v| v.exp()).collect();
    let (chol, nugget) = factor(&sites, tau2, &theta, opts.nugget, opts.max_nugget)?;
    let p = profile(&chol, &y);
    if nugget > opts.nugget {
        log::debug!("kriging fit used nugget {nugget:e}");
    }
    Ok(KrigingModel::assemble(p.beta0, tau2, theta, nugget, sites, &chol, p.loglik))
}

impl KrigingModel {
    /// Builds a model from explicit hyperparameters and trend.
    pub fn from_parts(parts: ModelParts) -> Result<Self, KrigingError> {
        let dim = validate(&parts.sites)?;
        check_params(dim, parts.tau2, &parts.theta)?;
        if !parts.beta0.is_finite() || !(parts.nugget >= 0.0) {
            return Err(KrigingError::InvalidParameters(format!("beta0 = {}, nugget = {}", parts.beta0, parts.nugget)));
        }
        let (chol, nugget) = factor(&parts.sites, parts.tau2, &parts.theta, parts.nugget, parts.nugget)?;
        let resid = responses(&parts.sites).add_scalar(-parts.beta0);
        let loglik = -0.5 * (resid.len() as f64 * LN_2PI + log_det(&chol) + resid.dot(&chol.solve(&resid)));
        Ok(Self::assemble(parts.beta0, parts.tau2, parts.theta, nugget, parts.sites, &chol, loglik))
    }

    fn assemble(
        beta0: f64,
        tau2: f64,
        theta: Vec<f64>,
        nugget: f64,
        sites: Vec<DesignSite>,
        chol: &Cholesky<f64, Dyn>,
        loglik: f64,
    ) -> Self {
        let factor = chol.l();
        let k = sites.len();
        let white = |v: DVector<f64>| factor.solve_lower_triangular(&v).expect("Cholesky factor has a positive diagonal");
        let white_resid = white(responses(&sites).add_scalar(-beta0));
        let white_ones = white(DVector::from_element(k, 1.0));
        Self { beta0, tau2, theta, nugget, sites, factor, white_resid, white_ones, loglik }
    }

    pub fn parts(&self) -> ModelParts {
        ModelParts {
            beta0: self.beta0,
            tau2: self.tau2,
            theta: self.theta.clone(),
            nugget: self.nugget,
            sites: self.sites.clone(),
        }
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn sites(&self) -> &[DesignSite] {
        &self.sites
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn dim(&self) -> usize {
        self.sites[0].location.len()
    }

    fn cross_covariance(&self, x0: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.sites.len(),
            self.sites.iter().map(|s| self.tau2 * kernel(x0, &s.location, &self.theta)),
        )
    }

    /// `L^-1 Sigma_M(x0, .)`.
    fn white_cross(&self, x0: &[f64]) -> Result<DVector<f64>, KrigingError> {
        if x0.len() != self.dim() {
            return Err(KrigingError::DimensionMismatch { expected: self.dim(), found: x0.len() });
        }
        Ok(self
            .factor
            .solve_lower_triangular(&self.cross_covariance(x0))
            .expect("Cholesky factor has a positive diagonal"))
    }

    /// Predicted mean `beta0 + Sigma_M(x0, .)' Sigma^-1 (Y - beta0)`, evaluated
    /// as a product of whitened vectors so that interpolation stays exact when
    /// `Sigma` is badly conditioned.
    pub fn predict_mean(&self, x0: &[f64]) -> Result<f64, KrigingError> {
        Ok(self.beta0 + self.white_cross(x0)?.dot(&self.white_resid))
    }

    /// Predicted mean and the standard deviation of the extrinsic prediction
    /// error, including the uncertainty of the estimated trend.
    pub fn predict(&self, x0: &[f64]) -> Result<(f64, f64), KrigingError> {
        let wc = self.white_cross(x0)?;
        let mean = self.beta0 + wc.dot(&self.white_resid);
        let trend = 1.0 - wc.dot(&self.white_ones);
        let mse = self.tau2 - wc.norm_squared() + trend * trend / self.white_ones.norm_squared();
        Ok((mean, mse.max(0.0).sqrt()))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&self.parts())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let parts: ModelParts = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_parts(parts).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn site(x: f64, y: f64, v: f64) -> DesignSite {
        DesignSite { location: vec![x], response: y, intrinsic_variance: v }
    }

    fn parts(sites: Vec<DesignSite>, beta0: f64, tau2: f64, theta: f64) -> ModelParts {
        ModelParts { beta0, tau2, theta: vec![theta], nugget: 0.0, sites }
    }

    /// Gauss-Jordan inverse and LU determinant, no factorization shared with
    /// the implementation.
    fn dense_inverse_and_det(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                r
            })
            .collect();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            if p != c {
                m.swap(p, c);
                det = -det;
            }
            let piv = m[c][c];
            det *= piv;
            for v in m[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r][c];
                    let pivot_row = m[c].clone();
                    for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        (m.into_iter().map(|r| r[n..].to_vec()).collect(), det)
    }

    fn dense_loglik(sites: &[DesignSite], beta0: f64, tau2: f64, theta: &[f64]) -> f64 {
        let k = sites.len();
        let sigma: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        tau2 * kernel(&sites[i].location, &sites[j].location, theta)
                            + if i == j { sites[i].intrinsic_variance } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let (inv, det) = dense_inverse_and_det(&sigma);
        let r: Vec<f64> = sites.iter().map(|s| s.response - beta0).collect();
        let quad: f64 = (0..k).map(|i| (0..k).map(|j| r[i] * inv[i][j] * r[j]).sum::<f64>()).sum();
        -(k as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel(&[0.3, 0.2], &[0.3, 0.2], &[1.0, 5.0]), 1.0);
        assert_relative_eq!(kernel(&[0.0], &[1.0], &[1.0]), (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(kernel(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 3.0]), (-5.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn constant_field() {
        let m = fit(vec![site(0.0, 3.0, 0.0), site(1.0, 3.0, 0.0)], &FitOptions::default()).unwrap();
        assert_relative_eq!(m.beta0(), 3.0, max_relative = 1e-12);
        for x in [0.0, 0.25, 0.5, 1.0] {
            assert_relative_eq!(m.predict_mean(&[x]).unwrap(), 3.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn noiseless_interpolation() {
        let sites: Vec<DesignSite> =
            (0..20).map(|i| i as f64 / 19.0).map(|x| site(x, (6.0 * x).sin(), 0.0)).collect();
        let m = fit(sites.clone(), &FitOptions::default()).unwrap();
        for s in &sites {
            let p = m.predict_mean(&s.location).unwrap();
            assert!((p - s.response).abs() < 1e-8, "{} vs {}", p, s.response);
        }
        let far = m.predict_mean(&[0.5 / 19.0]).unwrap();
        assert!((far - (6.0 * 0.5 / 19.0f64).sin()).abs() < 1e-3);
    }

    #[test]
    fn likelihood_matches_dense() {
        let mut rng = RngStream::new(4, 4).rng();
        for k in 2..=10 {
            let sites: Vec<DesignSite> = (0..k)
                .map(|_| DesignSite {
                    location: vec![rng.random::<f64>(), rng.random::<f64>()],
                    response: rng.random::<f64>() * 4.0,
                    intrinsic_variance: rng.random::<f64>() * 0.1,
                })
                .collect();
            let theta = [2.0, 0.7];
            let (ll, beta0) = log_likelihood(&sites, 1.5, &theta, 0.0).unwrap();
            let dense = dense_loglik(&sites, beta0, 1.5, &theta);
            assert!((ll - dense).abs() < 1e-8, "k={k}: {ll} vs {dense}");
            // profiled trend is optimal
            for d in [-1e-3, 1e-3] {
                assert!(log_likelihood_at(&sites, beta0 + d, 1.5, &theta, 0.0).unwrap() <= ll);
            }
        }
    }

    #[test]
    fn two_site_closed_form() {
        let (y1, y2, v1, v2, tau2, theta, b) = (1.0, 3.0, 0.2, 0.5, 2.0, 1.5, 1.7);
        let m = KrigingModel::from_parts(parts(vec![site(0.0, y1, v1), site(1.0, y2, v2)], b, tau2, theta)).unwrap();
        let rho = (-theta).exp();
        let (a, c, d) = (tau2 + v1, tau2 * rho, tau2 + v2);
        let det = a * d - c * c;
        let (r1, r2) = (y1 - b, y2 - b);
        let w1 = (d * r1 - c * r2) / det;
        let w2 = (-c * r1 + a * r2) / det;
        let x0 = 0.3;
        let k1 = tau2 * (-theta * x0 * x0).exp();
        let k2 = tau2 * (-theta * (1.0 - x0) * (1.0 - x0)).exp();
        let expect = b + k1 * w1 + k2 * w2;
        assert!((m.predict_mean(&[x0]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn noisy_sites_shrink_toward_trend() {
        let b = 1.0;
        for &(y, v) in &[(3.0, 0.5), (-2.0, 0.1), (1.5, 2.0)] {
            let sites = vec![site(0.0, y, v), site(1.0, 0.0, 0.3)];
            let m = KrigingModel::from_parts(parts(sites.clone(), b, 1.0, 2.0)).unwrap();
            let p = m.predict_mean(&[0.0]).unwrap();
            assert!((p - b) * (y - b) > 0.0 && (p - b).abs() < (y - b).abs(), "y={y} p={p}");
            let scaled: Vec<DesignSite> =
                sites.iter().map(|s| DesignSite { intrinsic_variance: 3.0 * s.intrinsic_variance, ..s.clone() }).collect();
            let m3 = KrigingModel::from_parts(parts(scaled, b, 1.0, 2.0)).unwrap();
            for x in [0.0, 0.5, 1.0] {
                let (p1, p3) = (m.predict_mean(&[x]).unwrap(), m3.predict_mean(&[x]).unwrap());
                assert!((p3 - b).abs() <= (p1 - b).abs() && (p3 - b) * (p1 - b) >= 0.0);
            }
        }
    }

    #[test]
    fn regression_limit() {
        let m = KrigingModel::from_parts(parts(vec![site(0.0, 2.0, 0.0), site(1.0, 5.0, 0.0)], 0.5, 1.0, 1e3)).unwrap();
        assert!((m.predict_mean(&[10.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(fit(vec![site(0.0, 1.0, 0.0)], &FitOptions::default()), Err(KrigingError::TooFewSites(1))));
        assert!(matches!(
            fit(vec![site(0.5, 1.0, 0.0), site(0.5, 2.0, 0.0), site(1.0, 0.0, 0.0)], &FitOptions::default()),
            Err(KrigingError::DuplicateSites { first: 0, second: 1 })
        ));
        let m = KrigingModel::from_parts(parts(vec![site(0.0, 1.0, 0.0), site(1.0, 2.0, 0.0)], 0.0, 1.0, 1.0)).unwrap();
        assert!(matches!(m.predict(&[0.0, 1.0]), Err(KrigingError::DimensionMismatch { .. })));
        assert!(KrigingModel::from_parts(parts(vec![site(0.0, 1.0, -1.0), site(1.0, 2.0, 0.0)], 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn nugget_escalation() {
        // coincident noiseless sites make the correlation matrix exactly singular
        let sites = vec![site(0.5, 1.0, 0.0), site(0.5, 1.0, 0.0), site(0.5, 1.0, 0.0)];
        let (_, nugget) = factor(&sites, 1.0, &[1.0], 0.0, 1e-6).unwrap();
        assert_eq!(nugget, 1e-12);
        assert!(matches!(factor(&sites, 1.0, &[1.0], 0.0, 0.0), Err(KrigingError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn json_round_trip() {
        let m = KrigingModel::from_parts(parts(vec![site(0.0, 1.0, 0.1), site(1.0, 2.0, 0.2)], 1.2, 0.9, 3.0)).unwrap();
        let back = KrigingModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.parts(), m.parts());
        assert_eq!(back.predict(&[0.4]).unwrap(), m.predict(&[0.4]).unwrap());
        assert!(KrigingModel::from_json(r#"{"beta0":0,"tau2":1,"theta":[1],"sites":[],"extra":1}"#).is_err());
    }

    #[test]
    fn recovers_generating_parameters() {
        // zero-mean fields with tau2 = 1, theta = 4 on 50 sites observed with
        // known noise variance 1e-4; a single draw can land far from the truth,
        // so the check is on the median over draws plus per-draw optimality
        let k = 50;
        let xs: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64 * 10.0).collect();
        let noisy: Vec<DesignSite> = xs.iter().map(|&x| site(x, 0.0, 1e-4)).collect();
        let (chol, _) = factor(&noisy, 1.0, &[4.0], 0.0, 0.0).unwrap();
        let l = chol.l();
        let (mut log_tau2, mut log_theta) = (Vec::new(), Vec::new());
        for seed in 0..9u64 {
            let mut rng = RngStream::new(seed, 0).rng();
            let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let field = &l * z;
            let sites: Vec<DesignSite> = xs.iter().zip(field.iter()).map(|(&x, &y)| site(x, y, 1e-4)).collect();
            let m = fit(sites.clone(), &FitOptions::default()).unwrap();
            let (at_truth, _) = log_likelihood(&sites, 1.0, &[4.0], 0.0).unwrap();
            assert!(m.loglik() >= at_truth - 1e-9);
            log_tau2.push(m.tau2().ln());
            log_theta.push(m.theta()[0].ln());
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&mut log_tau2).abs() < 0.5, "{log_tau2:?}");
        assert!((median(&mut log_theta) - 4f64.ln()).abs() < 0.5, "{log_theta:?}");
    }
}
