use serde::{Deserialize, Serialize};

use super::{HarnessError, MethodId};
use crate::evt::{delta_variance, empirical_cvar, fit_gpd, pot_cvar_value, EvtError, FitConfig, GpdFit, Sample, TailTransform};

/// One replication at a design point with its tail fit, computed once and
/// shared by every method and tail level.
#[derive(Debug, Clone)]
pub struct Replication {
    pub sample: Sample,
    pub fit: Result<GpdFit, EvtError>,
}

impl Replication {
    pub fn new(sample: Sample, config: &FitConfig) -> Self {
        let fit = fit_gpd(&sample, config);
        Self { sample, fit }
    }
}

/// Aggregated response and intrinsic variance at one design point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteEstimate {
    pub response: f64,
    pub variance: f64,
    /// Replications whose POT point estimate was replaced by the empirical one.
    pub point_fallbacks: usize,
    /// Whether the variance came from the fallback cascade.
    pub variance_fallback: bool,
}

/// `sum (y_j - mean)^2 / (n - 1)`, the between-replication variance.
fn replication_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// POT point estimate of a replication, or its empirical CVaR when the tail
/// fit or the POT formula fails.
fn pot_point(rep: &Replication, alpha: f64) -> Result<(f64, bool), EvtError> {
    match rep.fit.as_ref().map_err(Clone::clone).and_then(|f| pot_cvar_value(f, alpha)) {
        Ok(v) => Ok((v, false)),
        Err(e) => {
            log::debug!("POT point estimate failed ({e}); using empirical CVaR");
            Ok((empirical_cvar(&rep.sample, alpha)?.value, true))
        }
    }
}

/// Response and intrinsic variance of one design point under `method`.
///
/// Per-replication `(CVaR_j, V_j)` are averaged as `mean_j CVaR_j` and
/// `sum_j V_j / n^2`. When a delta-method variance is unavailable the site
/// falls back to the between-replication variance over `n` (if `n >= 2`) or
/// to the tail-transform variance of the pooled observations.
pub fn estimate_replications(method: MethodId, reps: &[Replication], alpha: f64) -> Result<SiteEstimate, HarnessError> {
    let n = reps.len();
    if n == 0 {
        return Err(HarnessError::NoReplications);
    }
    if method == MethodId::PotEmp && n < 2 {
        return Err(HarnessError::MethodNeedsReplications { method, n });
    }
    let nf = n as f64;
    match method {
        MethodId::EmpEmp => {
            let est = reps.iter().map(|r| empirical_cvar(&r.sample, alpha)).collect::<Result<Vec<_>, _>>()?;
            Ok(SiteEstimate {
                response: est.iter().map(|e| e.value).sum::<f64>() / nf,
                variance: est.iter().map(|e| e.variance).sum::<f64>() / (nf * nf),
                point_fallbacks: 0,
                variance_fallback: false,
            })
        }
        MethodId::PotEvt => {
            let mut values = Vec::with_capacity(n);
            let mut variance_sum = Some(0.0);
            let mut point_fallbacks = 0;
            for rep in reps {
                let (v, fell_back) = pot_point(rep, alpha)?;
                values.push(v);
                point_fallbacks += fell_back as usize;
                let var = if fell_back {
                    None
                } else {
                    rep.fit.as_ref().ok().and_then(|f| delta_variance(f, alpha).ok())
                };
                variance_sum = variance_sum.zip(var).map(|(s, v)| s + v);
            }
            let (variance, variance_fallback) = match variance_sum {
                Some(s) => (s / (nf * nf), false),
                None if n >= 2 => (replication_variance(&values) / nf, true),
                None => {
                    let pooled = Sample::pooled(reps.iter().map(|r| &r.sample))?;
                    (TailTransform::new(&pooled, alpha)?.variance_of_mean(), true)
                }
            };
            Ok(SiteEstimate { response: mean(&values), variance, point_fallbacks, variance_fallback })
        }
        MethodId::PotEmp | MethodId::OrdKrg => {
            let mut values = Vec::with_capacity(n);
            let mut point_fallbacks = 0;
            for rep in reps {
                let (v, fell_back) = pot_point(rep, alpha)?;
                values.push(v);
                point_fallbacks += fell_back as usize;
            }
            let variance = if method == MethodId::PotEmp { replication_variance(&values) / nf } else { 0.0 };
            Ok(SiteEstimate { response: mean(&values), variance, point_fallbacks, variance_fallback: false })
        }
    }
}

/// [`estimate_replications`] on raw samples, fitting the tail of each.
pub fn estimate_site(
    method: MethodId,
    samples: &[Sample],
    alpha: f64,
    config: &FitConfig,
) -> Result<SiteEstimate, HarnessError> {
    let reps: Vec<Replication> = samples.iter().map(|s| Replication::new(s.clone(), config)).collect();
    estimate_replications(method, &reps, alpha)
}
