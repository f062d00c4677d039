use serde::{Deserialize, Serialize};

use super::{check_alpha, EvtError, RiskEstimate, RiskMethod, Sample};

/// Empirical quantile `inf { u : F_N(u) >= alpha }`, i.e. the `ceil(alpha N)`-th
/// order statistic.
pub fn empirical_var(sample: &Sample, alpha: f64) -> Result<f64, EvtError> {
    check_alpha(alpha)?;
    let sorted = sample.sorted();
    Ok(sorted[order_index(sorted.len(), alpha) - 1])
}

/// Smallest `i` in `1..=n` with `i / n >= alpha`, evaluated exactly as the
/// empirical CDF would be so that `alpha * n` landing on an integer is not lost
/// to rounding.
fn order_index(n: usize, alpha: f64) -> usize {
    let nf = n as f64;
    let mut i = ((alpha * nf).ceil() as usize).clamp(1, n);
    while i > 1 && ((i - 1) as f64) / nf >= alpha {
        i -= 1;
    }
    while i < n && (i as f64) / nf < alpha {
        i += 1;
    }
    i
}

/// The per-observation linearisation `W_i = VaR + (X_i - VaR)^+ / (1 - alpha)`
/// behind the empirical CVaR variance estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTransform {
    pub var: f64,
    pub w: Vec<f64>,
    pub w_bar: f64,
}

impl TailTransform {
    pub fn new(sample: &Sample, alpha: f64) -> Result<Self, EvtError> {
        let var = empirical_var(sample, alpha)?;
        let scale = 1.0 / (1.0 - alpha);
        let w: Vec<f64> = sample.values().iter().map(|&x| var + (x - var).max(0.0) * scale).collect();
        let w_bar = w.iter().sum::<f64>() / w.len() as f64;
        Ok(Self { var, w, w_bar })
    }

    /// `1/(n(n-1)) * sum (W_i - W_bar)^2`; zero for a single observation.
    pub fn variance_of_mean(&self) -> f64 {
        let n = self.w.len();
        if n < 2 {
            return 0.0;
        }
        let ss: f64 = self.w.iter().map(|w| (w - self.w_bar).powi(2)).sum();
        ss / (n as f64 * (n as f64 - 1.0))
    }
}

/// Empirical CVaR: the mean of observations at or above the empirical VaR,
/// with variance from the [`TailTransform`] estimator.
pub fn empirical_cvar(sample: &Sample, alpha: f64) -> Result<RiskEstimate, EvtError> {
    let transform = TailTransform::new(sample, alpha)?;
    let var = transform.var;
    let (sum, count) = sample
        .values()
        .iter()
        .filter(|&&x| x >= var)
        .fold((0.0, 0usize), |(s, c), &x| (s + x, c + 1));
    if count < 2 {
        return Err(EvtError::InsufficientTail { needed: 2, found: count });
    }
    Ok(RiskEstimate {
        value: sum / count as f64,
        variance: transform.variance_of_mean(),
        alpha,
        method: RiskMethod::EmpiricalCvar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(n: usize) -> Sample {
        Sample::new((1..=n).map(|i| i as f64).collect()).unwrap()
    }

    /// Literal infimum over the sample support, no order-statistic shortcut.
    fn var_by_definition(values: &[f64], alpha: f64) -> f64 {
        let n = values.len() as f64;
        let mut candidates = values.to_vec();
        candidates.sort_by(f64::total_cmp);
        *candidates
            .iter()
            .find(|&&u| values.iter().filter(|&&x| x <= u).count() as f64 / n >= alpha)
            .unwrap()
    }

    #[test]
    fn var_examples() {
        assert_eq!(empirical_var(&seq(10), 0.8).unwrap(), 8.0);
        assert_eq!(empirical_var(&seq(100), 0.95).unwrap(), 95.0);
        let c = Sample::new(vec![4.5; 17]).unwrap();
        assert_eq!(empirical_var(&c, 0.37).unwrap(), 4.5);
    }

    #[test]
    fn cvar_examples() {
        let e = empirical_cvar(&seq(10), 0.8).unwrap();
        assert_eq!(e.value, 9.0);
        let e = empirical_cvar(&seq(100), 0.95).unwrap();
        assert_eq!(e.value, 97.5);
        let c = empirical_cvar(&Sample::new(vec![3.0; 50]).unwrap(), 0.9).unwrap();
        assert_eq!((c.value, c.variance), (3.0, 0.0));
    }

    #[test]
    fn transform_mean_matches_rockafellar_form() {
        // W_bar = VaR + sum (x - VaR)^+ / (N (1 - alpha)); for {1..100} at 0.95
        // that is 95 + 15 / 5 = 98, the mean of the strict exceedances {96..100}.
        let t = TailTransform::new(&seq(100), 0.95).unwrap();
        assert!((t.w_bar - 98.0).abs() < 1e-12);
        let t = TailTransform::new(&seq(10), 0.8).unwrap();
        assert!((t.w_bar - 9.5).abs() < 1e-12);
    }

    #[test]
    fn insufficient_tail() {
        let s = Sample::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(empirical_cvar(&s, 0.9), Err(EvtError::InsufficientTail { found: 1, .. })));
        assert!(matches!(empirical_cvar(&s, 1.0), Err(EvtError::InvalidAlpha(_))));
    }

    #[test]
    fn variance_hand_computed() {
        // {1..10} at 0.8: VaR 8, W = 8 x8, then 8+1/0.2=13, 8+2/0.2=18
        let t = TailTransform::new(&seq(10), 0.8).unwrap();
        let w = [8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 13.0, 18.0];
        assert_eq!(t.w, w);
        let mean = 9.5;
        let ss: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
        assert!((t.variance_of_mean() - ss / 90.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn var_matches_definition(values in prop::collection::vec(-1e3f64..1e3, 2..60), alpha in 0.01f64..0.99) {
            let s = Sample::new(values.clone()).unwrap();
            prop_assert_eq!(empirical_var(&s, alpha).unwrap(), var_by_definition(&values, alpha));
        }

        #[test]
        fn transform_mean_identity(values in prop::collection::vec(-1e3f64..1e3, 2..200), alpha in 0.5f64..0.99) {
            let s = Sample::new(values.clone()).unwrap();
            let t = TailTransform::new(&s, alpha).unwrap();
            let direct = t.var + values.iter().map(|x| (x - t.var).max(0.0)).sum::<f64>() / (values.len() as f64 * (1.0 - alpha));
            prop_assert!((t.w_bar - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }

        #[test]
        fn cvar_at_least_var(values in prop::collection::vec(-1e3f64..1e3, 20..200), alpha in 0.5f64..0.9) {
            let s = Sample::new(values).unwrap();
            let v = empirical_var(&s, alpha).unwrap();
            let c = empirical_cvar(&s, alpha).unwrap();
            prop_assert!(c.value >= v);
            prop_assert!(c.variance >= 0.0);
        }
    }
}
