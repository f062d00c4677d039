use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{check_alpha, ModelError, NoiseScenario, Point2D};
use crate::evt::Sample;
use crate::rng::RngStream;

/// `f(x1, x2) = x1 sin(pi x2) + x2 sin(pi x1)`.
pub fn benchmark_mean(p: Point2D) -> f64 {
    p.x1 * (PI * p.x2).sin() + p.x2 * (PI * p.x1).sin()
}

/// Inverse CDF of the symmetric triangular distribution on `[0, m]`.
fn triangular_quantile(m: f64, u: f64) -> f64 {
    if u < 0.5 {
        m * (u / 2.0).sqrt()
    } else {
        m * (1.0 - ((1.0 - u) / 2.0).sqrt())
    }
}

/// `count` i.i.d. noise draws at `p`.
pub fn sample_noise(scenario: NoiseScenario, p: Point2D, count: usize, stream: &RngStream) -> Result<Sample, ModelError> {
    if count == 0 {
        return Err(ModelError::EmptyRequest);
    }
    let r = p.radius();
    let mut rng = stream.rng();
    let values: Vec<f64> = match scenario {
        NoiseScenario::Normal => (0..count).map(|_| r * rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseScenario::Triangular => (0..count).map(|_| triangular_quantile(r, rng.random::<f64>())).collect(),
        NoiseScenario::Pareto => {
            let xm = 2.0 + r;
            (0..count).map(|_| xm / (1.0 - rng.random::<f64>()).sqrt()).collect()
        }
    };
    Ok(Sample::new(values).expect("noise draws are finite"))
}

/// CVaR of the noise term alone.
pub fn noise_cvar(scenario: NoiseScenario, p: Point2D, alpha: f64) -> Result<f64, ModelError> {
    check_alpha(alpha)?;
    let r = p.radius();
    Ok(match scenario {
        NoiseScenario::Normal => {
            let std = Normal::standard();
            r * std.pdf(std.inverse_cdf(alpha)) / (1.0 - alpha)
        }
        NoiseScenario::Triangular => r * (1.0 - (2.0 * (1.0 - alpha)).sqrt() / 3.0),
        NoiseScenario::Pareto => 2.0 * (2.0 + r) / (1.0 - alpha).sqrt(),
    })
}

/// CVaR of `f(p) + noise`.
pub fn true_cvar_benchmark(scenario: NoiseScenario, p: Point2D, alpha: f64) -> Result<f64, ModelError> {
    Ok(benchmark_mean(p) + noise_cvar(scenario, p, alpha)?)
}
