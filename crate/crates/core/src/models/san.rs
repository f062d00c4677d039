use rand::Rng;
use rand_distr::Exp1;

use super::{check_alpha, ModelError, SanParam};
use crate::evt::Sample;
use crate::quadrature::{integrate, QuadOptions};
use crate::rng::RngStream;

const QUAD: QuadOptions = QuadOptions { rel_tol: 1e-8, abs_tol: 1e-15, max_intervals: 2000 };
const ROOT_TOL: f64 = 1e-9;
const SURVIVAL_FLOOR: f64 = 1e-14;

/// Completion times `max(T1 + T2, T1 + T3, T4 + T5)` with unit-mean exponential
/// activities except `T3`, whose mean is `x`.
pub fn san_simulate(param: SanParam, count: usize, stream: &RngStream) -> Result<Sample, ModelError> {
    if count == 0 {
        return Err(ModelError::EmptyRequest);
    }
    let mut rng = stream.rng();
    let values = (0..count)
        .map(|_| {
            let mut t = [0.0f64; 5];
            for v in &mut t {
                *v = rng.sample(Exp1);
            }
            t[2] *= param.x;
            (t[0] + t[1]).max(t[0] + t[2]).max(t[3] + t[4])
        })
        .collect();
    Ok(Sample::new(values).expect("activity times are finite"))
}

/// `P(T1 + T2 <= t, T1 + T3 <= t)`, conditioning on `T1 = s`.
fn upper_paths_cdf(x: f64, t: f64) -> Result<f64, ModelError> {
    let r = integrate(
        |s: f64| {
            let rest = t - s;
            (-s).exp() * -(-rest).exp_m1() * -(-rest / x).exp_m1()
        },
        0.0,
        t,
        &QUAD,
    )?;
    Ok(r.value)
}

/// `P(L(x) <= t)`.
pub fn san_cdf(param: SanParam, t: f64) -> Result<f64, ModelError> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let erlang2 = 1.0 - (1.0 + t) * (-t).exp();
    Ok(upper_paths_cdf(param.x, t)? * erlang2)
}

/// `P(L(x) > t)`.
pub fn san_survival(param: SanParam, t: f64) -> Result<f64, ModelError> {
    Ok((1.0 - san_cdf(param, t)?).max(0.0))
}

/// Quantile of `L(x)`: bracket by doubling, bisect to a narrow bracket, then
/// finish with safeguarded secant steps.
pub fn san_var(param: SanParam, alpha: f64) -> Result<f64, ModelError> {
    check_alpha(alpha)?;
    let g = |t: f64| san_cdf(param, t).map(|f| f - alpha);
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut g_lo, mut g_hi) = (-alpha, g(hi)?);
    while g_hi < 0.0 {
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = g(hi)?;
        if hi > 1e4 {
            return Err(ModelError::RootFinding { alpha, reason: "no upper bracket below 1e4".into() });
        }
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm < 0.0 {
            (lo, g_lo) = (mid, gm);
        } else {
            (hi, g_hi) = (mid, gm);
        }
    }
    for _ in 0..200 {
        let width = hi - lo;
        let mut next = hi - g_hi * (hi - lo) / (g_hi - g_lo);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let gn = g(next)?;
        if gn == 0.0 {
            return Ok(next);
        }
        if gn < 0.0 {
            (lo, g_lo) = (next, gn);
        } else {
            (hi, g_hi) = (next, gn);
        }
        // a one-sided secant leaves the far endpoint fixed; bisect to move it
        if hi - lo > 0.5 * width {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid)?;
            if gm < 0.0 {
                (lo, g_lo) = (mid, gm);
            } else {
                (hi, g_hi) = (mid, gm);
            }
        }
        if hi - lo < ROOT_TOL {
            return Ok(if g_hi.abs() < g_lo.abs() { hi } else { lo });
        }
    }
    Err(ModelError::RootFinding { alpha, reason: format!("bracket [{lo}, {hi}] did not shrink to {ROOT_TOL}") })
}

/// First point past `from` (on a doubling grid) where the survival drops below 1e-14.
fn truncation_point(param: SanParam, from: f64) -> Result<f64, ModelError> {
    let mut t = from.max(1.0);
    while san_survival(param, t)? >= SURVIVAL_FLOOR {
        t *= 2.0;
    }
    Ok(t)
}

/// `int_a^T P(L > t) dt` with `T` the truncation point.
fn tail_integral(param: SanParam, a: f64) -> Result<f64, ModelError> {
    let top = truncation_point(param, a)?;
    let mut err = None;
    let r = integrate(
        |t| {
            san_survival(param, t).unwrap_or_else(|e| {
                err.get_or_insert(e);
                f64::NAN
            })
        },
        a,
        top,
        &QUAD,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(r?.value)
}

/// `E[L(x)] = int_0^inf P(L > t) dt`.
pub fn san_mean(param: SanParam) -> Result<f64, ModelError> {
    tail_integral(param, 0.0)
}

/// `CVaR = VaR + int_VaR^inf P(L > t) dt / (1 - alpha)`.
pub fn san_true_cvar(param: SanParam, alpha: f64) -> Result<f64, ModelError> {
    let q = san_var(param, alpha)?;
    Ok(q + tail_integral(param, q)? / (1.0 - alpha))
}
