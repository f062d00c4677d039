//! Tail-risk metamodeling: extreme-value CVaR estimators at simulation design
//! points, stochastic kriging across the design space, and the experiment
//! harness comparing the resulting global estimators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod evt;
pub mod optim;
pub mod quadrature;
pub mod rng;
pub mod models;
pub mod design;

/// Formats with 17 significant digits, trimming trailing zeros; positional
/// notation for exponents in `-5..17`, scientific otherwise.
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let s = format!("{:.*}", (16 - exp) as usize, v);
        trim_fraction(&s).to_string()
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub mod kriging;
pub mod harness;
