use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::HarnessError;

/// Largest number of non-zero differences handled by the exact null distribution.
pub const EXACT_LIMIT: usize = 20;

/// Alternative hypothesis about the paired differences `a - b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `a` tends to exceed `b`.
    Greater,
    /// `a` tends to fall below `b`.
    Less,
    TwoSided,
}

/// Average ranks of `values` (1-based), ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Wilcoxon signed-rank p-value for paired samples. Zero differences are
/// dropped; ties in `|a - b|` get average ranks. Up to [`EXACT_LIMIT`]
/// differences the null distribution of the positive rank sum is counted
/// exactly over all sign assignments, beyond that a tie-corrected normal
/// approximation with continuity correction is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], side: Side) -> Result<f64, HarnessError> {
    if a.len() != b.len() {
        return Err(HarnessError::Wilcoxon(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    if a.len() < 5 {
        return Err(HarnessError::Wilcoxon(format!("need at least 5 pairs, got {}", a.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(HarnessError::Wilcoxon("all paired differences are zero".into()));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(HarnessError::Wilcoxon("non-finite paired difference".into()));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let (upper, lower) = if diffs.len() <= EXACT_LIMIT { exact_tails(&ranks, w_plus) } else { normal_tails(&ranks, &abs, w_plus) };
    Ok(match side {
        Side::Greater => upper,
        Side::Less => lower,
        Side::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    })
}

/// `(P(W+ >= w), P(W+ <= w))` under the null, counting sign assignments on
/// doubled (integer) ranks.
fn exact_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let w = (2.0 * w_plus).round() as usize;
    let all = (1u64 << ranks.len()) as f64;
    let upper: u64 = counts[w..].iter().sum();
    let lower: u64 = counts[..=w].iter().sum();
    (upper as f64 / all, lower as f64 / all)
}

fn normal_tails(ranks: &[f64], abs: &[f64], w_plus: f64) -> (f64, f64) {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let std = Normal::standard();
    let sd = var.sqrt();
    let upper = 1.0 - std.cdf((w_plus - mean - 0.5) / sd);
    let lower = std.cdf((w_plus - mean + 0.5) / sd);
    (upper.min(1.0), lower.min(1.0))
}
