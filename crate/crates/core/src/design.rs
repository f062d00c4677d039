//! Experiment designs: Latin hypercubes, equally spaced grids and the budget
//! allocation catalog.

use std::f64::consts::PI;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("domain bounds must be finite with lower < upper in every dimension (dimension {dim})")]
    InvalidDomain { dim: usize },
    #[error("domain has no dimensions")]
    EmptyDomain,
    #[error("requested {found} points, need at least {required}")]
    TooFewPoints { found: usize, required: usize },
    #[error("equally spaced grids are one-dimensional, domain has {0} dimensions")]
    NotOneDimensional(usize),
    #[error("point has {found} coordinates, domain has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DesignError> {
        if lower.is_empty() {
            return Err(DesignError::EmptyDomain);
        }
        if lower.len() != upper.len() {
            return Err(DesignError::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        for (dim, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(DesignError::InvalidDomain { dim });
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-pi, pi]^2`.
    pub fn benchmark() -> Self {
        Self { lower: vec![-PI, -PI], upper: vec![PI, PI] }
    }

    /// `[0.3, 2]`.
    pub fn san() -> Self {
        Self { lower: vec![0.3], upper: vec![2.0] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| v >= l && v <= u)
    }
}

/// Latin hypercube: one point per stratum in every dimension, strata paired by
/// independent random permutations, uniform jitter within each stratum.
pub fn lhs(domain: &Domain, count: usize, stream: &RngStream) -> Result<Vec<Vec<f64>>, DesignError> {
    if count == 0 {
        return Err(DesignError::TooFewPoints { found: 0, required: 1 });
    }
    let mut rng = stream.rng();
    let mut points = vec![vec![0.0; domain.dim()]; count];
    for d in 0..domain.dim() {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(&mut rng);
        let (lo, width) = (domain.lower[d], domain.upper[d] - domain.lower[d]);
        for (point, &s) in points.iter_mut().zip(&strata) {
            let unit = (s as f64 + rng.random::<f64>()) / count as f64;
            point[d] = lo + width * unit;
        }
    }
    Ok(points)
}

/// `count` equally spaced points on a 1-D domain, endpoints included.
pub fn equally_spaced(domain: &Domain, count: usize) -> Result<Vec<Vec<f64>>, DesignError> {
    if domain.dim() != 1 {
        return Err(DesignError::NotOneDimensional(domain.dim()));
    }
    if count < 2 {
        return Err(DesignError::TooFewPoints { found: count, required: 2 });
    }
    let (a, b) = (domain.lower[0], domain.upper[0]);
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                vec![b]
            } else {
                // convex combination keeps the midpoint of symmetric grids exact
                let t = i as f64 / last;
                vec![a * (1.0 - t) + b * t]
            }
        })
        .collect())
}

/// The points of an equally spaced `grid`-point grid that are not the nearest
/// grid neighbour of any design point.
pub fn grid_excluding(domain: &Domain, grid: usize, design: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DesignError> {
    let points = equally_spaced(domain, grid)?;
    let mut dropped = vec![false; grid];
    for d in design {
        if d.len() != 1 {
            return Err(DesignError::DimensionMismatch { expected: 1, found: d.len() });
        }
        let nearest = points
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1[0] - d[0]).abs().total_cmp(&(b.1[0] - d[0]).abs()))
            .map(|(i, _)| i)
            .expect("grid is non-empty");
        dropped[nearest] = true;
    }
    Ok(points.into_iter().zip(dropped).filter(|(_, d)| !d).map(|(p, _)| p).collect())
}

/// One row of the budget table: `k` design points, `n` replications of `N`
/// observations each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetAllocation {
    pub id: u32,
    pub k: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
}

impl BudgetAllocation {
    /// Total simulation budget `k n N`.
    pub fn total(&self) -> usize {
        self.k * self.n * self.big_n
    }

    /// `k-n-N`, the label used in result tables.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.k, self.n, self.big_n)
    }
}

const CATALOG: [(usize, usize, usize); 15] = [
    (50, 10, 200),
    (50, 5, 400),
    (50, 1, 2000),
    (100, 5, 200),
    (100, 1, 1000),
    (50, 20, 1000),
    (50, 10, 2000),
    (100, 10, 1000),
    (100, 5, 2000),
    (100, 1, 10_000),
    (50, 100, 2000),
    (100, 50, 2000),
    (100, 10, 10_000),
    (100, 5, 20_000),
    (100, 1, 100_000),
];

/// Allocations 1 to 15: ids 1-5 spend `1e5`, 6-10 spend `1e6`, 11-15 spend `1e7`.
pub fn budget_catalog() -> Vec<BudgetAllocation> {
    CATALOG
        .iter()
        .enumerate()
        .map(|(i, &(k, n, big_n))| BudgetAllocation { id: i as u32 + 1, k, n, big_n })
        .collect()
}

pub fn allocation(id: u32) -> Option<BudgetAllocation> {
    budget_catalog().into_iter().find(|a| a.id == id)
}

/// Writes one CSV row per point with columns `x1, x2, ...`.
pub fn write_points_csv<W: Write>(points: &[Vec<f64>], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = points.first().map_or(0, Vec::len);
    w.write_record((1..=dim).map(|i| format!("x{i}")))?;
    for p in points {
        w.write_record(p.iter().map(|v| crate::fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}
