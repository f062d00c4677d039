//! The global estimation pipeline: design, simulate, estimate tail risk with
//! variance at each design point, fit a kriging surface per method, and score
//! it against the true CVaR on a held-out test set.

mod estimate;
mod output;
mod wilcoxon;

pub use estimate::{estimate_replications, estimate_site, Replication, SiteEstimate};
pub use output::{
    summarize, wilcoxon_table, write_boxplot_csv, write_results_csv, write_summary_csv, write_wilcoxon_csv,
    SummaryRow, WilcoxonRow,
};
pub use wilcoxon::{wilcoxon_signed_rank, Side, EXACT_LIMIT};

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{equally_spaced, grid_excluding, lhs, BudgetAllocation, DesignError, Domain};
use crate::evt::{EvtError, FitConfig, Sample};
use crate::kriging::{fit, DesignSite, FitOptions, KrigingError};
use crate::models::{
    benchmark_mean, sample_noise, san_simulate, san_true_cvar, true_cvar_benchmark, ModelError, NoiseScenario,
    Point2D, SanParam,
};
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("a design point needs at least one replication")]
    NoReplications,
    #[error("{method} needs at least 2 replications per design point, got {n}")]
    MethodNeedsReplications { method: MethodId, n: usize },
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("Wilcoxon test: {0}")]
    Wilcoxon(String),
    #[error(transparent)]
    Evt(#[from] EvtError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Kriging(#[from] KrigingError),
}

impl HarnessError {
    /// Whether the error reflects bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Self::Evt(e) => e.is_validation(),
            Self::Model(e) => e.is_validation(),
            Self::Kriging(e) => e.is_validation(),
            _ => true,
        }
    }
}

/// Global CVaR estimators compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    /// Ordinary kriging on POT point estimates, intrinsic noise ignored.
    #[serde(rename = "ORD-KRG")]
    OrdKrg,
    /// POT point estimates, between-replication variance.
    #[serde(rename = "POT-EMP")]
    PotEmp,
    /// Empirical CVaR and its tail-transform variance.
    #[serde(rename = "EMP-EMP")]
    EmpEmp,
    /// POT point estimates with delta-method variance.
    #[serde(rename = "POT-EVT")]
    PotEvt,
}

impl MethodId {
    pub const ALL: [MethodId; 4] = [Self::OrdKrg, Self::PotEmp, Self::EmpEmp, Self::PotEvt];

    pub fn label(self) -> &'static str {
        match self {
            Self::OrdKrg => "ORD-KRG",
            Self::PotEmp => "POT-EMP",
            Self::EmpEmp => "EMP-EMP",
            Self::PotEvt => "POT-EVT",
        }
    }

    pub fn min_replications(self) -> usize {
        if self == Self::PotEmp {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MethodId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|m| m.label() == norm)
            .ok_or_else(|| format!("unknown method '{s}' (expected ORD-KRG, POT-EMP, EMP-EMP or POT-EVT)"))
    }
}

/// Simulation test bed of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Benchmark(NoiseScenario),
    San,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Benchmark(n) => n.name(),
            Self::San => "san",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::Benchmark(NoiseScenario::Normal) => 1,
            Self::Benchmark(NoiseScenario::Triangular) => 2,
            Self::Benchmark(NoiseScenario::Pareto) => 3,
            Self::San => 4,
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Self::Benchmark(_) => Domain::benchmark(),
            Self::San => Domain::san(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The activity-network allocation for a total budget `N`: 7 equally spaced
/// design points, one replication each. Its id is 0.
pub fn san_allocation(budget: usize) -> BudgetAllocation {
    BudgetAllocation { id: 0, k: 7, n: 1, big_n: budget }
}

pub const DEFAULT_ALPHAS: [f64; 3] = [0.95, 0.99, 0.995];
/// Equally spaced grid size for the activity-network test set, design points included.
pub const SAN_GRID: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub allocation: BudgetAllocation,
    pub alphas: Vec<f64>,
    pub methods: Vec<MethodId>,
    pub macro_replications: usize,
    pub seed: u64,
    /// Latin hypercube test-set size (benchmark only).
    pub test_points: usize,
    pub tail: FitConfig,
    pub kriging: FitOptions,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, allocation: BudgetAllocation, seed: u64) -> Self {
        Self {
            scenario,
            allocation,
            alphas: DEFAULT_ALPHAS.to_vec(),
            methods: MethodId::ALL.to_vec(),
            macro_replications: 10,
            seed,
            test_points: 200,
            tail: FitConfig::default(),
            kriging: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.alphas.is_empty() {
            return bad("no tail levels".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha = {a} is outside (0, 1)"));
        }
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.macro_replications == 0 {
            return bad("macro_replications must be at least 1".into());
        }
        let a = &self.allocation;
        if a.k < 2 || a.n == 0 || a.big_n == 0 {
            return bad(format!("allocation {} needs k >= 2, n >= 1 and N >= 1", a.label()));
        }
        if self.scenario == Scenario::San && a.k != 7 {
            return bad("the activity-network design has 7 points".into());
        }
        if matches!(self.scenario, Scenario::Benchmark(_)) && self.test_points == 0 {
            return bad("test_points must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-cell bookkeeping written next to each MAPE.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub point_fallbacks: usize,
    pub variance_fallbacks: usize,
    pub nugget: f64,
    pub excluded_test_points: usize,
    pub error: Option<String>,
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "point_fallbacks={};variance_fallbacks={};nugget={};excluded={}",
            self.point_fallbacks,
            self.variance_fallbacks,
            crate::fmt_f64(self.nugget),
            self.excluded_test_points
        )?;
        if let Some(e) = &self.error {
            write!(f, ";error={}", e.replace([';', '\n'], " "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scenario: Scenario,
    pub allocation: BudgetAllocation,
    pub method: MethodId,
    pub alpha: f64,
    pub macro_rep: usize,
    /// `None` when the cell failed; see `diagnostics.error`.
    pub mape: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl ResultRecord {
    fn sort_key(&self) -> (Scenario, u32, usize, MethodId, u64, usize) {
        (self.scenario, self.allocation.id, self.allocation.big_n, self.method, self.alpha.to_bits(), self.macro_rep)
    }
}

/// Mean absolute percentage error over test points whose true value is not
/// negligible; returns the MAPE and the number of excluded points.
pub fn mape(predicted: &[f64], truth: &[f64]) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        if t.abs() < 1e-9 {
            continue;
        }
        sum += ((p - t) / t).abs();
        used += 1;
    }
    let excluded = truth.len() - used;
    ((used > 0).then(|| 100.0 * sum / used as f64), excluded)
}

const TAG_TEST: u64 = 0x7465_7374;
const TAG_MACRO: u64 = 0x6d61_6372;
const TAG_DESIGN: u64 = 0x6465_7367;
const TAG_SIM: u64 = 0x7369_6d75;
const TAG_KRIGING: u64 = 0x6b72_6967;

/// Test locations and their true CVaR at each configured level.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub points: Vec<Vec<f64>>,
    /// `truth[a][t]`: true CVaR at `alphas[a]` and test point `t`.
    pub truth: Vec<Vec<f64>>,
}

fn true_cvar(scenario: Scenario, x: &[f64], alpha: f64) -> Result<f64, ModelError> {
    match scenario {
        Scenario::Benchmark(noise) => true_cvar_benchmark(noise, Point2D { x1: x[0], x2: x[1] }, alpha),
        Scenario::San => san_true_cvar(SanParam { x: x[0] }, alpha),
    }
}

/// Benchmark: a Latin hypercube drawn from the seed alone, shared by every
/// allocation and noise. Activity network: the equally spaced grid without
/// the design points.
pub fn test_set(config: &ExperimentConfig) -> Result<TestSet, HarnessError> {
    let points = match config.scenario {
        Scenario::Benchmark(_) => lhs(&Domain::benchmark(), config.test_points, &RngStream::new(config.seed, TAG_TEST))?,
        Scenario::San => {
            let design = equally_spaced(&Domain::san(), config.allocation.k)?;
            grid_excluding(&Domain::san(), SAN_GRID, &design)?
        }
    };
    let truth = config
        .alphas
        .iter()
        .map(|&alpha| {
            points.par_iter().map(|x| true_cvar(config.scenario, x, alpha)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TestSet { points, truth })
}

/// The stream behind replication `j` at design point `i` of macro-replication
/// `m`. Every method and tail level reads the same observations.
pub fn simulation_stream(config: &ExperimentConfig, m: usize, i: usize, j: usize) -> RngStream {
    macro_stream(config, m).derive_path(&[TAG_SIM, i as u64, j as u64])
}

fn macro_stream(config: &ExperimentConfig, m: usize) -> RngStream {
    RngStream::new(config.seed, 0).derive_path(&[
        TAG_MACRO,
        config.scenario.tag(),
        config.allocation.id as u64,
        config.allocation.total() as u64,
        m as u64,
    ])
}

/// Design locations of macro-replication `m`.
pub fn design_points(config: &ExperimentConfig, m: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    Ok(match config.scenario {
        Scenario::Benchmark(_) => lhs(&Domain::benchmark(), config.allocation.k, &macro_stream(config, m).derive(TAG_DESIGN))?,
        Scenario::San => equally_spaced(&Domain::san(), config.allocation.k)?,
    })
}

fn simulate(config: &ExperimentConfig, m: usize, i: usize, j: usize, x: &[f64]) -> Result<Sample, HarnessError> {
    let stream = simulation_stream(config, m, i, j);
    let count = config.allocation.big_n;
    Ok(match config.scenario {
        Scenario::Benchmark(noise) => {
            let p = Point2D::new(x[0], x[1])?;
            let shift = benchmark_mean(p);
            let noise = sample_noise(noise, p, count, &stream)?;
            Sample::new(noise.values().iter().map(|v| v + shift).collect())?
        }
        Scenario::San => san_simulate(SanParam::new(x[0])?, count, &stream)?,
    })
}

/// One macro-replication: simulate once, then fit and score every
/// (tail level, method) cell.
fn run_macro(config: &ExperimentConfig, tests: &TestSet, m: usize) -> Result<Vec<ResultRecord>, HarnessError> {
    let design = design_points(config, m)?;
    let sites: Vec<Vec<Replication>> = design
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            (0..config.allocation.n)
                .map(|j| simulate(config, m, i, j, x).map(|s| Replication::new(s, &config.tail)))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let methods: Vec<MethodId> = config
        .methods
        .iter()
        .copied()
        .filter(|meth| {
            let ok = config.allocation.n >= meth.min_replications();
            if !ok {
                log::debug!("skipping {meth}: allocation {} has n = 1", config.allocation.label());
            }
            ok
        })
        .collect();
    let cells: Vec<(usize, MethodId)> =
        (0..config.alphas.len()).flat_map(|a| methods.iter().map(move |&meth| (a, meth))).collect();
    let widths = config.scenario.domain().widths();
    let mstream = macro_stream(config, m);

    Ok(cells
        .par_iter()
        .map(|&(a, method)| {
            let alpha = config.alphas[a];
            let mut diag = Diagnostics::default();
            let outcome = (|| -> Result<Option<f64>, HarnessError> {
                let mut design_sites = Vec::with_capacity(design.len());
                for (x, reps) in design.iter().zip(&sites) {
                    let est = estimate_replications(method, reps, alpha)?;
                    diag.point_fallbacks += est.point_fallbacks;
                    diag.variance_fallbacks += est.variance_fallback as usize;
                    design_sites.push(DesignSite {
                        location: x.clone(),
                        response: est.response,
                        intrinsic_variance: est.variance,
                    });
                }
                let opts = FitOptions {
                    widths: Some(widths.clone()),
                    seed: mstream.derive_path(&[TAG_KRIGING, a as u64, method as u64]).rng().next_u64(),
                    ..config.kriging.clone()
                };
                let model = fit(design_sites, &opts)?;
                diag.nugget = model.nugget();
                let predicted =
                    tests.points.iter().map(|t| model.predict_mean(t)).collect::<Result<Vec<_>, _>>()?;
                let (value, excluded) = mape(&predicted, &tests.truth[a]);
                diag.excluded_test_points = excluded;
                Ok(value)
            })();
            let mape = outcome.unwrap_or_else(|e| {
                log::warn!("{} {} alpha={alpha} rep {m}: {e}", config.scenario, method);
                diag.error = Some(e.to_string());
                None
            });
            ResultRecord { scenario: config.scenario, allocation: config.allocation, method, alpha, macro_rep: m, mape, diagnostics: diag }
        })
        .collect())
}

/// Runs every macro-replication of `config`. Records come back sorted by
/// scenario, allocation, method, level and replication.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>, HarnessError> {
    let tests = test_set(config)?;
    run_with_tests(config, &tests)
}

/// [`run_experiment`] with a precomputed test set.
pub fn run_with_tests(config: &ExperimentConfig, tests: &TestSet) -> Result<Vec<ResultRecord>, HarnessError> {
    config.validate()?;
    if tests.truth.len() != config.alphas.len() {
        return Err(HarnessError::InvalidConfig("test set truth does not match the tail levels".into()));
    }
    let per_macro = (0..config.macro_replications)
        .into_par_iter()
        .map(|m| run_macro(config, tests, m))
        .collect::<Result<Vec<_>, _>>()?;
    let mut records: Vec<ResultRecord> = per_macro.into_iter().flatten().collect();
    records.sort_by_key(ResultRecord::sort_key);
    Ok(records)
}
