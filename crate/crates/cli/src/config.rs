//! Experiment configuration files.
//!
//! ```toml
//! version = 1
//! scenarios = ["normal", "triangular", "pareto"]   # and/or "san"
//! allocations = [1, 2, 3, 4, 5]                     # budget catalog ids, benchmark only
//! san_budgets = [1000, 10000, 100000]               # per-point sample sizes, san only
//! alphas = [0.95, 0.99, 0.995]                      # optional
//! methods = ["ORD-KRG", "POT-EMP", "EMP-EMP", "POT-EVT"]  # optional
//! macro_replications = 10                           # optional
//! seed = 42                                         # optional, --seed wins
//! test_points = 200                                 # optional, benchmark only
//! ```

use tailkrig::design::{allocation, BudgetAllocation};
use tailkrig::harness::{san_allocation, ExperimentConfig, MethodId, Scenario, DEFAULT_ALPHAS};
use tailkrig::models::NoiseScenario;
use toml::{Table, Value};

pub const CONFIG_VERSION: i64 = 1;

const KEYS: [&str; 9] = [
    "version",
    "scenarios",
    "allocations",
    "san_budgets",
    "alphas",
    "methods",
    "macro_replications",
    "seed",
    "test_points",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenarios: Vec<Scenario>,
    pub allocations: Vec<BudgetAllocation>,
    pub san_budgets: Vec<usize>,
    pub alphas: Vec<f64>,
    pub methods: Vec<MethodId>,
    pub macro_replications: usize,
    pub seed: Option<u64>,
    pub test_points: usize,
}

fn parse_scenario(name: &str) -> Option<Scenario> {
    if name.eq_ignore_ascii_case("san") {
        Some(Scenario::San)
    } else {
        name.parse::<NoiseScenario>().ok().map(Scenario::Benchmark)
    }
}

/// Collects every schema violation instead of stopping at the first.
struct Checker<'a> {
    table: &'a Table,
    errors: Vec<String>,
}

impl<'a> Checker<'a> {
    fn array(&mut self, key: &str) -> Option<&'a Vec<Value>> {
        match self.table.get(key)? {
            Value::Array(a) if a.is_empty() => {
                self.errors.push(format!("`{key}` must not be empty"));
                None
            }
            Value::Array(a) => Some(a),
            other => {
                self.errors.push(format!("`{key}` must be an array, found {}", other.type_str()));
                None
            }
        }
    }

    fn positive(&mut self, key: &str, value: &Value) -> Option<i64> {
        match value.as_integer() {
            Some(v) if v > 0 => Some(v),
            _ => {
                self.errors.push(format!("`{key}` entries must be positive integers, found {value}"));
                None
            }
        }
    }

    fn positive_scalar(&mut self, key: &str, default: usize) -> usize {
        match self.table.get(key) {
            None => default,
            Some(v) => self.positive(key, v).map_or(default, |v| v as usize),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| vec![format!("TOML syntax: {}", e.message())])?;
        let mut c = Checker { table: &table, errors: Vec::new() };

        for key in table.keys().filter(|k| !KEYS.contains(&k.as_str())) {
            c.errors.push(format!("unknown key `{key}`"));
        }
        match table.get("version").map(Value::as_integer) {
            None => c.errors.push("missing `version`".into()),
            Some(Some(CONFIG_VERSION)) => {}
            Some(_) => c.errors.push(format!("`version` must be {CONFIG_VERSION}")),
        }

        let mut scenarios = Vec::new();
        if !table.contains_key("scenarios") {
            c.errors.push("missing `scenarios`".into());
        }
        for v in c.array("scenarios").into_iter().flatten() {
            match v.as_str().and_then(parse_scenario) {
                Some(s) if scenarios.contains(&s) => c.errors.push(format!("scenario `{}` listed twice", s.name())),
                Some(s) => scenarios.push(s),
                None => c.errors.push(format!("unknown scenario {v} (expected normal, triangular, pareto or san)")),
            }
        }
        let wants_benchmark = scenarios.iter().any(|s| matches!(s, Scenario::Benchmark(_)));
        let wants_san = scenarios.contains(&Scenario::San);

        let mut allocations = Vec::new();
        for v in c.array("allocations").into_iter().flatten() {
            match v.as_integer() {
                Some(id) => match u32::try_from(id).ok().and_then(allocation) {
                    Some(a) => allocations.push(a),
                    None => c.errors.push(format!("unknown allocation id {id} (catalog ids are 1 to 15)")),
                },
                None => c.errors.push(format!("`allocations` entries must be integers, found {v}")),
            }
        }
        match (wants_benchmark, table.contains_key("allocations")) {
            (true, false) => c.errors.push("benchmark scenarios need `allocations`".into()),
            (false, true) => c.errors.push("`allocations` given without a benchmark scenario".into()),
            _ => {}
        }

        let mut san_budgets = Vec::new();
        for v in c.array("san_budgets").into_iter().flatten() {
            if let Some(b) = c.positive("san_budgets", v) {
                san_budgets.push(b as usize);
            }
        }
        match (wants_san, table.contains_key("san_budgets")) {
            (true, false) => c.errors.push("scenario `san` needs `san_budgets`".into()),
            (false, true) => c.errors.push("`san_budgets` given without scenario `san`".into()),
            _ => {}
        }

        let mut alphas = Vec::new();
        if table.contains_key("alphas") {
            for v in c.array("alphas").into_iter().flatten() {
                match v.as_float() {
                    Some(a) if a > 0.0 && a < 1.0 => alphas.push(a),
                    _ => c.errors.push(format!("`alphas` entries must be numbers in (0, 1), found {v}")),
                }
            }
        } else {
            alphas = DEFAULT_ALPHAS.to_vec();
        }

        let mut methods = Vec::new();
        if table.contains_key("methods") {
            for v in c.array("methods").into_iter().flatten() {
                match v.as_str().map(str::parse::<MethodId>) {
                    Some(Ok(m)) => methods.push(m),
                    Some(Err(e)) => c.errors.push(e),
                    None => c.errors.push(format!("`methods` entries must be strings, found {v}")),
                }
            }
        } else {
            methods = MethodId::ALL.to_vec();
        }

        let macro_replications = c.positive_scalar("macro_replications", 10);
        let test_points = c.positive_scalar("test_points", 200);
        let seed = match table.get("seed") {
            None => None,
            Some(v) => match v.as_integer() {
                Some(s) if s >= 0 => Some(s as u64),
                _ => {
                    c.errors.push(format!("`seed` must be a non-negative integer, found {v}"));
                    None
                }
            },
        };

        if c.errors.is_empty() {
            Ok(Self { scenarios, allocations, san_budgets, alphas, methods, macro_replications, seed, test_points })
        } else {
            Err(c.errors)
        }
    }

    /// One harness configuration per (scenario, allocation or budget), in file order.
    pub fn experiments(&self, seed: u64) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &scenario in &self.scenarios {
            let allocations: Vec<BudgetAllocation> = match scenario {
                Scenario::Benchmark(_) => self.allocations.clone(),
                Scenario::San => self.san_budgets.iter().map(|&b| san_allocation(b)).collect(),
            };
            for a in allocations {
                out.push(ExperimentConfig {
                    alphas: self.alphas.clone(),
                    methods: self.methods.clone(),
                    macro_replications: self.macro_replications,
                    test_points: self.test_points,
                    ..ExperimentConfig::new(scenario, a, seed)
                });
            }
        }
        out
    }
}
