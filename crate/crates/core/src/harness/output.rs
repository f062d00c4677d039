use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{wilcoxon_signed_rank, MethodId, ResultRecord, Scenario, Side};
use crate::fmt_f64;

/// Median MAPE of one (scenario, allocation, method, level) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub allocation_id: u32,
    pub budget: String,
    pub method: MethodId,
    pub alpha: f64,
    /// `None` when no macro-replication produced a MAPE.
    pub median: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

/// POT-EVT against another method: p-value that POT-EVT has the smaller MAPE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonRow {
    pub scenario: Scenario,
    pub allocation_id: u32,
    pub budget: String,
    pub alpha: f64,
    pub against: MethodId,
    pub pairs: usize,
    pub p_value: Option<f64>,
    pub note: Option<String>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[mid] } else { 0.5 * (values[mid - 1] + values[mid]) })
}

type CellKey = (Scenario, u32, usize, MethodId, u64);
type SummaryTable = BTreeMap<(u32, String, MethodId), BTreeMap<(Scenario, u64), Option<f64>>>;

fn cell_key(r: &ResultRecord) -> CellKey {
    (r.scenario, r.allocation.id, r.allocation.big_n, r.method, r.alpha.to_bits())
}

pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<CellKey, (&ResultRecord, Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let entry = cells.entry(cell_key(r)).or_insert((r, Vec::new(), 0));
        match r.mape {
            Some(v) => entry.1.push(v),
            None => entry.2 += 1,
        }
    }
    cells
        .into_values()
        .map(|(r, mut values, failures)| SummaryRow {
            scenario: r.scenario,
            allocation_id: r.allocation.id,
            budget: r.allocation.label(),
            method: r.method,
            alpha: r.alpha,
            successes: values.len(),
            median: median(&mut values),
            failures,
        })
        .collect()
}

/// Pairs POT-EVT with each other method by macro-replication within every
/// (scenario, allocation, level) group and runs a one-sided signed-rank test.
pub fn wilcoxon_table(records: &[ResultRecord]) -> Vec<WilcoxonRow> {
    let mut by_cell: BTreeMap<CellKey, BTreeMap<usize, Option<f64>>> = BTreeMap::new();
    let mut meta: BTreeMap<CellKey, &ResultRecord> = BTreeMap::new();
    for r in records {
        by_cell.entry(cell_key(r)).or_default().insert(r.macro_rep, r.mape);
        meta.entry(cell_key(r)).or_insert(r);
    }
    let mut rows = Vec::new();
    for (&(scenario, id, big_n, method, alpha_bits), base) in &by_cell {
        if method != MethodId::PotEvt {
            continue;
        }
        for other in MethodId::ALL.into_iter().filter(|m| *m != MethodId::PotEvt) {
            let key = (scenario, id, big_n, other, alpha_bits);
            let Some(rival) = by_cell.get(&key) else { continue };
            let (a, b): (Vec<f64>, Vec<f64>) = base
                .iter()
                .filter_map(|(m, v)| Some(((*v)?, rival.get(m).copied().flatten()?)))
                .unzip();
            let (p_value, note) = match wilcoxon_signed_rank(&a, &b, Side::Less) {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(WilcoxonRow {
                scenario,
                allocation_id: id,
                budget: meta[&key].allocation.label(),
                alpha: f64::from_bits(alpha_bits),
                against: other,
                pairs: a.len(),
                p_value,
                note,
            });
        }
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One line per (scenario, allocation, method, level, macro-replication).
pub fn write_results_csv<W: Write>(records: &[ResultRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "allocation_id", "budget", "method", "alpha", "macro_rep", "mape", "diagnostics"])?;
    for r in records {
        w.write_record([
            r.scenario.name().to_string(),
            r.allocation.id.to_string(),
            r.allocation.label(),
            r.method.label().to_string(),
            r.alpha.to_string(),
            r.macro_rep.to_string(),
            opt(r.mape),
            r.diagnostics.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Median MAPE table: one row per (allocation, method), one column per
/// `scenario@alpha`. Cells of methods that do not apply stay empty.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let columns: BTreeSet<(Scenario, u64)> = rows.iter().map(|r| (r.scenario, r.alpha.to_bits())).collect();
    let mut table = SummaryTable::new();
    for r in rows {
        table
            .entry((r.allocation_id, r.budget.clone(), r.method))
            .or_default()
            .insert((r.scenario, r.alpha.to_bits()), r.median);
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["allocation_id".to_string(), "budget".into(), "method".into()];
    header.extend(columns.iter().map(|(s, a)| format!("{}@{}", s.name(), f64::from_bits(*a))));
    w.write_record(&header)?;
    for ((id, budget, method), cells) in &table {
        let mut line = vec![id.to_string(), budget.clone(), method.label().to_string()];
        line.extend(columns.iter().map(|c| opt(cells.get(c).copied().flatten())));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format for box plots: successful MAPEs only.
pub fn write_boxplot_csv<W: Write>(records: &[ResultRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "alpha", "budget", "method", "mape"])?;
    for r in records {
        if let Some(m) = r.mape {
            w.write_record([
                r.scenario.name().to_string(),
                r.alpha.to_string(),
                r.allocation.label(),
                r.method.label().to_string(),
                fmt_f64(m),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_wilcoxon_csv<W: Write>(rows: &[WilcoxonRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "allocation_id", "budget", "alpha", "method_a", "method_b", "pairs", "p_value", "note"])?;
    for r in rows {
        w.write_record([
            r.scenario.name().to_string(),
            r.allocation_id.to_string(),
            r.budget.clone(),
            r.alpha.to_string(),
            MethodId::PotEvt.label().to_string(),
            r.against.label().to_string(),
            r.pairs.to_string(),
            opt(r.p_value),
            r.note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
