//! Report rows, CSV/JSON persistence, seed aggregation and pivot tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Column order of every report CSV.
pub const CSV_HEADER: &str =
    "dataset,method,attack,budget,seed,accuracy,wall_time_s,chosen_ratio,achieved_density";

/// Seed column value of rows averaged over seeds.
pub const MEAN_SEED: &str = "mean";

/// One experiment cell, or the mean of a setting over seeds.
///
/// `accuracy` is empty for cells that failed. `chosen_ratio` is set for the
/// VGAE defense only. `achieved_density` is the density of the graph the
/// classifier was finally trained on. For targeted attacks both are means over
/// the attacked targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub attack: String,
    pub budget: String,
    pub seed: String,
    pub accuracy: Option<f64>,
    pub wall_time_s: f64,
    pub chosen_ratio: Option<f64>,
    pub achieved_density: Option<f64>,
}

/// Identity of a row: everything but the measurements.
pub type RowKey = (String, String, String, String, String);

impl ReportRow {
    pub fn key(&self) -> RowKey {
        (
            self.dataset.clone(),
            self.method.clone(),
            self.attack.clone(),
            self.budget.clone(),
            self.seed.clone(),
        )
    }

    pub fn is_aggregate(&self) -> bool {
        self.seed == MEAN_SEED
    }

    pub fn failed(&self) -> bool {
        self.accuracy.is_none()
    }

    /// CSV line without the wall-time column.
    pub fn line_without_wall_time(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.dataset,
            self.method,
            self.attack,
            self.budget,
            self.seed,
            opt(self.accuracy),
            opt(self.chosen_ratio),
            opt(self.achieved_density)
        )
    }
}

/// Budget column text: `5` for five flips, `0.05` for a rate.
pub fn format_budget(b: f64) -> String {
    format!("{b}")
}

/// A cell that raised an error; its row carries an empty accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: String,
    pub budget: String,
    pub seed: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<CellFailure>,
}

pub fn to_csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let body = String::from_utf8(w.into_inner().context("flushing csv")?)?;
    Ok(format!("{CSV_HEADER}\n{body}"))
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    fs::write(path, to_csv_string(rows)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&text).with_context(|| format!("in report {}", path.display()))
}

/// Parses a report, rejecting any header other than [`CSV_HEADER`].
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let header = text
        .lines()
        .next()
        .unwrap_or_default()
        .trim_end_matches('\r');
    if header != CSV_HEADER {
        bail!("schema mismatch: header `{header}`, expected `{CSV_HEADER}`");
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, rec) in r.deserialize().enumerate() {
        let row: ReportRow = rec.with_context(|| format!("row {}", k + 2))?;
        if let Some(a) = row.accuracy {
            if !(0.0..=1.0).contains(&a) {
                bail!("row {}: accuracy {a} outside [0, 1]", k + 2);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// One `seed = "mean"` row per (dataset, method, attack, budget), in order of
/// first appearance. Failed cells are left out of the means; a setting with
/// no successful cell gets an empty accuracy.
pub fn aggregate(rows: &[ReportRow]) -> Vec<ReportRow> {
    let mut order: Vec<(String, String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String, String), Vec<&ReportRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| !r.is_aggregate()) {
        let key = (
            row.dataset.clone(),
            row.method.clone(),
            row.attack.clone(),
            row.budget.clone(),
        );
        let group = groups.entry(key.clone()).or_default();
        if group.is_empty() {
            order.push(key);
        }
        group.push(row);
    }
    order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let ok: Vec<&&ReportRow> = group.iter().filter(|r| !r.failed()).collect();
            let (dataset, method, attack, budget) = key;
            ReportRow {
                dataset,
                method,
                attack,
                budget,
                seed: MEAN_SEED.into(),
                accuracy: mean(ok.iter().filter_map(|r| r.accuracy)),
                wall_time_s: mean(group.iter().map(|r| r.wall_time_s)).unwrap_or(0.0),
                chosen_ratio: mean(ok.iter().filter_map(|r| r.chosen_ratio)),
                achieved_density: mean(ok.iter().filter_map(|r| r.achieved_density)),
            }
        })
        .collect()
}

/// Methods × budgets accuracy table for one (dataset, attack) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotTable {
    pub dataset: String,
    pub attack: String,
    pub methods: Vec<String>,
    pub budgets: Vec<String>,
    /// `cells[m][b]`; `None` when no row exists, `Some(None)` when every seed failed.
    pub cells: Vec<Vec<Option<Option<f64>>>>,
}

/// Per-seed rows are averaged; aggregate rows are used only for settings that
/// have no per-seed rows in the input.
pub fn summarize(rows: &[ReportRow]) -> Vec<ReportRow> {
    let mut summary = aggregate(rows);
    let covered: Vec<_> = summary.iter().map(ReportRow::key).collect();
    for row in rows.iter().filter(|r| r.is_aggregate()) {
        if !covered.contains(&row.key()) {
            summary.push(row.clone());
        }
    }
    summary
}

fn budget_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

pub fn pivot(rows: &[ReportRow]) -> Vec<PivotTable> {
    let summary = summarize(rows);
    let mut tables: Vec<PivotTable> = Vec::new();
    for row in &summary {
        let idx = match tables
            .iter()
            .position(|t| t.dataset == row.dataset && t.attack == row.attack)
        {
            Some(i) => i,
            None => {
                tables.push(PivotTable {
                    dataset: row.dataset.clone(),
                    attack: row.attack.clone(),
                    methods: Vec::new(),
                    budgets: Vec::new(),
                    cells: Vec::new(),
                });
                tables.len() - 1
            }
        };
        let t = &mut tables[idx];
        if !t.methods.contains(&row.method) {
            t.methods.push(row.method.clone());
        }
        if !t.budgets.contains(&row.budget) {
            t.budgets.push(row.budget.clone());
        }
    }
    for t in &mut tables {
        t.budgets.sort_by(|a, b| budget_order(a, b));
        t.cells = t
            .methods
            .iter()
            .map(|m| {
                t.budgets
                    .iter()
                    .map(|b| {
                        summary
                            .iter()
                            .find(|r| {
                                r.dataset == t.dataset
                                    && r.attack == t.attack
                                    && &r.method == m
                                    && &r.budget == b
                            })
                            .map(|r| r.accuracy)
                    })
                    .collect()
            })
            .collect();
    }
    tables
}

impl PivotTable {
    pub fn render(&self) -> String {
        let cell_text = |c: &Option<Option<f64>>| match c {
            None => "-".to_string(),
            Some(None) => "failed".to_string(),
            Some(Some(a)) => format!("{a:.4}"),
        };
        let width = self
            .methods
            .iter()
            .map(String::len)
            .chain(std::iter::once("method".len()))
            .max()
            .unwrap_or(6);
        let col = self
            .budgets
            .iter()
            .map(|b| b.len().max(8))
            .collect::<Vec<_>>();
        let mut out = format!("dataset={} attack={}\n", self.dataset, self.attack);
        write!(out, "{:<width$}", "method").unwrap();
        for (b, w) in self.budgets.iter().zip(&col) {
            write!(out, "  {b:>w$}").unwrap();
        }
        out.push('\n');
        for (m, row) in self.methods.iter().zip(&self.cells) {
            write!(out, "{m:<width$}").unwrap();
            for (c, w) in row.iter().zip(&col) {
                write!(out, "  {:>w$}", cell_text(c)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Long-form `dataset,attack,method,budget,accuracy` data for accuracy-vs-budget plots.
pub fn curve_csv(tables: &[PivotTable]) -> String {
    let mut out = String::from("dataset,attack,method,budget,accuracy\n");
    for t in tables {
        for (m, row) in t.methods.iter().zip(&t.cells) {
            for (b, c) in t.budgets.iter().zip(row) {
                if let Some(acc) = c {
                    let acc = acc.map(|a| a.to_string()).unwrap_or_default();
                    writeln!(out, "{},{},{m},{b},{acc}", t.dataset, t.attack).unwrap();
                }
            }
        }
    }
    out
}
