//! The five subcommands. Inputs are validated and the dataset loaded before
//! any work starts; outputs are written only once a command has succeeded.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context as _};
use log::{info, warn};
use vgae_defense::attacks::file::PerturbationFile;
use vgae_defense::datasets::write_edge_list;

use crate::args::{Cli, Command, GlobalOpts, RunArgs};
use crate::config::{AttackSpec, ExperimentConfig, Method};
use crate::data::load_dataset;
use crate::report::{
    aggregate, curve_csv, pivot, read_csv, to_csv_string, write_csv, CellFailure, ExperimentReport,
    ReportRow, RowKey,
};
use crate::runner::{failed_row, par_map, run_cell, Cell, CellOutput, RunContext};
use crate::{Classify, CliError};

type CmdResult<T> = Result<T, CliError>;

pub fn dispatch(cli: Cli) -> CmdResult<()> {
    let global = &cli.global;
    match &cli.command {
        Command::Train(a) => cmd_train(&prepare(global, a)?, &global.out).map(drop),
        Command::Attack(a) => cmd_attack(&prepare(global, a)?, &global.out).map(drop),
        Command::Defend(a) => cmd_defend(&prepare(global, a)?, &global.out).map(drop),
        Command::Experiment(a) => {
            cmd_experiment(&prepare(global, a)?, &global.out, global.resume).map(drop)
        }
        Command::Report(r) => cmd_report(&r.files, r.curve.as_deref()).map(drop),
    }
}

/// Config file, then flag overrides, then validation.
pub fn resolve_config(global: &GlobalOpts, args: &RunArgs) -> CmdResult<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::load(path).config_err()?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&args.overrides(global.seed).config_err()?);
    cfg.validate().config_err()?;
    Ok(cfg)
}

fn prepare(global: &GlobalOpts, args: &RunArgs) -> CmdResult<RunContext> {
    let cfg = resolve_config(global, args)?;
    let graph = load_dataset(&cfg.dataset).config_err()?;
    RunContext::new(cfg, graph).config_err()
}

fn single_cell(ctx: &RunContext, command: &str) -> CmdResult<Cell> {
    let cfg = &ctx.config;
    let budgets = cfg.effective_budgets();
    let single = |what: &str, n: usize| {
        if n == 1 {
            Ok(())
        } else {
            Err(CliError::Config(anyhow!(
                "`{command}` runs one cell but {n} {what} are configured; use `experiment`"
            )))
        }
    };
    single("methods", cfg.methods.len())?;
    single("budgets", budgets.len())?;
    single("seeds", cfg.seeds.len())?;
    Ok(Cell {
        method: cfg.methods[0],
        budget: budgets[0],
        seed: cfg.seeds[0],
    })
}

fn create_out(out: &Path) -> CmdResult<()> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .runtime_err()
}

fn write_text(path: &Path, text: &str) -> CmdResult<()> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .runtime_err()
}

fn print_rows(rows: &[ReportRow]) -> CmdResult<()> {
    print!("{}", to_csv_string(rows).runtime_err()?);
    Ok(())
}

fn perturbation_path(out: &Path, row: &ReportRow) -> PathBuf {
    out.join("perturbations")
        .join(format!("{}_b{}_s{}.txt", row.attack, row.budget, row.seed))
}

fn write_perturbations(out: &Path, row: &ReportRow, file: &PerturbationFile) -> CmdResult<PathBuf> {
    let path = perturbation_path(out, row);
    create_out(path.parent().expect("nested path"))?;
    file.write(&path).runtime_err()?;
    Ok(path)
}

/// Trains the configured method and reports its test accuracy. The GCN
/// checkpoint is saved as `model.json` unless the attack is targeted.
pub fn cmd_train(ctx: &RunContext, out: &Path) -> CmdResult<ReportRow> {
    let cell = single_cell(ctx, "train")?;
    let output = run_cell(ctx, cell, ctx.config.worker_count()).runtime_err()?;
    create_out(out)?;
    write_csv(&out.join("train.csv"), std::slice::from_ref(&output.row)).runtime_err()?;
    if let Some(fitted) = &output.fitted {
        fitted
            .model
            .save_json(&out.join("model.json"))
            .runtime_err()?;
    }
    print_rows(std::slice::from_ref(&output.row))?;
    Ok(output.row)
}

/// Runs the attack for every budget and seed against the undefended GCN.
/// Each cell's flips go to `perturbations/<attack>_b<budget>_s<seed>.txt`.
pub fn cmd_attack(ctx: &RunContext, out: &Path) -> CmdResult<Vec<ReportRow>> {
    let cfg = &ctx.config;
    if !cfg.attack.uses_budget() {
        return Err(CliError::Config(anyhow!(
            "`attack` needs random, surrogate-greedy or dice, got `{}`",
            cfg.attack
        )));
    }
    if cfg.methods != [Method::Gcn] {
        warn!("`attack` evaluates the undefended gcn; configured methods are ignored");
    }
    let mut outputs: Vec<CellOutput> = Vec::new();
    for &budget in &cfg.budgets {
        for &seed in &cfg.seeds {
            let cell = Cell {
                method: Method::Gcn,
                budget,
                seed,
            };
            outputs.push(run_cell(ctx, cell, cfg.worker_count()).runtime_err()?);
        }
    }
    create_out(out)?;
    for o in &outputs {
        if let Some(file) = &o.perturbations {
            let path = write_perturbations(out, &o.row, file)?;
            info!("wrote {}", path.display());
        }
        if o.shortfalls > 0 {
            warn!(
                "budget {} seed {}: {} targets fell short of the budget",
                o.row.budget, o.row.seed, o.shortfalls
            );
        }
    }
    let rows: Vec<ReportRow> = outputs.into_iter().map(|o| o.row).collect();
    write_csv(&out.join("attack.csv"), &rows).runtime_err()?;
    print_rows(&rows)?;
    Ok(rows)
}

/// Purifies the (possibly attacked) graph with one defense and retrains.
///
/// Writes `defended_edges.txt`, `model.json`, `defend.csv` and, for the VGAE
/// defense, `sweep.csv` with accuracy at every tried density ratio.
pub fn cmd_defend(ctx: &RunContext, out: &Path) -> CmdResult<ReportRow> {
    let cell = single_cell(ctx, "defend")?;
    if !cell.method.is_defense() {
        return Err(CliError::Config(anyhow!(
            "`defend` needs jaccard, svd or vgae-defense, got `{}`",
            cell.method
        )));
    }
    if ctx.is_targeted() {
        return Err(CliError::Config(anyhow!(
            "`defend` purifies one graph; targeted attacks produce one per target, use `experiment`"
        )));
    }
    let output = run_cell(ctx, cell, ctx.config.worker_count()).runtime_err()?;
    let fitted = output
        .fitted
        .as_ref()
        .expect("untargeted cells keep their classifier");
    create_out(out)?;
    write_edge_list(&fitted.graph, &out.join("defended_edges.txt")).runtime_err()?;
    fitted
        .model
        .save_json(&out.join("model.json"))
        .runtime_err()?;
    if !fitted.trials.is_empty() {
        let mut sweep = String::from("ratio,achieved_density,val_accuracy,test_accuracy\n");
        for t in &fitted.trials {
            let test = t.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                sweep,
                "{},{},{},{test}",
                t.ratio, t.achieved_density, t.val_accuracy
            )
            .unwrap();
        }
        write_text(&out.join("sweep.csv"), &sweep)?;
    }
    if let (Some(file), false) = (
        &output.perturbations,
        matches!(ctx.config.attack, AttackSpec::Replay(_)),
    ) {
        write_perturbations(out, &output.row, file)?;
    }
    write_csv(&out.join("defend.csv"), std::slice::from_ref(&output.row)).runtime_err()?;
    print_rows(std::slice::from_ref(&output.row))?;
    Ok(output.row)
}

/// All methods × budgets × seeds, in that nesting order.
pub fn grid(cfg: &ExperimentConfig) -> Vec<Cell> {
    let budgets = cfg.effective_budgets();
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &budget in &budgets {
            for &seed in &cfg.seeds {
                cells.push(Cell {
                    method,
                    budget,
                    seed,
                });
            }
        }
    }
    cells
}

fn cell_key(ctx: &RunContext, cell: &Cell) -> RowKey {
    failed_row(ctx, *cell, 0.0).key()
}

/// Runs the grid and writes `report.csv` (per-cell rows, then means over
/// seeds) and `report.json`. Failing cells become rows with an empty
/// accuracy. With `resume`, cells that already have a successful row in the
/// existing report are kept as they are.
pub fn cmd_experiment(ctx: &RunContext, out: &Path, resume: bool) -> CmdResult<ExperimentReport> {
    let report_path = out.join("report.csv");
    let previous = if resume && report_path.exists() {
        read_csv(&report_path).config_err()?
    } else {
        Vec::new()
    };
    let done: HashMap<RowKey, ReportRow> = previous
        .iter()
        .filter(|r| !r.is_aggregate() && !r.failed())
        .map(|r| (r.key(), r.clone()))
        .collect();

    let cells = grid(&ctx.config);
    let todo: Vec<Cell> = cells
        .iter()
        .filter(|c| !done.contains_key(&cell_key(ctx, c)))
        .copied()
        .collect();
    info!("{} cells, {} to run", cells.len(), todo.len());
    let workers = ctx.config.worker_count();
    let outer = workers.min(todo.len()).max(1);
    let inner = (workers / outer).max(1);
    let results = par_map(&todo, outer, |&cell| {
        let start = Instant::now();
        let r = run_cell(ctx, cell, inner);
        (cell, r, start.elapsed().as_secs_f64())
    });

    let mut fresh: HashMap<RowKey, ReportRow> = HashMap::new();
    let mut failures = Vec::new();
    let mut written = HashSet::new();
    for (cell, result, elapsed) in results {
        let row = match result {
            Ok(o) => {
                let replayed = matches!(ctx.config.attack, AttackSpec::Replay(_));
                if let (Some(file), false) = (&o.perturbations, replayed) {
                    let path = perturbation_path(out, &o.row);
                    if written.insert(path) {
                        write_perturbations(out, &o.row, file)?;
                    }
                }
                o.row
            }
            Err(e) => {
                warn!(
                    "cell {} budget {} seed {} failed: {e:#}",
                    cell.method, cell.budget, cell.seed
                );
                let row = failed_row(ctx, cell, elapsed);
                failures.push(CellFailure {
                    method: row.method.clone(),
                    budget: row.budget.clone(),
                    seed: row.seed.clone(),
                    error: format!("{e:#}"),
                });
                row
            }
        };
        fresh.insert(row.key(), row);
    }

    let mut rows: Vec<ReportRow> = Vec::new();
    let mut in_grid = HashSet::new();
    for cell in &cells {
        let key = cell_key(ctx, cell);
        let row = fresh
            .remove(&key)
            .or_else(|| done.get(&key).cloned())
            .expect("every cell has a row");
        in_grid.insert(key);
        rows.push(row);
    }
    // rows of other settings already in the report are kept
    rows.extend(
        previous
            .into_iter()
            .filter(|r| !r.is_aggregate() && !in_grid.contains(&r.key())),
    );
    let means = aggregate(&rows);
    rows.extend(means);

    create_out(out)?;
    write_csv(&report_path, &rows).runtime_err()?;
    let report = ExperimentReport {
        config: serde_json::to_value(&ctx.config).runtime_err()?,
        rows,
        failures,
    };
    let json = serde_json::to_string_pretty(&report).runtime_err()?;
    write_text(&out.join("report.json"), &json)?;
    for table in pivot(&report.rows) {
        println!("{}", table.render());
    }
    if !report.failures.is_empty() {
        warn!("{} cells failed; see report.json", report.failures.len());
    }
    Ok(report)
}

/// Merges report CSVs, prints one method × budget table per dataset and
/// attack, and optionally writes the curve data.
pub fn cmd_report(files: &[PathBuf], curve: Option<&Path>) -> CmdResult<String> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_csv(f).config_err()?);
    }
    let tables = pivot(&rows);
    let text: String = tables.iter().map(|t| t.render() + "\n").collect();
    print!("{text}");
    if let Some(path) = curve {
        write_text(path, &curve_csv(&tables))?;
    }
    Ok(text)
}
