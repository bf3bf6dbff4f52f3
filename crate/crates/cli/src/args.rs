//! Command-line syntax.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{AttackSpec, DatasetFormat, Method, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "vgae-defense",
    version,
    about = "Train, attack and defend GCN node classifiers"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// JSON experiment config.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "results")]
    pub out: PathBuf,
    /// Skip experiment cells already present in the output report.
    #[arg(long, global = true)]
    pub resume: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one method on the (possibly attacked) dataset and report test accuracy.
    Train(RunArgs),
    /// Attack the dataset, write the perturbations and the undefended GCN accuracy.
    Attack(RunArgs),
    /// Run one defense, write the purified graph and the retrained accuracy.
    Defend(RunArgs),
    /// Run the methods × budgets × seeds grid and write a report.
    Experiment(RunArgs),
    /// Merge reports and print method × budget accuracy tables.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Dataset path (Planetoid prefix or directory, or generic directory).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(String))]
    pub format: Option<String>,
    /// gcn, jaccard, svd or vgae-defense; repeat or comma-separate for several.
    #[arg(long = "method", value_delimiter = ',')]
    pub methods: Vec<String>,
    /// none, random, surrogate-greedy, dice or replay:<file>.
    #[arg(long)]
    pub attack: Option<String>,
    /// Flip count, or rate for dice; repeat or comma-separate for several.
    #[arg(long = "budget", value_delimiter = ',')]
    pub budgets: Vec<f64>,
    /// Number of targets for targeted attacks.
    #[arg(long)]
    pub targets: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl RunArgs {
    pub fn overrides(&self, seed: Option<u64>) -> anyhow::Result<Overrides> {
        Ok(Overrides {
            dataset: self.dataset.clone(),
            format: self
                .format
                .as_deref()
                .map(str::parse::<DatasetFormat>)
                .transpose()?,
            methods: self
                .methods
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<anyhow::Result<_>>()?,
            attack: self
                .attack
                .as_deref()
                .map(str::parse::<AttackSpec>)
                .transpose()?,
            budgets: self.budgets.clone(),
            seed,
            targets: self.targets,
            workers: self.workers,
        })
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report CSV files to merge.
    #[arg(required = true, value_name = "REPORT")]
    pub files: Vec<PathBuf>,
    /// Also write accuracy-vs-budget data here.
    #[arg(long, value_name = "FILE")]
    pub curve: Option<PathBuf>,
}
