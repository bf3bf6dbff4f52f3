//! Experiment configuration: one JSON document plus command-line overrides.
//!
//! ```json
//! {
//!   "dataset": { "format": "planetoid", "path": "data/cora/cora" },
//!   "methods": ["gcn", "vgae-defense"],
//!   "attack": "surrogate-greedy",
//!   "budgets": [1, 5],
//!   "seeds": [0, 1],
//!   "targets": 50,
//!   "defense": { "fixed_ratio": 20.0 }
//! }
//! ```
//!
//! Every field has a default. `budgets` holds flip counts for `random` and
//! `surrogate-greedy`, and rates in `[0, 1]` for `dice`; it is ignored for
//! `none` and `replay:<file>`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use vgae_defense::attacks::SurrogateConfig;
use vgae_defense::datasets::synthetic::PlantedPartition;
use vgae_defense::defense::svd::SvdOptions;
use vgae_defense::defense::{DEFAULT_JACCARD_THRESHOLD, DEFAULT_SVD_RANK};
use vgae_defense::{DefenseConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// `<path>.content` and `<path>.cites`, or a directory holding `<dir name>.content`.
    Planetoid,
    /// Directory with `edges.txt`, `labels.txt` and optional `features.csv`, `split.json`.
    Generic,
    /// Planted-partition graph generated from the `synthetic` parameters.
    Synthetic,
}

impl FromStr for DatasetFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planetoid" => Ok(Self::Planetoid),
            "generic" => Ok(Self::Generic),
            "synthetic" => Ok(Self::Synthetic),
            other => {
                bail!("unknown dataset format `{other}` (expected planetoid, generic or synthetic)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Name written to the report; defaults to the path's file name.
    pub name: Option<String>,
    pub format: DatasetFormat,
    pub path: Option<PathBuf>,
    /// JSON split (`{"train": [...], "val": [...], "test": [...]}`) for Planetoid data.
    pub split: Option<PathBuf>,
    /// Seed for the sampled split when none is given. Kept apart from the run
    /// seeds so that every seed sees the same split.
    pub split_seed: u64,
    pub synthetic: PlantedPartition,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: None,
            format: DatasetFormat::Planetoid,
            path: None,
            split: None,
            split_seed: 0,
            synthetic: PlantedPartition::default(),
        }
    }
}

impl DatasetConfig {
    pub fn display_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match (&self.path, self.format) {
            (_, DatasetFormat::Synthetic) => "synthetic".into(),
            (Some(p), _) => p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            (None, _) => "unnamed".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gcn")]
    Gcn,
    #[serde(rename = "jaccard")]
    Jaccard,
    #[serde(rename = "svd")]
    Svd,
    #[serde(rename = "vgae-defense")]
    VgaeDefense,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gcn => "gcn",
            Self::Jaccard => "jaccard",
            Self::Svd => "svd",
            Self::VgaeDefense => "vgae-defense",
        }
    }

    pub fn is_defense(self) -> bool {
        self != Self::Gcn
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "jaccard" => Ok(Self::Jaccard),
            "svd" => Ok(Self::Svd),
            "vgae-defense" => Ok(Self::VgaeDefense),
            other => bail!("unknown method `{other}` (expected gcn, jaccard, svd or vgae-defense)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AttackSpec {
    #[default]
    None,
    Random,
    SurrogateGreedy,
    Dice,
    Replay(PathBuf),
}

impl AttackSpec {
    pub fn is_none(&self) -> bool {
        *self == Self::None
    }

    /// Whether `budgets` drives the attack.
    pub fn uses_budget(&self) -> bool {
        matches!(self, Self::Random | Self::SurrogateGreedy | Self::Dice)
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::Random => f.write_str("random"),
            Self::SurrogateGreedy => f.write_str("surrogate-greedy"),
            Self::Dice => f.write_str("dice"),
            Self::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

impl FromStr for AttackSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "random" => Ok(Self::Random),
            "surrogate-greedy" => Ok(Self::SurrogateGreedy),
            "dice" => Ok(Self::Dice),
            _ => match s.strip_prefix("replay:") {
                Some(path) if !path.is_empty() => Ok(Self::Replay(PathBuf::from(path))),
                _ => bail!("unknown attack `{s}` (expected none, random, surrogate-greedy, dice or replay:<file>)"),
            },
        }
    }
}

impl TryFrom<String> for AttackSpec {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AttackSpec> for String {
    fn from(a: AttackSpec) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvdParams {
    pub rank: usize,
    pub options: SvdOptions,
}

impl Default for SvdParams {
    fn default() -> Self {
        Self {
            rank: DEFAULT_SVD_RANK,
            options: SvdOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JaccardParams {
    pub threshold: f64,
}

impl Default for JaccardParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_JACCARD_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub methods: Vec<Method>,
    pub attack: AttackSpec,
    pub budgets: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Targets per seed for targeted attacks, drawn from correctly
    /// classified test nodes.
    pub targets: usize,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    /// Classifier settings, shared by clean, victim and defended training.
    pub gcn: TrainConfig,
    pub defense: DefenseConfig,
    pub jaccard: JaccardParams,
    pub svd: SvdParams,
    pub surrogate: SurrogateConfig,
}

/// Target count used when none is configured.
pub const DEFAULT_TARGETS: usize = 500;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            methods: vec![Method::Gcn],
            attack: AttackSpec::None,
            budgets: vec![0.0],
            seeds: vec![0],
            targets: DEFAULT_TARGETS,
            workers: 0,
            gcn: TrainConfig::default(),
            defense: DefenseConfig::default(),
            jaccard: JaccardParams::default(),
            svd: SvdParams::default(),
            surrogate: SurrogateConfig::default(),
        }
    }
}

/// Command-line values that replace config fields when given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
    pub methods: Vec<Method>,
    pub attack: Option<AttackSpec>,
    pub budgets: Vec<f64>,
    pub seed: Option<u64>,
    pub targets: Option<usize>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.resolve_relative(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Paths inside a config file are relative to the file.
    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.dataset.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.dataset.split.as_mut() {
            fix(p);
        }
        if let AttackSpec::Replay(p) = &mut self.attack {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.dataset {
            self.dataset.path = Some(p.clone());
        }
        if let Some(f) = o.format {
            self.dataset.format = f;
        }
        if !o.methods.is_empty() {
            self.methods = o.methods.clone();
        }
        if let Some(a) = &o.attack {
            self.attack = a.clone();
        }
        if !o.budgets.is_empty() {
            self.budgets = o.budgets.clone();
        }
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(t) = o.targets {
            self.targets = t;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    /// Budgets that produce distinct cells: a single zero when the attack takes none.
    pub fn effective_budgets(&self) -> Vec<f64> {
        if self.attack.uses_budget() {
            self.budgets.clone()
        } else {
            vec![0.0]
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.methods.is_empty(), "no methods configured");
        ensure!(!self.seeds.is_empty(), "no seeds configured");
        self.gcn.validate()?;
        self.defense.ratios()?;
        ensure!(self.svd.rank > 0, "svd rank must be at least 1");
        ensure!(
            self.jaccard.threshold.is_finite(),
            "jaccard threshold must be finite"
        );

        match self.dataset.format {
            DatasetFormat::Synthetic => {}
            DatasetFormat::Planetoid => {
                let path = self
                    .dataset
                    .path
                    .as_ref()
                    .context("dataset path is required")?;
                let prefix = planetoid_prefix(path);
                let content = with_suffix(&prefix, ".content");
                ensure!(
                    content.is_file(),
                    "dataset file {} not found",
                    content.display()
                );
                let cites = with_suffix(&prefix, ".cites");
                ensure!(
                    cites.is_file(),
                    "dataset file {} not found",
                    cites.display()
                );
                if let Some(split) = &self.dataset.split {
                    ensure!(split.is_file(), "split file {} not found", split.display());
                }
            }
            DatasetFormat::Generic => {
                let path = self
                    .dataset
                    .path
                    .as_ref()
                    .context("dataset path is required")?;
                ensure!(
                    path.is_dir(),
                    "dataset directory {} not found",
                    path.display()
                );
                for required in ["edges.txt", "labels.txt"] {
                    let p = path.join(required);
                    ensure!(p.is_file(), "dataset file {} not found", p.display());
                }
            }
        }

        if self.attack.uses_budget() {
            ensure!(
                !self.budgets.is_empty(),
                "attack `{}` needs at least one budget",
                self.attack
            );
        }
        for &b in &self.budgets {
            ensure!(b.is_finite() && b >= 0.0, "budget {b} must be non-negative");
            match self.attack {
                AttackSpec::Dice => ensure!(b <= 1.0, "dice budget is a rate in [0, 1], got {b}"),
                AttackSpec::Random | AttackSpec::SurrogateGreedy => {
                    ensure!(
                        b.fract() == 0.0,
                        "budget {b} must be a whole number of flips"
                    )
                }
                _ => {}
            }
        }
        if let AttackSpec::Replay(p) = &self.attack {
            ensure!(p.is_file(), "perturbation file {} not found", p.display());
        }
        if self.attack == AttackSpec::SurrogateGreedy {
            ensure!(
                self.targets > 0,
                "targeted attack needs at least one target"
            );
        }
        Ok(())
    }
}

pub(crate) fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// A directory `data/cora` stands for the prefix `data/cora/cora`.
pub(crate) fn planetoid_prefix(path: &Path) -> PathBuf {
    if path.is_dir() {
        if let Some(name) = path.file_name() {
            return path.join(name);
        }
    }
    path.to_path_buf()
}
