//! Executes single experiment cells: attack (if any), then defense and
//! classifier training on the result, then evaluation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use anyhow::{bail, ensure, Context as _, Result};
use log::{debug, info, warn};
use vgae_defense::attacks::file::{PerturbationBlock, PerturbationFile};
use vgae_defense::attacks::{LinearSurrogate, SurrogateConfig};
use vgae_defense::defense::RatioTrial;
use vgae_defense::nn::Rng;
use vgae_defense::{
    apply_perturbation, defense_vgae, dice_untargeted_attack, evaluate, gcn_jaccard_defense,
    gcn_svd_defense, normalize_adjacency, random_flip_attack, targeted_surrogate_attack, train_gcn,
    DefenseConfig, GcnModel, Graph, TrainConfig,
};

use crate::config::{AttackSpec, ExperimentConfig, Method};
use crate::report::{format_budget, ReportRow};

/// Everything a cell needs besides its own coordinates.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub dataset: String,
    pub graph: Graph,
    /// Parsed replay file, when the attack is `replay:<file>`.
    pub replay: Option<PerturbationFile>,
}

impl RunContext {
    pub fn new(config: ExperimentConfig, graph: Graph) -> Result<Self> {
        let replay = match &config.attack {
            AttackSpec::Replay(path) => {
                let file = PerturbationFile::read(path)?;
                check_replay(&file, &graph)?;
                Some(file)
            }
            _ => None,
        };
        Ok(Self {
            dataset: config.dataset.display_name(),
            config,
            graph,
            replay,
        })
    }

    pub fn gcn_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.config.gcn
        }
    }

    /// Attack column text. Replays are labelled by the attack named in the file.
    pub fn attack_label(&self) -> String {
        match (&self.config.attack, &self.replay) {
            (AttackSpec::Replay(path), Some(file)) => {
                let name = file.attack.clone().unwrap_or_else(|| {
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                });
                format!("replay:{name}")
            }
            (attack, _) => attack.to_string(),
        }
    }

    /// Budget column text for a cell.
    pub fn budget_label(&self, budget: f64) -> String {
        match &self.replay {
            Some(file) => {
                let flips = file
                    .blocks
                    .iter()
                    .map(|b| b.perturbation.len())
                    .max()
                    .unwrap_or(0);
                file.budget.unwrap_or(flips).to_string()
            }
            None => format_budget(budget),
        }
    }

    pub fn is_targeted(&self) -> bool {
        match &self.config.attack {
            AttackSpec::SurrogateGreedy => true,
            AttackSpec::Replay(_) => self.replay.as_ref().is_some_and(|f| {
                !f.blocks.is_empty() && f.blocks.iter().all(|b| b.target.is_some())
            }),
            _ => false,
        }
    }
}

fn check_replay(file: &PerturbationFile, graph: &Graph) -> Result<()> {
    let targeted = file.blocks.iter().filter(|b| b.target.is_some()).count();
    ensure!(
        targeted == 0 || targeted == file.blocks.len(),
        "perturbation file mixes targeted and untargeted blocks"
    );
    let n = graph.n_nodes();
    for block in &file.blocks {
        if let Some(t) = block.target {
            ensure!(t < n, "target {t} out of range for {n} nodes");
        }
        if let Some(&(i, j)) = block
            .perturbation
            .flips()
            .iter()
            .find(|&&(i, j)| i >= n || j >= n)
        {
            bail!("flip ({i}, {j}) out of range for {n} nodes");
        }
    }
    Ok(())
}

/// Coordinates of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub budget: f64,
    pub seed: u64,
}

/// A graph a classifier may be trained on. Constructing one from the clean
/// dataset is only possible when no attack is configured, so victims are
/// always trained after poisoning.
pub struct VictimGraph(Graph);

impl VictimGraph {
    pub fn unattacked(ctx: &RunContext) -> Result<Self> {
        ensure!(
            ctx.config.attack.is_none(),
            "attack `{}` is configured; the victim must be trained on the poisoned graph",
            ctx.config.attack
        );
        Ok(Self(ctx.graph.clone()))
    }

    pub fn poisoned(graph: Graph) -> Self {
        Self(graph)
    }

    pub fn graph(&self) -> &Graph {
        &self.0
    }
}

/// A trained classifier and the graph it was trained on.
pub struct Fitted {
    pub model: GcnModel,
    pub graph: Graph,
    pub chosen_ratio: Option<f64>,
    pub trials: Vec<RatioTrial>,
}

/// Applies `method` to the victim graph and trains the classifier.
pub fn fit_method(
    ctx: &RunContext,
    method: Method,
    victim: VictimGraph,
    seed: u64,
) -> Result<Fitted> {
    let gcn_cfg = ctx.gcn_config(seed);
    let cfg = &ctx.config;
    let trained = |graph: Graph| -> Result<Fitted> {
        let (model, _) = train_gcn(&graph, &gcn_cfg)?;
        Ok(Fitted {
            model,
            graph,
            chosen_ratio: None,
            trials: Vec::new(),
        })
    };
    match method {
        Method::Gcn => trained(victim.0),
        Method::Jaccard => trained(gcn_jaccard_defense(victim.graph(), cfg.jaccard.threshold)?),
        Method::Svd => {
            let opts = vgae_defense::defense::svd::SvdOptions {
                seed,
                ..cfg.svd.options
            };
            trained(gcn_svd_defense(victim.graph(), cfg.svd.rank, &opts)?)
        }
        Method::VgaeDefense => {
            let defense = DefenseConfig {
                vgae: vgae_defense::VgaeConfig {
                    seed,
                    ..cfg.defense.vgae
                },
                ..cfg.defense.clone()
            };
            let (defended, model) = defense_vgae(victim.graph(), &defense, &gcn_cfg)?;
            debug!(
                "vgae-defense chose ratio {} (density {:.6}, val {:.4})",
                defended.chosen_ratio, defended.achieved_density, defended.val_accuracy
            );
            Ok(Fitted {
                model,
                chosen_ratio: Some(defended.chosen_ratio),
                trials: defended.trials,
                graph: defended.graph,
            })
        }
    }
}

/// Result of one cell.
pub struct CellOutput {
    pub row: ReportRow,
    /// Flips applied to the clean graph, when an attack ran.
    pub perturbations: Option<PerturbationFile>,
    /// Classifier of a clean or untargeted cell (targeted cells train one per target).
    pub fitted: Option<Fitted>,
    /// Targets for which the attack ran out of useful flips.
    pub shortfalls: usize,
}

/// Runs one cell; `workers` bounds the threads used across targets.
pub fn run_cell(ctx: &RunContext, cell: Cell, workers: usize) -> Result<CellOutput> {
    let start = Instant::now();
    let mut out = if ctx.is_targeted() {
        run_targeted(ctx, cell, workers)?
    } else {
        run_untargeted(ctx, cell)?
    };
    out.row.wall_time_s = start.elapsed().as_secs_f64();
    info!(
        "{} {} {} budget {} seed {}: accuracy {:.4} in {:.1}s",
        ctx.dataset,
        cell.method,
        out.row.attack,
        out.row.budget,
        cell.seed,
        out.row.accuracy.unwrap_or(f64::NAN),
        out.row.wall_time_s
    );
    Ok(out)
}

fn base_row(ctx: &RunContext, cell: Cell) -> ReportRow {
    ReportRow {
        dataset: ctx.dataset.clone(),
        method: cell.method.to_string(),
        attack: ctx.attack_label(),
        budget: ctx.budget_label(cell.budget),
        seed: cell.seed.to_string(),
        accuracy: None,
        wall_time_s: 0.0,
        chosen_ratio: None,
        achieved_density: None,
    }
}

/// Row for a cell that raised an error.
pub fn failed_row(ctx: &RunContext, cell: Cell, wall_time_s: f64) -> ReportRow {
    ReportRow {
        wall_time_s,
        ..base_row(ctx, cell)
    }
}

fn run_untargeted(ctx: &RunContext, cell: Cell) -> Result<CellOutput> {
    let mut attack_rng = Rng::derive(cell.seed, "attack");
    let (victim, perturbations) = match &ctx.config.attack {
        AttackSpec::None => (VictimGraph::unattacked(ctx)?, None),
        AttackSpec::Random => {
            let r = random_flip_attack(&ctx.graph, cell.budget as usize, &mut attack_rng)?;
            let file =
                PerturbationFile::single(&r.meta.attack, r.meta.budget, None, r.perturbation);
            (VictimGraph::poisoned(r.attacked_graph), Some(file))
        }
        AttackSpec::Dice => {
            let r = dice_untargeted_attack(&ctx.graph, cell.budget, &mut attack_rng)?;
            if r.meta.shortfall {
                warn!(
                    "dice spent {} of {} flips",
                    r.perturbation.len(),
                    r.meta.budget
                );
            }
            let file =
                PerturbationFile::single(&r.meta.attack, r.meta.budget, None, r.perturbation);
            (VictimGraph::poisoned(r.attacked_graph), Some(file))
        }
        AttackSpec::Replay(_) => {
            let file = ctx.replay.clone().context("replay file not loaded")?;
            // a file without flips replays the clean graph
            let flips = file.untargeted().cloned().unwrap_or_default();
            (
                VictimGraph::poisoned(apply_perturbation(&ctx.graph, &flips)?),
                Some(file),
            )
        }
        AttackSpec::SurrogateGreedy => unreachable!("targeted attacks run per target"),
    };
    let fitted = fit_method(ctx, cell.method, victim, cell.seed)?;
    let accuracy = evaluate(&fitted.model, &fitted.graph, &fitted.graph.split().test)?;
    let row = ReportRow {
        accuracy: Some(accuracy),
        chosen_ratio: fitted.chosen_ratio,
        achieved_density: Some(fitted.graph.density()),
        ..base_row(ctx, cell)
    };
    Ok(CellOutput {
        row,
        perturbations,
        fitted: Some(fitted),
        shortfalls: 0,
    })
}

/// Seeded sample of `count` test nodes that a GCN trained on the clean graph
/// classifies correctly, in ascending order.
pub fn select_targets(ctx: &RunContext, seed: u64, count: usize) -> Result<Vec<usize>> {
    let g = &ctx.graph;
    let (clean, _) = train_gcn(g, &ctx.gcn_config(seed))?;
    let predictions = clean.predict(&normalize_adjacency(g), g.features())?;
    let correct: Vec<usize> = g
        .split()
        .test
        .iter()
        .copied()
        .filter(|&v| predictions[v] == g.labels()[v])
        .collect();
    ensure!(
        !correct.is_empty(),
        "no correctly classified test node to target"
    );
    if correct.len() < count {
        warn!(
            "only {} correctly classified test nodes, fewer than {count} targets",
            correct.len()
        );
    }
    let mut rng = Rng::derive(seed, "targets");
    let picks =
        rand::seq::index::sample(rng.as_rng_core(), correct.len(), count.min(correct.len()));
    let mut targets: Vec<usize> = picks.iter().map(|k| correct[k]).collect();
    targets.sort_unstable();
    Ok(targets)
}

struct TargetOutcome {
    correct: bool,
    density: f64,
    chosen_ratio: Option<f64>,
}

fn run_targeted(ctx: &RunContext, cell: Cell, workers: usize) -> Result<CellOutput> {
    let budget = cell.budget as usize;
    let attacks: Vec<PerturbationBlock> = match &ctx.replay {
        Some(file) => file.blocks.clone(),
        None => {
            let targets = select_targets(ctx, cell.seed, ctx.config.targets)?;
            let surrogate = LinearSurrogate::train(
                &ctx.graph,
                &SurrogateConfig {
                    seed: cell.seed,
                    ..ctx.config.surrogate
                },
            )?;
            let results = par_map(&targets, workers, |&t| {
                targeted_surrogate_attack(&ctx.graph, &surrogate, t, budget)
            });
            results
                .into_iter()
                .map(|r| {
                    r.map(|r| PerturbationBlock {
                        target: r.meta.target,
                        perturbation: r.perturbation,
                    })
                })
                .collect::<vgae_defense::Result<_>>()?
        }
    };
    let shortfalls = attacks
        .iter()
        .filter(|b| b.perturbation.len() < budget)
        .count();
    if shortfalls > 0 {
        warn!("{shortfalls} targets ran out of margin-reducing flips before budget {budget}");
    }
    let outcomes = par_map(&attacks, workers, |block| -> Result<TargetOutcome> {
        let t = block.target.context("targeted block without target")?;
        let poisoned = apply_perturbation(&ctx.graph, &block.perturbation)?;
        let fitted = fit_method(ctx, cell.method, VictimGraph::poisoned(poisoned), cell.seed)?;
        let predicted = fitted
            .model
            .predict(&normalize_adjacency(&fitted.graph), fitted.graph.features())?;
        Ok(TargetOutcome {
            correct: predicted[t] == fitted.graph.labels()[t],
            density: fitted.graph.density(),
            chosen_ratio: fitted.chosen_ratio,
        })
    });
    let outcomes: Vec<TargetOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let n = outcomes.len() as f64;
    let accuracy = outcomes.iter().filter(|o| o.correct).count() as f64 / n;
    let density = outcomes.iter().map(|o| o.density).sum::<f64>() / n;
    let chosen_ratio = (cell.method == Method::VgaeDefense)
        .then(|| outcomes.iter().filter_map(|o| o.chosen_ratio).sum::<f64>() / n);
    let file = match &ctx.replay {
        Some(f) => f.clone(),
        None => PerturbationFile {
            attack: Some("surrogate-greedy".into()),
            budget: Some(budget),
            blocks: attacks,
        },
    };
    Ok(CellOutput {
        row: ReportRow {
            accuracy: Some(accuracy),
            chosen_ratio,
            achieved_density: Some(density),
            ..base_row(ctx, cell)
        },
        perturbations: Some(file),
        fitted: None,
        shortfalls,
    })
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(k) else { break };
                let r = f(item);
                *slots[k].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("slot lock")
                .expect("every slot is filled")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        let serial = par_map(&items, 1, |x| x * x);
        assert_eq!(par_map(&items, 4, |x| x * x), serial);
        assert!(par_map(&[] as &[u64], 3, |x| *x).is_empty());
    }
}
