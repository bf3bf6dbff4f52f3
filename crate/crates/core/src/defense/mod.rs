//! Structure-purification defenses.
//!
//! [`defense_vgae`] trains a VGAE on the input graph, scores every node pair
//! with the decoder, keeps the top-scoring pairs at a density that is a
//! multiple of the input density, and retrains a GCN on the result. The
//! multiple is either fixed or chosen on validation accuracy.
//!
//! [`gcn_jaccard_defense`] and [`gcn_svd_defense`] are the feature-similarity
//! and low-rank baselines.

pub mod svd;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{evaluate, train_gcn, GcnModel, TrainConfig};
use crate::graph::{jaccard_sorted, normalize_adjacency, Graph};
use crate::nn::{dot, sigmoid_scalar, Tensor};
use crate::sparse::CsrMatrix;
use crate::vgae::{encode, train_vgae, VgaeConfig, VgaeModel};

pub use svd::{
    dense_truncated_svd, randomized_svd, truncated_svd, LinearOperator, SvdOptions, TruncatedSvd,
};

/// Density ratios searched when no fixed ratio is given.
pub const DEFAULT_RATIO_GRID: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    /// Candidate multiples of the input density.
    pub ratio_grid: Vec<f64>,
    /// Skip the search and use this multiple.
    pub fixed_ratio: Option<f64>,
    pub vgae: VgaeConfig,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            ratio_grid: DEFAULT_RATIO_GRID.to_vec(),
            fixed_ratio: None,
            vgae: VgaeConfig::default(),
        }
    }
}

impl DefenseConfig {
    pub fn fixed(ratio: f64) -> Self {
        Self {
            fixed_ratio: Some(ratio),
            ..Self::default()
        }
    }

    /// Ratios to try, ascending and deduplicated.
    pub fn ratios(&self) -> Result<Vec<f64>> {
        let mut ratios = match self.fixed_ratio {
            Some(r) => vec![r],
            None => self.ratio_grid.clone(),
        };
        if ratios.is_empty() {
            return Err(Error::InvalidArgument("ratio grid is empty".into()));
        }
        if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "density ratio {bad} must be positive"
            )));
        }
        ratios.sort_by(f64::total_cmp);
        ratios.dedup();
        Ok(ratios)
    }
}

/// One candidate of the density search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioTrial {
    pub ratio: f64,
    pub achieved_density: f64,
    pub val_accuracy: f64,
    /// `None` when the graph has no test nodes.
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefendedGraph {
    /// Reconstructed structure with the original features, labels and split.
    pub graph: Graph,
    pub chosen_ratio: f64,
    pub achieved_density: f64,
    pub val_accuracy: f64,
    /// Every ratio tried, ascending.
    pub trials: Vec<RatioTrial>,
}

/// Decoded edge probabilities from the posterior means, diagonal zeroed.
pub fn reconstruct_adjacency(model: &VgaeModel, graph: &Graph) -> Result<Tensor> {
    let a_hat = normalize_adjacency(graph);
    let (mu, _) = encode(model, &a_hat, graph.features())?;
    let n = mu.rows();
    let mut scores = Tensor::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = sigmoid_scalar(dot(mu.row(i), mu.row(j)));
            scores.set(i, j, p);
            scores.set(j, i, p);
        }
    }
    Ok(scores)
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    i: u32,
    j: u32,
}

/// Highest score first, then lexicographic `(i, j)`.
fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then((a.i, a.j).cmp(&(b.i, b.j)))
}

/// Number of undirected pairs kept for `target_density` on `n` nodes.
pub fn pairs_for_density(n: usize, target_density: f64) -> usize {
    let max_pairs = n * n.saturating_sub(1) / 2;
    let k = (target_density * (n * n) as f64 / 2.0).round();
    if k >= max_pairs as f64 {
        max_pairs
    } else {
        k as usize
    }
}

/// Keeps the `round(target_density · N² / 2)` highest-scoring strict-upper
/// pairs, mirrored, as a binary symmetric matrix. Ties go to the
/// lexicographically smaller pair; requests beyond `N(N−1)/2` pairs give the
/// complete graph.
pub fn sparsify(scores: &Tensor, target_density: f64) -> Result<CsrMatrix> {
    if !target_density.is_finite() || target_density <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target density {target_density} must be positive"
        )));
    }
    let n = scores.rows();
    if scores.cols() != n {
        return Err(Error::dims(
            "score matrix",
            format!("{n}x{n}"),
            format!("{}x{}", n, scores.cols()),
        ));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidArgument("score matrix too large".into()));
    }
    let k = pairs_for_density(n, target_density);
    let mut candidates = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let score = scores.get(i, j);
            if !score.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite score at ({i},{j})"
                )));
            }
            candidates.push(Candidate {
                score,
                i: i as u32,
                j: j as u32,
            });
        }
    }
    if k < candidates.len() && k > 0 {
        candidates.select_nth_unstable_by(k - 1, rank_order);
    }
    candidates.truncate(k);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in &candidates {
        rows[c.i as usize].push(c.j as usize);
        rows[c.j as usize].push(c.i as usize);
    }
    for row in &mut rows {
        row.sort_unstable();
    }
    Ok(CsrMatrix::from_sorted_rows(n, &rows))
}

/// Full pipeline: train the VGAE on `graph`, then reconstruct and select the density.
pub fn defense_vgae(
    graph: &Graph,
    cfg: &DefenseConfig,
    gcn_cfg: &TrainConfig,
) -> Result<(DefendedGraph, GcnModel)> {
    let ratios = cfg.ratios()?;
    let (model, losses) = train_vgae(graph, &cfg.vgae)?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        log::debug!(
            "vgae loss {:.5} -> {:.5} over {} epochs",
            first.total,
            last.total,
            losses.len()
        );
    }
    defend_with_vgae(&model, graph, &ratios, gcn_cfg)
}

/// Reconstruction and density selection with an already trained VGAE.
pub fn defend_with_vgae(
    model: &VgaeModel,
    graph: &Graph,
    ratios: &[f64],
    gcn_cfg: &TrainConfig,
) -> Result<(DefendedGraph, GcnModel)> {
    if ratios.is_empty() {
        return Err(Error::InvalidArgument("ratio grid is empty".into()));
    }
    let input_density = graph.density();
    if input_density == 0.0 {
        return Err(Error::NotApplicable(
            "input graph has no edges, density ratio is undefined".into(),
        ));
    }
    let scores = reconstruct_adjacency(model, graph)?;
    let mut trials = Vec::with_capacity(ratios.len());
    let mut best: Option<(DefendedGraph, GcnModel)> = None;
    for &ratio in ratios {
        let adjacency = sparsify(&scores, ratio * input_density)?;
        let defended = graph.with_adjacency(adjacency)?;
        let (gcn, history) = train_gcn(&defended, gcn_cfg)?;
        let val_accuracy = history.best().val_acc;
        let test_ids = &defended.split().test;
        let test_accuracy = if test_ids.is_empty() {
            None
        } else {
            Some(evaluate(&gcn, &defended, test_ids)?)
        };
        let achieved_density = defended.density();
        log::debug!("ratio {ratio}: density {achieved_density:.6}, val {val_accuracy:.4}");
        trials.push(RatioTrial {
            ratio,
            achieved_density,
            val_accuracy,
            test_accuracy,
        });
        // strict improvement keeps the smaller ratio on ties
        if best
            .as_ref()
            .is_none_or(|(b, _)| val_accuracy > b.val_accuracy)
        {
            best = Some((
                DefendedGraph {
                    graph: defended,
                    chosen_ratio: ratio,
                    achieved_density,
                    val_accuracy,
                    trials: Vec::new(),
                },
                gcn,
            ));
        }
    }
    let (mut defended, gcn) = best.expect("at least one ratio");
    defended.trials = trials;
    Ok((defended, gcn))
}

/// Default similarity threshold: edges whose endpoints share no feature are dropped.
pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.0;

/// Drops every edge whose endpoint feature supports have Jaccard similarity
/// `<= threshold`.
pub fn gcn_jaccard_defense(graph: &Graph, threshold: f64) -> Result<Graph> {
    if graph.has_identity_features() {
        return Err(Error::NotApplicable(
            "Jaccard defense needs node features, graph has identity features".into(),
        ));
    }
    let x = graph.features();
    let kept: Vec<(usize, usize)> = graph
        .edges()
        .into_iter()
        .filter(|&(u, v)| jaccard_sorted(x.row_indices(u), x.row_indices(v)) > threshold)
        .collect();
    log::debug!("jaccard kept {} of {} edges", kept.len(), graph.n_edges());
    graph.with_edges(&kept)
}

/// Default rank for the SVD baseline.
pub const DEFAULT_SVD_RANK: usize = 10;

/// Replaces the adjacency with its binarized rank-`rank` approximation:
/// entries of the symmetrized `A_k` above 0.5 become edges.
pub fn gcn_svd_defense(graph: &Graph, rank: usize, opts: &SvdOptions) -> Result<Graph> {
    let n = graph.n_nodes();
    if rank == 0 || rank > n {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={n}"
        )));
    }
    let svd = truncated_svd(graph.adjacency(), rank, opts)?;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let sym = 0.5 * (svd.entry(i, j) + svd.entry(j, i));
            if sym > 0.5 {
                edges.push((i, j));
            }
        }
    }
    graph.with_edges(&edges)
}
