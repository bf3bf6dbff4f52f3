//! Held-out edge evaluation of a trained VGAE.

use std::collections::HashSet;

use crate::attacks::upper_pair;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::Rng;

#[derive(Debug, Clone)]
pub struct LinkSplit {
    /// Input graph with the held-out edges removed.
    pub train_graph: Graph,
    pub held_out: Vec<(usize, usize)>,
    /// As many pairs that are edges in neither graph.
    pub negatives: Vec<(usize, usize)>,
}

/// Removes `round(fraction · |E|)` uniformly chosen edges and samples the same
/// number of non-edges of the original graph.
pub fn hold_out_edges(graph: &Graph, fraction: f64, rng: &mut Rng) -> Result<LinkSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "held-out fraction {fraction} outside (0, 1)"
        )));
    }
    let edges = graph.edges();
    let n_held = (fraction * edges.len() as f64).round() as usize;
    let n = graph.n_nodes();
    let total = n * n.saturating_sub(1) / 2;
    if n_held == 0 || n_held > total - edges.len() {
        return Err(Error::InfeasibleBudget {
            budget: n_held,
            available: total - edges.len(),
        });
    }
    let picks = rand::seq::index::sample(rng.as_rng_core(), edges.len(), n_held);
    let mut held: Vec<bool> = vec![false; edges.len()];
    for k in picks.iter() {
        held[k] = true;
    }
    let held_out: Vec<(usize, usize)> = picks.iter().map(|k| edges[k]).collect();
    let kept: Vec<(usize, usize)> = edges
        .iter()
        .zip(&held)
        .filter(|(_, &h)| !h)
        .map(|(&e, _)| e)
        .collect();

    let mut seen = HashSet::new();
    let mut negatives = Vec::with_capacity(n_held);
    while negatives.len() < n_held {
        let (i, j) = upper_pair(n, rng.below(total));
        if !graph.has_edge(i, j) && seen.insert((i, j)) {
            negatives.push((i, j));
        }
    }
    Ok(LinkSplit {
        train_graph: graph.with_edges(&kept)?,
        held_out,
        negatives,
    })
}

/// Area under the ROC curve: the probability that a random positive outscores
/// a random negative, ties counting one half.
pub fn roc_auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::EmptyNodeSet("roc_auc scores"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney U with mid-ranks for ties
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < all.len() {
        let mut end = k;
        while end + 1 < all.len() && all[end + 1].0 == all[k].0 {
            end += 1;
        }
        let mid_rank = (k + end) as f64 / 2.0 + 1.0;
        rank_sum += mid_rank * all[k..=end].iter().filter(|(_, p)| *p).count() as f64;
        k = end + 1;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}
