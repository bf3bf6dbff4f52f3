//! DICE: delete edges inside classes, connect nodes across classes.
//!
//! The attacker is assumed to know every node's true label.

use std::collections::HashSet;

use super::{apply_perturbation, upper_pair, AttackMeta, AttackResult, Perturbation};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::Rng;

const REJECTION_TRIES: usize = 10_000;

/// Spends `round(rate · |E|)` flips; each one is, with probability ½, the
/// deletion of a uniformly chosen same-label edge, otherwise the insertion of a
/// uniformly chosen cross-label non-edge. An empty pool falls back to the
/// other action; if both are empty the attack stops with `shortfall` set.
pub fn dice_untargeted_attack(graph: &Graph, rate: f64, rng: &mut Rng) -> Result<AttackResult> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "perturbation rate {rate} outside [0, 1]"
        )));
    }
    let budget = (rate * graph.n_edges() as f64).round() as usize;
    let labels = graph.labels();
    let n = graph.n_nodes();

    let mut deletable: Vec<(usize, usize)> = graph
        .edges()
        .into_iter()
        .filter(|&(i, j)| labels[i] == labels[j])
        .collect();
    let cross_edges = graph
        .edges()
        .iter()
        .filter(|&&(i, j)| labels[i] != labels[j])
        .count();
    let mut class_sizes = vec![0usize; graph.n_classes()];
    for &l in labels {
        class_sizes[l] += 1;
    }
    let same_pairs: usize = class_sizes
        .iter()
        .map(|&s| s * s.saturating_sub(1) / 2)
        .sum();
    let cross_pairs = n * n.saturating_sub(1) / 2 - same_pairs;
    let mut addable = cross_pairs - cross_edges;
    let mut added: HashSet<(usize, usize)> = HashSet::new();

    let mut perturbation = Perturbation::default();
    let mut shortfall = false;
    while perturbation.len() < budget {
        let want_delete = rng.bernoulli(0.5);
        let delete = match (want_delete, deletable.is_empty(), addable == 0) {
            (_, true, true) => {
                shortfall = true;
                break;
            }
            (true, false, _) | (false, false, true) => true,
            _ => false,
        };
        if delete {
            let k = rng.below(deletable.len());
            let (i, j) = deletable.swap_remove(k);
            perturbation.push(i, j)?;
        } else {
            let pair = sample_cross_non_edge(graph, &added, addable, rng);
            added.insert(pair);
            addable -= 1;
            perturbation.push(pair.0, pair.1)?;
        }
    }
    let attacked_graph = apply_perturbation(graph, &perturbation)?;
    Ok(AttackResult {
        perturbation,
        attacked_graph,
        meta: AttackMeta {
            attack: "dice".into(),
            target: None,
            budget,
            shortfall,
        },
    })
}

fn is_candidate(graph: &Graph, added: &HashSet<(usize, usize)>, i: usize, j: usize) -> bool {
    let labels = graph.labels();
    i != j
        && labels[i] != labels[j]
        && !graph.has_edge(i, j)
        && !added.contains(&(i.min(j), i.max(j)))
}

/// Uniform draw from the remaining cross-label non-edges; `available > 0`.
fn sample_cross_non_edge(
    graph: &Graph,
    added: &HashSet<(usize, usize)>,
    available: usize,
    rng: &mut Rng,
) -> (usize, usize) {
    let n = graph.n_nodes();
    let total = n * (n - 1) / 2;
    for _ in 0..REJECTION_TRIES {
        let (i, j) = upper_pair(n, rng.below(total));
        if is_candidate(graph, added, i, j) {
            return (i, j);
        }
    }
    // sparse pool: enumerate and pick the k-th
    let k = rng.below(available);
    (0..total)
        .map(|idx| upper_pair(n, idx))
        .filter(|&(i, j)| is_candidate(graph, added, i, j))
        .nth(k)
        .expect("available counts the remaining candidates")
}
