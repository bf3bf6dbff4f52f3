//! Greedy direct attack on a linearized GCN surrogate, `logits = Â² X W`.
//!
//! Each step scores every toggle `(target, j)` by the target's margin
//! (true-class logit minus best other logit) on the toggled graph and applies
//! the one with the lowest margin. Scores are exact: only the degrees and
//! neighbor lists of `target` and `j` change, so the target's two-hop logits
//! are recomputed from those lists instead of renormalizing the whole graph.

use serde::{Deserialize, Serialize};

use super::{apply_perturbation, AttackMeta, AttackResult, Perturbation};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph};
use crate::nn::{
    glorot_init, masked_cross_entropy, spmm, spmm_transposed, AdamConfig, Parameter, Rng, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

/// Linear two-hop model `Â² X W`, trained on the clean graph's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSurrogate {
    weights: Tensor,
}

impl LinearSurrogate {
    pub fn train(graph: &Graph, cfg: &SurrogateConfig) -> Result<Self> {
        let train = &graph.split().train;
        if train.is_empty() {
            return Err(Error::EmptyNodeSet("surrogate training set"));
        }
        let a_hat = normalize_adjacency(graph);
        let x = graph.features();
        let mut rng = Rng::derive(cfg.seed, "surrogate-init");
        let mut w = Parameter::new(glorot_init(
            graph.n_features(),
            graph.n_classes().max(1),
            &mut rng,
        ));
        let adam = AdamConfig::with_lr(cfg.lr);
        for epoch in 0..cfg.epochs {
            let xw = spmm(x, &w.value)?;
            let logits = spmm(&a_hat, &spmm(&a_hat, &xw)?)?;
            let (loss, grad) = masked_cross_entropy(&logits, graph.labels(), train)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: "surrogate loss",
                });
            }
            let back = spmm(&a_hat, &spmm(&a_hat, &grad)?)?;
            let mut g = spmm_transposed(x, &back)?;
            g.axpy(cfg.weight_decay, &w.value)?;
            w.grad = g;
            adam.step(&mut w);
        }
        Ok(Self { weights: w.value })
    }

    pub fn from_weights(weights: Tensor) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// `Â² X W` on `graph`.
    pub fn logits(&self, graph: &Graph) -> Result<Tensor> {
        let a_hat = normalize_adjacency(graph);
        let xw = spmm(graph.features(), &self.weights)?;
        spmm(&a_hat, &spmm(&a_hat, &xw)?)
    }
}

/// True-class logit minus the best other logit.
pub(crate) fn margin(logits: &[f64], label: usize) -> f64 {
    let best_other = logits
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    logits[label] - best_other
}

/// Mutable neighbor lists plus the per-node quantities the margin needs.
struct AttackState {
    neighbors: Vec<Vec<usize>>,
    /// `XW`
    xw: Tensor,
    /// `XW_m / sqrt(d̃_m)`
    scaled: Tensor,
    /// `Σ_{m ∈ N(k) ∪ {k}} scaled_m`
    hop_sums: Tensor,
}

impl AttackState {
    fn new(graph: &Graph, xw: Tensor) -> Self {
        let neighbors = (0..graph.n_nodes())
            .map(|v| graph.neighbors(v).to_vec())
            .collect();
        let mut s = Self {
            neighbors,
            scaled: Tensor::zeros(xw.rows(), xw.cols()),
            hop_sums: Tensor::zeros(xw.rows(), xw.cols()),
            xw,
        };
        s.refresh();
        s
    }

    fn deg(&self, v: usize) -> f64 {
        (self.neighbors[v].len() + 1) as f64
    }

    fn refresh(&mut self) {
        let n = self.neighbors.len();
        for v in 0..n {
            let inv = 1.0 / self.deg(v).sqrt();
            let row: Vec<f64> = self.xw.row(v).iter().map(|x| x * inv).collect();
            self.scaled.row_mut(v).copy_from_slice(&row);
        }
        for k in 0..n {
            let mut acc = self.scaled.row(k).to_vec();
            for &m in &self.neighbors[k] {
                for (a, &s) in acc.iter_mut().zip(self.scaled.row(m)) {
                    *a += s;
                }
            }
            self.hop_sums.row_mut(k).copy_from_slice(&acc);
        }
    }

    fn toggle(&mut self, a: usize, b: usize) {
        for (u, v) in [(a, b), (b, a)] {
            match self.neighbors[u].binary_search(&v) {
                Ok(k) => {
                    self.neighbors[u].remove(k);
                }
                Err(k) => self.neighbors[u].insert(k, v),
            }
        }
        self.refresh();
    }

    /// Target logits of `Â² X W` after toggling `(t, j)`, or on the current
    /// graph when `j` is `None`.
    fn target_logits(&self, t: usize, j: Option<usize>) -> Vec<f64> {
        let c = self.xw.cols();
        let linked = j.is_some_and(|j| self.neighbors[t].binary_search(&j).is_ok());
        let shift = |v: usize| -> f64 {
            match j {
                Some(j) if v == t || v == j => {
                    if linked {
                        -1.0
                    } else {
                        1.0
                    }
                }
                _ => 0.0,
            }
        };
        let new_deg = |v: usize| self.deg(v) + shift(v);
        let new_scaled = |v: usize, out: &mut [f64]| {
            let inv = 1.0 / new_deg(v).sqrt();
            for (o, &x) in out.iter_mut().zip(self.xw.row(v)) {
                *o = x * inv;
            }
        };
        let mut scaled_t = vec![0.0; c];
        new_scaled(t, &mut scaled_t);
        let mut scaled_j = vec![0.0; c];
        if let Some(j) = j {
            new_scaled(j, &mut scaled_j);
        }

        // neighbor sums for the two endpoints, over their new neighbor lists
        let endpoint_sum = |v: usize, other: Option<usize>| -> Vec<f64> {
            let mut acc = if v == t {
                scaled_t.clone()
            } else {
                scaled_j.clone()
            };
            for &m in &self.neighbors[v] {
                // only reachable when the toggle deletes this edge
                if Some(m) == other {
                    continue;
                }
                for (a, &s) in acc.iter_mut().zip(self.scaled.row(m)) {
                    *a += s;
                }
            }
            if let Some(o) = other {
                if !linked {
                    let src = if o == t { &scaled_t } else { &scaled_j };
                    for (a, &s) in acc.iter_mut().zip(src) {
                        *a += s;
                    }
                }
            }
            acc
        };

        let inner_t = endpoint_sum(t, j);
        let d_t = new_deg(t);
        let mut out: Vec<f64> = inner_t.iter().map(|v| v / d_t).collect();
        let old_scaled_t = self.scaled.row(t);
        let old_scaled_j = j.map(|j| self.scaled.row(j));
        for &k in &self.neighbors[t] {
            if Some(k) == j {
                continue;
            }
            // k keeps its degree; its sum changes through the rescaled t and j
            let dk = self.deg(k);
            let has_j = j.is_some_and(|j| self.neighbors[k].binary_search(&j).is_ok());
            for f in 0..c {
                let mut s = self.hop_sums.get(k, f) - old_scaled_t[f] + scaled_t[f];
                if has_j {
                    s += scaled_j[f] - old_scaled_j.unwrap()[f];
                }
                out[f] += s / dk;
            }
        }
        if let Some(j) = j {
            if !linked {
                let inner_j = endpoint_sum(j, Some(t));
                let d_j = new_deg(j);
                for f in 0..c {
                    out[f] += inner_j[f] / d_j;
                }
            }
        }
        let norm = 1.0 / d_t.sqrt();
        out.iter_mut().for_each(|v| *v *= norm);
        out
    }
}

/// Greedy direct structure attack on `target` using a pre-trained surrogate.
///
/// Stops early, with `meta.shortfall` set, when no toggle lowers the margin.
pub fn targeted_surrogate_attack(
    graph: &Graph,
    surrogate: &LinearSurrogate,
    target: usize,
    budget: usize,
) -> Result<AttackResult> {
    let n = graph.n_nodes();
    if target >= n {
        return Err(Error::NodeOutOfRange {
            id: target,
            n_nodes: n,
        });
    }
    let label = graph.labels()[target];
    let xw = spmm(graph.features(), surrogate.weights())?;
    let mut state = AttackState::new(graph, xw);
    let mut perturbation = Perturbation::default();
    let mut current = margin(&state.target_logits(target, None), label);
    let mut shortfall = false;
    while perturbation.len() < budget {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if j == target || perturbation.contains(target, j) {
                continue;
            }
            let m = margin(&state.target_logits(target, Some(j)), label);
            if best.is_none_or(|(bm, _)| m < bm) {
                best = Some((m, j));
            }
        }
        match best {
            Some((m, j)) if m < current => {
                perturbation.push(target, j)?;
                state.toggle(target, j);
                current = m;
            }
            _ => {
                shortfall = true;
                break;
            }
        }
    }
    let attacked_graph = apply_perturbation(graph, &perturbation)?;
    Ok(AttackResult {
        perturbation,
        attacked_graph,
        meta: AttackMeta {
            attack: "surrogate-greedy".into(),
            target: Some(target),
            budget,
            shortfall,
        },
    })
}
