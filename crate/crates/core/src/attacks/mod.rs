//! Structure-poisoning attacks.
//!
//! None of these reproduce Nettack or Metattack. `surrogate-greedy` is a
//! direct targeted attack against a linearized two-hop GCN, and `dice` is the
//! delete-internally / connect-externally heuristic. Outputs of the real
//! attacks can be replayed through the perturbation file format in [`file`].

mod dice;
pub mod file;
mod surrogate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::Rng;
use crate::sparse::CsrMatrix;

pub use dice::dice_untargeted_attack;
pub use surrogate::{targeted_surrogate_attack, LinearSurrogate, SurrogateConfig};

/// Ordered list of undirected edge toggles, each stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    flips: Vec<(usize, usize)>,
}

impl Perturbation {
    /// Normalizes each pair to `i < j`; rejects self-pairs and repeats.
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut p = Self::default();
        for (i, j) in pairs {
            p.push(i, j)?;
        }
        Ok(p)
    }

    pub fn push(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::SelfPair(i));
        }
        let pair = (i.min(j), i.max(j));
        if self.flips.contains(&pair) {
            return Err(Error::InvalidArgument(format!(
                "pair {pair:?} flipped twice"
            )));
        }
        self.flips.push(pair);
        Ok(())
    }

    pub fn flips(&self) -> &[(usize, usize)] {
        &self.flips
    }

    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    pub(crate) fn contains(&self, i: usize, j: usize) -> bool {
        self.flips.contains(&(i.min(j), i.max(j)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMeta {
    pub attack: String,
    pub target: Option<usize>,
    pub budget: usize,
    /// The attack stopped before spending its budget.
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub perturbation: Perturbation,
    pub attacked_graph: Graph,
    pub meta: AttackMeta,
}

/// Toggles every pair of `p` in `graph`. Features, labels and split are kept.
pub fn apply_perturbation(graph: &Graph, p: &Perturbation) -> Result<Graph> {
    let n = graph.n_nodes();
    let mut rows: Vec<Vec<usize>> = (0..n).map(|v| graph.neighbors(v).to_vec()).collect();
    for &(i, j) in p.flips() {
        if i == j {
            return Err(Error::SelfPair(i));
        }
        for id in [i, j] {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, n_nodes: n });
            }
        }
        toggle(&mut rows[i], j);
        toggle(&mut rows[j], i);
    }
    graph.with_adjacency(CsrMatrix::from_sorted_rows(n, &rows))
}

fn toggle(row: &mut Vec<usize>, v: usize) {
    match row.binary_search(&v) {
        Ok(k) => {
            row.remove(k);
        }
        Err(k) => row.insert(k, v),
    }
}

/// Maps `0..n(n−1)/2` onto the strict upper triangle in row-major order.
pub(crate) fn upper_pair(n: usize, index: usize) -> (usize, usize) {
    // offset(i) = number of pairs in rows before i
    let offset = |i: usize| i * (2 * n - i - 1) / 2;
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if offset(mid) <= index {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = lo;
    (i, i + 1 + (index - offset(i)))
}

/// Toggles `budget` distinct pairs drawn uniformly without replacement.
pub fn random_flip_attack(graph: &Graph, budget: usize, rng: &mut Rng) -> Result<AttackResult> {
    let n = graph.n_nodes();
    let total = n * n.saturating_sub(1) / 2;
    if budget > total {
        return Err(Error::InfeasibleBudget {
            budget,
            available: total,
        });
    }
    let picks = rand::seq::index::sample(rng.as_rng_core(), total, budget);
    let perturbation = Perturbation::new(picks.into_iter().map(|k| upper_pair(n, k)))?;
    let attacked_graph = apply_perturbation(graph, &perturbation)?;
    Ok(AttackResult {
        perturbation,
        attacked_graph,
        meta: AttackMeta {
            attack: "random".into(),
            target: None,
            budget,
            shortfall: false,
        },
    })
}
