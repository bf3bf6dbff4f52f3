//! Planted-partition graphs with class-correlated binary features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, DataSplit, Graph};
use crate::nn::Rng;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPartition {
    pub n_classes: usize,
    pub nodes_per_class: usize,
    /// Edge probability inside a class.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    /// Features reserved for each class; the feature dimension is
    /// `n_classes · features_per_class`.
    pub features_per_class: usize,
    /// Probability that a node carries one of its own class features.
    pub feature_p_in: f64,
    /// Probability that a node carries a feature of another class.
    pub feature_p_out: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            n_classes: 3,
            nodes_per_class: 20,
            p_in: 0.25,
            p_out: 0.02,
            features_per_class: 10,
            feature_p_in: 0.3,
            feature_p_out: 0.05,
            train_frac: 0.2,
            val_frac: 0.2,
            seed: 0,
        }
    }
}

/// Node `v` belongs to class `v / nodes_per_class`.
pub fn planted_partition(cfg: &PlantedPartition) -> Result<Graph> {
    let probs = [cfg.p_in, cfg.p_out, cfg.feature_p_in, cfg.feature_p_out];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(format!(
            "probabilities {probs:?} outside [0, 1]"
        )));
    }
    let n = cfg.n_classes * cfg.nodes_per_class;
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let labels: Vec<usize> = (0..n).map(|v| v / cfg.nodes_per_class).collect();

    let mut rng = Rng::derive(cfg.seed, "planted-edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }

    let mut rng = Rng::derive(cfg.seed, "planted-features");
    let d = cfg.n_classes * cfg.features_per_class;
    let mut triplets = Vec::new();
    for (v, &c) in labels.iter().enumerate() {
        for f in 0..d {
            let p = if f / cfg.features_per_class.max(1) == c {
                cfg.feature_p_in
            } else {
                cfg.feature_p_out
            };
            if rng.bernoulli(p) {
                triplets.push((v, f, 1.0));
            }
        }
    }
    let features = CsrMatrix::from_triplets(n, d, triplets)?;
    let split = DataSplit::fractions(n, cfg.train_frac, cfg.val_frac, cfg.seed)?;
    build_graph(&edges, features, labels, split)
}
