//! Graph structure-poisoning defense built on a variational graph autoencoder.
//!
//! A VGAE is trained on a possibly poisoned graph, its decoded edge scores are
//! re-sparsified to a chosen density, and a GCN classifier is retrained on the
//! result. GCN-Jaccard and GCN-SVD baselines, poisoning attacks, and dataset
//! loaders live alongside.

pub mod attacks;
pub mod datasets;
pub mod defense;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod linkpred;
pub mod nn;
pub mod sparse;
pub mod vgae;

pub use attacks::{
    apply_perturbation, dice_untargeted_attack, random_flip_attack, targeted_surrogate_attack,
    AttackResult, Perturbation,
};
pub use defense::{
    defense_vgae, gcn_jaccard_defense, gcn_svd_defense, sparsify, DefendedGraph, DefenseConfig,
};
pub use error::{Error, Result};
pub use gcn::{evaluate, gcn_forward, train_gcn, GcnModel, TrainConfig, TrainHistory};
pub use graph::{
    build_graph, density, jaccard_similarity, normalize_adjacency, DataSplit, Graph,
    NormalizedAdjacency,
};
pub use sparse::CsrMatrix;
pub use vgae::{
    decode, encode, reparameterize, train_vgae, vgae_loss, LatentState, VgaeConfig, VgaeLoss,
    VgaeModel,
};
