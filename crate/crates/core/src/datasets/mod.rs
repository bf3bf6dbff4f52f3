//! Dataset loaders and writers.
//!
//! Two on-disk layouts are understood:
//!
//! * Planetoid raw files, `<name>.content` and `<name>.cites`;
//! * a generic layout of an edge list, an optional features CSV, a labels file
//!   and an optional split JSON.
//!
//! [`synthetic`] generates planted-partition graphs for tests and smoke runs.

mod generic;
mod planetoid;
pub mod synthetic;

use crate::error::Result;
use crate::graph::DataSplit;

pub use generic::{load_generic, read_edge_list, write_edge_list, write_generic, GenericPaths};
pub use planetoid::{load_planetoid, PlanetoidLoad};

/// Training nodes per class in the standard semi-supervised citation split.
pub const PLANETOID_TRAIN_PER_CLASS: usize = 20;
pub const PLANETOID_VAL: usize = 500;
pub const PLANETOID_TEST: usize = 1000;

/// 20 labels per class for training, 500 validation and 1000 test nodes,
/// sampled with `seed`.
pub fn planetoid_split(labels: &[usize], seed: u64) -> Result<DataSplit> {
    DataSplit::per_class(
        labels,
        PLANETOID_TRAIN_PER_CLASS,
        PLANETOID_VAL,
        PLANETOID_TEST,
        seed,
    )
}

/// 10% train, 10% validation, the rest test.
pub fn fraction_split(n_nodes: usize, seed: u64) -> Result<DataSplit> {
    DataSplit::fractions(n_nodes, 0.1, 0.1, seed)
}
