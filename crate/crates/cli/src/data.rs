//! Loads the configured dataset into a [`Graph`].

use std::fs;

use anyhow::{Context, Result};
use log::info;
use vgae_defense::datasets::synthetic::planted_partition;
use vgae_defense::datasets::{load_generic, load_planetoid, GenericPaths};
use vgae_defense::{DataSplit, Graph};

use crate::config::{planetoid_prefix, DatasetConfig, DatasetFormat};

pub fn load_dataset(cfg: &DatasetConfig) -> Result<Graph> {
    let graph = match cfg.format {
        DatasetFormat::Synthetic => planted_partition(&cfg.synthetic)?,
        DatasetFormat::Planetoid => {
            let path = cfg.path.as_ref().context("dataset path is required")?;
            let split = match &cfg.split {
                Some(p) => {
                    let text = fs::read_to_string(p)
                        .with_context(|| format!("reading split {}", p.display()))?;
                    Some(
                        serde_json::from_str::<DataSplit>(&text)
                            .with_context(|| format!("parsing split {}", p.display()))?,
                    )
                }
                None => None,
            };
            let load = load_planetoid(&planetoid_prefix(path), split, cfg.split_seed)?;
            if load.skipped_cites > 0 {
                info!("skipped {} citations to unknown papers", load.skipped_cites);
            }
            load.graph
        }
        DatasetFormat::Generic => {
            let path = cfg.path.as_ref().context("dataset path is required")?;
            load_generic(&GenericPaths::in_dir(path), cfg.split_seed)?
        }
    };
    info!(
        "{}: {} nodes, {} edges, {} features, {} classes",
        cfg.display_name(),
        graph.n_nodes(),
        graph.n_edges(),
        graph.n_features(),
        graph.n_classes()
    );
    Ok(graph)
}
