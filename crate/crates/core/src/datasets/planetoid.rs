use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::planetoid_split;
use crate::error::{Error, Result};
use crate::graph::{build_graph, DataSplit, Graph};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct PlanetoidLoad {
    pub graph: Graph,
    /// Raw node ids in index order.
    pub node_ids: Vec<String>,
    /// Class names in id order (sorted lexicographically).
    pub class_names: Vec<String>,
    /// `.cites` lines that referenced an id missing from `.content`.
    pub skipped_cites: usize,
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Reads `<prefix>.content` and `<prefix>.cites`.
///
/// Node ids are mapped to indices in the order they first appear in the
/// content file. Without an explicit `split`, the standard 20-per-class /
/// 500 / 1000 split is sampled with `split_seed`.
pub fn load_planetoid(
    prefix: &Path,
    split: Option<DataSplit>,
    split_seed: u64,
) -> Result<PlanetoidLoad> {
    let content_path = with_suffix(prefix, ".content");
    let cites_path = with_suffix(prefix, ".cites");
    let content = fs::read_to_string(&content_path).map_err(|e| Error::io(&content_path, e))?;
    let cites = fs::read_to_string(&cites_path).map_err(|e| Error::io(&cites_path, e))?;

    let parse_err = |path: &Path, line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut node_ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut raw_labels = Vec::new();
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut n_features: Option<usize> = None;

    for (k, line) in content.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if line.trim().is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(
                &content_path,
                k + 1,
                "expected id, features and label".into(),
            ));
        }
        let d = fields.len() - 2;
        match n_features {
            None => n_features = Some(d),
            Some(expected) if expected != d => {
                return Err(parse_err(
                    &content_path,
                    k + 1,
                    format!("{d} features, expected {expected}"),
                ));
            }
            _ => {}
        }
        let id = fields[0].to_string();
        if index.insert(id.clone(), node_ids.len()).is_some() {
            return Err(parse_err(
                &content_path,
                k + 1,
                format!("duplicate node id {id:?}"),
            ));
        }
        node_ids.push(id);
        for (col, f) in fields[1..=d].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(&content_path, k + 1, format!("bad feature value {f:?}")))?;
            if v != 0.0 {
                indices.push(col);
                values.push(v);
            }
        }
        indptr.push(indices.len());
        raw_labels.push(fields[d + 1].to_string());
    }
    let n = node_ids.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let features = CsrMatrix::new(n, n_features.unwrap_or(0), indptr, indices, values)?;

    let class_names: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| class_names.binary_search(l).expect("label collected above"))
        .collect();

    let mut edges = Vec::new();
    let mut skipped_cites = 0;
    for (k, line) in cites.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(
                &cites_path,
                k + 1,
                format!("expected two ids, got {line:?}"),
            ));
        };
        match (index.get(a), index.get(b)) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => skipped_cites += 1,
        }
    }
    if skipped_cites > 0 {
        warn!(
            "{}: skipped {skipped_cites} citation(s) with unknown node ids",
            cites_path.display()
        );
    }

    let split = match split {
        Some(s) => s,
        None => planetoid_split(&labels, split_seed)?,
    };
    let graph = build_graph(&edges, features, labels, split)?;
    Ok(PlanetoidLoad {
        graph,
        node_ids,
        class_names,
        skipped_cites,
    })
}
