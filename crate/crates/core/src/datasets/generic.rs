use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fraction_split;
use crate::error::{Error, Result};
use crate::graph::{build_graph, DataSplit, Graph};
use crate::sparse::CsrMatrix;

/// File locations of a dataset in the generic layout.
///
/// Missing features mean identity features; a missing split means the 10/10/80
/// fraction split sampled with the load seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericPaths {
    pub edges: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    pub labels: PathBuf,
    #[serde(default)]
    pub split: Option<PathBuf>,
}

impl GenericPaths {
    /// `edges.txt`, `features.csv`, `labels.txt`, `split.json` under `dir`,
    /// keeping only the optional files that exist.
    pub fn in_dir(dir: &Path) -> Self {
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            edges: dir.join("edges.txt"),
            features: optional("features.csv"),
            labels: dir.join("labels.txt"),
            split: optional("split.json"),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    }
}

/// Whitespace-separated `u v` pairs, 0-based; blank lines and `#` comments
/// are skipped.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(
                path,
                k + 1,
                format!("expected `u v`, got {line:?}"),
            ));
        };
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, k + 1, format!("bad node id {s:?}")))
        };
        edges.push((id(a)?, id(b)?));
    }
    Ok(edges)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(path, k + 1, format!("bad label {:?}", l.trim())))
        })
        .collect()
}

fn read_features(path: &Path) -> Result<CsrMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut n_cols = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, k + 1, e.to_string()))?;
        match n_cols {
            None => n_cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(
                    path,
                    k + 1,
                    format!("{} columns, expected {c}", record.len()),
                ));
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, k + 1, format!("bad feature value {field:?}")))?;
            if v != 0.0 {
                indices.push(col);
                values.push(v);
            }
        }
        indptr.push(indices.len());
    }
    CsrMatrix::new(
        indptr.len() - 1,
        n_cols.unwrap_or(0),
        indptr,
        indices,
        values,
    )
}

pub fn load_generic(paths: &GenericPaths, split_seed: u64) -> Result<Graph> {
    let edges = read_edge_list(&paths.edges)?;
    let labels = read_labels(&paths.labels)?;
    let features = match &paths.features {
        Some(p) => read_features(p)?,
        None => CsrMatrix::identity(labels.len()),
    };
    let split = match &paths.split {
        Some(p) => serde_json::from_str::<DataSplit>(&read(p)?)
            .map_err(|e| parse_err(p, e.line(), e.to_string()))?,
        None => fraction_split(labels.len(), split_seed)?,
    };
    build_graph(&edges, features, labels, split)
}

/// One `i j` line per undirected edge, `i < j`, in row-major order.
pub fn write_edge_list(graph: &Graph, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, j) in graph.edges() {
        writeln!(out, "{i} {j}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the whole graph into `dir` in the generic layout. Identity features
/// are left implicit.
pub fn write_generic(graph: &Graph, dir: &Path) -> Result<GenericPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = GenericPaths {
        edges: dir.join("edges.txt"),
        features: (!graph.has_identity_features()).then(|| dir.join("features.csv")),
        labels: dir.join("labels.txt"),
        split: Some(dir.join("split.json")),
    };
    write_edge_list(graph, &paths.edges)?;
    if let Some(p) = &paths.features {
        let mut w = csv::Writer::from_path(p).map_err(|e| parse_err(p, 0, e.to_string()))?;
        let x = graph.features();
        for r in 0..graph.n_nodes() {
            let mut row = vec![0.0; x.n_cols()];
            for (&c, &v) in x.row_indices(r).iter().zip(x.row_values(r)) {
                row[c] = v;
            }
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| parse_err(p, r + 1, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    let labels: String = graph.labels().iter().map(|l| format!("{l}\n")).collect();
    fs::write(&paths.labels, labels).map_err(|e| Error::io(&paths.labels, e))?;
    let split_path = paths.split.as_ref().expect("always written");
    fs::write(split_path, serde_json::to_string(graph.split())?)
        .map_err(|e| Error::io(split_path, e))?;
    Ok(paths)
}
