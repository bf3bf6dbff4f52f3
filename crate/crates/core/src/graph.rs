//! Attributed graphs, train/val/test splits, and adjacency normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::sparse::CsrMatrix;

/// Disjoint train / validation / test node sets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    pub fn new(train: Vec<usize>, val: Vec<usize>, test: Vec<usize>) -> Self {
        Self { train, val, test }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        let mut owner = vec![0u8; n_nodes];
        for (tag, ids) in [(1u8, &self.train), (2, &self.val), (3, &self.test)] {
            for &id in ids {
                if id >= n_nodes {
                    return Err(Error::NodeOutOfRange { id, n_nodes });
                }
                if owner[id] != 0 {
                    return Err(Error::InvalidSplit(format!(
                        "node {id} appears in more than one set"
                    )));
                }
                owner[id] = tag;
            }
        }
        Ok(())
    }

    /// Planetoid-style split: `per_class` training nodes of every class, then
    /// `n_val` validation and `n_test` test nodes, drawn from a seeded
    /// permutation of the node ids.
    pub fn per_class(
        labels: &[usize],
        per_class: usize,
        n_val: usize,
        n_test: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = labels.len();
        let order = permutation(n, seed);
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut taken = vec![0usize; n_classes];
        let mut in_train = vec![false; n];
        let mut train = Vec::new();
        for &node in &order {
            let c = labels[node];
            if taken[c] < per_class {
                taken[c] += 1;
                in_train[node] = true;
                train.push(node);
            }
        }
        let rest: Vec<usize> = order.into_iter().filter(|&v| !in_train[v]).collect();
        if rest.len() < n_val + n_test {
            return Err(Error::InvalidSplit(format!(
                "{} nodes left after training selection, need {} for val+test",
                rest.len(),
                n_val + n_test
            )));
        }
        let val = rest[..n_val].to_vec();
        let test = rest[n_val..n_val + n_test].to_vec();
        train.sort_unstable();
        let mut val = val;
        val.sort_unstable();
        let mut test = test;
        test.sort_unstable();
        Ok(Self { train, val, test })
    }

    /// Splits a seeded permutation by fractions; the remainder is the test set.
    pub fn fractions(n_nodes: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0) {
            return Err(Error::InvalidSplit(format!(
                "fractions train={train_frac} val={val_frac} must leave a test set"
            )));
        }
        let order = permutation(n_nodes, seed);
        let n_train = ((n_nodes as f64) * train_frac).round() as usize;
        let n_val = ((n_nodes as f64) * val_frac).round() as usize;
        let mut train = order[..n_train].to_vec();
        let mut val = order[n_train..n_train + n_val].to_vec();
        let mut test = order[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, val, test })
    }
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(seed);
    order.shuffle(rng.as_rng_core());
    order
}

/// Undirected, unweighted attributed graph.
///
/// The adjacency is symmetric CSR with sorted columns, values all 1 and no
/// diagonal entries. Features are stored sparse; featureless datasets use the
/// identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: CsrMatrix,
    features: CsrMatrix,
    labels: Vec<usize>,
    n_classes: usize,
    split: DataSplit,
}

/// Builds a graph from an undirected edge list.
///
/// Each pair is stored in both directions, duplicates collapse and self-loops
/// are dropped.
pub fn build_graph(
    edges: &[(usize, usize)],
    features: CsrMatrix,
    labels: Vec<usize>,
    split: DataSplit,
) -> Result<Graph> {
    let n = features.n_rows();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if labels.len() != n {
        return Err(Error::dims("labels vs feature rows", n, labels.len()));
    }
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edges {
        for id in [u, v] {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, n_nodes: n });
            }
        }
        if u != v {
            rows[u].push(v);
            rows[v].push(u);
        }
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    let adjacency = CsrMatrix::from_sorted_rows(n, &rows);
    Graph::from_parts(adjacency, features, labels, split)
}

impl Graph {
    /// Assembles a graph from an adjacency that already satisfies the
    /// structural invariants; they are checked here.
    pub fn from_parts(
        adjacency: CsrMatrix,
        features: CsrMatrix,
        labels: Vec<usize>,
        split: DataSplit,
    ) -> Result<Self> {
        let n = features.n_rows();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if adjacency.n_rows() != n || adjacency.n_cols() != n {
            return Err(Error::dims(
                "adjacency vs feature rows",
                format!("{n}x{n}"),
                format!("{}x{}", adjacency.n_rows(), adjacency.n_cols()),
            ));
        }
        if labels.len() != n {
            return Err(Error::dims("labels vs feature rows", n, labels.len()));
        }
        split.validate(n)?;
        for (r, c, v) in adjacency.iter() {
            if r == c {
                return Err(Error::InvalidArgument(format!(
                    "adjacency has diagonal entry at {r}"
                )));
            }
            if v != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "adjacency entry ({r},{c}) = {v}, expected 1"
                )));
            }
            if !adjacency.contains(c, r) {
                return Err(Error::InvalidArgument(format!(
                    "adjacency not symmetric at ({r},{c})"
                )));
            }
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Ok(Self {
            adjacency,
            features,
            labels,
            n_classes,
            split,
        })
    }

    /// Same features, labels and split with a new edge set.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Graph> {
        build_graph(
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.split.clone(),
        )
    }

    /// Same features, labels and split with a new (validated) adjacency.
    pub fn with_adjacency(&self, adjacency: CsrMatrix) -> Result<Graph> {
        Graph::from_parts(
            adjacency,
            self.features.clone(),
            self.labels.clone(),
            self.split.clone(),
        )
    }

    pub fn with_split(mut self, split: DataSplit) -> Result<Graph> {
        split.validate(self.n_nodes())?;
        self.split = split;
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &CsrMatrix {
        &self.features
    }

    pub fn has_identity_features(&self) -> bool {
        self.features.is_identity()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &DataSplit {
        &self.split
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.row_indices(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.row_nnz(v)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.contains(u, v)
    }

    /// Undirected edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .filter(|&(r, c, _)| r < c)
            .map(|(r, c, _)| (r, c))
            .collect()
    }

    pub fn density(&self) -> f64 {
        density(&self.adjacency)
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` for a symmetric adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    /// Normalizes any square symmetric binary adjacency without diagonal.
    pub fn from_adjacency(adjacency: &CsrMatrix) -> Self {
        let n = adjacency.n_rows();
        let inv_sqrt_deg: Vec<f64> = (0..n)
            .map(|i| 1.0 / ((adjacency.row_nnz(i) + 1) as f64).sqrt())
            .collect();
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(adjacency.nnz() + n);
        let mut values = Vec::with_capacity(adjacency.nnz() + n);
        for i in 0..n {
            let mut self_done = false;
            for &j in adjacency.row_indices(i) {
                if !self_done && j > i {
                    indices.push(i);
                    values.push(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
                    self_done = true;
                }
                indices.push(j);
                values.push(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
            }
            if !self_done {
                indices.push(i);
                values.push(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
            }
            indptr.push(indices.len());
        }
        let matrix =
            CsrMatrix::new(n, n, indptr, indices, values).expect("pattern of A + I is valid CSR");
        Self { matrix }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
}

impl std::ops::Deref for NormalizedAdjacency {
    type Target = CsrMatrix;

    fn deref(&self) -> &CsrMatrix {
        &self.matrix
    }
}

pub fn normalize_adjacency(graph: &Graph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_adjacency(graph.adjacency())
}

/// Fraction of stored entries, `nnz / N²`.
pub fn density(adjacency: &CsrMatrix) -> f64 {
    let cells = adjacency.n_rows() as f64 * adjacency.n_cols() as f64;
    if cells == 0.0 {
        0.0
    } else {
        adjacency.nnz() as f64 / cells
    }
}

/// Jaccard similarity of the nonzero supports of two equal-length vectors.
/// Two empty supports give 0.
pub fn jaccard_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("jaccard vectors", a.len(), b.len()));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let (in_a, in_b) = (x != 0.0, y != 0.0);
        inter += usize::from(in_a && in_b);
        union += usize::from(in_a || in_b);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Jaccard similarity of two sorted support lists.
pub fn jaccard_sorted(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare(n: usize, edges: &[(usize, usize)]) -> Graph {
        build_graph(
            edges,
            CsrMatrix::identity(n),
            vec![0; n],
            DataSplit::default(),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_closure_dedup_and_self_loops() {
        let g = bare(2, &[(0, 1)]);
        assert_eq!(g.adjacency().nnz(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        let h = bare(2, &[(0, 1), (1, 0), (0, 0)]);
        assert_eq!(g, h);
    }

    #[test]
    fn build_errors() {
        let feats = CsrMatrix::identity(3);
        assert!(matches!(
            build_graph(&[(0, 5)], feats.clone(), vec![0; 3], DataSplit::default()),
            Err(Error::NodeOutOfRange { id: 5, .. })
        ));
        assert!(matches!(
            build_graph(&[], feats.clone(), vec![0; 2], DataSplit::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            build_graph(&[], CsrMatrix::zeros(0, 4), vec![], DataSplit::default()),
            Err(Error::EmptyGraph)
        ));
        let bad_split = DataSplit::new(vec![0], vec![0], vec![]);
        assert!(build_graph(&[], feats, vec![0; 3], bad_split).is_err());
    }

    #[test]
    fn normalization_closed_forms() {
        let single = normalize_adjacency(&bare(1, &[]));
        assert_eq!(single.to_dense().data(), &[1.0]);

        let pair = normalize_adjacency(&bare(2, &[(0, 1)]));
        for &v in pair.to_dense().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }

        let star = normalize_adjacency(&bare(4, &[(0, 1), (0, 2), (0, 3)]));
        let expected = 1.0 / 8f64.sqrt();
        for leaf in 1..4 {
            assert!((star.get(0, leaf) - expected).abs() < 1e-15);
            assert!((star.get(leaf, 0) - expected).abs() < 1e-15);
        }
        assert!((star.get(0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn density_cases() {
        assert_eq!(density(&CsrMatrix::zeros(5, 5)), 0.0);
        assert_eq!(bare(2, &[(0, 1)]).density(), 0.5);
    }

    #[test]
    fn jaccard_cases() {
        let a = [0.0, 1.0, 1.0, 1.0, 0.0];
        let b = [0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(jaccard_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard_similarity(&a, &b).unwrap(), 0.5);
        assert_eq!(jaccard_similarity(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(jaccard_similarity(&[0.0; 3], &[0.0; 3]).unwrap(), 0.0);
        assert!(jaccard_similarity(&[1.0], &[1.0, 0.0]).is_err());
        assert_eq!(jaccard_sorted(&[1, 2, 3], &[2, 3, 4]), 0.5);
    }

    #[test]
    fn per_class_split_shapes() {
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let s = DataSplit::per_class(&labels, 20, 50, 100, 0).unwrap();
        assert_eq!(s.train.len(), 60);
        assert_eq!(s.val.len(), 50);
        assert_eq!(s.test.len(), 100);
        s.validate(300).unwrap();
        for c in 0..3 {
            assert_eq!(s.train.iter().filter(|&&v| labels[v] == c).count(), 20);
        }
        assert_eq!(s, DataSplit::per_class(&labels, 20, 50, 100, 0).unwrap());
    }
}
