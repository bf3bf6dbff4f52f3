use vgae_defense::nn::{Rng, Tensor};
use vgae_defense::{CsrMatrix, Graph};

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(n, m);
    for i in 0..n {
        for p in 0..k {
            for j in 0..m {
                out[i][j] += a[i][p] * b[p][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a.first().map_or(0, Vec::len));
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn relu(a: &Mat) -> Mat {
    a.iter()
        .map(|r| r.iter().map(|v| v.max(0.0)).collect())
        .collect()
}

pub fn from_tensor(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn to_tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m)
}

pub fn from_csr(s: &CsrMatrix) -> Mat {
    let mut out = zeros(s.n_rows(), s.n_cols());
    for (r, c, v) in s.iter() {
        out[r][c] = v;
    }
    out
}

/// `D^{-1/2} (A + I) D^{-1/2}` computed densely.
pub fn normalized_adjacency(adj: &Mat) -> Mat {
    let n = adj.len();
    let mut a = adj.clone();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect()
}

pub fn graph_a_hat(g: &Graph) -> Mat {
    normalized_adjacency(&from_csr(g.adjacency()))
}

pub fn random_mat(r: usize, c: usize, scale: f64, rng: &mut Rng) -> Mat {
    (0..r)
        .map(|_| (0..c).map(|_| scale * rng.uniform(-1.0, 1.0)).collect())
        .collect()
}

pub fn random_symmetric(n: usize, rng: &mut Rng) -> Mat {
    let mut m = zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.uniform(-1.0, 1.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Random undirected edges with probability `p`, no self-loops.
pub fn random_edges(n: usize, p: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}
