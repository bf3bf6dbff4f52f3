//! Truncated SVD by randomized subspace iteration, with a dense path for
//! small matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::sparse::CsrMatrix;

/// Matrices that can be multiplied against a dense block from either side.
pub trait LinearOperator {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// `self · m`
    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64>;
    /// `selfᵀ · m`
    fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64>;
    fn to_dense(&self) -> DMatrix<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn n_rows(&self) -> usize {
        self.nrows()
    }

    fn n_cols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self * m
    }

    fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(m)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

impl LinearOperator for CsrMatrix {
    fn n_rows(&self) -> usize {
        CsrMatrix::n_rows(self)
    }

    fn n_cols(&self) -> usize {
        CsrMatrix::n_cols(self)
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(CsrMatrix::n_rows(self), m.ncols());
        for (r, c, v) in self.iter() {
            for k in 0..m.ncols() {
                out[(r, k)] += v * m[(c, k)];
            }
        }
        out
    }

    fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(CsrMatrix::n_cols(self), m.ncols());
        for (r, c, v) in self.iter() {
            for k in 0..m.ncols() {
                out[(c, k)] += v * m[(r, k)];
            }
        }
        out
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(CsrMatrix::n_rows(self), CsrMatrix::n_cols(self));
        for (r, c, v) in self.iter() {
            out[(r, c)] = v;
        }
        out
    }
}

/// Rank-`k` factors `U diag(s) Vᵀ`, singular values descending.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Dense `U diag(s) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (k, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(k).scale_mut(s);
        }
        us * self.v.transpose()
    }

    /// Entry `(i, j)` of the low-rank reconstruction.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.singular_values
            .iter()
            .enumerate()
            .map(|(k, &s)| self.u[(i, k)] * s * self.v[(j, k)])
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdOptions {
    pub oversampling: usize,
    /// Subspace iterations always run.
    pub power_iterations: usize,
    /// Further iterations continue until no leading singular value moves by
    /// more than `tolerance · s₁`, up to this many in total.
    pub max_power_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Matrices with at most this many rows and columns use a dense SVD.
    pub dense_cutoff: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            oversampling: 10,
            power_iterations: 4,
            max_power_iterations: 200,
            tolerance: 1e-12,
            seed: 0,
            dense_cutoff: 200,
        }
    }
}

fn check_rank(a: &dyn LinearOperator, rank: usize) -> Result<()> {
    let max_rank = a.n_rows().min(a.n_cols());
    if rank == 0 || rank > max_rank {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={max_rank}"
        )));
    }
    Ok(())
}

/// Rank-`rank` SVD, choosing the dense route for small inputs.
pub fn truncated_svd<A: LinearOperator>(
    a: &A,
    rank: usize,
    opts: &SvdOptions,
) -> Result<TruncatedSvd> {
    check_rank(a, rank)?;
    if a.n_rows().max(a.n_cols()) <= opts.dense_cutoff {
        dense_truncated_svd(a, rank)
    } else {
        randomized_svd(a, rank, opts)
    }
}

pub fn dense_truncated_svd<A: LinearOperator>(a: &A, rank: usize) -> Result<TruncatedSvd> {
    check_rank(a, rank)?;
    let svd = a.to_dense().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y]
            .total_cmp(&svd.singular_values[x])
            .then(x.cmp(&y))
    });
    order.truncate(rank);
    Ok(TruncatedSvd {
        u: u.select_columns(&order),
        singular_values: order.iter().map(|&k| svd.singular_values[k]).collect(),
        v: v_t.select_rows(&order).transpose(),
    })
}

/// Randomized range finder with subspace (power) iterations, then an exact
/// SVD of the projected block.
pub fn randomized_svd<A: LinearOperator>(
    a: &A,
    rank: usize,
    opts: &SvdOptions,
) -> Result<TruncatedSvd> {
    check_rank(a, rank)?;
    let (m, n) = (a.n_rows(), a.n_cols());
    let width = (rank + opts.oversampling).min(m.min(n));
    let mut rng = Rng::derive(opts.seed, "randomized-svd");
    let omega = DMatrix::from_fn(n, width, |_, _| rng.normal());
    let mut q = orthonormal_basis(a.apply(&omega));
    let mut previous: Option<Vec<f64>> = None;
    for iteration in 0..opts.max_power_iterations.max(opts.power_iterations) {
        let w = orthonormal_basis(a.apply_transpose(&q));
        q = orthonormal_basis(a.apply(&w));
        if iteration + 1 < opts.power_iterations {
            continue;
        }
        let current = projected_svd(a, &q, rank)?.singular_values;
        let scale = current
            .first()
            .copied()
            .unwrap_or(0.0)
            .max(f64::MIN_POSITIVE);
        let settled = previous.as_ref().is_some_and(|p: &Vec<f64>| {
            p.iter()
                .zip(&current)
                .all(|(x, y)| (x - y).abs() <= opts.tolerance * scale)
        });
        if settled {
            log::trace!("subspace iteration settled after {} passes", iteration + 1);
            break;
        }
        previous = Some(current);
    }
    projected_svd(a, &q, rank)
}

/// Rank-`rank` SVD of `A` restricted to the range of `q`.
fn projected_svd<A: LinearOperator>(a: &A, q: &DMatrix<f64>, rank: usize) -> Result<TruncatedSvd> {
    // B = Qᵀ A, formed as (Aᵀ Q)ᵀ
    let b = a.apply_transpose(q).transpose();
    let small = dense_truncated_svd(&b, rank.min(b.nrows()))?;
    Ok(TruncatedSvd {
        u: q * small.u,
        singular_values: small.singular_values,
        v: small.v,
    })
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}
