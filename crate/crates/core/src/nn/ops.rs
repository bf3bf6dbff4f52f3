//! Forward kernels and their hand-written backward counterparts.
//!
//! Every reduction runs in a fixed order (row-major, ascending column), so
//! results are bit-reproducible for a given input.

use super::{Rng, Tensor};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Clamp applied to sigmoid outputs so `log(p)` and `log(1 - p)` stay finite.
pub const SIGMOID_EPS: f64 = 1e-7;

/// Sparse-dense product `a · b`.
pub fn spmm(a: &CsrMatrix, b: &Tensor) -> Result<Tensor> {
    if a.n_cols() != b.rows() {
        return Err(Error::dims("spmm inner", a.n_cols(), b.rows()));
    }
    let mut out = Tensor::zeros(a.n_rows(), b.cols());
    for r in 0..a.n_rows() {
        let out_row = out.row_mut(r);
        for (&c, &v) in a.row_indices(r).iter().zip(a.row_values(r)) {
            for (o, &x) in out_row.iter_mut().zip(b.row(c)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// Transposed sparse-dense product `aᵀ · b`, without materializing `aᵀ`.
pub fn spmm_transposed(a: &CsrMatrix, b: &Tensor) -> Result<Tensor> {
    if a.n_rows() != b.rows() {
        return Err(Error::dims("spmm_transposed rows", a.n_rows(), b.rows()));
    }
    let mut out = Tensor::zeros(a.n_cols(), b.cols());
    for r in 0..a.n_rows() {
        let b_row = b.row(r);
        for (&c, &v) in a.row_indices(r).iter().zip(a.row_values(r)) {
            for (o, &x) in out.row_mut(c).iter_mut().zip(b_row) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes `upstream` through where `x > 0`, zero elsewhere.
pub fn relu_backward(x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    x.check_same_shape(upstream, "relu_backward")?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&xi, &g)| if xi > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.rows(), x.cols(), data)
}

pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Logistic function clamped to `[SIGMOID_EPS, 1 - SIGMOID_EPS]`.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_EPS, 1.0 - SIGMOID_EPS)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Mean negative log-likelihood over `mask`, with its gradient w.r.t. `logits`.
///
/// The loss goes through a fused log-softmax; the gradient is
/// `(softmax - onehot) / |mask|` on masked rows and zero elsewhere.
pub fn masked_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    mask: &[usize],
) -> Result<(f64, Tensor)> {
    if mask.is_empty() {
        return Err(Error::EmptyNodeSet("cross-entropy mask"));
    }
    if labels.len() != logits.rows() {
        return Err(Error::dims(
            "cross-entropy labels",
            logits.rows(),
            labels.len(),
        ));
    }
    let classes = logits.cols();
    let scale = 1.0 / mask.len() as f64;
    let mut grad = Tensor::zeros(logits.rows(), classes);
    let mut loss = 0.0;
    for &node in mask {
        if node >= logits.rows() {
            return Err(Error::NodeOutOfRange {
                id: node,
                n_nodes: logits.rows(),
            });
        }
        let label = labels[node];
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} of node {node} exceeds class count {classes}"
            )));
        }
        let row = logits.row(node);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + total.ln();
        loss -= row[label] - lse;
        let g = grad.row_mut(node);
        for (c, gc) in g.iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            *gc = (p - if c == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss * scale, grad))
}

/// Uniform Glorot initialization in `±sqrt(6 / (rows + cols))`.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.uniform(-bound, bound))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmm_small_cases() {
        let i = CsrMatrix::identity(3);
        let b = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(spmm(&i, &b).unwrap(), b);

        let half = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)],
        )
        .unwrap();
        let col = Tensor::from_rows(&[[1.0], [3.0]]);
        assert_eq!(
            spmm(&half, &col).unwrap(),
            Tensor::from_rows(&[[2.0], [2.0]])
        );

        let z = CsrMatrix::zeros(3, 3);
        assert_eq!(spmm(&z, &b).unwrap(), Tensor::zeros(3, 2));
        assert!(spmm(&z, &Tensor::zeros(2, 2)).is_err());
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::from_rows(&[[-1.0, 2.0]]);
        assert_eq!(relu(&x), Tensor::from_rows(&[[0.0, 2.0]]));
        assert_eq!(relu(&relu(&x)), relu(&x));
        let up = Tensor::from_rows(&[[5.0, 5.0]]);
        assert_eq!(
            relu_backward(&x, &up).unwrap(),
            Tensor::from_rows(&[[0.0, 5.0]])
        );
    }

    #[test]
    fn softmax_closed_forms() {
        let eq = softmax_rows(&Tensor::full(1, 4, 0.3));
        for &v in eq.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let s = softmax_rows(&Tensor::from_rows(&[[0.0, 3f64.ln()]]));
        assert!((s.get(0, 0) - 0.25).abs() < 1e-12);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_contract() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        for x in [-3.0, -0.1, 0.7, 12.0] {
            assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() < 1e-12);
        }
        assert_eq!(sigmoid_scalar(1e3), 1.0 - SIGMOID_EPS);
        assert_eq!(sigmoid_scalar(-1e3), SIGMOID_EPS);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let uniform = Tensor::zeros(3, 5);
        let (loss, _) = masked_cross_entropy(&uniform, &[0, 1, 4], &[0, 1, 2]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);

        let confident = Tensor::from_rows(&[[50.0, 0.0], [0.0, 50.0]]);
        let (loss, _) = masked_cross_entropy(&confident, &[0, 1], &[0, 1]).unwrap();
        assert!(loss < 1e-15);

        assert!(masked_cross_entropy(&uniform, &[0, 0, 0], &[]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_zero_off_mask() {
        let logits = Tensor::from_rows(&[[1.0, 2.0], [0.5, -0.5], [3.0, 0.0]]);
        let (_, g) = masked_cross_entropy(&logits, &[1, 0, 0], &[0, 2]).unwrap();
        assert_eq!(g.row(1), &[0.0, 0.0]);
        // rows of (softmax - onehot) sum to zero
        assert!((g.row(0).iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let mut rng = Rng::new(3);
        let t = glorot_init(40, 25, &mut rng);
        let bound = (6.0f64 / 65.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        assert_eq!(t, glorot_init(40, 25, &mut Rng::new(3)));
    }
}
