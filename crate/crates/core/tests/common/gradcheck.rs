//! Central finite differences against the analytic backward passes.
//!
//! Each suite evaluates its loss through a dense re-implementation in
//! [`super::dense`], perturbs one coordinate at a time by `±H`, and compares
//! with the gradient the library accumulated.

use super::dense::{self, Mat};
use vgae_defense::gcn::GcnModel;
use vgae_defense::nn::{
    masked_cross_entropy, relu_backward, spmm, spmm_transposed, Rng, Tensor, SIGMOID_EPS,
};
use vgae_defense::vgae::{reconstruction_target, VgaeModel};
use vgae_defense::{build_graph, normalize_adjacency, CsrMatrix, DataSplit};

pub const H: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Below this magnitude both gradients count as zero and the difference is
/// compared absolutely.
const FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: &'static str,
    pub coords: usize,
    pub max_rel_err: f64,
}

impl GradReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            coords: 0,
            max_rel_err: 0.0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(FLOOR);
        self.max_rel_err = self.max_rel_err.max((analytic - numeric).abs() / denom);
        self.coords += 1;
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

fn central(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

/// Checks every coordinate of `param` with `loss` evaluated at the perturbed
/// matrix.
fn check_matrix(
    report: &mut GradReport,
    param: &Mat,
    analytic: &Tensor,
    mut loss: impl FnMut(&Mat) -> f64,
) {
    let mut p = param.clone();
    for i in 0..p.len() {
        for j in 0..p[i].len() {
            let x0 = p[i][j];
            let numeric = central(
                |x| {
                    p[i][j] = x;
                    loss(&p)
                },
                x0,
            );
            p[i][j] = x0;
            report.record(analytic.get(i, j), numeric);
        }
    }
}

fn oracle_cross_entropy(logits: &Mat, labels: &[usize], mask: &[usize]) -> f64 {
    let mut total = 0.0;
    for &v in mask {
        let row = &logits[v];
        let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
        total += lse - row[labels[v]];
    }
    total / mask.len() as f64
}

/// Cross-entropy, ReLU and sparse-product backward rules on random inputs.
pub fn ops_suite(seeds: std::ops::Range<u64>) -> Vec<GradReport> {
    let mut ce = GradReport::new("masked cross-entropy");
    let mut relu = GradReport::new("relu");
    let mut sp = GradReport::new("spmm");
    for seed in seeds {
        let mut rng = Rng::new(seed);
        let logits = dense::random_mat(5, 3, 2.0, &mut rng);
        let labels: Vec<usize> = (0..5).map(|_| rng.below(3)).collect();
        let mask = vec![0, 2, 3, 4];
        let (_, grad) = masked_cross_entropy(&dense::to_tensor(&logits), &labels, &mask).unwrap();
        check_matrix(&mut ce, &logits, &grad, |l| {
            oracle_cross_entropy(l, &labels, &mask)
        });

        // keep inputs away from the kink so central differences are valid
        let x: Mat = dense::random_mat(6, 4, 1.0, &mut rng)
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
                    .collect()
            })
            .collect();
        let upstream = dense::random_mat(6, 4, 1.0, &mut rng);
        let g = relu_backward(&dense::to_tensor(&x), &dense::to_tensor(&upstream)).unwrap();
        check_matrix(&mut relu, &x, &g, |x| {
            dense::relu(x)
                .iter()
                .flatten()
                .zip(upstream.iter().flatten())
                .map(|(a, b)| a * b)
                .sum()
        });

        // d/dB Σ G ⊙ (S B) = Sᵀ G
        let s_dense: Mat = dense::random_mat(7, 5, 1.0, &mut rng)
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| if v.abs() < 0.4 { 0.0 } else { v })
                    .collect()
            })
            .collect();
        let s = CsrMatrix::from_dense(&dense::to_tensor(&s_dense));
        let b = dense::random_mat(5, 3, 1.0, &mut rng);
        let g_up = dense::random_mat(7, 3, 1.0, &mut rng);
        let analytic = spmm_transposed(&s, &dense::to_tensor(&g_up)).unwrap();
        check_matrix(&mut sp, &b, &analytic, |b| {
            let prod = spmm(&s, &dense::to_tensor(b)).unwrap();
            dense::from_tensor(&prod)
                .iter()
                .flatten()
                .zip(g_up.iter().flatten())
                .map(|(a, b)| a * b)
                .sum()
        });
    }
    vec![ce, relu, sp]
}

/// Masked cross-entropy plus weight decay of the full two-layer GCN
/// (N=6, D=4, H=3, C=2) with respect to both weight matrices.
pub fn gcn_suite(seeds: std::ops::Range<u64>) -> Vec<GradReport> {
    const WD: f64 = 5e-4;
    let mut r0 = GradReport::new("gcn W0");
    let mut r1 = GradReport::new("gcn W1");
    for seed in seeds {
        let mut rng = Rng::new(1000 + seed);
        let (n, d, h, c) = (6, 4, 3, 2);
        let x = dense::random_mat(n, d, 1.0, &mut rng);
        let labels: Vec<usize> = (0..n).map(|v| v % c).collect();
        let mut edges = dense::random_edges(n, 0.4, &mut rng);
        edges.push((0, 5));
        let features = CsrMatrix::from_dense(&dense::to_tensor(&x));
        let g = build_graph(
            &edges,
            features.clone(),
            labels.clone(),
            DataSplit::default(),
        )
        .unwrap();
        let a = dense::graph_a_hat(&g);
        let w0 = dense::random_mat(d, h, 0.8, &mut rng);
        let w1 = dense::random_mat(h, c, 0.8, &mut rng);
        let mask = vec![0, 1, 3, 4];

        let mut model =
            GcnModel::from_weights(dense::to_tensor(&w0), dense::to_tensor(&w1)).unwrap();
        model
            .loss_and_grad(&normalize_adjacency(&g), &features, &labels, &mask, WD)
            .unwrap();

        let loss = |w0: &Mat, w1: &Mat| {
            let hidden = dense::relu(&dense::matmul(&a, &dense::matmul(&x, w0)));
            let logits = dense::matmul(&a, &dense::matmul(&hidden, w1));
            let decay: f64 = w0.iter().flatten().map(|w| w * w).sum();
            oracle_cross_entropy(&logits, &labels, &mask) + 0.5 * WD * decay
        };
        check_matrix(&mut r0, &w0, &model.w0.grad, |w| loss(w, &w1));
        check_matrix(&mut r1, &w1, &model.w1.grad, |w| loss(&w0, w));
    }
    vec![r0, r1]
}

pub struct VgaeOracleInput<'a> {
    pub a_hat: &'a Mat,
    pub x: &'a Mat,
    pub target: &'a Mat,
    pub noise: &'a Mat,
}

/// Weighted reconstruction plus KL, written out term by term.
pub fn vgae_oracle_loss(inp: &VgaeOracleInput, w0: &Mat, w_mu: &Mat, w_sigma: &Mat) -> f64 {
    let n = inp.x.len();
    let hidden = dense::relu(&dense::matmul(inp.a_hat, &dense::matmul(inp.x, w0)));
    let prop = dense::matmul(inp.a_hat, &hidden);
    let mu = dense::matmul(&prop, w_mu);
    let ls = dense::matmul(&prop, w_sigma);
    let f = mu[0].len();
    let z: Mat = (0..n)
        .map(|i| {
            (0..f)
                .map(|k| mu[i][k] + ls[i][k].exp() * inp.noise[i][k])
                .collect()
        })
        .collect();
    let nnz: f64 = inp.target.iter().flatten().filter(|&&t| t != 0.0).count() as f64;
    let n2 = (n * n) as f64;
    let lambda = (n2 - nnz) / nnz;
    let norm = n2 / (2.0 * (n2 - nnz));
    let mut recon = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..f).map(|k| z[i][k] * z[j][k]).sum();
            let p = (1.0 / (1.0 + (-s).exp())).clamp(SIGMOID_EPS, 1.0 - SIGMOID_EPS);
            let t = inp.target[i][j];
            recon -= lambda * t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        }
    }
    recon /= n2;
    let mut kl = 0.0;
    for i in 0..n {
        for k in 0..f {
            let s = ls[i][k].exp();
            kl += 0.5 * (mu[i][k] * mu[i][k] + s * s - 2.0 * ls[i][k] - 1.0);
        }
    }
    kl /= n as f64;
    norm * recon + kl / n as f64
}

/// Whole-VGAE check on N=5, D=3, H=4, F=2 with frozen noise. Also returns the
/// largest gap between the library loss and the oracle loss.
pub fn vgae_suite(seeds: std::ops::Range<u64>) -> (Vec<GradReport>, f64) {
    let mut r0 = GradReport::new("vgae W0");
    let mut rm = GradReport::new("vgae W_mu");
    let mut rs = GradReport::new("vgae W_sigma");
    let mut loss_gap: f64 = 0.0;
    for seed in seeds {
        let mut rng = Rng::new(2000 + seed);
        let (n, d, h, f) = (5, 3, 4, 2);
        let x = dense::random_mat(n, d, 1.0, &mut rng);
        let mut edges = dense::random_edges(n, 0.4, &mut rng);
        edges.push((1, 2));
        let features = CsrMatrix::from_dense(&dense::to_tensor(&x));
        let g = build_graph(&edges, features.clone(), vec![0; n], DataSplit::default()).unwrap();
        let a_hat = dense::graph_a_hat(&g);
        let target_csr = reconstruction_target(g.adjacency());
        let target = dense::from_csr(&target_csr);
        let noise: Mat = (0..n)
            .map(|_| (0..f).map(|_| rng.normal()).collect())
            .collect();
        let w0 = dense::random_mat(d, h, 0.9, &mut rng);
        let w_mu = dense::random_mat(h, f, 0.9, &mut rng);
        let w_sigma = dense::random_mat(h, f, 0.5, &mut rng);

        let mut model = VgaeModel::from_weights(
            dense::to_tensor(&w0),
            dense::to_tensor(&w_mu),
            dense::to_tensor(&w_sigma),
        )
        .unwrap();
        let lib = model
            .loss_and_grad(
                &normalize_adjacency(&g),
                &features,
                &target_csr,
                &dense::to_tensor(&noise),
            )
            .unwrap();
        let inp = VgaeOracleInput {
            a_hat: &a_hat,
            x: &x,
            target: &target,
            noise: &noise,
        };
        loss_gap = loss_gap.max((lib.total - vgae_oracle_loss(&inp, &w0, &w_mu, &w_sigma)).abs());
        check_matrix(&mut r0, &w0, &model.w0.grad, |w| {
            vgae_oracle_loss(&inp, w, &w_mu, &w_sigma)
        });
        check_matrix(&mut rm, &w_mu, &model.w_mu.grad, |w| {
            vgae_oracle_loss(&inp, &w0, w, &w_sigma)
        });
        check_matrix(&mut rs, &w_sigma, &model.w_sigma.grad, |w| {
            vgae_oracle_loss(&inp, &w0, &w_mu, w)
        });
    }
    (vec![r0, rm, rs], loss_gap)
}
