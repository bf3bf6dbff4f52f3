//! Variational graph autoencoder.
//!
//! Encoder: a two-layer GCN with a shared first layer,
//! `mu = Â ReLU(Â X W0) W_mu` and `log_sigma = Â ReLU(Â X W0) W_sigma`.
//! Decoder: `sigmoid(Z Zᵀ)`.
//!
//! Training minimizes `norm · reconstruction + kl / N`, where the
//! reconstruction is the positive-reweighted binary cross-entropy against
//! `A + I` averaged over all `N²` entries, and the KL term is the closed form
//! `(1/N) Σ ½(μ² + σ² − 2 log σ − 1)` against a standard normal prior.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::Checkpoint;
use crate::graph::{normalize_adjacency, Graph, NormalizedAdjacency};
use crate::nn::{
    dot, glorot_init, relu, relu_backward, sigmoid_scalar, spmm, spmm_transposed, AdamConfig,
    Parameter, Rng, Tensor, SIGMOID_EPS,
};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VgaeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

impl Default for VgaeConfig {
    fn default() -> Self {
        Self {
            epochs: 250,
            lr: 0.001,
            hidden_dim: 32,
            latent_dim: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VgaeModel {
    pub w0: Parameter,
    pub w_mu: Parameter,
    pub w_sigma: Parameter,
}

/// Posterior sample with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub mu: Tensor,
    pub log_sigma: Tensor,
    pub z: Tensor,
    pub noise: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgaeLoss {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
    pub pos_weight: f64,
    pub norm: f64,
}

#[derive(Debug, Clone)]
struct EncoderActivations {
    pre_activation: Tensor,
    /// `Â · ReLU(Â X W0)`
    propagated: Tensor,
    mu: Tensor,
    log_sigma: Tensor,
}

impl VgaeModel {
    pub fn new(n_features: usize, hidden_dim: usize, latent_dim: usize, rng: &mut Rng) -> Self {
        Self {
            w0: Parameter::new(glorot_init(n_features, hidden_dim, rng)),
            w_mu: Parameter::new(glorot_init(hidden_dim, latent_dim, rng)),
            w_sigma: Parameter::new(glorot_init(hidden_dim, latent_dim, rng)),
        }
    }

    pub fn from_weights(w0: Tensor, w_mu: Tensor, w_sigma: Tensor) -> Result<Self> {
        if w_mu.shape() != w_sigma.shape() {
            return Err(Error::dims(
                "vgae head shapes",
                format!("{:?}", w_mu.shape()),
                format!("{:?}", w_sigma.shape()),
            ));
        }
        if w0.cols() != w_mu.rows() {
            return Err(Error::dims("vgae hidden width", w0.cols(), w_mu.rows()));
        }
        Ok(Self {
            w0: Parameter::new(w0),
            w_mu: Parameter::new(w_mu),
            w_sigma: Parameter::new(w_sigma),
        })
    }

    pub fn n_features(&self) -> usize {
        self.w0.value.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0.value.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_mu.value.cols()
    }

    fn encode_full(
        &self,
        a_hat: &NormalizedAdjacency,
        x: &CsrMatrix,
    ) -> Result<EncoderActivations> {
        if x.n_cols() != self.n_features() {
            return Err(Error::dims(
                "vgae feature width",
                self.n_features(),
                x.n_cols(),
            ));
        }
        if a_hat.n_cols() != x.n_rows() {
            return Err(Error::dims(
                "vgae adjacency vs features",
                x.n_rows(),
                a_hat.n_cols(),
            ));
        }
        let xw = spmm(x, &self.w0.value)?;
        let pre_activation = spmm(a_hat, &xw)?;
        let propagated = spmm(a_hat, &relu(&pre_activation))?;
        let mu = propagated.matmul(&self.w_mu.value)?;
        let log_sigma = propagated.matmul(&self.w_sigma.value)?;
        Ok(EncoderActivations {
            pre_activation,
            propagated,
            mu,
            log_sigma,
        })
    }

    /// Backpropagates `(d_mu, d_log_sigma)` into the three weight gradients.
    fn encoder_backward(
        &mut self,
        a_hat: &NormalizedAdjacency,
        x: &CsrMatrix,
        acts: &EncoderActivations,
        d_mu: &Tensor,
        d_log_sigma: &Tensor,
    ) -> Result<()> {
        let d_w_mu = acts.propagated.t_matmul(d_mu)?;
        let d_w_sigma = acts.propagated.t_matmul(d_log_sigma)?;
        let mut d_propagated = d_mu.matmul_t(&self.w_mu.value)?;
        d_propagated.add_assign(&d_log_sigma.matmul_t(&self.w_sigma.value)?)?;
        let d_hidden = spmm(a_hat, &d_propagated)?;
        let d_pre = relu_backward(&acts.pre_activation, &d_hidden)?;
        let d_xw = spmm(a_hat, &d_pre)?;
        let d_w0 = spmm_transposed(x, &d_xw)?;
        self.w0.grad.add_assign(&d_w0)?;
        self.w_mu.grad.add_assign(&d_w_mu)?;
        self.w_sigma.grad.add_assign(&d_w_sigma)?;
        Ok(())
    }

    /// Loss for a fixed noise draw, accumulating gradients into all weights.
    ///
    /// The decoder and reconstruction loss are fused row by row over the upper
    /// triangle, so no `N × N` matrix is allocated.
    pub fn loss_and_grad(
        &mut self,
        a_hat: &NormalizedAdjacency,
        x: &CsrMatrix,
        target: &CsrMatrix,
        noise: &Tensor,
    ) -> Result<VgaeLoss> {
        let acts = self.encode_full(a_hat, x)?;
        acts.mu.check_same_shape(noise, "vgae noise")?;
        let sigma = acts.log_sigma.map(f64::exp);
        let mut z = acts.mu.clone();
        for ((zi, &s), &e) in z.data_mut().iter_mut().zip(sigma.data()).zip(noise.data()) {
            *zi += s * e;
        }

        let weights = ReconstructionWeights::for_target(target, z.rows())?;
        let n = z.rows() as f64;
        let n2 = n * n;
        // d(total)/d(logit) = norm / N² · d(entry loss)/d(logit)
        let grad_scale = weights.norm / n2;
        let (recon_sum, d_z) = fused_reconstruction(&z, target, weights.pos_weight, grad_scale);
        let reconstruction = recon_sum / n2;

        let mut kl_sum = 0.0;
        let mut d_mu = d_z.clone();
        let mut d_log_sigma = Tensor::zeros(z.rows(), z.cols());
        for i in 0..acts.mu.len() {
            let m = acts.mu.data()[i];
            let ls = acts.log_sigma.data()[i];
            let s = sigma.data()[i];
            kl_sum += 0.5 * (m * m + s * s - 2.0 * ls - 1.0);
            d_mu.data_mut()[i] += m / n2;
            d_log_sigma.data_mut()[i] = d_z.data()[i] * s * noise.data()[i] + (s * s - 1.0) / n2;
        }
        let kl = kl_sum / n;
        let loss = VgaeLoss {
            reconstruction,
            kl,
            total: weights.norm * reconstruction + kl / n,
            pos_weight: weights.pos_weight,
            norm: weights.norm,
        };
        self.encoder_backward(a_hat, x, &acts, &d_mu, &d_log_sigma)?;
        Ok(loss)
    }

    pub fn zero_grad(&mut self) {
        self.w0.zero_grad();
        self.w_mu.zero_grad();
        self.w_sigma.zero_grad();
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            kind: "vgae".into(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&ckpt)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint<VgaeModel> = serde_json::from_str(&text)?;
        if ckpt.kind != "vgae" {
            return Err(Error::InvalidArgument(format!(
                "checkpoint kind {:?}, expected \"vgae\"",
                ckpt.kind
            )));
        }
        let m = ckpt.model;
        Self::from_weights(m.w0.value, m.w_mu.value, m.w_sigma.value)
    }
}

/// Posterior parameters `(mu, log_sigma)` for every node.
pub fn encode(
    model: &VgaeModel,
    a_hat: &NormalizedAdjacency,
    x: &CsrMatrix,
) -> Result<(Tensor, Tensor)> {
    let acts = model.encode_full(a_hat, x)?;
    Ok((acts.mu, acts.log_sigma))
}

/// Draws `z = mu + exp(log_sigma) ⊙ ε` with `ε ~ N(0, 1)`.
pub fn reparameterize(mu: &Tensor, log_sigma: &Tensor, rng: &mut Rng) -> Result<LatentState> {
    mu.check_same_shape(log_sigma, "reparameterize")?;
    let noise_data = (0..mu.len()).map(|_| rng.normal()).collect();
    let noise = Tensor::from_vec(mu.rows(), mu.cols(), noise_data)?;
    let mut z = mu.clone();
    for ((zi, &ls), &e) in z
        .data_mut()
        .iter_mut()
        .zip(log_sigma.data())
        .zip(noise.data())
    {
        *zi += ls.exp() * e;
    }
    Ok(LatentState {
        mu: mu.clone(),
        log_sigma: log_sigma.clone(),
        z,
        noise,
    })
}

/// Edge probabilities `sigmoid(Z Zᵀ)`, clamped away from 0 and 1.
pub fn decode(z: &Tensor) -> Tensor {
    let n = z.rows();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let p = sigmoid_scalar(dot(z.row(i), z.row(j)));
            out.set(i, j, p);
            out.set(j, i, p);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct ReconstructionWeights {
    pos_weight: f64,
    norm: f64,
}

impl ReconstructionWeights {
    fn for_target(target: &CsrMatrix, n: usize) -> Result<Self> {
        if target.n_rows() != n || target.n_cols() != n {
            return Err(Error::dims(
                "reconstruction target",
                format!("{n}x{n}"),
                format!("{}x{}", target.n_rows(), target.n_cols()),
            ));
        }
        let cells = (n * n) as f64;
        let positives = target.nnz() as f64;
        if positives == 0.0 {
            return Err(Error::InvalidArgument(
                "reconstruction target has no positive entries".into(),
            ));
        }
        if positives >= cells {
            return Err(Error::InvalidArgument(
                "reconstruction target has no negative entries".into(),
            ));
        }
        Ok(Self {
            pos_weight: (cells - positives) / positives,
            norm: cells / (2.0 * (cells - positives)),
        })
    }
}

/// Reconstruction loss from a dense probability matrix.
pub fn vgae_loss(
    probs: &Tensor,
    target: &CsrMatrix,
    mu: &Tensor,
    log_sigma: &Tensor,
) -> Result<VgaeLoss> {
    let n = probs.rows();
    if probs.cols() != n {
        return Err(Error::dims(
            "probability matrix",
            format!("{n}x{n}"),
            format!("{n}x{}", probs.cols()),
        ));
    }
    mu.check_same_shape(log_sigma, "vgae_loss posterior")?;
    if mu.rows() != n {
        return Err(Error::dims("posterior rows", n, mu.rows()));
    }
    let weights = ReconstructionWeights::for_target(target, n)?;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = probs.get(i, j).clamp(SIGMOID_EPS, 1.0 - SIGMOID_EPS);
            sum += if target.contains(i, j) {
                weights.pos_weight * p.ln()
            } else {
                (1.0 - p).ln()
            };
        }
    }
    let n_f = n as f64;
    let reconstruction = -sum / (n_f * n_f);
    let kl = kl_divergence(mu, log_sigma);
    Ok(VgaeLoss {
        reconstruction,
        kl,
        total: weights.norm * reconstruction + kl / n_f,
        pos_weight: weights.pos_weight,
        norm: weights.norm,
    })
}

/// `(1/N) Σ_i Σ_f ½(μ² + σ² − 2 log σ − 1)`
pub fn kl_divergence(mu: &Tensor, log_sigma: &Tensor) -> f64 {
    let sum: f64 = mu
        .data()
        .iter()
        .zip(log_sigma.data())
        .map(|(&m, &ls)| 0.5 * (m * m + (2.0 * ls).exp() - 2.0 * ls - 1.0))
        .sum();
    sum / mu.rows() as f64
}

/// Sum over all ordered pairs of the weighted entry loss, and the gradient
/// `grad_scale · ∂(sum)/∂Z`. Clamped probabilities contribute no gradient.
fn fused_reconstruction(
    z: &Tensor,
    target: &CsrMatrix,
    pos_weight: f64,
    grad_scale: f64,
) -> (f64, Tensor) {
    let n = z.rows();
    let f = z.cols();
    let mut d_z = Tensor::zeros(n, f);
    let mut total = 0.0;
    let lo = SIGMOID_EPS;
    let hi = 1.0 - SIGMOID_EPS;
    for i in 0..n {
        let zi = z.row(i);
        let positives = target.row_indices(i);
        // first positive column at or after i
        let mut next_pos = positives.partition_point(|&c| c < i);
        let mut row_sum = 0.0;
        let mut acc = vec![0.0; f];
        for j in i..n {
            let is_pos = next_pos < positives.len() && positives[next_pos] == j;
            if is_pos {
                next_pos += 1;
            }
            let zj = z.row(j);
            let logit = dot(zi, zj);
            let raw = if logit >= 0.0 {
                1.0 / (1.0 + (-logit).exp())
            } else {
                let e = logit.exp();
                e / (1.0 + e)
            };
            let p = raw.clamp(lo, hi);
            let (entry, d_logit) = if is_pos {
                (-pos_weight * p.ln(), -pos_weight * (1.0 - p))
            } else {
                (-(1.0 - p).ln(), p)
            };
            let d_logit = if raw < lo || raw > hi { 0.0 } else { d_logit };
            // entry (i, j) and its mirror (j, i) share the same loss and gradient
            let mult = if j == i { 1.0 } else { 2.0 };
            row_sum += mult * entry;
            // ∂/∂z_i Σ_ab c_ab z_a·z_b = 2 Σ_b c_ib z_b
            let c = 2.0 * grad_scale * d_logit;
            if c != 0.0 {
                if j == i {
                    for (a, &v) in acc.iter_mut().zip(zi) {
                        *a += c * v;
                    }
                } else {
                    for (a, &v) in acc.iter_mut().zip(zj) {
                        *a += c * v;
                    }
                    for (d, &v) in d_z.row_mut(j).iter_mut().zip(zi) {
                        *d += c * v;
                    }
                }
            }
        }
        for (d, a) in d_z.row_mut(i).iter_mut().zip(&acc) {
            *d += a;
        }
        total += row_sum;
    }
    (total, d_z)
}

/// `A + I` as a binary CSR matrix: the reconstruction target.
pub fn reconstruction_target(adjacency: &CsrMatrix) -> CsrMatrix {
    let n = adjacency.n_rows();
    let rows: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut row = adjacency.row_indices(i).to_vec();
            if let Err(pos) = row.binary_search(&i) {
                row.insert(pos, i);
            }
            row
        })
        .collect();
    CsrMatrix::from_sorted_rows(n, &rows)
}

/// Full-batch Adam training with one posterior sample per step.
///
/// Returns the trained model and the loss at every epoch.
pub fn train_vgae(graph: &Graph, cfg: &VgaeConfig) -> Result<(VgaeModel, Vec<VgaeLoss>)> {
    if cfg.epochs == 0 || cfg.hidden_dim == 0 || cfg.latent_dim == 0 {
        return Err(Error::InvalidArgument(
            "vgae epochs and layer widths must be positive".into(),
        ));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {} must be positive",
            cfg.lr
        )));
    }
    let a_hat = normalize_adjacency(graph);
    let x = graph.features();
    let target = reconstruction_target(graph.adjacency());
    let mut init_rng = Rng::derive(cfg.seed, "vgae-init");
    let mut noise_rng = Rng::derive(cfg.seed, "vgae-noise");
    let mut model = VgaeModel::new(
        graph.n_features(),
        cfg.hidden_dim,
        cfg.latent_dim,
        &mut init_rng,
    );
    let adam = AdamConfig::with_lr(cfg.lr);
    let (n, f) = (graph.n_nodes(), cfg.latent_dim);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let noise = Tensor::from_vec(n, f, (0..n * f).map(|_| noise_rng.normal()).collect())?;
        let loss = model.loss_and_grad(&a_hat, x, &target, &noise)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "vgae loss",
            });
        }
        adam.step(&mut model.w0);
        adam.step(&mut model.w_mu);
        adam.step(&mut model.w_sigma);
        history.push(loss);
    }
    Ok((model, history))
}

/// Decoded probability for each listed pair, using the posterior means.
pub fn score_pairs(mu: &Tensor, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| sigmoid_scalar(dot(mu.row(i), mu.row(j))))
        .collect()
}
