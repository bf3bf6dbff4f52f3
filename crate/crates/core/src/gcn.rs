//! Two-layer GCN node classifier: `softmax(Â · ReLU(Â X W0) · W1)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, NormalizedAdjacency};
use crate::nn::{
    glorot_init, masked_cross_entropy, relu, relu_backward, spmm, spmm_transposed, AdamConfig,
    Parameter, Rng, Tensor,
};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty on the first-layer weights only.
    pub weight_decay: f64,
    pub hidden_dim: usize,
    /// Stop after this many epochs without a validation-accuracy improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            hidden_dim: 16,
            patience: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidArgument(
                "hidden_dim must be at least 1".into(),
            ));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "weight_decay must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub w0: Parameter,
    pub w1: Parameter,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnActivations {
    pub logits: Tensor,
    /// `ReLU(Â X W0)`
    pub hidden: Tensor,
    /// `Â X W0`, before the ReLU
    pub pre_activation: Tensor,
}

/// Forward pass returning `(logits, hidden)`.
pub fn gcn_forward(
    model: &GcnModel,
    a_hat: &NormalizedAdjacency,
    x: &CsrMatrix,
) -> Result<(Tensor, Tensor)> {
    let acts = model.forward(a_hat, x)?;
    Ok((acts.logits, acts.hidden))
}

impl GcnModel {
    pub fn new(n_features: usize, hidden_dim: usize, n_classes: usize, rng: &mut Rng) -> Self {
        Self {
            w0: Parameter::new(glorot_init(n_features, hidden_dim, rng)),
            w1: Parameter::new(glorot_init(hidden_dim, n_classes, rng)),
        }
    }

    pub fn from_weights(w0: Tensor, w1: Tensor) -> Result<Self> {
        if w0.cols() != w1.rows() {
            return Err(Error::dims("gcn hidden width", w0.cols(), w1.rows()));
        }
        Ok(Self {
            w0: Parameter::new(w0),
            w1: Parameter::new(w1),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0.value.cols()
    }

    pub fn n_features(&self) -> usize {
        self.w0.value.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.w1.value.cols()
    }

    pub fn forward(&self, a_hat: &NormalizedAdjacency, x: &CsrMatrix) -> Result<GcnActivations> {
        if x.n_cols() != self.n_features() {
            return Err(Error::dims(
                "gcn feature width",
                self.n_features(),
                x.n_cols(),
            ));
        }
        if a_hat.n_cols() != x.n_rows() {
            return Err(Error::dims(
                "gcn adjacency vs features",
                x.n_rows(),
                a_hat.n_cols(),
            ));
        }
        let xw = spmm(x, &self.w0.value)?;
        let pre_activation = spmm(a_hat, &xw)?;
        let hidden = relu(&pre_activation);
        let hw = hidden.matmul(&self.w1.value)?;
        let logits = spmm(a_hat, &hw)?;
        Ok(GcnActivations {
            logits,
            hidden,
            pre_activation,
        })
    }

    /// Accumulates parameter gradients for the upstream gradient `grad_logits`.
    /// `Â` is symmetric, so `Âᵀ G = Â G`.
    pub fn backward(
        &mut self,
        a_hat: &NormalizedAdjacency,
        x: &CsrMatrix,
        acts: &GcnActivations,
        grad_logits: &Tensor,
    ) -> Result<()> {
        let d_hw = spmm(a_hat, grad_logits)?;
        let d_w1 = acts.hidden.t_matmul(&d_hw)?;
        let d_hidden = d_hw.matmul_t(&self.w1.value)?;
        let d_pre = relu_backward(&acts.pre_activation, &d_hidden)?;
        let d_xw = spmm(a_hat, &d_pre)?;
        let d_w0 = spmm_transposed(x, &d_xw)?;
        self.w0.grad.add_assign(&d_w0)?;
        self.w1.grad.add_assign(&d_w1)?;
        Ok(())
    }

    /// Masked cross-entropy plus `weight_decay/2 · ‖W0‖²`; fills the gradients.
    pub fn loss_and_grad(
        &mut self,
        a_hat: &NormalizedAdjacency,
        x: &CsrMatrix,
        labels: &[usize],
        mask: &[usize],
        weight_decay: f64,
    ) -> Result<(f64, GcnActivations)> {
        let acts = self.forward(a_hat, x)?;
        let (ce, grad_logits) = masked_cross_entropy(&acts.logits, labels, mask)?;
        self.backward(a_hat, x, &acts, &grad_logits)?;
        let mut loss = ce;
        if weight_decay > 0.0 {
            loss += 0.5 * weight_decay * self.w0.value.data().iter().map(|w| w * w).sum::<f64>();
            self.w0.grad.axpy(weight_decay, &self.w0.value.clone())?;
        }
        Ok((loss, acts))
    }

    pub fn predict(&self, a_hat: &NormalizedAdjacency, x: &CsrMatrix) -> Result<Vec<usize>> {
        let logits = self.forward(a_hat, x)?.logits;
        Ok((0..logits.rows()).map(|r| logits.argmax_row(r)).collect())
    }

    pub fn zero_grad(&mut self) {
        self.w0.zero_grad();
        self.w1.zero_grad();
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            kind: "gcn".into(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&ckpt)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint<GcnModel> = serde_json::from_str(&text)?;
        if ckpt.kind != "gcn" {
            return Err(Error::InvalidArgument(format!(
                "checkpoint kind {:?}, expected \"gcn\"",
                ckpt.kind
            )));
        }
        let mut model = ckpt.model;
        model.w0.reset_state();
        model.w1.reset_state();
        Self::from_weights(model.w0.value, model.w1.value)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Checkpoint<M> {
    pub kind: String,
    #[serde(flatten)]
    pub model: M,
}

/// Fraction of `node_ids` whose predicted class matches `labels`.
pub fn accuracy(logits: &Tensor, labels: &[usize], node_ids: &[usize]) -> Result<f64> {
    if node_ids.is_empty() {
        return Err(Error::EmptyNodeSet("accuracy"));
    }
    let correct = node_ids
        .iter()
        .filter(|&&v| logits.argmax_row(v) == labels[v])
        .count();
    Ok(correct as f64 / node_ids.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

/// Full-batch Adam training on the graph's train split, keeping the
/// parameters with the best validation accuracy (earliest on ties).
pub fn train_gcn(graph: &Graph, cfg: &TrainConfig) -> Result<(GcnModel, TrainHistory)> {
    let a_hat = normalize_adjacency(graph);
    train_gcn_with(graph, &a_hat, cfg)
}

pub(crate) fn train_gcn_with(
    graph: &Graph,
    a_hat: &NormalizedAdjacency,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainHistory)> {
    cfg.validate()?;
    let split = graph.split();
    if split.train.is_empty() {
        return Err(Error::EmptyNodeSet("training set"));
    }
    if split.val.is_empty() {
        return Err(Error::EmptyNodeSet("validation set"));
    }
    let x = graph.features();
    let labels = graph.labels();
    let mut rng = Rng::derive(cfg.seed, "gcn-init");
    let mut model = GcnModel::new(
        graph.n_features(),
        cfg.hidden_dim,
        graph.n_classes().max(1),
        &mut rng,
    );
    let adam = AdamConfig::with_lr(cfg.lr);

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, GcnModel)> = None;
    for epoch in 0..cfg.epochs {
        let (train_loss, acts) =
            model.loss_and_grad(a_hat, x, labels, &split.train, cfg.weight_decay)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "training loss",
            });
        }
        let (val_loss, _) = masked_cross_entropy(&acts.logits, labels, &split.val)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            train_acc: accuracy(&acts.logits, labels, &split.train)?,
            val_loss,
            val_acc: accuracy(&acts.logits, labels, &split.val)?,
        };
        records.push(record);
        if best.as_ref().is_none_or(|b| record.val_acc > b.1) {
            let mut snapshot = model.clone();
            snapshot.zero_grad();
            best = Some((epoch, record.val_acc, snapshot));
        }
        adam.step(&mut model.w0);
        adam.step(&mut model.w1);
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            log::debug!("gcn early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }
    let (best_epoch, _, model) = best.expect("at least one epoch ran");
    Ok((
        model,
        TrainHistory {
            epochs: records,
            best_epoch,
        },
    ))
}

/// Accuracy of `model` on `node_ids` of `graph`. Argmax ties go to the lowest class id.
pub fn evaluate(model: &GcnModel, graph: &Graph, node_ids: &[usize]) -> Result<f64> {
    if node_ids.is_empty() {
        return Err(Error::EmptyNodeSet("evaluation"));
    }
    let a_hat = normalize_adjacency(graph);
    let logits = model.forward(&a_hat, graph.features())?.logits;
    accuracy(&logits, graph.labels(), node_ids)
}
