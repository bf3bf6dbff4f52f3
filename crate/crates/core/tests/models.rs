mod common;

use common::dense;
use vgae_defense::datasets::synthetic::{planted_partition, PlantedPartition};
use vgae_defense::gcn::{accuracy, GcnModel};
use vgae_defense::linkpred::{hold_out_edges, roc_auc};
use vgae_defense::nn::{AdamConfig, Rng, Tensor};
use vgae_defense::vgae::score_pairs;
use vgae_defense::{
    build_graph, decode, encode, evaluate, gcn_forward, normalize_adjacency, reparameterize,
    train_gcn, train_vgae, CsrMatrix, DataSplit, Graph, TrainConfig, VgaeConfig, VgaeModel,
};

fn random_graph(n: usize, d: usize, seed: u64) -> Graph {
    let mut rng = Rng::new(seed);
    let x = dense::random_mat(n, d, 1.0, &mut rng);
    let edges = dense::random_edges(n, 0.4, &mut rng);
    let labels = (0..n).map(|v| v % 2).collect();
    build_graph(
        &edges,
        CsrMatrix::from_dense(&dense::to_tensor(&x)),
        labels,
        DataSplit::default(),
    )
    .unwrap()
}

/// Relabels node `v` as `perm[v]`.
fn permute(g: &Graph, perm: &[usize]) -> Graph {
    let n = g.n_nodes();
    let x = g.features().to_dense();
    let mut rows = vec![vec![0.0; x.cols()]; n];
    let mut labels = vec![0; n];
    for v in 0..n {
        rows[perm[v]] = x.row(v).to_vec();
        labels[perm[v]] = g.labels()[v];
    }
    let edges: Vec<_> = g
        .edges()
        .into_iter()
        .map(|(i, j)| (perm[i], perm[j]))
        .collect();
    build_graph(
        &edges,
        CsrMatrix::from_dense(&Tensor::from_rows(&rows)),
        labels,
        DataSplit::default(),
    )
    .unwrap()
}

fn assert_rows_permuted(a: &Tensor, b: &Tensor, perm: &[usize]) {
    for (v, &pv) in perm.iter().enumerate().take(a.rows()) {
        for (x, y) in a.row(v).iter().zip(b.row(pv)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

const PERM: [usize; 6] = [3, 0, 5, 1, 4, 2];

#[test]
fn gcn_forward_is_permutation_equivariant() {
    let g = random_graph(6, 4, 1);
    let pg = permute(&g, &PERM);
    let model = GcnModel::new(4, 5, 3, &mut Rng::new(2));
    let (logits, _) = gcn_forward(&model, &normalize_adjacency(&g), g.features()).unwrap();
    let (plogits, _) = gcn_forward(&model, &normalize_adjacency(&pg), pg.features()).unwrap();
    assert_rows_permuted(&logits, &plogits, &PERM);
}

#[test]
fn vgae_encoder_is_permutation_equivariant() {
    let g = random_graph(6, 4, 3);
    let pg = permute(&g, &PERM);
    let model = VgaeModel::new(4, 5, 2, &mut Rng::new(4));
    let (mu, ls) = encode(&model, &normalize_adjacency(&g), g.features()).unwrap();
    let (pmu, pls) = encode(&model, &normalize_adjacency(&pg), pg.features()).unwrap();
    assert_rows_permuted(&mu, &pmu, &PERM);
    assert_rows_permuted(&ls, &pls, &PERM);
}

#[test]
fn argmax_ignores_constant_logit_shift() {
    let g = random_graph(6, 4, 5);
    let model = GcnModel::new(4, 3, 3, &mut Rng::new(6));
    let (logits, _) = gcn_forward(&model, &normalize_adjacency(&g), g.features()).unwrap();
    let shifted = logits.map(|v| v + 17.5);
    for r in 0..logits.rows() {
        assert_eq!(logits.argmax_row(r), shifted.argmax_row(r));
    }
}

#[test]
fn two_node_toy_is_fit_within_200_epochs() {
    // distinct one-hot features, both nodes labelled for training. With an
    // edge between them both rows of Â equal [½, ½] and no GCN can separate
    // them, so the toy has no edges.
    let g = build_graph(
        &[],
        CsrMatrix::identity(2),
        vec![0, 1],
        DataSplit::default(),
    )
    .unwrap();
    let a_hat = normalize_adjacency(&g);
    let mut model = GcnModel::new(2, 16, 2, &mut Rng::new(0));
    let adam = AdamConfig::with_lr(0.01);
    let train = [0, 1];
    let mut fitted_at = None;
    for epoch in 0..200 {
        let (_, acts) = model
            .loss_and_grad(&a_hat, g.features(), g.labels(), &train, 5e-4)
            .unwrap();
        if accuracy(&acts.logits, g.labels(), &train).unwrap() == 1.0 {
            fitted_at = Some(epoch);
            break;
        }
        adam.step(&mut model.w0);
        adam.step(&mut model.w1);
    }
    assert!(fitted_at.is_some(), "toy not fit in 200 epochs");
}

fn small_planted(seed: u64) -> Graph {
    planted_partition(&PlantedPartition {
        seed,
        ..PlantedPartition::default()
    })
    .unwrap()
}

#[test]
fn training_keeps_validation_best_snapshot_and_is_deterministic() {
    let g = small_planted(11);
    let cfg = TrainConfig::default();
    let (model, history) = train_gcn(&g, &cfg).unwrap();
    let best = history.best();
    let max_val = history.epochs.iter().map(|e| e.val_acc).fold(0.0, f64::max);
    assert_eq!(best.val_acc, max_val);
    // earliest epoch reaching the maximum
    let first = history
        .epochs
        .iter()
        .find(|e| e.val_acc == max_val)
        .unwrap();
    assert_eq!(best.epoch, first.epoch);
    assert_eq!(evaluate(&model, &g, &g.split().val).unwrap(), max_val);

    let (model2, history2) = train_gcn(&g, &cfg).unwrap();
    assert_eq!(history, history2);
    assert_eq!(model.w0.value, model2.w0.value);
    assert_eq!(model.w1.value, model2.w1.value);

    let random = GcnModel::new(g.n_features(), 16, g.n_classes(), &mut Rng::new(99));
    assert!(
        evaluate(&model, &g, &g.split().train).unwrap()
            >= evaluate(&random, &g, &g.split().train).unwrap()
    );
    assert!(evaluate(&model, &g, &g.split().test).unwrap() > 0.6);
}

#[test]
fn early_stopping_respects_patience() {
    let g = small_planted(12);
    let cfg = TrainConfig {
        patience: 5,
        ..TrainConfig::default()
    };
    let (_, history) = train_gcn(&g, &cfg).unwrap();
    let last = history.epochs.last().unwrap().epoch;
    assert!(last - history.best().epoch <= cfg.patience);
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gcn = GcnModel::new(5, 4, 3, &mut Rng::new(1));
    let p = dir.path().join("gcn.json");
    gcn.save_json(&p).unwrap();
    let back = GcnModel::load_json(&p).unwrap();
    assert_eq!(back.w0.value, gcn.w0.value);
    assert_eq!(back.w1.value, gcn.w1.value);

    let vgae = VgaeModel::new(5, 4, 2, &mut Rng::new(2));
    let q = dir.path().join("vgae.json");
    vgae.save_json(&q).unwrap();
    let back = VgaeModel::load_json(&q).unwrap();
    assert_eq!(back.w_sigma.value, vgae.w_sigma.value);
    assert!(GcnModel::load_json(&q).is_err());
    assert!(VgaeModel::load_json(&p).is_err());
}

#[test]
fn reparameterization_statistics() {
    const DRAWS: usize = 10_000;
    let mu = Tensor::from_vec(DRAWS, 2, [0.7, -1.3].repeat(DRAWS)).unwrap();
    let ls = Tensor::from_vec(DRAWS, 2, [0.0, (0.5f64).ln()].repeat(DRAWS)).unwrap();
    let state = reparameterize(&mu, &ls, &mut Rng::new(8)).unwrap();
    for (k, (m, sigma)) in [(0.7, 1.0), (-1.3, 0.5)].into_iter().enumerate() {
        let mean = (0..DRAWS).map(|r| state.z.get(r, k)).sum::<f64>() / DRAWS as f64;
        assert!(
            (mean - m).abs() < 3.0 * sigma / 100.0,
            "column {k} mean {mean}"
        );
    }
    for i in 0..state.z.len() {
        let want = state.mu.data()[i] + state.log_sigma.data()[i].exp() * state.noise.data()[i];
        assert_eq!(state.z.data()[i], want);
    }
    let again = reparameterize(&mu, &ls, &mut Rng::new(8)).unwrap();
    assert_eq!(again.z, state.z);
}

fn path_edge_gap(cfg: &VgaeConfig) -> (f64, VgaeModel) {
    let g = build_graph(
        &[(0, 1), (1, 2), (2, 3)],
        CsrMatrix::identity(4),
        vec![0; 4],
        DataSplit::default(),
    )
    .unwrap();
    let (model, _) = train_vgae(&g, cfg).unwrap();
    let (mu, _) = encode(&model, &normalize_adjacency(&g), g.features()).unwrap();
    let p = decode(&mu);
    let mean = |pairs: &[(usize, usize)]| {
        pairs.iter().map(|&(i, j)| p.get(i, j)).sum::<f64>() / pairs.len() as f64
    };
    (
        mean(&[(0, 1), (1, 2), (2, 3)]) - mean(&[(0, 2), (0, 3), (1, 3)]),
        model,
    )
}

#[test]
fn vgae_learns_path_graph() {
    for seed in 0..4 {
        let cfg = VgaeConfig {
            epochs: 500,
            latent_dim: 2,
            seed,
            ..VgaeConfig::default()
        };
        let (gap, model) = path_edge_gap(&cfg);
        assert!(
            gap > 0.0,
            "seed {seed}: edge minus non-edge probability {gap}"
        );
        let (_, again) = path_edge_gap(&cfg);
        assert_eq!(again.w0.value, model.w0.value);
        assert_eq!(again.w_mu.value, model.w_mu.value);
        assert_eq!(again.w_sigma.value, model.w_sigma.value);

        // at the default rate of 0.001 the gap is small; a larger step separates clearly
        let (fast_gap, _) = path_edge_gap(&VgaeConfig { lr: 0.01, ..cfg });
        assert!(fast_gap > 0.2, "seed {seed}: gap {fast_gap} at lr 0.01");
    }
}

#[test]
fn vgae_ranks_held_out_edges_on_planted_graph() {
    let g = planted_partition(&PlantedPartition {
        nodes_per_class: 60,
        p_in: 0.15,
        p_out: 0.005,
        ..PlantedPartition::default()
    })
    .unwrap();
    let split = hold_out_edges(&g, 0.1, &mut Rng::new(4)).unwrap();
    let (model, _) = train_vgae(&split.train_graph, &VgaeConfig::default()).unwrap();
    let (mu, _) = encode(
        &model,
        &normalize_adjacency(&split.train_graph),
        g.features(),
    )
    .unwrap();
    let auc = roc_auc(
        &score_pairs(&mu, &split.held_out),
        &score_pairs(&mu, &split.negatives),
    )
    .unwrap();
    // block-model oracle: score 1 for same-class pairs, 0 otherwise
    let same = |pairs: &[(usize, usize)]| -> Vec<f64> {
        pairs
            .iter()
            .map(|&(i, j)| f64::from(u8::from(g.labels()[i] == g.labels()[j])))
            .collect()
    };
    let oracle = roc_auc(&same(&split.held_out), &same(&split.negatives)).unwrap();
    println!("held-out AUC on planted partition: {auc:.4} (label oracle {oracle:.4})");
    assert!(auc > 0.5 + 0.9 * (oracle - 0.5));
}
