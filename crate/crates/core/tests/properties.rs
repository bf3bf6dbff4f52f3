mod common;

use common::dense::{self, Mat};
use common::oracles::brute_force_sparsify;
use proptest::prelude::*;
use vgae_defense::attacks::{apply_perturbation, random_flip_attack};
use vgae_defense::defense::sparsify;
use vgae_defense::nn::{softmax_rows, spmm, Rng, Tensor, SIGMOID_EPS};
use vgae_defense::vgae::kl_divergence;
use vgae_defense::{
    build_graph, decode, density, jaccard_similarity, normalize_adjacency, CsrMatrix, DataSplit,
    Graph,
};

/// Symmetric scores with zero diagonal. Values come from a small grid so that
/// ties are common and the tie-break is exercised.
fn score_matrix() -> impl Strategy<Value = Mat> {
    (2usize..=50).prop_flat_map(|n| {
        prop::collection::vec(0u8..6, n * (n - 1) / 2).prop_map(move |vals| {
            let mut m = dense::zeros(n, n);
            let mut it = vals.into_iter();
            #[allow(clippy::needless_range_loop)]
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = f64::from(it.next().unwrap()) / 5.0;
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
            m
        })
    })
}

fn edge_list(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=max_n).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..(3 * n))))
}

fn graph_from(n: usize, edges: &[(usize, usize)]) -> Graph {
    build_graph(
        edges,
        CsrMatrix::identity(n),
        vec![0; n],
        DataSplit::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn sparsify_matches_brute_force(scores in score_matrix(), frac in 0.0f64..1.2) {
        let n = scores.len();
        // ensure at least one pair is requested
        let td = frac.max(2.0 / (n * n) as f64);
        let got = sparsify(&dense::to_tensor(&scores), td).unwrap();
        let mut kept: Vec<(usize, usize)> = got.iter().filter(|&(i, j, _)| i < j).map(|(i, j, _)| (i, j)).collect();
        kept.sort_unstable();
        prop_assert_eq!(&kept, &brute_force_sparsify(&scores, td));
        prop_assert!(got.is_symmetric());
        prop_assert!(got.iter().all(|(i, j, v)| i != j && v == 1.0));
        let max_pairs = n * (n - 1) / 2;
        if kept.len() < max_pairs {
            prop_assert!((density(&got) - td).abs() <= 1.0 / (n * n) as f64 + 1e-15);
        }
    }

    #[test]
    fn normalization_symmetric_with_dense_row_sums((n, edges) in edge_list(20)) {
        let g = graph_from(n, &edges);
        let a_hat = normalize_adjacency(&g);
        let oracle = dense::graph_a_hat(&g);
        let got = dense::from_csr(a_hat.matrix());
        for i in 0..n {
            prop_assert!(got[i][i] > 0.0);
            let row: f64 = got[i].iter().sum();
            let oracle_row: f64 = oracle[i].iter().sum();
            prop_assert!((row - oracle_row).abs() < 1e-12);
            for j in 0..n {
                prop_assert!((got[i][j] - got[j][i]).abs() < 1e-15);
                prop_assert!((got[i][j] - oracle[i][j]).abs() < 1e-15);
                prop_assert!(got[i][j] <= 1.0);
            }
        }
    }

    #[test]
    fn build_graph_idempotent((n, edges) in edge_list(30)) {
        let g = graph_from(n, &edges);
        let again = g.with_edges(&g.edges()).unwrap();
        prop_assert_eq!(&again, &g);
        let mut doubled = g.edges();
        doubled.extend(g.edges().into_iter().map(|(i, j)| (j, i)));
        prop_assert_eq!(&g.with_edges(&doubled).unwrap(), &g);
    }

    #[test]
    fn jaccard_symmetric_and_one_iff_equal(
        a in prop::collection::vec(prop::bool::weighted(0.3), 1..40),
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let b: Vec<bool> = a.iter().map(|&x| if rng.bernoulli(0.2) { !x } else { x }).collect();
        let fa: Vec<f64> = a.iter().map(|&x| f64::from(u8::from(x)) * 0.7).collect();
        let fb: Vec<f64> = b.iter().map(|&x| f64::from(u8::from(x)) * 2.0).collect();
        let ab = jaccard_similarity(&fa, &fb).unwrap();
        prop_assert_eq!(ab, jaccard_similarity(&fb, &fa).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        let equal_nonempty = a == b && a.iter().any(|&x| x);
        prop_assert_eq!(ab == 1.0, equal_nonempty);
    }

    #[test]
    fn spmm_matches_dense(n in 1usize..=50, m in 1usize..=8, seed in any::<u64>(), integer in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let draw = |rng: &mut Rng| {
            if integer { (rng.below(7) as f64) - 3.0 } else { rng.uniform(-1.0, 1.0) }
        };
        let mut a = dense::zeros(n, n);
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                if rng.bernoulli(0.2) {
                    *v = draw(&mut rng);
                }
            }
        }
        let b: Mat = (0..n).map(|_| (0..m).map(|_| draw(&mut rng)).collect()).collect();
        let got = dense::from_tensor(&spmm(&CsrMatrix::from_dense(&dense::to_tensor(&a)), &dense::to_tensor(&b)).unwrap());
        let want = dense::matmul(&a, &b);
        let tol = if integer { 0.0 } else { 1e-12 };
        for (gr, wr) in got.iter().zip(&want) {
            for (g, w) in gr.iter().zip(wr) {
                prop_assert!((g - w).abs() <= tol);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 1..8), 1..6)) {
        let width = rows[0].len();
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.resize(width, 0.0); r }).collect();
        let s = softmax_rows(&Tensor::from_rows(&rows));
        for r in 0..s.rows() {
            prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(s.row(r).iter().all(|&p| p > 0.0 && p < 1.0 || width == 1));
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_only_at_prior(
        mu in prop::collection::vec(-3.0f64..3.0, 6),
        ls in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let kl = kl_divergence(&Tensor::from_vec(3, 2, mu.clone()).unwrap(), &Tensor::from_vec(3, 2, ls.clone()).unwrap());
        prop_assert!(kl >= 0.0);
        let at_prior = mu.iter().chain(&ls).all(|&v| v == 0.0);
        prop_assert_eq!(kl == 0.0, at_prior);
    }

    #[test]
    fn decode_symmetric_and_clamped(z in prop::collection::vec(-10.0f64..10.0, 2..40)) {
        let n = z.len() / 2;
        prop_assume!(n >= 1);
        let p = decode(&Tensor::from_vec(n, 2, z[..2 * n].to_vec()).unwrap());
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(p.get(i, j), p.get(j, i));
                prop_assert!(p.get(i, j) >= SIGMOID_EPS && p.get(i, j) <= 1.0 - SIGMOID_EPS);
            }
        }
    }

    #[test]
    fn attacked_graphs_keep_invariants((n, edges) in edge_list(25), budget_frac in 0.0f64..1.0, seed in any::<u64>()) {
        prop_assume!(n >= 2);
        let g = graph_from(n, &edges);
        let budget = ((n * (n - 1) / 2) as f64 * budget_frac) as usize;
        let r = random_flip_attack(&g, budget, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(r.perturbation.len(), budget);
        let adj = r.attacked_graph.adjacency();
        prop_assert!(adj.is_symmetric());
        prop_assert!(adj.iter().all(|(i, j, v)| i != j && v == 1.0));
        prop_assert_eq!(&apply_perturbation(&r.attacked_graph, &r.perturbation).unwrap(), &g);
    }
}
