//! Sparse implementations against dense brute-force recomputation on random
//! instances: co-occurrence products and masks exactly, normalized
//! adjacency, propagation and feature extraction to tight tolerances.

mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tdsgl::data::InteractionDataset;
use tdsgl::dense::Matrix;
use tdsgl::model::{AuxOperators, PropagationOp, ViewTag};
use tdsgl::*;

fn dataset_from(num_users: usize, num_items: usize, edges: &[(u32, u32)]) -> InteractionDataset {
    InteractionDataset {
        num_users,
        num_items,
        train: edges.to_vec(),
        validation: vec![],
        test: vec![],
    }
}

fn csr_to_dense(m: &CsrMatrix) -> Dense {
    let mut out = dense_zeros(m.rows(), m.cols());
    for (r, c, v) in m.iter() {
        out[r][c as usize] = v;
    }
    out
}

#[test]
fn cooccurrence_equals_dense_products_exactly() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for trial in 0..25 {
        let nu = rng.random_range(2..=50);
        let ni = rng.random_range(2..=40);
        let count = rng.random_range(1..=(nu * ni) / 2);
        let edges = random_interactions(nu, ni, count, &mut rng);
        let ds = dataset_from(nu, ni, &edges);
        let r = interaction_matrix(&ds);
        let (pu, pi) = cooccurrence(&r);
        let rd = dense_interaction_matrix(nu, ni, &edges);
        let (pud, pid) = dense_cooccurrence(&rd);
        assert_eq!(csr_to_dense(&pu), pud, "p_user trial {trial}");
        assert_eq!(csr_to_dense(&pi), pid, "p_item trial {trial}");
    }
}

#[test]
fn masks_equal_dense_thresholding_exactly() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    for _ in 0..15 {
        let nu = rng.random_range(2..=40);
        let ni = rng.random_range(2..=30);
        let count = rng.random_range(1..=(nu * ni) / 2);
        let edges = random_interactions(nu, ni, count, &mut rng);
        let rd = dense_interaction_matrix(nu, ni, &edges);
        let (pud, _) = dense_cooccurrence(&rd);
        let ds = dataset_from(nu, ni, &edges);
        let r = interaction_matrix(&ds);
        let (pu, _) = cooccurrence(&r);
        for beta in [1u32, 2, 3, 5] {
            let side = build_masks(&pu, beta).unwrap();
            for a in 0..nu {
                for b in 0..nu {
                    let expect_m = pud[a][b] < beta as f64;
                    assert_eq!(side.m(a, b), expect_m, "m({a},{b}) at beta {beta}");
                    if a != b {
                        let expect_f = pud[a][b] >= beta as f64;
                        assert_eq!(side.f.contains(a, b as u32), expect_f);
                    }
                }
            }
        }
    }
}

#[test]
fn normalized_adjacency_matches_dense_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for _ in 0..15 {
        let nu = rng.random_range(2..=50);
        let ni = rng.random_range(2..=40);
        let count = rng.random_range(1..=(nu * ni) / 3);
        let edges = random_interactions(nu, ni, count, &mut rng);
        for self_loop in [true, false] {
            let ds = dataset_from(nu, ni, &edges);
            let r = interaction_matrix(&ds);
            let sparse = normalized_adjacency(&r, self_loop);
            let dense = dense_sym_normalize(&dense_bipartite_adj(nu, ni, &edges, self_loop, None));
            assert!(
                max_abs_diff_dense(&csr_to_dense(&sparse), &dense) < 1e-10,
                "normalization mismatch (self_loop={self_loop})"
            );
        }
    }
}

#[test]
fn propagation_matches_dense_chain() {
    let mut rng = ChaCha20Rng::seed_from_u64(19);
    for _ in 0..10 {
        let nu = rng.random_range(2..=25);
        let ni = rng.random_range(2..=25);
        let dim = rng.random_range(2..=6);
        let layers = rng.random_range(0..=3);
        let count = rng.random_range(1..=(nu * ni) / 2);
        let edges = random_interactions(nu, ni, count, &mut rng);
        let ds = dataset_from(nu, ni, &edges);
        let r = interaction_matrix(&ds);
        let adj = normalized_adjacency(&r, true);
        let n = nu + ni;
        let mut x0 = Matrix::zeros(n, dim);
        for v in x0.data_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        let out = tdsgl::propagate(PropagationOp::Single(&adj), &x0, layers, ViewTag::Original).unwrap();

        let adj_dense = dense_sym_normalize(&dense_bipartite_adj(nu, ni, &edges, true, None));
        let x0_dense: Dense = (0..n).map(|i| x0.row(i).to_vec()).collect();
        let chain: Vec<Dense> = vec![adj_dense; layers];
        let expected = dense_propagate(&chain, &x0_dense);
        let got: Dense = (0..n).map(|i| out.combined.row(i).to_vec()).collect();
        assert!(max_abs_diff_dense(&got, &expected) < 1e-12);
    }
}

#[test]
fn ten_node_three_layer_example_within_1e12() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let edges = random_interactions(5, 5, 12, &mut rng);
    let ds = dataset_from(5, 5, &edges);
    let r = interaction_matrix(&ds);
    let adj = normalized_adjacency(&r, true);
    let mut x0 = Matrix::zeros(10, 4);
    for v in x0.data_mut() {
        *v = rng.random::<f64>() - 0.5;
    }
    let out = tdsgl::propagate(PropagationOp::Single(&adj), &x0, 3, ViewTag::Original).unwrap();
    let adj_dense = dense_sym_normalize(&dense_bipartite_adj(5, 5, &edges, true, None));
    let x0_dense: Dense = (0..10).map(|i| x0.row(i).to_vec()).collect();
    let expected = dense_propagate(&vec![adj_dense; 3], &x0_dense);
    let got: Dense = (0..10).map(|i| out.combined.row(i).to_vec()).collect();
    assert!(max_abs_diff_dense(&got, &expected) < 1e-12);
}

#[test]
fn feature_extraction_matches_dense_one_layer_gcn() {
    let mut rng = ChaCha20Rng::seed_from_u64(29);
    for _ in 0..10 {
        let nu = rng.random_range(3..=50);
        let ni = rng.random_range(3..=40);
        let dim = rng.random_range(2..=5);
        let count = rng.random_range(nu..=(nu * ni) / 2);
        let edges = random_interactions(nu, ni, count, &mut rng);
        let ds = dataset_from(nu, ni, &edges);
        let r = interaction_matrix(&ds);
        let beta = rng.random_range(1..=3);
        let masks = CoOccurrenceMasks::build(&r, beta, None, None).unwrap();
        let ops = AuxOperators::from_masks(&masks);
        let mut state = EmbeddingState::init(nu, ni, dim, false, &mut rng);
        for v in state.x0.data_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        let aux = extract_aux_features(&ops, &state, FeKind::Linear);

        // dense oracle: normalized one-layer aggregation over the f graph
        let f_dense = csr_to_dense(&masks.user.f);
        let norm_dense = dense_sym_normalize(&f_dense);
        let x_user_dense: Dense = (0..nu).map(|i| state.x0.row(i).to_vec()).collect();
        let expected = dense_matmul(&norm_dense, &x_user_dense);
        let got: Dense = (0..nu).map(|i| aux.x_user.row(i).to_vec()).collect();
        assert!(max_abs_diff_dense(&got, &expected) < 1e-10);

        // zero-degree rows stay zero
        for a in 0..nu {
            if masks.user.f.row_len(a) == 0 {
                assert!(aux.x_user.row(a).iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn table_i_sparsity_formula() {
    // sparsity = 1 − interactions/(users·items), checked against the
    // published dataset statistics to 0.01%
    let cases = [
        (31668usize, 38048usize, 1_561_406usize, 0.9987),
        (6022, 3043, 895_699, 0.9511),
        (1891, 15438, 92_834, 0.9968),
    ];
    for (nu, ni, inter, expected) in cases {
        let sparsity = 1.0 - inter as f64 / (nu as f64 * ni as f64);
        assert!(
            (sparsity - expected).abs() < 1e-4,
            "sparsity {sparsity} vs table {expected}"
        );
    }
    // and the dataset method agrees with the formula
    let ds = dataset_from(2, 5, &[(0, 0), (1, 3)]);
    assert!((ds.sparsity() - (1.0 - 2.0 / 10.0)).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mask_partition_and_monotonicity(
        seed in 0u64..10_000,
        nu in 2usize..20,
        ni in 2usize..16,
        beta in 1u32..5,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let count = (nu * ni / 3).max(1);
        let edges = random_interactions(nu, ni, count, &mut rng);
        let ds = dataset_from(nu, ni, &edges);
        let r = interaction_matrix(&ds);
        let (pu, _) = cooccurrence(&r);
        let low = build_masks(&pu, beta).unwrap();
        let high = build_masks(&pu, beta + 1).unwrap();
        for a in 0..nu {
            for b in 0..nu {
                if a != b {
                    // partition: exactly one of m, f
                    let m = low.m(a, b) as u8;
                    let f = low.f.contains(a, b as u32) as u8;
                    prop_assert_eq!(m + f, 1);
                    // monotonicity: raising β never removes from m, never adds to f
                    if low.m(a, b) {
                        prop_assert!(high.m(a, b));
                    }
                    if high.f.contains(a, b as u32) {
                        prop_assert!(low.f.contains(a, b as u32));
                    }
                }
            }
        }
    }

    #[test]
    fn stored_normalization_entries_match_degree_formula(
        seed in 0u64..10_000,
        nu in 2usize..30,
        ni in 2usize..25,
        self_loop in proptest::bool::ANY,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let count = (nu * ni / 4).max(1);
        let edges = random_interactions(nu, ni, count, &mut rng);
        let ds = dataset_from(nu, ni, &edges);
        let r = interaction_matrix(&ds);
        let adj = normalized_adjacency(&r, self_loop);
        let dense_adj = dense_bipartite_adj(nu, ni, &edges, self_loop, None);
        let deg: Vec<f64> = dense_adj.iter().map(|row| row.iter().sum()).collect();
        for (a, b, v) in adj.iter() {
            let expected = dense_adj[a][b as usize] / (deg[a] * deg[b as usize]).sqrt();
            prop_assert!((v - expected).abs() < 1e-12);
        }
    }
}
