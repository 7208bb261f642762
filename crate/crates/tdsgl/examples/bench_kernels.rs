use std::time::Instant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tdsgl::dense::{matmul_nt, Matrix};
use tdsgl::*;

fn main() {
    let dim: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let ds0 = tdsgl::synth::generate(&tdsgl::synth::SynthConfig::lastfm_scale(42)).unwrap();
    let ds = tdsgl::split_dataset(&ds0, (0.8, 0.1, 0.1), 42).unwrap();
    let r = interaction_matrix(&ds);
    let adj = normalized_adjacency(&r, true);
    let n = ds.num_users + ds.num_items;
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut x = Matrix::zeros(n, dim);
    for v in x.data_mut() { *v = rng.random::<f64>() - 0.5; }
    let mut out = Matrix::zeros(n, dim);

    for trial in 0..3 {
        let t = Instant::now();
        let reps = 30;
        for _ in 0..reps { adj.mul_dense(&x, &mut out); }
        let dt = t.elapsed().as_secs_f64() / reps as f64;
        println!("[{trial}] spmm F={dim}: {:.2} ms ({:.2} Gmadd/s)", dt*1e3, adj.nnz() as f64 * dim as f64 / dt / 1e9);
    }

    let a = Matrix::from_vec(1900, dim, (0..1900*dim).map(|i| (i as f64).sin()).collect());
    let mut sims = Matrix::zeros(1900, 1900);
    let t = Instant::now();
    for _ in 0..10 { matmul_nt(&a, &a, &mut sims); }
    println!("gemm 1900² F={dim}: {:.2} ms", t.elapsed().as_secs_f64()/10.0*1e3);

    let masks = CoOccurrenceMasks::build(&r, 8, None, None).unwrap();
    let aux_ops = tdsgl::model::AuxOperators::from_masks(&masks);
    let state = EmbeddingState::init(ds.num_users, ds.num_items, dim, false, &mut rng);
    let mut work = tdsgl::loss::ObjectiveWorkspace::new(ds.num_users, ds.num_items, dim);
    let v1 = edge_dropout(&r, 0.1, true, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
    let v2 = edge_dropout(&r, 0.1, true, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
    let batches = sample_epoch_batches(&ds, 2048, &mut ChaCha20Rng::seed_from_u64(4)).unwrap();

    let mk = |lambda: f64, with_mask: bool, with_aux: bool| tdsgl::loss::ObjectiveConfig {
        adj: &adj, view1: Some(&v1), view2: Some(&v2),
        masks: if with_mask { Some(&masks) } else { None },
        aux_ops: if with_aux { Some(&aux_ops) } else { None },
        fe_kind: FeKind::Linear, layers: 3, tau: 0.2, lambda, mu: 1e-4,
        include_positive: true, full_contrast: false,
    };
    for (label, obj) in [("rec-only", mk(0.0, false, false)), ("sgl", mk(0.1, false, false)), ("tdsgl", mk(0.1, true, true))] {
        let t = Instant::now();
        let mut total = 0.0;
        for b in &batches { total += total_loss(&state, b, &obj, &mut work).unwrap().total; }
        println!("epoch {label} F={dim}: {:.2} s (total={total:.1})", t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    let rep = evaluate(&work.rec_embeddings(), &ds, Split::Validation, 20);
    println!("eval: {:.2} s (recall {:.4})", t.elapsed().as_secs_f64(), rep.recall);
}
