//! The training loop: epoch batch sampling, per-epoch view regeneration,
//! Adam updates, validation-driven checkpointing and early stopping.
//!
//! Randomness is split into independent ChaCha streams keyed by (seed,
//! domain, epoch): view generation and batch sampling never share a stream,
//! so a run that skips view generation (λ = 0, or the lightgcn variant)
//! samples bit-identical batches — the degeneration identities depend on it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::augment::{generate_view, AugmentedView};
use crate::config::Hyperparameters;
use crate::data::{InteractionDataset, Split};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::graph::{interaction_matrix, normalized_adjacency, CoOccurrenceMasks};
use crate::loss::{total_loss, BatchTriples, ObjectiveConfig, ObjectiveWorkspace};
use crate::model::{
    propagate_combined, AuxOperators, EmbeddingState, PropScratch, PropagationOp,
};
use crate::optim::{adam_step, AdamParams};

/// RNG stream domains. Each (seed, domain, index) triple owns an independent
/// ChaCha20 stream.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const VIEW1: u64 = 2;
    pub const VIEW2: u64 = 3;
    pub const BATCH: u64 = 4;
}

pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// One (u, i) triple per train interaction, shuffled, with the negative j
/// resampled uniformly from the items the user has no train interaction
/// with. Errors if some user interacted with every item.
pub fn sample_epoch_batches(
    ds: &InteractionDataset,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<BatchTriples>> {
    if ds.train.is_empty() {
        return Err(Error::InvalidArgument("empty train set".into()));
    }
    let per_user = ds.train_items_by_user();
    for (u, items) in per_user.iter().enumerate() {
        if items.len() >= ds.num_items {
            return Err(Error::InvalidArgument(format!(
                "user {u} interacts with all {} items; cannot sample negatives",
                ds.num_items
            )));
        }
    }
    let mut order: Vec<(u32, u32)> = ds.train.clone();
    order.shuffle(rng);

    let mut batches = Vec::with_capacity(order.len().div_ceil(batch));
    let mut current = BatchTriples::default();
    for (u, i) in order {
        let items = &per_user[u as usize];
        let j = loop {
            let cand = rng.random_range(0..ds.num_items as u32);
            if items.binary_search(&cand).is_err() {
                break cand;
            }
        };
        current.entries.push((u, i, j));
        if current.len() == batch {
            batches.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}

/// Per-step loss record (mirrors the steps CSV).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub rec: f64,
    pub ssl_user: f64,
    pub ssl_item: f64,
    pub reg: f64,
    pub total: f64,
}

/// Per-epoch record (mirrors the epochs CSV). Validation metrics are present
/// on evaluation epochs only.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub rec_loss: f64,
    pub ssl_loss: f64,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Best-validation snapshot (final state when validation never ran).
    pub best: EmbeddingState,
    pub best_epoch: usize,
    pub best_val: MetricsReport,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    /// Training aborted on a non-finite loss; `best` holds the last good
    /// checkpoint.
    pub diverged: bool,
}

/// Auxiliary sinks for run artifacts; both CSVs are optional.
#[derive(Default)]
pub struct TrainSinks<'a> {
    pub steps_csv: Option<&'a Path>,
    pub epochs_csv: Option<&'a Path>,
    /// Progress lines on stderr.
    pub verbose: bool,
}

/// Train on the dataset's train split, validating on its validation split.
/// `masks` must be supplied when the configuration needs them.
pub fn train(
    ds: &InteractionDataset,
    hyper: &Hyperparameters,
    masks: Option<&CoOccurrenceMasks>,
    sinks: &TrainSinks,
) -> Result<TrainOutput> {
    hyper.validate()?;
    if hyper.needs_masks() && masks.is_none() {
        return Err(Error::InvalidArgument(
            "this configuration needs prebuilt co-occurrence masks".into(),
        ));
    }

    let r = interaction_matrix(ds);
    let adj = normalized_adjacency(&r, hyper.self_loop);
    let aux_ops = if hyper.ssl && hyper.use_aux {
        Some(AuxOperators::from_masks(masks.expect("checked above")))
    } else {
        None
    };
    let n = ds.num_users + ds.num_items;
    let with_fe = hyper.ssl
        && hyper.use_aux
        && hyper.fe == crate::model::FeKind::NonlinearTransform;
    let mut state = EmbeddingState::init(
        ds.num_users,
        ds.num_items,
        hyper.dim,
        with_fe,
        &mut stream_rng(hyper.seed, stream::INIT, 0),
    );

    let mut work = ObjectiveWorkspace::new(ds.num_users, ds.num_items, hyper.dim);
    let mut eval_combined = Matrix::zeros(n, hyper.dim);
    let mut eval_scratch = PropScratch::new(n, hyper.dim);
    let adam = AdamParams::with_lr(hyper.lr);

    let mut steps_w = open_csv(sinks.steps_csv, "step,rec,ssl_user,ssl_item,reg,total")?;
    let mut epochs_w = open_csv(
        sinks.epochs_csv,
        "epoch,rec_loss,ssl_loss,val_recall@20,val_ndcg@20,seconds",
    )?;

    let mut best: Option<(EmbeddingState, usize, MetricsReport)> = None;
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    let mut diverged = false;

    'epochs: for epoch in 1..=hyper.epochs {
        let started = Instant::now();
        let views: Option<(AugmentedView, AugmentedView)> = if hyper.ssl && hyper.lambda > 0.0 {
            let v1 = generate_view(
                &r,
                hyper.aug,
                hyper.rho,
                hyper.layers,
                hyper.self_loop,
                &mut stream_rng(hyper.seed, stream::VIEW1, epoch as u64),
            )?;
            let v2 = generate_view(
                &r,
                hyper.aug,
                hyper.rho,
                hyper.layers,
                hyper.self_loop,
                &mut stream_rng(hyper.seed, stream::VIEW2, epoch as u64),
            )?;
            Some((v1, v2))
        } else {
            None
        };

        let batches = sample_epoch_batches(
            ds,
            hyper.batch,
            &mut stream_rng(hyper.seed, stream::BATCH, epoch as u64),
        )?;

        let obj = ObjectiveConfig {
            adj: &adj,
            view1: views.as_ref().map(|(v, _)| v),
            view2: views.as_ref().map(|(_, v)| v),
            masks: if hyper.ssl && hyper.use_mask { masks } else { None },
            aux_ops: aux_ops.as_ref(),
            fe_kind: hyper.fe,
            layers: hyper.layers,
            tau: hyper.tau,
            lambda: if hyper.ssl { hyper.lambda } else { 0.0 },
            mu: hyper.mu,
            include_positive: hyper.include_positive,
            full_contrast: hyper.full_contrast,
        };

        let mut rec_sum = 0.0;
        let mut ssl_sum = 0.0;
        for batch in &batches {
            let breakdown = total_loss(&state, batch, &obj, &mut work)?;
            if !breakdown.total.is_finite() {
                diverged = true;
                break 'epochs;
            }
            if let Err(Error::Diverged { .. }) = adam_step(&mut state, &work.g_x0, &work.fe_grads, &adam)
            {
                diverged = true;
                break 'epochs;
            }
            rec_sum += breakdown.rec;
            ssl_sum += breakdown.ssl_user + breakdown.ssl_item;
            let record = StepRecord {
                step: state.step,
                rec: breakdown.rec,
                ssl_user: breakdown.ssl_user,
                ssl_item: breakdown.ssl_item,
                reg: breakdown.reg,
                total: breakdown.total,
            };
            if let Some(w) = steps_w.as_mut() {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    record.step, record.rec, record.ssl_user, record.ssl_item, record.reg, record.total
                )
                .map_err(|e| Error::io(sinks.steps_csv.expect("present"), e))?;
            }
            steps.push(record);
        }

        let n_batches = batches.len() as f64;
        let mut record = EpochRecord {
            epoch,
            rec_loss: rec_sum / n_batches,
            ssl_loss: ssl_sum / n_batches,
            val_recall: None,
            val_ndcg: None,
            seconds: 0.0,
        };

        if epoch % hyper.eval_every == 0 || epoch == hyper.epochs {
            propagate_combined(
                PropagationOp::Single(&adj),
                &state.x0,
                hyper.layers,
                &mut eval_scratch,
                &mut eval_combined,
            );
            let report = evaluate(&eval_combined, ds, Split::Validation, 20);
            record.val_recall = Some(report.recall);
            record.val_ndcg = Some(report.ndcg);
            let improved = match &best {
                None => true,
                Some((_, _, b)) => report.recall > b.recall,
            };
            if improved {
                best = Some((state.clone(), epoch, report));
            }
        }

        record.seconds = started.elapsed().as_secs_f64();
        if sinks.verbose {
            eprintln!(
                "epoch {:>4}  rec {:>10.4}  ssl {:>10.4}  val_recall {}  ({:.2}s)",
                epoch,
                record.rec_loss,
                record.ssl_loss,
                record
                    .val_recall
                    .map_or("-".to_string(), |v| format!("{v:.4}")),
                record.seconds
            );
        }
        if let Some(w) = epochs_w.as_mut() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                record.epoch,
                record.rec_loss,
                record.ssl_loss,
                record.val_recall.map_or(String::new(), |v| v.to_string()),
                record.val_ndcg.map_or(String::new(), |v| v.to_string()),
                record.seconds
            )
            .map_err(|e| Error::io(sinks.epochs_csv.expect("present"), e))?;
        }
        epochs.push(record);

        if let Some((_, best_epoch, _)) = &best {
            if epoch - best_epoch >= hyper.patience {
                break;
            }
        }
    }

    let (best_state, best_epoch, best_val) = best.unwrap_or_else(|| {
        // validation never ran (e.g. no validation split and epochs <
        // eval_every); fall back to the final state
        (
            state.clone(),
            epochs.last().map_or(0, |e| e.epoch),
            MetricsReport {
                recall: 0.0,
                ndcg: 0.0,
                k: 20,
                users_evaluated: 0,
            },
        )
    });

    if let Some(w) = steps_w.as_mut() {
        w.flush().map_err(|e| Error::io(sinks.steps_csv.expect("present"), e))?;
    }
    if let Some(w) = epochs_w.as_mut() {
        w.flush().map_err(|e| Error::io(sinks.epochs_csv.expect("present"), e))?;
    }

    Ok(TrainOutput {
        best: best_state,
        best_epoch,
        best_val,
        epochs,
        steps,
        diverged,
    })
}

fn open_csv(path: Option<&Path>, header: &str) -> Result<Option<BufWriter<File>>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{header}").map_err(|e| Error::io(p, e))?;
            Ok(Some(w))
        }
    }
}

/// Final embeddings of a state on the original train graph.
pub fn final_embeddings(ds: &InteractionDataset, hyper: &Hyperparameters, state: &EmbeddingState) -> Matrix {
    let r = interaction_matrix(ds);
    let adj = normalized_adjacency(&r, hyper.self_loop);
    let n = ds.num_users + ds.num_items;
    let mut out = Matrix::zeros(n, state.dim());
    let mut scratch = PropScratch::new(n, state.dim());
    propagate_combined(PropagationOp::Single(&adj), &state.x0, hyper.layers, &mut scratch, &mut out);
    out
}
