//! Experiment orchestration: prepared-dataset directories with cached
//! topology, self-describing run directories, seed repeats, β sweeps and
//! ablation matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Hyperparameters, Variant};
use crate::data::{load_raw, load_split, save_split, split_dataset, DatasetManifest, InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::graph::{interaction_matrix, CoOccurrenceMasks};
use crate::model::EmbeddingState;
use crate::sparse::CsrMatrix;
use crate::trainer::{final_embeddings, train, TrainOutput, TrainSinks};

/// A prepared dataset directory: split files, manifest, cached topology.
pub struct PreparedData {
    pub dir: PathBuf,
    pub ds: InteractionDataset,
    pub manifest: DatasetManifest,
}

impl PreparedData {
    pub fn load(dir: &Path) -> Result<Self> {
        let (ds, manifest) = load_split(dir)?;
        Ok(PreparedData {
            dir: dir.to_path_buf(),
            ds,
            manifest,
        })
    }

    fn cache_dir(&self) -> PathBuf {
        self.dir.join("cache")
    }

    /// Load the cached co-occurrence matrices, building and caching them on
    /// first use.
    pub fn cooccurrence(&self) -> Result<(CsrMatrix, CsrMatrix)> {
        let dir = self.cache_dir();
        let pu_path = dir.join("p_user.bin");
        let pi_path = dir.join("p_item.bin");
        if pu_path.is_file() && pi_path.is_file() {
            return Ok((CsrMatrix::read_from(&pu_path)?, CsrMatrix::read_from(&pi_path)?));
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let r = interaction_matrix(&self.ds);
        let (pu, pi) = crate::graph::cooccurrence(&r);
        pu.write_to(&pu_path)?;
        pi.write_to(&pi_path)?;
        Ok((pu, pi))
    }

    /// Masks for the requested thresholds, with the false-negative graphs
    /// cached alongside the co-occurrence matrices.
    pub fn masks(&self, hyper: &Hyperparameters) -> Result<CoOccurrenceMasks> {
        let (pu, pi) = self.cooccurrence()?;
        let masks = CoOccurrenceMasks::from_cooccurrence(
            pu,
            pi,
            hyper.beta,
            hyper.beta_user,
            hyper.beta_item,
        )?;
        let dir = self.cache_dir();
        let fu = dir.join(format!("f_user_beta{}.bin", masks.beta_user));
        let fi = dir.join(format!("f_item_beta{}.bin", masks.beta_item));
        if !fu.is_file() {
            masks.user.f.write_to(&fu)?;
        }
        if !fi.is_file() {
            masks.item.f.write_to(&fi)?;
        }
        Ok(masks)
    }
}

/// Parse, split, serialize, and warm the topology caches. Idempotent: if the
/// directory already holds a manifest for the same source/ratios/seed, the
/// existing preparation is reused.
pub fn prepare(
    input: &Path,
    out: &Path,
    ratios: (f64, f64, f64),
    seed: u64,
    beta: u32,
) -> Result<DatasetManifest> {
    let source = input.display().to_string();
    if let Ok((_, existing)) = load_split(out) {
        if existing.source == source
            && existing.seed == seed
            && existing.ratios == [ratios.0, ratios.1, ratios.2]
        {
            let prepared = PreparedData::load(out)?;
            let hyper = Hyperparameters {
                beta,
                ..Default::default()
            };
            hyper.validate()?;
            prepared.masks(&hyper)?; // warm the cache if the β changed
            return Ok(existing);
        }
    }
    let (raw, id_map, _) = load_raw(input)?;
    let ds = split_dataset(&raw, ratios, seed)?;
    let manifest = save_split(out, &ds, &id_map, seed, ratios, &source)?;
    let prepared = PreparedData::load(out)?;
    let hyper = Hyperparameters {
        beta,
        ..Default::default()
    };
    prepared.masks(&hyper)?;
    Ok(manifest)
}

/// Run manifest: the hyperparameters verbatim plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub variant: String,
    pub hyper: Hyperparameters,
    pub dataset_hash: String,
    pub git: String,
    pub started_at: String,
    pub finished_at: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub diverged: bool,
}

/// Final metrics JSON written at the end of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalMetrics {
    #[serde(rename = "recall@20")]
    pub recall: f64,
    #[serde(rename = "ndcg@20")]
    pub ndcg: f64,
    pub k: usize,
    pub n_users: usize,
    pub split: String,
    pub val_recall: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub variant: Variant,
    pub seed: u64,
    pub test: MetricsReport,
    pub val_recall: f64,
    pub best_epoch: usize,
    pub diverged: bool,
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn now_iso() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Allocate a fresh, never-reused run directory.
fn allocate_run_dir(root: &Path, label: &str, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    for counter in 0..10_000u32 {
        let name = if counter == 0 {
            format!("{stamp}__{label}__seed{seed}")
        } else {
            format!("{stamp}__{label}__seed{seed}__{counter}")
        };
        let dir = root.join(&name);
        if !dir.exists() {
            std::fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            return Ok(dir);
        }
    }
    Err(Error::InvalidArgument("could not allocate a run directory".into()))
}

/// Execute one training run and write its artifacts (manifest, CSV traces,
/// best checkpoint, final test metrics) under a fresh run directory.
pub fn run_training(
    prepared: &PreparedData,
    variant: Variant,
    hyper: &Hyperparameters,
    runs_root: &Path,
    verbose: bool,
) -> Result<RunArtifacts> {
    let mut hyper = hyper.clone();
    variant.apply(&mut hyper);
    hyper.validate()?;

    let masks = if hyper.needs_masks() {
        Some(prepared.masks(&hyper)?)
    } else {
        None
    };

    let dir = allocate_run_dir(runs_root, variant.as_str(), hyper.seed)?;
    let started_at = now_iso();
    let steps_path = dir.join("steps.csv");
    let epochs_path = dir.join("epochs.csv");
    let sinks = TrainSinks {
        steps_csv: Some(&steps_path),
        epochs_csv: Some(&epochs_path),
        verbose,
    };
    let out: TrainOutput = train(&prepared.ds, &hyper, masks.as_ref(), &sinks)?;

    out.best.save(&dir.join("checkpoint.bin"))?;

    let combined = final_embeddings(&prepared.ds, &hyper, &out.best);
    let test = evaluate(&combined, &prepared.ds, Split::Test, 20);

    let manifest = RunManifest {
        variant: variant.as_str().to_string(),
        hyper: hyper.clone(),
        dataset_hash: prepared.manifest.content_hash.clone(),
        git: git_describe(),
        started_at,
        finished_at: now_iso(),
        best_epoch: out.best_epoch,
        epochs_run: out.epochs.len(),
        diverged: out.diverged,
    };
    write_json(&dir.join("run_manifest.json"), &manifest)?;
    let final_metrics = FinalMetrics {
        recall: test.recall,
        ndcg: test.ndcg,
        k: test.k,
        n_users: test.users_evaluated,
        split: "test".into(),
        val_recall: out.best_val.recall,
    };
    write_json(&dir.join("final_metrics.json"), &final_metrics)?;

    Ok(RunArtifacts {
        dir,
        variant,
        seed: hyper.seed,
        test,
        val_recall: out.best_val.recall,
        best_epoch: out.best_epoch,
        diverged: out.diverged,
    })
}

/// Re-evaluate a run directory's checkpoint against a dataset split.
pub fn evaluate_run(
    run_dir: &Path,
    data_dir: Option<&Path>,
    split: Split,
    k: usize,
) -> Result<MetricsReport> {
    let manifest_path = run_dir.join("run_manifest.json");
    let f = File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: RunManifest = serde_json::from_reader(BufReader::new(f))?;

    let data_dir = match data_dir {
        Some(d) => d.to_path_buf(),
        None => {
            return Err(Error::InvalidArgument(
                "evaluate needs --data pointing at the prepared dataset".into(),
            ))
        }
    };
    let prepared = PreparedData::load(&data_dir)?;
    if prepared.manifest.content_hash != manifest.dataset_hash {
        return Err(Error::InvalidArgument(format!(
            "dataset hash mismatch: run was trained on {}, directory holds {}",
            manifest.dataset_hash, prepared.manifest.content_hash
        )));
    }
    let state = EmbeddingState::load(&run_dir.join("checkpoint.bin"))?;
    let combined = final_embeddings(&prepared.ds, &manifest.hyper, &state);
    Ok(evaluate(&combined, &prepared.ds, split, k))
}

/// Mean/std summary over seed repeats of one variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub variant: String,
    pub seeds: Vec<u64>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub ndcg_mean: f64,
    pub ndcg_std: f64,
    pub run_dirs: Vec<String>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

/// Run `repeats` seeds (seed+0 .. seed+repeats−1) of one variant.
pub fn run_repeats(
    prepared: &PreparedData,
    variant: Variant,
    hyper: &Hyperparameters,
    repeats: usize,
    runs_root: &Path,
    verbose: bool,
) -> Result<RepeatSummary> {
    let mut seeds = Vec::new();
    let mut recall = Vec::new();
    let mut ndcg = Vec::new();
    let mut run_dirs = Vec::new();
    for k in 0..repeats.max(1) as u64 {
        let mut h = hyper.clone();
        h.seed = hyper.seed + k;
        let run = run_training(prepared, variant, &h, runs_root, verbose)?;
        seeds.push(h.seed);
        recall.push(run.test.recall);
        ndcg.push(run.test.ndcg);
        run_dirs.push(run.dir.display().to_string());
    }
    let (recall_mean, recall_std) = mean_std(&recall);
    let (ndcg_mean, ndcg_std) = mean_std(&ndcg);
    let summary = RepeatSummary {
        variant: variant.as_str().to_string(),
        seeds,
        recall,
        ndcg,
        recall_mean,
        recall_std,
        ndcg_mean,
        ndcg_std,
        run_dirs,
    };
    write_json(&runs_root.join(format!("summary_{}.json", variant.as_str())), &summary)?;
    Ok(summary)
}

/// One full run per β value; writes a recall/ndcg-vs-β summary CSV.
pub fn sweep_beta(
    prepared: &PreparedData,
    variant: Variant,
    hyper: &Hyperparameters,
    betas: &[u32],
    repeats: usize,
    runs_root: &Path,
    verbose: bool,
) -> Result<Vec<(u32, RepeatSummary)>> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("empty beta sweep".into()));
    }
    let mut rows = Vec::new();
    for &beta in betas {
        let mut h = hyper.clone();
        h.beta = beta;
        h.beta_user = None;
        h.beta_item = None;
        let summary = run_repeats(prepared, variant, &h, repeats, runs_root, verbose)?;
        rows.push((beta, summary));
    }
    let csv_path = runs_root.join("sweep_beta.csv");
    let f = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "beta,recall_mean,recall_std,ndcg_mean,ndcg_std,repeats")
        .map_err(|e| Error::io(&csv_path, e))?;
    for (beta, s) in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            beta,
            s.recall_mean,
            s.recall_std,
            s.ndcg_mean,
            s.ndcg_std,
            s.seeds.len()
        )
        .map_err(|e| Error::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(rows)
}

/// Run an ablation matrix (one summary per variant).
pub fn ablate(
    prepared: &PreparedData,
    variants: &[Variant],
    hyper: &Hyperparameters,
    repeats: usize,
    runs_root: &Path,
    verbose: bool,
) -> Result<Vec<RepeatSummary>> {
    let mut out = Vec::new();
    for &v in variants {
        out.push(run_repeats(prepared, v, hyper, repeats, runs_root, verbose)?);
    }
    let csv_path = runs_root.join("ablation.csv");
    let f = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "variant,recall_mean,recall_std,ndcg_mean,ndcg_std,repeats")
        .map_err(|e| Error::io(&csv_path, e))?;
    for s in &out {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.variant, s.recall_mean, s.recall_std, s.ndcg_mean, s.ndcg_std, s.seeds.len()
        )
        .map_err(|e| Error::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush().map_err(|e| Error::io(path, e))
}
