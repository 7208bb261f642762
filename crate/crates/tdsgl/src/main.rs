use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tdsgl::config::{Config, Variant};
use tdsgl::data::Split;
use tdsgl::error::Result;
use tdsgl::experiment::{self, PreparedData};
use tdsgl::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "tdsgl", version, about = "Topology-aware debiased graph contrastive learning for recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct HyperArgs {
    /// Flat config file (TOML, dotted keys like `model.dim`)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flat key=value override (repeatable, wins over the config file)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Co-occurrence threshold β
    #[arg(long)]
    beta: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Augmentation kind: ed | nd | rw
    #[arg(long)]
    aug: Option<String>,
    /// Feature-extraction kind: linear | nl | nl+w
    #[arg(long)]
    fe: Option<String>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
}

impl HyperArgs {
    fn apply(&self, cfg: &mut Config) -> Result<()> {
        if let Some(path) = &self.config {
            cfg.apply_toml(path)?;
        }
        for kv in &self.set {
            cfg.set_kv(kv)?;
        }
        // dedicated flags win over the config file and --set
        macro_rules! flag {
            ($field:expr, $key:literal) => {
                if let Some(v) = &$field {
                    cfg.set($key, &v.to_string())?;
                }
            };
        }
        flag!(self.beta, "mask.beta");
        flag!(self.seed, "train.seed");
        flag!(self.epochs, "train.epochs");
        flag!(self.batch, "train.batch");
        flag!(self.dim, "model.dim");
        flag!(self.layers, "model.layers");
        flag!(self.lr, "train.lr");
        flag!(self.lambda, "ssl.lambda");
        flag!(self.tau, "ssl.tau");
        flag!(self.rho, "aug.rho");
        flag!(self.aug, "aug.kind");
        flag!(self.fe, "fe.kind");
        flag!(self.patience, "train.patience");
        flag!(self.eval_every, "train.eval-every");
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw adjacency-list files, split, and cache graph topology
    Prepare {
        /// Raw dataset: one adjacency file or a directory with train/test files
        #[arg(long)]
        input: PathBuf,
        /// Output directory for the prepared dataset
        #[arg(long)]
        out: PathBuf,
        /// Train/validation/test ratios
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// β whose masks should be pre-built
        #[arg(long, default_value_t = 8)]
        beta: u32,
    },
    /// Train one variant (optionally repeated over consecutive seeds)
    Train {
        /// Prepared dataset directory (from `prepare`)
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "tdsgl")]
        variant: String,
        /// Root directory for run outputs
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Number of seeded repeats (seed, seed+1, …) with a mean/std summary
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Re-evaluate a run directory's checkpoint
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Prepared dataset directory the run was trained on
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 20)]
        k: usize,
    },
    /// One full run per β value, with a recall/ndcg-vs-β summary
    SweepBeta {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated β values, e.g. 6,7,8,9,10
        #[arg(long)]
        betas: String,
        #[arg(long, default_value = "tdsgl")]
        variant: String,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Run the ablation matrix (SGL baseline, -TF, -GIF, full model)
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated variant names
        #[arg(long, default_value = "sgl-ed,tdsgl-tf,tdsgl-gif,tdsgl")]
        variants: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Generate a synthetic interaction corpus as an adjacency-list file
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1891)]
        users: usize,
        #[arg(long, default_value_t = 15438)]
        items: usize,
        #[arg(long, default_value_t = 92_834)]
        interactions: usize,
        #[arg(long, default_value_t = 20)]
        topics: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| tdsgl::Error::Config(format!("cannot parse ratios {s:?}")))?;
    if parts.len() != 3 {
        return Err(tdsgl::Error::Config("ratios need three values".into()));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn parse_betas(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| tdsgl::Error::Config(format!("cannot parse beta {p:?}")))
        })
        .collect()
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Prepare {
            input,
            out,
            ratios,
            seed,
            beta,
        } => {
            let ratios = parse_ratios(&ratios)?;
            let manifest = experiment::prepare(&input, &out, ratios, seed, beta)?;
            println!(
                "prepared {}: {} users, {} items, {} interactions ({} train / {} val / {} test)",
                out.display(),
                manifest.num_users,
                manifest.num_items,
                manifest.num_interactions,
                manifest.train,
                manifest.validation,
                manifest.test
            );
        }
        Command::Train {
            data,
            variant,
            out,
            repeats,
            quiet,
            hyper,
        } => {
            let variant = Variant::parse(&variant)?;
            let mut cfg = Config::default();
            hyper.apply(&mut cfg)?;
            let prepared = PreparedData::load(&data)?;
            if repeats <= 1 {
                let run =
                    experiment::run_training(&prepared, variant, &cfg.hyper, &out, !quiet)?;
                println!(
                    "{}: test recall@20 {:.4}, ndcg@20 {:.4} (best epoch {}) → {}",
                    variant.as_str(),
                    run.test.recall,
                    run.test.ndcg,
                    run.best_epoch,
                    run.dir.display()
                );
            } else {
                let summary =
                    experiment::run_repeats(&prepared, variant, &cfg.hyper, repeats, &out, !quiet)?;
                println!(
                    "{} over {} seeds: recall@20 {:.4} ± {:.4}, ndcg@20 {:.4} ± {:.4}",
                    summary.variant,
                    summary.seeds.len(),
                    summary.recall_mean,
                    summary.recall_std,
                    summary.ndcg_mean,
                    summary.ndcg_std
                );
            }
        }
        Command::Evaluate { run, data, split, k } => {
            let split = match split.as_str() {
                "test" => Split::Test,
                "validation" | "val" => Split::Validation,
                other => {
                    return Err(tdsgl::Error::Config(format!("unknown split {other:?}")))
                }
            };
            let report = experiment::evaluate_run(&run, Some(&data), split, k)?;
            println!(
                "{{\"recall@{}\": {}, \"ndcg@{}\": {}, \"k\": {}, \"n_users\": {}}}",
                k, report.recall, k, report.ndcg, k, report.users_evaluated
            );
        }
        Command::SweepBeta {
            data,
            betas,
            variant,
            repeats,
            out,
            quiet,
            hyper,
        } => {
            let variant = Variant::parse(&variant)?;
            let betas = parse_betas(&betas)?;
            let mut cfg = Config::default();
            hyper.apply(&mut cfg)?;
            let prepared = PreparedData::load(&data)?;
            let rows =
                experiment::sweep_beta(&prepared, variant, &cfg.hyper, &betas, repeats, &out, !quiet)?;
            println!("beta,recall_mean,recall_std,ndcg_mean,ndcg_std");
            for (beta, s) in rows {
                println!(
                    "{},{:.4},{:.4},{:.4},{:.4}",
                    beta, s.recall_mean, s.recall_std, s.ndcg_mean, s.ndcg_std
                );
            }
        }
        Command::Ablate {
            data,
            variants,
            repeats,
            out,
            quiet,
            hyper,
        } => {
            let variants: Vec<Variant> = variants
                .split(',')
                .map(|v| Variant::parse(v.trim()))
                .collect::<Result<_>>()?;
            let mut cfg = Config::default();
            hyper.apply(&mut cfg)?;
            let prepared = PreparedData::load(&data)?;
            let rows =
                experiment::ablate(&prepared, &variants, &cfg.hyper, repeats, &out, !quiet)?;
            println!("variant,recall_mean,recall_std,ndcg_mean,ndcg_std");
            for s in rows {
                println!(
                    "{},{:.4},{:.4},{:.4},{:.4}",
                    s.variant, s.recall_mean, s.recall_std, s.ndcg_mean, s.ndcg_std
                );
            }
        }
        Command::Synth {
            out,
            users,
            items,
            interactions,
            topics,
            seed,
        } => {
            let cfg = SynthConfig {
                num_users: users,
                num_items: items,
                interactions,
                topics,
                zipf_exponent: 1.2,
                in_topic_prob: 0.88,
                seed,
            };
            let ds = synth::generate(&cfg)?;
            synth::write_adjacency(&out, &ds)?;
            println!(
                "wrote {} ({} users, {} items, {} interactions)",
                out.display(),
                ds.num_users,
                ds.num_items,
                ds.num_interactions()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
