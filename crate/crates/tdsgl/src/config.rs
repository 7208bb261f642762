//! Hyperparameters, experiment variants, and the flat key-value
//! configuration surface (TOML file + `--set key=value` overrides).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugKind;
use crate::error::{Error, Result};
use crate::model::FeKind;

/// Everything a training run is parameterized by. Serialized verbatim into
/// every run manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Hyperparameters {
    /// Co-occurrence threshold β of the false-negative filter.
    pub beta: u32,
    /// Optional per-side overrides of β.
    pub beta_user: Option<u32>,
    pub beta_item: Option<u32>,
    /// Softmax temperature τ.
    pub tau: f64,
    /// Weight λ of the self-supervised loss.
    pub lambda: f64,
    /// Weight μ of the L2 regularizer.
    pub mu: f64,
    /// Propagation depth L.
    pub layers: usize,
    /// Embedding dimension F.
    pub dim: usize,
    /// Dropout ratio ρ of the augmentation operator.
    pub rho: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub aug: AugKind,
    pub fe: FeKind,
    /// False-negative filtering in the contrastive denominator (off = -GIF).
    pub use_mask: bool,
    /// Auxiliary positives from the feature-extraction module (off = -TF).
    pub use_aux: bool,
    /// The whole contrastive task; off degenerates to LightGCN+BPR.
    pub ssl: bool,
    /// Contrast against all nodes instead of the in-batch set.
    pub full_contrast: bool,
    /// Self-loop in the propagation adjacency (Â = A + I).
    pub self_loop: bool,
    /// Keep the positive pair in the InfoNCE denominator even when the
    /// printed mask would drop the self entry.
    pub include_positive: bool,
    /// Early-stopping patience, in epochs without validation improvement.
    pub patience: usize,
    /// Validation cadence, in epochs.
    pub eval_every: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            beta: 8,
            beta_user: None,
            beta_item: None,
            tau: 0.2,
            lambda: 0.1,
            mu: 1e-4,
            layers: 3,
            dim: 64,
            rho: 0.1,
            lr: 1e-3,
            batch: 2048,
            epochs: 500,
            seed: 42,
            aug: AugKind::EdgeDropout,
            fe: FeKind::Linear,
            use_mask: true,
            use_aux: true,
            ssl: true,
            full_contrast: false,
            self_loop: true,
            include_positive: true,
            patience: 50,
            eval_every: 1,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 1 {
            return Err(Error::Config("mask.beta must be ≥ 1".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("ssl.tau must be positive".into()));
        }
        if self.lambda < 0.0 || self.mu < 0.0 {
            return Err(Error::Config("ssl.lambda and reg.mu must be ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config("aug.rho must be in [0, 1)".into()));
        }
        if self.dim == 0 || self.batch == 0 || self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "model.dim, train.batch, train.epochs, train.eval-every must be positive".into(),
            ));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_beta_user(&self) -> u32 {
        self.beta_user.unwrap_or(self.beta)
    }

    pub fn effective_beta_item(&self) -> u32 {
        self.beta_item.unwrap_or(self.beta)
    }

    /// Does this configuration need the co-occurrence masks at all?
    pub fn needs_masks(&self) -> bool {
        self.ssl && (self.use_mask || self.use_aux)
    }
}

/// Named experiment variants reproducing the paper's grid. Each maps
/// one-to-one onto an objective/encoder flag combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Tdsgl,
    SglEd,
    SglNd,
    SglRw,
    TdsglTf,
    TdsglGif,
    TdsglNl,
    #[serde(rename = "tdsgl-nl+w")]
    TdsglNlW,
    Lightgcn,
}

pub const ALL_VARIANTS: [Variant; 9] = [
    Variant::Tdsgl,
    Variant::SglEd,
    Variant::SglNd,
    Variant::SglRw,
    Variant::TdsglTf,
    Variant::TdsglGif,
    Variant::TdsglNl,
    Variant::TdsglNlW,
    Variant::Lightgcn,
];

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tdsgl" => Ok(Variant::Tdsgl),
            "sgl-ed" => Ok(Variant::SglEd),
            "sgl-nd" => Ok(Variant::SglNd),
            "sgl-rw" => Ok(Variant::SglRw),
            "tdsgl-tf" => Ok(Variant::TdsglTf),
            "tdsgl-gif" => Ok(Variant::TdsglGif),
            "tdsgl-nl" => Ok(Variant::TdsglNl),
            "tdsgl-nl+w" | "tdsgl-nlw" => Ok(Variant::TdsglNlW),
            "lightgcn" => Ok(Variant::Lightgcn),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Tdsgl => "tdsgl",
            Variant::SglEd => "sgl-ed",
            Variant::SglNd => "sgl-nd",
            Variant::SglRw => "sgl-rw",
            Variant::TdsglTf => "tdsgl-tf",
            Variant::TdsglGif => "tdsgl-gif",
            Variant::TdsglNl => "tdsgl-nl",
            Variant::TdsglNlW => "tdsgl-nl+w",
            Variant::Lightgcn => "lightgcn",
        }
    }

    /// Overwrite the flags this variant pins; everything else stays as
    /// configured.
    pub fn apply(&self, h: &mut Hyperparameters) {
        match self {
            Variant::Tdsgl => {
                h.ssl = true;
                h.use_mask = true;
                h.use_aux = true;
                h.fe = FeKind::Linear;
            }
            Variant::SglEd | Variant::SglNd | Variant::SglRw => {
                h.ssl = true;
                h.use_mask = false;
                h.use_aux = false;
                h.aug = match self {
                    Variant::SglEd => AugKind::EdgeDropout,
                    Variant::SglNd => AugKind::NodeDropout,
                    _ => AugKind::RandomWalk,
                };
            }
            Variant::TdsglTf => {
                h.ssl = true;
                h.use_mask = true;
                h.use_aux = false;
            }
            Variant::TdsglGif => {
                h.ssl = true;
                h.use_mask = false;
                h.use_aux = true;
            }
            Variant::TdsglNl => {
                h.ssl = true;
                h.use_mask = true;
                h.use_aux = true;
                h.fe = FeKind::Nonlinear;
            }
            Variant::TdsglNlW => {
                h.ssl = true;
                h.use_mask = true;
                h.use_aux = true;
                h.fe = FeKind::NonlinearTransform;
            }
            Variant::Lightgcn => {
                h.ssl = false;
                h.use_mask = false;
                h.use_aux = false;
            }
        }
    }
}

/// Full command configuration: dataset location, split, hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Config {
    pub data_dir: Option<PathBuf>,
    pub ratios: [f64; 3],
    pub hyper: Hyperparameters,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: None,
            ratios: [0.8, 0.1, 0.1],
            hyper: Hyperparameters::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got {other:?}"))),
    }
}

impl Config {
    /// Apply one flat `key = value` setting. Keys follow the
    /// `section.name` convention (`model.dim`, `ssl.tau`, `mask.beta`, …).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let h = &mut self.hyper;
        match key {
            "dataset.path" => self.data_dir = Some(PathBuf::from(value.trim())),
            "split.ratios" => {
                let parts: Vec<&str> = value
                    .trim()
                    .trim_start_matches('[')
                    .trim_end_matches(']')
                    .split(',')
                    .collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "split.ratios expects three comma-separated values, got {value:?}"
                    )));
                }
                for (slot, part) in self.ratios.iter_mut().zip(parts) {
                    *slot = parse_num("split.ratios", part)?;
                }
            }
            "model.dim" => h.dim = parse_num(key, value)?,
            "model.layers" => h.layers = parse_num(key, value)?,
            "model.self-loop" => h.self_loop = parse_bool(key, value)?,
            "ssl.tau" => h.tau = parse_num(key, value)?,
            "ssl.lambda" => h.lambda = parse_num(key, value)?,
            "ssl.enabled" => h.ssl = parse_bool(key, value)?,
            "ssl.full-contrast" => h.full_contrast = parse_bool(key, value)?,
            "ssl.include-positive-in-denominator" => h.include_positive = parse_bool(key, value)?,
            "ssl.use-mask" => h.use_mask = parse_bool(key, value)?,
            "ssl.use-aux" => h.use_aux = parse_bool(key, value)?,
            "mask.beta" => h.beta = parse_num(key, value)?,
            "mask.beta-user" => h.beta_user = Some(parse_num(key, value)?),
            "mask.beta-item" => h.beta_item = Some(parse_num(key, value)?),
            "aug.kind" => h.aug = AugKind::parse(value.trim())?,
            "aug.rho" => h.rho = parse_num(key, value)?,
            "fe.kind" => h.fe = FeKind::parse(value.trim())?,
            "reg.mu" => h.mu = parse_num(key, value)?,
            "train.lr" => h.lr = parse_num(key, value)?,
            "train.batch" => h.batch = parse_num(key, value)?,
            "train.epochs" => h.epochs = parse_num(key, value)?,
            "train.seed" => h.seed = parse_num(key, value)?,
            "train.patience" => h.patience = parse_num(key, value)?,
            "train.eval-every" => h.eval_every = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override as passed on the command line.
    pub fn set_kv(&mut self, kv: &str) -> Result<()> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {kv:?}")))?;
        self.set(key.trim(), value.trim())
    }

    /// Merge a TOML file of flat (possibly dotted) keys into this config.
    pub fn apply_toml(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut flat = Vec::new();
        flatten_toml("", &table, &mut flat);
        for (key, value) in flat {
            self.set(&key, &value)?;
        }
        Ok(())
    }
}

fn toml_value_to_string(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => items
            .iter()
            .map(toml_value_to_string)
            .collect::<Vec<_>>()
            .join(","),
        other => other.to_string(),
    }
}

fn flatten_toml(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten_toml(&key, t, out),
            other => out.push((key, toml_value_to_string(other))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Hyperparameters::default().validate().unwrap();
    }

    #[test]
    fn variant_flags_are_mutually_exclusive() {
        // every variant yields a distinct (ssl, mask, aux, fe, aug-pinned) tuple
        let mut seen = std::collections::HashSet::new();
        for v in ALL_VARIANTS {
            let mut h = Hyperparameters::default();
            v.apply(&mut h);
            let key = (h.ssl, h.use_mask, h.use_aux, h.fe.as_str(), match v {
                Variant::SglEd | Variant::SglNd | Variant::SglRw => h.aug.as_str(),
                _ => "-",
            });
            assert!(seen.insert(key), "variant {v:?} duplicates flag combination");
        }
    }

    #[test]
    fn variant_parse_roundtrip() {
        for v in ALL_VARIANTS {
            assert_eq!(Variant::parse(v.as_str()).unwrap(), v);
        }
        assert_eq!(Variant::parse("tdsgl-nlw").unwrap(), Variant::TdsglNlW);
        assert!(Variant::parse("nope").is_err());
    }

    #[test]
    fn set_known_keys() {
        let mut c = Config::default();
        c.set("model.dim", "32").unwrap();
        c.set("ssl.tau", "0.5").unwrap();
        c.set("mask.beta", "6").unwrap();
        c.set("aug.kind", "nd").unwrap();
        c.set("split.ratios", "0.7,0.2,0.1").unwrap();
        c.set_kv("train.lr=0.01").unwrap();
        assert_eq!(c.hyper.dim, 32);
        assert_eq!(c.hyper.tau, 0.5);
        assert_eq!(c.hyper.beta, 6);
        assert_eq!(c.hyper.aug, AugKind::NodeDropout);
        assert_eq!(c.ratios, [0.7, 0.2, 0.1]);
        assert_eq!(c.hyper.lr, 0.01);
        assert!(c.set("bogus.key", "1").is_err());
    }

    #[test]
    fn toml_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(
            &path,
            "model.dim = 16\nssl.lambda = 0.2\nmask.beta = 5\nsplit.ratios = [0.8, 0.1, 0.1]\n\
             aug.kind = \"rw\"\ntrain.seed = 7\n",
        )
        .unwrap();
        let mut c = Config::default();
        c.apply_toml(&path).unwrap();
        assert_eq!(c.hyper.dim, 16);
        assert_eq!(c.hyper.lambda, 0.2);
        assert_eq!(c.hyper.beta, 5);
        assert_eq!(c.hyper.aug, AugKind::RandomWalk);
        assert_eq!(c.hyper.seed, 7);
    }
}
