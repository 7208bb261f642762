//! Interaction datasets: parsing, deterministic splitting, serialization.
//!
//! Input files follow the adjacency-list convention used by the public
//! LightGCN/SGL data releases: each non-empty line is a user id followed by
//! the item ids that user interacted with, whitespace-separated. Raw ids may
//! be sparse; they are re-indexed densely in first-seen order and the mapping
//! is persisted next to the split files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// User/item id spaces plus train/validation/test interaction sets.
///
/// Indices are dense: users in `[0, num_users)`, items in `[0, num_items)`.
/// An unsplit dataset carries everything in `train`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<(u32, u32)>,
    pub validation: Vec<(u32, u32)>,
    pub test: Vec<(u32, u32)>,
}

impl InteractionDataset {
    pub fn num_interactions(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// 1 − interactions / (users · items)
    pub fn sparsity(&self) -> f64 {
        let cells = self.num_users as f64 * self.num_items as f64;
        if cells == 0.0 {
            return 0.0;
        }
        1.0 - self.num_interactions() as f64 / cells
    }

    /// Train items per user, columns sorted ascending.
    pub fn train_items_by_user(&self) -> Vec<Vec<u32>> {
        let mut per_user = vec![Vec::new(); self.num_users];
        for &(u, i) in &self.train {
            per_user[u as usize].push(i);
        }
        for items in &mut per_user {
            items.sort_unstable();
        }
        per_user
    }

    /// Items of the requested split per user, sorted ascending.
    pub fn items_by_user(&self, split: Split) -> Vec<Vec<u32>> {
        let pairs = match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        };
        let mut per_user = vec![Vec::new(); self.num_users];
        for &(u, i) in pairs {
            per_user[u as usize].push(i);
        }
        for items in &mut per_user {
            items.sort_unstable();
        }
        per_user
    }

    /// Content hash over the id spaces and all three splits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_users as u64).to_le_bytes());
        h.update((self.num_items as u64).to_le_bytes());
        for part in [&self.train, &self.validation, &self.test] {
            let mut sorted = part.clone();
            sorted.sort_unstable();
            h.update((sorted.len() as u64).to_le_bytes());
            for (u, i) in sorted {
                h.update(u.to_le_bytes());
                h.update(i.to_le_bytes());
            }
        }
        hex_string(&h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Mapping from dense internal indices back to raw file ids.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdMap {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

/// Parse one adjacency-list stream into an unsplit dataset.
///
/// Duplicate (user, item) pairs collapse to a single implicit-feedback
/// interaction. Returns the dataset, the id map, and the interaction count.
pub fn parse_adjacency_list(reader: impl Read) -> Result<(InteractionDataset, IdMap, usize)> {
    let mut parser = AdjacencyParser::default();
    parser.consume(reader)?;
    parser.finish()
}

/// Incremental adjacency-list parser; lets multiple files share one id space.
#[derive(Default)]
pub struct AdjacencyParser {
    user_ids: HashMap<u64, u32>,
    item_ids: HashMap<u64, u32>,
    id_map: IdMap,
    pairs: Vec<(u32, u32)>,
    seen: HashMap<(u32, u32), ()>,
    lines_consumed: usize,
}

impl AdjacencyParser {
    pub fn consume(&mut self, reader: impl Read) -> Result<()> {
        let buf = BufReader::new(reader);
        for line in buf.lines() {
            self.lines_consumed += 1;
            let line_no = self.lines_consumed;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let mut tokens = line.split_whitespace();
            let Some(first) = tokens.next() else {
                continue; // blank line
            };
            let raw_user: u64 = first.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("non-integer user id {first:?}"),
            })?;
            let next_user = self.user_ids.len() as u32;
            let u = *self.user_ids.entry(raw_user).or_insert(next_user);
            if u == next_user {
                self.id_map.users.push(raw_user);
            }
            for tok in tokens {
                let raw_item: u64 = tok.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("non-integer item id {tok:?}"),
                })?;
                let next_item = self.item_ids.len() as u32;
                let i = *self.item_ids.entry(raw_item).or_insert(next_item);
                if i == next_item {
                    self.id_map.items.push(raw_item);
                }
                if self.seen.insert((u, i), ()).is_none() {
                    self.pairs.push((u, i));
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(InteractionDataset, IdMap, usize)> {
        if self.user_ids.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "empty input: no users found".into(),
            });
        }
        let count = self.pairs.len();
        let ds = InteractionDataset {
            num_users: self.user_ids.len(),
            num_items: self.item_ids.len(),
            train: self.pairs,
            validation: Vec::new(),
            test: Vec::new(),
        };
        Ok((ds, self.id_map, count))
    }
}

/// Per-user deterministic split.
///
/// Users with fewer than 3 interactions keep everything in train. Otherwise
/// validation and test each receive `max(1, floor(n · ratio))` items when the
/// corresponding ratio is positive, and train keeps the remainder, so every
/// split user stays rankable.
pub fn split_dataset(
    dataset: &InteractionDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<InteractionDataset> {
    let (r_train, r_val, r_test) = ratios;
    let sum = r_train + r_val + r_test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    if r_train < 0.0 || r_val < 0.0 || r_test < 0.0 {
        return Err(Error::InvalidArgument("negative split ratio".into()));
    }

    // All interactions, grouped per user in first-seen order.
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); dataset.num_users];
    for part in [&dataset.train, &dataset.validation, &dataset.test] {
        for &(u, i) in part.iter() {
            per_user[u as usize].push(i);
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7370_6c69_745f_7631); // "split_v1"
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (u, items) in per_user.iter_mut().enumerate() {
        let u = u as u32;
        let n = items.len();
        if n < 3 {
            train.extend(items.iter().map(|&i| (u, i)));
            continue;
        }
        items.sort_unstable();
        items.shuffle(&mut rng);
        let n_val = if r_val > 0.0 {
            ((n as f64 * r_val).floor() as usize).max(1)
        } else {
            0
        };
        let n_test = if r_test > 0.0 {
            ((n as f64 * r_test).floor() as usize).max(1)
        } else {
            0
        };
        let n_train = n - n_val - n_test;
        for (k, &i) in items.iter().enumerate() {
            if k < n_train {
                train.push((u, i));
            } else if k < n_train + n_val {
                validation.push((u, i));
            } else {
                test.push((u, i));
            }
        }
    }

    Ok(InteractionDataset {
        num_users: dataset.num_users,
        num_items: dataset.num_items,
        train,
        validation,
        test,
    })
}

/// Dataset manifest written by `prepare`, read back by every other command.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub id_map: String,
    pub source: String,
    pub content_hash: String,
}

pub fn save_split(
    dir: &Path,
    ds: &InteractionDataset,
    id_map: &IdMap,
    seed: u64,
    ratios: (f64, f64, f64),
    source: &str,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_pairs(&dir.join("train.txt"), ds.num_users, &ds.train)?;
    write_pairs(&dir.join("validation.txt"), ds.num_users, &ds.validation)?;
    write_pairs(&dir.join("test.txt"), ds.num_users, &ds.test)?;

    let id_map_path = dir.join("idmap.json");
    let f = File::create(&id_map_path).map_err(|e| Error::io(&id_map_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), id_map)?;

    let manifest = DatasetManifest {
        num_users: ds.num_users,
        num_items: ds.num_items,
        num_interactions: ds.num_interactions(),
        train: ds.train.len(),
        validation: ds.validation.len(),
        test: ds.test.len(),
        seed,
        ratios: [ratios.0, ratios.1, ratios.2],
        id_map: "idmap.json".into(),
        source: source.into(),
        content_hash: ds.content_hash(),
    };
    let manifest_path = dir.join("manifest.json");
    let f = File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest)?;
    Ok(manifest)
}

pub fn load_split(dir: &Path) -> Result<(InteractionDataset, DatasetManifest)> {
    let manifest_path = dir.join("manifest.json");
    let f = File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(f))?;

    let train = read_pairs(&dir.join("train.txt"))?;
    let validation = read_pairs(&dir.join("validation.txt"))?;
    let test = read_pairs(&dir.join("test.txt"))?;
    let ds = InteractionDataset {
        num_users: manifest.num_users,
        num_items: manifest.num_items,
        train,
        validation,
        test,
    };
    if ds.num_interactions() != manifest.num_interactions {
        return Err(Error::format(
            dir,
            format!(
                "manifest records {} interactions, files hold {}",
                manifest.num_interactions,
                ds.num_interactions()
            ),
        ));
    }
    Ok((ds, manifest))
}

/// Parse a raw dataset path: either a single adjacency-list file, or a
/// directory whose `train.txt`/`validation.txt`/`test.txt` files are merged
/// into one unsplit dataset sharing a single id space.
pub fn load_raw(path: &Path) -> Result<(InteractionDataset, IdMap, usize)> {
    if path.is_dir() {
        let mut parser = AdjacencyParser::default();
        let mut found = false;
        for name in ["train.txt", "validation.txt", "val.txt", "test.txt"] {
            let p = path.join(name);
            if p.is_file() {
                found = true;
                let f = File::open(&p).map_err(|e| Error::io(&p, e))?;
                parser.consume(f)?;
            }
        }
        if !found {
            return Err(Error::format(
                path,
                "directory contains no train.txt/test.txt adjacency files",
            ));
        }
        parser.finish()
    } else {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        parse_adjacency_list(f)
    }
}

fn write_pairs(path: &Path, num_users: usize, pairs: &[(u32, u32)]) -> Result<()> {
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); num_users];
    for &(u, i) in pairs {
        per_user[u as usize].push(i);
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for (u, items) in per_user.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        write!(w, "{u}").map_err(|e| Error::io(path, e))?;
        for i in items {
            write!(w, " {i}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else { continue };
        let u: u32 = first.parse().map_err(|_| Error::Parse {
            line: no + 1,
            msg: format!("non-integer user id {first:?}"),
        })?;
        for tok in tokens {
            let i: u32 = tok.parse().map_err(|_| Error::Parse {
                line: no + 1,
                msg: format!("non-integer item id {tok:?}"),
            })?;
            pairs.push((u, i));
        }
    }
    Ok(pairs)
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
