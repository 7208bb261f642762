//! Deterministic synthetic interaction corpora.
//!
//! The generator produces implicit-feedback data with the structure
//! collaborative filtering relies on: items grouped into latent topics with
//! Zipf-skewed popularity inside each topic, users drawing most interactions
//! from a small personal topic mixture and the rest from the global
//! distribution. Shared in-topic listening makes user/item co-occurrence
//! counts meaningful, so threshold-based false-negative detection has signal
//! to find. Every item receives at least one interaction and the total is
//! exact, so generated corpora match requested dataset statistics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::InteractionDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub interactions: usize,
    pub topics: usize,
    /// Popularity skew inside a topic (Zipf exponent).
    pub zipf_exponent: f64,
    /// Probability that a draw comes from the user's own topic mixture.
    pub in_topic_prob: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Same scale as the LastFM corpus used throughout the experiments.
    pub fn lastfm_scale(seed: u64) -> Self {
        SynthConfig {
            num_users: 1891,
            num_items: 15438,
            interactions: 92_834,
            topics: 20,
            zipf_exponent: 1.2,
            in_topic_prob: 0.88,
            seed,
        }
    }
}

struct TopicModel {
    /// Items of each topic, in sampling order (most popular first).
    topic_items: Vec<Vec<u32>>,
    /// Cumulative Zipf weights per topic, aligned with `topic_items`.
    topic_cdf: Vec<Vec<f64>>,
    /// Topic of each item.
    item_topic: Vec<usize>,
}

impl TopicModel {
    fn build(cfg: &SynthConfig, rng: &mut ChaCha20Rng) -> Self {
        let t = cfg.topics;
        let mut items: Vec<u32> = (0..cfg.num_items as u32).collect();
        items.shuffle(rng);
        let mut topic_items: Vec<Vec<u32>> = vec![Vec::new(); t];
        let mut item_topic = vec![0usize; cfg.num_items];
        for (k, &item) in items.iter().enumerate() {
            topic_items[k % t].push(item);
            item_topic[item as usize] = k % t;
        }
        let topic_cdf = topic_items
            .iter()
            .map(|items| {
                let mut acc = 0.0;
                items
                    .iter()
                    .enumerate()
                    .map(|(rank, _)| {
                        acc += 1.0 / ((rank + 1) as f64).powf(cfg.zipf_exponent);
                        acc
                    })
                    .collect()
            })
            .collect();
        TopicModel {
            topic_items,
            topic_cdf,
            item_topic,
        }
    }

    fn sample_item(&self, topic: usize, rng: &mut ChaCha20Rng) -> u32 {
        let cdf = &self.topic_cdf[topic];
        let total = *cdf.last().expect("topics are non-empty");
        let x = rng.random::<f64>() * total;
        let idx = cdf.partition_point(|&c| c < x).min(cdf.len() - 1);
        self.topic_items[topic][idx]
    }
}

struct UserProfile {
    topics: Vec<usize>,
    /// Cumulative mixture weights over `topics`.
    cdf: Vec<f64>,
}

impl UserProfile {
    fn sample(num_topics: usize, rng: &mut ChaCha20Rng) -> Self {
        let k = 2 + (rng.random::<f64>() * 2.0) as usize; // 2 or 3 topics
        let mut topics = Vec::with_capacity(k);
        while topics.len() < k {
            let t = rng.random_range(0..num_topics);
            if !topics.contains(&t) {
                topics.push(t);
            }
        }
        let weights: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        UserProfile { topics, cdf }
    }

    fn sample_topic(&self, rng: &mut ChaCha20Rng) -> usize {
        let x = rng.random::<f64>();
        let idx = self.cdf.partition_point(|&c| c < x).min(self.topics.len() - 1);
        self.topics[idx]
    }
}

/// Generate an unsplit dataset with the exact requested interaction count.
pub fn generate(cfg: &SynthConfig) -> Result<InteractionDataset> {
    if cfg.num_users == 0 || cfg.num_items == 0 || cfg.topics == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs users, items, topics".into()));
    }
    if cfg.interactions < cfg.num_items {
        return Err(Error::InvalidArgument(
            "need at least one interaction per item for full item coverage".into(),
        ));
    }
    if cfg.interactions > cfg.num_users * cfg.num_items / 2 {
        return Err(Error::InvalidArgument("interaction count too dense".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x7379_6e74_685f_7631); // "synth_v1"
    let model = TopicModel::build(cfg, &mut rng);
    let profiles: Vec<UserProfile> = (0..cfg.num_users)
        .map(|_| UserProfile::sample(cfg.topics, &mut rng))
        .collect();

    // users grouped by topic membership, for item-coverage assignment
    let mut users_by_topic: Vec<Vec<u32>> = vec![Vec::new(); cfg.topics];
    for (u, p) in profiles.iter().enumerate() {
        for &t in &p.topics {
            users_by_topic[t].push(u as u32);
        }
    }

    let mut items_of: Vec<Vec<u32>> = vec![Vec::new(); cfg.num_users];
    let mut total = 0usize;
    let add = |items_of: &mut Vec<Vec<u32>>, u: u32, i: u32, total: &mut usize| -> bool {
        let list = &mut items_of[u as usize];
        match list.binary_search(&i) {
            Ok(_) => false,
            Err(pos) => {
                list.insert(pos, i);
                *total += 1;
                true
            }
        }
    };

    // phase A: every item gets one owner, preferentially from its topic
    for item in 0..cfg.num_items as u32 {
        let topic = model.item_topic[item as usize];
        let pool = &users_by_topic[topic];
        let u = if pool.is_empty() {
            rng.random_range(0..cfg.num_users as u32)
        } else {
            pool[rng.random_range(0..pool.len())]
        };
        add(&mut items_of, u, item, &mut total);
    }

    // phase B: fill per-user quotas around the mean degree until the target
    let mean_degree = cfg.interactions as f64 / cfg.num_users as f64;
    let mut order: Vec<u32> = (0..cfg.num_users as u32).collect();
    order.shuffle(&mut rng);
    'outer: loop {
        let mut progressed = false;
        for &u in &order {
            if total >= cfg.interactions {
                break 'outer;
            }
            let degree = items_of[u as usize].len() as f64;
            // jittered quota keeps the degree distribution spread out
            let quota = mean_degree * (0.5 + rng.random::<f64>());
            if degree >= quota {
                continue;
            }
            let topic = if rng.random::<f64>() < cfg.in_topic_prob {
                profiles[u as usize].sample_topic(&mut rng)
            } else {
                rng.random_range(0..cfg.topics)
            };
            for _ in 0..30 {
                let item = model.sample_item(topic, &mut rng);
                if add(&mut items_of, u, item, &mut total) {
                    progressed = true;
                    break;
                }
            }
        }
        if !progressed {
            // quotas exhausted; top up uniformly
            while total < cfg.interactions {
                let u = rng.random_range(0..cfg.num_users as u32);
                let i = rng.random_range(0..cfg.num_items as u32);
                add(&mut items_of, u, i, &mut total);
            }
            break;
        }
    }

    let mut train = Vec::with_capacity(cfg.interactions);
    for (u, items) in items_of.iter().enumerate() {
        for &i in items {
            train.push((u as u32, i));
        }
    }
    Ok(InteractionDataset {
        num_users: cfg.num_users,
        num_items: cfg.num_items,
        train,
        validation: Vec::new(),
        test: Vec::new(),
    })
}

/// Write a dataset's interactions as one adjacency-list text file.
pub fn write_adjacency(path: &std::path::Path, ds: &InteractionDataset) -> Result<()> {
    use std::io::Write;
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); ds.num_users];
    for part in [&ds.train, &ds.validation, &ds.test] {
        for &(u, i) in part.iter() {
            per_user[u as usize].push(i);
        }
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for (u, items) in per_user.iter_mut().enumerate() {
        items.sort_unstable();
        write!(w, "{u}").map_err(|e| Error::io(path, e))?;
        for i in items.iter() {
            write!(w, " {i}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
