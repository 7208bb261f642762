//! TDSGL: graph collaborative filtering with topology-aware debiased graph
//! contrastive learning.
//!
//! The engine trains a LightGCN-style linear propagation backbone with a
//! multi-task objective: BPR ranking loss plus a debiased InfoNCE over two
//! stochastic graph views, where negatives are filtered by user/item
//! co-occurrence counts and the filtered-out "false negatives" are
//! aggregated into an auxiliary positive per node. Everything is CPU-bound,
//! deterministic under a fixed seed, and evaluated with full-ranking
//! Recall@K / NDCG@K.

pub mod augment;
pub mod config;
pub mod data;
pub mod dense;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fdcheck;
pub mod graph;
pub mod loss;
pub mod model;
pub mod optim;
pub mod sparse;
pub mod synth;
pub mod trainer;

pub use augment::{edge_dropout, node_dropout, random_walk_views, AugKind, AugmentedView};
pub use config::{Config, Hyperparameters, Variant};
pub use data::{parse_adjacency_list, split_dataset, InteractionDataset, Split};
pub use dense::Matrix;
pub use error::{Error, Result};
pub use eval::{evaluate, ndcg_at_k, rank_all, recall_at_k, MetricsReport};
pub use graph::{
    build_masks, cooccurrence, interaction_matrix, normalized_adjacency, CoOccurrenceMasks,
    MaskSide,
};
pub use loss::{bpr_loss, debiased_infonce, total_loss, BatchTriples, LossBreakdown};
pub use model::{extract_aux_features, predict_score, propagate, EmbeddingState, FeKind};
pub use optim::{adam_step, AdamParams};
pub use sparse::CsrMatrix;
pub use trainer::{sample_epoch_batches, train, TrainOutput};
