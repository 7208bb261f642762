//! Stochastic graph views for the contrastive task.
//!
//! Each view keeps a subset of the train edges and rebuilds the symmetric
//! normalization on the surviving subgraph, so the degrees entering the
//! normalization are the view's own. The random-walk kind draws one
//! independent edge-dropout subgraph per propagation layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::normalized_bipartite;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugKind {
    #[serde(rename = "ed")]
    EdgeDropout,
    #[serde(rename = "nd")]
    NodeDropout,
    #[serde(rename = "rw")]
    RandomWalk,
}

impl AugKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ed" | "edge-dropout" => Ok(AugKind::EdgeDropout),
            "nd" | "node-dropout" => Ok(AugKind::NodeDropout),
            "rw" | "random-walk" => Ok(AugKind::RandomWalk),
            other => Err(Error::Config(format!("unknown augmentation kind {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AugKind::EdgeDropout => "ed",
            AugKind::NodeDropout => "nd",
            AugKind::RandomWalk => "rw",
        }
    }
}

/// One stochastic view of the interaction graph.
#[derive(Debug, Clone)]
pub struct AugmentedView {
    pub kind: AugKind,
    /// Normalized adjacency of the surviving subgraph.
    pub norm_adj: CsrMatrix,
    /// Random-walk only: one normalized adjacency per propagation layer.
    pub per_layer: Option<Vec<CsrMatrix>>,
    /// Surviving interaction edges (per layer for random walk).
    pub kept_edges: Vec<Vec<(u32, u32)>>,
}

impl AugmentedView {
    /// Propagation matrices in layer order; a single-graph view repeats its
    /// matrix for every layer.
    pub fn layer_adj(&self, layer: usize) -> &CsrMatrix {
        match &self.per_layer {
            Some(mats) => &mats[layer],
            None => &self.norm_adj,
        }
    }
}

fn interaction_edges(r: &CsrMatrix) -> Vec<(u32, u32)> {
    r.iter().map(|(u, i, _)| (u as u32, i)).collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "dropout ratio must be in [0, 1), got {rho}"
        )));
    }
    Ok(())
}

/// Keep each interaction independently with probability 1−ρ.
pub fn edge_dropout(r: &CsrMatrix, rho: f64, self_loop: bool, rng: &mut impl Rng) -> Result<AugmentedView> {
    check_rho(rho)?;
    let kept: Vec<(u32, u32)> = interaction_edges(r)
        .into_iter()
        .filter(|_| rng.random::<f64>() >= rho)
        .collect();
    let norm_adj = normalized_bipartite(r.rows(), r.cols(), &kept, self_loop, None);
    Ok(AugmentedView {
        kind: AugKind::EdgeDropout,
        norm_adj,
        per_layer: None,
        kept_edges: vec![kept],
    })
}

/// Drop each user/item node with probability ρ; edges incident to dropped
/// nodes vanish (including their self-loops), but dropped nodes keep their
/// position in the index space as zero rows.
pub fn node_dropout(r: &CsrMatrix, rho: f64, self_loop: bool, rng: &mut impl Rng) -> Result<AugmentedView> {
    check_rho(rho)?;
    let n = r.rows() + r.cols();
    let alive: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= rho).collect();
    let kept: Vec<(u32, u32)> = interaction_edges(r)
        .into_iter()
        .filter(|&(u, i)| alive[u as usize] && alive[r.rows() + i as usize])
        .collect();
    let norm_adj = normalized_bipartite(r.rows(), r.cols(), &kept, self_loop, Some(&alive));
    Ok(AugmentedView {
        kind: AugKind::NodeDropout,
        norm_adj,
        per_layer: None,
        kept_edges: vec![kept],
    })
}

/// Independent edge-dropout subgraph per propagation layer.
pub fn random_walk_views(
    r: &CsrMatrix,
    rho: f64,
    layers: usize,
    self_loop: bool,
    rng: &mut impl Rng,
) -> Result<AugmentedView> {
    check_rho(rho)?;
    if layers < 1 {
        return Err(Error::InvalidArgument("random walk needs at least one layer".into()));
    }
    let edges = interaction_edges(r);
    let mut per_layer = Vec::with_capacity(layers);
    let mut kept_edges = Vec::with_capacity(layers);
    for _ in 0..layers {
        let kept: Vec<(u32, u32)> = edges
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() >= rho)
            .collect();
        per_layer.push(normalized_bipartite(r.rows(), r.cols(), &kept, self_loop, None));
        kept_edges.push(kept);
    }
    Ok(AugmentedView {
        kind: AugKind::RandomWalk,
        norm_adj: per_layer[0].clone(),
        per_layer: Some(per_layer),
        kept_edges,
    })
}

/// Dispatch on the configured kind.
pub fn generate_view(
    r: &CsrMatrix,
    kind: AugKind,
    rho: f64,
    layers: usize,
    self_loop: bool,
    rng: &mut impl Rng,
) -> Result<AugmentedView> {
    match kind {
        AugKind::EdgeDropout => edge_dropout(r, rho, self_loop, rng),
        AugKind::NodeDropout => node_dropout(r, rho, self_loop, rng),
        AugKind::RandomWalk => random_walk_views(r, rho, layers.max(1), self_loop, rng),
    }
}
