//! Dense brute-force oracles, independent of the CSR implementation paths
//! they check. Everything here is written with plain nested Vec<f64>
//! matrices and naive loops.

#![allow(dead_code)]

use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn dense_zeros(rows: usize, cols: usize) -> Dense {
    vec![vec![0.0; cols]; rows]
}

pub fn dense_matmul(a: &Dense, b: &Dense) -> Dense {
    let (m, k) = (a.len(), a.first().map_or(0, Vec::len));
    let n = b.first().map_or(0, Vec::len);
    assert_eq!(k, b.len());
    let mut out = dense_zeros(m, n);
    for i in 0..m {
        for kk in 0..k {
            let av = a[i][kk];
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += av * b[kk][j];
            }
        }
    }
    out
}

pub fn dense_transpose(a: &Dense) -> Dense {
    let (m, n) = (a.len(), a.first().map_or(0, Vec::len));
    let mut out = dense_zeros(n, m);
    for i in 0..m {
        for j in 0..n {
            out[j][i] = a[i][j];
        }
    }
    out
}

/// Dense bipartite adjacency Â over user∪item nodes, optionally with
/// self-loops restricted to the `alive` nodes.
pub fn dense_bipartite_adj(
    num_users: usize,
    num_items: usize,
    edges: &[(u32, u32)],
    self_loop: bool,
    alive: Option<&[bool]>,
) -> Dense {
    let n = num_users + num_items;
    let mut adj = dense_zeros(n, n);
    for &(u, i) in edges {
        let (a, b) = (u as usize, num_users + i as usize);
        adj[a][b] = 1.0;
        adj[b][a] = 1.0;
    }
    if self_loop {
        for a in 0..n {
            if alive.map_or(true, |al| al[a]) {
                adj[a][a] = 1.0;
            }
        }
    }
    adj
}

/// D^{-1/2} Â D^{-1/2} with zero-degree rows left zero.
pub fn dense_sym_normalize(adj: &Dense) -> Dense {
    let n = adj.len();
    let deg: Vec<f64> = adj.iter().map(|row| row.iter().sum()).collect();
    let mut out = dense_zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] != 0.0 && deg[i] > 0.0 && deg[j] > 0.0 {
                out[i][j] = adj[i][j] / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    out
}

/// Mean of the propagation chain X⁽⁰⁾, M₁X⁽⁰⁾, M₂M₁X⁽⁰⁾, …
pub fn dense_propagate(per_layer: &[Dense], x0: &Dense) -> Dense {
    let mut acc = x0.clone();
    let mut cur = x0.clone();
    for m in per_layer {
        cur = dense_matmul(m, &cur);
        for (arow, crow) in acc.iter_mut().zip(cur.iter()) {
            for (a, c) in arow.iter_mut().zip(crow.iter()) {
                *a += c;
            }
        }
    }
    let scale = 1.0 / (per_layer.len() as f64 + 1.0);
    for row in &mut acc {
        for v in row {
            *v *= scale;
        }
    }
    acc
}

/// (R·Rᵀ, Rᵀ·R) by naive multiplication.
pub fn dense_cooccurrence(r: &Dense) -> (Dense, Dense) {
    let rt = dense_transpose(r);
    (dense_matmul(r, &rt), dense_matmul(&rt, r))
}

/// Random unique (user, item) interactions.
pub fn random_interactions(
    num_users: usize,
    num_items: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<(u32, u32)> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    let cap = num_users * num_items;
    while out.len() < count.min(cap) {
        let u = rng.random_range(0..num_users as u32);
        let i = rng.random_range(0..num_items as u32);
        if seen.insert((u, i)) {
            out.push((u, i));
        }
    }
    out
}

pub fn dense_interaction_matrix(num_users: usize, num_items: usize, edges: &[(u32, u32)]) -> Dense {
    let mut r = dense_zeros(num_users, num_items);
    for &(u, i) in edges {
        r[u as usize][i as usize] = 1.0;
    }
    r
}

/// Exhaustive ranking reference: repeated selection of the best remaining
/// item (score descending, index ascending), quadratic on purpose.
pub fn reference_rank(scores: &[f64], exclude: &[u32]) -> Vec<u32> {
    let excluded: std::collections::HashSet<u32> = exclude.iter().copied().collect();
    let mut remaining: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| !excluded.contains(i))
        .collect();
    let mut out = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best = 0usize;
        for k in 1..remaining.len() {
            let (ci, bi) = (remaining[k], remaining[best]);
            let (cs, bs) = (scores[ci as usize], scores[bi as usize]);
            if cs > bs || (cs == bs && ci < bi) {
                best = k;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

pub fn reference_recall(ranked: &[u32], test: &[u32], k: usize) -> f64 {
    let top: std::collections::HashSet<u32> = ranked.iter().take(k).copied().collect();
    let hits = test.iter().filter(|i| top.contains(i)).count();
    hits as f64 / test.len() as f64
}

pub fn reference_ndcg(ranked: &[u32], test: &[u32], k: usize) -> f64 {
    let test_set: std::collections::HashSet<u32> = test.iter().copied().collect();
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if test_set.contains(item) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..k.min(test.len()) {
        idcg += 1.0 / ((pos + 2) as f64).log2();
    }
    dcg / idcg
}

pub fn max_abs_diff_dense(a: &Dense, b: &Dense) -> f64 {
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b.iter()) {
        for (x, y) in ra.iter().zip(rb.iter()) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}
