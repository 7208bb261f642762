//! Full-ranking top-K evaluation: Recall@K and NDCG@K with train-item
//! exclusion. Pure functions over an immutable embedding snapshot, sharded
//! over users; the reduction is sequential in user order so results are
//! bit-reproducible regardless of worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, Split};
use crate::dense::{matmul_nt, Matrix};

/// Mean Recall@K / NDCG@K over the users that have test items.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub recall: f64,
    pub ndcg: f64,
    pub k: usize,
    pub users_evaluated: usize,
}

/// All items ranked by descending score for one user, the user's train items
/// removed first, ties broken by ascending item index.
pub fn rank_all(combined: &Matrix, num_users: usize, user: usize, exclude: &[u32]) -> Vec<u32> {
    let num_items = combined.rows() - num_users;
    let urow = combined.row(user);
    let mut scored: Vec<(f64, u32)> = Vec::with_capacity(num_items - exclude.len());
    let mut ex = exclude.iter().peekable();
    for i in 0..num_items as u32 {
        if ex.peek() == Some(&&i) {
            ex.next();
            continue;
        }
        let score = crate::dense::dot(urow, combined.row(num_users + i as usize));
        scored.push((score, i));
    }
    scored.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, i)| i).collect()
}

/// |top-k ∩ test| / |test|; `None` when the user has no test items.
pub fn recall_at_k(ranked: &[u32], test: &[u32], k: usize) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let top = &ranked[..k.min(ranked.len())];
    let hits = top.iter().filter(|i| test.binary_search(i).is_ok()).count();
    Some(hits as f64 / test.len() as f64)
}

/// Binary-relevance NDCG truncated at k: DCG sums 1/log₂(p+1) over hit
/// positions, IDCG assumes the first min(k,|test|) ranks are hits.
pub fn ndcg_at_k(ranked: &[u32], test: &[u32], k: usize) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let top = &ranked[..k.min(ranked.len())];
    let mut dcg = 0.0;
    for (pos, item) in top.iter().enumerate() {
        if test.binary_search(item).is_ok() {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let ideal = k.min(test.len());
    let idcg: f64 = (0..ideal).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    Some(dcg / idcg)
}

/// Top-k item ids for one user from a dense score row, skipping `exclude`
/// (sorted); ties by ascending index. Selection keeps a small sorted buffer,
/// so it is O(num_items · k) worst case with k tiny.
fn top_k_from_scores(scores: &[f64], exclude: &[u32], k: usize) -> Vec<u32> {
    let mut top: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
    let mut ex = exclude.iter().peekable();
    for (i, &s) in scores.iter().enumerate() {
        let i = i as u32;
        if ex.peek() == Some(&&i) {
            ex.next();
            continue;
        }
        if top.len() == k {
            let worst = top[k - 1];
            if s < worst.0 || (s == worst.0 && i > worst.1) {
                continue;
            }
        }
        // insert keeping (score desc, index asc) order
        let pos = top
            .iter()
            .position(|&(ts, ti)| s > ts || (s == ts && i < ti))
            .unwrap_or(top.len());
        top.insert(pos, (s, i));
        if top.len() > k {
            top.pop();
        }
    }
    top.into_iter().map(|(_, i)| i).collect()
}

/// Per-user recall/ndcg, `None` for users with no target items.
pub fn evaluate_per_user(
    combined: &Matrix,
    ds: &InteractionDataset,
    split: Split,
    k: usize,
) -> Vec<Option<(f64, f64)>> {
    let num_users = ds.num_users;
    let num_items = ds.num_items;
    let dim = combined.cols();
    let train_items = ds.train_items_by_user();
    let targets = ds.items_by_user(split);

    // contiguous copy of the item block so scoring is one gemm per chunk
    let items = Matrix::from_vec(
        num_items,
        dim,
        combined.data()[num_users * dim..].to_vec(),
    );

    const USER_CHUNK: usize = 256;
    let chunks: Vec<(usize, usize)> = (0..num_users)
        .step_by(USER_CHUNK)
        .map(|s| (s, (s + USER_CHUNK).min(num_users)))
        .collect();

    let mut per_user: Vec<Option<(f64, f64)>> = vec![None; num_users];
    let results: Vec<(usize, Vec<Option<(f64, f64)>>)> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let rows = combined.data()[lo * dim..hi * dim].to_vec();
            let users = Matrix::from_vec(hi - lo, dim, rows);
            let mut scores = Matrix::zeros(hi - lo, num_items);
            matmul_nt(&users, &items, &mut scores);
            let mut out = Vec::with_capacity(hi - lo);
            for u in lo..hi {
                let t = &targets[u];
                if t.is_empty() {
                    out.push(None);
                    continue;
                }
                let top = top_k_from_scores(scores.row(u - lo), &train_items[u], k);
                let recall = recall_at_k(&top, t, k).expect("targets non-empty");
                let ndcg = ndcg_at_k(&top, t, k).expect("targets non-empty");
                out.push(Some((recall, ndcg)));
            }
            (lo, out)
        })
        .collect();
    for (lo, chunk) in results {
        for (off, v) in chunk.into_iter().enumerate() {
            per_user[lo + off] = v;
        }
    }
    per_user
}

/// Mean metrics over users with non-empty target sets; the sum runs in user
/// order for reproducibility.
pub fn evaluate(combined: &Matrix, ds: &InteractionDataset, split: Split, k: usize) -> MetricsReport {
    let per_user = evaluate_per_user(combined, ds, split, k);
    let mut recall_sum = 0.0;
    let mut ndcg_sum = 0.0;
    let mut n = 0usize;
    for v in per_user.into_iter().flatten() {
        recall_sum += v.0;
        ndcg_sum += v.1;
        n += 1;
    }
    if n == 0 {
        return MetricsReport {
            recall: 0.0,
            ndcg: 0.0,
            k,
            users_evaluated: 0,
        };
    }
    MetricsReport {
        recall: recall_sum / n as f64,
        ndcg: ndcg_sum / n as f64,
        k,
        users_evaluated: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn combined_from_scores(scores: &[f64]) -> Matrix {
        // one user with embedding [1], items carry their scores directly
        let mut rows = vec![vec![1.0]];
        for &s in scores {
            rows.push(vec![s]);
        }
        Matrix::from_rows(&rows)
    }

    #[test]
    fn rank_orders_by_score() {
        let c = combined_from_scores(&[0.9, 0.1, 0.5]);
        assert_eq!(rank_all(&c, 1, 0, &[]), vec![0, 2, 1]);
    }

    #[test]
    fn rank_excludes_train() {
        let c = combined_from_scores(&[0.9, 0.1, 0.5]);
        assert_eq!(rank_all(&c, 1, 0, &[0]), vec![2, 1]);
    }

    #[test]
    fn equal_scores_tie_break_ascending() {
        let c = combined_from_scores(&[0.5, 0.5, 0.5]);
        assert_eq!(rank_all(&c, 1, 0, &[]), vec![0, 1, 2]);
    }

    #[test]
    fn recall_basics() {
        let ranked: Vec<u32> = (0..30).collect();
        assert_eq!(recall_at_k(&ranked, &[3, 7], 20), Some(1.0));
        assert_eq!(recall_at_k(&ranked, &[3, 25], 20), Some(0.5));
        assert_eq!(recall_at_k(&ranked, &[], 20), None);
    }

    #[test]
    fn ndcg_single_hit_positions() {
        // test item at rank 1
        assert_eq!(ndcg_at_k(&[5, 1, 2], &[5], 3), Some(1.0));
        // rank 2, k = 2 → 1/log₂3
        let v = ndcg_at_k(&[1, 5], &[5], 2).unwrap();
        assert!((v - 1.0 / 3.0f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);
        // no hits
        assert_eq!(ndcg_at_k(&[1, 2, 3], &[9], 3), Some(0.0));
    }

    #[test]
    fn ndcg_is_one_iff_test_fills_top_ranks() {
        let test = [2u32, 4, 6];
        assert_eq!(ndcg_at_k(&[2, 4, 6, 1, 3], &test, 5), Some(1.0));
        let v = ndcg_at_k(&[2, 4, 1, 6, 3], &test, 5).unwrap();
        assert!(v < 1.0);
    }

    #[test]
    fn top_k_matches_full_ranking() {
        let scores = [0.3, 0.9, 0.9, -0.5, 0.0, 0.3];
        let c = combined_from_scores(&scores);
        let full = rank_all(&c, 1, 0, &[4]);
        let top = top_k_from_scores(&scores, &[4], 3);
        assert_eq!(top, full[..3].to_vec());
        // tie between 1 and 2 resolved ascending, then 0/5 tie
        assert_eq!(top, vec![1, 2, 0]);
    }

    #[test]
    fn evaluate_skips_users_without_targets() {
        let ds = InteractionDataset {
            num_users: 2,
            num_items: 3,
            train: vec![(0, 0), (1, 1)],
            validation: vec![],
            test: vec![(0, 2)],
        };
        let mut combined = Matrix::zeros(5, 2);
        combined.set(0, 0, 1.0);
        combined.set(1, 0, 1.0);
        combined.set(2 + 2, 0, 1.0); // item 2 scores high for user 0
        let report = evaluate(&combined, &ds, Split::Test, 2);
        assert_eq!(report.users_evaluated, 1);
        assert_eq!(report.recall, 1.0);
    }
}
