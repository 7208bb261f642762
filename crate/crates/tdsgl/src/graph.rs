//! Graph construction: interaction matrix, normalized bipartite adjacency,
//! co-occurrence counts and the true-/false-negative masks.
//!
//! The mask pair (m, f) partitions off-diagonal user (item) pairs by their
//! co-occurrence count against a threshold β: f marks pairs with count ≥ β
//! (negatives that are actually similar), m everything below. m would be
//! nearly dense on sparse datasets, so only f is materialized; membership in
//! m is answered through its complement plus a per-node diagonal bit.

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// R: `num_users × num_items`, R(u,i) = 1 iff (u,i) is a train interaction.
pub fn interaction_matrix(ds: &InteractionDataset) -> CsrMatrix {
    let per_user = ds.train_items_by_user();
    let rows: Vec<Vec<(u32, f64)>> = per_user
        .iter()
        .map(|items| items.iter().map(|&i| (i, 1.0)).collect())
        .collect();
    CsrMatrix::from_rows(ds.num_users, ds.num_items, &rows)
        .expect("train items are sorted and in range")
}

/// Bipartite edges of a (possibly subsampled) interaction set, symmetrically
/// normalized: entry (a,b) = Â(a,b)/√(deg(a)·deg(b)).
///
/// Node ids: users occupy `[0, num_users)`, items `[num_users, num_users+num_items)`.
/// With `self_loop`, each node in `loop_nodes` (all nodes when `None`)
/// contributes a diagonal entry before normalization. Zero-degree rows stay
/// all-zero.
pub fn normalized_bipartite(
    num_users: usize,
    num_items: usize,
    edges: &[(u32, u32)],
    self_loop: bool,
    loop_nodes: Option<&[bool]>,
) -> CsrMatrix {
    let n = num_users + num_items;
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, i) in edges {
        let a = u as usize;
        let b = num_users + i as usize;
        rows[a].push(b as u32);
        rows[b].push(a as u32);
    }
    if self_loop {
        for (a, row) in rows.iter_mut().enumerate() {
            let include = loop_nodes.map_or(true, |alive| alive[a]);
            if include {
                row.push(a as u32);
            }
        }
    }
    let mut degree = vec![0.0f64; n];
    for (a, row) in rows.iter_mut().enumerate() {
        row.sort_unstable();
        degree[a] = row.len() as f64;
    }
    // stored entries always connect nodes of degree ≥ 1, so the quotient is
    // well-defined; computing 1/√(d_a·d_b) in one shot keeps entries like
    // 1/√4 exact
    let entries: Vec<Vec<(u32, f64)>> = rows
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .map(|&b| (b, 1.0 / (degree[a] * degree[b as usize]).sqrt()))
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(n, n, &entries).expect("constructed entries are sorted")
}

/// D̂^{-1/2} Â D̂^{-1/2} for the full train graph.
pub fn normalized_adjacency(r: &CsrMatrix, self_loop: bool) -> CsrMatrix {
    let edges: Vec<(u32, u32)> = r.iter().map(|(u, i, _)| (u as u32, i)).collect();
    normalized_bipartite(r.rows(), r.cols(), &edges, self_loop, None)
}

/// Co-occurrence counts: (R·Rᵀ, Rᵀ·R). Zero counts are absent; values are
/// exact small integers stored as f64.
pub fn cooccurrence(r: &CsrMatrix) -> (CsrMatrix, CsrMatrix) {
    let rt = r.transpose();
    (spgemm_counts(r, &rt), spgemm_counts(&rt, r))
}

/// A·Aᵀ-style product specialized to 0/1 operands via a dense accumulator.
/// `a` is n×k, `b` must be `a.transpose()` (k×n); result is n×n counts.
fn spgemm_counts(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let n = a.rows();
    let mut acc = vec![0u32; n];
    let mut touched: Vec<u32> = Vec::new();
    let mut out_rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    for u in 0..n {
        let (mids, _) = a.row(u);
        for &m in mids {
            let (vs, _) = b.row(m as usize);
            for &v in vs {
                if acc[v as usize] == 0 {
                    touched.push(v);
                }
                acc[v as usize] += 1;
            }
        }
        touched.sort_unstable();
        let row: Vec<(u32, f64)> = touched
            .iter()
            .map(|&v| (v, f64::from(acc[v as usize])))
            .collect();
        for &v in &touched {
            acc[v as usize] = 0;
        }
        touched.clear();
        out_rows.push(row);
    }
    CsrMatrix::from_rows(n, n, &out_rows).expect("accumulator rows are sorted")
}

/// One side of the threshold masks (Eq.-5 semantics).
///
/// `f` stores the off-diagonal pairs with co-occurrence ≥ β (0/1 values);
/// `m_diag[v]` answers whether the diagonal belongs to m, i.e. whether the
/// node's own count (its degree) is below β. Off-diagonal m membership is the
/// complement of f.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSide {
    pub f: CsrMatrix,
    pub m_diag: Vec<bool>,
}

impl MaskSide {
    /// m(a,b) per Eq.-5: indicator of co-occurrence below β.
    #[inline]
    pub fn m(&self, a: usize, b: usize) -> bool {
        if a == b {
            self.m_diag[a]
        } else {
            !self.f.contains(a, b as u32)
        }
    }

    /// False-negative set of `a`: nodes with co-occurrence ≥ β, excluding `a`.
    #[inline]
    pub fn false_negatives(&self, a: usize) -> &[u32] {
        self.f.row(a).0
    }

    pub fn n(&self) -> usize {
        self.f.rows()
    }

    /// Dense m for small instances (test support).
    pub fn m_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        (0..n)
            .map(|a| (0..n).map(|b| if self.m(a, b) { 1.0 } else { 0.0 }).collect())
            .collect()
    }
}

/// Build (m, f) from a co-occurrence matrix and threshold β ≥ 1.
/// Absent entries of p count as zero, hence belong to m.
pub fn build_masks(p: &CsrMatrix, beta: u32) -> Result<MaskSide> {
    if beta < 1 {
        return Err(Error::InvalidArgument("beta must be ≥ 1".into()));
    }
    if p.rows() != p.cols() {
        return Err(Error::ShapeMismatch("co-occurrence matrix must be square".into()));
    }
    let n = p.rows();
    let threshold = f64::from(beta);
    let mut m_diag = vec![true; n];
    let mut f_rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    for a in 0..n {
        let (cols, vals) = p.row(a);
        let mut frow = Vec::new();
        for (&b, &v) in cols.iter().zip(vals.iter()) {
            if a == b as usize {
                m_diag[a] = v < threshold;
            } else if v >= threshold {
                frow.push((b, 1.0));
            }
        }
        f_rows.push(frow);
    }
    let f = CsrMatrix::from_rows(n, n, &f_rows)?;
    Ok(MaskSide { f, m_diag })
}

/// All topology the debiased objective needs, built once per (dataset, β).
#[derive(Debug, Clone)]
pub struct CoOccurrenceMasks {
    pub p_user: CsrMatrix,
    pub p_item: CsrMatrix,
    pub user: MaskSide,
    pub item: MaskSide,
    pub beta_user: u32,
    pub beta_item: u32,
}

impl CoOccurrenceMasks {
    /// Build from the train interaction matrix. `beta_user`/`beta_item`
    /// default to `beta` when not overridden.
    pub fn build(
        r: &CsrMatrix,
        beta: u32,
        beta_user: Option<u32>,
        beta_item: Option<u32>,
    ) -> Result<Self> {
        let (p_user, p_item) = cooccurrence(r);
        Self::from_cooccurrence(p_user, p_item, beta, beta_user, beta_item)
    }

    pub fn from_cooccurrence(
        p_user: CsrMatrix,
        p_item: CsrMatrix,
        beta: u32,
        beta_user: Option<u32>,
        beta_item: Option<u32>,
    ) -> Result<Self> {
        let bu = beta_user.unwrap_or(beta);
        let bi = beta_item.unwrap_or(beta);
        let user = build_masks(&p_user, bu)?;
        let item = build_masks(&p_item, bi)?;
        Ok(CoOccurrenceMasks {
            p_user,
            p_item,
            user,
            item,
            beta_user: bu,
            beta_item: bi,
        })
    }
}

/// Symmetric normalization of a 0/1 similarity graph (no self-loops):
/// entry (a,b) = f(a,b)/√(deg(a)·deg(b)); zero-degree rows stay zero.
/// This is the one-layer aggregation operator of the feature-extraction
/// module.
pub fn aux_operator(f: &CsrMatrix) -> CsrMatrix {
    let n = f.rows();
    let degree: Vec<f64> = (0..n).map(|a| f.row_len(a) as f64).collect();
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .map(|a| {
            let (cols, _) = f.row(a);
            cols.iter()
                .map(|&b| (b, 1.0 / (degree[a] * degree[b as usize]).sqrt()))
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(n, n, &rows).expect("rows stay sorted")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionDataset;

    /// u0→{i0,i1}, u1→{i0,i2}, u2→{i2}
    pub(crate) fn toy_dataset() -> InteractionDataset {
        InteractionDataset {
            num_users: 3,
            num_items: 3,
            train: vec![(0, 0), (0, 1), (1, 0), (1, 2), (2, 2)],
            validation: vec![],
            test: vec![],
        }
    }

    #[test]
    fn interaction_matrix_matches_definition() {
        let r = interaction_matrix(&toy_dataset());
        let expected = [
            [1.0, 1.0, 0.0],
            [1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
        ];
        for (u, row) in expected.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                assert_eq!(r.get(u, i as u32), v);
            }
        }
        assert_eq!(r.nnz(), 5);
    }

    #[test]
    fn empty_train_gives_zero_matrix() {
        let ds = InteractionDataset {
            num_users: 2,
            num_items: 2,
            train: vec![],
            validation: vec![],
            test: vec![],
        };
        assert_eq!(interaction_matrix(&ds).nnz(), 0);
    }

    #[test]
    fn single_pair_normalization_with_self_loop() {
        // Â = [[1,1],[1,1]], D̂ = diag(2,2) → everything 0.5
        let adj = normalized_bipartite(1, 1, &[(0, 0)], true, None);
        for a in 0..2 {
            for b in 0..2 {
                assert!((adj.get(a, b as u32) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn toy_normalization_entry() {
        let r = interaction_matrix(&toy_dataset());
        let adj = normalized_adjacency(&r, true);
        // deg(u0) = 2 edges + self = 3; deg(i0) = 2 + self = 3
        let expected = 1.0 / 3.0;
        assert!((adj.get(0, 3) - expected).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_without_self_loop_has_zero_row() {
        // user 1 has no edges
        let adj = normalized_bipartite(2, 1, &[(0, 0)], false, None);
        assert_eq!(adj.row_len(1), 0);
        // and normalization of the connected pair is 1/√(1·1)
        assert_eq!(adj.get(0, 2), 1.0);
    }

    #[test]
    fn cooccurrence_matches_hand_values() {
        let r = interaction_matrix(&toy_dataset());
        let (p_user, p_item) = cooccurrence(&r);
        let pu = [
            [2.0, 1.0, 0.0],
            [1.0, 2.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        let pi = [
            [2.0, 1.0, 1.0],
            [1.0, 1.0, 0.0],
            [1.0, 0.0, 2.0],
        ];
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(p_user.get(a, b as u32), pu[a][b], "p_user({a},{b})");
                assert_eq!(p_item.get(a, b as u32), pi[a][b], "p_item({a},{b})");
            }
        }
        // symmetry comes with the product shape
        for (r_, c, v) in p_user.iter() {
            assert_eq!(p_user.get(c as usize, r_ as u32), v);
        }
    }

    #[test]
    fn all_zero_r_gives_empty_products() {
        let r = CsrMatrix::zeros(3, 4);
        let (pu, pi) = cooccurrence(&r);
        assert_eq!(pu.nnz(), 0);
        assert_eq!(pi.nnz(), 0);
    }

    #[test]
    fn masks_beta_2_match_hand_values() {
        let r = interaction_matrix(&toy_dataset());
        let (p_user, _) = cooccurrence(&r);
        let side = build_masks(&p_user, 2).unwrap();
        let m = side.m_dense();
        let expected = [
            [0.0, 1.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0], // P(u2,u2) = 1 < 2 keeps the diagonal in m
        ];
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(m[a][b], expected[a][b], "m({a},{b})");
            }
        }
    }

    #[test]
    fn f_beta_1_matches_hand_values() {
        let r = interaction_matrix(&toy_dataset());
        let (p_user, _) = cooccurrence(&r);
        let side = build_masks(&p_user, 1).unwrap();
        let expected = [
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
        ];
        for a in 0..3 {
            for b in 0..3 {
                let v = if side.f.contains(a, b as u32) { 1.0 } else { 0.0 };
                assert_eq!(v, expected[a][b], "f({a},{b})");
            }
        }
    }

    #[test]
    fn saturated_beta_empties_f() {
        let r = interaction_matrix(&toy_dataset());
        let (p_user, _) = cooccurrence(&r);
        let side = build_masks(&p_user, 100).unwrap();
        assert_eq!(side.f.nnz(), 0);
        for a in 0..3 {
            for b in 0..3 {
                assert!(side.m(a, b), "saturated β puts every pair in m");
            }
        }
    }

    #[test]
    fn beta_zero_rejected() {
        let r = interaction_matrix(&toy_dataset());
        let (p_user, _) = cooccurrence(&r);
        assert!(build_masks(&p_user, 0).is_err());
    }

    #[test]
    fn mask_partition_off_diagonal() {
        let r = interaction_matrix(&toy_dataset());
        let (p_user, _) = cooccurrence(&r);
        for beta in 1..5 {
            let side = build_masks(&p_user, beta).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        let m = side.m(a, b) as u8;
                        let f = side.f.contains(a, b as u32) as u8;
                        assert_eq!(m + f, 1, "partition at β={beta} ({a},{b})");
                    }
                }
            }
        }
    }

    #[test]
    fn aux_operator_path_graph() {
        // f = path 0–1–2; row 0 entry (0,1) = 1/√(1·2)
        let f = CsrMatrix::from_rows(
            3,
            3,
            &[vec![(1, 1.0)], vec![(0, 1.0), (2, 1.0)], vec![(1, 1.0)]],
        )
        .unwrap();
        let op = aux_operator(&f);
        assert!((op.get(0, 1) - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
        assert!((op.get(1, 0) - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(op.get(0, 2), 0.0);
    }

    #[test]
    fn aux_operator_zero_degree_row() {
        let f = CsrMatrix::from_rows(2, 2, &[vec![], vec![]]).unwrap();
        let op = aux_operator(&f);
        assert_eq!(op.nnz(), 0);
    }
}
