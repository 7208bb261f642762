//! Loss terms and their analytic gradients with respect to the embedding
//! table: BPR ranking loss, the debiased InfoNCE per side (optionally with
//! auxiliary positives), and the combined multi-task objective.
//!
//! Gradient conventions: every loss accumulates (+=) into caller-owned dense
//! buffers so the three paths (recommendation, two contrastive views) share
//! one assembly step. Losses are sums over their anchor sets, never means.
//! Cosine similarity against a zero vector is defined as 0 with zero
//! gradient. Masked-out candidates are skipped entirely, so removing them
//! from the candidate set leaves the loss bit-identical — the degeneration
//! identities depend on this.

use crate::dense::{axpy, dot, matmul_nn, matmul_nt, matmul_tn, norm, Matrix};
use crate::error::{Error, Result};
use crate::graph::{CoOccurrenceMasks, MaskSide};
use crate::model::{
    aux_backward, extract_aux_features, propagate_backward, propagate_combined, AuxOperators,
    EmbeddingState, FeGrads, FeKind, PropScratch, PropagationOp,
};
use crate::sparse::CsrMatrix;

/// Training triples: (user, positive item, sampled negative item).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchTriples {
    pub entries: Vec<(u32, u32, u32)>,
}

impl BatchTriples {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted unique users of the batch.
    pub fn unique_users(&self) -> Vec<u32> {
        let mut users: Vec<u32> = self.entries.iter().map(|&(u, _, _)| u).collect();
        users.sort_unstable();
        users.dedup();
        users
    }

    /// Sorted unique positive items of the batch.
    pub fn unique_pos_items(&self) -> Vec<u32> {
        let mut items: Vec<u32> = self.entries.iter().map(|&(_, i, _)| i).collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    /// Sorted unique x0 rows the batch touches: users plus both items.
    pub fn touched_rows(&self, num_users: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = Vec::with_capacity(self.entries.len() * 3);
        for &(u, i, j) in &self.entries {
            rows.push(u as usize);
            rows.push(num_users + i as usize);
            rows.push(num_users + j as usize);
        }
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Σ −log σ(f(u,i) − f(u,j)) over the batch. Gradients with respect to the
/// involved final-embedding rows accumulate into `grad` (N×F).
pub fn bpr_loss(
    triples: &BatchTriples,
    combined: &Matrix,
    num_users: usize,
    grad: &mut Matrix,
) -> f64 {
    let f = combined.cols();
    let mut xu = vec![0.0; f];
    let mut loss = 0.0;
    for &(u, i, j) in &triples.entries {
        let (u, i, j) = (u as usize, num_users + i as usize, num_users + j as usize);
        let margin = dot(combined.row(u), combined.row(i)) - dot(combined.row(u), combined.row(j));
        loss += softplus(-margin);
        let g = sigmoid(margin) - 1.0;
        xu.copy_from_slice(combined.row(u));
        {
            let (xi, xj) = (combined.row(i), combined.row(j));
            let gu = grad.row_mut(u);
            for c in 0..f {
                gu[c] += g * (xi[c] - xj[c]);
            }
        }
        axpy(g, &xu, grad.row_mut(i));
        axpy(-g, &xu, grad.row_mut(j));
    }
    loss
}

/// Parameters of the contrastive term.
#[derive(Debug, Clone, Copy)]
pub struct InfoNceParams {
    pub tau: f64,
    /// Keep the positive pair in the denominator even where the printed mask
    /// would drop the self entry (nodes with co-occurrence diagonal ≥ β).
    pub include_positive: bool,
}

/// One side (users or items) of the contrastive task.
pub struct SideInputs<'a> {
    /// Sorted unique anchor node ids, side-local.
    pub anchors: &'a [u32],
    /// Sorted candidate ids (the contrast set); must contain every anchor.
    /// Equals `anchors` for in-batch contrast, `0..n_side` for full contrast.
    pub candidates: &'a [u32],
    /// Combined embeddings of the two augmented views, full N×F.
    pub z1: &'a Matrix,
    pub z2: &'a Matrix,
    /// 0 for the user side, `num_users` for the item side.
    pub row_offset: usize,
    /// Debiasing mask; `None` contrasts against every candidate.
    pub mask: Option<&'a MaskSide>,
    /// Side-local auxiliary positives, rows indexed by side-local node id.
    pub aux: Option<&'a Matrix>,
}

/// dst[b] = exp(src[b] · inv_tau − inv_tau), four lanes at a time. One
/// exponential implementation for every element (the tail goes through a
/// padded vector), so results do not depend on where chunk boundaries fall.
fn exp_scaled(src: &[f64], dst: &mut [f64], inv_tau: f64) {
    use wide::f64x4;
    debug_assert_eq!(src.len(), dst.len());
    let scale = f64x4::splat(inv_tau);
    let shift = f64x4::splat(inv_tau);
    let n = src.len();
    let mut b = 0;
    while b + 4 <= n {
        let v = f64x4::from([src[b], src[b + 1], src[b + 2], src[b + 3]]);
        let e = (v * scale - shift).exp();
        dst[b..b + 4].copy_from_slice(&e.to_array());
        b += 4;
    }
    if b < n {
        let mut pad = [0.0f64; 4];
        pad[..n - b].copy_from_slice(&src[b..]);
        let e = (f64x4::from(pad) * scale - shift).exp();
        dst[b..n].copy_from_slice(&e.to_array()[..n - b]);
    }
}

fn normalized_rows(src: &Matrix, ids: &[u32], offset: usize) -> (Matrix, Vec<f64>) {
    let f = src.cols();
    let mut hat = Matrix::zeros(ids.len(), f);
    let mut norms = vec![0.0; ids.len()];
    for (k, &id) in ids.iter().enumerate() {
        let row = src.row(offset + id as usize);
        let n = norm(row);
        norms[k] = n;
        if n > 0.0 {
            for (d, s) in hat.row_mut(k).iter_mut().zip(row.iter()) {
                *d = s / n;
            }
        }
    }
    (hat, norms)
}

/// Debiased InfoNCE over one side. Returns the loss (summed over anchors) and
/// accumulates gradients into `g1`, `g2` (full N×F) and, when aux features
/// are supplied, `g_aux` (side-local).
///
/// Per anchor u: numerator exponent s(x'_u,x''_u)/τ plus s(x'_u,x^M_u)/τ when
/// aux is present; denominator sums exp(s(x'_u,x''_v)/τ) over candidates v≠u
/// with m(u,v)=1, plus the positive term (always when `include_positive`,
/// otherwise only if m(u,u)=1).
pub fn debiased_infonce(
    inp: &SideInputs,
    params: &InfoNceParams,
    g1: &mut Matrix,
    g2: &mut Matrix,
    mut g_aux: Option<&mut Matrix>,
) -> Result<f64> {
    if params.tau <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {}",
            params.tau
        )));
    }
    let tau = params.tau;
    let anchors = inp.anchors;
    let cands = inp.candidates;
    if anchors.is_empty() {
        return Ok(0.0);
    }
    debug_assert!(anchors.windows(2).all(|w| w[0] < w[1]), "anchors sorted unique");
    debug_assert!(cands.windows(2).all(|w| w[0] < w[1]), "candidates sorted unique");

    let f = inp.z1.cols();
    let (a_hat, a_norm) = normalized_rows(inp.z1, anchors, inp.row_offset);
    let (c_hat, c_norm) = normalized_rows(inp.z2, cands, inp.row_offset);
    // aux rows are side-local, offset 0
    let aux_data = inp.aux.map(|aux| normalized_rows(aux, anchors, 0));

    let n_c = cands.len();
    let mut loss = 0.0;
    let mut g2_hat_acc = Matrix::zeros(n_c, f); // Σ_a coeff·â_a per candidate
    let mut coldot = vec![0.0f64; n_c]; // Σ_a coeff·sim per candidate

    const CHUNK: usize = 512;
    let full = CHUNK.min(anchors.len());
    let mut sims = Matrix::zeros(full, n_c);
    let mut coeffs = Matrix::zeros(full, n_c);
    let mut a_chunk = Matrix::zeros(full, f);
    let mut t1 = Matrix::zeros(full, f);

    let mut start = 0;
    while start < anchors.len() {
        let len = (anchors.len() - start).min(CHUNK);
        if len != sims.rows() {
            sims = Matrix::zeros(len, n_c);
            coeffs = Matrix::zeros(len, n_c);
            a_chunk = Matrix::zeros(len, f);
            t1 = Matrix::zeros(len, f);
        }
        a_chunk
            .data_mut()
            .copy_from_slice(&a_hat.data()[start * f..(start + len) * f]);
        matmul_nt(&a_chunk, &c_hat, &mut sims);

        let mut rowdot = vec![0.0f64; len];
        let mut aux_sims = vec![0.0f64; len];
        for a in 0..len {
            let ai = start + a;
            let u = anchors[ai] as usize;
            let self_pos = cands
                .binary_search(&anchors[ai])
                .expect("candidate set must contain every anchor");
            let srow = sims.row(a);
            let crow = coeffs.row_mut(a);
            let pos_sim = srow[self_pos];

            let f_row: &[u32] = inp.mask.map_or(&[], |m| m.false_negatives(u));
            let self_in_m = inp.mask.map_or(true, |m| m.m(u, u));
            let include_self = params.include_positive || self_in_m;

            // unnormalized weights for every candidate at once; cosines are
            // bounded, so shifting by the largest possible exponent 1/τ
            // stabilizes the sum without a max scan
            let inv_tau = 1.0 / tau;
            exp_scaled(srow, crow, inv_tau);
            // masked-out pairs and (in literal-mask mode) the self entry
            // contribute exactly zero
            for &fneg in f_row {
                if let Ok(b) = cands.binary_search(&fneg) {
                    crow[b] = 0.0;
                }
            }
            if !include_self {
                crow[self_pos] = 0.0;
            }
            let sum: f64 = crow.iter().sum();
            if sum == 0.0 {
                // literal-mask mode with an empty denominator (or a τ so
                // extreme every weight underflowed): skip the anchor
                continue;
            }
            let log_d = inv_tau + sum.ln();

            let aux_sim = match &aux_data {
                Some((aux_hat, _)) if a_norm[ai] > 0.0 => dot(a_hat.row(ai), aux_hat.row(ai)),
                _ => 0.0,
            };
            aux_sims[a] = aux_sim;
            let numerator =
                pos_sim * inv_tau + if aux_data.is_some() { aux_sim * inv_tau } else { 0.0 };
            loss += -numerator + log_d;

            // pass 3: normalize into coefficients, accumulate the dot terms
            let inv_sum = 1.0 / sum;
            let mut rd = 0.0f64;
            for b in 0..n_c {
                let coeff = crow[b] * inv_sum;
                crow[b] = coeff;
                let cs = coeff * srow[b];
                rd += cs;
                coldot[b] += cs;
            }
            // the −1 of the positive-pair derivative
            crow[self_pos] -= 1.0;
            rd -= pos_sim;
            coldot[self_pos] -= pos_sim;
            rowdot[a] = rd;
        }

        // aux pair gradients, anchor-local with coefficient −1/τ
        if let (Some((aux_hat, aux_norm)), Some(g_aux)) = (&aux_data, g_aux.as_deref_mut()) {
            for a in 0..len {
                let ai = start + a;
                let u = anchors[ai] as usize;
                if a_norm[ai] > 0.0 && aux_norm[ai] > 0.0 {
                    let sim = aux_sims[a];
                    let ah = a_hat.row(ai);
                    let xh = aux_hat.row(ai);
                    let g1_row = g1.row_mut(inp.row_offset + u);
                    let s1 = 1.0 / (tau * a_norm[ai]);
                    for c in 0..f {
                        g1_row[c] -= s1 * (xh[c] - sim * ah[c]);
                    }
                    let ga = g_aux.row_mut(anchors[ai] as usize);
                    let s2 = 1.0 / (tau * aux_norm[ai]);
                    for c in 0..f {
                        ga[c] -= s2 * (ah[c] - sim * xh[c]);
                    }
                }
            }
        }

        // chunk gemms: T1 = C·ĉ feeds the anchor gradients; Cᵀ·â feeds the
        // candidate gradients accumulated across chunks.
        matmul_nn(1.0, &coeffs, &c_hat, 0.0, &mut t1);
        for a in 0..len {
            let ai = start + a;
            if a_norm[ai] == 0.0 {
                continue; // cosine against the zero vector has zero gradient
            }
            let u = anchors[ai] as usize;
            let scale = 1.0 / (tau * a_norm[ai]);
            let ah = a_hat.row(ai);
            let trow = t1.row(a);
            let g1_row = g1.row_mut(inp.row_offset + u);
            let rd = rowdot[a];
            for c in 0..f {
                g1_row[c] += scale * (trow[c] - rd * ah[c]);
            }
        }
        matmul_tn(1.0, &coeffs, &a_chunk, 1.0, &mut g2_hat_acc);

        start += len;
    }

    for (b, &cand) in cands.iter().enumerate() {
        if c_norm[b] == 0.0 {
            continue;
        }
        let scale = 1.0 / (tau * c_norm[b]);
        let ch = c_hat.row(b);
        let acc = g2_hat_acc.row(b);
        let cd = coldot[b];
        let g2_row = g2.row_mut(inp.row_offset + cand as usize);
        for c in 0..f {
            g2_row[c] += scale * (acc[c] - cd * ch[c]);
        }
    }

    Ok(loss)
}

/// Everything the multi-task objective needs beyond the state and the batch.
pub struct ObjectiveConfig<'a> {
    /// Normalized adjacency of the original (unaugmented) train graph.
    pub adj: &'a CsrMatrix,
    /// The two augmented views; `None` disables the contrastive task.
    pub view1: Option<&'a crate::augment::AugmentedView>,
    pub view2: Option<&'a crate::augment::AugmentedView>,
    /// Debiasing masks; `None` degenerates the contrast set to SGL sampling.
    pub masks: Option<&'a CoOccurrenceMasks>,
    /// Aux-feature aggregation operators; `None` drops the aux positives.
    pub aux_ops: Option<&'a AuxOperators>,
    pub fe_kind: FeKind,
    pub layers: usize,
    pub tau: f64,
    pub lambda: f64,
    pub mu: f64,
    pub include_positive: bool,
    pub full_contrast: bool,
}

/// Per-step loss components. total = rec + λ·(ssl_user + ssl_item) + μ·reg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub ssl_user: f64,
    pub ssl_item: f64,
    pub reg: f64,
    pub total: f64,
}

/// Reusable buffers for one training configuration.
pub struct ObjectiveWorkspace {
    x_rec: Matrix,
    x_v1: Matrix,
    x_v2: Matrix,
    g_rec: Matrix,
    g_v1: Matrix,
    g_v2: Matrix,
    g_aux_user: Matrix,
    g_aux_item: Matrix,
    /// Assembled gradient of the total loss w.r.t. x0.
    pub g_x0: Matrix,
    /// Transform-weight gradients (`nl+w` only).
    pub fe_grads: FeGrads,
    prop: PropScratch,
    all_users: Vec<u32>,
    all_items: Vec<u32>,
}

impl ObjectiveWorkspace {
    pub fn new(num_users: usize, num_items: usize, dim: usize) -> Self {
        let n = num_users + num_items;
        ObjectiveWorkspace {
            x_rec: Matrix::zeros(n, dim),
            x_v1: Matrix::zeros(n, dim),
            x_v2: Matrix::zeros(n, dim),
            g_rec: Matrix::zeros(n, dim),
            g_v1: Matrix::zeros(n, dim),
            g_v2: Matrix::zeros(n, dim),
            g_aux_user: Matrix::zeros(num_users, dim),
            g_aux_item: Matrix::zeros(num_items, dim),
            g_x0: Matrix::zeros(n, dim),
            fe_grads: FeGrads::default(),
            prop: PropScratch::new(n, dim),
            all_users: (0..num_users as u32).collect(),
            all_items: (0..num_items as u32).collect(),
        }
    }

    /// Final embeddings on the original graph from the latest `total_loss`.
    pub fn rec_embeddings(&self) -> &Matrix {
        &self.x_rec
    }
}

fn view_op(view: &crate::augment::AugmentedView) -> PropagationOp<'_> {
    match &view.per_layer {
        Some(mats) => PropagationOp::PerLayer(mats),
        None => PropagationOp::Single(&view.norm_adj),
    }
}

/// Compute every loss term for one batch and assemble the full gradient over
/// x0 (and the transform weights when active) into the workspace.
pub fn total_loss(
    state: &EmbeddingState,
    batch: &BatchTriples,
    obj: &ObjectiveConfig,
    work: &mut ObjectiveWorkspace,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let num_users = state.num_users;
    let batch_size = batch.len() as f64;

    work.g_x0.fill(0.0);
    work.fe_grads = FeGrads::default();

    // recommendation path on the original graph
    propagate_combined(
        PropagationOp::Single(obj.adj),
        &state.x0,
        obj.layers,
        &mut work.prop,
        &mut work.x_rec,
    );
    work.g_rec.fill(0.0);
    let rec = bpr_loss(batch, &work.x_rec, num_users, &mut work.g_rec);

    // L2 over the unique x0 rows the batch touches, scaled by 1/|B|
    let touched = batch.touched_rows(num_users);
    let mut reg = 0.0;
    for &r in &touched {
        reg += dot(state.x0.row(r), state.x0.row(r));
    }
    reg /= batch_size;
    if obj.mu > 0.0 {
        let scale = obj.mu * 2.0 / batch_size;
        for &r in &touched {
            let src = state.x0.row(r).to_vec();
            axpy(scale, &src, work.g_x0.row_mut(r));
        }
    }

    // contrastive task on the two augmented views
    let mut ssl_user = 0.0;
    let mut ssl_item = 0.0;
    let ssl_active = obj.lambda > 0.0 && obj.view1.is_some() && obj.view2.is_some();
    if ssl_active {
        let view1 = obj.view1.expect("checked");
        let view2 = obj.view2.expect("checked");
        propagate_combined(view_op(view1), &state.x0, obj.layers, &mut work.prop, &mut work.x_v1);
        propagate_combined(view_op(view2), &state.x0, obj.layers, &mut work.prop, &mut work.x_v2);
        work.g_v1.fill(0.0);
        work.g_v2.fill(0.0);

        let aux = obj.aux_ops.map(|ops| {
            work.g_aux_user.fill(0.0);
            work.g_aux_item.fill(0.0);
            extract_aux_features(ops, state, obj.fe_kind)
        });

        let users = batch.unique_users();
        let items = batch.unique_pos_items();
        let params = InfoNceParams {
            tau: obj.tau,
            include_positive: obj.include_positive,
        };

        let user_cands: &[u32] = if obj.full_contrast { &work.all_users } else { &users };
        let side = SideInputs {
            anchors: &users,
            candidates: user_cands,
            z1: &work.x_v1,
            z2: &work.x_v2,
            row_offset: 0,
            mask: obj.masks.map(|m| &m.user),
            aux: aux.as_ref().map(|a| &a.x_user),
        };
        ssl_user = debiased_infonce(
            &side,
            &params,
            &mut work.g_v1,
            &mut work.g_v2,
            aux.as_ref().map(|_| &mut work.g_aux_user),
        )?;

        let item_cands: &[u32] = if obj.full_contrast { &work.all_items } else { &items };
        let side = SideInputs {
            anchors: &items,
            candidates: item_cands,
            z1: &work.x_v1,
            z2: &work.x_v2,
            row_offset: num_users,
            mask: obj.masks.map(|m| &m.item),
            aux: aux.as_ref().map(|a| &a.x_item),
        };
        ssl_item = debiased_infonce(
            &side,
            &params,
            &mut work.g_v1,
            &mut work.g_v2,
            aux.as_ref().map(|_| &mut work.g_aux_item),
        )?;

        // backward through the view propagations, scaled by λ
        propagate_backward(
            view_op(view1),
            &work.g_v1,
            obj.layers,
            obj.lambda,
            &mut work.prop,
            &mut work.g_x0,
        );
        propagate_backward(
            view_op(view2),
            &work.g_v2,
            obj.layers,
            obj.lambda,
            &mut work.prop,
            &mut work.g_x0,
        );
        if let (Some(ops), Some(auxf)) = (obj.aux_ops, aux.as_ref()) {
            work.fe_grads = aux_backward(
                ops,
                auxf,
                state,
                &work.g_aux_user,
                &work.g_aux_item,
                obj.lambda,
                &mut work.g_x0,
            );
        }
    }

    // backward through the recommendation propagation
    propagate_backward(
        PropagationOp::Single(obj.adj),
        &work.g_rec,
        obj.layers,
        1.0,
        &mut work.prop,
        &mut work.g_x0,
    );

    let total = rec + obj.lambda * (ssl_user + ssl_item) + obj.mu * reg;
    Ok(LossBreakdown {
        rec,
        ssl_user,
        ssl_item,
        reg,
        total,
    })
}
