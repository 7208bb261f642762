//! Trainable embeddings and every forward computation: multi-layer linear
//! propagation, layer averaging, score prediction, and the one-layer
//! aggregation that turns each node's false-negative set into an auxiliary
//! positive representation.
//!
//! The whole encoder is linear in the embedding table, so the backward pass
//! needs no stored activations: the adjoint of `mean_l(A_l ⋯ A_1 x0)` is the
//! same chain applied to the upstream gradient (every propagation matrix here
//! is symmetric by construction).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dense::{dot, matmul_nn, Matrix};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Feature-extraction flavors for the auxiliary positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeKind {
    Linear,
    #[serde(rename = "nl")]
    Nonlinear,
    #[serde(rename = "nl+w")]
    NonlinearTransform,
}

impl FeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FeKind::Linear),
            "nl" => Ok(FeKind::Nonlinear),
            "nl+w" | "nlw" => Ok(FeKind::NonlinearTransform),
            other => Err(Error::Config(format!("unknown fe kind {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeKind::Linear => "linear",
            FeKind::Nonlinear => "nl",
            FeKind::NonlinearTransform => "nl+w",
        }
    }
}

/// Transform weights used by the `nl+w` feature-extraction variant, with
/// their Adam moments. These are the only trainable parameters besides x0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeParams {
    pub w_user: Matrix,
    pub w_item: Matrix,
    pub m1_user: Matrix,
    pub m2_user: Matrix,
    pub m1_item: Matrix,
    pub m2_item: Matrix,
}

impl FeParams {
    fn glorot(dim: usize, rng: &mut impl Rng) -> Matrix {
        let bound = (6.0 / (dim as f64 * 2.0)).sqrt();
        let uniform = Uniform::new(-bound, bound).expect("valid bounds");
        let mut w = Matrix::zeros(dim, dim);
        for v in w.data_mut() {
            *v = uniform.sample(rng);
        }
        w
    }

    pub fn init(dim: usize, rng: &mut impl Rng) -> Self {
        FeParams {
            w_user: Self::glorot(dim, rng),
            w_item: Self::glorot(dim, rng),
            m1_user: Matrix::zeros(dim, dim),
            m2_user: Matrix::zeros(dim, dim),
            m1_item: Matrix::zeros(dim, dim),
            m2_item: Matrix::zeros(dim, dim),
        }
    }
}

/// The trainable parameter block: X⁽⁰⁾ for all users and items plus Adam
/// moments. Users occupy rows `[0, num_users)`, items the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub num_users: usize,
    pub num_items: usize,
    pub x0: Matrix,
    pub moment1: Matrix,
    pub moment2: Matrix,
    pub step: u64,
    pub fe: Option<FeParams>,
}

impl EmbeddingState {
    /// Gaussian init, mean 0, std 0.1. `with_fe_transform` allocates the
    /// `nl+w` weights (drawn from the same stream, after x0).
    pub fn init(
        num_users: usize,
        num_items: usize,
        dim: usize,
        with_fe_transform: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let n = num_users + num_items;
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let mut x0 = Matrix::zeros(n, dim);
        for v in x0.data_mut() {
            *v = normal.sample(rng);
        }
        let fe = with_fe_transform.then(|| FeParams::init(dim, rng));
        EmbeddingState {
            num_users,
            num_items,
            x0,
            moment1: Matrix::zeros(n, dim),
            moment2: Matrix::zeros(n, dim),
            step: 0,
            fe,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn dim(&self) -> usize {
        self.x0.cols()
    }

    /// x0 rows of the user block (contiguous prefix).
    pub fn x0_users(&self) -> &[f64] {
        &self.x0.data()[..self.num_users * self.dim()]
    }

    /// x0 rows of the item block (contiguous suffix).
    pub fn x0_items(&self) -> &[f64] {
        &self.x0.data()[self.num_users * self.dim()..]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        w.write_all(b"TDSGLCKP").map_err(io)?;
        w.write_all(&1u32.to_le_bytes()).map_err(io)?;
        let flags: u32 = if self.fe.is_some() { 1 } else { 0 };
        w.write_all(&flags.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.num_users as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.num_items as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&self.step.to_le_bytes()).map_err(io)?;
        for m in [&self.x0, &self.moment1, &self.moment2] {
            write_matrix(&mut w, m).map_err(io)?;
        }
        if let Some(fe) = &self.fe {
            for m in [
                &fe.w_user, &fe.m1_user, &fe.m2_user, &fe.w_item, &fe.m1_item, &fe.m2_item,
            ] {
                write_matrix(&mut w, m).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != b"TDSGLCKP" {
            return Err(Error::format(path, "bad checkpoint magic"));
        }
        let version = read_u32(&mut r).map_err(io)?;
        if version != 1 {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let flags = read_u32(&mut r).map_err(io)?;
        let num_users = read_u64(&mut r).map_err(io)? as usize;
        let num_items = read_u64(&mut r).map_err(io)? as usize;
        let dim = read_u64(&mut r).map_err(io)? as usize;
        let step = read_u64(&mut r).map_err(io)?;
        let n = num_users + num_items;
        let x0 = read_matrix(&mut r, n, dim).map_err(io)?;
        let moment1 = read_matrix(&mut r, n, dim).map_err(io)?;
        let moment2 = read_matrix(&mut r, n, dim).map_err(io)?;
        let fe = if flags & 1 != 0 {
            Some(FeParams {
                w_user: read_matrix(&mut r, dim, dim).map_err(io)?,
                m1_user: read_matrix(&mut r, dim, dim).map_err(io)?,
                m2_user: read_matrix(&mut r, dim, dim).map_err(io)?,
                w_item: read_matrix(&mut r, dim, dim).map_err(io)?,
                m1_item: read_matrix(&mut r, dim, dim).map_err(io)?,
                m2_item: read_matrix(&mut r, dim, dim).map_err(io)?,
            })
        } else {
            None
        };
        Ok(EmbeddingState {
            num_users,
            num_items,
            x0,
            moment1,
            moment2,
            step,
            fe,
        })
    }
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> std::io::Result<()> {
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> std::io::Result<Matrix> {
    let mut data = vec![0.0f64; rows * cols];
    let mut buf = [0u8; 8];
    for v in &mut data {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Which graph a forward pass ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewTag {
    Original,
    View1,
    View2,
}

/// Propagation operator: one shared matrix, or one per layer (random walk).
#[derive(Debug, Clone, Copy)]
pub enum PropagationOp<'a> {
    Single(&'a CsrMatrix),
    PerLayer(&'a [CsrMatrix]),
}

impl<'a> PropagationOp<'a> {
    #[inline]
    fn layer(&self, l: usize) -> &'a CsrMatrix {
        match self {
            PropagationOp::Single(m) => m,
            PropagationOp::PerLayer(ms) => &ms[l],
        }
    }

    fn n(&self) -> usize {
        self.layer(0).rows()
    }
}

/// Per-layer representations plus their uniform mean.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub layers: Vec<Matrix>,
    pub combined: Matrix,
    pub tag: ViewTag,
}

/// X⁽ˡ⁺¹⁾ = M_norm · X⁽ˡ⁾ per layer; combined = mean over layers 0..L.
pub fn propagate(op: PropagationOp, x0: &Matrix, layers: usize, tag: ViewTag) -> Result<ForwardOutput> {
    if op.n() != x0.rows() {
        return Err(Error::ShapeMismatch(format!(
            "adjacency is {}×{} but embeddings have {} rows",
            op.n(),
            op.n(),
            x0.rows()
        )));
    }
    let mut per_layer = Vec::with_capacity(layers + 1);
    per_layer.push(x0.clone());
    for l in 0..layers {
        let mut next = Matrix::zeros(x0.rows(), x0.cols());
        op.layer(l).mul_dense(&per_layer[l], &mut next);
        per_layer.push(next);
    }
    let mut combined = Matrix::zeros(x0.rows(), x0.cols());
    for m in &per_layer {
        combined.add_scaled(m, 1.0);
    }
    combined.scale(1.0 / (layers as f64 + 1.0));
    Ok(ForwardOutput {
        layers: per_layer,
        combined,
        tag,
    })
}

/// Reusable buffers for the allocation-free propagation paths.
#[derive(Debug, Clone)]
pub struct PropScratch {
    a: Matrix,
    b: Matrix,
}

impl PropScratch {
    pub fn new(n: usize, dim: usize) -> Self {
        PropScratch {
            a: Matrix::zeros(n, dim),
            b: Matrix::zeros(n, dim),
        }
    }
}

/// combined = mean_{l=0..L}(A_l ⋯ A_1 x0), written into `out`.
pub fn propagate_combined(
    op: PropagationOp,
    x0: &Matrix,
    layers: usize,
    scratch: &mut PropScratch,
    out: &mut Matrix,
) {
    out.data_mut().copy_from_slice(x0.data());
    if layers == 0 {
        return;
    }
    scratch.a.data_mut().copy_from_slice(x0.data());
    for l in 0..layers {
        op.layer(l).mul_dense(&scratch.a, &mut scratch.b);
        out.add_scaled(&scratch.b, 1.0);
        std::mem::swap(&mut scratch.a, &mut scratch.b);
    }
    out.scale(1.0 / (layers as f64 + 1.0));
}

/// acc += scale · (∂combined/∂x0)ᵀ · grad, exploiting the symmetry of every
/// propagation matrix: Σ_l (A_1⋯A_l)ᵀ g = g + A_1(g + A_2(… + A_L g)).
pub fn propagate_backward(
    op: PropagationOp,
    grad_combined: &Matrix,
    layers: usize,
    scale: f64,
    scratch: &mut PropScratch,
    acc: &mut Matrix,
) {
    let norm = scale / (layers as f64 + 1.0);
    if layers == 0 {
        acc.add_scaled(grad_combined, norm);
        return;
    }
    // t starts as g and folds layers from the top down.
    scratch.a.data_mut().copy_from_slice(grad_combined.data());
    for l in (0..layers).rev() {
        op.layer(l).mul_dense(&scratch.a, &mut scratch.b);
        for ((a, g), b) in scratch
            .a
            .data_mut()
            .iter_mut()
            .zip(grad_combined.data())
            .zip(scratch.b.data())
        {
            *a = g + b;
        }
    }
    acc.add_scaled(&scratch.a, norm);
}

/// Inner product of the final user and item rows.
pub fn predict_score(combined: &Matrix, num_users: usize, user: usize, item: usize) -> f64 {
    dot(combined.row(user), combined.row(num_users + item))
}

/// Normalized false-negative aggregation operators, one per side.
#[derive(Debug, Clone)]
pub struct AuxOperators {
    pub user: CsrMatrix,
    pub item: CsrMatrix,
}

impl AuxOperators {
    pub fn from_masks(masks: &crate::graph::CoOccurrenceMasks) -> Self {
        AuxOperators {
            user: crate::graph::aux_operator(&masks.user.f),
            item: crate::graph::aux_operator(&masks.item.f),
        }
    }
}

/// Auxiliary positive features and the intermediates their backward needs.
#[derive(Debug, Clone)]
pub struct AuxFeatures {
    pub x_user: Matrix,
    pub x_item: Matrix,
    h_user: Option<Matrix>,
    h_item: Option<Matrix>,
    pre_user: Option<Matrix>,
    pre_item: Option<Matrix>,
    kind: FeKind,
}

fn mul_rows(op: &CsrMatrix, x_rows: &[f64], dim: usize, out: &mut Matrix) {
    // thin wrapper so the user/item blocks of x0 can be used without copying
    let x = Matrix::from_vec(op.cols(), dim, x_rows.to_vec());
    op.mul_dense(&x, out);
}

fn aux_side(
    op: &CsrMatrix,
    x0_rows: &[f64],
    dim: usize,
    w: Option<&Matrix>,
    kind: FeKind,
) -> (Matrix, Option<Matrix>, Option<Matrix>) {
    let n = op.rows();
    let mut h = Matrix::zeros(n, dim);
    mul_rows(op, x0_rows, dim, &mut h);
    match kind {
        FeKind::Linear => (h, None, None),
        FeKind::Nonlinear => {
            let pre = h;
            let mut x = pre.clone();
            for v in x.data_mut() {
                *v = v.max(0.0);
            }
            (x, None, Some(pre))
        }
        FeKind::NonlinearTransform => {
            let w = w.expect("nl+w requires transform weights");
            let mut pre = Matrix::zeros(n, dim);
            matmul_nn(1.0, &h, w, 0.0, &mut pre);
            let mut x = pre.clone();
            for v in x.data_mut() {
                *v = v.max(0.0);
            }
            (x, Some(h), Some(pre))
        }
    }
}

/// One-layer aggregation of the initial embeddings over each node's
/// false-negative set; rows with no false negatives come out all-zero.
/// Depends on x0 only, never on propagated layers.
pub fn extract_aux_features(ops: &AuxOperators, state: &EmbeddingState, kind: FeKind) -> AuxFeatures {
    let dim = state.dim();
    let (wu, wi) = match (&state.fe, kind) {
        (Some(fe), FeKind::NonlinearTransform) => (Some(&fe.w_user), Some(&fe.w_item)),
        (None, FeKind::NonlinearTransform) => {
            panic!("nl+w feature extraction requires FeParams in the state")
        }
        _ => (None, None),
    };
    let (x_user, h_user, pre_user) = aux_side(&ops.user, state.x0_users(), dim, wu, kind);
    let (x_item, h_item, pre_item) = aux_side(&ops.item, state.x0_items(), dim, wi, kind);
    AuxFeatures {
        x_user,
        x_item,
        h_user,
        h_item,
        pre_user,
        pre_item,
        kind,
    }
}

/// Gradients produced by the aux backward pass for the `nl+w` transform.
#[derive(Debug, Clone, Default)]
pub struct FeGrads {
    pub w_user: Option<Matrix>,
    pub w_item: Option<Matrix>,
}

#[allow(clippy::too_many_arguments)]
fn aux_backward_side(
    op: &CsrMatrix,
    aux: &AuxFeatures,
    side_user: bool,
    g_aux: &Matrix,
    w: Option<&Matrix>,
    scale: f64,
    g_x0_rows: &mut [f64],
    dim: usize,
) -> Option<Matrix> {
    let n = op.rows();
    let (pre, h) = if side_user {
        (aux.pre_user.as_ref(), aux.h_user.as_ref())
    } else {
        (aux.pre_item.as_ref(), aux.h_item.as_ref())
    };
    // gradient through the nonlinearity (if any)
    let g_pre = match aux.kind {
        FeKind::Linear => g_aux.clone(),
        _ => {
            let pre = pre.expect("pre-activation stored");
            let mut g = g_aux.clone();
            for (gv, pv) in g.data_mut().iter_mut().zip(pre.data()) {
                if *pv <= 0.0 {
                    *gv = 0.0;
                }
            }
            g
        }
    };
    // gradient through the optional transform
    let (g_h, g_w) = match aux.kind {
        FeKind::NonlinearTransform => {
            let w = w.expect("weights present");
            let h = h.expect("h stored");
            let mut g_w = Matrix::zeros(dim, dim);
            // g_W = hᵀ g_pre
            unsafe {
                matrixmultiply::dgemm(
                    dim,
                    n,
                    dim,
                    scale,
                    h.data().as_ptr(),
                    1,
                    dim as isize, // hᵀ via strides
                    g_pre.data().as_ptr(),
                    dim as isize,
                    1,
                    0.0,
                    g_w.data_mut().as_mut_ptr(),
                    dim as isize,
                    1,
                );
            }
            let mut g_h = Matrix::zeros(n, dim);
            // g_h = g_pre · Wᵀ
            crate::dense::matmul_nt(&g_pre, w, &mut g_h);
            (g_h, Some(g_w))
        }
        _ => (g_pre, None),
    };
    // through the (symmetric) aggregation operator into x0 rows
    let mut g_x0_side = Matrix::zeros(n, dim);
    op.mul_dense(&g_h, &mut g_x0_side);
    for (dst, src) in g_x0_rows.iter_mut().zip(g_x0_side.data()) {
        *dst += scale * src;
    }
    g_w
}

/// Accumulate `scale · ∂(aux features)/∂x0 ᵀ · g_aux` into the x0 gradient
/// (user rows first, item rows after) and return transform-weight gradients
/// when the `nl+w` variant is active.
pub fn aux_backward(
    ops: &AuxOperators,
    aux: &AuxFeatures,
    state: &EmbeddingState,
    g_aux_user: &Matrix,
    g_aux_item: &Matrix,
    scale: f64,
    g_x0: &mut Matrix,
) -> FeGrads {
    let dim = state.dim();
    let nu = state.num_users;
    let (wu, wi) = match &state.fe {
        Some(fe) => (Some(&fe.w_user), Some(&fe.w_item)),
        None => (None, None),
    };
    let data = g_x0.data_mut();
    let (user_rows, item_rows) = data.split_at_mut(nu * dim);
    let w_user = aux_backward_side(&ops.user, aux, true, g_aux_user, wu, scale, user_rows, dim);
    let w_item = aux_backward_side(&ops.item, aux, false, g_aux_item, wi, scale, item_rows, dim);
    FeGrads { w_user, w_item }
}
