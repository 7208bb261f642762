//! Finite-difference gradient verification.
//!
//! Central differences of the total loss against its analytic gradient, used
//! by the unit and acceptance suites. The differencing path perturbs a clone
//! of the state and re-runs the value computation, so it shares nothing with
//! the backward pass it checks.

use crate::dense::Matrix;
use crate::error::Result;
use crate::loss::{total_loss, BatchTriples, ObjectiveConfig, ObjectiveWorkspace};
use crate::model::EmbeddingState;

/// Central-difference gradient of the total loss w.r.t. every x0 entry.
pub fn fd_gradient_x0(
    state: &EmbeddingState,
    batch: &BatchTriples,
    obj: &ObjectiveConfig,
    h: f64,
) -> Result<Matrix> {
    let mut work = ObjectiveWorkspace::new(state.num_users, state.num_items, state.dim());
    let mut probe = state.clone();
    let mut fd = Matrix::zeros(probe.x0.rows(), probe.x0.cols());
    for r in 0..probe.x0.rows() {
        for c in 0..probe.x0.cols() {
            let orig = probe.x0.get(r, c);
            probe.x0.set(r, c, orig + h);
            let lp = total_loss(&probe, batch, obj, &mut work)?.total;
            probe.x0.set(r, c, orig - h);
            let lm = total_loss(&probe, batch, obj, &mut work)?.total;
            probe.x0.set(r, c, orig);
            fd.set(r, c, (lp - lm) / (2.0 * h));
        }
    }
    Ok(fd)
}

/// Central-difference gradients of the total loss w.r.t. the `nl+w`
/// transform weights, when present.
pub fn fd_gradient_fe(
    state: &EmbeddingState,
    batch: &BatchTriples,
    obj: &ObjectiveConfig,
    h: f64,
) -> Result<Option<(Matrix, Matrix)>> {
    if state.fe.is_none() {
        return Ok(None);
    }
    let mut work = ObjectiveWorkspace::new(state.num_users, state.num_items, state.dim());
    let mut probe = state.clone();
    let dim = state.dim();
    let mut out = Vec::new();
    for which in 0..2 {
        let mut fd = Matrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                let get = |s: &EmbeddingState| {
                    let fe = s.fe.as_ref().unwrap();
                    if which == 0 { fe.w_user.get(r, c) } else { fe.w_item.get(r, c) }
                };
                let set = |s: &mut EmbeddingState, v: f64| {
                    let fe = s.fe.as_mut().unwrap();
                    if which == 0 { fe.w_user.set(r, c, v) } else { fe.w_item.set(r, c, v) }
                };
                let orig = get(&probe);
                set(&mut probe, orig + h);
                let lp = total_loss(&probe, batch, obj, &mut work)?.total;
                set(&mut probe, orig - h);
                let lm = total_loss(&probe, batch, obj, &mut work)?.total;
                set(&mut probe, orig);
                fd.set(r, c, (lp - lm) / (2.0 * h));
            }
        }
        out.push(fd);
    }
    let w_item = out.pop().expect("two matrices");
    let w_user = out.pop().expect("two matrices");
    Ok(Some((w_user, w_item)))
}

/// Worst relative error between two gradients, with a floor on the
/// denominator so near-zero coordinates compare absolutely.
pub fn max_rel_error(analytic: &Matrix, fd: &Matrix, floor: f64) -> f64 {
    assert_eq!(analytic.rows(), fd.rows());
    assert_eq!(analytic.cols(), fd.cols());
    let mut worst = 0.0f64;
    for (a, b) in analytic.data().iter().zip(fd.data().iter()) {
        let rel = (a - b).abs() / a.abs().max(b.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}
