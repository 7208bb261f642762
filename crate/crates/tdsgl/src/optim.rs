//! Row-sparse Adam over the embedding table.
//!
//! Moments update lazily: rows whose gradient is entirely zero keep their
//! moments and values untouched (no decay), which is what makes the
//! degeneration identities bit-exact and keeps epochs cheap when batches
//! touch a small neighborhood. The step counter is global and drives the
//! usual bias correction.

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::model::{EmbeddingState, FeGrads};

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn update_rows(
    x: &mut Matrix,
    m1: &mut Matrix,
    m2: &mut Matrix,
    grad: &Matrix,
    p: &AdamParams,
    bc1: f64,
    bc2: f64,
) {
    let cols = x.cols();
    for r in 0..x.rows() {
        let g = grad.row(r);
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let m1r = m1.row_mut(r);
        let m2r = m2.row_mut(r);
        let xr = x.row_mut(r);
        for c in 0..cols {
            let gv = g[c];
            m1r[c] = p.beta1 * m1r[c] + (1.0 - p.beta1) * gv;
            m2r[c] = p.beta2 * m2r[c] + (1.0 - p.beta2) * gv * gv;
            let mhat = m1r[c] / bc1;
            let vhat = m2r[c] / bc2;
            xr[c] -= p.lr * mhat / (vhat.sqrt() + p.eps);
        }
    }
}

/// One optimizer step. Applies the x0 gradient to its touched rows and the
/// transform-weight gradients (when present) densely. Rejects non-finite
/// gradients with a diagnostic.
pub fn adam_step(
    state: &mut EmbeddingState,
    grad: &Matrix,
    fe_grads: &FeGrads,
    p: &AdamParams,
) -> Result<()> {
    if !grad.is_finite() {
        return Err(Error::Diverged {
            step: state.step,
            msg: "non-finite gradient for x0".into(),
        });
    }
    for g in [&fe_grads.w_user, &fe_grads.w_item].into_iter().flatten() {
        if !g.is_finite() {
            return Err(Error::Diverged {
                step: state.step,
                msg: "non-finite gradient for transform weights".into(),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - p.beta1.powi(t);
    let bc2 = 1.0 - p.beta2.powi(t);

    update_rows(&mut state.x0, &mut state.moment1, &mut state.moment2, grad, p, bc1, bc2);

    if let Some(fe) = state.fe.as_mut() {
        if let Some(gw) = &fe_grads.w_user {
            update_rows(&mut fe.w_user, &mut fe.m1_user, &mut fe.m2_user, gw, p, bc1, bc2);
        }
        if let Some(gw) = &fe_grads.w_item {
            update_rows(&mut fe.w_item, &mut fe.m1_item, &mut fe.m2_item, gw, p, bc1, bc2);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn small_state() -> EmbeddingState {
        EmbeddingState::init(2, 2, 3, false, &mut ChaCha20Rng::seed_from_u64(1))
    }

    #[test]
    fn first_step_is_signed_lr() {
        let mut state = small_state();
        let before = state.x0.clone();
        let mut grad = Matrix::zeros(4, 3);
        grad.set(1, 2, 0.7);
        grad.set(3, 0, -2.5);
        adam_step(&mut state, &grad, &FeGrads::default(), &AdamParams::with_lr(0.01)).unwrap();
        // bias-corrected m̂/√v̂ = g/|g| on the first step (up to ε)
        let d12 = state.x0.get(1, 2) - before.get(1, 2);
        let d30 = state.x0.get(3, 0) - before.get(3, 0);
        assert!((d12 + 0.01).abs() < 1e-6, "descends against positive grad: {d12}");
        assert!((d30 - 0.01).abs() < 1e-6, "ascends against negative grad: {d30}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_only_advances_step() {
        let mut state = small_state();
        let before = state.clone();
        let grad = Matrix::zeros(4, 3);
        adam_step(&mut state, &grad, &FeGrads::default(), &AdamParams::with_lr(0.1)).unwrap();
        assert_eq!(state.x0, before.x0);
        assert_eq!(state.moment1, before.moment1);
        assert_eq!(state.step, before.step + 1);
    }

    #[test]
    fn untouched_rows_keep_moments() {
        let mut state = small_state();
        let mut grad = Matrix::zeros(4, 3);
        grad.set(0, 0, 1.0);
        adam_step(&mut state, &grad, &FeGrads::default(), &AdamParams::with_lr(0.1)).unwrap();
        for r in 1..4 {
            assert!(state.moment1.row(r).iter().all(|&v| v == 0.0));
        }
        assert!(state.moment1.get(0, 0) != 0.0);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut state = small_state();
        let mut grad = Matrix::zeros(4, 3);
        grad.set(0, 0, f64::NAN);
        let err = adam_step(&mut state, &grad, &FeGrads::default(), &AdamParams::with_lr(0.1));
        assert!(matches!(err, Err(Error::Diverged { .. })));
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        // x ↦ x² from x = 1: |x| strictly decreases over the first 10 steps
        let mut state = small_state();
        state.x0 = Matrix::zeros(4, 3);
        state.x0.set(0, 0, 1.0);
        let p = AdamParams::with_lr(0.1);
        let mut last = 1.0f64;
        for _ in 0..10 {
            let mut grad = Matrix::zeros(4, 3);
            grad.set(0, 0, 2.0 * state.x0.get(0, 0));
            adam_step(&mut state, &grad, &FeGrads::default(), &p).unwrap();
            let x = state.x0.get(0, 0).abs();
            assert!(x < last, "|x| did not decrease: {x} vs {last}");
            last = x;
        }
    }
}
