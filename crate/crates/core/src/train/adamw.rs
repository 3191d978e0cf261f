use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor::Tensor;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        AdamWState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One AdamW update with bias-corrected moments and decoupled weight decay:
///
/// `p ← p − lr·(m̂ / (√v̂ + eps) + wd·p)`, decay only where `decay[i]`.
pub fn adamw_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Vec<T>],
    state: &mut AdamWState<T>,
    hyper: &AdamWHyper,
    decay: &[bool],
) -> Result<()> {
    ensure!(
        params.len() == grads.len()
            && params.len() == state.m.len()
            && params.len() == state.v.len()
            && params.len() == decay.len(),
        Contract,
        "adamw: {} params, {} grads, {} moment slots, {} decay flags",
        params.len(),
        grads.len(),
        state.m.len(),
        decay.len()
    );
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        ensure!(
            p.numel() == g.len() && p.numel() == state.m[i].len() && p.numel() == state.v[i].len(),
            Contract,
            "adamw: parameter {i} has {} values but gradient/state lengths {}/{}/{}",
            p.numel(),
            g.len(),
            state.m[i].len(),
            state.v[i].len()
        );
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(hyper.beta1), T::of(hyper.beta2));
    let c1 = T::of(1.0 - hyper.beta1.powi(t));
    let c2 = T::of(1.0 - hyper.beta2.powi(t));
    let (lr, eps) = (T::of(hyper.lr), T::of(hyper.eps));
    let one = T::one();
    for (i, p) in params.iter_mut().enumerate() {
        let wd = if decay[i] {
            T::of(hyper.weight_decay)
        } else {
            T::zero()
        };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let gj = grads[i][j];
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            *x -= lr * (mh / (vh.sqrt() + eps) + wd * *x);
        }
    }
    Ok(())
}
