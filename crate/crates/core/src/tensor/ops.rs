//! Slice-level kernels shared by [`Tensor`](super::Tensor) methods and the
//! tape's forward/backward passes.

use crate::error::{Error, Result};
use crate::scalar::{gemm, Trans};
use crate::Scalar;

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    // branch keeps exp() from overflowing for large |x|
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh-approximated GeLU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::of(3.0) * a * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * du
}

pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    gemm(Trans::No, Trans::No, m, k, n, a, b, T::zero(), &mut c);
    c
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// In-place softmax over the middle axis of an `[outer × len × inner]` view.
pub fn softmax_strided<T: Scalar>(x: &mut [T], outer: usize, len: usize, inner: usize) {
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut mx = T::neg_infinity();
            for j in 0..len {
                mx = mx.max(x[base + j * inner]);
            }
            let mut total = T::zero();
            for j in 0..len {
                let e = (x[base + j * inner] - mx).exp();
                x[base + j * inner] = e;
                total += e;
            }
            for j in 0..len {
                x[base + j * inner] /= total;
            }
        }
    }
}

/// Softmax vector-Jacobian product: `dx = y ⊙ (dy − Σ y·dy)` per slice.
pub fn softmax_backward_strided<T: Scalar>(
    y: &[T],
    dy: &[T],
    dx: &mut [T],
    outer: usize,
    len: usize,
    inner: usize,
) {
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut s = T::zero();
            for j in 0..len {
                s += y[base + j * inner] * dy[base + j * inner];
            }
            for j in 0..len {
                let p = base + j * inner;
                dx[p] += y[p] * (dy[p] - s);
            }
        }
    }
}

/// Returns normalized output and the per-row inverse RMS.
pub fn rms_norm<T: Scalar>(x: &[T], gain: &[T], d: usize, eps: T) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let mut out = vec![T::zero(); x.len()];
    let mut inv = vec![T::zero(); rows];
    let dn = T::from_usize(d).unwrap();
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let ms = row.iter().map(|v| *v * *v).sum::<T>() / dn;
        let ir = T::one() / (ms + eps).sqrt();
        inv[r] = ir;
        for j in 0..d {
            out[r * d + j] = row[j] * ir * gain[j];
        }
    }
    (out, inv)
}

pub fn rms_norm_backward<T: Scalar>(
    x: &[T],
    gain: &[T],
    inv: &[T],
    dy: &[T],
    d: usize,
    dx: Option<&mut [T]>,
    dgain: Option<&mut [T]>,
) {
    let rows = x.len() / d;
    let dn = T::from_usize(d).unwrap();
    if let Some(dg) = dgain {
        for r in 0..rows {
            for j in 0..d {
                dg[j] += dy[r * d + j] * x[r * d + j] * inv[r];
            }
        }
    }
    if let Some(dx) = dx {
        for r in 0..rows {
            let ir = inv[r];
            let mut proj = T::zero();
            for j in 0..d {
                proj += dy[r * d + j] * gain[j] * x[r * d + j] * ir;
            }
            proj /= dn;
            for j in 0..d {
                let xhat = x[r * d + j] * ir;
                dx[r * d + j] += ir * (dy[r * d + j] * gain[j] - xhat * proj);
            }
        }
    }
}

pub fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().position(|&i| i >= vocab) {
        None => Ok(()),
        Some(p) => Err(Error::Data(format!(
            "token id {} at position {p} is outside the vocabulary of {vocab}",
            ids[p]
        ))),
    }
}

pub fn gather_rows<T: Scalar>(table: &[T], d: usize, ids: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(ids.len() * d);
    for &i in ids {
        out.extend_from_slice(&table[i * d..(i + 1) * d]);
    }
    out
}

/// Mean cross-entropy and the softmax probabilities it was computed from.
pub fn cross_entropy<T: Scalar>(logits: &[T], targets: &[usize], vocab: usize) -> (T, Vec<T>) {
    let rows = targets.len();
    let mut probs = logits.to_vec();
    softmax_strided(&mut probs, rows, vocab, 1);
    let mut total = T::zero();
    for (r, &t) in targets.iter().enumerate() {
        total += nll_row(&logits[r * vocab..(r + 1) * vocab], t);
    }
    (total / T::from_usize(rows).unwrap(), probs)
}

/// `−log softmax(row)[target]` via log-sum-exp.
pub fn nll_row<T: Scalar>(row: &[T], target: usize) -> T {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|v| (*v - mx).exp()).sum::<T>().ln() + mx;
    lse - row[target]
}
