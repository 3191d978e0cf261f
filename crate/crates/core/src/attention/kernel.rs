//! Windowed multi-head attention with a hand-written backward pass.
//!
//! Scores for query `m` and key `n` are
//! `(R_m q_m)·(R_n k_n)/√d_k + s_h·(m−n)` over the band
//! `max(0, m−ω+1) ..= m`, then passed through softmax (normalized per row) or
//! sigmoid (elementwise) before weighting the values. Work per query is
//! O(ω·d_k), so a full sequence costs O(N·ω).

use serde::{Deserialize, Serialize};

use super::mask::BandMask;
use super::rope::{RopeParams, RopeTable};
use super::slopes::SlopeSchedule;
use crate::error::{ensure, Error, Result};
use crate::scalar::{axpy, dot};
use crate::tensor::{ops, Tensor};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softmax,
    Sigmoid,
}

/// Everything about an attention layer that is not a tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig<T> {
    pub activation: Activation,
    pub window: usize,
    /// Per-head distance slopes; `None` disables the bias.
    pub slopes: Option<Vec<T>>,
    pub rope: Option<RopeParams>,
    /// Optional constant multiplier on sigmoid weights (off by default).
    pub weight_scale: Option<T>,
}

impl<T: Scalar> AttentionConfig<T> {
    pub fn plain(activation: Activation, window: usize) -> Self {
        Self {
            activation,
            window,
            slopes: None,
            rope: None,
            weight_scale: None,
        }
    }

    pub(crate) fn slope(&self, head: usize) -> T {
        self.slopes.as_ref().map_or(T::zero(), |s| s[head])
    }

    pub(crate) fn weight_scale(&self) -> T {
        match self.activation {
            Activation::Sigmoid => self.weight_scale.unwrap_or(T::one()),
            Activation::Softmax => T::one(),
        }
    }

    pub(crate) fn validate(&self, heads: usize, head_dim: usize) -> Result<()> {
        ensure!(
            self.window >= 1,
            Config,
            "attention window must be at least 1"
        );
        if let Some(s) = &self.slopes {
            ensure!(
                s.len() == heads,
                Config,
                "{} slopes supplied for {heads} heads",
                s.len()
            );
        }
        if let Some(r) = &self.rope {
            ensure!(
                r.head_dim == head_dim,
                Config,
                "rotary head dim {} but attention head dim {head_dim}",
                r.head_dim
            );
        }
        Ok(())
    }
}

/// Batch layout of packed `[batch·seq_len × heads·head_dim]` projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionGeometry {
    pub batch: usize,
    pub seq_len: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl AttentionGeometry {
    pub fn packed_len(&self) -> usize {
        self.batch * self.seq_len * self.heads * self.head_dim
    }
}

/// Intermediates retained for the backward pass, all head-major
/// `[batch][head][pos][·]`.
#[derive(Clone, Debug)]
pub(crate) struct AttentionSaved<T> {
    pub qr: Vec<T>,
    pub kr: Vec<T>,
    pub v: Vec<T>,
    /// Activated weights, slot `m−n` of row `m`; `span` slots per row.
    pub w: Vec<T>,
    pub span: usize,
}

fn to_head_major<T: Scalar>(x: &[T], g: &AttentionGeometry) -> Vec<T> {
    let (n, h, d) = (g.seq_len, g.heads, g.head_dim);
    let mut out = vec![T::zero(); x.len()];
    for b in 0..g.batch {
        for p in 0..n {
            let src = (b * n + p) * h * d;
            for hh in 0..h {
                let dst = ((b * h + hh) * n + p) * d;
                out[dst..dst + d].copy_from_slice(&x[src + hh * d..src + (hh + 1) * d]);
            }
        }
    }
    out
}

fn add_from_head_major<T: Scalar>(x: &[T], g: &AttentionGeometry, out: &mut [T]) {
    let (n, h, d) = (g.seq_len, g.heads, g.head_dim);
    for b in 0..g.batch {
        for p in 0..n {
            let dst = (b * n + p) * h * d;
            for hh in 0..h {
                let src = ((b * h + hh) * n + p) * d;
                for j in 0..d {
                    out[dst + hh * d + j] += x[src + j];
                }
            }
        }
    }
}

/// Scores, activates and mixes one query row.
///
/// `key(j)`/`value(j)` return the key/value at distance `j` behind the query
/// (`j = 0` is the query's own position) for `j < count`. Weights land in
/// `weights[..count]`; `out` is overwritten.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn attend_row<'a, T: Scalar>(
    q: &[T],
    key: impl Fn(usize) -> &'a [T],
    value: impl Fn(usize) -> &'a [T],
    count: usize,
    slope: T,
    activation: Activation,
    score_scale: T,
    weight_scale: T,
    weights: &mut [T],
    out: &mut [T],
) {
    for j in 0..count {
        let dist = T::from_usize(j).unwrap();
        weights[j] = dot(q, key(j)) * score_scale + slope * dist;
    }
    let row = &mut weights[..count];
    match activation {
        Activation::Sigmoid => {
            for w in row.iter_mut() {
                *w = ops::sigmoid(*w);
            }
        }
        Activation::Softmax => ops::softmax_strided(row, 1, count, 1),
    }
    out.iter_mut().for_each(|o| *o = T::zero());
    for (j, w) in row.iter().enumerate() {
        axpy(*w * weight_scale, value(j), out);
    }
}

pub(crate) fn attention_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    g: &AttentionGeometry,
    cfg: &AttentionConfig<T>,
) -> (Vec<T>, AttentionSaved<T>) {
    let (n, h, d) = (g.seq_len, g.heads, g.head_dim);
    let mut qr = to_head_major(q, g);
    let mut kr = to_head_major(k, g);
    let vh = to_head_major(v, g);
    if let Some(rope) = &cfg.rope {
        let table = RopeTable::<T>::new(rope, 0, n);
        for bh in 0..g.batch * h {
            for p in 0..n {
                let o = (bh * n + p) * d;
                table.rotate(&mut qr[o..o + d], p);
                table.rotate(&mut kr[o..o + d], p);
            }
        }
    }
    let span = cfg.window.min(n.max(1));
    let score_scale = T::one() / T::from_usize(d).unwrap().sqrt();
    let weight_scale = cfg.weight_scale();
    let mut w = vec![T::zero(); g.batch * h * n * span];
    let mut out_h = vec![T::zero(); vh.len()];
    for bh in 0..g.batch * h {
        let slope = cfg.slope(bh % h);
        let base = bh * n * d;
        for m in 0..n {
            let count = m + 1 - (m + 1).saturating_sub(cfg.window);
            let row_w = &mut w[(bh * n + m) * span..(bh * n + m + 1) * span];
            let (qrow, orow) = (
                &qr[base + m * d..base + (m + 1) * d],
                &mut out_h[base + m * d..base + (m + 1) * d],
            );
            attend_row(
                qrow,
                |j| &kr[base + (m - j) * d..base + (m - j + 1) * d],
                |j| &vh[base + (m - j) * d..base + (m - j + 1) * d],
                count,
                slope,
                cfg.activation,
                score_scale,
                weight_scale,
                row_w,
                orow,
            );
        }
    }
    let mut out = vec![T::zero(); q.len()];
    add_from_head_major(&out_h, g, &mut out);
    (
        out,
        AttentionSaved {
            qr,
            kr,
            v: vh,
            w,
            span,
        },
    )
}

/// Accumulates input gradients (`+=`) for whichever of `dq`, `dk`, `dv` are
/// requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward<T: Scalar>(
    saved: &AttentionSaved<T>,
    g: &AttentionGeometry,
    cfg: &AttentionConfig<T>,
    dout: &[T],
    dq: Option<&mut [T]>,
    dk: Option<&mut [T]>,
    dv: Option<&mut [T]>,
) {
    let (n, h, d) = (g.seq_len, g.heads, g.head_dim);
    let span = saved.span;
    let dout_h = to_head_major(dout, g);
    let mut dqr = vec![T::zero(); dout.len()];
    let mut dkr = vec![T::zero(); dout.len()];
    let mut dvh = vec![T::zero(); dout.len()];
    let score_scale = T::one() / T::from_usize(d).unwrap().sqrt();
    let c = cfg.weight_scale();
    let mut ds = vec![T::zero(); span];
    for bh in 0..g.batch * h {
        let base = bh * n * d;
        for m in 0..n {
            let count = m + 1 - (m + 1).saturating_sub(cfg.window);
            let row_w = &saved.w[(bh * n + m) * span..(bh * n + m) * span + count];
            let go = &dout_h[base + m * d..base + (m + 1) * d];
            for j in 0..count {
                let kv = base + (m - j) * d;
                ds[j] = dot(go, &saved.v[kv..kv + d]) * c;
                axpy(row_w[j] * c, go, &mut dvh[kv..kv + d]);
            }
            match cfg.activation {
                Activation::Sigmoid => {
                    for j in 0..count {
                        ds[j] = ds[j] * row_w[j] * (T::one() - row_w[j]);
                    }
                }
                Activation::Softmax => {
                    let s: T = (0..count).map(|j| row_w[j] * ds[j]).sum();
                    for j in 0..count {
                        ds[j] = row_w[j] * (ds[j] - s);
                    }
                }
            }
            let qo = base + m * d;
            for j in 0..count {
                let kv = base + (m - j) * d;
                let gs = ds[j] * score_scale;
                axpy(gs, &saved.kr[kv..kv + d], &mut dqr[qo..qo + d]);
                axpy(gs, &saved.qr[qo..qo + d], &mut dkr[kv..kv + d]);
            }
        }
    }
    if let Some(rope) = &cfg.rope {
        let table = RopeTable::<T>::new(rope, 0, n);
        for bh in 0..g.batch * h {
            for p in 0..n {
                let o = (bh * n + p) * d;
                table.unrotate(&mut dqr[o..o + d], p);
                table.unrotate(&mut dkr[o..o + d], p);
            }
        }
    }
    if let Some(dq) = dq {
        add_from_head_major(&dqr, g, dq);
    }
    if let Some(dk) = dk {
        add_from_head_major(&dkr, g, dk);
    }
    if let Some(dv) = dv {
        add_from_head_major(&dvh, g, dv);
    }
}

/// Result of a multi-head attention call with its weight tensor exposed.
#[derive(Clone, Debug)]
pub struct AttentionOutput<T> {
    /// `[heads × N × d_k]`
    pub output: Tensor<T>,
    /// `[heads × N × span]`, slot `m−n` of row `m`; unused slots are zero.
    pub weights: Tensor<T>,
}

fn head_major_dims<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    ensure!(
        q.shape() == k.shape() && q.shape() == v.shape(),
        Dimension,
        "q/k/v shapes differ: {:?} {:?} {:?}",
        q.shape(),
        k.shape(),
        v.shape()
    );
    match *q.shape() {
        [n, d] => Ok((1, n, d)),
        [h, n, d] => Ok((h, n, d)),
        _ => Err(Error::Dimension(format!(
            "attention expects [N×d_k] or [h×N×d_k], got {:?}",
            q.shape()
        ))),
    }
}

/// Multi-head windowed attention on head-major `[h × N × d_k]` inputs.
pub fn multi_head_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: &BandMask,
    cfg: &AttentionConfig<T>,
) -> Result<AttentionOutput<T>> {
    let (h, n, d) = head_major_dims(q, k, v)?;
    mask.check_len(n)?;
    ensure!(
        cfg.window == mask.window(),
        Config,
        "attention window {} disagrees with mask window {}",
        cfg.window,
        mask.window()
    );
    cfg.validate(h, d)?;
    let one = AttentionGeometry {
        batch: 1,
        seq_len: n,
        heads: 1,
        head_dim: d,
    };
    let span = mask.span();
    let mut out = vec![T::zero(); q.numel()];
    let mut weights = vec![T::zero(); h * n * span];
    let mut per_head = cfg.clone();
    for head in 0..h {
        let sl = head * n * d..(head + 1) * n * d;
        per_head.slopes = cfg.slopes.as_ref().map(|s| vec![s[head]]);
        let (o, saved) = attention_forward(
            &q.data()[sl.clone()],
            &k.data()[sl.clone()],
            &v.data()[sl.clone()],
            &one,
            &per_head,
        );
        out[sl].copy_from_slice(&o);
        weights[head * n * span..(head + 1) * n * span].copy_from_slice(&saved.w);
    }
    Ok(AttentionOutput {
        output: Tensor::new(q.shape(), out)?,
        weights: Tensor::new(&[h, n, span], weights)?,
    })
}

/// Single-head softmax attention over the band of `mask`.
pub fn softmax_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: &BandMask,
) -> Result<Tensor<T>> {
    single_head(q, k, v, mask, Activation::Softmax)
}

/// Single-head sigmoid attention: unnormalized `Σ σ(q·k/√d)·v` over the band.
pub fn sigmoid_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: &BandMask,
) -> Result<Tensor<T>> {
    single_head(q, k, v, mask, Activation::Sigmoid)
}

fn single_head<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: &BandMask,
    activation: Activation,
) -> Result<Tensor<T>> {
    ensure!(
        q.shape().len() == 2,
        Dimension,
        "single-head attention expects [N×d_k], got {:?}",
        q.shape()
    );
    let cfg = AttentionConfig::plain(activation, mask.window());
    Ok(multi_head_attention(q, k, v, mask, &cfg)?.output)
}

/// Sigmoid attention with per-head linear distance bias and rotary
/// embeddings at absolute positions, on head-major `[h × N × d_k]` inputs.
/// Passing `rope = None` disables rotation.
pub fn swat_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: &BandMask,
    slopes: &SlopeSchedule,
    rope: Option<&RopeParams>,
) -> Result<Tensor<T>> {
    ensure!(
        q.shape().len() == 3,
        Dimension,
        "swat_attention expects [h×N×d_k], got {:?}",
        q.shape()
    );
    ensure!(
        slopes.len() == q.shape()[0],
        Config,
        "slope schedule has {} heads, tensors have {}",
        slopes.len(),
        q.shape()[0]
    );
    let cfg = AttentionConfig {
        activation: Activation::Sigmoid,
        window: mask.window(),
        slopes: Some(slopes.slopes.iter().map(|&s| T::of(s)).collect()),
        rope: rope.copied(),
        weight_scale: None,
    };
    Ok(multi_head_attention(q, k, v, mask, &cfg)?.output)
}
