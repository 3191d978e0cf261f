use crate::attention::{attend_row, rotate_pairs};
use crate::error::{ensure, Result};
use crate::model::{layer_param_index, Model};
use crate::scalar::{gemm, Trans};
use crate::tensor::{ops, Tensor};
use crate::Scalar;

/// Fixed-capacity rolling store of post-rotation keys and values.
///
/// Position `p` lives in slot `p mod ω` of every layer; once `ω` tokens have
/// been appended each new token evicts the oldest. All heads of a layer share
/// a slot row `[heads·d_k]`.
#[derive(Clone, Debug)]
pub struct KVCacheRing<T> {
    capacity: usize,
    layers: usize,
    heads: usize,
    head_dim: usize,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    positions: Vec<usize>,
    next_pos: usize,
}

impl<T: Scalar> KVCacheRing<T> {
    pub fn new(capacity: usize, layers: usize, heads: usize, head_dim: usize) -> Result<Self> {
        ensure!(capacity >= 1, Config, "cache capacity must be at least 1");
        let slot = heads * head_dim;
        Ok(KVCacheRing {
            capacity,
            layers,
            heads,
            head_dim,
            keys: vec![vec![T::zero(); capacity * slot]; layers],
            values: vec![vec![T::zero(); capacity * slot]; layers],
            positions: vec![0; capacity],
            next_pos: 0,
        })
    }

    /// A cache shaped for `model` holding `window` entries.
    pub fn for_model(model: &Model<T>, window: usize) -> Result<Self> {
        let c = model.config();
        Self::new(window, c.n_layers, c.n_heads, c.head_dim())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Entries currently held, `min(appended, ω)`.
    pub fn len(&self) -> usize {
        self.next_pos.min(self.capacity)
    }

    pub fn is_empty(&self) -> bool {
        self.next_pos == 0
    }

    /// Absolute position the next token will take.
    pub fn next_position(&self) -> usize {
        self.next_pos
    }

    /// Slot the next token will be written to.
    pub fn cursor(&self) -> usize {
        self.next_pos % self.capacity
    }

    /// Held absolute positions, oldest first.
    pub fn positions(&self) -> Vec<usize> {
        (self.next_pos - self.len()..self.next_pos)
            .map(|p| self.positions[p % self.capacity])
            .collect()
    }

    pub fn clear(&mut self) {
        self.next_pos = 0;
    }

    fn slot_of_distance(&self, j: usize) -> usize {
        // distance j behind the most recent entry
        (self.next_pos - 1 - j) % self.capacity
    }

    fn check_geometry(&self, model: &Model<T>) -> Result<()> {
        let c = model.config();
        ensure!(
            self.layers == c.n_layers && self.heads == c.n_heads && self.head_dim == c.head_dim(),
            Config,
            "cache geometry {}×{}×{} does not match model {}×{}×{}",
            self.layers,
            self.heads,
            self.head_dim,
            c.n_layers,
            c.n_heads,
            c.head_dim()
        );
        Ok(())
    }
}

fn vecmat<T: Scalar>(x: &[T], w: &Tensor<T>) -> Vec<T> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let mut out = vec![T::zero(); n];
    gemm(
        Trans::No,
        Trans::No,
        1,
        k,
        n,
        x,
        w.data(),
        T::zero(),
        &mut out,
    );
    out
}

/// Appends `token` at the cache's next position and returns its next-token
/// logits, attending to at most `capacity` most recent positions.
pub fn incremental_forward<T: Scalar>(
    model: &Model<T>,
    cache: &mut KVCacheRing<T>,
    token: usize,
) -> Result<Vec<T>> {
    cache.check_geometry(model)?;
    let cfg = model.config();
    ops::check_ids(&[token], cfg.vocab_size)?;
    let (d, h, dk) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let eps = T::of(cfg.norm_eps);
    let attn = cfg.attention_config::<T>(cache.capacity)?;
    let score_scale = T::one() / T::from_usize(dk).unwrap().sqrt();
    let weight_scale = attn.weight_scale();
    let params = model.params();
    let p = |l: usize, name: &str| &params[layer_param_index(l, name)];

    let pos = cache.next_pos;
    let slot = cache.cursor();
    cache.positions[slot] = pos;
    cache.next_pos += 1;
    let count = cache.len();
    let rope = attn.rope.map(|r| r.angles::<T>(pos));

    let mut x = ops::gather_rows(params[0].data(), d, &[token]);
    let mut weights = vec![T::zero(); count];
    for l in 0..cfg.n_layers {
        let (hn, _) = ops::rms_norm(&x, p(l, "attn_norm").data(), d, eps);
        let mut q = vecmat(&hn, p(l, "wq"));
        let mut k = vecmat(&hn, p(l, "wk"));
        let v = vecmat(&hn, p(l, "wv"));
        if let Some((cos, sin)) = &rope {
            for hh in 0..h {
                rotate_pairs(&mut q[hh * dk..(hh + 1) * dk], cos, sin, false);
                rotate_pairs(&mut k[hh * dk..(hh + 1) * dk], cos, sin, false);
            }
        }
        let row = h * dk;
        cache.keys[l][slot * row..(slot + 1) * row].copy_from_slice(&k);
        cache.values[l][slot * row..(slot + 1) * row].copy_from_slice(&v);
        let (keys, values) = (&cache.keys[l], &cache.values[l]);
        let mut a = vec![T::zero(); d];
        for hh in 0..h {
            let at = |j: usize| cache.slot_of_distance(j) * row + hh * dk;
            attend_row(
                &q[hh * dk..(hh + 1) * dk],
                |j| &keys[at(j)..at(j) + dk],
                |j| &values[at(j)..at(j) + dk],
                count,
                attn.slope(hh),
                attn.activation,
                score_scale,
                weight_scale,
                &mut weights,
                &mut a[hh * dk..(hh + 1) * dk],
            );
        }
        let o = vecmat(&a, p(l, "wo"));
        for (xi, oi) in x.iter_mut().zip(&o) {
            *xi += *oi;
        }
        let (hn, _) = ops::rms_norm(&x, p(l, "mlp_norm").data(), d, eps);
        let gate = vecmat(&hn, p(l, "w_gate"));
        let up = vecmat(&hn, p(l, "w_up"));
        let m: Vec<T> = gate
            .iter()
            .zip(&up)
            .map(|(&g, &u)| g * ops::sigmoid(g) * u)
            .collect();
        let o = vecmat(&m, p(l, "w_down"));
        for (xi, oi) in x.iter_mut().zip(&o) {
            *xi += *oi;
        }
    }
    let n = params.len() - 2;
    let (hn, _) = ops::rms_norm(&x, params[n].data(), d, eps);
    Ok(vecmat(&hn, &params[n + 1]))
}

/// Runs `tokens` through a fresh cache of capacity `window`, returning the
/// `[N × vocab]` logits row by row.
pub fn incremental_logits<T: Scalar>(
    model: &Model<T>,
    tokens: &[usize],
    window: usize,
) -> Result<Tensor<T>> {
    let mut cache = KVCacheRing::for_model(model, window)?;
    let vocab = model.config().vocab_size;
    let mut out = Vec::with_capacity(tokens.len() * vocab);
    for &t in tokens {
        out.extend(incremental_forward(model, &mut cache, t)?);
    }
    Tensor::new(&[tokens.len(), vocab], out)
}
