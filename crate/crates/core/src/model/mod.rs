//! Causal language model: token embedding, pre-norm transformer blocks
//! (windowed attention + SiLU-gated MLP, RMS normalization) and an untied
//! output head.

mod checkpoint;
mod config;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, model_from_bytes, model_to_bytes,
    model_to_bytes_with, save_checkpoint, CheckpointHeader, ManifestEntry, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{receptive_field, ModelConfig, PosMode};

use crate::attention::{AttentionGeometry, BandMask, SlopeSchedule};
use crate::error::{ensure, Result};
use crate::rng::{self, Stream};
use crate::tensor::{Tape, Tensor, Var};
use crate::Scalar;

/// Parameters of one transformer block, in storage order.
pub(crate) const LAYER_PARAMS: [&str; 9] = [
    "attn_norm",
    "wq",
    "wk",
    "wv",
    "wo",
    "mlp_norm",
    "w_gate",
    "w_up",
    "w_down",
];

/// Index of parameter `name` of `layer` in the flat parameter list.
pub(crate) fn layer_param_index(layer: usize, name: &str) -> usize {
    1 + layer * LAYER_PARAMS.len()
        + LAYER_PARAMS
            .iter()
            .position(|p| *p == name)
            .expect("known parameter")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    slopes: Option<SlopeSchedule>,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

/// Tape handles produced by one forward pass.
pub struct ForwardPass {
    pub logits: Var,
    /// Residual stream entering each block.
    pub block_inputs: Vec<Var>,
    /// Attention output node of each block.
    pub attention: Vec<Var>,
    /// Packed `(q, k, v)` projections of each block, before rotation.
    pub projections: Vec<(Var, Var, Var)>,
}

fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.mlp_hidden());
    let mut out = vec![("tok_embed".to_string(), vec![v, d])];
    for l in 0..cfg.n_layers {
        for name in LAYER_PARAMS {
            let shape = match name {
                "attn_norm" | "mlp_norm" => vec![d],
                "wq" | "wk" | "wv" | "wo" => vec![d, d],
                "w_gate" | "w_up" => vec![d, f],
                "w_down" => vec![f, d],
                _ => unreachable!(),
            };
            out.push((format!("layers.{l}.{name}"), shape));
        }
    }
    out.push(("final_norm".to_string(), vec![d]));
    out.push(("lm_head".to_string(), vec![d, v]));
    out
}

/// Builds a freshly initialized model.
///
/// Weights are drawn from a normal distribution with std 0.02 truncated at
/// two standard deviations; the two residual-branch projections (`wo`,
/// `w_down`) are further scaled by `1/√(2L)`. Norm gains start at one. Every
/// tensor draws from its own stream of the config seed.
pub fn build_model<T: Scalar>(cfg: &ModelConfig) -> Result<Model<T>> {
    cfg.validate()?;
    let residual_scale = 1.0 / ((2 * cfg.n_layers) as f64).sqrt();
    let mut names = Vec::new();
    let mut params = Vec::new();
    for (i, (name, shape)) in param_shapes(cfg).into_iter().enumerate() {
        let t = if shape.len() == 1 {
            Tensor::full(&shape, T::one())
        } else {
            let std = if name.ends_with(".wo") || name.ends_with(".w_down") {
                0.02 * residual_scale
            } else {
                0.02
            };
            let mut r = rng::stream(cfg.seed, Stream::Param(i as u64));
            Tensor::from_fn(&shape, |_| rng::truncated_normal(&mut r, std))
        };
        names.push(name);
        params.push(t);
    }
    Ok(Model {
        slopes: cfg.slope_schedule()?,
        config: cfg.clone(),
        names,
        params,
    })
}

impl<T: Scalar> Model<T> {
    pub(crate) fn from_parts(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = param_shapes(&config);
        ensure!(
            shapes.len() == params.len(),
            Config,
            "{} parameter tensors supplied, config needs {}",
            params.len(),
            shapes.len()
        );
        for ((name, shape), p) in shapes.iter().zip(&params) {
            ensure!(
                p.shape() == shape.as_slice(),
                Config,
                "parameter {name} has shape {:?}, config needs {:?}",
                p.shape(),
                shape
            );
        }
        Ok(Model {
            slopes: config.slope_schedule()?,
            names: shapes.into_iter().map(|(n, _)| n).collect(),
            config,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn slopes(&self) -> Option<&SlopeSchedule> {
        self.slopes.as_ref()
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            slopes: self.slopes.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Registers every parameter on `tape` (as gradient leaves when `grad`).
    pub fn register(&self, tape: &mut Tape<T>, grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if grad {
                    tape.param(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect()
    }

    /// Embeds `tokens` (row gather from the embedding table).
    pub fn embed(&self, tape: &mut Tape<T>, params: &[Var], tokens: &[usize]) -> Result<Var> {
        tape.set_scope("embed");
        tape.embedding(params[0], tokens)
    }

    /// Forward pass from token ids over `batch` sequences of
    /// `mask.seq_len()` tokens each.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        tokens: &[usize],
        batch: usize,
        mask: &BandMask,
    ) -> Result<ForwardPass> {
        ensure!(
            tokens.len() == batch * mask.seq_len(),
            Dimension,
            "{} tokens for {batch} sequences of {}",
            tokens.len(),
            mask.seq_len()
        );
        let x = self.embed(tape, params, tokens)?;
        self.forward_embedded(tape, params, x, batch, mask)
    }

    /// Forward pass from an already embedded `[batch·N × d]` input.
    pub fn forward_embedded(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        mut x: Var,
        batch: usize,
        mask: &BandMask,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        let eps = T::of(cfg.norm_eps);
        let attn_cfg = cfg.attention_config::<T>(mask.window())?;
        let geom = AttentionGeometry {
            batch,
            seq_len: mask.seq_len(),
            heads: cfg.n_heads,
            head_dim: cfg.head_dim(),
        };
        let p = |l: usize, name: &str| params[layer_param_index(l, name)];
        let mut block_inputs = Vec::with_capacity(cfg.n_layers);
        let mut attention = Vec::with_capacity(cfg.n_layers);
        let mut projections = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            block_inputs.push(x);
            tape.set_scope(format!("layer{l}.attention"));
            let h = tape.rms_norm(x, p(l, "attn_norm"), eps)?;
            let q = tape.matmul(h, p(l, "wq"))?;
            let k = tape.matmul(h, p(l, "wk"))?;
            let v = tape.matmul(h, p(l, "wv"))?;
            projections.push((q, k, v));
            let a = tape.attention(q, k, v, geom, &attn_cfg)?;
            attention.push(a);
            let o = tape.matmul(a, p(l, "wo"))?;
            x = tape.add(x, o)?;
            tape.set_scope(format!("layer{l}.mlp"));
            let h = tape.rms_norm(x, p(l, "mlp_norm"), eps)?;
            let gate = tape.matmul(h, p(l, "w_gate"))?;
            let gate = tape.silu(gate);
            let up = tape.matmul(h, p(l, "w_up"))?;
            let m = tape.mul(gate, up)?;
            let m = tape.matmul(m, p(l, "w_down"))?;
            x = tape.add(x, m)?;
        }
        tape.set_scope("head");
        let n_final = params.len() - 2;
        let h = tape.rms_norm(x, params[n_final], eps)?;
        let logits = tape.matmul(h, params[n_final + 1])?;
        Ok(ForwardPass {
            logits,
            block_inputs,
            attention,
            projections,
        })
    }

    /// Next-token logits `[N × vocab]` for a single sequence.
    pub fn forward(&self, tokens: &[usize], mask: &BandMask) -> Result<Tensor<T>> {
        self.forward_batch(tokens, 1, mask)
    }

    /// Next-token logits `[batch·N × vocab]`.
    pub fn forward_batch(
        &self,
        tokens: &[usize],
        batch: usize,
        mask: &BandMask,
    ) -> Result<Tensor<T>> {
        let mut tape = Tape::inference();
        let params = self.register(&mut tape, false);
        let pass = self.forward_tape(&mut tape, &params, tokens, batch, mask)?;
        if let Some((_, scope, stat)) = tape.first_nonfinite() {
            return Err(crate::Error::NonFinite(format!("{scope}: {stat}")));
        }
        Ok(tape.value(pass.logits).clone())
    }

    /// Mean next-token cross-entropy of `inputs` against `targets`.
    pub fn loss(
        &self,
        inputs: &[usize],
        targets: &[usize],
        batch: usize,
        mask: &BandMask,
    ) -> Result<T> {
        let logits = self.forward_batch(inputs, batch, mask)?;
        Tensor::cross_entropy(&logits, targets)
    }
}
