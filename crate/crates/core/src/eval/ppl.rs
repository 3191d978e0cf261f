use serde::{Deserialize, Serialize};

use super::cache::incremental_logits;
use crate::attention::BandMask;
use crate::error::{ensure, Result};
use crate::model::Model;
use crate::tensor::ops;
use crate::Scalar;

/// How a sequence is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// One forward with a banded mask; every token sees its full window.
    Banded,
    /// Token by token through a ring KV cache (same result as `Banded`).
    Incremental,
    /// Independent chunks of `window` predictions, positions restarting at
    /// zero. Faster for long inputs but biased upward: early tokens of each
    /// chunk see less context.
    Chunked,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perplexity {
    pub ppl: f64,
    pub log10_ppl: f64,
    pub mean_nll: f64,
    pub tokens: usize,
}

impl Perplexity {
    fn from_sum(nll: f64, tokens: usize) -> Self {
        let mean_nll = nll / tokens as f64;
        Perplexity {
            ppl: mean_nll.exp(),
            log10_ppl: mean_nll / std::f64::consts::LN_10,
            mean_nll,
            tokens,
        }
    }
}

/// Summed next-token NLL over `tokens[1..]` given stride-1 windowed context.
fn nll_sum<T: Scalar>(
    model: &Model<T>,
    tokens: &[usize],
    window: usize,
    mode: EvalMode,
) -> Result<(f64, usize)> {
    ensure!(
        tokens.len() >= 2,
        Data,
        "perplexity needs at least 2 tokens, got {}",
        tokens.len()
    );
    ensure!(window >= 1, Config, "evaluation window must be at least 1");
    let inputs = &tokens[..tokens.len() - 1];
    let targets = &tokens[1..];
    let vocab = model.config().vocab_size;
    ops::check_ids(tokens, vocab)?;
    let score = |logits: &[T], targets: &[usize]| -> f64 {
        targets
            .iter()
            .enumerate()
            .map(|(i, &t)| ops::nll_row(&logits[i * vocab..(i + 1) * vocab], t).as_f64())
            .sum()
    };
    let total = match mode {
        EvalMode::Banded => {
            let logits = model.forward(inputs, &BandMask::new(inputs.len(), window)?)?;
            score(logits.data(), targets)
        }
        EvalMode::Incremental => {
            let logits = incremental_logits(model, inputs, window)?;
            score(logits.data(), targets)
        }
        EvalMode::Chunked => {
            let mut s = 0.0;
            for (ci, chunk) in inputs.chunks(window).enumerate() {
                let logits = model.forward(chunk, &BandMask::new(chunk.len(), window)?)?;
                s += score(
                    logits.data(),
                    &targets[ci * window..ci * window + chunk.len()],
                );
            }
            s
        }
    };
    ensure!(
        total.is_finite(),
        NonFinite,
        "negative log-likelihood is {total}"
    );
    Ok((total, targets.len()))
}

/// Sliding-window perplexity of one sequence (banded path).
pub fn perplexity<T: Scalar>(
    model: &Model<T>,
    tokens: &[usize],
    window: usize,
) -> Result<Perplexity> {
    perplexity_with(model, tokens, window, EvalMode::Banded)
}

pub fn perplexity_with<T: Scalar>(
    model: &Model<T>,
    tokens: &[usize],
    window: usize,
    mode: EvalMode,
) -> Result<Perplexity> {
    let (s, n) = nll_sum(model, tokens, window, mode)?;
    Ok(Perplexity::from_sum(s, n))
}

/// Perplexity pooled over independent example sequences (token-weighted).
pub fn perplexity_examples<T: Scalar>(
    model: &Model<T>,
    examples: &[&[usize]],
    window: usize,
    mode: EvalMode,
) -> Result<Perplexity> {
    ensure!(!examples.is_empty(), Data, "no evaluation examples");
    let mut s = 0.0;
    let mut n = 0;
    for e in examples {
        let (a, b) = nll_sum(model, e, window, mode)?;
        s += a;
        n += b;
    }
    Ok(Perplexity::from_sum(s, n))
}
