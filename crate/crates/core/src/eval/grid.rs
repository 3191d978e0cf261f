use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ppl::{perplexity_examples, EvalMode};
use crate::error::{ensure, Result};
use crate::model::{model_to_bytes, Model, ModelConfig};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    /// SHA-256 of the model's checkpoint bytes.
    pub model_hash: String,
    /// SHA-256 of the evaluated token stream (one byte per token id).
    pub corpus_hash: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub mode: EvalMode,
    /// Example sequences per cell; example `i` starts at `i·max(length)`.
    pub examples: usize,
}

/// Perplexity over (evaluation length × window) cells; rows are lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub windows: Vec<usize>,
    pub lengths: Vec<usize>,
    /// `None` marks a cell whose length exceeds the available tokens.
    pub ppl: Vec<Vec<Option<f64>>>,
    pub log10_ppl: Vec<Vec<Option<f64>>>,
    /// Scored tokens per cell.
    pub tokens: Vec<Vec<usize>>,
    pub meta: GridMeta,
}

fn sha_tokens(tokens: &[usize]) -> String {
    let mut h = Sha256::new();
    for &t in tokens {
        h.update((t as u32).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Evaluates every (length, window) cell on the same example starts, so the
/// rows of one window column share token prefixes.
pub fn eval_grid<T: Scalar>(
    model: &Model<T>,
    tokens: &[usize],
    windows: &[usize],
    lengths: &[usize],
    max_examples: usize,
    mode: EvalMode,
) -> Result<EvalGrid> {
    ensure!(
        !windows.is_empty() && !lengths.is_empty(),
        Config,
        "grid axes must be non-empty"
    );
    ensure!(
        windows.iter().all(|&w| w >= 1),
        Config,
        "windows must be positive"
    );
    ensure!(
        lengths.iter().all(|&l| l >= 2),
        Config,
        "evaluation lengths must be at least 2"
    );
    ensure!(max_examples >= 1, Config, "max_examples must be positive");
    let stride = lengths.iter().copied().filter(|&l| l <= tokens.len()).max();
    let examples = stride.map_or(0, |s| (tokens.len() / s).min(max_examples));
    let cells: Vec<(usize, usize)> = (0..lengths.len())
        .flat_map(|r| (0..windows.len()).map(move |c| (r, c)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(r, c)| {
            let len = lengths[r];
            let Some(stride) = stride.filter(|_| len <= tokens.len()) else {
                return Ok(None);
            };
            let ex: Vec<&[usize]> = (0..examples)
                .map(|i| &tokens[i * stride..i * stride + len])
                .collect();
            perplexity_examples(model, &ex, windows[c], mode).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ppl = vec![vec![None; windows.len()]; lengths.len()];
    let mut log10_ppl = ppl.clone();
    let mut counts = vec![vec![0; windows.len()]; lengths.len()];
    for (&(r, c), p) in cells.iter().zip(results) {
        if let Some(p) = p {
            ppl[r][c] = Some(p.ppl);
            log10_ppl[r][c] = Some(p.log10_ppl);
            counts[r][c] = p.tokens;
        }
    }
    Ok(EvalGrid {
        windows: windows.to_vec(),
        lengths: lengths.to_vec(),
        ppl,
        log10_ppl,
        tokens: counts,
        meta: GridMeta {
            model_hash: hex::encode(Sha256::digest(model_to_bytes(model)?)),
            corpus_hash: sha_tokens(tokens),
            seed: model.config().seed,
            config: model.config().clone(),
            mode,
            examples,
        },
    })
}

impl EvalGrid {
    pub fn get(&self, length: usize, window: usize) -> Option<f64> {
        let r = self.lengths.iter().position(|&l| l == length)?;
        let c = self.windows.iter().position(|&w| w == window)?;
        self.ppl[r][c]
    }

    /// Row-per-length CSV of log10 perplexity; absent cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eval_length");
        for w in &self.windows {
            out.push_str(&format!(",window_{w}"));
        }
        out.push('\n');
        for (r, l) in self.lengths.iter().enumerate() {
            out.push_str(&l.to_string());
            for c in 0..self.windows.len() {
                out.push(',');
                if let Some(v) = self.log10_ppl[r][c] {
                    out.push_str(&format!("{v:.6}"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::write(dir.join("grid.csv"), self.to_csv())?;
        std::fs::write(dir.join("grid.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
