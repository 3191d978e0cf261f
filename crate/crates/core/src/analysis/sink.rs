use serde::{Deserialize, Serialize};

use crate::attention::{Activation, BandMask};
use crate::error::{ensure, Result};
use crate::model::Model;
use crate::tensor::{Tape, Tensor};
use crate::Scalar;

/// Sink statistics of one layer, averaged over heads and sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSink {
    pub layer: usize,
    /// Row-normalized weight that the query row `query_row` puts on token 0.
    /// Equal to the raw weight for softmax.
    pub first_token_share: f64,
    pub share_std_error: f64,
    /// Unnormalized weight on token 0 (differs from the share for sigmoid).
    pub first_token_raw_mass: f64,
    /// `first_token_share · (query_row + 1)`; 1 means no preference.
    pub share_over_uniform: f64,
    /// Variance over features of the layer input at token 0.
    pub token0_variance: f64,
    /// Mean of the same variance over tokens `1..N`.
    pub other_variance: f64,
    /// Mean entropy (nats) of the row-normalized attention rows.
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkReport {
    pub activation: Activation,
    /// True when shares are renormalized row mass (sigmoid models).
    pub renormalized: bool,
    pub seq_len: usize,
    pub window: usize,
    pub sequences: usize,
    /// Last query row that still sees token 0, `min(N, ω) − 1`.
    pub query_row: usize,
    /// Share under uniform attention, `1 / (query_row + 1)`.
    pub uniform_share: f64,
    pub layers: Vec<LayerSink>,
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Attention-sink statistics of `model` over equal-length `sequences`, at
/// the model's training window.
pub fn sink_report<T: Scalar>(model: &Model<T>, sequences: &[&[usize]]) -> Result<SinkReport> {
    ensure!(!sequences.is_empty(), Data, "no sequences given");
    let n = sequences[0].len();
    ensure!(
        n >= 8,
        Data,
        "sink statistics need at least 8 tokens, got {n}"
    );
    ensure!(
        sequences.iter().all(|s| s.len() == n),
        Data,
        "sequences must share one length"
    );
    let cfg = model.config();
    let (window, h, d) = (cfg.window, cfg.n_heads, cfg.d_model);
    let b = sequences.len();
    let tokens: Vec<usize> = sequences.concat();
    let mask = BandMask::new(n, window)?;
    let mut tape = Tape::probe();
    let vars = model.register(&mut tape, false);
    let pass = model.forward_tape(&mut tape, &vars, &tokens, b, &mask)?;
    let row = n.min(window) - 1;

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let (w, span) = tape
            .attention_weights(pass.attention[l])
            .expect("probe tapes keep attention weights");
        let mut shares = Vec::with_capacity(b * h);
        let mut raw = 0.0;
        let mut entropy = 0.0;
        for bh in 0..b * h {
            for m in 0..n {
                let count = mask.span().min(m + 1);
                let r = &w[(bh * n + m) * span..(bh * n + m) * span + count];
                let total: f64 = r.iter().map(|x| x.as_f64()).sum();
                if total > 0.0 {
                    entropy -= r
                        .iter()
                        .map(|x| x.as_f64() / total)
                        .filter(|&p| p > 0.0)
                        .map(|p| p * p.ln())
                        .sum::<f64>();
                }
                if m == row {
                    let w0 = r[row].as_f64();
                    raw += w0;
                    shares.push(if total > 0.0 { w0 / total } else { 0.0 });
                }
            }
        }
        let k = shares.len() as f64;
        let share = shares.iter().sum::<f64>() / k;
        let var = shares
            .iter()
            .map(|s| (s - share) * (s - share))
            .sum::<f64>()
            / (k - 1.0).max(1.0);

        let x = tape.value(pass.block_inputs[l]).data();
        let (mut v0, mut vo) = (0.0, 0.0);
        for s in 0..b {
            for p in 0..n {
                let o = (s * n + p) * d;
                let row: Vec<f64> = x[o..o + d].iter().map(|v| v.as_f64()).collect();
                if p == 0 {
                    v0 += variance(&row);
                } else {
                    vo += variance(&row);
                }
            }
        }
        layers.push(LayerSink {
            layer: l,
            first_token_share: share,
            share_std_error: (var / k).sqrt(),
            first_token_raw_mass: raw / k,
            share_over_uniform: share * (row + 1) as f64,
            token0_variance: v0 / b as f64,
            other_variance: vo / (b * (n - 1)) as f64,
            entropy: entropy / (b * h * n) as f64,
        });
    }
    Ok(SinkReport {
        activation: cfg.activation,
        renormalized: cfg.activation == Activation::Sigmoid,
        seq_len: n,
        window,
        sequences: b,
        query_row: row,
        uniform_share: 1.0 / (row + 1) as f64,
        layers,
    })
}

/// Dense `[N × N]` attention maps, `[layer][head]`, zero outside the band.
pub fn attention_heatmaps<T: Scalar>(
    model: &Model<T>,
    tokens: &[usize],
) -> Result<Vec<Vec<Tensor<T>>>> {
    let cfg = model.config();
    let n = tokens.len();
    let mask = BandMask::new(n, cfg.window)?;
    let mut tape = Tape::probe();
    let vars = model.register(&mut tape, false);
    let pass = model.forward_tape(&mut tape, &vars, tokens, 1, &mask)?;
    let mut out = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let (w, span) = tape
            .attention_weights(pass.attention[l])
            .expect("probe tape");
        let heads = (0..cfg.n_heads)
            .map(|hh| {
                Tensor::from_fn(&[n, n], |i| {
                    let (m, c) = (i / n, i % n);
                    if mask.visible(m, c) {
                        w[(hh * n + m) * span + (m - c)]
                    } else {
                        T::zero()
                    }
                })
            })
            .collect();
        out.push(heads);
    }
    Ok(out)
}

/// Row-major CSV of a matrix.
pub fn heatmap_csv<T: Scalar>(t: &Tensor<T>) -> String {
    let c = t.cols();
    let mut s = String::new();
    for row in t.data().chunks(c) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
