use serde::{Deserialize, Serialize};

use crate::attention::{Activation, BandMask};
use crate::error::{ensure, Result};
use crate::model::Model;
use crate::scalar::dot;
use crate::tensor::{ops, Tape, Tensor};
use crate::Scalar;

/// Weight thresholds for effective support; 0.01 is the headline value.
pub const DENSITY_THRESHOLDS: [f64; 3] = [0.001, 0.01, 0.05];
const HEADLINE: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDensity {
    pub max_weight: f64,
    /// `|{n : w_n > t}|` for each threshold `t` in [`DENSITY_THRESHOLDS`].
    pub support: Vec<usize>,
}

impl RowDensity {
    fn of(w: &[f64]) -> Self {
        RowDensity {
            max_weight: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            support: DENSITY_THRESHOLDS
                .iter()
                .map(|&t| w.iter().filter(|&&x| x > t).count())
                .collect(),
        }
    }
}

/// Softmax against sigmoid weights on identical score rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub thresholds: Vec<f64>,
    pub softmax: Vec<RowDensity>,
    pub sigmoid: Vec<RowDensity>,
    /// Mean support per threshold.
    pub mean_support_softmax: Vec<f64>,
    pub mean_support_sigmoid: Vec<f64>,
    /// Fraction of rows where the sigmoid support exceeds the softmax support
    /// at threshold 0.01.
    pub sigmoid_wider_fraction: f64,
}

fn report(rows: &[Vec<f64>]) -> DensityReport {
    let mut softmax = Vec::with_capacity(rows.len());
    let mut sigmoid = Vec::with_capacity(rows.len());
    for r in rows {
        let mut s = r.clone();
        ops::softmax_strided(&mut s, 1, r.len(), 1);
        softmax.push(RowDensity::of(&s));
        let g: Vec<f64> = r.iter().map(|&x| ops::sigmoid(x)).collect();
        sigmoid.push(RowDensity::of(&g));
    }
    let mean = |xs: &[RowDensity], t: usize| {
        xs.iter().map(|r| r.support[t] as f64).sum::<f64>() / xs.len() as f64
    };
    let wider = softmax
        .iter()
        .zip(&sigmoid)
        .filter(|(a, b)| b.support[HEADLINE] > a.support[HEADLINE])
        .count();
    DensityReport {
        thresholds: DENSITY_THRESHOLDS.to_vec(),
        mean_support_softmax: (0..DENSITY_THRESHOLDS.len())
            .map(|t| mean(&softmax, t))
            .collect(),
        mean_support_sigmoid: (0..DENSITY_THRESHOLDS.len())
            .map(|t| mean(&sigmoid, t))
            .collect(),
        sigmoid_wider_fraction: wider as f64 / rows.len() as f64,
        softmax,
        sigmoid,
    }
}

/// Density of a single score row.
pub fn density_check_scores(scores: &[f64]) -> Result<DensityReport> {
    ensure!(!scores.is_empty(), Data, "no scores given");
    ensure!(
        scores.iter().all(|s| s.is_finite()),
        Data,
        "scores must be finite"
    );
    Ok(report(&[scores.to_vec()]))
}

/// Density of the banded rows of `q·kᵀ/√d_k` for `[N × d_k]` inputs.
pub fn density_check_qk(
    q: &Tensor<f64>,
    k: &Tensor<f64>,
    mask: &BandMask,
) -> Result<DensityReport> {
    ensure!(
        q.shape() == k.shape() && q.shape().len() == 2,
        Dimension,
        "q and k must be matching matrices, got {:?} and {:?}",
        q.shape(),
        k.shape()
    );
    let (n, d) = (q.rows(), q.cols());
    ensure!(n >= 1 && d >= 1, Dimension, "empty q/k");
    mask.check_len(n)?;
    let scale = 1.0 / (d as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|m| {
            (mask.lo(m)..=m)
                .map(|c| dot(&q.data()[m * d..(m + 1) * d], &k.data()[c * d..(c + 1) * d]) * scale)
                .collect()
        })
        .collect();
    Ok(report(&rows))
}

/// Density of every attention row (all layers and heads) of a sigmoid
/// model on `tokens`, using the model's own pre-activation scores.
pub fn density_check_model<T: Scalar>(model: &Model<T>, tokens: &[usize]) -> Result<DensityReport> {
    let cfg = model.config();
    ensure!(
        cfg.activation == Activation::Sigmoid,
        Config,
        "density check expects a sigmoid attention model"
    );
    let n = tokens.len();
    ensure!(n >= 1, Data, "no tokens given");
    let mask = BandMask::new(n, cfg.window)?;
    let mut tape = Tape::inference();
    let vars = model.register(&mut tape, false);
    let pass = model.forward_tape(&mut tape, &vars, tokens, 1, &mask)?;
    let (h, dk) = (cfg.n_heads, cfg.head_dim());
    let slopes = cfg.slope_schedule()?;
    let rope = cfg.rope_params();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut rows = Vec::new();
    for &(q, k, _) in &pass.projections {
        let to64 = |v| -> Vec<f64> { tape.value(v).data().iter().map(|x| x.as_f64()).collect() };
        let (mut qv, mut kv) = (to64(q), to64(k));
        if let Some(r) = &rope {
            for p in 0..n {
                let (cos, sin) = r.angles::<f64>(p);
                for hh in 0..h {
                    let o = p * h * dk + hh * dk;
                    crate::attention::rotate_pairs(&mut qv[o..o + dk], &cos, &sin, false);
                    crate::attention::rotate_pairs(&mut kv[o..o + dk], &cos, &sin, false);
                }
            }
        }
        for hh in 0..h {
            let slope = slopes.as_ref().map_or(0.0, |s| s.slopes[hh]);
            for m in 0..n {
                let qo = m * h * dk + hh * dk;
                rows.push(
                    (mask.lo(m)..=m)
                        .map(|c| {
                            let ko = c * h * dk + hh * dk;
                            dot(&qv[qo..qo + dk], &kv[ko..ko + dk]) * scale + slope * (m - c) as f64
                        })
                        .collect(),
                );
            }
        }
    }
    Ok(report(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_scores_give_equal_sigmoid_weights() {
        let r = density_check_scores(&[0.3; 7]).unwrap();
        assert_eq!(r.sigmoid[0].support, vec![7, 7, 7]);
        assert_eq!(r.softmax[0].support, vec![7, 7, 7]);
    }

    #[test]
    fn softmax_model_is_rejected() {
        let cfg = crate::model::ModelConfig {
            activation: Activation::Softmax,
            ..crate::model::ModelConfig::toy()
        };
        let m: Model<f64> = crate::model::build_model(&cfg).unwrap();
        assert!(matches!(
            density_check_model(&m, &[1, 2, 3]),
            Err(crate::Error::Config(_))
        ));
    }
}
