use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::{
    attention_forward, Activation, AttentionConfig, AttentionGeometry, BandMask, RopeParams,
};
use crate::error::{ensure, Result};
use crate::eval::KVCacheRing;
use crate::model::Model;
use crate::rng::{self, Stream};
use crate::Scalar;

/// Score-unit operation count `N·ω·(1+δ)` of windowed inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub n: usize,
    pub window: usize,
    pub delta: f64,
    pub predicted_cost: f64,
    /// Causal full-attention count `N(N+1)/2` for comparison.
    pub full_attention_cost: f64,
    pub measured_full_us_per_token: Option<f64>,
    pub measured_windowed_us_per_token: Option<f64>,
}

pub fn cost_model(n: usize, window: usize, delta: f64) -> Result<CostEstimate> {
    ensure!(
        window >= 1 && n >= window,
        Config,
        "need N ≥ ω ≥ 1, got N={n}, ω={window}"
    );
    ensure!(
        delta >= 0.0 && delta.is_finite(),
        Config,
        "δ must be a finite non-negative number"
    );
    Ok(CostEstimate {
        n,
        window,
        delta,
        predicted_cost: n as f64 * window as f64 * (1.0 + delta),
        full_attention_cost: n as f64 * (n as f64 + 1.0) / 2.0,
        measured_full_us_per_token: None,
        measured_windowed_us_per_token: None,
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Timing of attention with and without the distance bias on identical
/// inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaMeasurement {
    pub seq_len: usize,
    pub window: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub plain_ms: Vec<f64>,
    pub alibi_ms: Vec<f64>,
    pub median_plain_ms: f64,
    pub median_alibi_ms: f64,
    /// `(median_alibi − median_plain) / median_plain`.
    pub delta: f64,
}

/// Measures δ on a rotary sigmoid attention layer of the given shape, with
/// and without per-head slopes; runs alternate and the medians of `runs`
/// repetitions are compared.
pub fn measure_delta(
    seq_len: usize,
    window: usize,
    heads: usize,
    head_dim: usize,
    runs: usize,
    seed: u64,
) -> Result<DeltaMeasurement> {
    ensure!(
        runs >= 5,
        Config,
        "δ needs at least 5 timing runs, got {runs}"
    );
    let g = AttentionGeometry {
        batch: 1,
        seq_len,
        heads,
        head_dim,
    };
    let mut r = rng::stream(seed, Stream::Sample(0xde17a));
    let q = rng::normal_vec::<f32>(&mut r, g.packed_len(), 1.0);
    let k = rng::normal_vec::<f32>(&mut r, g.packed_len(), 1.0);
    let v = rng::normal_vec::<f32>(&mut r, g.packed_len(), 1.0);
    let mut plain = AttentionConfig::<f32>::plain(Activation::Sigmoid, window);
    plain.rope = Some(RopeParams::new(head_dim, 10_000.0)?);
    plain.validate(heads, head_dim)?;
    let mut alibi = plain.clone();
    alibi.slopes = Some(
        (0..heads)
            .map(|i| if i % 2 == 0 { -0.5 } else { 0.5 })
            .collect(),
    );
    let time = |cfg: &AttentionConfig<f32>| {
        let t = Instant::now();
        let (out, _) = attention_forward(&q, &k, &v, &g, cfg);
        std::hint::black_box(out);
        t.elapsed().as_secs_f64() * 1e3
    };
    time(&plain);
    time(&alibi);
    let (mut p, mut a) = (Vec::with_capacity(runs), Vec::with_capacity(runs));
    for _ in 0..runs {
        p.push(time(&plain));
        a.push(time(&alibi));
    }
    let (mp, ma) = (median(&p), median(&a));
    Ok(DeltaMeasurement {
        seq_len,
        window,
        heads,
        head_dim,
        plain_ms: p,
        alibi_ms: a,
        median_plain_ms: mp,
        median_alibi_ms: ma,
        delta: (ma - mp) / mp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingPoint {
    pub n: usize,
    /// Median wall time over repetitions.
    pub seconds: f64,
    pub us_per_token: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = intercept + slope·x`.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit> {
    ensure!(points.len() >= 2, Data, "a line needs at least two points");
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    ensure!(sxx > 0.0, Data, "x values are all equal");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - intercept - slope * p.0;
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

/// Streams `n` tokens through a ring cache of capacity `window` for every
/// `n` in `lengths`, returning the median wall time of `reps` runs.
pub fn timing_sweep<T: Scalar>(
    model: &Model<T>,
    lengths: &[usize],
    window: usize,
    reps: usize,
) -> Result<Vec<TimingPoint>> {
    ensure!(reps >= 1, Config, "reps must be positive");
    let vocab = model.config().vocab_size;
    let mut out = Vec::with_capacity(lengths.len());
    for &n in lengths {
        let tokens: Vec<usize> = (0..n).map(|i| (i * 131 + 7) % vocab).collect();
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut cache = KVCacheRing::for_model(model, window)?;
            let t = Instant::now();
            for &tok in &tokens {
                std::hint::black_box(crate::eval::incremental_forward(model, &mut cache, tok)?);
            }
            times.push(t.elapsed().as_secs_f64());
        }
        let s = median(&times);
        out.push(TimingPoint {
            n,
            seconds: s,
            us_per_token: s * 1e6 / n as f64,
        });
    }
    Ok(out)
}

/// Per-token time (µs) of one banded forward over `n` tokens with `window`.
pub fn forward_us_per_token<T: Scalar>(
    model: &Model<T>,
    n: usize,
    window: usize,
    reps: usize,
) -> Result<f64> {
    let vocab = model.config().vocab_size;
    let tokens: Vec<usize> = (0..n).map(|i| (i * 131 + 7) % vocab).collect();
    let mask = BandMask::new(n, window)?;
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        std::hint::black_box(model.forward(&tokens, &mask)?);
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&times) * 1e6 / n as f64)
}

impl CostEstimate {
    /// Fills the measured per-token times of full causal attention and of
    /// windowed attention on `model`.
    pub fn measure<T: Scalar>(mut self, model: &Model<T>, reps: usize) -> Result<Self> {
        self.measured_full_us_per_token = Some(forward_us_per_token(model, self.n, self.n, reps)?);
        self.measured_windowed_us_per_token =
            Some(forward_us_per_token(model, self.n, self.window, reps)?);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_examples() {
        assert_eq!(cost_model(100, 10, 0.0).unwrap().predicted_cost, 1000.0);
        let c = cost_model(8192, 512, 0.05).unwrap();
        assert!((c.predicted_cost - 4_404_019.2).abs() < 1e-6);
        assert!(cost_model(4, 8, 0.0).is_err());
    }

    #[test]
    fn exact_line_has_unit_r2() {
        let f = fit_linear(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }
}
