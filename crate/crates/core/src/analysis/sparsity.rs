use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{self, Stream};
use crate::tensor::ops;

/// Softmax of a score vector with its exact ratio table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityDemo {
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    /// `α_i / α_1` from the normalized weights.
    pub ratios: Vec<f64>,
    /// `exp(E_i − E_1)` computed directly from the scores.
    pub exp_differences: Vec<f64>,
    pub max_identity_error: f64,
    /// Whether the two ratio columns agree within 1e-12 (relative).
    pub identity_holds: bool,
}

pub fn sparsity_demo(scores: &[f64]) -> Result<SparsityDemo> {
    ensure!(!scores.is_empty(), Data, "no scores given");
    ensure!(
        scores.iter().all(|s| s.is_finite()),
        Data,
        "scores must be finite"
    );
    let mut weights = scores.to_vec();
    ops::softmax_strided(&mut weights, 1, scores.len(), 1);
    let ratios: Vec<f64> = weights.iter().map(|w| w / weights[0]).collect();
    let exp_differences: Vec<f64> = scores.iter().map(|e| (e - scores[0]).exp()).collect();
    let max_identity_error = ratios
        .iter()
        .zip(&exp_differences)
        .map(|(r, e)| (r - e).abs() / e.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(SparsityDemo {
        scores: scores.to_vec(),
        weights,
        ratios,
        exp_differences,
        max_identity_error,
        identity_holds: max_identity_error <= 1e-12,
    })
}

/// Leading-order expected maximum of `l` i.i.d. `N(μ, σ²)` draws,
/// `μ + σ·√(2 ln l)`.
pub fn evt_predicted_max(l: usize, mu: f64, sigma: f64) -> f64 {
    mu + sigma * (2.0 * (l as f64).ln()).sqrt()
}

/// Weight ratio `exp(−Δ)` of a typical score to the maximum when the gap is
/// `Δ = σ·√(2 ln l)`.
pub fn evt_gap_ratio(l: usize, sigma: f64) -> f64 {
    (-(sigma * (2.0 * (l as f64).ln()).sqrt())).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvtSample {
    pub l: usize,
    pub mu: f64,
    pub sigma: f64,
    pub trials: usize,
    pub empirical_mean_max: f64,
    /// Standard error of `empirical_mean_max`.
    pub std_error: f64,
    pub predicted: f64,
    /// `empirical / predicted`.
    pub ratio: f64,
}

const EVT_CHUNK: usize = 1024;

/// Monte-Carlo mean of the maximum of `l` normal draws over `trials`.
///
/// Trials are split into fixed chunks, each with its own random stream, and
/// reduced in chunk order, so the result does not depend on thread count.
pub fn evt_sim(l: usize, mu: f64, sigma: f64, trials: usize, seed: u64) -> Result<EvtSample> {
    ensure!(l >= 1, Config, "L must be at least 1");
    ensure!(
        trials >= 1000,
        Config,
        "at least 1000 trials are required, got {trials}"
    );
    ensure!(sigma > 0.0, Config, "sigma must be positive");
    let normal = Normal::new(mu, sigma).map_err(|e| crate::Error::Config(e.to_string()))?;
    let chunks = trials.div_ceil(EVT_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, Stream::Sample(((l as u64) << 24) | c as u64));
            let n = EVT_CHUNK.min(trials - c * EVT_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let m = (0..l)
                    .map(|_| normal.sample(&mut r))
                    .fold(f64::NEG_INFINITY, f64::max);
                s += m;
                s2 += m * m;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let t = trials as f64;
    let mean = s / t;
    let var = (s2 / t - mean * mean).max(0.0) * t / (t - 1.0);
    let predicted = evt_predicted_max(l, mu, sigma);
    Ok(EvtSample {
        l,
        mu,
        sigma,
        trials,
        empirical_mean_max: mean,
        std_error: (var / t).sqrt(),
        predicted,
        ratio: mean / predicted,
    })
}
