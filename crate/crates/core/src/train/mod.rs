//! Windowed-attention training: one banded-mask forward per sequence of
//! `train_length` tokens, mean next-token cross-entropy, AdamW with a warmup
//! plus cosine schedule and global-norm gradient clipping.

mod adamw;
mod log;

pub use adamw::{adamw_step, AdamWHyper, AdamWState};
pub use log::{StepRecord, TrainLog};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::BandMask;
use crate::data::Batches;
use crate::error::{ensure, Error, Result};
use crate::model::Model;
use crate::tensor::Tape;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr_peak: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub log_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Conventional defaults: peak 3e-4 decaying to 3e-5, 2% warmup,
    /// β = (0.9, 0.95), weight decay 0.1, clipping at 1.0.
    pub fn desk(steps: usize) -> Self {
        TrainConfig {
            steps,
            lr_peak: 3e-4,
            lr_min: 3e-5,
            warmup_steps: (steps as f64 * 0.02).ceil() as usize,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
            grad_clip: 1.0,
            log_every: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.warmup_steps <= self.steps,
            Config,
            "warmup_steps {} exceeds steps {}",
            self.warmup_steps,
            self.steps
        );
        ensure!(
            self.lr_min >= 0.0 && self.lr_min <= self.lr_peak,
            Config,
            "need 0 ≤ lr_min ≤ lr_peak, got {} and {}",
            self.lr_min,
            self.lr_peak
        );
        ensure!(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            Config,
            "betas must lie in [0, 1)"
        );
        ensure!(self.eps > 0.0, Config, "eps must be positive");
        ensure!(
            self.weight_decay >= 0.0,
            Config,
            "weight_decay must be non-negative"
        );
        ensure!(self.grad_clip > 0.0, Config, "grad_clip must be positive");
        ensure!(self.log_every >= 1, Config, "log_every must be at least 1");
        Ok(())
    }

    /// Learning rate at `step` (0-based): linear warmup to `lr_peak` over
    /// `warmup_steps`, then cosine decay reaching `lr_min` at the last step.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr_peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay = self.steps.saturating_sub(self.warmup_steps + 1);
        if decay == 0 {
            return self.lr_peak;
        }
        let p = ((step - self.warmup_steps) as f64 / decay as f64).min(1.0);
        self.lr_min + 0.5 * (self.lr_peak - self.lr_min) * (1.0 + (std::f64::consts::PI * p).cos())
    }
}

/// Global L2 norm of a gradient set, accumulated in f64.
pub fn global_norm<T: Scalar>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| {
            let x = x.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Trains `model` on `batches` for `cfg.steps` steps.
pub fn train<T: Scalar>(
    model: Model<T>,
    batches: &mut Batches,
    cfg: &TrainConfig,
) -> Result<(Model<T>, TrainLog)> {
    train_with(model, batches, cfg, |_, _| Ok(()))
}

/// As [`train`], calling `on_step` after every optimizer update.
pub fn train_with<T: Scalar>(
    mut model: Model<T>,
    batches: &mut Batches,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&Model<T>, &StepRecord) -> Result<()>,
) -> Result<(Model<T>, TrainLog)> {
    cfg.validate()?;
    let spec = batches.spec();
    let window = model.config().window;
    ensure!(
        spec.train_window == window,
        Config,
        "batch window {} differs from model window {window}",
        spec.train_window
    );
    ensure!(
        window <= spec.train_length,
        Config,
        "model window {window} exceeds train_length {}",
        spec.train_length
    );
    let mask = BandMask::new(spec.train_length, window)?;
    let decay: Vec<bool> = model
        .params()
        .iter()
        .map(|p| p.shape().len() == 2)
        .collect();
    let mut state = AdamWState::new(model.params());
    let mut log = TrainLog::default();
    let start = Instant::now();

    for step in 0..cfg.steps {
        let batch = batches.next().expect("batch stream is endless");
        let mut tape = Tape::new();
        let vars = model.register(&mut tape, true);
        let pass = model.forward_tape(&mut tape, &vars, &batch.inputs, batch.sequences, &mask)?;
        let loss_var = tape.cross_entropy(pass.logits, &batch.targets)?;
        let loss = tape.value(loss_var).item().as_f64();
        if !loss.is_finite() {
            let (location, statistic) = match tape.first_nonfinite() {
                Some((_, scope, stat)) => (scope, stat),
                None => ("loss".to_string(), format!("loss = {loss}")),
            };
            return Err(Error::NumericAbort {
                step,
                location,
                statistic,
            });
        }
        let mut g = tape.backward(loss_var)?;
        let mut grads: Vec<Vec<T>> = vars
            .iter()
            .zip(model.params())
            .map(|(&v, p)| g.take(v).unwrap_or_else(|| vec![T::zero(); p.numel()]))
            .collect();
        if let Some(i) = grads.iter().position(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NumericAbort {
                step,
                location: format!("gradient of {}", model.param_names()[i]),
                statistic: "non-finite gradient entries".to_string(),
            });
        }
        let grad_norm = clip_grad_norm(&mut grads, cfg.grad_clip);
        let lr = cfg.lr_at(step);
        let hyper = AdamWHyper {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        };
        adamw_step(model.params_mut(), &grads, &mut state, &hyper, &decay)?;
        let record = StepRecord {
            step,
            loss,
            lr,
            grad_norm,
            tokens_seen: (step + 1) * spec.tokens_per_batch(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        on_step(&model, &record)?;
        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            log.records.push(record);
        }
    }
    Ok((model, log))
}
