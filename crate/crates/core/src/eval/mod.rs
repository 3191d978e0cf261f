//! Sliding-window inference and perplexity measurement.

mod cache;
mod grid;
mod ppl;
mod regimes;

pub use cache::{incremental_forward, incremental_logits, KVCacheRing};
pub use grid::{eval_grid, EvalGrid, GridMeta};
pub use ppl::{perplexity, perplexity_examples, perplexity_with, EvalMode, Perplexity};
pub use regimes::{
    compare_training_regimes, EvalPlan, Regime, RegimeLabel, RegimeReport, RegimeRow, RegimeRun,
};
