//! Attention variants: softmax and sigmoid activations, linear distance
//! bias (ALiBi) with negative/positive/balanced slopes, rotary embeddings,
//! and the banded causal mask that realizes the sliding window.

mod kernel;
mod mask;
mod rope;
mod slopes;

pub(crate) use kernel::{attend_row, attention_backward, attention_forward, AttentionSaved};
pub use kernel::{
    multi_head_attention, sigmoid_attention, softmax_attention, swat_attention, Activation,
    AttentionConfig, AttentionGeometry, AttentionOutput,
};
pub use mask::BandMask;
pub(crate) use rope::rotate_pairs;
pub use rope::{rope_rotate, RopeParams};
pub use slopes::{alibi_bias, slope_schedule, SlopeMode, SlopeSchedule};
