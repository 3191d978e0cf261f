//! Diagnostics: attention-sink statistics, softmax sparsity and
//! extreme-value demonstrations, sigmoid density, and the inference cost
//! model with timing harnesses.

mod cost;
mod density;
mod gradsuite;
mod sink;
mod sparsity;

pub use cost::{
    cost_model, fit_linear, forward_us_per_token, measure_delta, timing_sweep, CostEstimate,
    DeltaMeasurement, LinearFit, TimingPoint,
};
pub use density::{
    density_check_model, density_check_qk, density_check_scores, DensityReport, RowDensity,
    DENSITY_THRESHOLDS,
};
pub use gradsuite::{
    attention_gradchecks, model_gradcheck, primitive_gradchecks, NamedCheck, END_TO_END_TOL,
    PRIMITIVE_TOL,
};
pub use sink::{attention_heatmaps, heatmap_csv, sink_report, LayerSink, SinkReport};
pub use sparsity::{
    evt_gap_ratio, evt_predicted_max, evt_sim, sparsity_demo, EvtSample, SparsityDemo,
};
