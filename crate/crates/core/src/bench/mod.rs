//! Downstream evaluation, wall-clock scaling and entropy diagnostics.

mod downstream;
mod entropy;
mod scaling;

pub use downstream::{downstream_eval, fit_task_model, predict, EvalConfig};
pub use entropy::{feature_entropy, mean_entropy};
pub use scaling::{fit_power_law, measure_scaling, timer_resolution, ScalingReport, PUBLISHED_ALPHA};
