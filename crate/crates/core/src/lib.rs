//! Differentiable feature selection.
//!
//! A learned embedding drives a masking network whose logits pass through a
//! temperature-annealed Gumbel-Sigmoid gate. The gated features feed a task
//! network, and both are trained jointly on the task loss plus a penalty on the
//! mask. After training, features with positive logits are selected.

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod gumbel;
pub mod ndcore;
pub mod networks;
pub mod rng;
pub mod selection;
pub mod trainer;

pub use error::{Error, Result};
pub use gumbel::{gumbel_sigmoid, hard_mask, sample_gumbel_noise, AnnealSchedule, RngState};
pub use selection::{extract_selection, SelectionReport, SelectionResult};
pub use trainer::{train, SelectMode, TrainConfig, TrainOutput};
