//! Regularized gradient ascent in image space.
//!
//! Each step applies `x <- r(x + eta * ∂a_i/∂x)` where `r` chains the four
//! regularizers in [`regularizers`]. [`Preset`] names the four tuned
//! hyperparameter combinations.

mod ascent;
mod params;
pub mod regularizers;
mod search;

pub use ascent::{ascent_step, initial_image, run_optimization, run_optimization_with, OptRunResult};
pub use params::{GradNorm, Preset, RegParams};
pub use regularizers::{reg_blur, reg_clip_contribution, reg_clip_norm, reg_l2_decay};
pub use search::{hyperparam_random_search, regularization_sweep, sample_params, Regularizer, SearchRanges};
