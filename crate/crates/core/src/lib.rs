//! Bias-aware fine-tuning of a toy transformer heart-rate regressor.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`synthpg`]: synthetic multi-domain PPG corpora with a controllable
//!   gender-bias knob, plus resampling / windowing / standardization.
//! - [`nnet`]: a small decoder-style transformer with rotary attention,
//!   hand-written reverse-mode gradients, a composite L1 + logit-Laplace
//!   loss and an Adam optimizer with warmup/cosine schedule.
//! - [`mitigate`]: inverse-frequency sampling, GroupDRO reweighting and an
//!   entropy-maximizing adversary.
//! - [`fairmetrics`]: MAE, fairness gap, silhouette over HR bins, stratified
//!   RBF-kernel MMD and percentile bootstrap intervals.
//! - [`harness`]: cross-dataset scenarios, seed sweeps, scaling study and
//!   report generation.

pub mod error;
pub mod fairmetrics;
pub mod harness;
pub mod io;
pub mod mitigate;
pub mod nnet;
pub mod seed;
pub mod synthpg;

pub use error::{Error, Result};
