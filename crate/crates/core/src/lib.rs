//! Multi-task multivariate forecasting of AIS vessel messages.
//!
//! The crate is organised around five subsystems:
//!
//! - [`tensor`]: dense f64 tensors, deterministic RNG streams, and a
//!   reverse-mode autodiff tape;
//! - [`nn`]: parameterised layers (Conv1D, LSTM, GRU, Elman RNN, Linear,
//!   dropout) plus standalone analytic gradients for cross-validation;
//! - [`data`]: AIS message/trajectory types, CSV ingestion, synthetic
//!   trajectory generation, scaling, and window sampling;
//! - [`model`]: the double-block convolutional-recurrent forecaster with its
//!   autoregressive shortcut, and the baseline forecasters;
//! - [`train`]: the HTE loss, evaluation metrics, AdamW, gradient clipping,
//!   the plateau scheduler, and the mini-batch training loop.
//!
//! [`gradcheck`] holds the finite-difference verification harness used by
//! both the test suites and the `gradcheck` CLI command.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{StreamRng, Tape, Tensor, Var};
