//! Early-exit RF fingerprinting toolkit.
//!
//! The crate implements a dynamic-inference pipeline for radio-frequency
//! fingerprinting: a complex-valued residual CNN backbone with four random
//! forest branch classifiers attached to hidden tap points. Confidence
//! ranges calibrated per (branch, category) decide at inference time
//! whether a sample may exit early at a branch or must continue through
//! deeper layers, trading computation for accuracy sample by sample.
//!
//! Module map:
//! - [`rfdata`] — synthetic emitter simulation, AWGN channel, STFT
//!   preprocessing, dataset container and binary format.
//! - [`cvnn`] — complex-valued convolution / batch normalization / ReLU,
//!   the residual backbone with tap export, analytic gradients, Adam
//!   training, FLOPs accounting, and model serialization.
//! - [`forest`] — from-scratch Gini decision trees and bootstrap random
//!   forests with vote-fraction confidences and cost estimates.
//! - [`earlyexit`] — confidence-range calibration, per-branch exit
//!   judgment, tap feature reduction, and the hybrid inference
//!   orchestrator with FLOPs metering.
//! - [`eval`] — experiment harness: reports, tolerance and SNR sweeps,
//!   Monte Carlo repetition, and confidence-segment diagnostics.

pub mod cvnn;
pub mod earlyexit;
pub mod eval;
pub mod forest;
pub mod rfdata;

mod ioutil;
mod seed;

pub use seed::mix_seed;
