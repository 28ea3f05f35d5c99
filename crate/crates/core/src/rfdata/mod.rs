//! Synthetic RF data generation and preprocessing.
//!
//! Frames are ADS-B-like pulse-position-modulated bursts emitted by
//! simulated devices whose analog front ends carry small, stable defects
//! (IQ imbalance, DC offset, carrier frequency offset, amplifier
//! nonlinearity, phase noise). Those defects are the fingerprints the
//! classifiers learn. Preprocessing maps each frame to a two-plane
//! (I/Q) STFT spectrogram scaled to [-1, 1].

mod dataset;
mod format;
mod stft;
mod synth;

pub use dataset::{DatasetMeta, SignalDataset, Split};
pub use format::export_metadata_csv;
pub use stft::{minmax_normalize, stft, Spectrogram, StftParams, WindowKind};
pub use synth::{add_awgn, synth_dataset, synth_frame, EmitterProfile, IqFrame, SynthConfig};

use thiserror::Error;

/// Errors raised by generation, preprocessing, and dataset I/O.
#[derive(Debug, Error)]
pub enum RfError {
    #[error("frame length {length} too short: payload of {bits} bits needs {needed} samples")]
    FrameTooShort { length: usize, bits: usize, needed: usize },
    #[error("invalid emitter profile: {0}")]
    BadProfile(String),
    #[error("split fractions {0:?} must be nonnegative and sum to 1")]
    BadSplit([f64; 3]),
    #[error("need at least {min} {what}, got {got}")]
    TooFew { what: &'static str, min: usize, got: usize },
    #[error("snr_db must be finite or +inf (no-noise sentinel), got {0}")]
    BadSnr(f64),
    #[error("frame has zero signal power")]
    ZeroPower,
    #[error("STFT window {window} exceeds frame length {frame}")]
    WindowTooLong { window: usize, frame: usize },
    #[error("invalid STFT parameters: {0}")]
    BadStft(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("duplicate device_id {0} in profile set")]
    DuplicateDevice(usize),
    #[error("dataset file has bad magic bytes")]
    BadMagic,
    #[error("dataset file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("dataset file truncated: {0}")]
    Truncated(&'static str),
    #[error("dataset invariant violated: {0}")]
    BadDataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
