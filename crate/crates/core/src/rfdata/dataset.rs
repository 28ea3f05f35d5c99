//! Labeled frame collection with split assignment and preprocessing.

use rayon::prelude::*;

use super::stft::{minmax_normalize, stft, Spectrogram, StftParams};
use super::synth::IqFrame;
use super::RfError;

/// Dataset partition tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_tag(t: u8) -> Option<Split> {
        match t {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Dataset-level metadata persisted in the binary header.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub num_classes: usize,
    pub frame_len: usize,
    pub stft: StftParams,
    pub base_seed: u64,
    pub split_fractions: [f64; 3],
}

/// Immutable labeled collection of IQ frames plus split assignment.
///
/// Spectrograms are derived on demand from the stored frames and the
/// metadata's STFT parameters, so noise studies can re-preprocess the
/// same frames after channel perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDataset {
    pub frames: Vec<IqFrame>,
    pub splits: Vec<Split>,
    pub meta: DatasetMeta,
}

impl SignalDataset {
    /// Validates cross-field invariants and builds the dataset.
    pub fn new(
        frames: Vec<IqFrame>,
        splits: Vec<Split>,
        meta: DatasetMeta,
    ) -> Result<Self, RfError> {
        if frames.len() != splits.len() {
            return Err(RfError::BadDataset(format!(
                "{} frames but {} split tags",
                frames.len(),
                splits.len()
            )));
        }
        for (k, f) in frames.iter().enumerate() {
            if f.len() != meta.frame_len {
                return Err(RfError::BadDataset(format!(
                    "frame {k} has length {} (expected {})",
                    f.len(),
                    meta.frame_len
                )));
            }
            if f.label >= meta.num_classes {
                return Err(RfError::BadDataset(format!(
                    "frame {k} label {} out of range for {} classes",
                    f.label, meta.num_classes
                )));
            }
            if f.i.iter().chain(f.q.iter()).any(|v| !v.is_finite()) {
                return Err(RfError::NonFinite);
            }
        }
        Ok(Self { frames, splits, meta })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.meta.num_classes
    }

    /// Frame indices assigned to `split`, in stored order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == split).then_some(i))
            .collect()
    }

    /// STFT + min-max preprocessing of one frame. Scaling is joint over
    /// both I/Q planes so their relative magnitudes survive.
    pub fn spectrogram(&self, index: usize) -> Result<Spectrogram, RfError> {
        let s = stft(&self.frames[index], &self.meta.stft)?;
        let data = minmax_normalize(&s.data)?;
        Ok(Spectrogram { data, ..s })
    }

    /// Preprocesses a set of frames in parallel, preserving order.
    pub fn spectrograms(&self, indices: &[usize]) -> Result<Vec<Spectrogram>, RfError> {
        indices.par_iter().map(|&i| self.spectrogram(i)).collect()
    }

    /// Spectrogram spatial dimensions (freq bins, hops) implied by metadata.
    pub fn spectrogram_dims(&self) -> (usize, usize) {
        (self.meta.stft.window_len, self.meta.stft.hops(self.meta.frame_len))
    }
}
