//! Automated multi-dimensional early exit.
//!
//! Deployment phase: validation confidences are grouped per (branch,
//! predicted category), sorted, cut into equal-count segments, and each
//! segment is flagged exitable when the backbone's accuracy lead over
//! the branch stays below the tolerance; flagged segments merge into
//! per-cell confidence ranges. Implementation phase: a branch exits a
//! sample when its top confidence falls inside the calibrated range for
//! the predicted category.

mod bundle;
mod features;
mod judge;
mod ranges;

pub use bundle::{
    collect_calibration_inputs, hybrid_infer, tap_feature_matrices, train_branches,
    BundleCostModel, ExitPoint, ForestBranchArray, HybridBundle, InferenceOutcome,
};
pub use features::extract_branch_features;
pub use judge::{conventional_threshold_judge, judge_exit, threshold_equivalent_table, Judgment};
pub use ranges::{
    calibrate_ranges, segment_rows, CalibrationInputs, CalibrationMeta, ExitRangeTable,
    GroupingKey, Interval, SegmentRow,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExitError {
    #[error("invalid calibration input: {0}")]
    BadCalibration(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("range table file has bad magic bytes")]
    BadMagic,
    #[error("range table version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("file checksum mismatch (corrupt or truncated)")]
    ChecksumMismatch,
    #[error("file truncated: {0}")]
    Truncated(&'static str),
    #[error("cost model violates early-exit dominance: {0}")]
    CostModel(String),
    #[error(transparent)]
    Model(#[from] crate::cvnn::CvnnError),
    #[error(transparent)]
    Forest(#[from] crate::forest::ForestError),
    #[error(transparent)]
    Rf(#[from] crate::rfdata::RfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
