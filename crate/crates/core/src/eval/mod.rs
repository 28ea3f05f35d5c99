//! Experiment harness: accuracy / exit-rate / cost metrics, tolerance
//! and SNR sweeps, Monte Carlo repetition, and report emission.

mod harness;
mod report;

pub use harness::{
    confidence_diagnostics, evaluate, exit_partition_holds, monte_carlo, run_experiment,
    snr_sweep, summarize_runs, tolerance_sweep, ExperimentRun, ExperimentSpec, McSummary,
};
pub use report::{emit_report, parse_json_reports, render_reports, ReportFormat, CSV_HEADER};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvnn::NUM_TAPS;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Exit(#[from] crate::earlyexit::ExitError),
    #[error(transparent)]
    Model(#[from] crate::cvnn::CvnnError),
    #[error(transparent)]
    Rf(#[from] crate::rfdata::RfError),
    #[error(transparent)]
    Forest(#[from] crate::forest::ForestError),
    #[error("report serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exit points: four branches plus the backbone.
pub const NUM_EXITS: usize = NUM_TAPS + 1;

/// Per-category slice of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: usize,
    pub samples: usize,
    pub accuracy: f64,
    /// Samples terminating at [branch1..branch4, backbone].
    pub exit_counts: [usize; NUM_EXITS],
}

/// Aggregated metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub seed: u64,
    pub tolerance: f64,
    /// SNR annotation when the test data was noise-injected.
    pub snr_db: Option<f64>,
    pub samples: usize,
    /// Hybrid (early-exit) accuracy.
    pub accuracy: f64,
    /// Accuracy of the backbone alone on the same samples.
    pub backbone_accuracy: f64,
    /// Arithmetic mean of per-sample metered FLOPs.
    pub mean_flops: f64,
    /// Cost of one full-backbone inference (no branches).
    pub backbone_total_flops: f64,
    pub exit_counts: [usize; NUM_EXITS],
    pub per_category: Vec<CategoryReport>,
}

impl EvalReport {
    /// Fraction of samples terminating at the given exit index.
    pub fn exit_rate(&self, exit: usize) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.exit_counts[exit] as f64 / self.samples as f64
        }
    }

    /// Fraction of samples that exited at any branch.
    pub fn overall_exit_rate(&self) -> f64 {
        1.0 - self.exit_rate(NUM_EXITS - 1)
    }
}
