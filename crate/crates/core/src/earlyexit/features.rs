//! Tap-to-feature reduction for the branch classifiers.

use crate::cvnn::{global_avg_pool, ComplexTensor};

/// Reduces a tap feature map to the branch feature vector: channel-wise
/// spatial means of the real plane followed by those of the imaginary
/// plane, length 2C. For a batch, one row per sample (row-major).
pub fn extract_branch_features(tap: &ComplexTensor) -> Vec<f64> {
    global_avg_pool(tap)
}
