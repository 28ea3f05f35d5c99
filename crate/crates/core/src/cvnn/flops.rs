//! FLOPs accounting for the complex backbone and its real-valued twin.
//!
//! Convention (per inference of ONE sample):
//! - one real multiply-accumulate = 2 FLOPs;
//! - one complex MAC = 4 real MACs = 8 FLOPs (the structured matrix form
//!   absorbs the combination adds into the accumulators);
//! - CBN applies per complex element: centering (2), whitening matvec
//!   (6), scale matvec (6), shift (2) = 16 FLOPs; real BN is 4;
//! - CReLU is 2 FLOPs per complex element (one comparison per plane),
//!   real ReLU is 1; residual adds are 2 vs 1;
//! - global pooling: 2 adds per complex element plus per-channel
//!   divides; FC = 2 * in * out + out; softmax = 4 per class.
//!
//! The real twin has identical layer shapes with real arithmetic and a
//! C-wide pooled head; it exists only for the cost-ratio comparison.

use super::model::{CvnnModel, NUM_TAPS};
use super::tensor::conv_out_dim;

/// Per-layer and aggregate costs of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopsReport {
    /// (layer name, FLOPs) in forward order.
    pub per_layer: Vec<(String, u64)>,
    pub total: u64,
    /// Cumulative FLOPs up to and including each tap point.
    pub tap_prefix: [u64; NUM_TAPS],
    /// Total FLOPs of the identically-shaped real-valued twin.
    pub real_twin_total: u64,
}

struct Walker {
    per_layer: Vec<(String, u64)>,
    total: u64,
    real_total: u64,
    tap_prefix: Vec<u64>,
}

impl Walker {
    fn push(&mut self, name: &str, complex: u64, real: u64) {
        self.per_layer.push((name.to_string(), complex));
        self.total += complex;
        self.real_total += real;
    }

    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize, hw: usize) {
        let macs = (k * k * c_in * c_out * hw) as u64;
        self.push(name, macs * 8, macs * 2);
    }

    fn bn(&mut self, name: &str, elems: usize) {
        self.push(name, elems as u64 * 16, elems as u64 * 4);
    }

    fn relu(&mut self, name: &str, elems: usize) {
        self.push(name, elems as u64 * 2, elems as u64);
    }

    fn residual(&mut self, name: &str, elems: usize) {
        self.push(name, elems as u64 * 2, elems as u64);
    }

    fn mark_tap(&mut self) {
        self.tap_prefix.push(self.total);
    }
}

/// Walks the architecture and prices every layer.
pub fn count_flops(model: &CvnnModel) -> FlopsReport {
    let cfg = &model.cfg;
    let mut w = Walker { per_layer: Vec::new(), total: 0, real_total: 0, tap_prefix: Vec::new() };
    let base = cfg.base_channels();

    let mut h = conv_out_dim(cfg.input_hw.0, 3, cfg.stem_stride, 1);
    let mut wd = conv_out_dim(cfg.input_hw.1, 3, cfg.stem_stride, 1);
    w.conv("stem.conv", 1, base, 3, h * wd);
    w.relu("stem.crelu", base * h * wd);
    w.bn("stem.bn", base * h * wd);
    w.mark_tap();

    let mut c_in = base;
    for g in 0..4 {
        let c_out = base << g;
        let stride = if g == 0 { 1 } else { 2 };
        let (h_out, w_out) =
            (conv_out_dim(h, 3, stride, 1), conv_out_dim(wd, 3, stride, 1));
        for b in 0..2 {
            let name = format!("g{}.b{}", g + 1, b + 1);
            let (ci, s, hin_hw) = if b == 0 {
                (c_in, stride, h * wd)
            } else {
                (c_out, 1, h_out * w_out)
            };
            let _ = hin_hw;
            let hw = h_out * w_out;
            w.conv(&format!("{name}.conv1"), ci, c_out, 3, hw);
            w.bn(&format!("{name}.bn1"), c_out * hw);
            w.relu(&format!("{name}.crelu1"), c_out * hw);
            w.conv(&format!("{name}.conv2"), c_out, c_out, 3, hw);
            w.bn(&format!("{name}.bn2"), c_out * hw);
            if b == 0 && (s != 1 || ci != c_out) {
                w.conv(&format!("{name}.down.conv"), ci, c_out, 1, hw);
                w.bn(&format!("{name}.down.bn"), c_out * hw);
            }
            w.residual(&format!("{name}.add"), c_out * hw);
            w.relu(&format!("{name}.crelu2"), c_out * hw);
        }
        h = h_out;
        wd = w_out;
        c_in = c_out;
        if g < 3 {
            w.mark_tap();
        }
    }

    // Head: pooling, FC over [re | im] means, softmax.
    let pool_elems = c_in * h * wd;
    w.push("pool", (2 * pool_elems + 2 * c_in) as u64, (pool_elems + c_in) as u64);
    let n = cfg.num_classes;
    w.push(
        "fc",
        (2 * (2 * c_in) * n + n) as u64,
        (2 * c_in * n + n) as u64,
    );
    w.push("softmax", 4 * n as u64, 4 * n as u64);

    let tap_prefix = [w.tap_prefix[0], w.tap_prefix[1], w.tap_prefix[2], w.tap_prefix[3]];
    FlopsReport { per_layer: w.per_layer, total: w.total, tap_prefix, real_twin_total: w.real_total }
}

/// FLOPs consumed up to (and including) tap `m`.
pub fn count_flops_prefix(model: &CvnnModel, tap: usize) -> u64 {
    count_flops(model).tap_prefix[tap]
}

#[cfg(test)]
mod tests {
    use super::super::model::ModelConfig;
    use super::*;

    fn desk_model() -> CvnnModel {
        CvnnModel::init(ModelConfig::default()).unwrap()
    }

    #[test]
    fn real_conv_textbook_example() {
        // 3x3 kernel, 1 -> 1 channel, 8x8 output: 3*3*8*8*2 = 1152 real
        // FLOPs; the complex version is exactly 4x that.
        let mut w = Walker {
            per_layer: Vec::new(),
            total: 0,
            real_total: 0,
            tap_prefix: Vec::new(),
        };
        w.conv("probe", 1, 1, 3, 64);
        assert_eq!(w.real_total, 1152);
        assert_eq!(w.total, 4 * 1152);
    }

    #[test]
    fn complex_real_ratio_in_band() {
        let r = count_flops(&desk_model());
        let ratio = r.total as f64 / r.real_twin_total as f64;
        assert!((3.6..=4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn prefixes_strictly_increase_and_stay_below_total() {
        let r = count_flops(&desk_model());
        assert!(r.tap_prefix[0] > 0);
        for m in 1..NUM_TAPS {
            assert!(r.tap_prefix[m] > r.tap_prefix[m - 1]);
        }
        assert!(r.tap_prefix[NUM_TAPS - 1] < r.total);
        let sum: u64 = r.per_layer.iter().map(|(_, f)| f).sum();
        assert_eq!(sum, r.total);
    }

    #[test]
    fn prefix_helper_matches_report() {
        let m = desk_model();
        let r = count_flops(&m);
        for tap in 0..NUM_TAPS {
            assert_eq!(count_flops_prefix(&m, tap), r.tap_prefix[tap]);
        }
    }
}
