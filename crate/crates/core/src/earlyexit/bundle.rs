//! The hybrid bundle: backbone + four forest branches + range table +
//! cost model, with the metered early-exit inference orchestrator.

use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cvnn::{
    count_flops, input_from_spectrograms, softmax_rows, ComplexTensor, CvnnModel, NUM_TAPS,
};
use crate::forest::{
    fit_forest, forest_from_bytes, forest_to_bytes, argmax_f64, FeatureMatrix, FeatureRecipe,
    ForestBranch, ForestConfig,
};
use crate::ioutil::{self, ByteReader};
use crate::rfdata::{SignalDataset, Spectrogram, Split};
use crate::seed::mix_seed;

use super::features::extract_branch_features;
use super::judge::judge_exit;
use super::ranges::{CalibrationInputs, ExitRangeTable};
use super::ExitError;

const MAGIC: &[u8; 4] = b"EXRB";
const VERSION: u16 = 1;

/// One forest per tap point.
pub type ForestBranchArray = [ForestBranch; NUM_TAPS];

/// Where a sample terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitPoint {
    /// Branch index 0..NUM_TAPS (paper's Exit1..Exit4).
    Branch(usize),
    /// The backbone's own classifier (paper's Exit5).
    Backbone,
}

impl ExitPoint {
    /// Dense index 0..=NUM_TAPS for histogram accounting.
    pub fn index(self) -> usize {
        match self {
            ExitPoint::Branch(m) => m,
            ExitPoint::Backbone => NUM_TAPS,
        }
    }
}

/// One sample's metered inference result.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    pub label: usize,
    pub exit_point: ExitPoint,
    /// Confidence of the deciding classifier at its decision.
    pub confidence: f64,
    /// Backbone prefix up to the exit (or the full backbone) plus the
    /// cost of every branch actually evaluated.
    pub flops: f64,
}

/// Static per-component costs used by the FLOPs meter.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleCostModel {
    pub tap_prefix: [u64; NUM_TAPS],
    pub backbone_total: u64,
    pub branch_flops: [f64; NUM_TAPS],
}

impl BundleCostModel {
    pub fn build(model: &CvnnModel, branches: &[ForestBranch; NUM_TAPS]) -> Result<Self, ExitError> {
        let report = count_flops(model);
        let mut branch_flops = [0.0; NUM_TAPS];
        for (m, b) in branches.iter().enumerate() {
            branch_flops[m] = b.flops();
        }
        let cost = Self {
            tap_prefix: report.tap_prefix,
            backbone_total: report.total,
            branch_flops,
        };
        cost.validate()?;
        Ok(cost)
    }

    /// Exit-dominance check: exiting at the first branch must be
    /// strictly cheaper than running the full backbone.
    pub fn validate(&self) -> Result<(), ExitError> {
        let first_exit = self.tap_prefix[0] as f64 + self.branch_flops[0];
        if first_exit >= self.backbone_total as f64 {
            return Err(ExitError::CostModel(format!(
                "prefix(tap1) + branch1 = {first_exit} >= backbone total {}",
                self.backbone_total
            )));
        }
        Ok(())
    }

    /// Worst-case cost: full backbone plus every branch.
    pub fn max_flops(&self) -> f64 {
        self.backbone_total as f64 + self.branch_flops.iter().sum::<f64>()
    }
}

/// Backbone, branch classifiers, calibrated ranges, and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridBundle {
    pub model: CvnnModel,
    pub branches: [ForestBranch; NUM_TAPS],
    pub table: ExitRangeTable,
    pub cost: BundleCostModel,
}

impl HybridBundle {
    pub fn assemble(
        model: CvnnModel,
        branches: [ForestBranch; NUM_TAPS],
        table: ExitRangeTable,
    ) -> Result<Self, ExitError> {
        let n = model.cfg.num_classes;
        table.validate_shape(NUM_TAPS, n)?;
        let chans = model.tap_channels();
        for (m, b) in branches.iter().enumerate() {
            if b.tap_index != m {
                return Err(ExitError::ShapeMismatch(format!(
                    "branch {m} labeled for tap {}",
                    b.tap_index
                )));
            }
            if b.n_classes != n {
                return Err(ExitError::ShapeMismatch(format!(
                    "branch {m} has {} classes, model has {n}",
                    b.n_classes
                )));
            }
            if b.n_features != 2 * chans[m] {
                return Err(ExitError::ShapeMismatch(format!(
                    "branch {m} expects {} features, tap provides {}",
                    b.n_features,
                    2 * chans[m]
                )));
            }
        }
        let cost = BundleCostModel::build(&model, &branches)?;
        Ok(Self { model, branches, table, cost })
    }

    pub fn save(&self, path: &Path) -> Result<(), ExitError> {
        ioutil::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ExitError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        ioutil::put_u16(&mut buf, VERSION);
        let section = |buf: &mut Vec<u8>, bytes: &[u8]| {
            ioutil::put_u64(buf, bytes.len() as u64);
            buf.extend_from_slice(bytes);
        };
        section(&mut buf, &crate::cvnn::model_to_bytes(&self.model));
        for b in &self.branches {
            section(&mut buf, &forest_to_bytes(b));
        }
        section(&mut buf, &self.table.to_bytes());
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ExitError> {
        if bytes.len() < 38 {
            return Err(ExitError::Truncated("header"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(ExitError::ChecksumMismatch);
        }
        let mut r = ByteReader::new(body);
        if r.take(4).ok_or(ExitError::Truncated("magic"))? != MAGIC {
            return Err(ExitError::BadMagic);
        }
        let version = r.u16().ok_or(ExitError::Truncated("version"))?;
        if version != VERSION {
            return Err(ExitError::VersionMismatch { found: version, expected: VERSION });
        }
        let section = |r: &mut ByteReader| -> Result<Vec<u8>, ExitError> {
            let len = r.u64().ok_or(ExitError::Truncated("section length"))? as usize;
            Ok(r.take(len).ok_or(ExitError::Truncated("section payload"))?.to_vec())
        };
        let model = crate::cvnn::model_from_bytes(&section(&mut r)?)?;
        let mut branches = Vec::with_capacity(NUM_TAPS);
        for _ in 0..NUM_TAPS {
            branches.push(forest_from_bytes(&section(&mut r)?)?);
        }
        let table = ExitRangeTable::from_bytes(&section(&mut r)?)?;
        if r.remaining() != 0 {
            return Err(ExitError::ShapeMismatch("trailing bytes in bundle".into()));
        }
        let branches: [ForestBranch; NUM_TAPS] =
            branches.try_into().expect("exactly NUM_TAPS branches");
        Self::assemble(model, branches, table)
    }
}

/// Runs one sample through the hybrid: backbone prefix to each tap,
/// branch judgment, early exit or continuation, with FLOPs metering.
/// `active[m]` disables a branch entirely (no cost, no exit) for
/// single-branch ablations.
pub fn hybrid_infer(
    bundle: &HybridBundle,
    sample: &ComplexTensor,
    active: [bool; NUM_TAPS],
) -> Result<InferenceOutcome, ExitError> {
    let mut branch_cost = 0.0;
    let mut cur = bundle.model.stage_stem(sample)?;
    for m in 0..NUM_TAPS {
        if m > 0 {
            cur = bundle.model.stage_group(m - 1, &cur)?;
        }
        if !active[m] {
            continue;
        }
        branch_cost += bundle.cost.branch_flops[m];
        let features = extract_branch_features(&cur);
        let conf = bundle.branches[m].predict_proba(&features)?;
        let judgment = judge_exit(&bundle.table, m, &conf);
        if judgment.exit {
            return Ok(InferenceOutcome {
                label: judgment.category,
                exit_point: ExitPoint::Branch(m),
                confidence: judgment.confidence,
                flops: bundle.cost.tap_prefix[m] as f64 + branch_cost,
            });
        }
    }
    let g4 = bundle.model.stage_group(3, &cur)?;
    let logits = bundle.model.stage_head(&g4)?;
    let probs = softmax_rows(&logits, bundle.model.cfg.num_classes);
    let label = argmax_f64(&probs);
    Ok(InferenceOutcome {
        label,
        exit_point: ExitPoint::Backbone,
        confidence: probs[label],
        flops: bundle.cost.backbone_total as f64 + branch_cost,
    })
}

/// Extracts tap features for a set of samples (parallel over batches)
/// without running the head. Returns one matrix per tap.
pub fn tap_feature_matrices(
    model: &CvnnModel,
    samples: &[Spectrogram],
    batch_size: usize,
) -> Result<[FeatureMatrix; NUM_TAPS], ExitError> {
    let chans = model.tap_channels();
    let chunks: Vec<&[Spectrogram]> = samples.chunks(batch_size.max(1)).collect();
    let per_chunk: Result<Vec<[Vec<f64>; NUM_TAPS]>, ExitError> = chunks
        .par_iter()
        .map(|chunk| {
            let refs: Vec<&Spectrogram> = chunk.iter().collect();
            let x = input_from_spectrograms(&refs)?;
            let mut cur = model.stage_stem(&x)?;
            let mut taps: [Vec<f64>; NUM_TAPS] = Default::default();
            for m in 0..NUM_TAPS {
                if m > 0 {
                    cur = model.stage_group(m - 1, &cur)?;
                }
                taps[m] = extract_branch_features(&cur);
            }
            Ok(taps)
        })
        .collect();
    let per_chunk = per_chunk?;
    let mut out = Vec::with_capacity(NUM_TAPS);
    for m in 0..NUM_TAPS {
        let mut data = Vec::with_capacity(samples.len() * 2 * chans[m]);
        for chunk in &per_chunk {
            data.extend_from_slice(&chunk[m]);
        }
        out.push(FeatureMatrix::new(data, 2 * chans[m]));
    }
    Ok(out.try_into().expect("NUM_TAPS matrices"))
}

/// Trains the four branch forests on the dataset's train split using
/// the (already trained) backbone's tap features.
pub fn train_branches(
    model: &CvnnModel,
    dataset: &SignalDataset,
    forest_cfg: &ForestConfig,
    batch_size: usize,
) -> Result<[ForestBranch; NUM_TAPS], ExitError> {
    let idx = dataset.indices_of(Split::Train);
    if idx.is_empty() {
        return Err(ExitError::BadCalibration("dataset has no train split".into()));
    }
    let samples = dataset.spectrograms(&idx)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let features = tap_feature_matrices(model, &samples, batch_size)?;
    let (dims, _) = model.tap_dims();
    let chans = model.tap_channels();
    let mut branches = Vec::with_capacity(NUM_TAPS);
    for (m, feats) in features.iter().enumerate() {
        let cfg = ForestConfig { seed: mix_seed(forest_cfg.seed, m as u64), ..*forest_cfg };
        let recipe = FeatureRecipe {
            channels: chans[m],
            height: dims[m].0,
            width: dims[m].1,
        };
        branches.push(fit_forest(
            feats,
            &labels,
            dataset.num_classes(),
            &cfg,
            m,
            recipe,
        )?);
    }
    Ok(branches.try_into().expect("NUM_TAPS branches"))
}

/// Gathers Algorithm-1 inputs on the validation split: ground truth,
/// backbone predictions, and per-branch labels plus confidence vectors.
pub fn collect_calibration_inputs(
    model: &CvnnModel,
    branches: &[ForestBranch; NUM_TAPS],
    dataset: &SignalDataset,
    batch_size: usize,
) -> Result<CalibrationInputs, ExitError> {
    let idx = dataset.indices_of(Split::Val);
    if idx.is_empty() {
        return Err(ExitError::BadCalibration("dataset has no validation split".into()));
    }
    let samples = dataset.spectrograms(&idx)?;
    let correct: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let backbone = crate::cvnn::predict_labels(model, &samples, batch_size)
        .map_err(ExitError::Model)?;
    let features = tap_feature_matrices(model, &samples, batch_size)?;
    let mut branch_labels = Vec::with_capacity(NUM_TAPS);
    let mut branch_conf = Vec::with_capacity(NUM_TAPS);
    for (m, branch) in branches.iter().enumerate() {
        let mut labels = Vec::with_capacity(samples.len());
        let mut confs = Vec::with_capacity(samples.len());
        for i in 0..samples.len() {
            let p = branch.predict_proba(features[m].row(i))?;
            labels.push(argmax_f64(&p));
            confs.push(p);
        }
        branch_labels.push(labels);
        branch_conf.push(confs);
    }
    Ok(CalibrationInputs {
        correct,
        backbone,
        branch_labels,
        branch_conf,
        num_classes: dataset.num_classes(),
    })
}
