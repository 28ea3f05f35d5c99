//! Evaluation drivers: single runs, sweeps, Monte Carlo repetition.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cvnn::{
    input_from_spectrograms, predict_labels, train_backbone, CvnnModel, ModelConfig, TrainConfig,
    TrainOutcome, NUM_TAPS,
};
use crate::earlyexit::{
    calibrate_ranges, collect_calibration_inputs, hybrid_infer, segment_rows, train_branches,
    CalibrationInputs, ForestBranchArray, GroupingKey, HybridBundle, SegmentRow,
};
use crate::forest::{ForestBranch, ForestConfig};
use crate::rfdata::{
    add_awgn, minmax_normalize, stft, synth_dataset, EmitterProfile, SignalDataset, Spectrogram,
    Split, StftParams, SynthConfig,
};
use crate::seed::mix_seed;

use super::{CategoryReport, EvalError, EvalReport, NUM_EXITS};

/// Evaluates a calibrated bundle on labeled spectrograms via the hybrid
/// path, measuring accuracy, exit distribution, and mean metered FLOPs.
pub fn evaluate(
    bundle: &HybridBundle,
    samples: &[Spectrogram],
    active: [bool; NUM_TAPS],
    name: &str,
    seed: u64,
    snr_db: Option<f64>,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::BadInput("empty evaluation split".into()));
    }
    let n_classes = bundle.model.cfg.num_classes;
    if samples.iter().any(|s| s.label >= n_classes) {
        return Err(EvalError::BadInput("sample label out of model range".into()));
    }

    let outcomes: Result<Vec<_>, EvalError> = samples
        .par_iter()
        .map(|s| {
            let x = input_from_spectrograms(&[s])?;
            Ok(hybrid_infer(bundle, &x, active)?)
        })
        .collect();
    let outcomes = outcomes?;

    let backbone_pred = predict_labels(&bundle.model, samples, 64)?;

    let mut exit_counts = [0usize; NUM_EXITS];
    let mut hits = 0usize;
    let mut backbone_hits = 0usize;
    let mut flops_sum = 0.0;
    let mut per_cat: Vec<CategoryReport> = (0..n_classes)
        .map(|c| CategoryReport {
            category: c,
            samples: 0,
            accuracy: 0.0,
            exit_counts: [0; NUM_EXITS],
        })
        .collect();
    for ((s, out), bp) in samples.iter().zip(&outcomes).zip(&backbone_pred) {
        let e = out.exit_point.index();
        exit_counts[e] += 1;
        flops_sum += out.flops;
        let cat = &mut per_cat[s.label];
        cat.samples += 1;
        cat.exit_counts[e] += 1;
        if out.label == s.label {
            hits += 1;
            cat.accuracy += 1.0;
        }
        if *bp == s.label {
            backbone_hits += 1;
        }
    }
    for cat in per_cat.iter_mut() {
        if cat.samples > 0 {
            cat.accuracy /= cat.samples as f64;
        }
    }
    let n = samples.len();
    Ok(EvalReport {
        name: name.to_string(),
        seed,
        tolerance: bundle.table.meta.tolerance,
        snr_db,
        samples: n,
        accuracy: hits as f64 / n as f64,
        backbone_accuracy: backbone_hits as f64 / n as f64,
        mean_flops: flops_sum / n as f64,
        backbone_total_flops: bundle.cost.backbone_total as f64,
        exit_counts,
        per_category: per_cat,
    })
}

/// One calibration + evaluation per tolerance, reports in grid order.
#[allow(clippy::too_many_arguments)]
pub fn tolerance_sweep(
    model: &CvnnModel,
    branches: &ForestBranchArray,
    inputs: &CalibrationInputs,
    samples: &[Spectrogram],
    tolerances: &[f64],
    segments: usize,
    grouping: GroupingKey,
    seed: u64,
) -> Result<Vec<EvalReport>, EvalError> {
    let mut out = Vec::with_capacity(tolerances.len());
    for &t in tolerances {
        let table = calibrate_ranges(inputs, segments, t, grouping)?;
        let bundle = HybridBundle::assemble(model.clone(), branches.clone(), table)?;
        out.push(evaluate(
            &bundle,
            samples,
            [true; NUM_TAPS],
            &format!("tolerance={t}"),
            seed,
            None,
        )?);
    }
    Ok(out)
}

/// Noise-robustness sweep: injects AWGN into the clean test frames at
/// each SNR, re-preprocesses, and evaluates the unchanged bundle.
pub fn snr_sweep(
    bundle: &HybridBundle,
    dataset: &SignalDataset,
    snrs_db: &[f64],
    seed: u64,
) -> Result<Vec<EvalReport>, EvalError> {
    let test_idx = dataset.indices_of(Split::Test);
    if test_idx.is_empty() {
        return Err(EvalError::BadInput("dataset has no test split".into()));
    }
    let mut out = Vec::with_capacity(snrs_db.len());
    for (si, &snr) in snrs_db.iter().enumerate() {
        let samples: Result<Vec<Spectrogram>, EvalError> = test_idx
            .par_iter()
            .enumerate()
            .map(|(k, &fi)| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix_seed(seed, (si * 1_000_003 + k) as u64));
                let noisy = add_awgn(&dataset.frames[fi], snr, &mut rng)?;
                let s = stft(&noisy, &dataset.meta.stft)?;
                let data = minmax_normalize(&s.data)?;
                Ok(Spectrogram { data, ..s })
            })
            .collect();
        out.push(evaluate(
            bundle,
            &samples?,
            [true; NUM_TAPS],
            &format!("snr={snr}dB"),
            seed,
            Some(snr),
        )?);
    }
    Ok(out)
}

/// Reproduces the per-segment quantities of calibration steps 1-2 for
/// one (branch, category) pair.
pub fn confidence_diagnostics(
    inputs: &CalibrationInputs,
    branch: usize,
    category: usize,
    segments: usize,
    tolerance: f64,
    grouping: GroupingKey,
) -> Result<Vec<SegmentRow>, EvalError> {
    Ok(segment_rows(inputs, branch, category, segments, tolerance, grouping)?.0)
}

/// Everything needed to run the synthetic experiment end to end.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub classes: usize,
    pub frames_per_class: usize,
    pub split: [f64; 3],
    pub synth: SynthConfig,
    pub stft: StftParams,
    /// Model template; class count and input dims are derived per run.
    pub model: ModelConfig,
    /// Training template; the seed is derived per run.
    pub train: TrainConfig,
    pub forest: ForestConfig,
    pub segments: usize,
    pub tolerance: f64,
    pub grouping: GroupingKey,
    pub base_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            frames_per_class: 120,
            split: [0.6, 0.3, 0.1],
            synth: SynthConfig::default(),
            stft: StftParams::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            forest: ForestConfig { min_leaf: 2, ..Default::default() },
            segments: 15,
            tolerance: 0.05,
            grouping: GroupingKey::BranchArgmax,
            base_seed: 7,
        }
    }
}

/// Artifacts of one end-to-end run.
pub struct ExperimentRun {
    pub dataset: SignalDataset,
    pub model: CvnnModel,
    pub branches: ForestBranchArray,
    pub calibration: CalibrationInputs,
    pub bundle: HybridBundle,
    pub report: EvalReport,
    pub train_outcome: TrainOutcome,
}

/// Synth -> train backbone -> train branches -> calibrate -> evaluate,
/// fully determined by (spec, seed).
pub fn run_experiment(spec: &ExperimentSpec, seed: u64) -> Result<ExperimentRun, EvalError> {
    let profiles = EmitterProfile::sample_population(spec.classes, seed);
    let dataset = synth_dataset(
        &profiles,
        spec.frames_per_class,
        spec.split,
        seed,
        &spec.synth,
        spec.stft,
    )?;
    let (f, t) = dataset.spectrogram_dims();
    let model_cfg = ModelConfig {
        num_classes: spec.classes,
        input_hw: (f, t),
        seed: mix_seed(seed, 1),
        ..spec.model
    };
    let mut model = CvnnModel::init(model_cfg)?;
    let train_idx = dataset.indices_of(Split::Train);
    let val_idx = dataset.indices_of(Split::Val);
    let train_samples = dataset.spectrograms(&train_idx)?;
    let val_samples = dataset.spectrograms(&val_idx)?;
    let train_cfg = TrainConfig { seed: mix_seed(seed, 2), ..spec.train };
    let train_outcome = train_backbone(&mut model, &train_samples, &val_samples, &train_cfg)?;

    let forest_cfg = ForestConfig { seed: mix_seed(seed, 3), ..spec.forest };
    let branches = train_branches(&model, &dataset, &forest_cfg, spec.train.batch_size)?;
    let calibration =
        collect_calibration_inputs(&model, &branches, &dataset, spec.train.batch_size)?;
    let table = calibrate_ranges(&calibration, spec.segments, spec.tolerance, spec.grouping)?;
    let bundle = HybridBundle::assemble(model.clone(), branches.clone(), table)?;

    let test_idx = dataset.indices_of(Split::Test);
    let test_samples = dataset.spectrograms(&test_idx)?;
    let report =
        evaluate(&bundle, &test_samples, [true; NUM_TAPS], "experiment", seed, None)?;
    Ok(ExperimentRun {
        dataset,
        model,
        branches,
        calibration,
        bundle,
        report,
        train_outcome,
    })
}

/// Median summary of repeated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub runs: usize,
    pub median_accuracy: f64,
    pub median_backbone_accuracy: f64,
    pub median_mean_flops: f64,
    pub median_overall_exit_rate: f64,
    pub median_backbone_total_flops: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Summarizes reports by per-metric medians (order-insensitive).
pub fn summarize_runs(reports: &[EvalReport]) -> McSummary {
    let take = |f: &dyn Fn(&EvalReport) -> f64| {
        let mut v: Vec<f64> = reports.iter().map(f).collect();
        median(&mut v)
    };
    McSummary {
        runs: reports.len(),
        median_accuracy: take(&|r| r.accuracy),
        median_backbone_accuracy: take(&|r| r.backbone_accuracy),
        median_mean_flops: take(&|r| r.mean_flops),
        median_overall_exit_rate: take(&|r| r.overall_exit_rate()),
        median_backbone_total_flops: take(&|r| r.backbone_total_flops),
    }
}

/// Runs the experiment `runs` times with per-run derived seeds and
/// reports the per-metric medians. Runs differ only by seed.
pub fn monte_carlo(
    spec: &ExperimentSpec,
    runs: usize,
) -> Result<(Vec<EvalReport>, McSummary), EvalError> {
    if runs == 0 {
        return Err(EvalError::BadInput("need at least one run".into()));
    }
    let mut reports = Vec::with_capacity(runs);
    for r in 0..runs {
        let seed = mix_seed(spec.base_seed, r as u64);
        let mut run = run_experiment(spec, seed)?;
        run.report.name = format!("mc-run-{r}");
        reports.push(run.report);
    }
    let summary = summarize_runs(&reports);
    Ok((reports, summary))
}

/// Exit-rate partition sanity: counts across exits must sum to the
/// sample count. Used by tests and the CLI's report validation.
pub fn exit_partition_holds(report: &EvalReport) -> bool {
    report.exit_counts.iter().sum::<usize>() == report.samples
        && report
            .per_category
            .iter()
            .map(|c| c.exit_counts.iter().sum::<usize>())
            .sum::<usize>()
            == report.samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earlyexit::{ExitRangeTable, Interval};
    use crate::forest::{DecisionTree, FeatureRecipe, Node};

    fn tiny_model() -> CvnnModel {
        CvnnModel::init(ModelConfig {
            num_classes: 3,
            input_hw: (16, 16),
            width_scale: 16,
            seed: 2,
            ..Default::default()
        })
        .unwrap()
    }

    fn constant_forest(class: usize, n_features: usize, tap: usize) -> ForestBranch {
        let mut counts = vec![0u32; 3];
        counts[class] = 1;
        ForestBranch {
            trees: vec![
                DecisionTree { nodes: vec![Node::Leaf { class_counts: counts }], n_classes: 3 };
                4
            ],
            n_classes: 3,
            n_features,
            config: ForestConfig { n_trees: 4, ..Default::default() },
            tap_index: tap,
            feature_recipe: FeatureRecipe::none(),
            oob_accuracy: None,
        }
    }

    fn bundle_with(table: ExitRangeTable) -> HybridBundle {
        let model = tiny_model();
        let ch = model.tap_channels();
        let branches = [
            constant_forest(1, 2 * ch[0], 0),
            constant_forest(1, 2 * ch[1], 1),
            constant_forest(1, 2 * ch[2], 2),
            constant_forest(1, 2 * ch[3], 3),
        ];
        HybridBundle::assemble(model, branches, table).unwrap()
    }

    fn toy_samples(n: usize) -> Vec<Spectrogram> {
        (0..n)
            .map(|i| Spectrogram {
                data: (0..2 * 16 * 16)
                    .map(|k| (((i * 31 + k * 7) % 41) as f64 / 20.0 - 1.0))
                    .collect(),
                freq_bins: 16,
                hops: 16,
                label: i % 3,
            })
            .collect()
    }

    #[test]
    fn degenerate_tables_pin_exit_rates() {
        let samples = toy_samples(12);
        let all_empty = bundle_with(ExitRangeTable::empty(NUM_TAPS, 3));
        let r = evaluate(&all_empty, &samples, [true; NUM_TAPS], "e", 0, None).unwrap();
        assert_eq!(r.exit_rate(NUM_EXITS - 1), 1.0);
        assert!(exit_partition_holds(&r));
        let expect = all_empty.cost.backbone_total as f64
            + all_empty.cost.branch_flops.iter().sum::<f64>();
        assert!((r.mean_flops - expect).abs() < 1e-9);

        let all_open =
            bundle_with(ExitRangeTable::uniform(NUM_TAPS, 3, Interval { lo: 0.0, hi: 1.0 }));
        let r = evaluate(&all_open, &samples, [true; NUM_TAPS], "o", 0, None).unwrap();
        assert_eq!(r.exit_rate(0), 1.0);
        assert!(exit_partition_holds(&r));
    }

    #[test]
    fn report_matches_manual_aggregation() {
        let samples = toy_samples(20);
        let bundle =
            bundle_with(ExitRangeTable::uniform(NUM_TAPS, 3, Interval { lo: 0.0, hi: 1.0 }));
        let r = evaluate(&bundle, &samples, [true; NUM_TAPS], "m", 0, None).unwrap();
        // Constant forests vote class 1: accuracy = fraction of label 1.
        let ones = samples.iter().filter(|s| s.label == 1).count();
        assert!((r.accuracy - ones as f64 / 20.0).abs() < 1e-12);
        let per_sample = bundle.cost.tap_prefix[0] as f64 + bundle.cost.branch_flops[0];
        assert!((r.mean_flops - per_sample).abs() < 1e-9);
        assert_eq!(r.exit_counts, [20, 0, 0, 0, 0]);
        // Per-category counts partition the samples.
        for cat in &r.per_category {
            assert_eq!(cat.exit_counts.iter().sum::<usize>(), cat.samples);
        }
    }

    #[test]
    fn median_is_permutation_invariant() {
        let mk = |acc: f64| EvalReport {
            name: String::new(),
            seed: 0,
            tolerance: 0.0,
            snr_db: None,
            samples: 1,
            accuracy: acc,
            backbone_accuracy: acc,
            mean_flops: acc * 10.0,
            backbone_total_flops: 1.0,
            exit_counts: [1, 0, 0, 0, 0],
            per_category: Vec::new(),
        };
        let a = summarize_runs(&[mk(0.2), mk(0.9), mk(0.5)]);
        let b = summarize_runs(&[mk(0.9), mk(0.5), mk(0.2)]);
        assert_eq!(a, b);
        assert_eq!(a.median_accuracy, 0.5);
        // Even count: mean of middles.
        let c = summarize_runs(&[mk(0.2), mk(0.4), mk(0.8), mk(0.6)]);
        assert!((c.median_accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_run_median_equals_report() {
        let mk = EvalReport {
            name: "x".into(),
            seed: 1,
            tolerance: 0.05,
            snr_db: None,
            samples: 4,
            accuracy: 0.75,
            backbone_accuracy: 0.5,
            mean_flops: 123.0,
            backbone_total_flops: 1000.0,
            exit_counts: [1, 1, 1, 0, 1],
            per_category: Vec::new(),
        };
        let s = summarize_runs(std::slice::from_ref(&mk));
        assert_eq!(s.median_accuracy, 0.75);
        assert_eq!(s.median_mean_flops, 123.0);
        assert_eq!(s.median_overall_exit_rate, 0.75);
    }
}
