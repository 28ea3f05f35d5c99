//! Throwaway end-to-end probe of the desk experiment.
use exrf_core::cvnn::{AdamConfig, TrainConfig};
use exrf_core::eval::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let segments: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(15);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10);
    let stop: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.995);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(42);
    let spec = ExperimentSpec {
        segments,
        train: TrainConfig {
            adam: AdamConfig { learning_rate: 3e-3, ..Default::default() },
            epochs,
            batch_size: 64,
            seed: 0,
            early_stop_val_acc: if stop > 0.0 { Some(stop) } else { None },
        },
        ..Default::default()
    };
    let t0 = Instant::now();
    let run = run_experiment(&spec, seed).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let m = run.train_outcome.metrics.last().unwrap();
    println!("S={segments} epochs_run={} time={dt:.0}s last(loss {:.3} train {:.3} val {:.3})",
        run.train_outcome.metrics.len(), m.train_loss, m.train_accuracy, m.val_accuracy);
    let oob: Vec<String> = run.branches.iter().map(|b| format!("{:.3}", b.oob_accuracy.unwrap())).collect();
    let r = &run.report;
    println!("  branch oob [{}]  hybrid {:.4} backbone {:.4} gap {:+.4}", oob.join(" "),
        r.accuracy, r.backbone_accuracy, r.accuracy - r.backbone_accuracy);
    println!("  flops {:.2}M ({:.1}%)  exits {:?} rate {:.3}", r.mean_flops/1e6,
        100.0*r.mean_flops/r.backbone_total_flops, r.exit_counts, r.overall_exit_rate());
}
