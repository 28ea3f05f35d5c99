//! Throwaway throughput probe for desk-scale training.
use exrf_core::cvnn::*;
use std::time::Instant;

fn main() {
    let cfg = ModelConfig::default(); // 10 classes, 32x31, width/4, stem stride 2
    let mut model = CvnnModel::init(cfg).unwrap();
    println!("params: {}", model.num_parameters());
    let r = count_flops(&model);
    println!("forward MFLOPs/sample: {:.2}; real twin {:.2}; ratio {:.3}",
        r.total as f64 / 1e6, r.real_twin_total as f64 / 1e6,
        r.total as f64 / r.real_twin_total as f64);
    println!("tap prefixes MFLOPs: {:?}", r.tap_prefix.iter().map(|p| *p as f64/1e6).collect::<Vec<_>>());

    let b = 64;
    let n = b * 32 * 31;
    let x = ComplexTensor::from_parts(
        (0..n).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect(),
        (0..n).map(|i| ((i * 53 % 97) as f64 / 48.0) - 1.0).collect(),
        [b, 1, 32, 31],
    );
    let labels: Vec<usize> = (0..b).map(|i| i % 10).collect();

    // Warmup + timed: one forward+backward+step
    let t0 = Instant::now();
    let iters = 12;
    for _ in 0..iters {
        model.zero_grads();
        let cache = model.forward_train(x.clone()).unwrap();
        let _ = model.backward(&cache, &labels).unwrap();
        model.adam_step(&AdamConfig::default()).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    println!("train step (batch {b}): {:.3} s  -> epoch of 720 samples ~ {:.2} s", dt, dt * 720.0 / b as f64);

    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = model.infer_logits(&x).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    println!("infer batch {b}: {:.3} s -> {:.4} s/sample", dt, dt / b as f64);
}
