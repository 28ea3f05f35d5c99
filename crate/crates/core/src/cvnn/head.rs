//! Model head: global average pooling, the real fully-connected
//! classifier, and softmax cross-entropy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::ParamTensor;
use super::tensor::ComplexTensor;
use super::CvnnError;

/// Pools each channel's planes to their spatial means and concatenates
/// real then imaginary halves: output row = [re means | im means],
/// length 2C per sample.
pub fn global_avg_pool(x: &ComplexTensor) -> Vec<f64> {
    let (b, c, hw) = (x.batch(), x.channels(), x.height() * x.width());
    let inv = 1.0 / hw as f64;
    let mut out = vec![0.0; b * 2 * c];
    for s in 0..b {
        let (re, im) = x.sample(s);
        let row = &mut out[s * 2 * c..(s + 1) * 2 * c];
        for ch in 0..c {
            let mut acc = 0.0;
            for &v in &re[ch * hw..(ch + 1) * hw] {
                acc += v;
            }
            row[ch] = acc * inv;
            let mut acc = 0.0;
            for &v in &im[ch * hw..(ch + 1) * hw] {
                acc += v;
            }
            row[c + ch] = acc * inv;
        }
    }
    out
}

/// Distributes pooled gradients back over the spatial positions.
pub fn global_avg_pool_backward(shape: [usize; 4], grad: &[f64]) -> ComplexTensor {
    let (b, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
    debug_assert_eq!(grad.len(), b * 2 * c);
    let inv = 1.0 / hw as f64;
    let mut out = ComplexTensor::zeros(shape);
    for s in 0..b {
        let row = &grad[s * 2 * c..(s + 1) * 2 * c];
        let base = s * c * hw;
        for ch in 0..c {
            let gr = row[ch] * inv;
            let gi = row[c + ch] * inv;
            for k in base + ch * hw..base + (ch + 1) * hw {
                out.re[k] = gr;
                out.im[k] = gi;
            }
        }
    }
    out
}

/// Real fully-connected layer, weights `[out_dim x in_dim]` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub w: ParamTensor,
    pub bias: ParamTensor,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl FcLayer {
    pub fn init(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        Self { w: ParamTensor::new(w), bias: ParamTensor::new(vec![0.0; out_dim]), in_dim, out_dim }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, CvnnError> {
        if x.len() % self.in_dim != 0 {
            return Err(CvnnError::ShapeMismatch(format!(
                "fc expects multiples of {} inputs, got {}",
                self.in_dim,
                x.len()
            )));
        }
        let batch = x.len() / self.in_dim;
        let mut out = vec![0.0; batch * self.out_dim];
        for s in 0..batch {
            let xi = &x[s * self.in_dim..(s + 1) * self.in_dim];
            let oi = &mut out[s * self.out_dim..(s + 1) * self.out_dim];
            for o in 0..self.out_dim {
                let row = &self.w.w[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.bias.w[o];
                for j in 0..self.in_dim {
                    acc += row[j] * xi[j];
                }
                oi[o] = acc;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &[f64], grad_out: &[f64]) -> Vec<f64> {
        let batch = x.len() / self.in_dim;
        debug_assert_eq!(grad_out.len(), batch * self.out_dim);
        let mut grad_in = vec![0.0; x.len()];
        for s in 0..batch {
            let xi = &x[s * self.in_dim..(s + 1) * self.in_dim];
            let gi = &grad_out[s * self.out_dim..(s + 1) * self.out_dim];
            let di = &mut grad_in[s * self.in_dim..(s + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let g = gi[o];
                self.bias.g[o] += g;
                let wrow = &self.w.w[o * self.in_dim..(o + 1) * self.in_dim];
                let grow = &mut self.w.g[o * self.in_dim..(o + 1) * self.in_dim];
                for j in 0..self.in_dim {
                    grow[j] += g * xi[j];
                    di[j] += g * wrow[j];
                }
            }
        }
        grad_in
    }
}

/// Row-wise softmax with max-shift stabilization.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, orow) in logits.chunks(classes).zip(out.chunks_mut(classes)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - m).exp();
            z += *o;
        }
        for o in orow.iter_mut() {
            *o /= z;
        }
    }
    out
}

/// Mean softmax cross-entropy over the batch and its logit gradient
/// `(softmax - onehot) / batch`.
pub fn softmax_ce(
    logits: &[f64],
    labels: &[usize],
    classes: usize,
) -> Result<(f64, Vec<f64>), CvnnError> {
    let batch = labels.len();
    if logits.len() != batch * classes {
        return Err(CvnnError::ShapeMismatch(format!(
            "{} logits for {batch} samples x {classes} classes",
            logits.len()
        )));
    }
    let probs = softmax_rows(logits, classes);
    let mut loss = 0.0;
    let mut grad = probs;
    for (s, &y) in labels.iter().enumerate() {
        let p = grad[s * classes + y];
        loss -= p.max(1e-300).ln();
        grad[s * classes + y] -= 1.0;
    }
    let inv_b = 1.0 / batch as f64;
    for g in grad.iter_mut() {
        *g *= inv_b;
    }
    Ok((loss * inv_b, grad))
}
