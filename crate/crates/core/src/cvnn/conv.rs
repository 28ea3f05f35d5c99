//! Complex-valued convolution.
//!
//! A complex kernel W = A + iB applied to input r = p + iq produces
//! Re(v) = A*p - B*q and Im(v) = B*p + A*q, with * the real
//! cross-correlation. The layer realizes that structured form with two
//! real GEMMs per sample over stacked [p; q] column matrices, which is
//! exactly four real MACs per complex MAC.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::ParamTensor;
use super::tensor::{
    col2im_plane, gemm_bt, gemm_rm, im2col_plane, ComplexTensor, PatchSpec,
};
use super::CvnnError;

/// Samples handled per parallel work item; fixed so that reductions are
/// summed in a machine-independent order.
pub(crate) const BATCH_CHUNK: usize = 8;

/// Complex convolution layer; `a` and `b` hold the real and imaginary
/// kernel parts, each `[c_out, c_in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CconvLayer {
    pub a: ParamTensor,
    pub b: ParamTensor,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl CconvLayer {
    /// Complex-aware scaled-uniform init: the kernel's total complex
    /// variance is split evenly between A and B, scaled for ReLU fan-in.
    pub fn init(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        seed: u64,
    ) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let limit = (3.0 / fan_in).sqrt();
        let n = c_out * c_in * k * k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |_: usize| rng.random_range(-limit..limit);
        let a: Vec<f64> = (0..n).map(&mut draw).collect();
        let b: Vec<f64> = (0..n).map(&mut draw).collect();
        Self { a: ParamTensor::new(a), b: ParamTensor::new(b), c_in, c_out, k, stride, pad }
    }

    pub fn spec(&self, h_in: usize, w_in: usize) -> PatchSpec {
        PatchSpec::new(self.c_in, h_in, w_in, self.k, self.stride, self.pad)
    }

    /// Builds the stacked weight matrices
    /// `w_re = [A | -B]`, `w_im = [B | A]`, each `c_out x 2K`.
    fn stacked_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let kk = self.c_in * self.k * self.k;
        let mut w_re = vec![0.0; self.c_out * 2 * kk];
        let mut w_im = vec![0.0; self.c_out * 2 * kk];
        for o in 0..self.c_out {
            let src = &self.a.w[o * kk..(o + 1) * kk];
            w_re[o * 2 * kk..o * 2 * kk + kk].copy_from_slice(src);
            w_im[o * 2 * kk + kk..(o + 1) * 2 * kk].copy_from_slice(src);
            let src = &self.b.w[o * kk..(o + 1) * kk];
            for (j, &v) in src.iter().enumerate() {
                w_re[o * 2 * kk + kk + j] = -v;
                w_im[o * 2 * kk + j] = v;
            }
        }
        (w_re, w_im)
    }

    pub fn out_shape(&self, x: &ComplexTensor) -> [usize; 4] {
        let spec = self.spec(x.height(), x.width());
        [x.batch(), self.c_out, spec.h_out, spec.w_out]
    }

    pub fn check_input(&self, x: &ComplexTensor) -> Result<(), CvnnError> {
        if x.channels() != self.c_in {
            return Err(CvnnError::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.c_in,
                x.channels()
            )));
        }
        let spec = self.spec(x.height(), x.width());
        if x.height() + 2 * self.pad < self.k || x.width() + 2 * self.pad < self.k {
            return Err(CvnnError::ShapeMismatch(format!(
                "spatial dims {}x{} too small for kernel {}",
                x.height(),
                x.width(),
                self.k
            )));
        }
        if spec.h_out == 0 || spec.w_out == 0 {
            return Err(CvnnError::ShapeMismatch("empty convolution output".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor, CvnnError> {
        self.check_input(x)?;
        let spec = self.spec(x.height(), x.width());
        let hw = spec.out_positions();
        let kk = spec.col_rows();
        let (w_re, w_im) = self.stacked_weights();
        let mut out = ComplexTensor::zeros(self.out_shape(x));
        let out_n = out.sample_len();
        let in_n = x.sample_len();

        let out_re_chunks = out.re.par_chunks_mut(out_n * BATCH_CHUNK);
        let out_im_chunks = out.im.par_chunks_mut(out_n * BATCH_CHUNK);
        let in_re_chunks = x.re.par_chunks(in_n * BATCH_CHUNK);
        let in_im_chunks = x.im.par_chunks(in_n * BATCH_CHUNK);
        out_re_chunks
            .zip(out_im_chunks)
            .zip(in_re_chunks.zip(in_im_chunks))
            .for_each(|((ore, oim), (ire, iim))| {
                let mut cols = vec![0.0; 2 * kk * hw];
                let samples = ire.len() / in_n;
                for s in 0..samples {
                    let (p, q) = (&ire[s * in_n..(s + 1) * in_n], &iim[s * in_n..(s + 1) * in_n]);
                    im2col_plane(&spec, p, &mut cols[..kk * hw]);
                    im2col_plane(&spec, q, &mut cols[kk * hw..]);
                    gemm_rm(
                        self.c_out,
                        2 * kk,
                        hw,
                        1.0,
                        &w_re,
                        &cols,
                        0.0,
                        &mut ore[s * out_n..(s + 1) * out_n],
                    );
                    gemm_rm(
                        self.c_out,
                        2 * kk,
                        hw,
                        1.0,
                        &w_im,
                        &cols,
                        0.0,
                        &mut oim[s * out_n..(s + 1) * out_n],
                    );
                }
            });
        Ok(out)
    }

    /// Backward pass: writes parameter gradients (accumulating into `g`)
    /// and returns the input gradient.
    pub fn backward(
        &mut self,
        x: &ComplexTensor,
        grad_out: &ComplexTensor,
    ) -> Result<ComplexTensor, CvnnError> {
        let spec = self.spec(x.height(), x.width());
        let hw = spec.out_positions();
        let kk = spec.col_rows();
        let (w_re, w_im) = self.stacked_weights();
        let in_n = x.sample_len();
        let out_n = grad_out.sample_len();
        let mut grad_in = ComplexTensor::zeros(x.shape);

        // Input gradient: grad_cols = w_re^T g_re + w_im^T g_im, then fold.
        // Parallel over sample chunks; outputs are disjoint.
        let gi_re = grad_in.re.par_chunks_mut(in_n * BATCH_CHUNK);
        let gi_im = grad_in.im.par_chunks_mut(in_n * BATCH_CHUNK);
        let go_re = grad_out.re.par_chunks(out_n * BATCH_CHUNK);
        let go_im = grad_out.im.par_chunks(out_n * BATCH_CHUNK);
        gi_re.zip(gi_im).zip(go_re.zip(go_im)).for_each(|((ire, iim), (ore, oim))| {
            let mut grad_cols = vec![0.0; 2 * kk * hw];
            let samples = ire.len() / in_n;
            for s in 0..samples {
                // (2K x hw) = (c_out x 2K)^T * (c_out x hw), accumulated
                // over the re and im output planes.
                super::tensor::gemm_at(
                    2 * kk,
                    self.c_out,
                    hw,
                    1.0,
                    &w_re,
                    &ore[s * out_n..(s + 1) * out_n],
                    0.0,
                    &mut grad_cols,
                );
                super::tensor::gemm_at(
                    2 * kk,
                    self.c_out,
                    hw,
                    1.0,
                    &w_im,
                    &oim[s * out_n..(s + 1) * out_n],
                    1.0,
                    &mut grad_cols,
                );
                col2im_plane(&spec, &grad_cols[..kk * hw], &mut ire[s * in_n..(s + 1) * in_n]);
                col2im_plane(&spec, &grad_cols[kk * hw..], &mut iim[s * in_n..(s + 1) * in_n]);
            }
        });

        // Weight gradient: per fixed-size chunk partials, then an ordered
        // sequential sum so the reduction order never depends on the
        // thread schedule.
        let batch = x.batch();
        let chunk_count = batch.div_ceil(BATCH_CHUNK);
        let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..chunk_count)
            .into_par_iter()
            .map(|ci| {
                let s0 = ci * BATCH_CHUNK;
                let s1 = (s0 + BATCH_CHUNK).min(batch);
                let mut cols = vec![0.0; 2 * kk * hw];
                let mut dw_re = vec![0.0; self.c_out * 2 * kk];
                let mut dw_im = vec![0.0; self.c_out * 2 * kk];
                for s in s0..s1 {
                    let (p, q) = x.sample(s);
                    im2col_plane(&spec, p, &mut cols[..kk * hw]);
                    im2col_plane(&spec, q, &mut cols[kk * hw..]);
                    // (c_out x 2K) += (c_out x hw) * (2K x hw)^T
                    gemm_bt(
                        self.c_out,
                        hw,
                        2 * kk,
                        1.0,
                        &grad_out.re[s * out_n..(s + 1) * out_n],
                        &cols,
                        1.0,
                        &mut dw_re,
                    );
                    gemm_bt(
                        self.c_out,
                        hw,
                        2 * kk,
                        1.0,
                        &grad_out.im[s * out_n..(s + 1) * out_n],
                        &cols,
                        1.0,
                        &mut dw_im,
                    );
                }
                (dw_re, dw_im)
            })
            .collect();

        // Untie the stacked layout: w_re = [A | -B], w_im = [B | A].
        for (dw_re, dw_im) in &partials {
            for o in 0..self.c_out {
                let base = o * 2 * kk;
                let pa = &mut self.a.g[o * kk..(o + 1) * kk];
                for j in 0..kk {
                    pa[j] += dw_re[base + j] + dw_im[base + kk + j];
                }
                let pb = &mut self.b.g[o * kk..(o + 1) * kk];
                for j in 0..kk {
                    pb[j] += dw_im[base + j] - dw_re[base + kk + j];
                }
            }
        }
        Ok(grad_in)
    }
}
