//! Complex batch normalization and split-plane ReLU.
//!
//! CBN whitens each channel's (Re, Im) pairs by the inverse square root
//! of their 2x2 covariance (epsilon-regularized), then applies a
//! learnable 2x2 symmetric scale and a complex shift. The backward pass
//! differentiates through the whitening matrix itself via the Sylvester
//! adjoint in the covariance eigenbasis, so finite-difference checks
//! pass at full precision.

use rayon::prelude::*;

use super::adam::ParamTensor;
use super::tensor::ComplexTensor;
use super::CvnnError;

/// Symmetric 2x2 matrix over (Re, Im) space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub rr: f64,
    pub ri: f64,
    pub ii: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { rr: 1.0, ri: 0.0, ii: 1.0 };

    /// Closed-form inverse square root of a positive-definite matrix:
    /// with s = sqrt(det M) and t = sqrt(tr M + 2s),
    /// M^(-1/2) = [[ii + s, -ri], [-ri, rr + s]] / (s * t).
    pub fn inv_sqrt(self) -> Sym2 {
        let det = self.rr * self.ii - self.ri * self.ri;
        let s = det.sqrt();
        let t = (self.rr + self.ii + 2.0 * s).sqrt();
        let denom = s * t;
        Sym2 { rr: (self.ii + s) / denom, ri: -self.ri / denom, ii: (self.rr + s) / denom }
    }

    #[inline]
    pub fn mul_vec(self, re: f64, im: f64) -> (f64, f64) {
        (self.rr * re + self.ri * im, self.ri * re + self.ii * im)
    }

    /// Eigen rotation (cos, sin) and eigenvalues so that
    /// R^T M R = diag(l1, l2) with R = [[c, -s], [s, c]].
    pub fn eig(self) -> (f64, f64, f64, f64) {
        let theta = 0.5 * (2.0 * self.ri).atan2(self.rr - self.ii);
        let (s, c) = theta.sin_cos();
        let l1 = c * c * self.rr + 2.0 * c * s * self.ri + s * s * self.ii;
        let l2 = s * s * self.rr - 2.0 * c * s * self.ri + c * c * self.ii;
        (c, s, l1, l2)
    }

    /// R^T M R for the rotation returned by [`Sym2::eig`].
    fn rot_fwd(self, c: f64, s: f64) -> Sym2 {
        Sym2 {
            rr: c * c * self.rr + 2.0 * c * s * self.ri + s * s * self.ii,
            ri: c * s * (self.ii - self.rr) + (c * c - s * s) * self.ri,
            ii: s * s * self.rr - 2.0 * c * s * self.ri + c * c * self.ii,
        }
    }

    /// R M R^T, the inverse of [`Sym2::rot_fwd`].
    fn rot_bwd(self, c: f64, s: f64) -> Sym2 {
        Sym2 {
            rr: c * c * self.rr - 2.0 * c * s * self.ri + s * s * self.ii,
            ri: c * s * (self.rr - self.ii) + (c * c - s * s) * self.ri,
            ii: s * s * self.rr + 2.0 * c * s * self.ri + c * c * self.ii,
        }
    }
}

/// Per-channel batch statistics cached for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<(f64, f64)>,
    pub whiten: Vec<Sym2>,
}

/// Complex batch normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CbnLayer {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    /// Learnable 2x2 symmetric scale, layout [c * 3 + (rr, ri, ii)].
    pub gamma: ParamTensor,
    /// Learnable complex shift, layout [c * 2 + (re, im)].
    pub beta: ParamTensor,
    /// Running mean, layout [c * 2 + (re, im)].
    pub running_mean: Vec<f64>,
    /// Running covariance, layout [c * 3 + (rr, ri, ii)].
    pub running_cov: Vec<f64>,
}

impl CbnLayer {
    /// Unit-power init: gamma = I / sqrt(2), beta = 0, running cov = I/2.
    pub fn init(channels: usize, eps: f64, momentum: f64) -> Self {
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        let mut gamma = vec![0.0; channels * 3];
        let mut running_cov = vec![0.0; channels * 3];
        for c in 0..channels {
            gamma[c * 3] = inv_sqrt2;
            gamma[c * 3 + 2] = inv_sqrt2;
            running_cov[c * 3] = 0.5;
            running_cov[c * 3 + 2] = 0.5;
        }
        Self {
            channels,
            eps,
            momentum,
            gamma: ParamTensor::new(gamma),
            beta: ParamTensor::new(vec![0.0; channels * 2]),
            running_mean: vec![0.0; channels * 2],
            running_cov,
        }
    }

    /// Sets gamma to the identity (used when the raw whitened output is
    /// wanted, e.g. covariance checks).
    pub fn set_identity_gamma(&mut self) {
        for c in 0..self.channels {
            self.gamma.w[c * 3] = 1.0;
            self.gamma.w[c * 3 + 1] = 0.0;
            self.gamma.w[c * 3 + 2] = 1.0;
        }
    }

    fn check(&self, x: &ComplexTensor) -> Result<(), CvnnError> {
        if x.channels() != self.channels {
            return Err(CvnnError::ShapeMismatch(format!(
                "cbn expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// Per-channel raw batch statistics over batch x spatial population.
    fn batch_stats(&self, x: &ComplexTensor) -> (Vec<(f64, f64)>, Vec<Sym2>) {
        let (b, c, hw) = (x.batch(), self.channels, x.height() * x.width());
        let n = (b * hw) as f64;
        let sample_len = x.sample_len();
        let stats: Vec<((f64, f64), Sym2)> = (0..c)
            .into_par_iter()
            .map(|ch| {
                let (mut sr, mut si) = (0.0, 0.0);
                let (mut srr, mut sri, mut sii) = (0.0, 0.0, 0.0);
                for s in 0..b {
                    let base = s * sample_len + ch * hw;
                    let re = &x.re[base..base + hw];
                    let im = &x.im[base..base + hw];
                    for k in 0..hw {
                        let (r, i) = (re[k], im[k]);
                        sr += r;
                        si += i;
                        srr += r * r;
                        sri += r * i;
                        sii += i * i;
                    }
                }
                let (mr, mi) = (sr / n, si / n);
                let cov = Sym2 {
                    rr: srr / n - mr * mr,
                    ri: sri / n - mr * mi,
                    ii: sii / n - mi * mi,
                };
                ((mr, mi), cov)
            })
            .collect();
        let mean = stats.iter().map(|s| s.0).collect();
        let cov = stats.iter().map(|s| s.1).collect();
        (mean, cov)
    }

    fn apply(
        &self,
        x: &ComplexTensor,
        mean: &[(f64, f64)],
        whiten: &[Sym2],
    ) -> ComplexTensor {
        let (c, hw) = (self.channels, x.height() * x.width());
        let sample_len = x.sample_len();
        let mut out = ComplexTensor::zeros(x.shape);
        out.re
            .par_chunks_mut(sample_len)
            .zip(out.im.par_chunks_mut(sample_len))
            .zip(x.re.par_chunks(sample_len).zip(x.im.par_chunks(sample_len)))
            .for_each(|((ore, oim), (ire, iim))| {
                for ch in 0..c {
                    let (mr, mi) = mean[ch];
                    let w = whiten[ch];
                    let g = Sym2 {
                        rr: self.gamma.w[ch * 3],
                        ri: self.gamma.w[ch * 3 + 1],
                        ii: self.gamma.w[ch * 3 + 2],
                    };
                    let (br, bi) = (self.beta.w[ch * 2], self.beta.w[ch * 2 + 1]);
                    for k in ch * hw..(ch + 1) * hw {
                        let (zr, zi) = w.mul_vec(ire[k] - mr, iim[k] - mi);
                        let (yr, yi) = g.mul_vec(zr, zi);
                        ore[k] = yr + br;
                        oim[k] = yi + bi;
                    }
                }
            });
        out
    }

    /// Training-mode forward: whitens with batch statistics, updates the
    /// running estimates, and returns the cache for backward.
    pub fn forward_train(
        &mut self,
        x: &ComplexTensor,
    ) -> Result<(ComplexTensor, BnCache), CvnnError> {
        self.check(x)?;
        let population = x.batch() * x.height() * x.width();
        if population < 2 {
            return Err(CvnnError::ShapeMismatch(format!(
                "cbn train mode needs population >= 2 per channel, got {population}"
            )));
        }
        let (mean, cov) = self.batch_stats(x);
        let whiten: Vec<Sym2> = cov
            .iter()
            .map(|v| Sym2 { rr: v.rr + self.eps, ri: v.ri, ii: v.ii + self.eps }.inv_sqrt())
            .collect();
        let m = self.momentum;
        for ch in 0..self.channels {
            self.running_mean[ch * 2] = (1.0 - m) * self.running_mean[ch * 2] + m * mean[ch].0;
            self.running_mean[ch * 2 + 1] =
                (1.0 - m) * self.running_mean[ch * 2 + 1] + m * mean[ch].1;
            self.running_cov[ch * 3] = (1.0 - m) * self.running_cov[ch * 3] + m * cov[ch].rr;
            self.running_cov[ch * 3 + 1] =
                (1.0 - m) * self.running_cov[ch * 3 + 1] + m * cov[ch].ri;
            self.running_cov[ch * 3 + 2] =
                (1.0 - m) * self.running_cov[ch * 3 + 2] + m * cov[ch].ii;
        }
        let out = self.apply(x, &mean, &whiten);
        Ok((out, BnCache { mean, whiten }))
    }

    /// Inference-mode forward using running statistics.
    pub fn forward_infer(&self, x: &ComplexTensor) -> Result<ComplexTensor, CvnnError> {
        self.check(x)?;
        let mean: Vec<(f64, f64)> = (0..self.channels)
            .map(|ch| (self.running_mean[ch * 2], self.running_mean[ch * 2 + 1]))
            .collect();
        let whiten: Vec<Sym2> = (0..self.channels)
            .map(|ch| {
                Sym2 {
                    rr: self.running_cov[ch * 3] + self.eps,
                    ri: self.running_cov[ch * 3 + 1],
                    ii: self.running_cov[ch * 3 + 2] + self.eps,
                }
                .inv_sqrt()
            })
            .collect();
        Ok(self.apply(x, &mean, &whiten))
    }

    /// Backward through scale/shift, whitening, covariance, and mean.
    ///
    /// Per channel with y = x - mu, z = W y, out = Gamma z + beta and
    /// upstream g: P = sum(Gamma g) y^T; in W's eigenbasis the Sylvester
    /// adjoint gives Q = -W^2 sym(P)/(li+lj) W^2, and
    /// dy = W Gamma g + (2/N) Q y, dx = dy - mean(dy).
    pub fn backward(
        &mut self,
        x: &ComplexTensor,
        cache: &BnCache,
        grad_out: &ComplexTensor,
    ) -> Result<ComplexTensor, CvnnError> {
        self.check(x)?;
        let (b, c, hw) = (x.batch(), self.channels, x.height() * x.width());
        let n = (b * hw) as f64;
        let sample_len = x.sample_len();
        let mut grad_in = ComplexTensor::zeros(x.shape);

        struct ChannelGrads {
            dgamma: [f64; 3],
            dbeta: [f64; 2],
        }

        // Channels are independent; each works on its own strided slice
        // of grad_in through raw pointers over disjoint index sets.
        let grads: Vec<ChannelGrads> = {
            let gi_re_ptr = SendPtr(grad_in.re.as_mut_ptr());
            let gi_im_ptr = SendPtr(grad_in.im.as_mut_ptr());
            (0..c)
                .into_par_iter()
                .map(|ch| {
                    let (mr, mi) = cache.mean[ch];
                    let w = cache.whiten[ch];
                    let gmat = Sym2 {
                        rr: self.gamma.w[ch * 3],
                        ri: self.gamma.w[ch * 3 + 1],
                        ii: self.gamma.w[ch * 3 + 2],
                    };

                    // Pass 1: reductions for dbeta, dgamma, P.
                    let (mut dbr, mut dbi) = (0.0, 0.0);
                    let (mut dg_rr, mut dg_ri, mut dg_ii) = (0.0, 0.0, 0.0);
                    let (mut p_rr, mut p_ri, mut p_ir, mut p_ii) = (0.0, 0.0, 0.0, 0.0);
                    for s in 0..b {
                        let base = s * sample_len + ch * hw;
                        for k in base..base + hw {
                            let (yr, yi) = (x.re[k] - mr, x.im[k] - mi);
                            let (zr, zi) = w.mul_vec(yr, yi);
                            let (gr, gi) = (grad_out.re[k], grad_out.im[k]);
                            dbr += gr;
                            dbi += gi;
                            dg_rr += gr * zr;
                            dg_ii += gi * zi;
                            dg_ri += gr * zi + gi * zr;
                            let (cr, ci) = gmat.mul_vec(gr, gi);
                            p_rr += cr * yr;
                            p_ri += cr * yi;
                            p_ir += ci * yr;
                            p_ii += ci * yi;
                        }
                    }

                    // Sylvester adjoint in W's eigenbasis.
                    let (ec, es, l1, l2) = w.eig();
                    let symp =
                        Sym2 { rr: p_rr, ri: 0.5 * (p_ri + p_ir), ii: p_ii }.rot_fwd(ec, es);
                    let ktil = Sym2 {
                        rr: symp.rr / (2.0 * l1),
                        ri: symp.ri / (l1 + l2),
                        ii: symp.ii / (2.0 * l2),
                    };
                    let qtil = Sym2 {
                        rr: -l1 * l1 * ktil.rr * l1 * l1,
                        ri: -l1 * l1 * ktil.ri * l2 * l2,
                        ii: -l2 * l2 * ktil.ii * l2 * l2,
                    };
                    let q = qtil.rot_bwd(ec, es);

                    // Pass 2: dy = W Gamma g + (2/N) Q y, then center.
                    let (mut sum_dr, mut sum_di) = (0.0, 0.0);
                    let two_over_n = 2.0 / n;
                    unsafe {
                        let gre = gi_re_ptr.get();
                        let gim = gi_im_ptr.get();
                        for s in 0..b {
                            let base = s * sample_len + ch * hw;
                            for k in base..base + hw {
                                let (yr, yi) = (x.re[k] - mr, x.im[k] - mi);
                                let (cr, ci) =
                                    gmat.mul_vec(grad_out.re[k], grad_out.im[k]);
                                let (ar, ai) = w.mul_vec(cr, ci);
                                let (qr, qi) = q.mul_vec(yr, yi);
                                let dr = ar + two_over_n * qr;
                                let di = ai + two_over_n * qi;
                                *gre.add(k) = dr;
                                *gim.add(k) = di;
                                sum_dr += dr;
                                sum_di += di;
                            }
                        }
                        let (mdr, mdi) = (sum_dr / n, sum_di / n);
                        for s in 0..b {
                            let base = s * sample_len + ch * hw;
                            for k in base..base + hw {
                                *gre.add(k) -= mdr;
                                *gim.add(k) -= mdi;
                            }
                        }
                    }

                    ChannelGrads { dgamma: [dg_rr, dg_ri, dg_ii], dbeta: [dbr, dbi] }
                })
                .collect()
        };

        for (ch, g) in grads.iter().enumerate() {
            self.gamma.g[ch * 3] += g.dgamma[0];
            self.gamma.g[ch * 3 + 1] += g.dgamma[1];
            self.gamma.g[ch * 3 + 2] += g.dgamma[2];
            self.beta.g[ch * 2] += g.dbeta[0];
            self.beta.g[ch * 2 + 1] += g.dbeta[1];
        }
        Ok(grad_in)
    }
}

/// Raw pointer wrapper for the per-channel disjoint writes above.
struct SendPtr(*mut f64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

impl SendPtr {
    fn get(&self) -> *mut f64 {
        self.0
    }
}

/// Split rectifier: ReLU applied independently to both planes.
pub fn crelu_forward(x: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: x.re.iter().map(|&v| v.max(0.0)).collect(),
        im: x.im.iter().map(|&v| v.max(0.0)).collect(),
        shape: x.shape,
    }
}

/// Gradient mask of [`crelu_forward`] with respect to its input.
pub fn crelu_backward(x: &ComplexTensor, grad_out: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: x
            .re
            .iter()
            .zip(&grad_out.re)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        im: x
            .im
            .iter()
            .zip(&grad_out.im)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        shape: x.shape,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], seed: u64) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        ComplexTensor::from_parts(
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            shape,
        )
    }

    /// Empirical per-channel covariance of a tensor.
    fn covariance(x: &ComplexTensor, ch: usize) -> ((f64, f64), Sym2) {
        let hw = x.height() * x.width();
        let n = (x.batch() * hw) as f64;
        let sample_len = x.sample_len();
        let (mut sr, mut si, mut srr, mut sri, mut sii) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in 0..x.batch() {
            let base = s * sample_len + ch * hw;
            for k in base..base + hw {
                sr += x.re[k];
                si += x.im[k];
                srr += x.re[k] * x.re[k];
                sri += x.re[k] * x.im[k];
                sii += x.im[k] * x.im[k];
            }
        }
        let (mr, mi) = (sr / n, si / n);
        (
            (mr, mi),
            Sym2 { rr: srr / n - mr * mr, ri: sri / n - mr * mi, ii: sii / n - mi * mi },
        )
    }

    #[test]
    fn inv_sqrt_closed_form() {
        let m = Sym2 { rr: 4.0, ri: 1.0, ii: 2.0 };
        let w = m.inv_sqrt();
        // W * M * W should be the identity.
        let wm_rr = w.rr * m.rr + w.ri * m.ri;
        let wm_ri = w.rr * m.ri + w.ri * m.ii;
        let wm_ir = w.ri * m.rr + w.ii * m.ri;
        let wm_ii = w.ri * m.ri + w.ii * m.ii;
        let i_rr = wm_rr * w.rr + wm_ri * w.ri;
        let i_ri = wm_rr * w.ri + wm_ri * w.ii;
        let i_ii = wm_ir * w.ri + wm_ii * w.ii;
        assert!((i_rr - 1.0).abs() < 1e-12);
        assert!(i_ri.abs() < 1e-12);
        assert!((i_ii - 1.0).abs() < 1e-12);
    }

    #[test]
    fn whitening_makes_covariance_identity() {
        // Correlated, non-degenerate input: whitened (pre-gamma/beta)
        // covariance must be I within 1e-3 (epsilon-limited).
        let mut x = random_tensor([4, 3, 8, 8], 5);
        for k in 0..x.len() {
            x.im[k] = 0.8 * x.re[k] + 0.6 * x.im[k] + 0.2;
        }
        let mut bn = CbnLayer::init(3, 1e-5, 0.1);
        bn.set_identity_gamma();
        let (out, _) = bn.forward_train(&x).unwrap();
        for ch in 0..3 {
            let ((mr, mi), cov) = covariance(&out, ch);
            assert!(mr.abs() < 1e-9 && mi.abs() < 1e-9);
            assert!((cov.rr - 1.0).abs() < 1e-3, "ch {ch}: rr {}", cov.rr);
            assert!((cov.ii - 1.0).abs() < 1e-3, "ch {ch}: ii {}", cov.ii);
            assert!(cov.ri.abs() < 1e-3, "ch {ch}: ri {}", cov.ri);
        }
    }

    #[test]
    fn fully_correlated_input_collapses_to_projector() {
        // With Im == Re the covariance is rank one; whitening cannot
        // manufacture a second direction, so the whitened covariance is
        // the projector [[1/2, 1/2], [1/2, 1/2]] (epsilon-limited), not
        // the identity. The regularized contract W (V + eps I) W = I
        // still holds exactly.
        let mut x = random_tensor([4, 2, 8, 8], 6);
        x.im.copy_from_slice(&x.re);
        let mut bn = CbnLayer::init(2, 1e-5, 0.1);
        bn.set_identity_gamma();
        let (out, cache) = bn.forward_train(&x).unwrap();
        for ch in 0..2 {
            let (_, cov) = covariance(&out, ch);
            assert!((cov.rr - 0.5).abs() < 2e-3, "rr {}", cov.rr);
            assert!((cov.ii - 0.5).abs() < 2e-3, "ii {}", cov.ii);
            assert!((cov.ri - 0.5).abs() < 2e-3, "ri {}", cov.ri);
            // Regularized contract.
            let (_, raw) = covariance(&x, ch);
            let v = Sym2 { rr: raw.rr + 1e-5, ri: raw.ri, ii: raw.ii + 1e-5 };
            let w = cache.whiten[ch];
            let (a, b) = (w.mul_vec(v.rr, v.ri), w.mul_vec(v.ri, v.ii));
            let id = (
                w.rr * a.0 + w.ri * b.0,
                w.rr * a.1 + w.ri * b.1,
                w.ri * a.1 + w.ii * b.1,
            );
            assert!((id.0 - 1.0).abs() < 1e-9 && id.1.abs() < 1e-9 && (id.2 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn already_white_input_is_fixed_point() {
        // Whiten once with a tiny epsilon, feed the result back in: the
        // second application must reproduce its input to 1e-6.
        let x = random_tensor([4, 2, 8, 8], 9);
        let mut bn = CbnLayer::init(2, 1e-9, 0.1);
        bn.set_identity_gamma();
        let (white, _) = bn.forward_train(&x).unwrap();
        let mut bn2 = CbnLayer::init(2, 1e-9, 0.1);
        bn2.set_identity_gamma();
        let (again, _) = bn2.forward_train(&white).unwrap();
        for k in 0..white.len() {
            assert!((white.re[k] - again.re[k]).abs() < 1e-6);
            assert!((white.im[k] - again.im[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn beta_shifts_output_mean() {
        let x = random_tensor([4, 2, 6, 6], 11);
        let mut bn = CbnLayer::init(2, 1e-5, 0.1);
        bn.set_identity_gamma();
        for ch in 0..2 {
            bn.beta.w[ch * 2] = 1.0;
            bn.beta.w[ch * 2 + 1] = 2.0;
        }
        let (out, _) = bn.forward_train(&x).unwrap();
        for ch in 0..2 {
            let ((mr, mi), _) = covariance(&out, ch);
            assert!((mr - 1.0).abs() < 1e-6, "mean re {mr}");
            assert!((mi - 2.0).abs() < 1e-6, "mean im {mi}");
        }
    }

    #[test]
    fn infer_mode_uses_running_stats() {
        let mut bn = CbnLayer::init(2, 1e-5, 0.5);
        let x = random_tensor([8, 2, 4, 4], 13);
        let (_, _) = bn.forward_train(&x).unwrap();
        let y = bn.forward_infer(&x).unwrap();
        // Different from train output in general but finite and shaped.
        assert_eq!(y.shape, x.shape);
        assert!(y.all_finite());
        // Batch-size invariance in infer mode.
        let one = x.slice_sample(3);
        let y_one = bn.forward_infer(&one).unwrap();
        let (full_re, full_im) = y.sample(3);
        for k in 0..y_one.len() {
            assert!((y_one.re[k] - full_re[k]).abs() < 1e-12);
            assert!((y_one.im[k] - full_im[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn crelu_examples() {
        let x = ComplexTensor::from_parts(vec![-1.0, 2.0], vec![2.0, 3.0], [1, 1, 1, 2]);
        let y = crelu_forward(&x);
        assert_eq!(y.re, vec![0.0, 2.0]);
        assert_eq!(y.im, vec![2.0, 3.0]);
        // All-positive tensor is untouched.
        let pos = ComplexTensor::from_parts(vec![1.0, 0.5], vec![0.1, 9.0], [1, 1, 1, 2]);
        assert_eq!(crelu_forward(&pos), pos);
        // Elementwise oracle on random data.
        let r = random_tensor([2, 3, 4, 4], 17);
        let y = crelu_forward(&r);
        for k in 0..r.len() {
            assert_eq!(y.re[k], r.re[k].max(0.0));
            assert_eq!(y.im[k], r.im[k].max(0.0));
        }
    }

    #[test]
    fn population_of_one_rejected_in_train() {
        let x = random_tensor([1, 2, 1, 1], 19);
        let mut bn = CbnLayer::init(2, 1e-5, 0.1);
        assert!(matches!(bn.forward_train(&x), Err(CvnnError::ShapeMismatch(_))));
    }
}
