//! The complex-valued residual backbone with branch tap points.
//!
//! Architecture: CCONV -> CReLU -> CBN stem, four groups of two complex
//! BasicBlocks (channels x1, x2, x4, x8 of the base width; groups two
//! through four enter with a stride-2 block carrying a downsample
//! residual), then global average pooling, a real FC layer over the
//! concatenated re/im means, and softmax. Taps export the feature maps
//! after the stem CBN and after the first three groups.

use crate::rfdata::Spectrogram;
use crate::seed::mix_seed;

use super::adam::{AdamConfig, ParamTensor};
use super::conv::CconvLayer;
use super::head::{global_avg_pool, global_avg_pool_backward, softmax_ce, FcLayer};
use super::norm::{crelu_backward, crelu_forward, BnCache, CbnLayer};
use super::tensor::ComplexTensor;
use super::CvnnError;

/// Number of branch tap points.
pub const NUM_TAPS: usize = 4;

/// Backbone construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub num_classes: usize,
    /// Input spectrogram dims (freq bins, hops).
    pub input_hw: (usize, usize),
    /// Channel divisor: group widths are (64, 128, 256, 512) / width_scale.
    pub width_scale: usize,
    pub stem_stride: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            input_hw: (32, 31),
            width_scale: 4,
            stem_stride: 2,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn base_channels(&self) -> usize {
        (64 / self.width_scale).max(1)
    }

    pub fn validate(&self) -> Result<(), CvnnError> {
        if self.num_classes < 2 {
            return Err(CvnnError::BadConfig("need at least 2 classes".into()));
        }
        if self.width_scale == 0 || 64 % self.width_scale != 0 {
            return Err(CvnnError::BadConfig(format!(
                "width_scale {} must divide 64",
                self.width_scale
            )));
        }
        if self.stem_stride == 0 || self.stem_stride > 2 {
            return Err(CvnnError::BadConfig("stem_stride must be 1 or 2".into()));
        }
        // Three stride-2 groups and the stem must leave a nonempty map.
        let min_in = 8 * self.stem_stride;
        if self.input_hw.0 < min_in || self.input_hw.1 < min_in {
            return Err(CvnnError::BadConfig(format!(
                "input {}x{} too small for the downsampling chain",
                self.input_hw.0, self.input_hw.1
            )));
        }
        if !(self.bn_eps > 0.0) {
            return Err(CvnnError::BadConfig("bn_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Residual block. Structure 1 keeps shape (identity residual);
/// structure 2 halves the spatial dims into doubled channels and adds a
/// stride-2 1x1 CCONV + CBN downsample on the residual path.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub conv1: CconvLayer,
    pub bn1: CbnLayer,
    pub conv2: CconvLayer,
    pub bn2: CbnLayer,
    pub down: Option<(CconvLayer, CbnLayer)>,
}

/// Forward intermediates one block needs for its backward pass.
pub struct BlockCache {
    input: ComplexTensor,
    conv1_out: ComplexTensor,
    bn1_cache: BnCache,
    bn1_out: ComplexTensor,
    relu1_out: ComplexTensor,
    conv2_out: ComplexTensor,
    bn2_cache: BnCache,
    down_conv_out: Option<ComplexTensor>,
    down_bn_cache: Option<BnCache>,
    pre_relu: ComplexTensor,
}

impl BasicBlock {
    pub fn init(
        c_in: usize,
        c_out: usize,
        stride: usize,
        eps: f64,
        momentum: f64,
        seed: u64,
    ) -> Self {
        let down = if stride != 1 || c_in != c_out {
            Some((
                CconvLayer::init(c_in, c_out, 1, stride, 0, mix_seed(seed, 3)),
                CbnLayer::init(c_out, eps, momentum),
            ))
        } else {
            None
        };
        BasicBlock {
            conv1: CconvLayer::init(c_in, c_out, 3, stride, 1, mix_seed(seed, 1)),
            bn1: CbnLayer::init(c_out, eps, momentum),
            conv2: CconvLayer::init(c_out, c_out, 3, 1, 1, mix_seed(seed, 2)),
            bn2: CbnLayer::init(c_out, eps, momentum),
            down,
        }
    }

    pub fn is_downsampling(&self) -> bool {
        self.down.is_some()
    }

    pub fn forward_infer(&self, x: &ComplexTensor) -> Result<ComplexTensor, CvnnError> {
        let main = self.bn2.forward_infer(
            &self
                .conv2
                .forward(&crelu_forward(&self.bn1.forward_infer(&self.conv1.forward(x)?)?))?,
        )?;
        let res = match &self.down {
            None => x.clone(),
            Some((conv, bn)) => bn.forward_infer(&conv.forward(x)?)?,
        };
        Ok(crelu_forward(&add(&main, &res)?))
    }

    pub fn forward_train(
        &mut self,
        x: ComplexTensor,
    ) -> Result<(ComplexTensor, BlockCache), CvnnError> {
        let conv1_out = self.conv1.forward(&x)?;
        let (bn1_out, bn1_cache) = self.bn1.forward_train(&conv1_out)?;
        let relu1_out = crelu_forward(&bn1_out);
        let conv2_out = self.conv2.forward(&relu1_out)?;
        let (bn2_out, bn2_cache) = self.bn2.forward_train(&conv2_out)?;
        let (res, down_conv_out, down_bn_cache) = match &mut self.down {
            None => (x.clone(), None, None),
            Some((conv, bn)) => {
                let c = conv.forward(&x)?;
                let (r, cache) = bn.forward_train(&c)?;
                (r, Some(c), Some(cache))
            }
        };
        let pre_relu = add(&bn2_out, &res)?;
        let out = crelu_forward(&pre_relu);
        let cache = BlockCache {
            input: x,
            conv1_out,
            bn1_cache,
            bn1_out,
            relu1_out,
            conv2_out,
            bn2_cache,
            down_conv_out,
            down_bn_cache,
            pre_relu,
        };
        Ok((out, cache))
    }

    pub fn backward(
        &mut self,
        cache: &BlockCache,
        grad_out: &ComplexTensor,
    ) -> Result<ComplexTensor, CvnnError> {
        let g_sum = crelu_backward(&cache.pre_relu, grad_out);
        // Main path.
        let g_bn2 = self.bn2.backward(&cache.conv2_out, &cache.bn2_cache, &g_sum)?;
        let g_relu1 = self.conv2.backward(&cache.relu1_out, &g_bn2)?;
        let g_bn1_out = crelu_backward(&cache.bn1_out, &g_relu1);
        let g_conv1 = self.bn1.backward(&cache.conv1_out, &cache.bn1_cache, &g_bn1_out)?;
        let mut grad_in = self.conv1.backward(&cache.input, &g_conv1)?;
        // Residual path.
        match &mut self.down {
            None => {
                for (a, b) in grad_in.re.iter_mut().zip(&g_sum.re) {
                    *a += b;
                }
                for (a, b) in grad_in.im.iter_mut().zip(&g_sum.im) {
                    *a += b;
                }
            }
            Some((conv, bn)) => {
                let g_down = bn.backward(
                    cache.down_conv_out.as_ref().expect("downsample cache"),
                    cache.down_bn_cache.as_ref().expect("downsample cache"),
                    &g_sum,
                )?;
                let g_res = conv.backward(&cache.input, &g_down)?;
                for (a, b) in grad_in.re.iter_mut().zip(&g_res.re) {
                    *a += b;
                }
                for (a, b) in grad_in.im.iter_mut().zip(&g_res.im) {
                    *a += b;
                }
            }
        }
        Ok(grad_in)
    }

    fn for_each_param(&self, prefix: &str, f: &mut dyn FnMut(String, &ParamTensor)) {
        f(format!("{prefix}.conv1.a"), &self.conv1.a);
        f(format!("{prefix}.conv1.b"), &self.conv1.b);
        f(format!("{prefix}.bn1.gamma"), &self.bn1.gamma);
        f(format!("{prefix}.bn1.beta"), &self.bn1.beta);
        f(format!("{prefix}.conv2.a"), &self.conv2.a);
        f(format!("{prefix}.conv2.b"), &self.conv2.b);
        f(format!("{prefix}.bn2.gamma"), &self.bn2.gamma);
        f(format!("{prefix}.bn2.beta"), &self.bn2.beta);
        if let Some((conv, bn)) = &self.down {
            f(format!("{prefix}.down.conv.a"), &conv.a);
            f(format!("{prefix}.down.conv.b"), &conv.b);
            f(format!("{prefix}.down.bn.gamma"), &bn.gamma);
            f(format!("{prefix}.down.bn.beta"), &bn.beta);
        }
    }

    fn for_each_param_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        f(format!("{prefix}.conv1.a"), &mut self.conv1.a);
        f(format!("{prefix}.conv1.b"), &mut self.conv1.b);
        f(format!("{prefix}.bn1.gamma"), &mut self.bn1.gamma);
        f(format!("{prefix}.bn1.beta"), &mut self.bn1.beta);
        f(format!("{prefix}.conv2.a"), &mut self.conv2.a);
        f(format!("{prefix}.conv2.b"), &mut self.conv2.b);
        f(format!("{prefix}.bn2.gamma"), &mut self.bn2.gamma);
        f(format!("{prefix}.bn2.beta"), &mut self.bn2.beta);
        if let Some((conv, bn)) = &mut self.down {
            f(format!("{prefix}.down.conv.a"), &mut conv.a);
            f(format!("{prefix}.down.conv.b"), &mut conv.b);
            f(format!("{prefix}.down.bn.gamma"), &mut bn.gamma);
            f(format!("{prefix}.down.bn.beta"), &mut bn.beta);
        }
    }
}

fn add(a: &ComplexTensor, b: &ComplexTensor) -> Result<ComplexTensor, CvnnError> {
    if a.shape != b.shape {
        return Err(CvnnError::ShapeMismatch(format!(
            "residual add {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(ComplexTensor {
        re: a.re.iter().zip(&b.re).map(|(x, y)| x + y).collect(),
        im: a.im.iter().zip(&b.im).map(|(x, y)| x + y).collect(),
        shape: a.shape,
    })
}

/// The CResNet backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct CvnnModel {
    pub cfg: ModelConfig,
    pub stem_conv: CconvLayer,
    pub stem_bn: CbnLayer,
    pub groups: Vec<[BasicBlock; 2]>,
    pub fc: FcLayer,
    /// Monotone Adam timestep shared by all parameters.
    pub opt_step: u64,
}

/// Full training-pass cache.
pub struct TrainCache {
    input: ComplexTensor,
    stem_conv_out: ComplexTensor,
    stem_relu_out: ComplexTensor,
    stem_bn_cache: BnCache,
    blocks: Vec<[BlockCache; 2]>,
    g4_out_shape: [usize; 4],
    pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

impl CvnnModel {
    pub fn init(cfg: ModelConfig) -> Result<Self, CvnnError> {
        cfg.validate()?;
        let base = cfg.base_channels();
        let stem_conv = CconvLayer::init(1, base, 3, cfg.stem_stride, 1, mix_seed(cfg.seed, 100));
        let stem_bn = CbnLayer::init(base, cfg.bn_eps, cfg.bn_momentum);
        let mut groups = Vec::with_capacity(4);
        let mut c_in = base;
        for g in 0..4 {
            let c_out = base << g;
            let stride = if g == 0 { 1 } else { 2 };
            let b1 = BasicBlock::init(
                c_in,
                c_out,
                stride,
                cfg.bn_eps,
                cfg.bn_momentum,
                mix_seed(cfg.seed, 200 + 10 * g as u64),
            );
            let b2 = BasicBlock::init(
                c_out,
                c_out,
                1,
                cfg.bn_eps,
                cfg.bn_momentum,
                mix_seed(cfg.seed, 201 + 10 * g as u64),
            );
            groups.push([b1, b2]);
            c_in = c_out;
        }
        let fc = FcLayer::init(2 * c_in, cfg.num_classes, mix_seed(cfg.seed, 300));
        Ok(Self { cfg, stem_conv, stem_bn, groups, fc, opt_step: 0 })
    }

    /// Channel count at each tap point.
    pub fn tap_channels(&self) -> [usize; NUM_TAPS] {
        let base = self.cfg.base_channels();
        [base, base, base * 2, base * 4]
    }

    /// Spatial dims at each tap point plus the final group output.
    pub fn tap_dims(&self) -> ([(usize, usize); NUM_TAPS], (usize, usize)) {
        let spec =
            self.stem_conv.spec(self.cfg.input_hw.0, self.cfg.input_hw.1);
        let stem = (spec.h_out, spec.w_out);
        let halve = |d: (usize, usize)| ((d.0 + 1) / 2, (d.1 + 1) / 2);
        let g1 = stem;
        let g2 = halve(g1);
        let g3 = halve(g2);
        let g4 = halve(g3);
        ([stem, g1, g2, g3], g4)
    }

    fn check_input(&self, x: &ComplexTensor) -> Result<(), CvnnError> {
        if (x.height(), x.width()) != self.cfg.input_hw || x.channels() != 1 {
            return Err(CvnnError::ShapeMismatch(format!(
                "model expects [B, 1, {}, {}] input, got {:?}",
                self.cfg.input_hw.0, self.cfg.input_hw.1, x.shape
            )));
        }
        Ok(())
    }

    /// Stem stage (inference mode); output is tap 0.
    pub fn stage_stem(&self, x: &ComplexTensor) -> Result<ComplexTensor, CvnnError> {
        self.check_input(x)?;
        self.stem_bn.forward_infer(&crelu_forward(&self.stem_conv.forward(x)?))
    }

    /// Group stage `g` in 0..4 (inference mode); outputs of groups 0..3
    /// are taps 1..3, group 3 feeds the head.
    pub fn stage_group(&self, g: usize, x: &ComplexTensor) -> Result<ComplexTensor, CvnnError> {
        let [b1, b2] = &self.groups[g];
        b2.forward_infer(&b1.forward_infer(x)?)
    }

    /// Final stage: group-4 output through pooling and the classifier.
    pub fn stage_head(&self, g4_out: &ComplexTensor) -> Result<Vec<f64>, CvnnError> {
        self.fc.forward(&global_avg_pool(g4_out))
    }

    /// Full inference pass returning logits and the four tap tensors.
    pub fn forward_infer(
        &self,
        x: &ComplexTensor,
    ) -> Result<(Vec<f64>, [ComplexTensor; NUM_TAPS]), CvnnError> {
        let t0 = self.stage_stem(x)?;
        let t1 = self.stage_group(0, &t0)?;
        let t2 = self.stage_group(1, &t1)?;
        let t3 = self.stage_group(2, &t2)?;
        let g4 = self.stage_group(3, &t3)?;
        let logits = self.stage_head(&g4)?;
        Ok((logits, [t0, t1, t2, t3]))
    }

    /// Logits only.
    pub fn infer_logits(&self, x: &ComplexTensor) -> Result<Vec<f64>, CvnnError> {
        Ok(self.forward_infer(x)?.0)
    }

    /// Training-mode forward keeping every intermediate needed by
    /// [`CvnnModel::backward`]. Checks activations stay finite and
    /// reports the failing stage otherwise.
    pub fn forward_train(&mut self, x: ComplexTensor) -> Result<TrainCache, CvnnError> {
        self.check_input(&x)?;
        let stem_conv_out = self.stem_conv.forward(&x)?;
        finite_check(&stem_conv_out, "stem.conv")?;
        let stem_relu_out = crelu_forward(&stem_conv_out);
        let (mut cur, stem_bn_cache) = self.stem_bn.forward_train(&stem_relu_out)?;
        finite_check(&cur, "stem.bn")?;
        let mut blocks = Vec::with_capacity(4);
        for (g, group) in self.groups.iter_mut().enumerate() {
            let (out1, c1) = group[0].forward_train(cur)?;
            finite_check(&out1, &format!("g{}.b1", g + 1))?;
            let (out2, c2) = group[1].forward_train(out1)?;
            finite_check(&out2, &format!("g{}.b2", g + 1))?;
            blocks.push([c1, c2]);
            cur = out2;
        }
        let g4_out_shape = cur.shape;
        let pooled = global_avg_pool(&cur);
        let logits = self.fc.forward(&pooled)?;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(CvnnError::NonFinite { layer: "fc".into() });
        }
        // The last group's caches own the g4 output implicitly; keep the
        // pooled vector and shapes for the head backward.
        Ok(TrainCache {
            input: x,
            stem_conv_out,
            stem_relu_out,
            stem_bn_cache,
            blocks,
            g4_out_shape,
            pooled,
            logits,
        })
    }

    /// Softmax cross-entropy loss and full parameter gradients for one
    /// batch (gradients accumulate; call [`CvnnModel::zero_grads`] first).
    pub fn backward(&mut self, cache: &TrainCache, labels: &[usize]) -> Result<f64, CvnnError> {
        let (loss, dlogits) = softmax_ce(&cache.logits, labels, self.cfg.num_classes)?;
        if !loss.is_finite() {
            return Err(CvnnError::NonFinite { layer: "loss".into() });
        }
        let dpooled = self.fc.backward(&cache.pooled, &dlogits);
        let mut grad = global_avg_pool_backward(cache.g4_out_shape, &dpooled);
        for g in (0..4).rev() {
            let [c1, c2] = &cache.blocks[g];
            grad = self.groups[g][1].backward(c2, &grad)?;
            grad = self.groups[g][0].backward(c1, &grad)?;
        }
        let g_relu = self.stem_bn.backward(&cache.stem_relu_out, &cache.stem_bn_cache, &grad)?;
        let g_conv = crelu_backward(&cache.stem_conv_out, &g_relu);
        let _ = self.stem_conv.backward(&cache.input, &g_conv)?;
        Ok(loss)
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param_mut(&mut |_, p| p.zero_grad());
    }

    /// Adam update over every parameter with a shared timestep.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), CvnnError> {
        cfg.validate()?;
        self.opt_step += 1;
        let t = self.opt_step;
        self.for_each_param_mut(&mut |_, p| p.adam_step(cfg, t));
        Ok(())
    }

    pub fn reset_optimizer(&mut self) {
        self.opt_step = 0;
        self.for_each_param_mut(&mut |_, p| p.reset_opt_state());
    }

    pub fn for_each_param(&self, f: &mut dyn FnMut(String, &ParamTensor)) {
        f("stem.conv.a".into(), &self.stem_conv.a);
        f("stem.conv.b".into(), &self.stem_conv.b);
        f("stem.bn.gamma".into(), &self.stem_bn.gamma);
        f("stem.bn.beta".into(), &self.stem_bn.beta);
        for (g, group) in self.groups.iter().enumerate() {
            group[0].for_each_param(&format!("g{}.b1", g + 1), f);
            group[1].for_each_param(&format!("g{}.b2", g + 1), f);
        }
        f("fc.w".into(), &self.fc.w);
        f("fc.bias".into(), &self.fc.bias);
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        f("stem.conv.a".into(), &mut self.stem_conv.a);
        f("stem.conv.b".into(), &mut self.stem_conv.b);
        f("stem.bn.gamma".into(), &mut self.stem_bn.gamma);
        f("stem.bn.beta".into(), &mut self.stem_bn.beta);
        for (g, group) in self.groups.iter_mut().enumerate() {
            let name = format!("g{}.b1", g + 1);
            group[0].for_each_param_mut(&name, f);
            let name = format!("g{}.b2", g + 1);
            group[1].for_each_param_mut(&name, f);
        }
        f("fc.w".into(), &mut self.fc.w);
        f("fc.bias".into(), &mut self.fc.bias);
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, p| n += p.len());
        n
    }
}

fn finite_check(x: &ComplexTensor, layer: &str) -> Result<(), CvnnError> {
    if x.all_finite() {
        Ok(())
    } else {
        Err(CvnnError::NonFinite { layer: layer.to_string() })
    }
}

/// Packs preprocessed spectrograms into the model's complex input
/// layout: plane 0 becomes the real part, plane 1 the imaginary part.
pub fn input_from_spectrograms(specs: &[&Spectrogram]) -> Result<ComplexTensor, CvnnError> {
    if specs.is_empty() {
        return Err(CvnnError::ShapeMismatch("empty batch".into()));
    }
    let (f, t) = (specs[0].freq_bins, specs[0].hops);
    let n = f * t;
    let mut out = ComplexTensor::zeros([specs.len(), 1, f, t]);
    for (s, sp) in specs.iter().enumerate() {
        if sp.freq_bins != f || sp.hops != t {
            return Err(CvnnError::ShapeMismatch("ragged spectrogram batch".into()));
        }
        out.re[s * n..(s + 1) * n].copy_from_slice(sp.plane(0));
        out.im[s * n..(s + 1) * n].copy_from_slice(sp.plane(1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            num_classes: 3,
            input_hw: (16, 16),
            width_scale: 16, // base width 4
            stem_stride: 2,
            seed: 9,
            ..Default::default()
        }
    }

    fn random_tensor(shape: [usize; 4], seed: u64) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        ComplexTensor::from_parts(
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            shape,
        )
    }

    #[test]
    fn structure2_shape_arithmetic() {
        // 16x16 input, 4 -> 8 channels, stride 2: output is 8 x 8x8.
        let mut b = BasicBlock::init(4, 8, 2, 1e-5, 0.1, 3);
        assert!(b.is_downsampling());
        let x = random_tensor([2, 4, 16, 16], 1);
        let (y, _) = b.forward_train(x).unwrap();
        assert_eq!(y.shape, [2, 8, 8, 8]);
    }

    #[test]
    fn zero_weight_block_is_pure_residual() {
        // Structure 1 with all conv weights zero and identity gamma: the
        // main path is identically zero (BN of zero input stays zero), so
        // out = CReLU(x).
        let mut b = BasicBlock::init(3, 3, 1, 1e-5, 0.1, 5);
        b.conv1.a.w.fill(0.0);
        b.conv1.b.w.fill(0.0);
        b.conv2.a.w.fill(0.0);
        b.conv2.b.w.fill(0.0);
        b.bn1.set_identity_gamma();
        b.bn2.set_identity_gamma();
        let x = random_tensor([2, 3, 6, 6], 2);
        let (y, _) = b.forward_train(x.clone()).unwrap();
        let expect = crelu_forward(&x);
        for k in 0..y.len() {
            assert!((y.re[k] - expect.re[k]).abs() < 1e-12);
            assert!((y.im[k] - expect.im[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn block_composes_verified_layer_ops() {
        let mut b = BasicBlock::init(2, 2, 1, 1e-5, 0.1, 7);
        let x = random_tensor([2, 2, 5, 5], 3);
        let (y, _) = b.forward_train(x.clone()).unwrap();
        // Manual composition with the same (already updated) layers must
        // agree when re-run through a fresh clone in train order.
        let mut b2 = b.clone();
        let c1 = b2.conv1.forward(&x).unwrap();
        let (n1, _) = b2.bn1.forward_train(&c1).unwrap();
        let r1 = crelu_forward(&n1);
        let c2 = b2.conv2.forward(&r1).unwrap();
        let (n2, _) = b2.bn2.forward_train(&c2).unwrap();
        let manual = crelu_forward(&add(&n2, &x).unwrap());
        for k in 0..y.len() {
            assert!((y.re[k] - manual.re[k]).abs() < 1e-12);
            assert!((y.im[k] - manual.im[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn model_tap_shapes_and_softmax() {
        let model = CvnnModel::init(tiny_cfg()).unwrap();
        let x = random_tensor([2, 1, 16, 16], 4);
        let (logits, taps) = model.forward_infer(&x).unwrap();
        assert_eq!(logits.len(), 2 * 3);
        let dims = model.tap_dims().0;
        let chans = model.tap_channels();
        for (m, tap) in taps.iter().enumerate() {
            assert_eq!(tap.shape, [2, chans[m], dims[m].0, dims[m].1], "tap {m}");
        }
        let probs = super::super::head::softmax_rows(&logits, 3);
        for row in probs.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_input_logits_equal_fc_bias() {
        let mut model = CvnnModel::init(tiny_cfg()).unwrap();
        for (i, b) in model.fc.bias.w.iter_mut().enumerate() {
            *b = i as f64 * 0.5 - 0.3;
        }
        let x = ComplexTensor::zeros([1, 1, 16, 16]);
        let logits = model.infer_logits(&x).unwrap();
        for (l, b) in logits.iter().zip(&model.fc.bias.w) {
            assert!((l - b).abs() < 1e-9, "{l} vs {b}");
        }
    }

    #[test]
    fn batch_invariance_in_infer_mode() {
        let model = CvnnModel::init(tiny_cfg()).unwrap();
        let batch = random_tensor([3, 1, 16, 16], 8);
        let (logits, _) = model.forward_infer(&batch).unwrap();
        for s in 0..3 {
            let one = batch.slice_sample(s);
            let single = model.infer_logits(&one).unwrap();
            for k in 0..3 {
                assert!(
                    (single[k] - logits[s * 3 + k]).abs() < 1e-6,
                    "sample {s} logit {k}"
                );
            }
        }
    }

    #[test]
    fn wrong_input_size_rejected() {
        let model = CvnnModel::init(tiny_cfg()).unwrap();
        let x = random_tensor([1, 1, 8, 8], 5);
        assert!(matches!(model.infer_logits(&x), Err(CvnnError::ShapeMismatch(_))));
    }

    #[test]
    fn train_step_decreases_loss_on_fixed_batch() {
        let mut model = CvnnModel::init(tiny_cfg()).unwrap();
        let x = random_tensor([6, 1, 16, 16], 6);
        let labels = vec![0, 1, 2, 0, 1, 2];
        let adam = AdamConfig { learning_rate: 5e-3, ..Default::default() };
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..30 {
            model.zero_grads();
            let cache = model.forward_train(x.clone()).unwrap();
            let loss = model.backward(&cache, &labels).unwrap();
            model.adam_step(&adam).unwrap();
            first.get_or_insert(loss);
            last = loss;
        }
        assert!(last < first.unwrap() * 0.5, "{first:?} -> {last}");
    }
}
