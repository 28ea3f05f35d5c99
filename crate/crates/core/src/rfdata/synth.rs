//! Emitter simulation: PPM frame synthesis, impairment chain, AWGN.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use std::f64::consts::TAU;

use super::dataset::{DatasetMeta, SignalDataset, Split};
use super::stft::StftParams;
use super::RfError;
use crate::seed::mix_seed;

/// Chips per preamble (8 us at 2 chips/us).
const PREAMBLE_CHIPS: usize = 16;
/// Preamble pulse positions in chips: 0, 1, 3.5, 4.5 us at 2 chips/us.
const PREAMBLE_PULSES: [usize; 4] = [0, 2, 7, 9];

/// Per-device analog impairment parameters.
///
/// Each field is a constant of the simulated hardware, so every frame a
/// device emits carries the same distortion signature regardless of
/// payload. `seed` drives the device's stochastic impairment (phase
/// noise) and its payload stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterProfile {
    /// Category index, 0-based; unique within a dataset.
    pub device_id: usize,
    /// Q-arm gain relative to the I arm (1.0 = balanced; must be > 0).
    pub iq_gain_imbalance: f64,
    /// Quadrature error in radians (0 = perfect 90-degree split).
    pub iq_phase_imbalance: f64,
    /// Additive DC bias on the I arm, normalized amplitude.
    pub dc_offset_i: f64,
    /// Additive DC bias on the Q arm, normalized amplitude.
    pub dc_offset_q: f64,
    /// Carrier frequency offset in cycles per sample.
    pub cfo: f64,
    /// Third-order amplifier nonlinearity coefficient (|a3| < 1).
    pub pa_a3: f64,
    /// Phase-noise random-walk step deviation, radians per sample.
    pub phase_noise_std: f64,
    /// Device RNG seed.
    pub seed: u64,
}

impl EmitterProfile {
    /// An ideal device: no impairments at all.
    pub fn ideal(device_id: usize) -> Self {
        Self {
            device_id,
            iq_gain_imbalance: 1.0,
            iq_phase_imbalance: 0.0,
            dc_offset_i: 0.0,
            dc_offset_q: 0.0,
            cfo: 0.0,
            pa_a3: 0.0,
            phase_noise_std: 0.0,
            seed: device_id as u64,
        }
    }

    pub fn validate(&self) -> Result<(), RfError> {
        if !(self.iq_gain_imbalance > 0.0) {
            return Err(RfError::BadProfile(format!(
                "iq_gain_imbalance must be > 0, got {}",
                self.iq_gain_imbalance
            )));
        }
        if !(self.pa_a3.abs() < 1.0) {
            return Err(RfError::BadProfile(format!("|pa_a3| must be < 1, got {}", self.pa_a3)));
        }
        if !(self.phase_noise_std >= 0.0) {
            return Err(RfError::BadProfile(format!(
                "phase_noise_std must be >= 0, got {}",
                self.phase_noise_std
            )));
        }
        Ok(())
    }

    /// Samples a population of `n` distinct device profiles.
    ///
    /// Impairment magnitudes are drawn from ranges wide enough that
    /// devices are separable but small enough that frames remain
    /// plausible bursts. Deterministic in `base_seed`.
    pub fn sample_population(n: usize, base_seed: u64) -> Vec<EmitterProfile> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(base_seed, 0xde71ce));
        let gain = Uniform::new(0.6, 1.5).unwrap();
        let phase = Uniform::new(-0.4, 0.4).unwrap();
        let dc = Uniform::new(-0.2, 0.2).unwrap();
        let cfo = Uniform::new(-0.04, 0.04).unwrap();
        let a3 = Uniform::new(-0.5, 0.5).unwrap();
        let pn = Uniform::new(0.0001, 0.0008).unwrap();
        (0..n)
            .map(|id| EmitterProfile {
                device_id: id,
                iq_gain_imbalance: gain.sample(&mut rng),
                iq_phase_imbalance: phase.sample(&mut rng),
                dc_offset_i: dc.sample(&mut rng),
                dc_offset_q: dc.sample(&mut rng),
                cfo: cfo.sample(&mut rng),
                pa_a3: a3.sample(&mut rng),
                phase_noise_std: pn.sample(&mut rng),
                seed: mix_seed(base_seed, 0xface_0000 + id as u64),
            })
            .collect()
    }
}

/// One labeled complex-baseband burst.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    /// In-phase samples.
    pub i: Vec<f64>,
    /// Quadrature samples.
    pub q: Vec<f64>,
    /// Emitting device's category index.
    pub label: usize,
    /// SNR annotation when channel noise was applied.
    pub snr_db: Option<f64>,
}

impl IqFrame {
    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Mean complex power over the frame.
    pub fn power(&self) -> f64 {
        if self.i.is_empty() {
            return 0.0;
        }
        let e: f64 = self.i.iter().zip(&self.q).map(|(a, b)| a * a + b * b).sum();
        e / self.i.len() as f64
    }

    /// Rounds every sample to the nearest f32 value (kept as f64).
    ///
    /// Dataset storage is 32-bit; quantizing at assembly time makes the
    /// on-disk round trip bit-exact.
    pub fn quantize_f32(&mut self) {
        for v in self.i.iter_mut().chain(self.q.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
}

/// Frame-level generator settings shared by every emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Output frame length in samples.
    pub frame_len: usize,
    /// Samples per half-microsecond chip.
    pub samples_per_chip: usize,
    /// Nominal baseband rotation of the burst, cycles per sample. A
    /// channel/protocol property, identical for every device; gives the
    /// clean template a nonzero quadrature component.
    pub template_carrier: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { frame_len: 512, samples_per_chip: 4, template_carrier: 1.0 / 16.0 }
    }
}

impl SynthConfig {
    /// Number of payload bits that fit in `frame_len`.
    pub fn payload_capacity(&self) -> usize {
        let chips = self.frame_len / self.samples_per_chip;
        chips.saturating_sub(PREAMBLE_CHIPS) / 2
    }
}

/// PPM pulse envelope: preamble pulses then one chip per payload half-bit.
fn envelope(cfg: &SynthConfig, payload_bits: &[bool]) -> Vec<f64> {
    let spc = cfg.samples_per_chip;
    let mut env = vec![0.0; cfg.frame_len];
    let mut set_chip = |chip: usize| {
        let start = chip * spc;
        for v in env.iter_mut().skip(start).take(spc) {
            *v = 1.0;
        }
    };
    for &c in &PREAMBLE_PULSES {
        set_chip(c);
    }
    for (k, &bit) in payload_bits.iter().enumerate() {
        // PPM: a one pulses the first half of the bit slot, a zero the second.
        let chip = PREAMBLE_CHIPS + 2 * k + usize::from(!bit);
        set_chip(chip);
    }
    env
}

/// Synthesizes one frame for `profile` carrying `payload_bits`.
///
/// The clean template is the PPM envelope rotated by the config's nominal
/// carrier. The device's impairments are then applied in a fixed chain:
/// IQ imbalance, DC offset, CFO rotation, cubic PA nonlinearity, and a
/// phase-noise random walk driven by `rng`. Deterministic given
/// (profile, payload, rng state).
pub fn synth_frame(
    profile: &EmitterProfile,
    payload_bits: &[bool],
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<IqFrame, RfError> {
    profile.validate()?;
    let needed = (PREAMBLE_CHIPS + 2 * payload_bits.len()) * cfg.samples_per_chip;
    if cfg.frame_len < needed {
        return Err(RfError::FrameTooShort {
            length: cfg.frame_len,
            bits: payload_bits.len(),
            needed,
        });
    }

    let env = envelope(cfg, payload_bits);
    let n = cfg.frame_len;
    let mut i = vec![0.0; n];
    let mut q = vec![0.0; n];

    // Clean template.
    for t in 0..n {
        let th = TAU * cfg.template_carrier * t as f64;
        i[t] = env[t] * th.cos();
        q[t] = env[t] * th.sin();
    }

    // IQ imbalance: I arm untouched, Q arm gain-scaled and phase-skewed.
    let (sp, cp) = profile.iq_phase_imbalance.sin_cos();
    let g = profile.iq_gain_imbalance;
    for t in 0..n {
        q[t] = g * (cp * q[t] + sp * i[t]);
    }

    // DC offsets.
    if profile.dc_offset_i != 0.0 || profile.dc_offset_q != 0.0 {
        for t in 0..n {
            i[t] += profile.dc_offset_i;
            q[t] += profile.dc_offset_q;
        }
    }

    // CFO rotation by exp(i*2*pi*cfo*t), trig evaluated per sample so the
    // phase ramp is exact rather than accumulated.
    if profile.cfo != 0.0 {
        for t in 0..n {
            let (s, c) = (TAU * profile.cfo * t as f64).sin_cos();
            let (a, b) = (i[t], q[t]);
            i[t] = a * c - b * s;
            q[t] = a * s + b * c;
        }
    }

    // Cubic PA nonlinearity: z -> z * (1 + a3 * |z|^2).
    if profile.pa_a3 != 0.0 {
        for t in 0..n {
            let m2 = i[t] * i[t] + q[t] * q[t];
            let s = 1.0 + profile.pa_a3 * m2;
            i[t] *= s;
            q[t] *= s;
        }
    }

    // Phase-noise random walk.
    if profile.phase_noise_std > 0.0 {
        let step = Normal::new(0.0, profile.phase_noise_std).expect("std >= 0");
        let mut phi = 0.0;
        for t in 0..n {
            phi += step.sample(rng);
            let (s, c) = phi.sin_cos();
            let (a, b) = (i[t], q[t]);
            i[t] = a * c - b * s;
            q[t] = a * s + b * c;
        }
    }

    Ok(IqFrame { i, q, label: profile.device_id, snr_db: None })
}

/// Adds white Gaussian noise at the requested SNR.
///
/// `snr_db = +inf` is the documented no-noise sentinel and returns the
/// frame unchanged (annotation aside). The noise power is set from the
/// frame's measured signal power, so the expected realized SNR matches
/// the request.
pub fn add_awgn(frame: &IqFrame, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<IqFrame, RfError> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(RfError::BadSnr(snr_db));
    }
    let mut out = frame.clone();
    out.snr_db = Some(snr_db);
    if snr_db == f64::INFINITY {
        return Ok(out);
    }
    let p = frame.power();
    if p <= 0.0 {
        return Err(RfError::ZeroPower);
    }
    let noise_power = p / 10f64.powf(snr_db / 10.0);
    let per_arm = Normal::new(0.0, (noise_power / 2.0).sqrt()).expect("positive std");
    for t in 0..out.len() {
        out.i[t] += per_arm.sample(rng);
        out.q[t] += per_arm.sample(rng);
    }
    Ok(out)
}

/// Generates a stratified, labeled dataset from a set of device profiles.
///
/// Every class contributes `frames_per_class` frames with fresh random
/// payloads; the split assignment is a per-class shuffle so each class
/// appears in every split at the configured fractions. Frames are
/// quantized to the f32 grid used by the on-disk format, making
/// write/read round trips bit-exact. Fully deterministic in `base_seed`
/// and the profile seeds.
pub fn synth_dataset(
    profiles: &[EmitterProfile],
    frames_per_class: usize,
    split: [f64; 3],
    base_seed: u64,
    cfg: &SynthConfig,
    stft: StftParams,
) -> Result<SignalDataset, RfError> {
    if profiles.len() < 2 {
        return Err(RfError::TooFew { what: "profiles", min: 2, got: profiles.len() });
    }
    if frames_per_class < 10 {
        return Err(RfError::TooFew { what: "frames per class", min: 10, got: frames_per_class });
    }
    if split.iter().any(|f| *f < 0.0) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(RfError::BadSplit(split));
    }
    let mut seen = std::collections::HashSet::new();
    for p in profiles {
        p.validate()?;
        if !seen.insert(p.device_id) {
            return Err(RfError::DuplicateDevice(p.device_id));
        }
    }
    let counts = split_counts(frames_per_class, split);
    if counts.iter().any(|&c| c == 0) {
        return Err(RfError::BadDataset(format!(
            "split {split:?} of {frames_per_class} frames leaves an empty split per class"
        )));
    }

    let payload_bits = cfg.payload_capacity();
    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for (ci, _) in profiles.iter().enumerate() {
        for j in 0..frames_per_class {
            jobs.push((ci, j));
        }
    }
    let frames: Result<Vec<IqFrame>, RfError> = jobs
        .par_iter()
        .map(|&(ci, j)| {
            let p = &profiles[ci];
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(p.seed, j as u64));
            let payload: Vec<bool> = (0..payload_bits).map(|_| rng.random::<bool>()).collect();
            let mut f = synth_frame(p, &payload, cfg, &mut rng)?;
            f.quantize_f32();
            Ok(f)
        })
        .collect();
    let frames = frames?;

    // Stratified split: shuffle each class's frame indices, then cut at
    // the cumulative counts.
    let mut splits = vec![Split::Train; frames.len()];
    for ci in 0..profiles.len() {
        let mut idx: Vec<usize> =
            (0..frames_per_class).map(|j| ci * frames_per_class + j).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(base_seed, 0x5b117 + ci as u64));
        shuffle(&mut idx, &mut rng);
        for (pos, &fi) in idx.iter().enumerate() {
            splits[fi] = if pos < counts[0] {
                Split::Train
            } else if pos < counts[0] + counts[1] {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    let meta = DatasetMeta {
        num_classes: profiles.len(),
        frame_len: cfg.frame_len,
        stft,
        base_seed,
        split_fractions: split,
    };
    SignalDataset::new(frames, splits, meta)
}

/// Cumulative-rounding split so the three counts always sum to the total.
fn split_counts(total: usize, split: [f64; 3]) -> [usize; 3] {
    let c1 = (total as f64 * split[0]).round() as usize;
    let c12 = (total as f64 * (split[0] + split[1])).round() as usize;
    let c1 = c1.min(total);
    let c12 = c12.clamp(c1, total);
    [c1, c12 - c1, total - c12]
}

/// Fisher-Yates with explicit rng, stable across rand versions.
fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for k in (1..v.len()).rev() {
        let j = rng.random_range(0..=k);
        v.swap(k, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn bits(pattern: u64, n: usize) -> Vec<bool> {
        (0..n).map(|k| (pattern >> (k % 64)) & 1 == 1).collect()
    }

    #[test]
    fn ideal_frame_places_pulses_at_preamble_offsets() {
        let cfg = SynthConfig::default();
        let payload = bits(0b1011, 4);
        let f = synth_frame(&EmitterProfile::ideal(0), &payload, &cfg, &mut rng(1)).unwrap();
        let spc = cfg.samples_per_chip;
        // Preamble pulses at chips 0, 2, 7, 9; silent at 1 and 3..=6.
        for &chip in &PREAMBLE_PULSES {
            for s in 0..spc {
                let t = chip * spc + s;
                let mag = (f.i[t] * f.i[t] + f.q[t] * f.q[t]).sqrt();
                assert!((mag - 1.0).abs() < 1e-12, "pulse chip {chip} sample {s}");
            }
        }
        for chip in [1usize, 3, 4, 5, 6, 8, 10, 11, 12, 13, 14, 15] {
            for s in 0..spc {
                let t = chip * spc + s;
                assert_eq!(f.i[t], 0.0);
                assert_eq!(f.q[t], 0.0);
            }
        }
        // Payload 1,0,1,1 -> first chip of slot 0 high, second chip of slot 1 high.
        let base = PREAMBLE_CHIPS * spc;
        assert!(f.i[base].abs() + f.q[base].abs() > 0.0);
        assert_eq!(f.i[base + spc], 0.0);
    }

    #[test]
    fn gain_imbalance_scales_q_only() {
        let cfg = SynthConfig::default();
        let payload = bits(0xa5, 8);
        let ideal = synth_frame(&EmitterProfile::ideal(0), &payload, &cfg, &mut rng(2)).unwrap();
        let mut p = EmitterProfile::ideal(0);
        p.iq_gain_imbalance = 1.1;
        let skew = synth_frame(&p, &payload, &cfg, &mut rng(2)).unwrap();
        for t in 0..ideal.len() {
            assert_eq!(skew.i[t], ideal.i[t], "I must be unchanged");
            assert!((skew.q[t] - 1.1 * ideal.q[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn cfo_difference_matches_rotation_oracle() {
        let cfg = SynthConfig::default();
        let payload = bits(0x3c3c, 16);
        let mut p1 = EmitterProfile::ideal(0);
        p1.cfo = 0.001;
        let mut p2 = EmitterProfile::ideal(0);
        p2.cfo = 0.002;
        let f1 = synth_frame(&p1, &payload, &cfg, &mut rng(3)).unwrap();
        let f2 = synth_frame(&p2, &payload, &cfg, &mut rng(3)).unwrap();
        // Oracle: f2[n] = f1[n] * exp(i*2*pi*(0.002-0.001)*n).
        for t in 0..f1.len() {
            let (s, c) = (TAU * 0.001 * t as f64).sin_cos();
            let ei = f1.i[t] * c - f1.q[t] * s;
            let eq = f1.i[t] * s + f1.q[t] * c;
            let scale = f1.i[t].abs().max(f1.q[t].abs()).max(1.0);
            assert!((f2.i[t] - ei).abs() / scale < 1e-12, "t={t}");
            assert!((f2.q[t] - eq).abs() / scale < 1e-12, "t={t}");
        }
    }

    #[test]
    fn distinct_profiles_differ_same_payload() {
        let cfg = SynthConfig::default();
        let payload = bits(0xdead, 16);
        let a = synth_frame(&EmitterProfile::ideal(0), &payload, &cfg, &mut rng(5)).unwrap();
        let mut p = EmitterProfile::ideal(1);
        p.cfo = 0.004;
        p.pa_a3 = 0.1;
        let b = synth_frame(&p, &payload, &cfg, &mut rng(5)).unwrap();
        assert!(a.i.iter().zip(&b.i).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn too_short_frame_rejected() {
        let cfg = SynthConfig { frame_len: 32, ..SynthConfig::default() };
        let err = synth_frame(&EmitterProfile::ideal(0), &bits(0, 8), &cfg, &mut rng(0));
        assert!(matches!(err, Err(RfError::FrameTooShort { .. })));
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let cfg = SynthConfig::default();
        let f = synth_frame(&EmitterProfile::ideal(0), &bits(0xff, 8), &cfg, &mut rng(7)).unwrap();
        let g = add_awgn(&f, f64::INFINITY, &mut rng(8)).unwrap();
        assert_eq!(f.i, g.i);
        assert_eq!(f.q, g.q);
        assert!(matches!(add_awgn(&f, f64::NAN, &mut rng(8)), Err(RfError::BadSnr(_))));
    }

    #[test]
    fn awgn_power_matches_request() {
        // Unit-power synthetic signal, 1e5 samples, 0 dB -> noise power ~ 1.
        let n = 100_000;
        let f = IqFrame {
            i: vec![1.0; n],
            q: vec![0.0; n],
            label: 0,
            snr_db: None,
        };
        let g = add_awgn(&f, 0.0, &mut rng(11)).unwrap();
        let noise_p: f64 = (0..n)
            .map(|t| {
                let di = g.i[t] - f.i[t];
                let dq = g.q[t] - f.q[t];
                di * di + dq * dq
            })
            .sum::<f64>()
            / n as f64;
        assert!((noise_p - 1.0).abs() < 0.05, "noise power {noise_p}");
    }

    #[test]
    fn awgn_variance_ratio_across_snrs() {
        let n = 100_000;
        let f = IqFrame { i: vec![1.0; n], q: vec![0.0; n], label: 0, snr_db: None };
        let measure = |snr: f64, seed: u64| -> f64 {
            let g = add_awgn(&f, snr, &mut rng(seed)).unwrap();
            (0..n)
                .map(|t| {
                    let di = g.i[t] - f.i[t];
                    let dq = g.q[t] - f.q[t];
                    di * di + dq * dq
                })
                .sum::<f64>()
                / n as f64
        };
        let ratio = measure(-5.0, 21) / measure(20.0, 22);
        let expect = 10f64.powf(2.5);
        assert!((ratio / expect - 1.0).abs() < 0.05, "ratio {ratio} vs {expect}");
    }

    #[test]
    fn dataset_split_counts_and_presence() {
        let profiles = EmitterProfile::sample_population(10, 42);
        let ds = synth_dataset(
            &profiles,
            100,
            [0.6, 0.3, 0.1],
            42,
            &SynthConfig::default(),
            StftParams::default(),
        )
        .unwrap();
        assert_eq!(ds.len(), 1000);
        let count = |s: Split| ds.indices_of(s).len();
        assert_eq!(count(Split::Train), 600);
        assert_eq!(count(Split::Val), 300);
        assert_eq!(count(Split::Test), 100);
        for split in [Split::Train, Split::Val, Split::Test] {
            for c in 0..10 {
                let n = ds
                    .indices_of(split)
                    .iter()
                    .filter(|&&i| ds.frames[i].label == c)
                    .count();
                let expect = match split {
                    Split::Train => 60,
                    Split::Val => 30,
                    Split::Test => 10,
                };
                assert_eq!(n, expect, "class {c} split {split:?}");
            }
        }
    }

    #[test]
    fn dataset_every_class_in_every_split_small() {
        let profiles = EmitterProfile::sample_population(3, 9);
        let ds = synth_dataset(
            &profiles,
            20,
            [0.6, 0.3, 0.1],
            9,
            &SynthConfig::default(),
            StftParams::default(),
        )
        .unwrap();
        for split in [Split::Train, Split::Val, Split::Test] {
            for c in 0..3 {
                assert!(
                    ds.indices_of(split).iter().any(|&i| ds.frames[i].label == c),
                    "class {c} missing from {split:?}"
                );
            }
        }
    }

    #[test]
    fn dataset_deterministic_in_seed() {
        let profiles = EmitterProfile::sample_population(3, 5);
        let make = || {
            synth_dataset(
                &profiles,
                12,
                [0.6, 0.3, 0.1],
                5,
                &SynthConfig::default(),
                StftParams::default(),
            )
            .unwrap()
        };
        let a = make();
        let b = make();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.splits, b.splits);
    }

    #[test]
    fn dataset_rejects_bad_split_and_duplicates() {
        let profiles = EmitterProfile::sample_population(3, 5);
        let r = synth_dataset(
            &profiles,
            20,
            [0.5, 0.3, 0.1],
            5,
            &SynthConfig::default(),
            StftParams::default(),
        );
        assert!(matches!(r, Err(RfError::BadSplit(_))));
        let mut dup = EmitterProfile::sample_population(3, 5);
        dup[2].device_id = 0;
        let r = synth_dataset(
            &dup,
            20,
            [0.6, 0.3, 0.1],
            5,
            &SynthConfig::default(),
            StftParams::default(),
        );
        assert!(matches!(r, Err(RfError::DuplicateDevice(0))));
    }
}
