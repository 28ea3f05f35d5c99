//! Short-time Fourier transform and min-max scaling.

use super::synth::IqFrame;
use super::RfError;
use std::f64::consts::TAU;

/// STFT windowing function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// All-ones window; keeps oracle tests exact.
    Rect,
    /// Symmetric Hann taper.
    Hann,
}

/// STFT configuration carried in dataset metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftParams {
    pub window_len: usize,
    pub stride: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    fn default() -> Self {
        Self { window_len: 32, stride: 16, window: WindowKind::Rect }
    }
}

impl StftParams {
    /// Number of hops an L-sample frame produces.
    pub fn hops(&self, frame_len: usize) -> usize {
        if frame_len < self.window_len || self.stride == 0 {
            0
        } else {
            (frame_len - self.window_len) / self.stride + 1
        }
    }
}

/// Two-plane time-frequency map of one frame: plane 0 holds the real
/// (I) part of the STFT, plane 1 the imaginary (Q) part, each F x T.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Row-major [2 x F x T].
    pub data: Vec<f64>,
    pub freq_bins: usize,
    pub hops: usize,
    pub label: usize,
}

impl Spectrogram {
    pub fn plane(&self, p: usize) -> &[f64] {
        let n = self.freq_bins * self.hops;
        &self.data[p * n..(p + 1) * n]
    }

    pub fn at(&self, plane: usize, f: usize, t: usize) -> f64 {
        self.data[(plane * self.freq_bins + f) * self.hops + t]
    }
}

fn window_coeffs(kind: WindowKind, n: usize) -> Vec<f64> {
    match kind {
        WindowKind::Rect => vec![1.0; n],
        WindowKind::Hann => (0..n)
            .map(|m| {
                if n == 1 {
                    1.0
                } else {
                    0.5 * (1.0 - (TAU * m as f64 / (n - 1) as f64).cos())
                }
            })
            .collect(),
    }
}

/// Windowed STFT of a complex frame: for hop t and bin f,
/// `F(t, f) = sum_n x[n] w[n - s*t] exp(-i*2*pi*n*f / N)`,
/// with the twiddle indexed by the absolute sample position n. Output is
/// not normalized; see [`minmax_normalize`].
pub fn stft(frame: &IqFrame, params: &StftParams) -> Result<Spectrogram, RfError> {
    let n = params.window_len;
    let l = frame.len();
    if n == 0 || params.stride == 0 {
        return Err(RfError::BadStft("window_len and stride must be >= 1".into()));
    }
    if n > l {
        return Err(RfError::WindowTooLong { window: n, frame: l });
    }
    let hops = params.hops(l);
    let w = window_coeffs(params.window, n);

    // exp(-i*2*pi*j/N) for j in 0..N; (n*f) mod N indexes it exactly.
    let tw: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let (s, c) = (TAU * j as f64 / n as f64).sin_cos();
            (c, -s)
        })
        .collect();

    let mut data = vec![0.0; 2 * n * hops];
    let (re_plane, im_plane) = data.split_at_mut(n * hops);
    for t in 0..hops {
        let start = t * params.stride;
        for f in 0..n {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for m in 0..n {
                let abs_n = start + m;
                let (twr, twi) = tw[(abs_n * f) % n];
                let xr = frame.i[abs_n] * w[m];
                let xi = frame.q[abs_n] * w[m];
                acc_re += xr * twr - xi * twi;
                acc_im += xr * twi + xi * twr;
            }
            re_plane[f * hops + t] = acc_re;
            im_plane[f * hops + t] = acc_im;
        }
    }
    Ok(Spectrogram { data, freq_bins: n, hops, label: frame.label })
}

/// Min-max scaling to [-1, 1]: `2 (x - min) / (max - min) - 1`.
///
/// A constant input has no range to scale; it maps to all zeros, the
/// midpoint of the target interval.
pub fn minmax_normalize(x: &[f64]) -> Result<Vec<f64>, RfError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(RfError::NonFinite);
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return Ok(vec![0.0; x.len()]);
    }
    let scale = 2.0 / (hi - lo);
    Ok(x.iter().map(|&v| ((v - lo) * scale - 1.0).clamp(-1.0, 1.0)).collect())
}
