//! Dataset binary format (.exrf) and CSV metadata export.
//!
//! Layout (little-endian):
//!   magic "EXRF" | version u16 | num_classes u16 | frame_len u32 |
//!   num_frames u32 | stft window u32 | stft stride u32 | window kind u8 |
//!   has_snr u8 | base_seed u64 | split fractions 3 x f64 |
//!   samples (num_frames x 2 x frame_len f32, interleaved i/q per frame) |
//!   labels (num_frames x u16) | split tags (num_frames x u8) |
//!   [snr annotations num_frames x f64, iff has_snr]

use std::path::Path;

use super::dataset::{DatasetMeta, SignalDataset, Split};
use super::stft::{StftParams, WindowKind};
use super::synth::IqFrame;
use super::RfError;
use crate::ioutil::{self, ByteReader};

const MAGIC: &[u8; 4] = b"EXRF";
const VERSION: u16 = 1;

/// Serializes a dataset to its binary byte layout.
pub fn dataset_to_bytes(ds: &SignalDataset) -> Result<Vec<u8>, RfError> {
    if ds.meta.num_classes > u16::MAX as usize {
        return Err(RfError::BadDataset("too many classes for format".into()));
    }
    let has_snr = ds.frames.iter().any(|f| f.snr_db.is_some());
    let mut buf = Vec::with_capacity(64 + ds.len() * (8 * ds.meta.frame_len + 3));
    buf.extend_from_slice(MAGIC);
    ioutil::put_u16(&mut buf, VERSION);
    ioutil::put_u16(&mut buf, ds.meta.num_classes as u16);
    ioutil::put_u32(&mut buf, ds.meta.frame_len as u32);
    ioutil::put_u32(&mut buf, ds.len() as u32);
    ioutil::put_u32(&mut buf, ds.meta.stft.window_len as u32);
    ioutil::put_u32(&mut buf, ds.meta.stft.stride as u32);
    buf.push(match ds.meta.stft.window {
        WindowKind::Rect => 0,
        WindowKind::Hann => 1,
    });
    buf.push(u8::from(has_snr));
    ioutil::put_u64(&mut buf, ds.meta.base_seed);
    for f in ds.meta.split_fractions {
        ioutil::put_f64(&mut buf, f);
    }
    for f in &ds.frames {
        for t in 0..f.len() {
            ioutil::put_f32(&mut buf, f.i[t] as f32);
            ioutil::put_f32(&mut buf, f.q[t] as f32);
        }
    }
    for f in &ds.frames {
        ioutil::put_u16(&mut buf, f.label as u16);
    }
    for &s in &ds.splits {
        buf.push(s.tag());
    }
    if has_snr {
        for f in &ds.frames {
            ioutil::put_f64(&mut buf, f.snr_db.unwrap_or(f64::NAN));
        }
    }
    Ok(buf)
}

/// Parses a dataset from its binary byte layout.
pub fn dataset_from_bytes(bytes: &[u8]) -> Result<SignalDataset, RfError> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4).ok_or(RfError::Truncated("magic"))?;
    if magic != MAGIC {
        return Err(RfError::BadMagic);
    }
    let version = r.u16().ok_or(RfError::Truncated("version"))?;
    if version != VERSION {
        return Err(RfError::VersionMismatch { found: version, expected: VERSION });
    }
    let num_classes = r.u16().ok_or(RfError::Truncated("num_classes"))? as usize;
    let frame_len = r.u32().ok_or(RfError::Truncated("frame_len"))? as usize;
    let num_frames = r.u32().ok_or(RfError::Truncated("num_frames"))? as usize;
    let window_len = r.u32().ok_or(RfError::Truncated("stft window"))? as usize;
    let stride = r.u32().ok_or(RfError::Truncated("stft stride"))? as usize;
    let window = match r.u8().ok_or(RfError::Truncated("window kind"))? {
        0 => WindowKind::Rect,
        1 => WindowKind::Hann,
        k => return Err(RfError::BadDataset(format!("unknown window kind {k}"))),
    };
    let has_snr = r.u8().ok_or(RfError::Truncated("snr flag"))? != 0;
    let base_seed = r.u64().ok_or(RfError::Truncated("base_seed"))?;
    let mut split_fractions = [0.0; 3];
    for f in &mut split_fractions {
        *f = r.f64().ok_or(RfError::Truncated("split fractions"))?;
    }

    let mut frames = Vec::with_capacity(num_frames);
    for _ in 0..num_frames {
        let mut i = Vec::with_capacity(frame_len);
        let mut q = Vec::with_capacity(frame_len);
        for _ in 0..frame_len {
            i.push(r.f32().ok_or(RfError::Truncated("samples"))? as f64);
            q.push(r.f32().ok_or(RfError::Truncated("samples"))? as f64);
        }
        frames.push(IqFrame { i, q, label: 0, snr_db: None });
    }
    for f in frames.iter_mut() {
        f.label = r.u16().ok_or(RfError::Truncated("labels"))? as usize;
    }
    let mut splits = Vec::with_capacity(num_frames);
    for _ in 0..num_frames {
        let tag = r.u8().ok_or(RfError::Truncated("split tags"))?;
        splits.push(
            Split::from_tag(tag)
                .ok_or_else(|| RfError::BadDataset(format!("unknown split tag {tag}")))?,
        );
    }
    if has_snr {
        for f in frames.iter_mut() {
            let v = r.f64().ok_or(RfError::Truncated("snr annotations"))?;
            f.snr_db = if v.is_nan() { None } else { Some(v) };
        }
    }
    if r.remaining() != 0 {
        return Err(RfError::BadDataset(format!("{} trailing bytes", r.remaining())));
    }

    let meta = DatasetMeta {
        num_classes,
        frame_len,
        stft: StftParams { window_len, stride, window },
        base_seed,
        split_fractions,
    };
    SignalDataset::new(frames, splits, meta)
}

impl SignalDataset {
    /// Writes the dataset atomically to `path`.
    pub fn write(&self, path: &Path) -> Result<(), RfError> {
        let bytes = dataset_to_bytes(self)?;
        ioutil::write_atomic(path, &bytes)?;
        Ok(())
    }

    /// Reads a dataset written by [`SignalDataset::write`].
    pub fn read(path: &Path) -> Result<SignalDataset, RfError> {
        let bytes = std::fs::read(path)?;
        dataset_from_bytes(&bytes)
    }
}

/// Per-sample metadata CSV for quick inspection: one row per frame with
/// index, label, split, SNR annotation, and mean power.
pub fn export_metadata_csv(ds: &SignalDataset, path: &Path) -> Result<(), RfError> {
    let mut out = String::from("index,label,split,snr_db,power\n");
    for (k, f) in ds.frames.iter().enumerate() {
        let snr = f.snr_db.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{k},{},{},{snr},{}\n",
            f.label,
            ds.splits[k].name(),
            f.power()
        ));
    }
    ioutil::write_atomic(path, out.as_bytes())?;
    Ok(())
}
