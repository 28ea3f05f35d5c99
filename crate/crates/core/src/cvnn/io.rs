//! Model serialization (.cvm): versioned header, named state table,
//! FLOPs metadata, SHA-256 checksum trailer.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::flops::count_flops;
use super::model::{CvnnModel, ModelConfig};
use super::CvnnError;
use crate::ioutil::{self, ByteReader};

const MAGIC: &[u8; 4] = b"CVNM";
const VERSION: u16 = 1;

impl CvnnModel {
    /// Named state vectors: learnable parameters plus BN running
    /// statistics, in a stable order.
    fn state_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_param(&mut |name, _| names.push(name));
        names.push("stem.bn.running".into());
        for g in 1..=4 {
            for b in 1..=2 {
                names.push(format!("g{g}.b{b}.bn1.running"));
                names.push(format!("g{g}.b{b}.bn2.running"));
                if g > 1 && b == 1 {
                    names.push(format!("g{g}.b{b}.down.bn.running"));
                }
            }
        }
        names
    }

    fn state_vector(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(stripped) = name.strip_suffix(".running") {
            let bn = self.bn_by_path(stripped)?;
            let mut v = bn.running_mean.clone();
            v.extend_from_slice(&bn.running_cov);
            return Some(v);
        }
        let mut found = None;
        self.for_each_param(&mut |n, p| {
            if n == name {
                found = Some(p.w.clone());
            }
        });
        found
    }

    fn set_state_vector(&mut self, name: &str, data: &[f64]) -> Result<(), CvnnError> {
        if let Some(stripped) = name.strip_suffix(".running") {
            let bn = self
                .bn_by_path_mut(stripped)
                .ok_or_else(|| CvnnError::ShapeMismatch(format!("unknown state {name}")))?;
            let (nm, nc) = (bn.running_mean.len(), bn.running_cov.len());
            if data.len() != nm + nc {
                return Err(CvnnError::ShapeMismatch(format!(
                    "state {name}: file has {} values, expected {}",
                    data.len(),
                    nm + nc
                )));
            }
            bn.running_mean.copy_from_slice(&data[..nm]);
            bn.running_cov.copy_from_slice(&data[nm..]);
            return Ok(());
        }
        let mut result = Err(CvnnError::ShapeMismatch(format!("unknown state {name}")));
        self.for_each_param_mut(&mut |n, p| {
            if n == name {
                result = if data.len() == p.w.len() {
                    p.w.copy_from_slice(data);
                    Ok(())
                } else {
                    Err(CvnnError::ShapeMismatch(format!(
                        "state {name}: file has {} values, expected {}",
                        data.len(),
                        p.w.len()
                    )))
                };
            }
        });
        result
    }

    fn bn_by_path(&self, path: &str) -> Option<&super::norm::CbnLayer> {
        match path {
            "stem.bn" => Some(&self.stem_bn),
            _ => {
                let rest = path.strip_prefix('g')?;
                let (g, rest) = rest.split_once(".b")?;
                let g: usize = g.parse::<usize>().ok()?.checked_sub(1)?;
                let (b, which) = rest.split_once('.')?;
                let b: usize = b.parse::<usize>().ok()?.checked_sub(1)?;
                let block = &self.groups.get(g)?[b];
                match which {
                    "bn1" => Some(&block.bn1),
                    "bn2" => Some(&block.bn2),
                    "down.bn" => block.down.as_ref().map(|(_, bn)| bn),
                    _ => None,
                }
            }
        }
    }

    fn bn_by_path_mut(&mut self, path: &str) -> Option<&mut super::norm::CbnLayer> {
        match path {
            "stem.bn" => Some(&mut self.stem_bn),
            _ => {
                let rest = path.strip_prefix('g')?;
                let (g, rest) = rest.split_once(".b")?;
                let g: usize = g.parse::<usize>().ok()?.checked_sub(1)?;
                let (b, which) = rest.split_once('.')?;
                let b: usize = b.parse::<usize>().ok()?.checked_sub(1)?;
                let block = &mut self.groups.get_mut(g)?[b];
                match which {
                    "bn1" => Some(&mut block.bn1),
                    "bn2" => Some(&mut block.bn2),
                    "down.bn" => block.down.as_mut().map(|(_, bn)| bn),
                    _ => None,
                }
            }
        }
    }

    /// Rejects a model whose classifier width disagrees with the
    /// expected class count, naming the offending layer.
    pub fn expect_classes(&self, expected: usize) -> Result<(), CvnnError> {
        if self.cfg.num_classes != expected {
            return Err(CvnnError::ClassCount {
                layer: "fc".into(),
                found: self.cfg.num_classes,
                expected,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CvnnError> {
        let bytes = model_to_bytes(self);
        ioutil::write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CvnnModel, CvnnError> {
        let bytes = std::fs::read(path)?;
        model_from_bytes(&bytes)
    }
}

/// Serializes a model to its binary layout.
pub fn model_to_bytes(model: &CvnnModel) -> Vec<u8> {
    let cfg = &model.cfg;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    ioutil::put_u16(&mut buf, VERSION);
    ioutil::put_u32(&mut buf, cfg.num_classes as u32);
    ioutil::put_u32(&mut buf, cfg.input_hw.0 as u32);
    ioutil::put_u32(&mut buf, cfg.input_hw.1 as u32);
    ioutil::put_u32(&mut buf, cfg.width_scale as u32);
    ioutil::put_u32(&mut buf, cfg.stem_stride as u32);
    ioutil::put_f64(&mut buf, cfg.bn_eps);
    ioutil::put_f64(&mut buf, cfg.bn_momentum);
    ioutil::put_u64(&mut buf, cfg.seed);

    // FLOPs metadata.
    let flops = count_flops(model);
    ioutil::put_u64(&mut buf, flops.total);
    for p in flops.tap_prefix {
        ioutil::put_u64(&mut buf, p);
    }
    ioutil::put_u64(&mut buf, flops.real_twin_total);

    let names = model.state_names();
    ioutil::put_u32(&mut buf, names.len() as u32);
    for name in &names {
        let data = model.state_vector(name).expect("state table covers all names");
        ioutil::put_u16(&mut buf, name.len() as u16);
        buf.extend_from_slice(name.as_bytes());
        ioutil::put_u32(&mut buf, data.len() as u32);
        for v in data {
            ioutil::put_f64(&mut buf, v);
        }
    }

    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

/// Parses a model serialized by [`model_to_bytes`].
pub fn model_from_bytes(bytes: &[u8]) -> Result<CvnnModel, CvnnError> {
    if bytes.len() < 38 {
        return Err(CvnnError::Truncated("header"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(CvnnError::ChecksumMismatch);
    }

    let mut r = ByteReader::new(body);
    if r.take(4).ok_or(CvnnError::Truncated("magic"))? != MAGIC {
        return Err(CvnnError::BadMagic);
    }
    let version = r.u16().ok_or(CvnnError::Truncated("version"))?;
    if version != VERSION {
        return Err(CvnnError::VersionMismatch { found: version, expected: VERSION });
    }
    let num_classes = r.u32().ok_or(CvnnError::Truncated("header"))? as usize;
    let in_h = r.u32().ok_or(CvnnError::Truncated("header"))? as usize;
    let in_w = r.u32().ok_or(CvnnError::Truncated("header"))? as usize;
    let width_scale = r.u32().ok_or(CvnnError::Truncated("header"))? as usize;
    let stem_stride = r.u32().ok_or(CvnnError::Truncated("header"))? as usize;
    let bn_eps = r.f64().ok_or(CvnnError::Truncated("header"))?;
    let bn_momentum = r.f64().ok_or(CvnnError::Truncated("header"))?;
    let seed = r.u64().ok_or(CvnnError::Truncated("header"))?;
    for _ in 0..6 {
        // FLOPs metadata is derivable; skip on read.
        r.u64().ok_or(CvnnError::Truncated("flops metadata"))?;
    }

    let cfg = ModelConfig {
        num_classes,
        input_hw: (in_h, in_w),
        width_scale,
        stem_stride,
        bn_eps,
        bn_momentum,
        seed,
    };
    let mut model = CvnnModel::init(cfg)?;

    let n_states = r.u32().ok_or(CvnnError::Truncated("state table"))? as usize;
    for _ in 0..n_states {
        let name_len = r.u16().ok_or(CvnnError::Truncated("state name"))? as usize;
        let name_bytes = r.take(name_len).ok_or(CvnnError::Truncated("state name"))?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| CvnnError::ShapeMismatch("state name not utf-8".into()))?
            .to_string();
        let len = r.u32().ok_or(CvnnError::Truncated("state data"))? as usize;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(r.f64().ok_or(CvnnError::Truncated("state data"))?);
        }
        model.set_state_vector(&name, &data)?;
    }
    if r.remaining() != 0 {
        return Err(CvnnError::ShapeMismatch("trailing bytes in model file".into()));
    }
    Ok(model)
}
