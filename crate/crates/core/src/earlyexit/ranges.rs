//! Confidence-range calibration (deployment phase) and the range table.

use std::path::Path;

use crate::forest::argmax_f64;
use crate::ioutil::{self, ByteReader};
use sha2::{Digest, Sha256};

use super::ExitError;

const MAGIC: &[u8; 4] = b"EXRT";
const VERSION: u16 = 1;

/// Closed confidence interval [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Which per-sample label keys the (branch, category) grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupingKey {
    /// The branch's own argmax prediction (the quantity the judgment
    /// phase conditions on).
    #[default]
    BranchArgmax,
    /// The ground-truth label.
    TrueLabel,
    /// The backbone's prediction.
    BackboneLabel,
}

/// Calibration run metadata carried with the table.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMeta {
    pub segments: usize,
    pub tolerance: f64,
    pub validation_size: usize,
}

/// Per-(branch, category) merged exit ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitRangeTable {
    /// ranges[m][n]: sorted disjoint closed intervals.
    pub ranges: Vec<Vec<Vec<Interval>>>,
    pub num_branches: usize,
    pub num_classes: usize,
    pub meta: CalibrationMeta,
    /// Calibration notes (e.g. segment-count clamping); not serialized.
    pub warnings: Vec<String>,
}

impl ExitRangeTable {
    /// A table with every cell empty: nothing ever exits early.
    pub fn empty(num_branches: usize, num_classes: usize) -> Self {
        Self {
            ranges: vec![vec![Vec::new(); num_classes]; num_branches],
            num_branches,
            num_classes,
            meta: CalibrationMeta { segments: 0, tolerance: 0.0, validation_size: 0 },
            warnings: Vec::new(),
        }
    }

    /// A table with every cell set to the same interval.
    pub fn uniform(num_branches: usize, num_classes: usize, interval: Interval) -> Self {
        Self {
            ranges: vec![vec![vec![interval]; num_classes]; num_branches],
            num_branches,
            num_classes,
            meta: CalibrationMeta { segments: 0, tolerance: 0.0, validation_size: 0 },
            warnings: Vec::new(),
        }
    }

    pub fn cell(&self, branch: usize, category: usize) -> &[Interval] {
        &self.ranges[branch][category]
    }

    /// True when `sub`'s every cell is a subset (as a point set) of the
    /// corresponding cell in `self`.
    pub fn covers(&self, sub: &ExitRangeTable) -> bool {
        if self.num_branches != sub.num_branches || self.num_classes != sub.num_classes {
            return false;
        }
        for m in 0..self.num_branches {
            for n in 0..self.num_classes {
                for small in &sub.ranges[m][n] {
                    let covered = self.ranges[m][n]
                        .iter()
                        .any(|big| big.lo <= small.lo && small.hi <= big.hi);
                    if !covered {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn validate_shape(&self, branches: usize, classes: usize) -> Result<(), ExitError> {
        if self.num_branches != branches || self.num_classes != classes {
            return Err(ExitError::ShapeMismatch(format!(
                "range table is {}x{}, expected {branches}x{classes}",
                self.num_branches, self.num_classes
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        ioutil::put_u16(&mut buf, VERSION);
        ioutil::put_u16(&mut buf, self.num_branches as u16);
        ioutil::put_u32(&mut buf, self.num_classes as u32);
        ioutil::put_u32(&mut buf, self.meta.segments as u32);
        ioutil::put_f64(&mut buf, self.meta.tolerance);
        ioutil::put_u64(&mut buf, self.meta.validation_size as u64);
        for m in 0..self.num_branches {
            for n in 0..self.num_classes {
                let cell = &self.ranges[m][n];
                ioutil::put_u32(&mut buf, cell.len() as u32);
                for iv in cell {
                    ioutil::put_f64(&mut buf, iv.lo);
                    ioutil::put_f64(&mut buf, iv.hi);
                }
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ExitError> {
        if bytes.len() < 36 {
            return Err(ExitError::Truncated("header"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(ExitError::ChecksumMismatch);
        }
        let mut r = ByteReader::new(body);
        if r.take(4).ok_or(ExitError::Truncated("magic"))? != MAGIC {
            return Err(ExitError::BadMagic);
        }
        let version = r.u16().ok_or(ExitError::Truncated("version"))?;
        if version != VERSION {
            return Err(ExitError::VersionMismatch { found: version, expected: VERSION });
        }
        let num_branches = r.u16().ok_or(ExitError::Truncated("branches"))? as usize;
        let num_classes = r.u32().ok_or(ExitError::Truncated("classes"))? as usize;
        let segments = r.u32().ok_or(ExitError::Truncated("segments"))? as usize;
        let tolerance = r.f64().ok_or(ExitError::Truncated("tolerance"))?;
        let validation_size = r.u64().ok_or(ExitError::Truncated("validation size"))? as usize;
        let mut ranges = vec![vec![Vec::new(); num_classes]; num_branches];
        for mrow in ranges.iter_mut() {
            for cell in mrow.iter_mut() {
                let k = r.u32().ok_or(ExitError::Truncated("cell length"))? as usize;
                for _ in 0..k {
                    let lo = r.f64().ok_or(ExitError::Truncated("interval"))?;
                    let hi = r.f64().ok_or(ExitError::Truncated("interval"))?;
                    cell.push(Interval { lo, hi });
                }
            }
        }
        if r.remaining() != 0 {
            return Err(ExitError::ShapeMismatch("trailing bytes in range table".into()));
        }
        Ok(Self {
            ranges,
            num_branches,
            num_classes,
            meta: CalibrationMeta { segments, tolerance, validation_size },
            warnings: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ExitError> {
        ioutil::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ExitError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Per-sample validation records feeding calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInputs {
    /// Ground-truth labels, length D.
    pub correct: Vec<usize>,
    /// Backbone predictions, length D.
    pub backbone: Vec<usize>,
    /// branch_labels[m][i]: branch m's prediction for sample i.
    pub branch_labels: Vec<Vec<usize>>,
    /// branch_conf[m][i]: branch m's confidence vector for sample i.
    pub branch_conf: Vec<Vec<Vec<f64>>>,
    pub num_classes: usize,
}

impl CalibrationInputs {
    pub fn len(&self) -> usize {
        self.correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correct.is_empty()
    }

    pub fn num_branches(&self) -> usize {
        self.branch_labels.len()
    }

    pub fn validate(&self) -> Result<(), ExitError> {
        let d = self.correct.len();
        if self.backbone.len() != d {
            return Err(ExitError::BadCalibration(format!(
                "{d} correct labels but {} backbone labels",
                self.backbone.len()
            )));
        }
        if self.branch_labels.len() != self.branch_conf.len() {
            return Err(ExitError::BadCalibration("branch label/confidence count mismatch".into()));
        }
        for (m, (labels, confs)) in
            self.branch_labels.iter().zip(&self.branch_conf).enumerate()
        {
            if labels.len() != d || confs.len() != d {
                return Err(ExitError::BadCalibration(format!(
                    "branch {m} has {} labels / {} confidences for {d} samples",
                    labels.len(),
                    confs.len()
                )));
            }
            for (i, c) in confs.iter().enumerate() {
                if c.len() != self.num_classes {
                    return Err(ExitError::BadCalibration(format!(
                        "branch {m} sample {i}: confidence length {} != {}",
                        c.len(),
                        self.num_classes
                    )));
                }
            }
        }
        for &l in self.correct.iter().chain(&self.backbone) {
            if l >= self.num_classes {
                return Err(ExitError::BadCalibration(format!("label {l} out of range")));
            }
        }
        Ok(())
    }

    fn grouping_label(&self, key: GroupingKey, m: usize, i: usize) -> usize {
        match key {
            GroupingKey::BranchArgmax => argmax_f64(&self.branch_conf[m][i]),
            GroupingKey::TrueLabel => self.correct[i],
            GroupingKey::BackboneLabel => self.backbone[i],
        }
    }
}

/// One calibration segment for inspection: its confidence interval, the
/// two accuracies measured inside it, and the resulting exit flag.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRow {
    pub interval: Interval,
    pub branch_accuracy: f64,
    pub backbone_accuracy: f64,
    pub exit_flag: bool,
    pub samples: usize,
}

/// Runs calibration steps 1 and 2 for one (branch, category) pair:
/// sorts the group's confidences, cuts them into `segments` equal-count
/// runs (the last absorbs the remainder), and compares branch accuracy
/// against backbone accuracy inside each run. A segment interval spans
/// from its first sorted confidence to the next segment's first (the
/// group maximum for the last), so consecutive flagged segments merge
/// seamlessly. Flag rule is the strict inequality
/// `backbone_acc - branch_acc < tolerance`.
pub fn segment_rows(
    inputs: &CalibrationInputs,
    branch: usize,
    category: usize,
    segments: usize,
    tolerance: f64,
    grouping: GroupingKey,
) -> Result<(Vec<SegmentRow>, Option<String>), ExitError> {
    inputs.validate()?;
    if segments == 0 {
        return Err(ExitError::BadCalibration("segment count must be >= 1".into()));
    }
    if branch >= inputs.num_branches() || category >= inputs.num_classes {
        return Err(ExitError::ShapeMismatch(format!(
            "(branch {branch}, category {category}) outside table"
        )));
    }
    let mut group: Vec<usize> = (0..inputs.len())
        .filter(|&i| inputs.grouping_label(grouping, branch, i) == category)
        .collect();
    if group.is_empty() {
        return Ok((Vec::new(), None));
    }
    // Stable sort by the category's confidence keeps ties deterministic.
    group.sort_by(|&a, &b| {
        inputs.branch_conf[branch][a][category]
            .total_cmp(&inputs.branch_conf[branch][b][category])
    });

    let d = group.len();
    let mut warning = None;
    let s_eff = if segments > d {
        warning = Some(format!(
            "branch {branch} category {category}: clamping {segments} segments to group size {d}"
        ));
        d
    } else {
        segments
    };
    let k = d / s_eff;
    let conf_at = |pos: usize| inputs.branch_conf[branch][group[pos]][category];

    let mut rows = Vec::with_capacity(s_eff);
    for b in 0..s_eff {
        let start = b * k;
        let end = if b == s_eff - 1 { d } else { (b + 1) * k };
        let members = &group[start..end];
        let mut branch_hits = 0usize;
        let mut backbone_hits = 0usize;
        for &i in members {
            if inputs.branch_labels[branch][i] == inputs.correct[i] {
                branch_hits += 1;
            }
            if inputs.backbone[i] == inputs.correct[i] {
                backbone_hits += 1;
            }
        }
        let n = members.len() as f64;
        let branch_accuracy = branch_hits as f64 / n;
        let backbone_accuracy = backbone_hits as f64 / n;
        let exit_flag = backbone_accuracy - branch_accuracy < tolerance;
        let hi = if b == s_eff - 1 { conf_at(d - 1) } else { conf_at((b + 1) * k) };
        rows.push(SegmentRow {
            interval: Interval { lo: conf_at(start), hi },
            branch_accuracy,
            backbone_accuracy,
            exit_flag,
            samples: members.len(),
        });
    }
    Ok((rows, warning))
}

/// Merges the flagged rows of one cell into disjoint intervals
/// (overlapping or touching intervals coalesce).
pub(crate) fn merge_flagged(rows: &[SegmentRow]) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    for row in rows.iter().filter(|r| r.exit_flag) {
        match out.last_mut() {
            Some(last) if row.interval.lo <= last.hi => {
                last.hi = last.hi.max(row.interval.hi);
            }
            _ => out.push(row.interval),
        }
    }
    out
}

/// Deployment-phase calibration over every (branch, category) pair.
pub fn calibrate_ranges(
    inputs: &CalibrationInputs,
    segments: usize,
    tolerance: f64,
    grouping: GroupingKey,
) -> Result<ExitRangeTable, ExitError> {
    inputs.validate()?;
    if inputs.is_empty() {
        return Err(ExitError::BadCalibration("no validation samples".into()));
    }
    if tolerance < 0.0 {
        return Err(ExitError::BadCalibration(format!("tolerance {tolerance} must be >= 0")));
    }
    let (m_total, n_total) = (inputs.num_branches(), inputs.num_classes);
    let mut ranges = vec![vec![Vec::new(); n_total]; m_total];
    let mut warnings = Vec::new();
    for m in 0..m_total {
        for n in 0..n_total {
            let (rows, warning) = segment_rows(inputs, m, n, segments, tolerance, grouping)?;
            if let Some(w) = warning {
                warnings.push(w);
            }
            ranges[m][n] = merge_flagged(&rows);
        }
    }
    Ok(ExitRangeTable {
        ranges,
        num_branches: m_total,
        num_classes: n_total,
        meta: CalibrationMeta { segments, tolerance, validation_size: inputs.len() },
        warnings,
    })
}
