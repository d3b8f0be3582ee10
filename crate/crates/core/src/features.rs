//! Per-segment motion features and dataset cleaning.
//!
//! For segment `(i, j)` holding `Nij` of the field's `N` vectors:
//!
//! * `P  = Nij / N`
//! * `LX = mean dx` over the segment's vectors
//! * `LY = mean dy` over the segment's vectors (y down, so upward motion is
//!   negative)
//!
//! `N` counts every vector of the field, including those outside all
//! segments. Empty segments yield the triplet `(0, 0, 0)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facegrid::SegmentationLayout;
use crate::io::{fmt_f64, parse_f64};
use crate::optflow::MotionField;

/// Twelve expression subtypes plus the four basic emotions they collapse to.
///
/// Declaration order interleaves basic emotions with their subtypes, so the
/// derived ordering is the class order for both the 12- and 6-class tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionLabel {
    Anger,
    AngerT1,
    AngerT2,
    Disgust,
    Fear,
    FearT1,
    FearT2,
    Happiness,
    HappinessT1,
    HappinessT2,
    Sadness,
    SadnessT1,
    SadnessT2,
    SadnessT3,
    SadnessT4,
    Surprise,
}

impl EmotionLabel {
    pub const SUBTYPES: [EmotionLabel; 12] = [
        EmotionLabel::AngerT1,
        EmotionLabel::AngerT2,
        EmotionLabel::Disgust,
        EmotionLabel::FearT1,
        EmotionLabel::FearT2,
        EmotionLabel::HappinessT1,
        EmotionLabel::HappinessT2,
        EmotionLabel::SadnessT1,
        EmotionLabel::SadnessT2,
        EmotionLabel::SadnessT3,
        EmotionLabel::SadnessT4,
        EmotionLabel::Surprise,
    ];

    pub const BASIC: [EmotionLabel; 6] = [
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happiness,
        EmotionLabel::Sadness,
        EmotionLabel::Surprise,
    ];

    pub fn collapse(self) -> EmotionLabel {
        use EmotionLabel::*;
        match self {
            AngerT1 | AngerT2 => Anger,
            FearT1 | FearT2 => Fear,
            HappinessT1 | HappinessT2 => Happiness,
            SadnessT1 | SadnessT2 | SadnessT3 | SadnessT4 => Sadness,
            other => other,
        }
    }

    pub fn is_basic(self) -> bool {
        self.collapse() == self
    }

    pub fn name(self) -> &'static str {
        use EmotionLabel::*;
        match self {
            Anger => "Anger",
            AngerT1 => "AngerT1",
            AngerT2 => "AngerT2",
            Disgust => "Disgust",
            Fear => "Fear",
            FearT1 => "FearT1",
            FearT2 => "FearT2",
            Happiness => "Happiness",
            HappinessT1 => "HappinessT1",
            HappinessT2 => "HappinessT2",
            Sadness => "Sadness",
            SadnessT1 => "SadnessT1",
            SadnessT2 => "SadnessT2",
            SadnessT3 => "SadnessT3",
            SadnessT4 => "SadnessT4",
            Surprise => "Surprise",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EmotionLabel::SUBTYPES
            .iter()
            .chain(EmotionLabel::BASIC.iter())
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::parse("emotion label", format!("unknown label `{s}`")))
    }
}

/// One `3n` feature vector laid out as `(P, LX, LY)` per segment in
/// canonical (area, segment) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub sequence_id: String,
    pub label: Option<EmotionLabel>,
    pub values: Vec<f64>,
}

/// Column names `A{area}S{seg}_{P|LX|LY}` in canonical order.
pub fn feature_names(layout: &SegmentationLayout) -> Vec<String> {
    layout
        .segments
        .iter()
        .flat_map(|s| {
            ["P", "LX", "LY"]
                .into_iter()
                .map(move |k| format!("A{}S{}_{k}", s.area, s.index))
        })
        .collect()
}

/// Converts `A1S4_LY` into the subscripted display form `LY₁₄`.
pub fn display_name(name: &str) -> String {
    fn sub(digits: &str) -> String {
        digits
            .chars()
            .map(|c| match c.to_digit(10) {
                Some(d) => char::from_u32(0x2080 + d).unwrap_or(c),
                None => c,
            })
            .collect()
    }
    let parse = || -> Option<String> {
        let rest = name.strip_prefix('A')?;
        let (area, rest) = rest.split_once('S')?;
        let (seg, kind) = rest.split_once('_')?;
        Some(format!("{kind}{}{}", sub(area), sub(seg)))
    };
    parse().unwrap_or_else(|| name.to_string())
}

/// Computes the `(P, LX, LY)` triplet of every segment.
pub fn extract_features(
    field: &MotionField,
    layout: &SegmentationLayout,
    label: Option<EmotionLabel>,
    sequence_id: &str,
) -> Result<FeatureRecord> {
    if field.width() != layout.width || field.height() != layout.height {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} layout", layout.width, layout.height),
            found: format!("{}x{} motion field", field.width(), field.height()),
        });
    }
    let total = field.vectors().len();
    if total == 0 {
        return Err(Error::EmptyMotionField);
    }
    let k = layout.segment_count();
    let mut counts = vec![0usize; k];
    let mut sum_dx = vec![0.0f64; k];
    let mut sum_dy = vec![0.0f64; k];
    for v in field.vectors() {
        if let Some(slot) = layout.locate_slot(v.x, v.y) {
            counts[slot] += 1;
            sum_dx[slot] += v.dx;
            sum_dy[slot] += v.dy;
        }
    }
    let mut values = Vec::with_capacity(3 * k);
    for slot in 0..k {
        let n = counts[slot];
        if n == 0 {
            values.extend([0.0, MISSING_FILL, MISSING_FILL]);
        } else {
            values.push(n as f64 / total as f64);
            values.push(sum_dx[slot] / n as f64);
            values.push(sum_dy[slot] / n as f64);
        }
    }
    Ok(FeatureRecord {
        sequence_id: sequence_id.to_string(),
        label,
        values,
    })
}

/// Value substituted for missing and discarded entries.
pub const MISSING_FILL: f64 = 0.0;

/// Thresholds in units of the column's standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub outlier_sigma: f64,
    pub extreme_sigma: f64,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self {
            outlier_sigma: 3.0,
            extreme_sigma: 5.0,
        }
    }
}

impl CleaningPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.outlier_sigma > 0.0 && self.extreme_sigma > self.outlier_sigma) {
            return Err(Error::invalid(
                "cleaning policy needs extreme_sigma > outlier_sigma > 0",
            ));
        }
        Ok(())
    }
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CleaningStats {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut iter = rows.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("cannot compute statistics of no records"))?;
        let d = first.len();
        let mut n = 1usize;
        let mut sum: Vec<f64> = first.to_vec();
        let mut rest: Vec<&[f64]> = Vec::new();
        for r in iter {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{d} features"),
                    found: format!("{} features", r.len()),
                });
            }
            for (s, v) in sum.iter_mut().zip(r) {
                *s += v;
            }
            n += 1;
            rest.push(r);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut ss = vec![0.0; d];
        for r in std::iter::once(first).chain(rest) {
            for ((acc, v), m) in ss.iter_mut().zip(r).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = ss.iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnAudit {
    pub clamped: usize,
    pub discarded: usize,
    pub zero_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningAudit {
    pub policy: CleaningPolicy,
    pub stats: CleaningStats,
    pub columns: Vec<ColumnAudit>,
    pub records: usize,
    /// Always "value": a discarded extreme value is replaced by the missing
    /// fill and its record is kept.
    pub discard_mode: String,
}

impl CleaningAudit {
    pub fn total_clamped(&self) -> usize {
        self.columns.iter().map(|c| c.clamped).sum()
    }

    pub fn total_discarded(&self) -> usize {
        self.columns.iter().map(|c| c.discarded).sum()
    }
}

/// Applies winsorizing and extreme-value removal with frozen statistics.
///
/// For each column with non-zero spread: `|z| <= outlier` is kept,
/// `outlier < |z| <= extreme` is clamped to `mean ± outlier·std`, and
/// `|z| > extreme` becomes [`MISSING_FILL`]. Non-finite values are treated
/// as missing.
pub fn apply_cleaning(
    records: &mut [FeatureRecord],
    stats: &CleaningStats,
    policy: &CleaningPolicy,
) -> Result<Vec<ColumnAudit>> {
    policy.validate()?;
    let d = stats.mean.len();
    let mut audit = vec![ColumnAudit::default(); d];
    for (a, s) in audit.iter_mut().zip(&stats.std) {
        a.zero_variance = !(*s > 0.0);
    }
    for rec in records.iter_mut() {
        if rec.values.len() != d {
            return Err(Error::DimensionMismatch {
                expected: format!("{d} features"),
                found: format!("{} features", rec.values.len()),
            });
        }
        for (j, v) in rec.values.iter_mut().enumerate() {
            if !v.is_finite() {
                *v = MISSING_FILL;
                audit[j].discarded += 1;
                continue;
            }
            if audit[j].zero_variance {
                continue;
            }
            let (m, s) = (stats.mean[j], stats.std[j]);
            let z = (*v - m) / s;
            if z.abs() > policy.extreme_sigma {
                *v = MISSING_FILL;
                audit[j].discarded += 1;
            } else if z.abs() > policy.outlier_sigma {
                *v = m + z.signum() * policy.outlier_sigma * s;
                audit[j].clamped += 1;
            }
        }
    }
    Ok(audit)
}

/// Cleans a dataset using statistics computed over the dataset itself.
pub fn clean_dataset(
    records: &[FeatureRecord],
    policy: &CleaningPolicy,
) -> Result<(Vec<FeatureRecord>, CleaningAudit)> {
    if records.len() < 2 {
        return Err(Error::invalid("cleaning needs at least two records"));
    }
    let stats = CleaningStats::fit(records.iter().map(|r| r.values.as_slice()))?;
    let mut out = records.to_vec();
    let columns = apply_cleaning(&mut out, &stats, policy)?;
    let audit = CleaningAudit {
        policy: *policy,
        stats,
        columns,
        records: records.len(),
        discard_mode: "value".into(),
    };
    Ok((out, audit))
}

/// Replaces a subtype label with its basic emotion.
pub fn collapse_labels(record: &FeatureRecord) -> Result<FeatureRecord> {
    let label = record
        .label
        .ok_or_else(|| Error::MissingLabel(record.sequence_id.clone()))?;
    Ok(FeatureRecord {
        label: Some(label.collapse()),
        ..record.clone()
    })
}

/// Header plus records in the feature CSV format.
pub fn write_feature_csv(names: &[String], records: &[FeatureRecord]) -> Result<String> {
    let mut out = String::from("sequence_id,label");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for r in records {
        if r.values.len() != names.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features", names.len()),
                found: format!("{} features", r.values.len()),
            });
        }
        if r.sequence_id.contains([',', '\n', '"']) {
            return Err(Error::invalid(format!(
                "sequence id `{}` contains a CSV delimiter",
                r.sequence_id
            )));
        }
        out.push_str(&r.sequence_id);
        out.push(',');
        if let Some(l) = r.label {
            out.push_str(l.name());
        }
        for v in &r.values {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_feature_csv(text: &str) -> Result<(Vec<String>, Vec<FeatureRecord>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("feature csv", "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "sequence_id" || cols[1] != "label" {
        return Err(Error::parse(
            "feature csv",
            "header must start with `sequence_id,label`",
        ));
    }
    let names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let ctx = format!("feature csv row {}", lineno + 2);
        if cells.len() != cols.len() {
            return Err(Error::parse(
                ctx,
                format!("{} cells, expected {}", cells.len(), cols.len()),
            ));
        }
        let label = match cells[1].trim() {
            "" => None,
            s => Some(s.parse()?),
        };
        let values = cells[2..]
            .iter()
            .map(|c| parse_f64(c, &ctx))
            .collect::<Result<Vec<_>>>()?;
        records.push(FeatureRecord {
            sequence_id: cells[0].to_string(),
            label,
            values,
        });
    }
    Ok((names, records))
}
