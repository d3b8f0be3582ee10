//! Per-class prototype feature vectors for situation 19 and a Gaussian
//! generator around them.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EmotionLabel, FeatureRecord};
use crate::learners::Dataset;
use crate::rng;

const EMBEDDED: &str = include_str!("../../data/prototypes_s19.tsv");

/// Areas × segments per area in situation 19.
pub const AREAS: usize = 6;
pub const SEGMENTS_PER_AREA: usize = 4;
pub const FEATURES: usize = AREAS * SEGMENTS_PER_AREA * 3;

/// Something the loader noticed but did not use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionNote {
    pub line: usize,
    pub area: u8,
    pub segment: usize,
    pub feature: String,
    pub message: String,
}

/// Mean `(P, LX, LY)` per (label, area, segment), in canonical feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub labels: Vec<EmotionLabel>,
    /// `values[label][feature]`, 72 features per label.
    pub values: Vec<Vec<f64>>,
    pub notes: Vec<IngestionNote>,
}

impl PrototypeBank {
    /// The bank shipped with the crate.
    pub fn situation19() -> Self {
        Self::parse(EMBEDDED).expect("embedded prototype table is well formed")
    }

    /// Parses the tab-separated `area seg feature v1..v12` format.
    ///
    /// Cells past the twelfth value are recorded as notes and ignored. A
    /// value cell that does not parse is never guessed; the bank has to be
    /// complete, so parsing fails and names the label.
    pub fn parse(text: &str) -> Result<Self> {
        let labels = EmotionLabel::SUBTYPES.to_vec();
        let mut values = vec![vec![f64::NAN; FEATURES]; labels.len()];
        let mut notes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = format!("prototype table line {line_no}");
            let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cells.len() < 3 + labels.len() {
                return Err(Error::parse(ctx, format!("expected 15 cells, found {}", cells.len())));
            }
            let area: u8 = cells[0]
                .parse()
                .ok()
                .filter(|a| (1..=AREAS as u8).contains(a))
                .ok_or_else(|| Error::parse(&ctx, format!("bad area `{}`", cells[0])))?;
            let segment: usize = cells[1]
                .parse()
                .ok()
                .filter(|s| (1..=SEGMENTS_PER_AREA).contains(s))
                .ok_or_else(|| Error::parse(&ctx, format!("bad segment `{}`", cells[1])))?;
            // typeset tables sometimes leave subscripts in the feature cell
            let feature: String = cells[2]
                .chars()
                .filter(|c| c.is_ascii_alphabetic())
                .collect();
            let offset = match feature.as_str() {
                "P" => 0,
                "LX" => 1,
                "LY" => 2,
                _ => return Err(Error::parse(&ctx, format!("bad feature `{}`", cells[2]))),
            };
            if feature != cells[2] {
                notes.push(IngestionNote {
                    line: line_no,
                    area,
                    segment,
                    feature: feature.clone(),
                    message: format!("feature cell `{}` read as `{feature}`", cells[2]),
                });
            }
            let column = ((area as usize - 1) * SEGMENTS_PER_AREA + segment - 1) * 3 + offset;
            for (li, cell) in cells[3..3 + labels.len()].iter().enumerate() {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values[li][column] = v,
                    _ => notes.push(IngestionNote {
                        line: line_no,
                        area,
                        segment,
                        feature: feature.clone(),
                        message: format!("unparseable cell `{cell}` for {}", labels[li]),
                    }),
                }
            }
            if cells.len() > 3 + labels.len() {
                notes.push(IngestionNote {
                    line: line_no,
                    area,
                    segment,
                    feature: feature.clone(),
                    message: format!(
                        "extra cell(s) {:?} ignored",
                        &cells[3 + labels.len()..]
                    ),
                });
            }
        }
        for (li, row) in values.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::parse(
                    "prototype table",
                    format!("no usable value for {} feature {j}", labels[li]),
                ));
            }
            if let Some(j) = row.iter().step_by(3).position(|p| *p < 0.0) {
                return Err(Error::parse(
                    "prototype table",
                    format!("negative P for {} segment slot {j}", labels[li]),
                ));
            }
        }
        Ok(Self {
            labels,
            values,
            notes,
        })
    }

    pub fn prototype(&self, label: EmotionLabel) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| *l == label)
            .map(|i| self.values[i].as_slice())
    }

    /// `(P, LX, LY)` of one segment (area 1..6, segment 1..4).
    pub fn triplet(&self, label: EmotionLabel, area: u8, segment: usize) -> Option<(f64, f64, f64)> {
        let proto = self.prototype(label)?;
        if !(1..=AREAS as u8).contains(&area) || !(1..=SEGMENTS_PER_AREA).contains(&segment) {
            return None;
        }
        let j = ((area as usize - 1) * SEGMENTS_PER_AREA + segment - 1) * 3;
        Some((proto[j], proto[j + 1], proto[j + 2]))
    }
}

/// Draws `n_per_class` records per label as prototype plus independent
/// `N(0, noise_sigma²)` noise per feature, with P features clamped at 0.
///
/// Draw order is label-major (bank order), then record, then feature, from
/// the stream `(seed, TAG_SYNTH, 1)`.
pub fn generate_synthetic(
    bank: &PrototypeBank,
    n_per_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "noise_sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    let mut r = rng::stream(seed, &[rng::TAG_SYNTH, 1]);
    let mut records = Vec::with_capacity(bank.labels.len() * n_per_class);
    for (label, proto) in bank.labels.iter().zip(&bank.values) {
        for i in 0..n_per_class {
            let values = proto
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    let v = m + noise_sigma * z;
                    if j % 3 == 0 {
                        v.max(0.0)
                    } else {
                        v
                    }
                })
                .collect();
            records.push(FeatureRecord {
                sequence_id: format!("synth_{label}_{i:03}"),
                label: Some(*label),
                values,
            });
        }
    }
    Dataset::new(records)
}

/// Feature names of the situation-19 layout in canonical order.
pub fn situation19_feature_names() -> Vec<String> {
    (1..=AREAS)
        .flat_map(|a| {
            (1..=SEGMENTS_PER_AREA).flat_map(move |s| {
                ["P", "LX", "LY"]
                    .into_iter()
                    .map(move |k| format!("A{a}S{s}_{k}"))
            })
        })
        .collect()
}
