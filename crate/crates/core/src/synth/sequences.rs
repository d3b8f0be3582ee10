//! Synthetic expression sequences: a random texture warped by a smooth
//! displacement field shaped after a label's prototype motion.

use std::path::Path;

use rand::Rng;

use super::prototypes::{PrototypeBank, AREAS, SEGMENTS_PER_AREA};
use super::texture::Texture;
use crate::error::{Error, Result};
use crate::facegrid::{build_layout, situation, FaceAxes};
use crate::features::EmotionLabel;
use crate::pipeline::{Manifest, ManifestEntry};
use crate::rng;
use crate::seqio::{write_pgm, GrayFrame, GrayFrameSequence};

/// Geometry and motion settings of generated sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub axes: FaceAxes,
    /// Multiplies the prototype LX/LY before warping.
    pub gain: f64,
    /// Spread of each segment's displacement bump, in pixels.
    pub bump_sigma: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            width: 200,
            height: 240,
            frames: 5,
            axes: FaceAxes {
                pupil_left: (70.0, 90.0),
                pupil_right: (130.0, 90.0),
                mouth_y: 160.0,
            },
            gain: 1.5,
            bump_sigma: 12.0,
        }
    }
}

/// Cumulative displacement at `(x, y)` for one label: Gaussian bumps at the
/// situation-19 segment centers weighted by the prototype `(LX, LY)`.
struct MotionModel {
    bumps: Vec<(f64, f64, f64, f64)>, // cx, cy, dx, dy
    inv_two_sigma2: f64,
}

impl MotionModel {
    fn new(bank: &PrototypeBank, label: EmotionLabel, spec: &SequenceSpec, scale: f64) -> Result<Self> {
        let layout = build_layout(&spec.axes, &situation(19)?, spec.width, spec.height)?;
        let mut bumps = Vec::with_capacity(AREAS * SEGMENTS_PER_AREA);
        for seg in &layout.segments {
            let (_, lx, ly) = bank
                .triplet(label, seg.area, seg.index)
                .ok_or_else(|| Error::invalid(format!("no prototype for {label}")))?;
            let r = seg.rect;
            let (cx, cy) = (0.5 * (r.x0 + r.x1) as f64, 0.5 * (r.y0 + r.y1) as f64);
            bumps.push((cx, cy, scale * lx, scale * ly));
        }
        Ok(Self {
            bumps,
            inv_two_sigma2: 1.0 / (2.0 * spec.bump_sigma * spec.bump_sigma),
        })
    }

    fn at(&self, x: f64, y: f64) -> (f64, f64) {
        self.bumps.iter().fold((0.0, 0.0), |(ax, ay), &(cx, cy, dx, dy)| {
            let w = (-((x - cx).powi(2) + (y - cy).powi(2)) * self.inv_two_sigma2).exp();
            (ax + w * dx, ay + w * dy)
        })
    }
}

/// One sequence of `label`; `index` selects the texture and the motion
/// strength jitter (±20 %) from the seed.
pub fn expression_sequence(
    bank: &PrototypeBank,
    label: EmotionLabel,
    index: u64,
    spec: &SequenceSpec,
    seed: u64,
) -> Result<GrayFrameSequence> {
    if spec.frames < 2 {
        return Err(Error::invalid("synthetic sequences need at least 2 frames"));
    }
    let texture_seed = rng::derive_seed(seed, &[rng::TAG_SYNTH, 2, label as u64, index]);
    let texture = Texture::random(texture_seed, 24);
    let mut r = rng::stream(seed, &[rng::TAG_SYNTH, 3, label as u64, index]);
    let jitter = 0.8 + 0.4 * r.random::<f64>();
    let motion = MotionModel::new(bank, label, spec, spec.gain * jitter)?;
    let field: Vec<(f64, f64)> = (0..spec.height)
        .flat_map(|y| (0..spec.width).map(move |x| (x, y)))
        .map(|(x, y)| motion.at(x as f64, y as f64))
        .collect();
    let last = (spec.frames - 1) as f64;
    let frames = (0..spec.frames)
        .map(|t| {
            let s = t as f64 / last;
            GrayFrame::from_fn(spec.width, spec.height, |x, y| {
                let (dx, dy) = field[y * spec.width + x];
                texture.intensity(x as f64 - s * dx, y as f64 - s * dy, 0.5, 0.3)
            })
        })
        .collect();
    GrayFrameSequence::new(format!("synth_{label}_{index:03}"), frames, Some(label))
}

/// Writes `n_per_class` sequences per label as PGM frames under `dir` plus
/// `dir/manifest.json`, and returns the manifest.
pub fn write_synthetic_sequences(
    dir: &Path,
    bank: &PrototypeBank,
    labels: &[EmotionLabel],
    n_per_class: usize,
    spec: &SequenceSpec,
    seed: u64,
) -> Result<Manifest> {
    let mut sequences = Vec::with_capacity(labels.len() * n_per_class);
    for &label in labels {
        for i in 0..n_per_class {
            let seq = expression_sequence(bank, label, i as u64, spec, seed)?;
            let sub = dir.join(&seq.sequence_id);
            for (t, f) in seq.frames().iter().enumerate() {
                write_pgm(f, &sub.join(format!("frame_{t:02}.pgm")))?;
            }
            sequences.push(ManifestEntry {
                id: seq.sequence_id.clone(),
                frames: format!("{}/frame_*.pgm", seq.sequence_id),
                label: Some(label),
                axes: spec.axes,
                crop: None,
            });
        }
    }
    let manifest = Manifest { sequences };
    crate::io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
