//! Analytic textures and synthetic frame sequences with known motion.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::Result;
use crate::rng;
use crate::seqio::{GrayFrame, GrayFrameSequence};

/// Sum of random plane waves, defined on the continuous plane so shifted
/// copies can be sampled exactly.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<(f64, f64, f64, f64)>, // kx, ky (rad/px), phase, amplitude
    norm: f64,
}

impl Texture {
    /// `components` waves with frequencies in `[0.04, 0.2]` cycles/px and
    /// uniformly random orientation and phase.
    pub fn random(seed: u64, components: usize) -> Self {
        let mut r = rng::stream(seed, &[rng::TAG_SYNTH, 0]);
        let freq = Uniform::new(0.04, 0.2).expect("valid range");
        let angle = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
        let waves: Vec<_> = (0..components)
            .map(|_| {
                let f = freq.sample(&mut r) * std::f64::consts::TAU;
                let theta = angle.sample(&mut r);
                let phase = angle.sample(&mut r);
                let amp = 0.5 + 0.5 * r.random::<f64>();
                (f * theta.cos(), f * theta.sin(), phase, amp)
            })
            .collect();
        let norm = waves.iter().map(|w| w.3).sum::<f64>().max(1e-12);
        Self { waves, norm }
    }

    /// Value in `[-1, 1]` at a continuous position.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(kx, ky, p, a)| a * (kx * x + ky * y + p).cos())
            .sum::<f64>()
            / self.norm
    }

    /// Intensity in `[mean - contrast, mean + contrast]`.
    pub fn intensity(&self, x: f64, y: f64, mean: f64, contrast: f64) -> f64 {
        mean + contrast * self.eval(x, y)
    }
}

/// Frames of `texture` translating by `velocity` px/frame, each frame's
/// intensity multiplied by `gain^t`.
pub fn translating_sequence(
    texture: &Texture,
    width: usize,
    height: usize,
    frames: usize,
    velocity: (f64, f64),
    gain: f64,
    offset: (f64, f64),
) -> Result<GrayFrameSequence> {
    let frames = (0..frames)
        .map(|t| {
            let (sx, sy) = (velocity.0 * t as f64, velocity.1 * t as f64);
            let g = gain.powi(t as i32);
            GrayFrame::from_fn(width, height, |x, y| {
                let (px, py) = (x as f64 - offset.0 - sx, y as f64 - offset.1 - sy);
                g * texture.intensity(px, py, 0.3, 0.2)
            })
        })
        .collect();
    GrayFrameSequence::new("translating", frames, None)
}
