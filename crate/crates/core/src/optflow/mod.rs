//! Phase-based optical flow over a neutral-to-apex sequence.
//!
//! Every frame is filtered with a bank of Gabor quadrature pairs. At each
//! sample position and for each filter, the response phase is unwrapped over
//! time and fitted with a straight line: the slope is the temporal phase
//! derivative `φ_t`, and the mean squared fit residual measures phase
//! linearity. The spatial phase gradient `∇φ` is measured from the response
//! itself. Each reliable filter contributes the constraint `∇φ · v = -φ_t`;
//! the velocity is their least-squares intersection, and the reported
//! displacement is `v · (frames - 1)`.
//!
//! Because the kernels are zero-mean and only phase is used, global
//! brightness scaling leaves the estimate unchanged.
//!
//! Per-frame motion must stay below half the shortest filter wavelength for
//! the phase unwrapping to be valid.

mod filters;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use filters::{build_filter_bank, FilterBank, FilterBankSpec, QuadratureFilter};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64};
use crate::seqio::GrayFrameSequence;

/// One displacement sample. `y` points down, so upward motion has `dy < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionVector {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    /// Fraction of the bank's filters that passed all reliability tests.
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    vectors: Vec<MotionVector>,
    width: usize,
    height: usize,
}

impl MotionField {
    pub fn new(vectors: Vec<MotionVector>, width: usize, height: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(vectors.len());
        for v in &vectors {
            let finite = [v.x, v.y, v.dx, v.dy, v.reliability]
                .iter()
                .all(|c| c.is_finite());
            if !finite || v.reliability < 0.0 {
                return Err(Error::invalid(format!("invalid motion vector {v:?}")));
            }
            if v.x < 0.0 || v.y < 0.0 || v.x >= width as f64 || v.y >= height as f64 {
                return Err(Error::invalid(format!(
                    "vector at ({}, {}) outside {width}x{height}",
                    v.x, v.y
                )));
            }
            if !seen.insert((v.x.to_bits(), v.y.to_bits())) {
                return Err(Error::invalid(format!(
                    "duplicate vector at ({}, {})",
                    v.x, v.y
                )));
            }
        }
        Ok(Self {
            vectors,
            width,
            height,
        })
    }

    pub fn vectors(&self) -> &[MotionVector] {
        &self.vectors
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// CSV body with header `x,y,dx,dy,reliability`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,dx,dy,reliability\n");
        for v in &self.vectors {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(v.x),
                fmt_f64(v.y),
                fmt_f64(v.dx),
                fmt_f64(v.dy),
                fmt_f64(v.reliability)
            ));
        }
        out
    }

    pub fn from_csv(text: &str, width: usize, height: usize) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "x,y,dx,dy,reliability" => {}
            _ => {
                return Err(Error::parse(
                    "motion field csv",
                    "header must be `x,y,dx,dy,reliability`",
                ))
            }
        }
        let mut vectors = Vec::new();
        for (i, line) in lines.enumerate() {
            let ctx = format!("motion field csv row {}", i + 2);
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 5 {
                return Err(Error::parse(ctx, "expected 5 cells"));
            }
            vectors.push(MotionVector {
                x: parse_f64(c[0], &ctx)?,
                y: parse_f64(c[1], &ctx)?,
                dx: parse_f64(c[2], &ctx)?,
                dy: parse_f64(c[3], &ctx)?,
                reliability: parse_f64(c[4], &ctx)?,
            });
        }
        MotionField::new(vectors, width, height)
    }
}

/// JSON sidecar written next to a motion-field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub sequence_id: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub vectors: usize,
    pub config: FlowConfig,
    pub bank: FilterBankSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Spacing of the sampling grid in pixels.
    pub sample_stride: usize,
    pub min_frames: usize,
    /// Largest accepted mean squared residual (rad²) of the phase-over-time fit.
    pub reliability_threshold: f64,
    /// Fewest reliable filters needed to solve for a velocity.
    pub min_valid_filters: usize,
    /// Smallest accepted response amplitude, relative to the filter's mean.
    pub min_relative_amplitude: f64,
    /// Largest accepted distance between measured and tuned wave vector,
    /// relative to the tuned magnitude.
    pub max_frequency_deviation: f64,
    /// Smallest accepted eigenvalue of the normal matrix `Σ ∇φ ∇φᵀ`.
    pub min_constraint_eigenvalue: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            sample_stride: 2,
            min_frames: 3,
            reliability_threshold: 0.1,
            min_valid_filters: 2,
            min_relative_amplitude: 0.1,
            max_frequency_deviation: 0.5,
            min_constraint_eigenvalue: 1e-3,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_stride < 1 {
            return Err(Error::invalid("sample_stride must be at least 1"));
        }
        if self.min_valid_filters < 2 {
            return Err(Error::invalid("min_valid_filters must be at least 2"));
        }
        if self.min_frames < 2 {
            return Err(Error::invalid("min_frames must be at least 2"));
        }
        if !(self.reliability_threshold >= 0.0) {
            return Err(Error::invalid("reliability_threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Wraps an angle into `(-π, π]`.
#[inline]
pub fn wrap_phase(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Slope and mean squared residual of the least-squares line through
/// `(t, phase[t])`.
fn fit_line(phase: &[f64]) -> (f64, f64) {
    let n = phase.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let p_mean = phase.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, p) in phase.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (p - p_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let rss: f64 = phase
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let r = p - p_mean - slope * (t as f64 - t_mean);
            r * r
        })
        .sum();
    (slope, rss / n)
}

/// Per-filter measurements at one sample position.
#[derive(Debug, Clone, Copy)]
struct Component {
    gx: f64,
    gy: f64,
    slope: f64,
    residual: f64,
    min_amplitude: f64,
}

fn sample_axis(len: usize, half: usize, stride: usize) -> Vec<usize> {
    let start = half + 1;
    if len < 2 * half + 3 {
        return Vec::new();
    }
    (start..len - half - 1).step_by(stride).collect()
}

/// Estimates the cumulative neutral-to-apex displacement on a sparse grid.
///
/// Positions without enough reliable filters are omitted. A field with no
/// reliable vector at all is reported as [`Error::EmptyField`].
pub fn estimate_flow(
    seq: &GrayFrameSequence,
    bank: &FilterBank,
    cfg: &FlowConfig,
) -> Result<MotionField> {
    cfg.validate()?;
    if seq.len() < cfg.min_frames {
        return Err(Error::SequenceTooShort {
            found: seq.len(),
            required: cfg.min_frames,
        });
    }
    let (w, h) = (seq.width(), seq.height());
    let xs = sample_axis(w, bank.half(), cfg.sample_stride);
    let ys = sample_axis(h, bank.half(), cfg.sample_stride);
    let positions: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    if positions.is_empty() {
        return Err(Error::invalid(format!(
            "{w}x{h} frames are smaller than the filter support {}",
            bank.support
        )));
    }

    let gauss: Vec<Vec<f64>> = seq
        .frames()
        .par_iter()
        .map(|f| filters::gaussian_response(bank, f))
        .collect();

    let per_filter: Vec<(Vec<Component>, f64)> = bank
        .filters
        .par_iter()
        .map(|filter| {
            let responses: Vec<_> = seq
                .frames()
                .iter()
                .zip(&gauss)
                .map(|(f, g)| filters::filter_response(filter, f, g))
                .collect();
            let comps: Vec<Component> = positions
                .iter()
                .map(|&(x, y)| measure(&responses, x, y))
                .collect();
            let mean_amp = comps.iter().map(|c| c.min_amplitude).sum::<f64>() / comps.len() as f64;
            (comps, mean_amp)
        })
        .collect();

    let frames_minus_one = (seq.len() - 1) as f64;
    let n_filters = bank.len() as f64;
    let vectors: Vec<MotionVector> = positions
        .par_iter()
        .enumerate()
        .filter_map(|(i, &(x, y))| {
            let mut a = [0.0f64; 3]; // normal matrix entries xx, xy, yy
            let mut b = [0.0f64; 2];
            let mut used = 0usize;
            for (filter, (comps, mean_amp)) in bank.filters.iter().zip(&per_filter) {
                let c = comps[i];
                if !accept(filter, &c, *mean_amp, cfg) {
                    continue;
                }
                a[0] += c.gx * c.gx;
                a[1] += c.gx * c.gy;
                a[2] += c.gy * c.gy;
                b[0] -= c.gx * c.slope;
                b[1] -= c.gy * c.slope;
                used += 1;
            }
            if used < cfg.min_valid_filters {
                return None;
            }
            let tr = a[0] + a[2];
            let det = a[0] * a[2] - a[1] * a[1];
            let disc = ((a[0] - a[2]).powi(2) + 4.0 * a[1] * a[1]).sqrt();
            let lambda_min = 0.5 * (tr - disc);
            if lambda_min < cfg.min_constraint_eigenvalue || det <= 0.0 {
                return None;
            }
            let vx = (a[2] * b[0] - a[1] * b[1]) / det;
            let vy = (a[0] * b[1] - a[1] * b[0]) / det;
            Some(MotionVector {
                x: x as f64,
                y: y as f64,
                dx: vx * frames_minus_one,
                dy: vy * frames_minus_one,
                reliability: used as f64 / n_filters,
            })
        })
        .collect();

    if vectors.is_empty() {
        return Err(Error::EmptyField(seq.sequence_id.clone()));
    }
    MotionField::new(vectors, w, h)
}

fn measure(responses: &[filters::Response], x: usize, y: usize) -> Component {
    let n = responses.len();
    let mut unwrapped = Vec::with_capacity(n);
    let mut gx = 0.0;
    let mut gy = 0.0;
    let mut min_amplitude = f64::INFINITY;
    let mut prev = 0.0;
    for (t, r) in responses.iter().enumerate() {
        let c = r.at(x, y);
        min_amplitude = min_amplitude.min(c.norm());
        let phase = c.arg();
        // prev ≡ previous raw phase (mod 2π), so this wraps the frame-to-frame step
        let p = if t == 0 { phase } else { prev + wrap_phase(phase - prev) };
        unwrapped.push(p);
        prev = p;
        gx += (r.at(x + 1, y) * r.at(x - 1, y).conj()).arg() / 2.0;
        gy += (r.at(x, y + 1) * r.at(x, y - 1).conj()).arg() / 2.0;
    }
    let (slope, residual) = fit_line(&unwrapped);
    Component {
        gx: gx / n as f64,
        gy: gy / n as f64,
        slope,
        residual,
        min_amplitude,
    }
}

fn accept(filter: &QuadratureFilter, c: &Component, mean_amp: f64, cfg: &FlowConfig) -> bool {
    if !(c.min_amplitude > 0.0) || c.min_amplitude < cfg.min_relative_amplitude * mean_amp {
        return false;
    }
    if !(c.residual <= cfg.reliability_threshold) {
        return false;
    }
    let (kx, ky) = filter.wave_vector();
    let k = kx.hypot(ky);
    (c.gx - kx).hypot(c.gy - ky) <= cfg.max_frequency_deviation * k
}
