//! Oriented Gabor quadrature filters.
//!
//! Each filter is `g(u) g(v) (exp(-i k·(u, v)) - c)` where `g` is a sampled
//! Gaussian with `sigma = (support - 1) / 6` and `c` removes the DC response,
//! so the filter ignores additive and (through the phase) multiplicative
//! brightness changes. The complex exponential factorizes along x and y,
//! which keeps the convolution separable for every orientation. The sign
//! of the exponent makes the response phase grow along `k`, so the spatial
//! phase gradient of a matched grating equals the wave vector.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqio::GrayFrame;

type C64 = Complex<f64>;

/// Parameters of a filter bank, as stored in configs and sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBankSpec {
    pub orientations: usize,
    /// Radial frequencies in cycles per pixel.
    pub frequencies: Vec<f64>,
    /// Kernel side length in pixels (odd).
    pub support: usize,
}

impl Default for FilterBankSpec {
    fn default() -> Self {
        Self {
            orientations: 6,
            frequencies: vec![0.08, 0.16],
            support: 21,
        }
    }
}

impl FilterBankSpec {
    pub fn build(&self) -> Result<FilterBank> {
        build_filter_bank(self.orientations, &self.frequencies, self.support)
    }
}

#[derive(Debug, Clone)]
pub struct QuadratureFilter {
    /// Direction of the wave vector, radians in `[0, π)`.
    pub orientation: f64,
    /// Cycles per pixel.
    pub frequency: f64,
    pub support: usize,
    row: Vec<C64>,
    col: Vec<C64>,
    dc: f64,
}

impl QuadratureFilter {
    /// Wave vector in radians per pixel.
    pub fn wave_vector(&self) -> (f64, f64) {
        let k = std::f64::consts::TAU * self.frequency;
        (k * self.orientation.cos(), k * self.orientation.sin())
    }

    fn kernel(&self) -> Vec<C64> {
        let s = self.support;
        let mut out = Vec::with_capacity(s * s);
        for v in 0..s {
            for u in 0..s {
                let g = self.row[u].norm() * self.col[v].norm();
                out.push(self.row[u] * self.col[v] - C64::new(self.dc * g, 0.0));
            }
        }
        out
    }

    /// Real (even) part of the kernel, row-major `support × support`,
    /// indexed `[(v + h) * support + (u + h)]` for offsets `u, v ∈ [-h, h]`.
    pub fn even_kernel(&self) -> Vec<f64> {
        self.kernel().iter().map(|c| c.re).collect()
    }

    /// Imaginary (odd) part of the kernel, same layout as [`Self::even_kernel`].
    pub fn odd_kernel(&self) -> Vec<f64> {
        self.kernel().iter().map(|c| c.im).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FilterBank {
    pub filters: Vec<QuadratureFilter>,
    pub support: usize,
    pub sigma: f64,
    gauss: Vec<f64>,
}

impl FilterBank {
    pub fn half(&self) -> usize {
        self.support / 2
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}

/// Builds `orientations × frequencies.len()` quadrature pairs with
/// orientations spaced `π / orientations` apart.
pub fn build_filter_bank(
    orientations: usize,
    frequencies: &[f64],
    support: usize,
) -> Result<FilterBank> {
    if orientations < 5 {
        return Err(Error::BadFilterSpec(format!(
            "need at least 5 orientations, got {orientations}"
        )));
    }
    if frequencies.is_empty() {
        return Err(Error::BadFilterSpec("no frequencies given".into()));
    }
    if let Some(f) = frequencies.iter().find(|f| !(**f > 0.0 && **f < 0.5)) {
        return Err(Error::BadFilterSpec(format!(
            "frequency {f} outside (0, 0.5) cycles/px"
        )));
    }
    if support < 5 || support % 2 == 0 {
        return Err(Error::BadFilterSpec(format!(
            "support must be odd and at least 5, got {support}"
        )));
    }
    let h = (support / 2) as i64;
    let sigma = (support - 1) as f64 / 6.0;
    let gauss: Vec<f64> = (-h..=h)
        .map(|u| (-(u * u) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let gsum: f64 = gauss.iter().sum();
    let gauss: Vec<f64> = gauss.iter().map(|g| g / gsum).collect();

    let mut filters = Vec::with_capacity(orientations * frequencies.len());
    for &frequency in frequencies {
        for m in 0..orientations {
            let orientation = std::f64::consts::PI * m as f64 / orientations as f64;
            let k = std::f64::consts::TAU * frequency;
            let (kx, ky) = (k * orientation.cos(), k * orientation.sin());
            let row: Vec<C64> = (-h..=h)
                .zip(&gauss)
                .map(|(u, g)| C64::from_polar(*g, -kx * u as f64))
                .collect();
            let col: Vec<C64> = (-h..=h)
                .zip(&gauss)
                .map(|(v, g)| C64::from_polar(*g, -ky * v as f64))
                .collect();
            // c = Σ g(u)g(v) e^{ik·r} / Σ g(u)g(v); the Gaussian is normalized,
            // and the imaginary part vanishes by symmetry.
            let dc = (row.iter().sum::<C64>() * col.iter().sum::<C64>()).re;
            filters.push(QuadratureFilter {
                orientation,
                frequency,
                support,
                row,
                col,
                dc,
            });
        }
    }
    Ok(FilterBank {
        filters,
        support,
        sigma,
        gauss,
    })
}

/// Filter responses of one frame over the valid region, stored full-size
/// (entries closer than `half` to the border are zero).
pub(crate) struct Response {
    pub width: usize,
    pub data: Vec<C64>,
}

impl Response {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> C64 {
        self.data[y * self.width + x]
    }
}

/// Gaussian-envelope response of a frame, shared by all filters of a bank.
pub(crate) fn gaussian_response(bank: &FilterBank, frame: &GrayFrame) -> Vec<f64> {
    let (w, hgt) = (frame.width(), frame.height());
    let h = bank.half();
    let s = bank.support;
    let mut rows = vec![0.0; w * hgt];
    for y in 0..hgt {
        let line = &frame.data()[y * w..(y + 1) * w];
        for x in h..w.saturating_sub(h) {
            rows[y * w + x] = (0..s).map(|u| line[x + u - h] * bank.gauss[u]).sum();
        }
    }
    let mut out = vec![0.0; w * hgt];
    for y in h..hgt.saturating_sub(h) {
        for x in h..w.saturating_sub(h) {
            out[y * w + x] = (0..s).map(|v| rows[(y + v - h) * w + x] * bank.gauss[v]).sum();
        }
    }
    out
}

/// Correlates a frame with one quadrature filter using the separable form.
pub(crate) fn filter_response(
    filter: &QuadratureFilter,
    frame: &GrayFrame,
    gauss_resp: &[f64],
) -> Response {
    let (w, hgt) = (frame.width(), frame.height());
    let s = filter.support;
    let h = s / 2;
    let mut rows = vec![C64::new(0.0, 0.0); w * hgt];
    for y in 0..hgt {
        let line = &frame.data()[y * w..(y + 1) * w];
        for x in h..w.saturating_sub(h) {
            let mut acc = C64::new(0.0, 0.0);
            for u in 0..s {
                acc += filter.row[u] * line[x + u - h];
            }
            rows[y * w + x] = acc;
        }
    }
    let mut data = vec![C64::new(0.0, 0.0); w * hgt];
    for y in h..hgt.saturating_sub(h) {
        for x in h..w.saturating_sub(h) {
            let mut acc = C64::new(0.0, 0.0);
            for v in 0..s {
                acc += rows[(y + v - h) * w + x] * filter.col[v];
            }
            data[y * w + x] = acc - filter.dc * gauss_resp[y * w + x];
        }
    }
    Response { width: w, data }
}
