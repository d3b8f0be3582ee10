//! Face areas and segment grids.
//!
//! Three straight axes split the face into six areas: the eye axis (mean
//! pupil height), the mouth axis and the vertical midline (mean pupil x).
//! Areas are numbered 1..6 as top-left, top-right, middle-left, middle-right,
//! bottom-left, bottom-right ("left" meaning smaller image x).
//!
//! Each area carries a rectangular grid anchored at the corner where the
//! midline meets the area's band boundary. Top grids grow upward from the eye
//! axis, middle grids downward from the eye axis, bottom grids downward from
//! the mouth axis; all grow horizontally away from the midline. Segments are
//! numbered row-major starting at that corner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Manually placed landmarks, in image pixels with y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceAxes {
    pub pupil_left: (f64, f64),
    pub pupil_right: (f64, f64),
    pub mouth_y: f64,
}

impl FaceAxes {
    pub fn new(pupil_left: (f64, f64), pupil_right: (f64, f64), mouth_y: f64) -> Result<Self> {
        let axes = Self {
            pupil_left,
            pupil_right,
            mouth_y,
        };
        axes.validate()?;
        Ok(axes)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.pupil_left.0,
            self.pupil_left.1,
            self.pupil_right.0,
            self.pupil_right.1,
            self.mouth_y,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("face axes must be finite"));
        }
        if self.pupil_left.0 >= self.pupil_right.0 {
            return Err(Error::invalid("left pupil must lie left of the right pupil"));
        }
        if self.mouth_y <= self.pupil_left.1.max(self.pupil_right.1) {
            return Err(Error::invalid("mouth must lie below both pupils"));
        }
        Ok(())
    }

    pub fn eye_y(&self) -> f64 {
        0.5 * (self.pupil_left.1 + self.pupil_right.1)
    }

    pub fn midline_x(&self) -> f64 {
        0.5 * (self.pupil_left.0 + self.pupil_right.0)
    }
}

/// Segment size and per-direction counts. One count serves both mirrored
/// directions (X1/X4, X2/X5, X3/X6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub seg_width: usize,
    pub seg_height: usize,
    pub nx_top: usize,
    pub ny_top: usize,
    pub nx_mid: usize,
    pub ny_mid: usize,
    pub nx_bot: usize,
    pub ny_bot: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.nx_top,
            self.ny_top,
            self.nx_mid,
            self.ny_mid,
            self.nx_bot,
            self.ny_bot,
        ];
        if self.seg_width == 0 || self.seg_height == 0 || counts.contains(&0) {
            return Err(Error::invalid(format!("degenerate grid spec {self:?}")));
        }
        Ok(())
    }

    /// `(nx, ny)` for an area number 1..=6.
    pub fn counts(&self, area: u8) -> (usize, usize) {
        match area {
            1 | 2 => (self.nx_top, self.ny_top),
            3 | 4 => (self.nx_mid, self.ny_mid),
            _ => (self.nx_bot, self.ny_bot),
        }
    }

    pub fn segment_count(&self) -> usize {
        2 * (self.nx_top * self.ny_top + self.nx_mid * self.ny_mid + self.nx_bot * self.ny_bot)
    }

    pub fn feature_count(&self) -> usize {
        3 * self.segment_count()
    }
}

const fn row(w: usize, h: usize, c: [usize; 6]) -> GridSpec {
    GridSpec {
        seg_width: w,
        seg_height: h,
        nx_top: c[0],
        ny_top: c[1],
        nx_mid: c[2],
        ny_mid: c[3],
        nx_bot: c[4],
        ny_bot: c[5],
    }
}

/// The 25 grid configurations ("situations"), index 0 = situation 1.
pub const SITUATIONS: [GridSpec; 25] = [
    row(5, 5, [3, 3, 4, 3, 2, 3]),
    row(5, 5, [8, 5, 8, 5, 5, 5]),
    row(5, 15, [2, 1, 3, 1, 2, 1]),
    row(5, 15, [8, 2, 8, 2, 5, 2]),
    row(5, 20, [5, 2, 5, 2, 2, 1]),
    row(10, 10, [5, 4, 5, 4, 5, 3]),
    row(10, 10, [5, 5, 5, 5, 5, 5]),
    row(10, 10, [5, 6, 5, 6, 5, 4]),
    row(10, 15, [5, 3, 5, 3, 3, 2]),
    row(15, 15, [4, 3, 4, 3, 3, 2]),
    row(15, 15, [5, 5, 5, 5, 5, 5]),
    row(15, 20, [3, 2, 3, 2, 2, 1]),
    row(20, 20, [5, 5, 5, 5, 5, 5]),
    row(20, 25, [2, 1, 2, 1, 1, 1]),
    row(25, 25, [2, 2, 2, 2, 2, 2]),
    row(25, 25, [4, 4, 4, 4, 4, 4]),
    row(25, 30, [1, 1, 1, 1, 1, 1]),
    row(30, 30, [2, 2, 2, 2, 1, 1]),
    row(30, 30, [2, 2, 2, 2, 2, 2]),
    row(30, 30, [3, 3, 3, 3, 2, 2]),
    row(30, 30, [4, 4, 4, 4, 4, 4]),
    row(35, 35, [3, 3, 3, 3, 3, 3]),
    row(40, 40, [3, 3, 3, 3, 2, 2]),
    row(40, 40, [3, 3, 3, 3, 3, 3]),
    row(50, 50, [2, 2, 2, 2, 1, 1]),
];

/// Published feature totals per situation, kept alongside the table as a
/// consistency check. Situation 10 is the one row whose published counts
/// (180 features) disagree with its published total.
pub const SITUATION_FEATURE_TOTALS: [usize; 25] = [
    162, 630, 42, 252, 132, 330, 450, 480, 216, 168, 450, 84, 450, 30, 72, 288, 18, 54, 72, 132,
    288, 162, 132, 162, 54,
];

pub fn situation_table() -> Vec<GridSpec> {
    SITUATIONS.to_vec()
}

/// Grid spec of situation `id` (1-based).
pub fn situation(id: u32) -> Result<GridSpec> {
    (1..=25)
        .contains(&id)
        .then(|| SITUATIONS[id as usize - 1])
        .ok_or_else(|| Error::invalid(format!("situation {id} is not in 1..=25")))
}

/// Half-open integer rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl SegRect {
    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }

    fn intersect(&self, o: &SegRect) -> SegRect {
        SegRect {
            x0: self.x0.max(o.x0),
            y0: self.y0.max(o.y0),
            x1: self.x1.min(o.x1),
            y1: self.y1.min(o.y1),
        }
    }

    pub fn area(&self) -> i64 {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) * (self.y1 - self.y0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub area: u8,
    pub index: usize,
    /// Rectangle after clipping to the image and the area's band.
    pub rect: SegRect,
    /// Set when clipping removed part (or all) of the nominal rectangle.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationLayout {
    pub width: usize,
    pub height: usize,
    pub axes: FaceAxes,
    pub spec: GridSpec,
    /// Canonical order: area 1..6, then segment index 1..k.
    pub segments: Vec<Segment>,
}

/// Places the six segment grids for `spec` around `axes`.
///
/// Segments are clipped to the image and to their own band (the middle band
/// ends at the mouth axis), so segments of different areas never overlap.
/// Clipped segments keep their slot in the layout and are flagged.
pub fn build_layout(
    axes: &FaceAxes,
    spec: &GridSpec,
    width: usize,
    height: usize,
) -> Result<SegmentationLayout> {
    axes.validate()?;
    spec.validate()?;
    let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64;
    if !inside(axes.pupil_left.0, axes.pupil_left.1)
        || !inside(axes.pupil_right.0, axes.pupil_right.1)
        || !inside(axes.midline_x(), axes.mouth_y)
    {
        return Err(Error::invalid("face axes lie outside the image"));
    }

    let xc = axes.midline_x().round() as i64;
    let ye = axes.eye_y().round() as i64;
    let ym = (axes.mouth_y.round() as i64).max(ye + 1);
    let (w, h) = (spec.seg_width as i64, spec.seg_height as i64);
    let image = SegRect {
        x0: 0,
        y0: 0,
        x1: width as i64,
        y1: height as i64,
    };

    let mut segments = Vec::with_capacity(spec.segment_count());
    for area in 1..=6u8 {
        let (nx, ny) = spec.counts(area);
        let left = area % 2 == 1;
        let band = match area {
            1 | 2 => SegRect { y0: i64::MIN / 4, y1: ye, ..image },
            3 | 4 => SegRect { y0: ye, y1: ym, ..image },
            _ => SegRect { y0: ym, y1: i64::MAX / 4, ..image },
        };
        let band = SegRect {
            x0: if left { i64::MIN / 4 } else { xc },
            x1: if left { xc } else { i64::MAX / 4 },
            ..band
        };
        let clip = band.intersect(&image);
        let mut any_visible = false;
        for r in 0..ny as i64 {
            let (y0, y1) = match area {
                1 | 2 => (ye - (r + 1) * h, ye - r * h),
                3 | 4 => (ye + r * h, ye + (r + 1) * h),
                _ => (ym + r * h, ym + (r + 1) * h),
            };
            for c in 0..nx as i64 {
                let (x0, x1) = if left {
                    (xc - (c + 1) * w, xc - c * w)
                } else {
                    (xc + c * w, xc + (c + 1) * w)
                };
                let nominal = SegRect { x0, y0, x1, y1 };
                let mut rect = nominal.intersect(&clip);
                if rect.is_empty() {
                    rect = SegRect { x0, y0, x1: x0, y1: y0 };
                } else {
                    any_visible = true;
                }
                segments.push(Segment {
                    area,
                    index: (r as usize) * nx + c as usize + 1,
                    rect,
                    truncated: rect != nominal,
                });
            }
        }
        if !any_visible {
            return Err(Error::LayoutOutOfImage { area });
        }
    }
    Ok(SegmentationLayout {
        width,
        height,
        axes: *axes,
        spec: *spec,
        segments,
    })
}

impl SegmentationLayout {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn feature_count(&self) -> usize {
        3 * self.segments.len()
    }

    /// Position in [`Self::segments`] of the segment containing `(x, y)`.
    pub fn locate_slot(&self, x: f64, y: f64) -> Option<usize> {
        self.segments.iter().position(|s| s.rect.contains(x, y))
    }

    /// `(area, index)` of the segment containing `(x, y)`, if any.
    pub fn locate(&self, x: f64, y: f64) -> Option<(u8, usize)> {
        self.locate_slot(x, y)
            .map(|i| (self.segments[i].area, self.segments[i].index))
    }

    pub fn truncated_count(&self) -> usize {
        self.segments.iter().filter(|s| s.truncated).count()
    }
}
