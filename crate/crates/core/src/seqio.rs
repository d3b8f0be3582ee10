//! Loading and preprocessing of expression image sequences.
//!
//! Frames are stored as row-major `f64` intensity grids in `[0, 1]`. RGB input
//! is reduced to Rec.601 luminance; gray input is only rescaled.

use std::fmt;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EmotionLabel;

pub const MIN_FRAMES: usize = 2;
pub const MAX_FRAMES: usize = 8;

/// A single grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame must have non-zero size"));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", width * height),
                found: format!("{} samples", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Samples `f` at every pixel centre. Values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn crop(&self, rect: &PixelRect) -> GrayFrame {
        let mut data = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + rect.x..row + rect.x + rect.width]);
        }
        GrayFrame {
            width: rect.width,
            height: rect.height,
            data,
        }
    }
}

/// Axis-aligned pixel rectangle `[x, x + width) × [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }
}

impl fmt::Display for PixelRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}+{}", self.width, self.height, self.x, self.y)
    }
}

/// Ordered frames of one expression episode, neutral first, apex last.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrameSequence {
    frames: Vec<GrayFrame>,
    width: usize,
    height: usize,
    pub sequence_id: String,
    pub label: Option<EmotionLabel>,
}

impl GrayFrameSequence {
    pub fn new(
        sequence_id: impl Into<String>,
        frames: Vec<GrayFrame>,
        label: Option<EmotionLabel>,
    ) -> Result<Self> {
        if frames.len() < MIN_FRAMES {
            return Err(Error::SequenceTooShort {
                found: frames.len(),
                required: MIN_FRAMES,
            });
        }
        if frames.len() > MAX_FRAMES {
            return Err(Error::invalid(format!(
                "{} frames exceed the maximum of {MAX_FRAMES}",
                frames.len()
            )));
        }
        let (width, height) = (frames[0].width, frames[0].height);
        if let Some(f) = frames.iter().find(|f| f.width != width || f.height != height) {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height}"),
                found: format!("{}x{}", f.width, f.height),
            });
        }
        Ok(Self {
            frames,
            width,
            height,
            sequence_id: sequence_id.into(),
            label,
        })
    }

    pub fn frames(&self) -> &[GrayFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Converts a decoded image into a `[0, 1]` intensity frame.
///
/// Pixels with equal RGB channels map to `v / 255` exactly, so gray content
/// stored as RGB converts identically to gray input.
pub fn to_gray_frame(img: &DynamicImage, path: &Path) -> Result<GrayFrame> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect()
        }
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luminance(p.0)).collect(),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("unsupported pixel layout {:?}", other.color()),
            })
        }
    };
    GrayFrame::new(w, h, data)
}

/// Rec.601 luma of an 8-bit RGB pixel, scaled to `[0, 1]`.
pub fn luminance([r, g, b]: [u8; 3]) -> f64 {
    if r == g && g == b {
        return f64::from(r) / 255.0;
    }
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    (y / 255.0).clamp(0.0, 1.0)
}

/// Expands a frame glob and returns the matches in ascending filename order.
pub fn expand_frames(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| Error::parse("frame pattern", e.to_string()))?;
    let mut out = Vec::new();
    for entry in paths {
        let p = entry.map_err(|e| Error::io(e.path().to_path_buf(), std::io::Error::from(e)))?;
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// Keeps `MAX_FRAMES` evenly spaced indices from `n`, always retaining the
/// first (neutral) and last (apex) frame.
pub fn subsample_indices(n: usize) -> Vec<usize> {
    if n <= MAX_FRAMES {
        return (0..n).collect();
    }
    (0..MAX_FRAMES)
        .map(|i| (i * (n - 1) + (MAX_FRAMES - 1) / 2) / (MAX_FRAMES - 1))
        .collect()
}

/// Loads every PGM/PNG frame matched by `path_pattern`.
///
/// Longer sequences are subsampled to eight frames with [`subsample_indices`].
/// The sequence id is the name of the directory holding the frames.
pub fn load_sequence(path_pattern: &str, label: Option<EmotionLabel>) -> Result<GrayFrameSequence> {
    let paths = expand_frames(path_pattern)?;
    if paths.len() < MIN_FRAMES {
        return Err(Error::SequenceTooShort {
            found: paths.len(),
            required: MIN_FRAMES,
        });
    }
    let keep = subsample_indices(paths.len());
    if keep.len() < paths.len() {
        log::info!(
            "{path_pattern}: subsampling {} frames to {}",
            paths.len(),
            keep.len()
        );
    }
    let mut frames = Vec::with_capacity(keep.len());
    for &i in &keep {
        let path = &paths[i];
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory(&bytes).map_err(|e| Error::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;
        frames.push(to_gray_frame(&img, path)?);
    }
    let id = paths[0]
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    GrayFrameSequence::new(id, frames, label)
}

/// Cuts the same rectangle out of every frame.
pub fn crop_face(seq: &GrayFrameSequence, rect: PixelRect) -> Result<GrayFrameSequence> {
    let fits = rect.width > 0
        && rect.height > 0
        && rect.x.checked_add(rect.width).is_some_and(|r| r <= seq.width)
        && rect.y.checked_add(rect.height).is_some_and(|b| b <= seq.height);
    if !fits {
        return Err(Error::CropOutOfBounds {
            rect: rect.to_string(),
            width: seq.width,
            height: seq.height,
        });
    }
    Ok(GrayFrameSequence {
        frames: seq.frames.iter().map(|f| f.crop(&rect)).collect(),
        width: rect.width,
        height: rect.height,
        sequence_id: seq.sequence_id.clone(),
        label: seq.label,
    })
}

/// Writes a frame as an 8-bit binary PGM.
pub fn write_pgm(frame: &GrayFrame, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend(frame.data.iter().map(|v| (v * 255.0).round() as u8));
    crate::io::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, RgbImage};

    fn seq_of(width: usize, height: usize, n: usize) -> GrayFrameSequence {
        let frames = (0..n)
            .map(|k| GrayFrame::from_fn(width, height, |x, y| ((x * 7 + y * 3 + k) % 11) as f64 / 10.0))
            .collect();
        GrayFrameSequence::new("s", frames, None).unwrap()
    }

    #[test]
    fn loads_two_identical_pgms() {
        let dir = tempfile::tempdir().unwrap();
        let frame = GrayFrame::from_fn(4, 4, |_, _| 0.5);
        for name in ["f0.pgm", "f1.pgm"] {
            write_pgm(&frame, &dir.path().join(name)).unwrap();
        }
        let pattern = format!("{}/*.pgm", dir.path().display());
        let seq = load_sequence(&pattern, None).unwrap();
        assert_eq!(seq.len(), 2);
        let first = seq.frames()[0].data()[0];
        assert!(seq.frames().iter().all(|f| f.data().iter().all(|&v| v == first)));
    }

    #[test]
    fn rgb_endpoints_map_to_unit_interval() {
        assert_eq!(luminance([255, 255, 255]), 1.0);
        assert_eq!(luminance([0, 0, 0]), 0.0);
        assert!((luminance([255, 0, 0]) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn gray_conversion_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let gray = GrayImage::from_fn(3, 2, |x, y| image::Luma([(x * 40 + y * 90) as u8]));
        let rgb = RgbImage::from_fn(3, 2, |x, y| {
            let v = (x * 40 + y * 90) as u8;
            image::Rgb([v, v, v])
        });
        let p = dir.path().join("g.png");
        let a = to_gray_frame(&DynamicImage::ImageLuma8(gray), &p).unwrap();
        let b = to_gray_frame(&DynamicImage::ImageRgb8(rgb), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frames_sorted_by_filename_and_mixed_sizes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&GrayFrame::from_fn(4, 4, |_, _| 1.0), &dir.path().join("b.pgm")).unwrap();
        write_pgm(&GrayFrame::from_fn(4, 4, |_, _| 0.0), &dir.path().join("a.pgm")).unwrap();
        let pattern = format!("{}/*.pgm", dir.path().display());
        let seq = load_sequence(&pattern, None).unwrap();
        assert_eq!(seq.frames()[0].get(0, 0), 0.0);
        assert_eq!(seq.frames()[1].get(0, 0), 1.0);

        write_pgm(&GrayFrame::from_fn(5, 4, |_, _| 0.0), &dir.path().join("c.pgm")).unwrap();
        assert!(matches!(
            load_sequence(&pattern, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn too_few_files_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&GrayFrame::from_fn(4, 4, |_, _| 0.0), &dir.path().join("a.pgm")).unwrap();
        let pattern = format!("{}/*.pgm", dir.path().display());
        assert!(matches!(
            load_sequence(&pattern, None),
            Err(Error::SequenceTooShort { found: 1, .. })
        ));
    }

    #[test]
    fn unreadable_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.pgm", "b.pgm"] {
            std::fs::write(dir.path().join(name), b"not an image").unwrap();
        }
        let pattern = format!("{}/*.pgm", dir.path().display());
        match load_sequence(&pattern, None) {
            Err(Error::Image { path, .. }) => assert!(path.ends_with("a.pgm")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eight_frames_of_face_size() {
        let seq = seq_of(280, 330, 8);
        assert_eq!((seq.len(), seq.width(), seq.height()), (8, 280, 330));
    }

    #[test]
    fn crop_identity_and_face_size() {
        let seq = seq_of(640, 490, 2);
        let full = crop_face(&seq, PixelRect::new(0, 0, 640, 490)).unwrap();
        assert_eq!(full, seq);
        let face = crop_face(&seq, PixelRect::new(180, 80, 280, 330)).unwrap();
        assert_eq!((face.width(), face.height()), (280, 330));
        assert_eq!(face.frames()[1].get(0, 0), seq.frames()[1].get(180, 80));
    }

    #[test]
    fn crop_past_right_edge_fails() {
        let seq = seq_of(20, 10, 2);
        assert!(matches!(
            crop_face(&seq, PixelRect::new(1, 0, 20, 10)),
            Err(Error::CropOutOfBounds { .. })
        ));
    }

    #[test]
    fn nested_crops_compose() {
        let seq = seq_of(30, 25, 3);
        let outer = PixelRect::new(3, 4, 20, 15);
        let inner = PixelRect::new(2, 5, 10, 6);
        let twice = crop_face(&crop_face(&seq, outer).unwrap(), inner).unwrap();
        let once = crop_face(&seq, PixelRect::new(5, 9, 10, 6)).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn subsampling_keeps_endpoints() {
        let idx = subsample_indices(30);
        assert_eq!(idx.len(), MAX_FRAMES);
        assert_eq!(idx[0], 0);
        assert_eq!(*idx.last().unwrap(), 29);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample_indices(5), vec![0, 1, 2, 3, 4]);
    }
}
