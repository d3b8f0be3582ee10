//! Facial-expression recognition from optical-flow motion vectors.
//!
//! The crate covers the whole chain from image sequences to classifier
//! evaluation:
//!
//! * [`seqio`] loads neutral-to-apex grayscale frame sequences,
//! * [`optflow`] estimates the cumulative displacement field with a
//!   phase-based (Gabor quadrature) method,
//! * [`facegrid`] lays the six axis-anchored face areas and their segment
//!   grids over the image,
//! * [`features`] turns a motion field into `(P, LX, LY)` triplets per
//!   segment and cleans datasets,
//! * [`learners`] holds five from-scratch classifier families,
//! * [`evalkit`] runs repeated stratified cross-validation, situation sweeps,
//!   information-gain ranking and PCA projection,
//! * [`synth`] and [`pipeline`] provide prototype-driven synthetic data and
//!   the end-to-end driver used by the CLI.

pub mod error;
pub mod evalkit;
pub mod facegrid;
pub mod features;
pub mod io;
pub mod learners;
pub mod optflow;
pub mod pipeline;
pub mod rng;
pub mod seqio;
pub mod synth;

pub use error::{Error, Result};
