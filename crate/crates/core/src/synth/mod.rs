//! Synthetic data: textures with known motion, prototype-driven feature sets
//! and expression sequences.

pub mod prototypes;
pub mod sequences;
pub mod texture;

pub use prototypes::{generate_synthetic, situation19_feature_names, PrototypeBank};
pub use sequences::{expression_sequence, write_synthetic_sequences, SequenceSpec};
pub use texture::{translating_sequence, Texture};
