//! Evaluation: repeated cross-validation, situation sweeps, feature ranking
//! and PCA projection.

pub mod cv;
pub mod pca;
pub mod ranking;
pub mod sweep;

pub use cv::{
    misclassification_summary, run_cv, stratified_folds, CVConfig, ConfusionReport, EvalReport,
    Misclassification, StratificationWarning,
};
pub use pca::{pca_project, Projection};
pub use ranking::{information_gain, rank_information_gain, ranking_csv, RankedFeature};
pub use sweep::{sweep_datasets, sweep_situations, SweepInput, SweepSpec, SweepTable};
