//! Five multiclass classifier families and the model artifact they share.
//!
//! * [`tree`]: a gain-ratio tree with pessimistic pruning and a Gini
//!   (CART-style) tree with cost-complexity pruning. Both use binary
//!   threshold splits on raw features.
//! * [`svm`]: one-vs-one linear soft-margin machines solved with SMO.
//! * [`discriminant`]: linear discriminant analysis with a ridge-regularized
//!   pooled covariance.
//! * [`network`]: a ReLU multilayer perceptron with softmax output.
//!
//! [`train_model`] standardizes the inputs of the SVM, discriminant and
//! network families with training-set statistics and stores the
//! standardizer in the model, so [`TrainedModel::predict`] takes raw feature
//! vectors for every family.

pub mod discriminant;
pub mod network;
pub mod svm;
pub mod tree;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EmotionLabel, FeatureRecord};

pub use discriminant::{train_discriminant, DiscriminantConfig, DiscriminantModel};
pub use network::{train_network, Network, NetworkConfig};
pub use svm::{train_linear_svm, SvmConfig, SvmModel};
pub use tree::{train_entropy_tree, train_gini_tree, EntropyTreeConfig, GiniTreeConfig, Tree};

/// Labeled records of equal dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<FeatureRecord>,
    class_set: Vec<EmotionLabel>,
    dim: usize,
}

impl Dataset {
    pub fn new(records: Vec<FeatureRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::invalid("dataset has no records"))?;
        let dim = first.values.len();
        let mut classes = BTreeSet::new();
        for r in &records {
            let label = r
                .label
                .ok_or_else(|| Error::MissingLabel(r.sequence_id.clone()))?;
            if r.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: format!("{dim} features"),
                    found: format!("{} features in {}", r.values.len(), r.sequence_id),
                });
            }
            classes.insert(label);
        }
        Ok(Self {
            records,
            class_set: classes.into_iter().collect(),
            dim,
        })
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<FeatureRecord> {
        self.records
    }

    /// Labels present, in label order.
    pub fn class_set(&self) -> &[EmotionLabel] {
        &self.class_set
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.values.as_slice()).collect()
    }

    /// Position of every record's label in [`Self::class_set`].
    pub fn targets(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| {
                let l = r.label.expect("validated on construction");
                self.class_set.binary_search(&l).expect("label in class set")
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }

    /// Same records with subtype labels replaced by their basic emotion.
    pub fn collapsed(&self) -> Result<Dataset> {
        Dataset::new(
            self.records
                .iter()
                .map(crate::features::collapse_labels)
                .collect::<Result<_>>()?,
        )
    }

    fn map_values(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Dataset {
        Dataset {
            records: self
                .records
                .iter()
                .map(|r| FeatureRecord {
                    values: f(&r.values),
                    ..r.clone()
                })
                .collect(),
            class_set: self.class_set.clone(),
            dim: self.dim,
        }
    }
}

/// Zero-mean, unit-variance scaling fitted on training rows. Columns with
/// zero spread map to a constant 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// `1 / std`, or 0 for zero-variance columns.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len() as f64;
        let d = data.dim();
        let mut mean = vec![0.0; d];
        for r in data.records() {
            for (m, v) in mean.iter_mut().zip(&r.values) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in data.records() {
            for ((s, v), m) in var.iter_mut().zip(&r.values).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let std = (s / n).sqrt();
                if std > 1e-12 {
                    1.0 / std
                } else {
                    0.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    EntropyTree,
    GiniTree,
    LinearSvm,
    Discriminant,
    Network,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::EntropyTree,
        Family::GiniTree,
        Family::LinearSvm,
        Family::Discriminant,
        Family::Network,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::EntropyTree => "entropy_tree",
            Family::GiniTree => "gini_tree",
            Family::LinearSvm => "svm",
            Family::Discriminant => "discriminant",
            Family::Network => "network",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "entropy_tree" | "entropy" | "c50" | "c5.0" => Family::EntropyTree,
            "gini_tree" | "gini" | "cart" | "crt" => Family::GiniTree,
            "svm" | "linear_svm" => Family::LinearSvm,
            "discriminant" | "lda" => Family::Discriminant,
            "network" | "dl" | "mlp" => Family::Network,
            _ => return Err(Error::parse("trainer", format!("unknown trainer `{s}`"))),
        })
    }
}

/// A learner family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainerSpec {
    EntropyTree(EntropyTreeConfig),
    GiniTree(GiniTreeConfig),
    #[serde(rename = "svm")]
    LinearSvm(SvmConfig),
    Discriminant(DiscriminantConfig),
    Network(NetworkConfig),
}

impl TrainerSpec {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::EntropyTree => TrainerSpec::EntropyTree(Default::default()),
            Family::GiniTree => TrainerSpec::GiniTree(Default::default()),
            Family::LinearSvm => TrainerSpec::LinearSvm(Default::default()),
            Family::Discriminant => TrainerSpec::Discriminant(Default::default()),
            Family::Network => TrainerSpec::Network(Default::default()),
        }
    }

    /// Default specs for a comma-separated list of names, or `all`.
    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        if list.trim().eq_ignore_ascii_case("all") {
            return Ok(Family::ALL.iter().map(|f| Self::default_for(*f)).collect());
        }
        list.split(',')
            .map(|s| s.parse::<Family>().map(Self::default_for))
            .collect()
    }

    pub fn family(&self) -> Family {
        match self {
            TrainerSpec::EntropyTree(_) => Family::EntropyTree,
            TrainerSpec::GiniTree(_) => Family::GiniTree,
            TrainerSpec::LinearSvm(_) => Family::LinearSvm,
            TrainerSpec::Discriminant(_) => Family::Discriminant,
            TrainerSpec::Network(_) => Family::Network,
        }
    }

    /// Replaces the seed of seeded families; others are returned unchanged.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            TrainerSpec::Network(cfg) => TrainerSpec::Network(NetworkConfig {
                seed,
                ..cfg.clone()
            }),
            other => other.clone(),
        }
    }

    pub fn needs_standardization(&self) -> bool {
        matches!(
            self.family(),
            Family::LinearSvm | Family::Discriminant | Family::Network
        )
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "parameters", rename_all = "snake_case")]
pub enum ModelParams {
    EntropyTree(Tree),
    GiniTree(Tree),
    #[serde(rename = "svm")]
    LinearSvm(SvmModel),
    Discriminant(DiscriminantModel),
    Network(Network),
}

/// A trained classifier, immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub classes: Vec<EmotionLabel>,
    pub dim: usize,
    pub standardizer: Option<Standardizer>,
    #[serde(flatten)]
    pub params: ModelParams,
    /// Non-fatal training diagnostics, e.g. SMO iteration limits.
    pub warnings: Vec<String>,
}

impl TrainedModel {
    pub(crate) fn new(data: &Dataset, params: ModelParams, warnings: Vec<String>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            classes: data.class_set().to_vec(),
            dim: data.dim(),
            standardizer: None,
            params,
            warnings,
        }
    }

    pub fn family(&self) -> Family {
        match self.params {
            ModelParams::EntropyTree(_) => Family::EntropyTree,
            ModelParams::GiniTree(_) => Family::GiniTree,
            ModelParams::LinearSvm(_) => Family::LinearSvm,
            ModelParams::Discriminant(_) => Family::Discriminant,
            ModelParams::Network(_) => Family::Network,
        }
    }

    /// Index into [`Self::classes`] of the predicted label.
    pub fn predict_index(&self, values: &[f64]) -> Result<usize> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features", self.dim),
                found: format!("{} features", values.len()),
            });
        }
        let scaled;
        let x = match &self.standardizer {
            Some(s) => {
                scaled = s.transform(values);
                scaled.as_slice()
            }
            None => values,
        };
        Ok(match &self.params {
            ModelParams::EntropyTree(t) | ModelParams::GiniTree(t) => t.predict(x),
            ModelParams::LinearSvm(m) => m.predict(x),
            ModelParams::Discriminant(m) => m.predict(x),
            ModelParams::Network(m) => m.predict(x),
        })
    }

    pub fn predict(&self, values: &[f64]) -> Result<EmotionLabel> {
        Ok(self.classes[self.predict_index(values)?])
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            context: "model".into(),
            source: e,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text).map_err(|e| Error::Json {
            context: "model".into(),
            source: e,
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                "model",
                format!("unsupported format version {}", model.format_version),
            ));
        }
        Ok(model)
    }
}

pub fn predict(model: &TrainedModel, values: &[f64]) -> Result<EmotionLabel> {
    model.predict(values)
}

/// Trains one family, standardizing inputs first where the family expects it.
pub fn train_model(data: &Dataset, spec: &TrainerSpec) -> Result<TrainedModel> {
    let standardizer = spec.needs_standardization().then(|| Standardizer::fit(data));
    let scaled;
    let input = match &standardizer {
        Some(s) => {
            scaled = data.map_values(|v| s.transform(v));
            &scaled
        }
        None => data,
    };
    let mut model = match spec {
        TrainerSpec::EntropyTree(cfg) => train_entropy_tree(input, cfg)?,
        TrainerSpec::GiniTree(cfg) => train_gini_tree(input, cfg)?,
        TrainerSpec::LinearSvm(cfg) => train_linear_svm(input, cfg)?,
        TrainerSpec::Discriminant(cfg) => train_discriminant(input, cfg)?,
        TrainerSpec::Network(cfg) => train_network(input, cfg)?,
    };
    model.standardizer = standardizer;
    Ok(model)
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_rejects_unknown_fields() {
        let s: TrainerSpec = serde_json::from_str(r#"{"family": "network", "epochs": 3}"#).unwrap();
        assert_eq!(s.family(), Family::Network);
        assert!(serde_json::from_str::<TrainerSpec>(r#"{"family": "network", "lr": 3}"#).is_err());
        let svm: TrainerSpec = serde_json::from_str(r#"{"family": "svm", "C": 10}"#).unwrap();
        assert!(matches!(svm, TrainerSpec::LinearSvm(c) if c.c == 10.0));
    }

    fn rec(id: &str, label: EmotionLabel, values: Vec<f64>) -> FeatureRecord {
        FeatureRecord {
            sequence_id: id.into(),
            label: Some(label),
            values,
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![]).is_err());
        let unlabeled = FeatureRecord {
            sequence_id: "u".into(),
            label: None,
            values: vec![1.0],
        };
        assert!(matches!(Dataset::new(vec![unlabeled]), Err(Error::MissingLabel(_))));
        let mixed = vec![
            rec("a", EmotionLabel::Surprise, vec![1.0]),
            rec("b", EmotionLabel::Disgust, vec![1.0, 2.0]),
        ];
        assert!(matches!(Dataset::new(mixed), Err(Error::DimensionMismatch { .. })));
        let d = Dataset::new(vec![
            rec("a", EmotionLabel::Surprise, vec![1.0]),
            rec("b", EmotionLabel::AngerT1, vec![2.0]),
        ])
        .unwrap();
        assert_eq!(d.class_set(), &[EmotionLabel::AngerT1, EmotionLabel::Surprise]);
        assert_eq!(d.targets(), vec![1, 0]);
        assert_eq!(d.collapsed().unwrap().class_set(), &[EmotionLabel::Anger, EmotionLabel::Surprise]);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert_eq!("CRT".parse::<Family>().unwrap(), Family::GiniTree);
        assert_eq!(TrainerSpec::parse_list("all").unwrap().len(), 5);
        assert!(TrainerSpec::parse_list("svm,knn").is_err());
    }

    #[test]
    fn standardizer_zeroes_constant_columns() {
        let d = Dataset::new(vec![
            rec("a", EmotionLabel::Surprise, vec![1.0, 5.0]),
            rec("b", EmotionLabel::Disgust, vec![3.0, 5.0]),
        ])
        .unwrap();
        let s = Standardizer::fit(&d);
        assert_eq!(s.transform(&[1.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(s.transform(&[3.0, 7.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_on_predict() {
        let d = Dataset::new(vec![
            rec("a", EmotionLabel::Surprise, vec![1.0, 0.0]),
            rec("b", EmotionLabel::Surprise, vec![2.0, 0.0]),
        ])
        .unwrap();
        for f in Family::ALL {
            let m = train_model(&d, &TrainerSpec::default_for(f)).unwrap();
            assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
            assert_eq!(m.predict(&[0.0, 9.0]).unwrap(), EmotionLabel::Surprise);
        }
    }
}
