//! Repeated k-fold cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{apply_cleaning, CleaningPolicy, CleaningStats, EmotionLabel, FeatureRecord};
use crate::learners::{train_model, Dataset, TrainerSpec};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CVConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Keep all sequences of one subject (the `sequence_id` prefix before the
    /// first `_`) in the same fold.
    pub group_by_subject: bool,
    /// Cleaning applied inside every fold with training-split statistics;
    /// `None` trains on the features as given.
    pub cleaning: Option<CleaningPolicy>,
}

impl Default for CVConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 50,
            seed: 0,
            stratified: true,
            group_by_subject: false,
            cleaning: Some(CleaningPolicy::default()),
        }
    }
}

impl CVConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        if self.repeats < 1 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if let Some(p) = &self.cleaning {
            p.validate()?;
        }
        Ok(())
    }
}

/// A class too small to appear in every fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratificationWarning {
    pub class: usize,
    pub size: usize,
    pub folds: usize,
}

/// Splits `targets.len()` records into `k` folds.
///
/// The indices are shuffled with `rng`; then each class (in class order)
/// deals its members in shuffled order round-robin over the folds,
/// continuing from the fold where the previous class stopped. Per class,
/// fold counts differ by at most one, and so do total fold sizes.
pub fn stratified_folds(
    targets: &[usize],
    k: usize,
    rng: &mut StreamRng,
) -> Result<(Vec<Vec<usize>>, Vec<StratificationWarning>)> {
    if k < 2 || k > targets.len() {
        return Err(Error::invalid(format!(
            "cannot split {} records into {k} folds",
            targets.len()
        )));
    }
    let mut perm: Vec<usize> = (0..targets.len()).collect();
    perm.shuffle(rng);
    let n_classes = targets.iter().max().map_or(0, |m| m + 1);
    let mut folds = vec![Vec::new(); k];
    let mut warnings = Vec::new();
    let mut next = 0;
    for class in 0..n_classes {
        let members: Vec<usize> = perm.iter().copied().filter(|&i| targets[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            warnings.push(StratificationWarning {
                class,
                size: members.len(),
                folds: k,
            });
        }
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok((folds, warnings))
}

/// Unstratified folds: shuffled indices dealt round-robin.
pub fn random_folds(n: usize, k: usize, rng: &mut StreamRng) -> Result<Vec<Vec<usize>>> {
    stratified_folds(&vec![0; n], k, rng).map(|(f, _)| f)
}

/// Folds that never split a group: groups are shuffled, then each goes to
/// the currently smallest fold (lowest index on ties).
pub fn grouped_folds(groups: &[usize], k: usize, rng: &mut StreamRng) -> Result<Vec<Vec<usize>>> {
    let n_groups = groups.iter().max().map_or(0, |m| m + 1);
    if k < 2 || k > n_groups {
        return Err(Error::invalid(format!(
            "cannot split {n_groups} subject group(s) into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(rng);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for g in order {
        let target = (0..k).min_by_key(|&f| (folds[f].len(), f)).expect("k >= 2");
        folds[target].extend((0..groups.len()).filter(|&i| groups[i] == g));
    }
    Ok(folds)
}

/// Records in a canonical order, so results do not depend on input order.
pub(crate) fn canonical_order(records: &[FeatureRecord]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.label
            .cmp(&rb.label)
            .then_with(|| ra.sequence_id.cmp(&rb.sequence_id))
            .then_with(|| {
                let ka = ra.values.iter().map(|v| v.to_bits());
                let kb = rb.values.iter().map(|v| v.to_bits());
                ka.cmp(kb)
            })
    });
    idx
}

fn subject_of(id: &str) -> &str {
    id.split('_').next().unwrap_or(id)
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Accuracy and confusion statistics over repeats for one class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub class_order: Vec<EmotionLabel>,
    /// Percent correct per repeat.
    pub per_repeat_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// `confusion[true][predicted]`, row-normalized percent averaged over
    /// repeats.
    pub confusion: Vec<Vec<f64>>,
    pub confusion_std: Vec<Vec<f64>>,
}

impl ConfusionReport {
    /// `outcomes[repeat]` holds `(true, predicted)` class indices.
    fn from_outcomes(class_order: Vec<EmotionLabel>, outcomes: &[Vec<(usize, usize)>]) -> Self {
        let k = class_order.len();
        let mut per_repeat_accuracy = Vec::with_capacity(outcomes.len());
        let mut cells: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); k]; k];
        for rep in outcomes {
            let correct = rep.iter().filter(|(t, p)| t == p).count();
            per_repeat_accuracy.push(100.0 * correct as f64 / rep.len() as f64);
            let mut counts = vec![vec![0usize; k]; k];
            for &(t, p) in rep {
                counts[t][p] += 1;
            }
            for (t, row) in counts.iter().enumerate() {
                let total: usize = row.iter().sum();
                for (p, c) in row.iter().enumerate() {
                    let pct = if total == 0 {
                        0.0
                    } else {
                        100.0 * *c as f64 / total as f64
                    };
                    cells[t][p].push(pct);
                }
            }
        }
        let (mean_accuracy, std_accuracy) = mean_std(&per_repeat_accuracy);
        let stats: Vec<Vec<(f64, f64)>> = cells
            .iter()
            .map(|row| row.iter().map(|c| mean_std(c)).collect())
            .collect();
        Self {
            class_order,
            per_repeat_accuracy,
            mean_accuracy,
            std_accuracy,
            confusion: stats.iter().map(|r| r.iter().map(|c| c.0).collect()).collect(),
            confusion_std: stats.iter().map(|r| r.iter().map(|c| c.1).collect()).collect(),
        }
    }
}

/// The most frequent wrong prediction for one true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub emotion: EmotionLabel,
    pub confused_with: EmotionLabel,
    /// Mean percent of the emotion's records predicted as `confused_with`.
    pub rate: f64,
}

/// Off-diagonal row maxima (ties to the lower label); rows without any
/// confusion are omitted.
pub fn misclassification_summary(report: &ConfusionReport) -> Vec<Misclassification> {
    let mut out = Vec::new();
    for (t, row) in report.confusion.iter().enumerate() {
        let mut best: Option<usize> = None;
        for (p, v) in row.iter().enumerate() {
            if p != t && *v > 0.0 && best.is_none_or(|b| *v > row[b]) {
                best = Some(p);
            }
        }
        if let Some(p) = best {
            out.push(Misclassification {
                emotion: report.class_order[t],
                confused_with: report.class_order[p],
                rate: row[p],
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trainer: TrainerSpec,
    pub situation: Option<u32>,
    pub feature_count: usize,
    pub records: usize,
    pub cv: CVConfig,
    #[serde(flatten)]
    pub result: ConfusionReport,
    /// The same predictions with subtypes collapsed to basic emotions, when
    /// any subtype label is present.
    pub collapsed: Option<ConfusionReport>,
    pub misclassifications: Vec<Misclassification>,
    /// Stratification and training warnings with occurrence counts.
    pub warnings: BTreeMap<String, usize>,
}

impl EvalReport {
    pub fn per_repeat_accuracy(&self) -> &[f64] {
        &self.result.per_repeat_accuracy
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.result.mean_accuracy
    }

    pub fn std_accuracy(&self) -> f64 {
        self.result.std_accuracy
    }
}

struct FoldOutcome {
    pairs: Vec<(usize, usize)>,
    warnings: Vec<String>,
}

fn run_fold(
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    trainer: &TrainerSpec,
    cleaning: Option<&CleaningPolicy>,
    seed: u64,
) -> Result<FoldOutcome> {
    let mut train: Vec<FeatureRecord> = train_idx.iter().map(|&i| data.records()[i].clone()).collect();
    let mut test: Vec<FeatureRecord> = test_idx.iter().map(|&i| data.records()[i].clone()).collect();
    if let Some(policy) = cleaning {
        let stats = CleaningStats::fit(train.iter().map(|r| r.values.as_slice()))?;
        apply_cleaning(&mut train, &stats, policy)?;
        apply_cleaning(&mut test, &stats, policy)?;
    }
    let model = train_model(&Dataset::new(train)?, &trainer.with_seed(seed))?;
    let classes = data.class_set();
    let mut pairs = Vec::with_capacity(test.len());
    for r in &test {
        let truth = classes
            .binary_search(&r.label.expect("labeled dataset"))
            .expect("label in class set");
        let predicted = model.predict(&r.values)?;
        let predicted = classes.binary_search(&predicted).expect("model classes are a subset");
        pairs.push((truth, predicted));
    }
    Ok(FoldOutcome {
        pairs,
        warnings: model.warnings,
    })
}

/// Repeated k-fold cross-validation of one trainer.
///
/// Every repeat draws fresh folds from the stream `(seed, TAG_FOLDS,
/// repeat)`; the trainer of fold `f` in repeat `r` is seeded with
/// `derive_seed(seed, [TAG_TRAINER, r, f])`. Folds run in parallel and are
/// reduced in (repeat, fold) order, so results do not depend on scheduling.
pub fn run_cv(
    data: &Dataset,
    trainer: &TrainerSpec,
    cv: &CVConfig,
    situation: Option<u32>,
) -> Result<EvalReport> {
    cv.validate()?;
    let order = canonical_order(data.records());
    let data = Dataset::new(order.iter().map(|&i| data.records()[i].clone()).collect())?;
    let targets = data.targets();

    let mut fold_sets = Vec::with_capacity(cv.repeats);
    let mut warnings: BTreeMap<String, usize> = BTreeMap::new();
    for r in 0..cv.repeats {
        let mut stream = rng::stream(cv.seed, &[rng::TAG_FOLDS, r as u64]);
        let folds = if cv.group_by_subject {
            let mut ids: Vec<&str> = data.records().iter().map(|x| subject_of(&x.sequence_id)).collect();
            ids.sort_unstable();
            ids.dedup();
            let groups: Vec<usize> = data
                .records()
                .iter()
                .map(|x| ids.binary_search(&subject_of(&x.sequence_id)).expect("collected above"))
                .collect();
            grouped_folds(&groups, cv.folds, &mut stream)?
        } else if cv.stratified {
            let (folds, warn) = stratified_folds(&targets, cv.folds, &mut stream)?;
            for w in warn {
                *warnings
                    .entry(format!(
                        "StratificationWarning: class {} has {} records for {} folds",
                        data.class_set()[w.class],
                        w.size,
                        w.folds
                    ))
                    .or_default() += 1;
            }
            folds
        } else {
            random_folds(targets.len(), cv.folds, &mut stream)?
        };
        fold_sets.push(folds);
    }

    let jobs: Vec<(usize, usize)> = (0..cv.repeats)
        .flat_map(|r| (0..cv.folds).map(move |f| (r, f)))
        .collect();
    let outcomes: Vec<Result<FoldOutcome>> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let folds = &fold_sets[r];
            let test = &folds[f];
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let seed = rng::derive_seed(cv.seed, &[rng::TAG_TRAINER, r as u64, f as u64]);
            run_fold(&data, &train, test, trainer, cv.cleaning.as_ref(), seed).map_err(|e| Error::Fold {
                repeat: r,
                fold: f,
                source: Box::new(e),
            })
        })
        .collect();

    let mut per_repeat: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cv.repeats];
    for ((r, _), outcome) in jobs.iter().zip(outcomes) {
        let outcome = outcome?;
        per_repeat[*r].extend(outcome.pairs);
        for w in outcome.warnings {
            *warnings.entry(w).or_default() += 1;
        }
    }

    let classes = data.class_set().to_vec();
    let result = ConfusionReport::from_outcomes(classes.clone(), &per_repeat);
    let collapsed = classes.iter().any(|c| !c.is_basic()).then(|| {
        let basic: Vec<EmotionLabel> = {
            let mut b: Vec<EmotionLabel> = classes.iter().map(|c| c.collapse()).collect();
            b.dedup();
            b
        };
        let map: Vec<usize> = classes
            .iter()
            .map(|c| basic.binary_search(&c.collapse()).expect("collapsed label present"))
            .collect();
        let mapped: Vec<Vec<(usize, usize)>> = per_repeat
            .iter()
            .map(|rep| rep.iter().map(|&(t, p)| (map[t], map[p])).collect())
            .collect();
        ConfusionReport::from_outcomes(basic, &mapped)
    });
    let misclassifications = misclassification_summary(collapsed.as_ref().unwrap_or(&result));
    Ok(EvalReport {
        trainer: trainer.clone(),
        situation,
        feature_count: data.dim(),
        records: data.len(),
        cv: cv.clone(),
        result,
        collapsed,
        misclassifications,
        warnings,
    })
}
