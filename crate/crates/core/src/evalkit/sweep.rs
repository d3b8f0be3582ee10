//! Accuracy of every trainer across grid configurations.

use serde::{Deserialize, Serialize};

use super::cv::{run_cv, CVConfig, EvalReport};
use crate::error::{Error, Result};
use crate::facegrid::{build_layout, FaceAxes, GridSpec};
use crate::features::{extract_features, EmotionLabel, FeatureRecord};
use crate::learners::{Dataset, TrainerSpec};
use crate::optflow::MotionField;

/// One labeled motion field with its face axes.
#[derive(Debug, Clone)]
pub struct SweepInput {
    pub sequence_id: String,
    pub field: MotionField,
    pub label: EmotionLabel,
    pub axes: FaceAxes,
}

/// A grid configuration, optionally tied to a situation number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub situation: Option<u32>,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub situation: Option<u32>,
    pub feature_count: usize,
    pub cells: Vec<Cell>,
    /// Mean of the row means, with `sqrt(mean of variances)` as spread.
    pub overall: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub trainers: Vec<String>,
    pub rows: Vec<SweepRow>,
    /// Per trainer, the row index with the highest mean (lowest row on ties).
    pub best_row: Vec<usize>,
    pub reports: Vec<Vec<EvalReport>>,
}

/// Builds the feature dataset of one grid over all inputs.
pub fn features_for_grid(inputs: &[SweepInput], grid: &GridSpec) -> Result<Dataset> {
    let records: Vec<FeatureRecord> = inputs
        .iter()
        .map(|s| {
            let layout = build_layout(&s.axes, grid, s.field.width(), s.field.height())?;
            extract_features(&s.field, &layout, Some(s.label), &s.sequence_id)
        })
        .collect::<Result<_>>()?;
    Dataset::new(records)
}

/// Runs [`sweep_datasets`] on features extracted for each spec.
pub fn sweep_situations(
    inputs: &[SweepInput],
    specs: &[SweepSpec],
    trainers: &[TrainerSpec],
    cv: &CVConfig,
) -> Result<SweepTable> {
    if inputs.is_empty() {
        return Err(Error::invalid("sweep needs at least one sequence"));
    }
    let datasets = specs
        .iter()
        .map(|s| features_for_grid(inputs, &s.grid).map(|d| (s.situation, d)))
        .collect::<Result<Vec<_>>>()?;
    sweep_datasets(&datasets, trainers, cv)
}

pub fn sweep_datasets(
    datasets: &[(Option<u32>, Dataset)],
    trainers: &[TrainerSpec],
    cv: &CVConfig,
) -> Result<SweepTable> {
    if datasets.is_empty() || trainers.is_empty() {
        return Err(Error::invalid("sweep needs at least one grid and one trainer"));
    }
    let mut rows = Vec::with_capacity(datasets.len());
    let mut reports = Vec::with_capacity(datasets.len());
    for (situation, data) in datasets {
        let row_reports = trainers
            .iter()
            .map(|t| run_cv(data, t, cv, *situation))
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<Cell> = row_reports
            .iter()
            .map(|r| Cell {
                mean: r.mean_accuracy(),
                std: r.std_accuracy(),
            })
            .collect();
        let k = cells.len() as f64;
        let overall = Cell {
            mean: cells.iter().map(|c| c.mean).sum::<f64>() / k,
            std: (cells.iter().map(|c| c.std * c.std).sum::<f64>() / k).sqrt(),
        };
        rows.push(SweepRow {
            situation: *situation,
            feature_count: data.dim(),
            cells,
            overall,
        });
        reports.push(row_reports);
    }
    let best_row = (0..trainers.len())
        .map(|t| {
            (0..rows.len()).fold(0, |b, r| {
                if rows[r].cells[t].mean > rows[b].cells[t].mean {
                    r
                } else {
                    b
                }
            })
        })
        .collect();
    Ok(SweepTable {
        trainers: trainers.iter().map(|t| t.family().name().to_string()).collect(),
        rows,
        best_row,
        reports,
    })
}

fn fmt_cell(c: &Cell) -> String {
    format!("{:.1} ± {:.1}", c.mean, c.std)
}

impl SweepTable {
    /// Rows are grids, columns trainers plus the overall average; the final
    /// `best` row names each trainer's best situation.
    pub fn to_csv(&self) -> String {
        let label = |r: &SweepRow, i: usize| r.situation.map_or_else(|| format!("custom{}", i + 1), |s| s.to_string());
        let mut out = String::from("situation,feature_count");
        for t in &self.trainers {
            out.push(',');
            out.push_str(t);
        }
        out.push_str(",overall\n");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!("{},{}", label(r, i), r.feature_count));
            for c in &r.cells {
                out.push(',');
                out.push_str(&fmt_cell(c));
            }
            out.push(',');
            out.push_str(&fmt_cell(&r.overall));
            out.push('\n');
        }
        out.push_str("best,");
        for &b in &self.best_row {
            out.push(',');
            out.push_str(&label(&self.rows[b], b));
        }
        let overall_best = (0..self.rows.len()).fold(0, |b, r| {
            if self.rows[r].overall.mean > self.rows[b].overall.mean {
                r
            } else {
                b
            }
        });
        out.push(',');
        out.push_str(&label(&self.rows[overall_best], overall_best));
        out.push('\n');
        out
    }

    /// `feature_count,trainer,mean_accuracy`, ordered by feature count,
    /// then row, then trainer.
    pub fn series_csv(&self) -> String {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by_key(|&i| (self.rows[i].feature_count, i));
        let mut out = String::from("feature_count,trainer,mean_accuracy\n");
        for i in idx {
            for (t, c) in self.trainers.iter().zip(&self.rows[i].cells) {
                out.push_str(&format!(
                    "{},{},{}\n",
                    self.rows[i].feature_count,
                    t,
                    crate::io::fmt_f64(c.mean)
                ));
            }
        }
        out
    }
}
