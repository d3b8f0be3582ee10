//! Information-gain feature ranking over equal-frequency bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::display_name;
use crate::learners::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub index: usize,
    pub name: String,
    /// Subscripted form, e.g. `LY₁₄`.
    pub display: String,
    pub information_gain: f64,
}

/// Entropy in bits of the class histogram `counts`.
fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Interior cut points of `bins` equal-frequency bins, duplicates merged.
/// A value falls in bin `#{edges <= v}`.
pub fn equal_frequency_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..bins)
        .map(|b| (b * n).div_ceil(bins))
        .filter(|&pos| pos > 0 && pos < n)
        .map(|pos| sorted[pos])
        .filter(|e| *e > sorted[0])
        .collect();
    edges.dedup();
    edges
}

/// `H(class) − Σ_b p(b) H(class | b)` for one column.
pub fn information_gain(values: &[f64], targets: &[usize], n_classes: usize, bins: usize) -> f64 {
    let edges = equal_frequency_edges(values, bins);
    let mut table = vec![vec![0usize; n_classes]; edges.len() + 1];
    for (v, &t) in values.iter().zip(targets) {
        let b = edges.partition_point(|e| e <= v);
        table[b][t] += 1;
    }
    let mut total = vec![0usize; n_classes];
    for &t in targets {
        total[t] += 1;
    }
    let n = values.len() as f64;
    let conditional: f64 = table
        .iter()
        .map(|row| row.iter().sum::<usize>() as f64 / n * entropy(row))
        .sum();
    (entropy(&total) - conditional).max(0.0)
}

/// Ranks all columns by information gain, descending; ties keep the lower
/// column index first.
pub fn rank_information_gain(data: &Dataset, names: &[String], bins: usize) -> Result<Vec<RankedFeature>> {
    if bins < 2 {
        return Err(Error::invalid("bins must be at least 2"));
    }
    if names.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} feature names", data.dim()),
            found: format!("{} names", names.len()),
        });
    }
    let targets = data.targets();
    let k = data.class_set().len();
    let mut scored: Vec<(usize, f64)> = (0..data.dim())
        .map(|j| {
            let col: Vec<f64> = data.records().iter().map(|r| r.values[j]).collect();
            (j, information_gain(&col, &targets, k, bins))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(rank, (index, ig))| RankedFeature {
            rank: rank + 1,
            index,
            name: names[index].clone(),
            display: display_name(&names[index]),
            information_gain: ig,
        })
        .collect())
}

/// `rank,feature,display,information_gain` rows.
pub fn ranking_csv(ranking: &[RankedFeature]) -> String {
    let mut out = String::from("rank,feature,display,information_gain\n");
    for r in ranking {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.rank,
            r.name,
            r.display,
            crate::io::fmt_f64(r.information_gain)
        ));
    }
    out
}
