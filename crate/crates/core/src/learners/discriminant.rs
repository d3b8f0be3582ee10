//! Linear discriminant analysis with a shared, ridge-regularized covariance.
//!
//! Scores are `δ_k(x) = xᵀ Σ⁻¹ μ_k − ½ μ_kᵀ Σ⁻¹ μ_k + ln π_k` where `Σ` is
//! the pooled within-class covariance plus `λI`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmax, Dataset, ModelParams, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminantConfig {
    pub ridge: f64,
}

impl Default for DiscriminantConfig {
    fn default() -> Self {
        Self { ridge: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantModel {
    pub means: Vec<Vec<f64>>,
    /// Inverse of the regularized pooled covariance, row-major.
    pub precision: Vec<Vec<f64>>,
    pub log_priors: Vec<f64>,
    /// Ridge actually applied; larger than configured if the covariance
    /// needed more regularization to factorize.
    pub ridge: f64,
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl DiscriminantModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.intercepts)
            .map(|(w, c)| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}

/// Pooled within-class scatter divided by `n - K` (or `n` when `n <= K`).
fn pooled_covariance(data: &Dataset, means: &[Vec<f64>]) -> DMatrix<f64> {
    let d = data.dim();
    let targets = data.targets();
    let mut s = DMatrix::<f64>::zeros(d, d);
    for (r, &t) in data.records().iter().zip(&targets) {
        let dev = DVector::from_iterator(d, r.values.iter().zip(&means[t]).map(|(v, m)| v - m));
        s.ger(1.0, &dev, &dev, 1.0);
    }
    let k = means.len();
    let denom = if data.len() > k { data.len() - k } else { data.len() };
    s / denom as f64
}

pub fn train_discriminant(data: &Dataset, cfg: &DiscriminantConfig) -> Result<TrainedModel> {
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(Error::invalid("ridge must be finite and non-negative"));
    }
    let d = data.dim();
    let k = data.class_set().len();
    let targets = data.targets();
    let mut means = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &t) in data.records().iter().zip(&targets) {
        counts[t] += 1;
        for (m, v) in means[t].iter_mut().zip(&r.values) {
            *m += v;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c as f64);
    }
    let cov = pooled_covariance(data, &means);
    let scale = (cov.trace() / d.max(1) as f64).max(1.0);
    let mut ridge = cfg.ridge;
    let mut warnings = Vec::new();
    let precision = loop {
        let reg = &cov + DMatrix::<f64>::identity(d, d) * ridge;
        if let Some(ch) = reg.cholesky() {
            break ch.inverse();
        }
        let next = if ridge > 0.0 { ridge * 10.0 } else { 1e-10 * scale };
        if next > 1e6 * scale {
            return Err(Error::invalid("pooled covariance could not be regularized"));
        }
        ridge = next;
    };
    if ridge != cfg.ridge {
        warnings.push(format!("ridge raised from {} to {ridge} to factorize covariance", cfg.ridge));
    }
    let n = data.len() as f64;
    let log_priors: Vec<f64> = counts.iter().map(|&c| (c as f64 / n).ln()).collect();
    let mut coefficients = Vec::with_capacity(k);
    let mut intercepts = Vec::with_capacity(k);
    for (m, lp) in means.iter().zip(&log_priors) {
        let mu = DVector::from_column_slice(m);
        let w = &precision * &mu;
        intercepts.push(-0.5 * mu.dot(&w) + lp);
        coefficients.push(w.iter().copied().collect());
    }
    let precision = (0..d).map(|i| precision.row(i).iter().copied().collect()).collect();
    Ok(TrainedModel::new(
        data,
        ModelParams::Discriminant(DiscriminantModel {
            means,
            precision,
            log_priors,
            ridge,
            coefficients,
            intercepts,
        }),
        warnings,
    ))
}
