//! Principal component projection.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// One row of `dims` coordinates per input row.
    pub coordinates: Vec<Vec<f64>>,
    /// Unit principal axes in descending eigenvalue order; the largest
    /// magnitude loading of each axis is positive.
    pub axes: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues of the kept axes.
    pub eigenvalues: Vec<f64>,
    pub explained_variance: Vec<f64>,
    /// Axes with (numerically) zero variance because the data rank is
    /// smaller than `dims`.
    pub zero_variance: Vec<bool>,
    pub mean: Vec<f64>,
}

pub fn pca_project(rows: &[&[f64]], dims: usize) -> Result<Projection> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if dims == 0 || dims > d {
        return Err(Error::invalid(format!("cannot project {d} features onto {dims} axes")));
    }
    if n < dims + 1 {
        return Err(Error::invalid(format!("{dims} axes need at least {} records, got {n}", dims + 1)));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: format!("{d} features"),
            found: format!("{} features", r.len()),
        });
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut axes = Vec::with_capacity(dims);
    let mut eigenvalues = Vec::with_capacity(dims);
    for &i in order.iter().take(dims) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let lead = axis
            .iter()
            .enumerate()
            .fold(0, |b, (j, v)| if v.abs() > axis[b].abs() { j } else { b });
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        axes.push(axis);
        eigenvalues.push(eig.eigenvalues[i].max(0.0));
    }
    let zero_variance = eigenvalues.iter().map(|v| *v <= 1e-12 * top.max(f64::MIN_POSITIVE)).collect();
    let explained_variance = eigenvalues
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let coordinates = (0..n)
        .map(|i| {
            axes.iter()
                .map(|a| a.iter().enumerate().map(|(j, w)| w * centered[(i, j)]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        coordinates,
        axes,
        eigenvalues,
        explained_variance,
        zero_variance,
        mean,
    })
}

impl Projection {
    /// Coordinates of an arbitrary point.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| a.iter().zip(x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect()
    }
}
