//! Linear soft-margin SVMs, one per class pair.
//!
//! Each binary machine solves the dual
//! `min ½ αᵀQα − Σα  s.t.  0 ≤ α ≤ C, yᵀα = 0` with `Q_ij = y_i y_j x_i·x_j`
//! by sequential minimal optimization, selecting the maximal violating pair
//! each step. The class with the lower index in a pair is the positive one.

use serde::{Deserialize, Serialize};

use super::{Dataset, ModelParams, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    #[serde(rename = "C")]
    pub c: f64,
    /// Stop once the maximal KKT violation gap falls below this.
    pub tol: f64,
    /// SMO iteration limit per binary machine.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: 100_000,
        }
    }
}

/// Dual solution of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves one binary problem; `y` holds ±1.
pub fn solve_binary(x: &[&[f64]], y: &[f64], c: f64, tol: f64, max_iter: usize) -> BinarySolution {
    let n = x.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let k: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| dot(x[i], x[j]))
        .collect();
    let kk = |i: usize, j: usize| k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmax2 = f64::NEG_INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && -v > gmax2 {
                gmax2 = -v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let mut quad = kk(i, i) + kk(j, j) - 2.0 * kk(i, j);
        if quad <= 0.0 {
            quad = 1e-12;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kk(t, i) * di + y[j] * kk(t, j) * dj);
        }
    }

    // rho: average of y·G over free vectors, else the midpoint of the bounds
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };
    let d = x.first().map_or(0, |r| r.len());
    let mut w = vec![0.0; d];
    for t in 0..n {
        if alpha[t] != 0.0 {
            for (wj, xj) in w.iter_mut().zip(x[t]) {
                *wj += alpha[t] * y[t] * xj;
            }
        }
    }
    BinarySolution {
        alpha,
        w,
        b: -rho,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    pub positive: usize,
    pub negative: usize,
    pub w: Vec<f64>,
    pub b: f64,
}

impl PairMachine {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub n_classes: usize,
    pub machines: Vec<PairMachine>,
}

impl SvmModel {
    /// Majority vote; ties go to the larger summed margin, then the lower
    /// class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        let mut margin = vec![0.0f64; self.n_classes];
        for m in &self.machines {
            let f = m.decision(x);
            if f >= 0.0 {
                votes[m.positive] += 1;
            } else {
                votes[m.negative] += 1;
            }
            margin[m.positive] += f;
            margin[m.negative] -= f;
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && margin[c] > margin[best]) {
                best = c;
            }
        }
        best
    }
}

pub fn train_linear_svm(data: &Dataset, cfg: &SvmConfig) -> Result<TrainedModel> {
    if !(cfg.c > 0.0 && cfg.tol > 0.0) {
        return Err(Error::invalid("SVM needs C > 0 and tol > 0"));
    }
    let rows = data.rows();
    let targets = data.targets();
    let k = data.class_set().len();
    let mut machines = Vec::new();
    let mut warnings = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let idx: Vec<usize> = (0..rows.len())
                .filter(|&i| targets[i] == a || targets[i] == b)
                .collect();
            let x: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if targets[i] == a { 1.0 } else { -1.0 })
                .collect();
            let sol = solve_binary(&x, &y, cfg.c, cfg.tol, cfg.max_passes);
            if !sol.converged {
                warnings.push(format!(
                    "ConvergenceWarning: machine {} vs {} stopped after {} iterations",
                    data.class_set()[a],
                    data.class_set()[b],
                    sol.iterations
                ));
            }
            machines.push(PairMachine {
                positive: a,
                negative: b,
                w: sol.w,
                b: sol.b,
            });
        }
    }
    Ok(TrainedModel::new(
        data,
        ModelParams::LinearSvm(SvmModel {
            n_classes: k,
            machines,
        }),
        warnings,
    ))
}
