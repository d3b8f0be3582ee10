//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use facemotion::facegrid::{build_layout, FaceAxes, SegmentationLayout, SITUATIONS};
use facemotion::features::{EmotionLabel, FeatureRecord};
use facemotion::learners::Dataset;
use facemotion::optflow::{MotionField, MotionVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn label(i: usize) -> EmotionLabel {
    EmotionLabel::SUBTYPES[i]
}

pub fn dataset(rows: &[Vec<f64>], targets: &[usize]) -> Dataset {
    let records = rows
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (r, &t))| FeatureRecord {
            sequence_id: format!("r{i:04}"),
            label: Some(label(t)),
            values: r.clone(),
        })
        .collect();
    Dataset::new(records).unwrap()
}

/// A random image size, face axes, situation grid and motion field. About
/// a third of the positions sit on integer coordinates so segment borders
/// are exercised.
pub fn random_field(r: &mut ChaCha8Rng) -> (MotionField, SegmentationLayout) {
    let width = r.random_range(60..160usize);
    let height = r.random_range(80..200usize);
    let xc = r.random_range(0.35..0.65) * width as f64;
    let half_gap = r.random_range(5.0..0.3 * width as f64);
    let eye = r.random_range(0.2..0.45) * height as f64;
    let mouth = eye + r.random_range(10.0..0.4 * height as f64);
    let axes = FaceAxes::new((xc - half_gap, eye), (xc + half_gap, eye + r.random_range(-2.0..2.0)), mouth).unwrap();
    let spec = SITUATIONS[r.random_range(0..SITUATIONS.len())];
    let layout = build_layout(&axes, &spec, width, height).unwrap();
    let n = r.random_range(1..400usize);
    let mut seen = BTreeSet::new();
    let mut vectors = Vec::with_capacity(n);
    while vectors.len() < n {
        let (x, y) = if r.random_bool(0.35) {
            (r.random_range(0..width) as f64, r.random_range(0..height) as f64)
        } else {
            (r.random_range(0.0..width as f64), r.random_range(0.0..height as f64))
        };
        if !seen.insert((x.to_bits(), y.to_bits())) {
            continue;
        }
        vectors.push(MotionVector {
            x,
            y,
            dx: r.random_range(-5.0..5.0),
            dy: r.random_range(-5.0..5.0),
            reliability: 1.0,
        });
    }
    (MotionField::new(vectors, width, height).unwrap(), layout)
}

/// Per segment: share of all vectors inside it, then mean dx and mean dy
/// (zero when empty). Membership is tested against the half-open
/// rectangle directly.
pub fn brute_force_features(field: &MotionField, layout: &SegmentationLayout) -> Vec<f64> {
    let total = field.vectors().len() as f64;
    let mut out = Vec::new();
    for seg in &layout.segments {
        let (x0, y0, x1, y1) = (seg.rect.x0 as f64, seg.rect.y0 as f64, seg.rect.x1 as f64, seg.rect.y1 as f64);
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        for v in field.vectors() {
            if v.x >= x0 && v.x < x1 && v.y >= y0 && v.y < y1 {
                n += 1;
                sx += v.dx;
                sy += v.dy;
            }
        }
        if n == 0 {
            out.extend([0.0, 0.0, 0.0]);
        } else {
            out.extend([n as f64 / total, sx / n as f64, sy / n as f64]);
        }
    }
    out
}

pub fn entropy_bits(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n as f64;
            h -= p * p.log2();
        }
    }
    h
}

pub fn gini_index(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
}

/// `(feature, threshold, score)` of the best root split by exhaustive
/// search. For gain ratio, only features whose best gain reaches the
/// average best gain compete.
pub fn exhaustive_root_split(
    rows: &[Vec<f64>],
    targets: &[usize],
    k: usize,
    min_leaf: usize,
    gain_ratio: bool,
) -> Option<(usize, f64, f64)> {
    let n = rows.len();
    let mut parent = vec![0; k];
    for &t in targets {
        parent[t] += 1;
    }
    let imp = |c: &[usize]| if gain_ratio { entropy_bits(c) } else { gini_index(c) };
    // per feature: (gain, threshold, ratio)
    let mut best_per_feature: Vec<Option<(f64, f64, f64)>> = Vec::new();
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut best: Option<(f64, f64, f64)> = None;
        for w in values.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let mut left = vec![0; k];
            let mut right = vec![0; k];
            for (r, &c) in rows.iter().zip(targets) {
                if r[f] <= t {
                    left[c] += 1;
                } else {
                    right[c] += 1;
                }
            }
            let (nl, nr) = (left.iter().sum::<usize>(), right.iter().sum::<usize>());
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (wl, wr) = (nl as f64 / n as f64, nr as f64 / n as f64);
            let gain = imp(&parent) - wl * imp(&left) - wr * imp(&right);
            let ratio = gain / (-wl * wl.log2() - wr * wr.log2());
            if best.is_none_or(|b| gain > b.0) {
                best = Some((gain, t, ratio));
            }
        }
        best_per_feature.push(best);
    }
    let found: Vec<(usize, (f64, f64, f64))> = best_per_feature
        .iter()
        .enumerate()
        .filter_map(|(f, b)| b.map(|b| (f, b)))
        .collect();
    if found.is_empty() {
        return None;
    }
    let avg = found.iter().map(|(_, b)| b.0).sum::<f64>() / found.len() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for (f, (gain, t, ratio)) in found {
        let score = if gain_ratio { ratio } else { gain };
        if gain_ratio && gain < avg * (1.0 - 1e-12) {
            continue;
        }
        if best.is_none_or(|b| score > b.2) {
            best = Some((f, t, score));
        }
    }
    best
}

/// Largest violation of the soft-margin optimality conditions for a
/// linear kernel, with `w` rebuilt from `alpha`.
pub fn kkt_violation(x: &[Vec<f64>], y: &[f64], alpha: &[f64], b: f64, c: f64) -> f64 {
    let d = x[0].len();
    let mut w = vec![0.0; d];
    for ((xi, yi), a) in x.iter().zip(y).zip(alpha) {
        for j in 0..d {
            w[j] += a * yi * xi[j];
        }
    }
    let mut worst = alpha.iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>().abs();
    for ((xi, yi), &a) in x.iter().zip(y).zip(alpha) {
        let margin = yi * (xi.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>() + b);
        let v = if a <= 1e-12 {
            (1.0 - margin).max(0.0)
        } else if a >= c - 1e-12 {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v).max((-a).max(a - c).max(0.0));
    }
    worst
}

/// Eigenvalues (descending) and unit eigenvectors of a symmetric 3x3
/// matrix from the closed-form roots of its characteristic polynomial.
pub fn eigen3(a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut bm = a;
    for (i, row) in bm.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = bm[0][0] * (bm[1][1] * bm[2][2] - bm[1][2] * bm[2][1]) - bm[0][1] * (bm[1][0] * bm[2][2] - bm[1][2] * bm[2][0])
        + bm[0][2] * (bm[1][0] * bm[2][1] - bm[1][1] * bm[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let vec_for = |l: f64| {
        let m: Vec<[f64; 3]> = (0..3)
            .map(|i| [a[i][0] - if i == 0 { l } else { 0.0 }, a[i][1] - if i == 1 { l } else { 0.0 }, a[i][2] - if i == 2 { l } else { 0.0 }])
            .collect();
        let cross = |u: [f64; 3], v: [f64; 3]| [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let cands = [cross(m[0], m[1]), cross(m[0], m[2]), cross(m[1], m[2])];
        let best = cands
            .into_iter()
            .max_by(|u, v| u.iter().map(|x| x * x).sum::<f64>().total_cmp(&v.iter().map(|x| x * x).sum::<f64>()))
            .unwrap();
        let norm = best.iter().map(|x| x * x).sum::<f64>().sqrt();
        [best[0] / norm, best[1] / norm, best[2] / norm]
    };
    ([e1, e2, e3], [vec_for(e1), vec_for(e2), vec_for(e3)])
}

/// Distance between two unit vectors, ignoring sign.
pub fn axis_distance(u: &[f64], v: &[f64]) -> f64 {
    let plus: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let minus: f64 = u.iter().zip(v).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
    plus.min(minus)
}

/// Information gain of a column whose bins are given explicitly.
pub fn information_gain_of_bins(bins: &[usize], targets: &[usize], k: usize) -> f64 {
    let nb = bins.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; k]; nb];
    let mut total = vec![0usize; k];
    for (&b, &t) in bins.iter().zip(targets) {
        table[b][t] += 1;
        total[t] += 1;
    }
    let n = bins.len() as f64;
    entropy_bits(&total)
        - table
            .iter()
            .filter(|row| row.iter().sum::<usize>() > 0)
            .map(|row| row.iter().sum::<usize>() as f64 / n * entropy_bits(row))
            .sum::<f64>()
}
