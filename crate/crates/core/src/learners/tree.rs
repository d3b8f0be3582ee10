//! Binary threshold trees.
//!
//! A split sends `x[feature] <= threshold` left. Candidate thresholds are
//! midpoints between consecutive distinct values of a feature, and both
//! children must keep at least `min_leaf` records.
//!
//! The entropy tree scores splits the C4.5 way: each feature's threshold is
//! the one with maximal information gain, and among features whose gain is
//! at least the average, the one with maximal gain ratio wins. It is pruned
//! bottom-up with the pessimistic upper-confidence error estimate.
//!
//! The Gini tree picks the split with maximal impurity decrease and is
//! pruned by weakest-link cost complexity.
//!
//! Ties go to the lowest feature index, then the lowest threshold; leaf
//! classes are the majority class with ties to the lowest class index.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{Dataset, ModelParams, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyTreeConfig {
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Confidence level of the pessimistic error bound; 1 disables pruning.
    pub prune_confidence: f64,
}

impl Default for EntropyTreeConfig {
    fn default() -> Self {
        Self {
            min_leaf: 2,
            max_depth: 25,
            prune_confidence: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GiniTreeConfig {
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Cost-complexity parameter, in units of training error rate per leaf.
    pub alpha: f64,
}

impl Default for GiniTreeConfig {
    fn default() -> Self {
        Self {
            min_leaf: 2,
            max_depth: 25,
            alpha: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        class: usize,
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: Vec<usize>,
    },
}

impl Node {
    fn counts(&self) -> &[usize] {
        match self {
            Node::Leaf { counts, .. } | Node::Split { counts, .. } => counts,
        }
    }
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class, .. } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Copies the nodes reachable from the root into a fresh preorder arena.
    fn compact(&self) -> Tree {
        fn copy(src: &Tree, i: usize, out: &mut Vec<Node>) -> usize {
            let at = out.len();
            match &src.nodes[i] {
                leaf @ Node::Leaf { .. } => out.push(leaf.clone()),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    counts,
                } => {
                    out.push(Node::Leaf {
                        class: 0,
                        counts: vec![],
                    });
                    let l = copy(src, *left, out);
                    let r = copy(src, *right, out);
                    out[at] = Node::Split {
                        feature: *feature,
                        threshold: *threshold,
                        left: l,
                        right: r,
                        counts: counts.clone(),
                    };
                }
            }
            at
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        copy(self, 0, &mut out);
        Tree { nodes: out }
    }
}

/// Shannon entropy in bits of a class histogram.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Gini impurity `1 - Σ p²`.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// A scored binary split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub left_count: usize,
    /// Information gain (entropy tree) or impurity decrease (Gini tree).
    pub gain: f64,
    /// Gain ratio; equal to `gain` for the Gini tree.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Criterion {
    GainRatio,
    Gini,
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}

fn histogram(targets: &[usize], idx: &[usize], k: usize) -> Vec<usize> {
    let mut h = vec![0; k];
    for &i in idx {
        h[targets[i]] += 1;
    }
    h
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Scans every threshold of one feature and returns the best one by
/// `gain` (entropy) or impurity decrease (Gini); ties keep the lowest.
fn best_threshold(
    rows: &[&[f64]],
    targets: &[usize],
    idx: &[usize],
    feature: usize,
    k: usize,
    min_leaf: usize,
    criterion: Criterion,
    parent: &[usize],
) -> Option<SplitCandidate> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]).then(a.cmp(&b)));
    let n = order.len();
    let nf = n as f64;
    let impurity = |c: &[usize]| match criterion {
        Criterion::GainRatio => entropy(c),
        Criterion::Gini => gini(c),
    };
    let parent_imp = impurity(parent);
    let mut left = vec![0usize; k];
    let mut best: Option<SplitCandidate> = None;
    for pos in 0..n - 1 {
        left[targets[order[pos]]] += 1;
        let nl = pos + 1;
        let (lo, hi) = (rows[order[pos]][feature], rows[order[pos + 1]][feature]);
        if !(lo < hi) || nl < min_leaf || n - nl < min_leaf {
            continue;
        }
        let right: Vec<usize> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
        let (wl, wr) = (nl as f64 / nf, (n - nl) as f64 / nf);
        let gain = parent_imp - wl * impurity(&left) - wr * impurity(&right);
        if best.is_none_or(|b| gain > b.gain) {
            let score = match criterion {
                Criterion::GainRatio => {
                    let split_info = -wl * wl.log2() - wr * wr.log2();
                    gain / split_info
                }
                Criterion::Gini => gain,
            };
            best = Some(SplitCandidate {
                feature,
                threshold: midpoint(lo, hi),
                left_count: nl,
                gain,
                score,
            });
        }
    }
    best
}

/// Chooses the split for the records `idx`, or `None` if no threshold
/// satisfies `min_leaf`. Zero-gain splits are allowed so that patterns like
/// XOR, invisible to any single split, can still be grown; pruning removes
/// splits that end up useless.
fn choose_split(
    rows: &[&[f64]],
    targets: &[usize],
    idx: &[usize],
    k: usize,
    min_leaf: usize,
    criterion: Criterion,
) -> Option<SplitCandidate> {
    let parent = histogram(targets, idx, k);
    let dim = rows.first().map_or(0, |r| r.len());
    let per_feature: Vec<SplitCandidate> = (0..dim)
        .filter_map(|f| best_threshold(rows, targets, idx, f, k, min_leaf, criterion, &parent))
        .collect();
    if per_feature.is_empty() {
        return None;
    }
    let eligible: Vec<&SplitCandidate> = match criterion {
        Criterion::Gini => per_feature.iter().collect(),
        Criterion::GainRatio => {
            let avg = per_feature.iter().map(|c| c.gain).sum::<f64>() / per_feature.len() as f64;
            per_feature
                .iter()
                .filter(|c| c.gain >= avg * (1.0 - 1e-12))
                .collect()
        }
    };
    let mut best = eligible[0];
    for c in &eligible[1..] {
        if c.score > best.score {
            best = c;
        }
    }
    Some(*best)
}

/// The root split the tree builder would choose, exposed for inspection.
pub fn root_split(data: &Dataset, min_leaf: usize, gain_ratio: bool) -> Option<SplitCandidate> {
    let rows = data.rows();
    let targets = data.targets();
    let idx: Vec<usize> = (0..rows.len()).collect();
    let criterion = if gain_ratio {
        Criterion::GainRatio
    } else {
        Criterion::Gini
    };
    choose_split(&rows, &targets, &idx, data.class_set().len(), min_leaf, criterion)
}

fn grow(
    rows: &[&[f64]],
    targets: &[usize],
    k: usize,
    min_leaf: usize,
    max_depth: usize,
    criterion: Criterion,
) -> Tree {
    fn go(
        ctx: (&[&[f64]], &[usize], usize, usize, usize, Criterion),
        idx: Vec<usize>,
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let (rows, targets, k, min_leaf, max_depth, criterion) = ctx;
        let counts = histogram(targets, &idx, k);
        let at = nodes.len();
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        let split = if pure || depth >= max_depth || idx.len() < 2 * min_leaf {
            None
        } else {
            choose_split(rows, targets, &idx, k, min_leaf, criterion)
        };
        let Some(split) = split else {
            nodes.push(Node::Leaf {
                class: majority(&counts),
                counts,
            });
            return at;
        };
        nodes.push(Node::Leaf {
            class: 0,
            counts: vec![],
        });
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| rows[i][split.feature] <= split.threshold);
        let left = go(ctx, l, depth + 1, nodes);
        let right = go(ctx, r, depth + 1, nodes);
        nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            counts,
        };
        at
    }
    let mut nodes = Vec::new();
    go(
        (rows, targets, k, min_leaf, max_depth, criterion),
        (0..rows.len()).collect(),
        0,
        &mut nodes,
    );
    Tree { nodes }
}

fn check_min_leaf(min_leaf: usize) -> Result<()> {
    if min_leaf == 0 {
        return Err(Error::invalid("min_leaf must be at least 1"));
    }
    Ok(())
}

pub fn train_entropy_tree(data: &Dataset, cfg: &EntropyTreeConfig) -> Result<TrainedModel> {
    check_min_leaf(cfg.min_leaf)?;
    if !(cfg.prune_confidence > 0.0 && cfg.prune_confidence <= 1.0) {
        return Err(Error::invalid("prune_confidence must lie in (0, 1]"));
    }
    let k = data.class_set().len();
    let mut tree = grow(
        &data.rows(),
        &data.targets(),
        k,
        cfg.min_leaf,
        cfg.max_depth,
        Criterion::GainRatio,
    );
    if cfg.prune_confidence < 1.0 {
        let z = Normal::standard().inverse_cdf(1.0 - cfg.prune_confidence);
        pessimistic_prune(&mut tree, 0, cfg.prune_confidence, z);
        tree = tree.compact();
    }
    Ok(TrainedModel::new(data, ModelParams::EntropyTree(tree), vec![]))
}

pub fn train_gini_tree(data: &Dataset, cfg: &GiniTreeConfig) -> Result<TrainedModel> {
    check_min_leaf(cfg.min_leaf)?;
    if !(cfg.alpha >= 0.0) {
        return Err(Error::invalid("alpha must be non-negative"));
    }
    let k = data.class_set().len();
    let mut tree = grow(
        &data.rows(),
        &data.targets(),
        k,
        cfg.min_leaf,
        cfg.max_depth,
        Criterion::Gini,
    );
    cost_complexity_prune(&mut tree, data.len(), cfg.alpha);
    Ok(TrainedModel::new(data, ModelParams::GiniTree(tree.compact()), vec![]))
}

/// Upper confidence bound on the number of errors among `n` records with
/// `e` observed errors, minus `e` (C4.5's extra-error estimate).
pub fn extra_errors(n: f64, e: f64, cf: f64, z: f64) -> f64 {
    if e < 1e-6 {
        return n * (1.0 - (cf.ln() / n).exp());
    }
    if e < 0.9999 {
        let v = n * (1.0 - (cf.ln() / n).exp());
        return v + e * (extra_errors(n, 1.0, cf, z) - v);
    }
    if e + 0.5 >= n {
        return 0.67 * (n - e);
    }
    let coeff = z * z;
    let pr = (e + 0.5 + coeff / 2.0
        + (coeff * ((e + 0.5) * (1.0 - (e + 0.5) / n) + coeff / 4.0)).sqrt())
        / (n + coeff);
    n * pr - e
}

fn leaf_errors(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    (n - counts[majority(counts)]) as f64
}

/// Returns the pessimistic error estimate of the (possibly pruned) subtree.
fn pessimistic_prune(tree: &mut Tree, i: usize, cf: f64, z: f64) -> f64 {
    let (left, right, counts) = match &tree.nodes[i] {
        Node::Leaf { counts, .. } => {
            let e = leaf_errors(counts);
            return e + extra_errors(counts.iter().sum::<usize>() as f64, e, cf, z);
        }
        Node::Split {
            left,
            right,
            counts,
            ..
        } => (*left, *right, counts.clone()),
    };
    let subtree = pessimistic_prune(tree, left, cf, z) + pessimistic_prune(tree, right, cf, z);
    let e = leaf_errors(&counts);
    let as_leaf = e + extra_errors(counts.iter().sum::<usize>() as f64, e, cf, z);
    if as_leaf <= subtree + 0.1 {
        tree.nodes[i] = Node::Leaf {
            class: majority(&counts),
            counts,
        };
        as_leaf
    } else {
        subtree
    }
}

/// (training errors of the subtree's leaves, leaf count)
fn subtree_cost(tree: &Tree, i: usize) -> (f64, usize) {
    match &tree.nodes[i] {
        Node::Leaf { counts, .. } => (leaf_errors(counts), 1),
        Node::Split { left, right, .. } => {
            let (el, ll) = subtree_cost(tree, *left);
            let (er, lr) = subtree_cost(tree, *right);
            (el + er, ll + lr)
        }
    }
}

fn reachable_splits(tree: &Tree) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        if let Node::Split { left, right, .. } = &tree.nodes[i] {
            out.push(i);
            stack.push(*right);
            stack.push(*left);
        }
    }
    out
}

/// Weakest-link pruning: repeatedly collapses the internal nodes with the
/// smallest `g(t) = (R(t) - R(T_t)) / (|T_t| - 1)` while `g <= alpha`.
fn cost_complexity_prune(tree: &mut Tree, n_total: usize, alpha: f64) {
    let n = n_total as f64;
    loop {
        let scored: Vec<(usize, f64)> = reachable_splits(tree)
            .into_iter()
            .map(|i| {
                let (sub_err, leaves) = subtree_cost(tree, i);
                let own = leaf_errors(tree.nodes[i].counts());
                (i, (own - sub_err) / n / (leaves - 1) as f64)
            })
            .collect();
        let Some(g_min) = scored.iter().map(|s| s.1).min_by(f64::total_cmp) else {
            return;
        };
        if g_min > alpha + 1e-12 {
            return;
        }
        for (i, g) in scored {
            if g <= g_min + 1e-12 {
                let counts = tree.nodes[i].counts().to_vec();
                tree.nodes[i] = Node::Leaf {
                    class: majority(&counts),
                    counts,
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{EmotionLabel, FeatureRecord};

    fn data(points: &[(&[f64], EmotionLabel)]) -> Dataset {
        Dataset::new(
            points
                .iter()
                .enumerate()
                .map(|(i, (v, l))| FeatureRecord {
                    sequence_id: format!("r{i}"),
                    label: Some(*l),
                    values: v.to_vec(),
                })
                .collect(),
        )
        .unwrap()
    }

    use EmotionLabel::{Disgust as D, Surprise as S};

    #[test]
    fn impurity_closed_forms() {
        assert_eq!(gini(&[5, 0]), 0.0);
        assert_eq!(gini(&[3, 3]), 0.5);
        assert_eq!(entropy(&[4, 0]), 0.0);
        assert_eq!(entropy(&[2, 2]), 1.0);
    }

    #[test]
    fn single_class_is_one_leaf() {
        let d = data(&[(&[1.0], S), (&[2.0], S), (&[3.0], S)]);
        for m in [
            train_entropy_tree(&d, &Default::default()).unwrap(),
            train_gini_tree(&d, &Default::default()).unwrap(),
        ] {
            let (ModelParams::EntropyTree(t) | ModelParams::GiniTree(t)) = &m.params else {
                unreachable!()
            };
            assert_eq!(t.nodes.len(), 1);
            assert!(d.records().iter().all(|r| m.predict(&r.values).unwrap() == S));
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let d = data(&[
            (&[0.0, 0.0], S),
            (&[1.0, 1.0], S),
            (&[0.0, 1.0], D),
            (&[1.0, 0.0], D),
        ]);
        let g = train_gini_tree(&d, &GiniTreeConfig { min_leaf: 1, alpha: 0.0, ..Default::default() }).unwrap();
        let e = train_entropy_tree(
            &d,
            &EntropyTreeConfig { min_leaf: 1, prune_confidence: 1.0, ..Default::default() },
        )
        .unwrap();
        for m in [g, e] {
            let (ModelParams::GiniTree(t) | ModelParams::EntropyTree(t)) = &m.params else {
                unreachable!()
            };
            assert_eq!(t.depth(), 2);
            assert!(d.records().iter().all(|r| m.predict(&r.values).unwrap() == r.label.unwrap()));
        }
    }

    #[test]
    fn separable_threshold_is_midpoint() {
        let d = data(&[(&[1.0], S), (&[2.0], S), (&[4.0], D), (&[5.0], D)]);
        let s = root_split(&d, 1, false).unwrap();
        assert_eq!((s.feature, s.threshold, s.left_count), (0, 3.0, 2));
        assert_eq!(s.gain, 0.5);
        let s = root_split(&d, 1, true).unwrap();
        assert_eq!((s.threshold, s.gain, s.score), (3.0, 1.0, 1.0));
    }

    #[test]
    fn extra_errors_matches_reference_values() {
        let z = Normal::standard().inverse_cdf(0.75);
        // zero observed errors: n (1 - CF^(1/n))
        assert!((extra_errors(6.0, 0.0, 0.25, z) - 6.0 * (1.0 - 0.25f64.powf(1.0 / 6.0))).abs() < 1e-12);
        // the upper bound grows with e and stays above it
        let mut last = 0.0;
        for e in 1..10 {
            let u = e as f64 + extra_errors(20.0, e as f64, 0.25, z);
            assert!(u > last && u > e as f64);
            last = u;
        }
    }

    #[test]
    fn pruning_removes_noise_splits() {
        // one mislabeled point inside a pure region
        let mut pts: Vec<(Vec<f64>, EmotionLabel)> = (0..20).map(|i| (vec![i as f64], S)).collect();
        pts.extend((20..40).map(|i| (vec![i as f64], D)));
        pts[5].1 = D;
        pts[30].1 = S;
        let d = data(&pts.iter().map(|(v, l)| (v.as_slice(), *l)).collect::<Vec<_>>());
        let unpruned = train_entropy_tree(
            &d,
            &EntropyTreeConfig {
                prune_confidence: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let pruned = train_entropy_tree(&d, &Default::default()).unwrap();
        let leaves = |m: &TrainedModel| match &m.params {
            ModelParams::EntropyTree(t) => t.leaf_count(),
            _ => unreachable!(),
        };
        assert!(leaves(&pruned) < leaves(&unpruned));
        let g0 = train_gini_tree(&d, &GiniTreeConfig { alpha: 0.0, min_leaf: 1, ..Default::default() }).unwrap();
        let g1 = train_gini_tree(&d, &GiniTreeConfig { alpha: 0.1, min_leaf: 1, ..Default::default() }).unwrap();
        let gl = |m: &TrainedModel| match &m.params {
            ModelParams::GiniTree(t) => t.leaf_count(),
            _ => unreachable!(),
        };
        assert!(gl(&g1) < gl(&g0));
        assert_eq!(gl(&g1), 2);
    }
}
