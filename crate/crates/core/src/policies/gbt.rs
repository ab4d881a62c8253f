//! Gradient-boosted regression trees on logistic loss.
//!
//! Each stage fits a depth-limited tree to the residuals `y - p` using
//! least-squares split gain over pre-binned features, then sets leaf values
//! by a regularized Newton step scaled by the learning rate. A stage that
//! would raise the training loss is damped by halving until it does not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub max_bins: usize,
    /// L2 penalty on leaf values in the Newton step.
    pub l2: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 10,
            max_bins: 32,
            l2: 1.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.min_leaf < 1 {
            return Err(Error::config("min_leaf must be at least 1"));
        }
        if !(2..=256).contains(&self.max_bins) {
            return Err(Error::config("max_bins must lie in [2, 256]"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::config("l2 must be >= 0"));
        }
        Ok(())
    }
}

const PRIOR_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Single split: `x[feature] <= threshold` goes left.
    pub fn from_stump(feature: usize, threshold: f64, left: f64, right: f64) -> Tree {
        Tree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf(left),
                Node::Leaf(right),
            ],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf(v) = n {
                *v *= factor;
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTreeModel {
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss after initialization and after each stage.
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean of `log(1 + e^m) - y m`; leaves `e^{-|m|}` per row in `expo` so the
/// caller can recover `sigmoid(m)` without a second exponential.
fn log_loss_with(y: &[f64], margin: &[f64], expo: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for ((&t, &m), e) in y.iter().zip(margin).zip(expo.iter_mut()) {
        *e = (-m.abs()).exp();
        total += m.max(0.0) + e.ln_1p() - t * m;
    }
    total / y.len() as f64
}

fn sigmoid_from(m: f64, e: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

impl BoostedTreeModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Conversion probability, clamped to the open unit interval.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x)).clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP)
    }
}

/// Per-feature quantile cut points; a value goes to bin `i` where `i` is the
/// number of cuts strictly below it.
struct Binned {
    cuts: Vec<Vec<f64>>,
    /// Row-major bin indices, `n_features` per row.
    bins: Vec<u8>,
    /// Offset of each feature's first bin in a flat histogram.
    offsets: Vec<usize>,
    total_bins: usize,
}

fn cut_points(rows: &[&[f64]], f: usize, max_bins: usize) -> Vec<f64> {
    let n = rows.len();
    let mut sorted: Vec<f64> = rows.iter().map(|r| r[f]).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let mut c: Vec<f64> = (1..max_bins)
        .filter_map(|q| {
            let i = (q * n / max_bins).min(n - 1);
            let hi = sorted[i];
            // cut strictly between distinct neighbours
            let lo = sorted[..i].iter().rev().find(|&&v| v < hi).copied()?;
            Some(0.5 * (lo + hi))
        })
        .collect();
    c.dedup();
    c
}

fn bin_features(rows: &[&[f64]], n_features: usize, max_bins: usize) -> Binned {
    let cuts: Vec<Vec<f64>> = (0..n_features).map(|f| cut_points(rows, f, max_bins)).collect();
    let mut offsets = Vec::with_capacity(n_features);
    let mut total_bins = 0;
    for c in &cuts {
        offsets.push(total_bins);
        total_bins += c.len() + 1;
    }
    let mut bins = Vec::with_capacity(rows.len() * n_features);
    for r in rows {
        for (f, c) in cuts.iter().enumerate() {
            bins.push(c.partition_point(|&cut| cut < r[f]) as u8);
        }
    }
    Binned {
        cuts,
        bins,
        offsets,
        total_bins,
    }
}

/// Residual sums and row counts per (feature, bin).
#[derive(Clone)]
struct Histogram {
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl Histogram {
    fn build(binned: &Binned, rows: &[u32], residual: &[f64]) -> Histogram {
        let nf = binned.cuts.len();
        let mut sums = vec![0.0; binned.total_bins];
        let mut counts = vec![0u32; binned.total_bins];
        for &i in rows {
            let r = residual[i as usize];
            let row = &binned.bins[i as usize * nf..(i as usize + 1) * nf];
            for (&b, &off) in row.iter().zip(&binned.offsets) {
                let k = off + b as usize;
                sums[k] += r;
                counts[k] += 1;
            }
        }
        Histogram { sums, counts }
    }

    fn subtract(&self, other: &Histogram) -> Histogram {
        Histogram {
            sums: self.sums.iter().zip(&other.sums).map(|(a, b)| a - b).collect(),
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a - b).collect(),
        }
    }
}

struct NodeWork {
    rows: Vec<u32>,
    hist: Histogram,
    depth: usize,
    index: usize,
}

fn build_tree(
    binned: &Binned,
    residual: &[f64],
    hess: &[f64],
    params: &GbtParams,
) -> (Tree, Vec<u32>) {
    // leaf_of[row] = node index of the leaf the row lands in
    let n = residual.len();
    let nf = binned.cuts.len();
    let mut nodes: Vec<Node> = vec![Node::Leaf(0.0)];
    let mut leaf_of = vec![0u32; n];
    let root: Vec<u32> = (0..n as u32).collect();
    let hist = Histogram::build(binned, &root, residual);
    let mut stack = vec![NodeWork {
        rows: root,
        hist,
        depth: 0,
        index: 0,
    }];
    while let Some(work) = stack.pop() {
        let rows = work.rows;
        let count = rows.len();
        let sum_r: f64 = rows.iter().map(|&i| residual[i as usize]).sum();
        let sum_h: f64 = rows.iter().map(|&i| hess[i as usize]).sum();
        let leaf_value = params.learning_rate * sum_r / (sum_h + params.l2).max(1e-12);

        let mut best: Option<(f64, usize, usize)> = None;
        if work.depth < params.max_depth && count >= 2 * params.min_leaf {
            let parent_score = sum_r * sum_r / count as f64;
            for f in 0..nf {
                let n_bins = binned.cuts[f].len() + 1;
                let off = binned.offsets[f];
                let mut left_s = 0.0;
                let mut left_c = 0usize;
                for b in 0..n_bins - 1 {
                    left_s += work.hist.sums[off + b];
                    left_c += work.hist.counts[off + b] as usize;
                    let right_c = count - left_c;
                    if left_c < params.min_leaf || right_c < params.min_leaf {
                        continue;
                    }
                    let right_s = sum_r - left_s;
                    let gain = left_s * left_s / left_c as f64 + right_s * right_s / right_c as f64 - parent_score;
                    if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                        best = Some((gain, f, b));
                    }
                }
            }
        }

        match best {
            None => {
                nodes[work.index] = Node::Leaf(leaf_value);
                for &i in &rows {
                    leaf_of[i as usize] = work.index as u32;
                }
            }
            Some((_, f, b)) => {
                let threshold = binned.cuts[f][b];
                let (l, r): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&i| (binned.bins[i as usize * nf + f] as usize) <= b);
                let li = nodes.len();
                nodes.push(Node::Leaf(0.0));
                let ri = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes[work.index] = Node::Split {
                    feature: f,
                    threshold,
                    left: li,
                    right: ri,
                };
                let depth = work.depth + 1;
                let (lh, rh) = if depth >= params.max_depth {
                    // children are leaves; histograms are never read
                    let empty = Histogram {
                        sums: Vec::new(),
                        counts: Vec::new(),
                    };
                    (empty.clone(), empty)
                } else if l.len() <= r.len() {
                    let lh = Histogram::build(binned, &l, residual);
                    let rh = work.hist.subtract(&lh);
                    (lh, rh)
                } else {
                    let rh = Histogram::build(binned, &r, residual);
                    let lh = work.hist.subtract(&rh);
                    (lh, rh)
                };
                // right pushed first so the left subtree is processed first
                stack.push(NodeWork {
                    rows: r,
                    hist: rh,
                    depth,
                    index: ri,
                });
                stack.push(NodeWork {
                    rows: l,
                    hist: lh,
                    depth,
                    index: li,
                });
            }
        }
    }
    (Tree { nodes }, leaf_of)
}

/// Fit a boosted ensemble on `(features, label)` rows.
pub fn gbt_train(features: &[&[f64]], labels: &[u8], params: &GbtParams) -> Result<BoostedTreeModel> {
    params.validate()?;
    if features.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    let n_features = features[0].len();
    if features.iter().any(|r| r.len() != n_features) {
        return Err(Error::invalid("rows have inconsistent widths"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let n = y.len();
    let prior = (y.iter().sum::<f64>() / n as f64).clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
    let base_score = (prior / (1.0 - prior)).ln();
    let mut model = BoostedTreeModel {
        n_features,
        base_score,
        trees: Vec::new(),
        loss_trace: Vec::new(),
    };
    let mut margin = vec![base_score; n];
    let mut expo = vec![0.0; n];
    let mut loss = log_loss_with(&y, &margin, &mut expo);
    model.loss_trace.push(loss);

    let single_class = y.iter().all(|&v| v == y[0]);
    if single_class || params.n_trees == 0 {
        return Ok(model);
    }

    let binned = bin_features(features, n_features, params.max_bins);
    let mut residual = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_expo = vec![0.0; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid_from(margin[i], expo[i]);
            residual[i] = y[i] - p;
            hess[i] = p * (1.0 - p);
        }
        let (mut tree, leaf_of) = build_tree(&binned, &residual, &hess, params);
        let leaf_vals: Vec<f64> = tree
            .nodes
            .iter()
            .map(|n| if let Node::Leaf(v) = n { *v } else { 0.0 })
            .collect();
        let mut factor = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..n {
                trial[i] = margin[i] + factor * leaf_vals[leaf_of[i] as usize];
            }
            let trial_loss = log_loss_with(&y, &trial, &mut trial_expo);
            if trial_loss <= loss {
                loss = trial_loss;
                accepted = true;
                break;
            }
            factor *= 0.5;
        }
        if !accepted {
            // no descent direction left at this precision
            break;
        }
        if factor != 1.0 {
            tree.scale(factor);
        }
        std::mem::swap(&mut margin, &mut trial);
        std::mem::swap(&mut expo, &mut trial_expo);
        model.trees.push(tree);
        model.loss_trace.push(loss);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn all_positive_labels_predict_near_one() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let m = gbt_train(&rows(&x), &[1; 50], &GbtParams::default()).unwrap();
        assert!(m.trees.is_empty());
        for r in &x {
            assert!(m.predict_proba(r) > 0.99);
        }
    }

    #[test]
    fn separable_data_fits_perfectly() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..100).map(|i| u8::from(i >= 50)).collect();
        let m = gbt_train(&rows(&x), &y, &GbtParams::default()).unwrap();
        for (r, &t) in x.iter().zip(&y) {
            let pred = u8::from(m.predict_proba(r) > 0.5);
            assert_eq!(pred, t);
        }
    }

    #[test]
    fn zero_rounds_predicts_base_rate() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let p = GbtParams {
            n_trees: 0,
            ..GbtParams::default()
        };
        let m = gbt_train(&rows(&x), &y, &p).unwrap();
        assert!((m.predict_proba(&[3.0]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn loss_is_non_increasing_and_depth_bounded() {
        let x: Vec<Vec<f64>> = (0..400)
            .map(|i| vec![(i % 17) as f64, ((i * 7) % 13) as f64, (i % 3) as f64])
            .collect();
        let y: Vec<u8> = (0..400).map(|i| u8::from((i % 17) > 8 && (i % 3) != 1 || i % 29 == 0)).collect();
        let m = gbt_train(&rows(&x), &y, &GbtParams::default()).unwrap();
        assert!(!m.trees.is_empty());
        for w in m.loss_trace.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
        assert!(m.trees.iter().all(|t| t.depth() <= 3));
        assert!(x.iter().all(|r| {
            let p = m.predict_proba(r);
            p > 0.0 && p < 1.0
        }));
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(gbt_train(&[], &[], &GbtParams::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 11) as f64, (i % 5) as f64]).collect();
        let y: Vec<u8> = (0..200).map(|i| u8::from(i % 11 > 5)).collect();
        let a = gbt_train(&rows(&x), &y, &GbtParams::default()).unwrap();
        let b = gbt_train(&rows(&x), &y, &GbtParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
