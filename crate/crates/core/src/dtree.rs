//! Decision-tree induction over continuous attributes in the C4.5 style.
//!
//! Growth is greedy and top-down. At each node every attribute proposes its
//! best binary cut `x[a] <= t` (by information gain, with `t` the midpoint
//! between adjacent distinct values and at least `min_cases` rows on each
//! side). The proposed gain is reduced by `log2(#cuts) / n`, the usual cost of
//! choosing a threshold. Among attributes whose corrected gain is at least the
//! average corrected gain, the highest gain ratio wins; ties go to the lowest
//! attribute index. A node becomes a leaf when it is pure, has fewer than
//! `2 * min_cases` rows, or no cut has positive corrected gain.
//!
//! Pruning uses pessimistic error estimates: a leaf holding `n` cases with `e`
//! errors is charged `e + U_cf(e, n)` errors, where `U_cf` is the binomial
//! upper bound at the confidence factor. Bottom-up, a subtree is replaced by a
//! leaf when the leaf's estimate is no worse than the subtree's (+0.1). With
//! global pruning on, a second pass then collapses the cheapest remaining
//! subtrees while the whole tree's estimate stays within one standard error of
//! its value after the first pass.

use std::fmt;

use crate::classifier::{argmax, Classifier};
use crate::dataset::{FeatureMatrix, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeOptions {
    pub global_prune: bool,
    /// Percent, 10..=100.
    pub confidence_factor: u32,
    /// 1..=30.
    pub min_cases: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            global_prune: true,
            confidence_factor: 25,
            min_cases: 2,
        }
    }
}

impl TreeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(10..=100).contains(&self.confidence_factor) {
            return Err(Error::InvalidParameter(format!(
                "confidence factor {} outside 10..=100",
                self.confidence_factor
            )));
        }
        if !(1..=30).contains(&self.min_cases) {
            return Err(Error::InvalidParameter(format!(
                "min_cases {} outside 1..=30",
                self.min_cases
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        label: usize,
        dist: Vec<usize>,
    },
    Split {
        attribute: usize,
        threshold: f64,
        dist: Vec<usize>,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn dist(&self) -> &[usize] {
        match self {
            Node::Leaf { dist, .. } | Node::Split { dist, .. } => dist,
        }
    }

    /// Training cases that reached this node.
    pub fn cases(&self) -> usize {
        self.dist().iter().sum()
    }

    fn majority(dist: &[usize]) -> usize {
        argmax(dist.iter().map(|&c| c as f64))
    }

    fn leaf_errors(dist: &[usize]) -> usize {
        dist.iter().sum::<usize>() - dist.iter().copied().max().unwrap_or(0)
    }

    fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    fn branches(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.branches() + right.branches(),
        }
    }

    fn collapse(&mut self) {
        let dist = self.dist().to_vec();
        *self = Node::Leaf {
            label: Node::majority(&dist),
            dist,
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    root: Node,
    n_features: usize,
}

impl DecisionTree {
    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Number of leaves, the figure decision-tree tools report as tree size.
    pub fn size(&self) -> usize {
        self.root.leaves()
    }

    pub fn branch_count(&self) -> usize {
        self.root.branches()
    }
}

impl Classifier for DecisionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_dimension(x)?;
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { label, .. } => return Ok(*label),
                Node::Split {
                    attribute,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*attribute] <= *threshold { left } else { right };
                }
            }
        }
    }
}

impl fmt::Display for DecisionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn leaf(f: &mut fmt::Formatter<'_>, node: &Node) -> fmt::Result {
            match node {
                Node::Leaf { label, dist } => {
                    let n: usize = dist.iter().sum();
                    let e = Node::leaf_errors(dist);
                    if e == 0 {
                        writeln!(f, " {label} ({n})")
                    } else {
                        writeln!(f, " {label} ({n}/{e})")
                    }
                }
                Node::Split { .. } => writeln!(f),
            }
        }
        fn walk(f: &mut fmt::Formatter<'_>, node: &Node, depth: usize) -> fmt::Result {
            if let Node::Split {
                attribute,
                threshold,
                left,
                right,
                ..
            } = node
            {
                let pad = "|   ".repeat(depth);
                write!(f, "{pad}f{attribute} <= {threshold}:")?;
                leaf(f, left)?;
                walk(f, left, depth + 1)?;
                write!(f, "{pad}f{attribute} > {threshold}:")?;
                leaf(f, right)?;
                walk(f, right, depth + 1)?;
            }
            Ok(())
        }
        if let Node::Leaf { .. } = self.root {
            write!(f, ":")?;
            leaf(f, &self.root)?;
        } else {
            walk(f, &self.root, 0)?;
        }
        writeln!(f, "\nSize: {}", self.size())
    }
}

fn entropy(dist: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    dist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Information gain, split information and gain ratio of one binary cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub gain: f64,
    pub split_info: f64,
    pub gain_ratio: f64,
}

fn score_from_counts(parent: &[usize], left: &[usize], n: usize, nl: usize) -> SplitScore {
    let nr = n - nl;
    let right: Vec<usize> = parent.iter().zip(left).map(|(p, l)| p - l).collect();
    let nf = n as f64;
    let gain = entropy(parent, n)
        - (nl as f64 / nf) * entropy(left, nl)
        - (nr as f64 / nf) * entropy(&right, nr);
    let split_info = entropy(&[nl, nr], n);
    SplitScore {
        gain,
        split_info,
        gain_ratio: if split_info > 0.0 { gain / split_info } else { 0.0 },
    }
}

/// Scores the cut `value <= threshold` on a labelled column. `None` when one
/// side would be empty.
pub fn split_score(values: &[f64], labels: &[usize], threshold: f64) -> Option<SplitScore> {
    let n = values.len();
    let mut parent = vec![0; NUM_CLASSES];
    let mut left = vec![0; NUM_CLASSES];
    let mut nl = 0;
    for (&v, &l) in values.iter().zip(labels) {
        parent[l] += 1;
        if v <= threshold {
            left[l] += 1;
            nl += 1;
        }
    }
    (nl > 0 && nl < n).then(|| score_from_counts(&parent, &left, n, nl))
}

/// The cut chosen for a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateSplit {
    pub attribute: usize,
    pub threshold: f64,
    /// Information gain minus the threshold cost.
    pub corrected_gain: f64,
    pub gain_ratio: f64,
}

/// Best cut over `rows` of `data`, or `None` if the node should be a leaf.
pub fn best_split(data: &FeatureMatrix, rows: &[usize], min_cases: usize) -> Option<CandidateSplit> {
    let n = rows.len();
    if n < 2 * min_cases {
        return None;
    }
    let mut parent = vec![0; NUM_CLASSES];
    for &r in rows {
        parent[data.rows[r].label] += 1;
    }
    let mut proposals: Vec<CandidateSplit> = Vec::new();
    let mut order: Vec<usize> = rows.to_vec();
    for attribute in 0..data.n_features {
        let value = |r: usize| data.rows[r].features[attribute];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let mut left = vec![0; NUM_CLASSES];
        let mut best: Option<(SplitScore, f64)> = None;
        let mut cuts = 0usize;
        for i in 0..n - 1 {
            left[data.rows[order[i]].label] += 1;
            let (lo, hi) = (value(order[i]), value(order[i + 1]));
            let nl = i + 1;
            if lo == hi || nl < min_cases || n - nl < min_cases {
                continue;
            }
            cuts += 1;
            let score = score_from_counts(&parent, &left, n, nl);
            if best.is_none_or(|(b, _)| score.gain > b.gain + 1e-12) {
                let mid = (lo + hi) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some((score, threshold));
            }
        }
        if let Some((score, threshold)) = best {
            let corrected_gain = score.gain - (cuts as f64).log2() / n as f64;
            proposals.push(CandidateSplit {
                attribute,
                threshold,
                corrected_gain,
                gain_ratio: if score.split_info > 0.0 {
                    corrected_gain / score.split_info
                } else {
                    0.0
                },
            });
        }
    }
    const EPS: f64 = 1e-9;
    let useful: Vec<&CandidateSplit> = proposals.iter().filter(|c| c.corrected_gain > EPS).collect();
    if useful.is_empty() {
        return None;
    }
    let avg_gain = useful.iter().map(|c| c.corrected_gain).sum::<f64>() / useful.len() as f64;
    let mut chosen: Option<&CandidateSplit> = None;
    for c in useful {
        if c.corrected_gain >= avg_gain - EPS && chosen.is_none_or(|b| c.gain_ratio > b.gain_ratio + EPS) {
            chosen = Some(c);
        }
    }
    chosen.copied()
}

fn grow(data: &FeatureMatrix, rows: &mut [usize], min_cases: usize) -> Node {
    let mut dist = vec![0; NUM_CLASSES];
    for &r in rows.iter() {
        dist[data.rows[r].label] += 1;
    }
    let pure = dist.iter().filter(|&&c| c > 0).count() <= 1;
    let split = if pure { None } else { best_split(data, rows, min_cases) };
    match split {
        None => Node::Leaf {
            label: Node::majority(&dist),
            dist,
        },
        Some(s) => {
            let mut left: Vec<usize> = Vec::new();
            let mut right: Vec<usize> = Vec::new();
            for &r in rows.iter() {
                if data.rows[r].features[s.attribute] <= s.threshold {
                    left.push(r);
                } else {
                    right.push(r);
                }
            }
            Node::Split {
                attribute: s.attribute,
                threshold: s.threshold,
                dist,
                left: Box::new(grow(data, &mut left, min_cases)),
                right: Box::new(grow(data, &mut right, min_cases)),
            }
        }
    }
}

/// Upper-bound confidence multipliers for the binomial error estimate.
const CF_VALUES: [f64; 9] = [0.0, 0.001, 0.005, 0.01, 0.05, 0.10, 0.20, 0.40, 1.00];
const CF_DEVIATES: [f64; 9] = [4.0, 3.09, 2.58, 2.33, 1.65, 1.28, 0.84, 0.25, 0.00];

/// Pessimistic error estimator for a confidence factor in (0, 1].
#[derive(Debug, Clone, Copy)]
pub struct ErrorEstimator {
    cf: f64,
    z_squared: f64,
}

impl ErrorEstimator {
    pub fn new(cf: f64) -> Self {
        let mut i = 1;
        while i < CF_VALUES.len() - 1 && cf > CF_VALUES[i] {
            i += 1;
        }
        let z = CF_DEVIATES[i - 1]
            + (CF_DEVIATES[i] - CF_DEVIATES[i - 1]) * (cf - CF_VALUES[i - 1]) / (CF_VALUES[i] - CF_VALUES[i - 1]);
        ErrorEstimator { cf, z_squared: z * z }
    }

    /// Extra errors to add to `e` observed errors among `n` cases.
    pub fn extra_errors(&self, n: f64, e: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        if e < 1e-6 {
            n * (1.0 - (self.cf.ln() / n).exp())
        } else if e < 0.9999 {
            let base = n * (1.0 - (self.cf.ln() / n).exp());
            base + e * (self.extra_errors(n, 1.0) - base)
        } else if e + 0.5 >= n {
            0.67 * (n - e)
        } else {
            let c = self.z_squared;
            let upper = (e + 0.5 + c / 2.0 + (c * ((e + 0.5) * (1.0 - (e + 0.5) / n) + c / 4.0)).sqrt()) / (n + c);
            n * upper - e
        }
    }

    fn leaf_estimate(&self, dist: &[usize]) -> f64 {
        let n = dist.iter().sum::<usize>() as f64;
        let e = Node::leaf_errors(dist) as f64;
        e + self.extra_errors(n, e)
    }
}

/// Returns the estimated errors of the (pruned) subtree.
fn prune_local(node: &mut Node, est: &ErrorEstimator) -> f64 {
    match node {
        Node::Leaf { dist, .. } => est.leaf_estimate(dist),
        Node::Split { left, right, dist, .. } => {
            let subtree = prune_local(left, est) + prune_local(right, est);
            let as_leaf = est.leaf_estimate(dist);
            if as_leaf <= subtree + 0.1 {
                node.collapse();
                as_leaf
            } else {
                subtree
            }
        }
    }
}

fn subtree_estimate(node: &Node, est: &ErrorEstimator) -> f64 {
    match node {
        Node::Leaf { dist, .. } => est.leaf_estimate(dist),
        Node::Split { left, right, .. } => subtree_estimate(left, est) + subtree_estimate(right, est),
    }
}

/// Preorder path (false = left) to the split whose collapse costs least.
fn cheapest_collapse(node: &Node, est: &ErrorEstimator, path: &mut Vec<bool>, best: &mut Option<(f64, Vec<bool>)>) {
    if let Node::Split { left, right, dist, .. } = node {
        let cost = est.leaf_estimate(dist) - subtree_estimate(node, est);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            *best = Some((cost, path.clone()));
        }
        path.push(false);
        cheapest_collapse(left, est, path, best);
        path.pop();
        path.push(true);
        cheapest_collapse(right, est, path, best);
        path.pop();
    }
}

fn node_at<'a>(mut node: &'a mut Node, path: &[bool]) -> &'a mut Node {
    for &go_right in path {
        node = match node {
            Node::Split { left, right, .. } => {
                if go_right {
                    right
                } else {
                    left
                }
            }
            Node::Leaf { .. } => unreachable!("path leads through splits only"),
        };
    }
    node
}

fn prune_global(root: &mut Node, est: &ErrorEstimator) {
    let n = root.cases() as f64;
    let base = subtree_estimate(root, est);
    let se = (base.max(0.0) * (n - base).max(0.0) / n).sqrt();
    let limit = base + se;
    let mut current = base;
    loop {
        let mut best = None;
        cheapest_collapse(root, est, &mut Vec::new(), &mut best);
        match best {
            Some((cost, path)) if current + cost <= limit => {
                node_at(root, &path).collapse();
                current += cost;
            }
            _ => break,
        }
    }
}

pub fn dtree_train(train: &FeatureMatrix, opts: &TreeOptions) -> Result<DecisionTree> {
    opts.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let mut rows: Vec<usize> = (0..train.len()).collect();
    let mut root = grow(train, &mut rows, opts.min_cases);
    let est = ErrorEstimator::new(f64::from(opts.confidence_factor) / 100.0);
    prune_local(&mut root, &est);
    if opts.global_prune {
        prune_global(&mut root, &est);
    }
    Ok(DecisionTree {
        root,
        n_features: train.n_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Row;

    fn matrix(rows: Vec<(Vec<f64>, usize)>) -> FeatureMatrix {
        let n = rows[0].0.len();
        FeatureMatrix::new(
            "t",
            n,
            rows.into_iter().map(|(features, label)| Row { features, label }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn pure_root_is_single_leaf() {
        let m = matrix((0..6).map(|i| (vec![i as f64 / 10.0], 4)).collect());
        let tree = dtree_train(&m, &TreeOptions::default()).unwrap();
        assert_eq!(tree.size(), 1);
        assert_eq!(tree.error_rate(&m).unwrap(), 0.0);
        assert_eq!(tree.predict(&[0.99]).unwrap(), 4);
    }

    #[test]
    fn single_threshold_separates_two_classes() {
        let mut rows: Vec<(Vec<f64>, usize)> = (0..10).map(|i| (vec![0.3, i as f64 / 100.0], 0)).collect();
        rows.extend((0..10).map(|i| (vec![0.3, 0.5 + i as f64 / 100.0], 1)));
        let m = matrix(rows);
        let tree = dtree_train(&m, &TreeOptions::default()).unwrap();
        assert!(tree.size() + tree.branch_count() <= 3);
        assert_eq!(tree.error_rate(&m).unwrap(), 0.0);
        match tree.root() {
            Node::Split { attribute, threshold, .. } => {
                assert_eq!(*attribute, 1);
                assert!((threshold - 0.295).abs() < 1e-12);
            }
            other => panic!("expected a split, got {other:?}"),
        }
    }

    #[test]
    fn hand_built_threshold_tree() {
        let tree = DecisionTree {
            root: Node::Split {
                attribute: 0,
                threshold: 0.5,
                dist: vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 0],
                left: Box::new(Node::Leaf { label: 0, dist: vec![1, 0, 0, 0, 0, 0, 0, 0, 0, 0] }),
                right: Box::new(Node::Leaf { label: 1, dist: vec![0, 1, 0, 0, 0, 0, 0, 0, 0, 0] }),
            },
            n_features: 1,
        };
        assert_eq!(tree.predict(&[0.2]).unwrap(), 0);
        assert_eq!(tree.predict(&[0.5]).unwrap(), 0);
        assert_eq!(tree.predict(&[0.51]).unwrap(), 1);
        assert!(tree.predict(&[0.2, 0.1]).is_err());
        let text = tree.to_string();
        assert!(text.contains("f0 <= 0.5: 0 (1)"), "{text}");
        assert!(text.contains("Size: 2"));
    }

    #[test]
    fn options_are_validated() {
        let m = matrix(vec![(vec![0.0], 0), (vec![1.0], 1)]);
        for opts in [
            TreeOptions { confidence_factor: 5, ..Default::default() },
            TreeOptions { confidence_factor: 101, ..Default::default() },
            TreeOptions { min_cases: 0, ..Default::default() },
            TreeOptions { min_cases: 31, ..Default::default() },
        ] {
            assert!(dtree_train(&m, &opts).is_err());
        }
        let empty = FeatureMatrix::new("t", 1, vec![]).unwrap();
        assert!(dtree_train(&empty, &TreeOptions::default()).is_err());
    }

    #[test]
    fn estimator_limits() {
        let est = ErrorEstimator::new(0.25);
        // no observed errors: n (1 - cf^(1/n))
        let n = 10.0;
        assert!((est.extra_errors(n, 0.0) - n * (1.0 - 0.25f64.powf(1.0 / n))).abs() < 1e-12);
        // more confidence -> larger penalty
        let strict = ErrorEstimator::new(0.10);
        assert!(strict.extra_errors(20.0, 3.0) > est.extra_errors(20.0, 3.0));
        // cf = 1 adds nothing for error-free leaves
        assert_eq!(ErrorEstimator::new(1.0).extra_errors(7.0, 0.0), 0.0);
    }

    #[test]
    fn replaying_training_set_on_unpruned_pure_tree() {
        let rows: Vec<(Vec<f64>, usize)> = (0..40)
            .map(|i| {
                let x = (i * 37 % 40) as f64 / 40.0;
                let y = (i * 11 % 40) as f64 / 40.0;
                (vec![x, y], usize::from(x > 0.5) + 2 * usize::from(y > 0.3))
            })
            .collect();
        let m = matrix(rows);
        let opts = TreeOptions { min_cases: 1, confidence_factor: 100, global_prune: false };
        let tree = dtree_train(&m, &opts).unwrap();
        assert_eq!(tree.error_rate(&m).unwrap(), 0.0);
        for r in &m.rows {
            assert_eq!(tree.predict(&r.features).unwrap(), r.label);
        }
    }
}
