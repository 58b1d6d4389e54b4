//! Weighted regression trees grown best-first to a fixed number of leaves.
//!
//! The learner only ever sees per-sample pairs `(z_i w_i, w_i)`: each boosting
//! algorithm expresses itself through the responses and weights it hands in.
//! A split at sorted position `s` is scored with the prefix-sum gain
//!
//! ```text
//! (sum_L zw)^2 / sum_L w + (sum_R zw)^2 / sum_R w - (sum zw)^2 / sum w
//! ```
//!
//! which equals the reduction in weighted squared error of `z`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

/// A child whose weight sum falls below this is not a valid split side; the
/// same floor bounds leaf-value denominators.
pub const MIN_CHILD_WEIGHT: f64 = 1e-12;

/// Splits must improve the weighted squared error by more than this.
pub const MIN_GAIN: f64 = 1e-12;

/// Below this many (samples x features) a node is searched on one thread.
const PARALLEL_WORK: usize = 1 << 15;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("a tree needs at least 2 terminal nodes, got {0}")]
    TooFewLeaves(usize),
    #[error("{what} has length {got}, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("malformed tree: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub gain: f64,
    pub left_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// A single terminal node.
    pub fn constant(value: f64) -> Self {
        RegressionTree { nodes: vec![Node::Leaf { value }] }
    }

    /// Rebuilds a tree from its node array, checking that node 0 is the root,
    /// children come after their parent, and every node is reached once.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::Malformed("no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        seen[0] = true;
        for (id, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split { left, right, threshold, .. } => {
                    if !threshold.is_finite() {
                        return Err(TreeError::Malformed(format!("node {id}: non-finite threshold")));
                    }
                    for child in [left, right] {
                        if child <= id || child >= nodes.len() {
                            return Err(TreeError::Malformed(format!(
                                "node {id}: child index {child} out of order"
                            )));
                        }
                        if std::mem::replace(&mut seen[child], true) {
                            return Err(TreeError::Malformed(format!("node {child} has two parents")));
                        }
                    }
                }
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(TreeError::Malformed(format!("node {id}: non-finite leaf value")));
                }
                Node::Leaf { .. } => {}
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(TreeError::Malformed(format!("node {orphan} is unreachable")));
        }
        Ok(RegressionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Largest feature index used by a split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Sets the value of the leaf at node id `node`.
    pub fn set_leaf_value(&mut self, node: usize, v: f64) {
        match &mut self.nodes[node] {
            Node::Leaf { value } => *value = v,
            Node::Split { .. } => panic!("node {node} is not a leaf"),
        }
    }

    /// Node id of the leaf that `x` falls into.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        self.leaf_of_with(|f| x[f])
    }

    pub(crate) fn leaf_of_with(&self, x: impl Fn(usize) -> f64) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split { feature, threshold, left, right } => {
                    id = if x(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_with(|f| x[f])
    }

    pub(crate) fn predict_with(&self, x: impl Fn(usize) -> f64) -> f64 {
        match self.nodes[self.leaf_of_with(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }
}

/// Value of the leaf reached by `x`.
pub fn predict_tree(tree: &RegressionTree, x: &[f64]) -> f64 {
    tree.predict(x)
}

/// Split-search input: per-sample `z_i w_i` and `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTarget {
    pub zw: Vec<f64>,
    pub w: Vec<f64>,
}

impl SplitTarget {
    /// From responses `z` and weights `w`.
    pub fn from_response(z: &[f64], w: &[f64]) -> Self {
        SplitTarget { zw: z.iter().zip(w).map(|(z, w)| z * w).collect(), w: w.to_vec() }
    }

    /// Newton form: `z = num / weight`, so `z w = num` exactly.
    pub fn weighted(num: Vec<f64>, weight: Vec<f64>) -> Self {
        SplitTarget { zw: num, w: weight }
    }

    /// Unit weights: plain least squares on `z`.
    pub fn unit(z: Vec<f64>) -> Self {
        let w = vec![1.0; z.len()];
        SplitTarget { zw: z, w }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Gain of splitting a node with sums `(zw, w)` into left and right parts.
///
/// Equal to `SL^2/WL + SR^2/WR - ST^2/WT`, evaluated as
/// `WL WR / WT * (SL/WL - SR/WR)^2`, which never cancels and is never
/// negative.
#[inline]
pub fn split_gain(left_zw: f64, left_w: f64, right_zw: f64, right_w: f64) -> f64 {
    let d = left_zw / left_w - right_zw / right_w;
    left_w / (left_w + right_w) * right_w * d * d
}

/// Threshold strictly below `hi` and at least `lo` (`lo < hi`).
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo * 0.5 + hi * 0.5;
    if mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy)]
struct Scan {
    gain: f64,
    left_count: usize,
    threshold: f64,
}

/// Best boundary along one feature. `order` lists the node's samples in
/// ascending feature value; `total` holds the node's `(sum zw, sum w)`.
fn scan_feature(order: &[u32], column: &[f64], target: &SplitTarget, total: (f64, f64)) -> Option<Scan> {
    let n = order.len();
    if n < 2 {
        return None;
    }
    let (tzw, tw) = total;
    let (mut szw, mut sw) = (0.0, 0.0);
    let mut best: Option<Scan> = None;
    for s in 0..n - 1 {
        let id = order[s] as usize;
        szw += target.zw[id];
        sw += target.w[id];
        let v = column[id];
        let next = column[order[s + 1] as usize];
        if v == next {
            continue;
        }
        let rw = tw - sw;
        if sw < MIN_CHILD_WEIGHT || rw < MIN_CHILD_WEIGHT {
            continue;
        }
        let gain = split_gain(szw, sw, tzw - szw, rw);
        if best.is_none_or(|b| gain > b.gain) {
            best = Some(Scan { gain, left_count: s + 1, threshold: midpoint(v, next) });
        }
    }
    best
}

/// Cross-feature argmax in ascending feature order; strict improvement keeps
/// the lower feature (and, within a feature, the lower threshold) on ties.
fn pick_best(scans: impl IntoIterator<Item = (usize, Option<Scan>)>) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for (feature, scan) in scans {
        if let Some(s) = scan {
            if s.gain > MIN_GAIN && best.is_none_or(|b| s.gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold: s.threshold,
                    gain: s.gain,
                    left_count: s.left_count,
                });
            }
        }
    }
    best
}

fn node_totals(ids: &[u32], target: &SplitTarget) -> (f64, f64) {
    ids.iter().fold((0.0, 0.0), |(a, b), &i| (a + target.zw[i as usize], b + target.w[i as usize]))
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), TreeError> {
    if got == expected {
        Ok(())
    } else {
        Err(TreeError::Length { what, got, expected })
    }
}

/// Best split of the node holding `samples`, for responses `z` and weights
/// `w`. `None` when no split improves the weighted squared error by more
/// than [`MIN_GAIN`].
pub fn best_split(z: &[f64], w: &[f64], samples: &[u32], dataset: &Dataset) -> Option<SplitCandidate> {
    let target = SplitTarget::from_response(z, w);
    best_split_target(&target, samples, dataset)
}

pub fn best_split_target(target: &SplitTarget, samples: &[u32], dataset: &Dataset) -> Option<SplitCandidate> {
    if samples.len() < 2 {
        return None;
    }
    let mut member = vec![false; dataset.n_samples];
    let mut ids: Vec<u32> = samples.to_vec();
    ids.sort_unstable();
    for &i in &ids {
        member[i as usize] = true;
    }
    let total = node_totals(&ids, target);
    let scans = dataset.sort_index.iter().zip(&dataset.columns).enumerate().map(|(f, (order, col))| {
        let order: Vec<u32> = order.iter().copied().filter(|&i| member[i as usize]).collect();
        (f, scan_feature(&order, col, target, total))
    });
    pick_best(scans)
}

/// A leaf of a freshly grown tree together with its training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GrownLeaf {
    pub node: usize,
    /// Sample ids in ascending order.
    pub samples: Vec<u32>,
}

/// A tree whose leaf values are still zero, plus the training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GrownTree {
    pub tree: RegressionTree,
    pub leaves: Vec<GrownLeaf>,
}

impl GrownTree {
    /// Fills every leaf with `value(samples)` and returns the finished tree.
    pub fn finalize(mut self, mut value: impl FnMut(&[u32]) -> f64) -> (RegressionTree, Vec<GrownLeaf>) {
        for leaf in &self.leaves {
            self.tree.set_leaf_value(leaf.node, value(&leaf.samples));
        }
        (self.tree, self.leaves)
    }
}

/// Grows a tree on responses `z` with weights `w` to at most `max_leaves`
/// terminal nodes.
pub fn fit_tree(z: &[f64], w: &[f64], dataset: &Dataset, max_leaves: usize) -> Result<GrownTree, TreeError> {
    check_len("z", z.len(), dataset.n_samples)?;
    check_len("w", w.len(), dataset.n_samples)?;
    grow(&SplitTarget::from_response(z, w), dataset, max_leaves)
}

#[derive(Debug, Clone, Copy)]
struct OpenLeaf {
    node: usize,
    start: usize,
    end: usize,
    split: Option<SplitCandidate>,
}

#[derive(Debug, PartialEq)]
struct Ranked {
    gain: f64,
    slot: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        // highest gain first, then the earlier-created leaf
        self.gain.total_cmp(&other.gain).then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first growth: repeatedly split the open leaf with the largest gain
/// until `max_leaves` leaves exist or no leaf has a valid split.
///
/// Every feature keeps its own copy of the sample order; a node is a
/// contiguous range in all of them, and a split stably partitions that range.
pub fn grow(target: &SplitTarget, dataset: &Dataset, max_leaves: usize) -> Result<GrownTree, TreeError> {
    if max_leaves < 2 {
        return Err(TreeError::TooFewLeaves(max_leaves));
    }
    let n = dataset.n_samples;
    check_len("split target", target.len(), n)?;

    let mut tree = RegressionTree::constant(0.0);
    if dataset.n_features == 0 {
        let leaves = vec![GrownLeaf { node: 0, samples: (0..n as u32).collect() }];
        return Ok(GrownTree { tree, leaves });
    }

    let mut order: Vec<Vec<u32>> = dataset.sort_index.clone();
    let mut goes_left = vec![false; n];
    let mut open: Vec<OpenLeaf> = Vec::with_capacity(2 * max_leaves);
    let mut heap = BinaryHeap::new();

    let root = OpenLeaf { node: 0, start: 0, end: n, split: search_node(&order, dataset, target, 0, n) };
    if let Some(s) = root.split {
        heap.push(Ranked { gain: s.gain, slot: 0 });
    }
    open.push(root);
    let mut n_leaves = 1;

    while n_leaves < max_leaves {
        let Some(Ranked { slot, .. }) = heap.pop() else { break };
        let leaf = open[slot];
        let split = leaf.split.expect("ranked leaves carry a split");
        let mid = leaf.start + split.left_count;

        for &id in &order[split.feature][leaf.start..mid] {
            goes_left[id as usize] = true;
        }
        partition_all(&mut order, split.feature, leaf.start, leaf.end, &goes_left);
        for &id in &order[split.feature][leaf.start..mid] {
            goes_left[id as usize] = false;
        }

        let left_node = tree.nodes.len();
        tree.nodes[leaf.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left_node,
            right: left_node + 1,
        };
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes.push(Node::Leaf { value: 0.0 });
        n_leaves += 1;

        open[slot].split = None;
        for (node, start, end) in [(left_node, leaf.start, mid), (left_node + 1, mid, leaf.end)] {
            // a leaf that will never be split again need not be searched
            let split = if n_leaves < max_leaves { search_node(&order, dataset, target, start, end) } else { None };
            let child_slot = open.len();
            open.push(OpenLeaf { node, start, end, split });
            if let Some(s) = split {
                heap.push(Ranked { gain: s.gain, slot: child_slot });
            }
        }
    }

    let mut leaves: Vec<GrownLeaf> = open
        .iter()
        .filter(|l| matches!(tree.nodes[l.node], Node::Leaf { .. }))
        .map(|l| {
            let mut samples = order[0][l.start..l.end].to_vec();
            samples.sort_unstable();
            GrownLeaf { node: l.node, samples }
        })
        .collect();
    leaves.sort_by_key(|l| l.node);
    Ok(GrownTree { tree, leaves })
}

fn search_node(
    order: &[Vec<u32>],
    dataset: &Dataset,
    target: &SplitTarget,
    start: usize,
    end: usize,
) -> Option<SplitCandidate> {
    if end - start < 2 {
        return None;
    }
    let total = node_totals(&order[0][start..end], target);
    let scan = |f: usize| scan_feature(&order[f][start..end], &dataset.columns[f], target, total);
    if (end - start) * dataset.n_features >= PARALLEL_WORK {
        let scans: Vec<Option<Scan>> = (0..dataset.n_features).into_par_iter().map(scan).collect();
        pick_best(scans.into_iter().enumerate())
    } else {
        pick_best((0..dataset.n_features).map(|f| (f, scan(f))))
    }
}

fn partition_all(order: &mut [Vec<u32>], split_feature: usize, start: usize, end: usize, goes_left: &[bool]) {
    let part = |scratch: &mut Vec<u32>, (f, o): (usize, &mut Vec<u32>)| {
        if f != split_feature {
            stable_partition(&mut o[start..end], goes_left, scratch);
        }
    };
    if (end - start) * order.len() >= PARALLEL_WORK {
        order.par_iter_mut().enumerate().for_each_init(Vec::new, part);
    } else {
        let mut scratch = Vec::new();
        order.iter_mut().enumerate().for_each(|item| part(&mut scratch, item));
    }
}

fn stable_partition(seg: &mut [u32], goes_left: &[bool], scratch: &mut Vec<u32>) {
    scratch.clear();
    let mut l = 0;
    for i in 0..seg.len() {
        let id = seg[i];
        if goes_left[id as usize] {
            seg[l] = id;
            l += 1;
        } else {
            scratch.push(id);
        }
    }
    seg[l..].copy_from_slice(scratch);
}

/// How a terminal-node value is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafMode {
    /// One tree per class (mart, logitboost): scaled by `(K - 1) / K`.
    Plain { n_classes: usize },
    /// Sum-to-zero trees (abc-mart, abc-logitboost): unscaled.
    Abc,
}

impl LeafMode {
    pub fn prefactor(self) -> f64 {
        match self {
            LeafMode::Plain { n_classes } => (n_classes as f64 - 1.0) / n_classes as f64,
            LeafMode::Abc => 1.0,
        }
    }
}

/// One Newton step over the leaf's samples: `prefactor * sum(num) / sum(den)`
/// with the denominator floored at [`MIN_CHILD_WEIGHT`]. `num` is the
/// negative gradient and `den` the second derivative.
pub fn leaf_value(num: &[f64], den: &[f64], samples: &[u32], mode: LeafMode) -> f64 {
    let (s_num, s_den) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), &i| (a + num[i as usize], b + den[i as usize]));
    if s_num == 0.0 {
        return 0.0;
    }
    mode.prefactor() * s_num / s_den.max(MIN_CHILD_WEIGHT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_feature(values: Vec<f64>) -> Dataset {
        let n = values.len();
        let labels = (0..n).map(|i| (i % 3) as u32).collect();
        Dataset::new(vec![values], labels, 3).unwrap()
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Dataset {
        let cols = (0..f)
            .map(|_| (0..n).map(|_| (rng.random_range(0..20) as f64) * 0.5).collect())
            .collect();
        let labels = (0..n).map(|i| (i % 3) as u32).collect();
        Dataset::new(cols, labels, 3).unwrap()
    }

    /// Weighted squared error about the weighted mean.
    fn weighted_se(z: &[f64], w: &[f64], ids: &[usize]) -> f64 {
        let sw: f64 = ids.iter().map(|&i| w[i]).sum();
        let mean = ids.iter().map(|&i| z[i] * w[i]).sum::<f64>() / sw;
        ids.iter().map(|&i| (z[i] - mean).powi(2) * w[i]).sum()
    }

    #[test]
    fn two_point_split() {
        let ds = one_feature(vec![0.0, 1.0]);
        let s = best_split(&[1.0, 2.0], &[1.0, 1.0], &[0, 1], &ds).unwrap();
        assert_eq!((s.feature, s.threshold, s.left_count), (0, 0.5, 1));
        assert!((s.gain - 0.5).abs() < 1e-15);
        assert!((weighted_se(&[1.0, 2.0], &[1.0, 1.0], &[0, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_response_has_no_split() {
        let ds = one_feature(vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(best_split(&[0.7; 4], &[1.0; 4], &[0, 1, 2, 3], &ds), None);
        let flat = one_feature(vec![5.0; 3]);
        assert_eq!(best_split(&[1.0, 2.0, 3.0], &[1.0; 3], &[0, 1, 2], &flat), None);
    }

    #[test]
    fn zero_weight_side_is_rejected() {
        let ds = one_feature(vec![0.0, 1.0, 2.0]);
        let s = best_split(&[5.0, 1.0, 2.0], &[0.0, 1.0, 1.0], &[0, 1, 2], &ds).unwrap();
        assert_eq!(s.left_count, 2);
    }

    #[test]
    fn ties_prefer_lower_feature() {
        let cols = vec![vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0, 3.0]];
        let ds = Dataset::new(cols, vec![0, 1, 2, 0], 3).unwrap();
        let s = best_split(&[1.0, 1.0, -1.0, -1.0], &[1.0; 4], &[0, 1, 2, 3], &ds).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 1.5));
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        assert_eq!(midpoint(lo, hi), lo);
        assert_eq!(midpoint(-1.0, 3.0), 1.0);
    }

    #[test]
    fn stump_at_global_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 40, 3);
        let z: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = vec![1.0; 40];
        let grown = fit_tree(&z, &w, &ds, 2).unwrap();
        let all: Vec<u32> = (0..40).collect();
        let best = best_split(&z, &w, &all, &ds).unwrap();
        match grown.tree.nodes()[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((feature, threshold), (best.feature, best.threshold)),
            _ => panic!("expected a split"),
        }
        assert_eq!(grown.tree.n_leaves(), 2);
        assert_eq!(grown.leaves[0].samples.len(), best.left_count);
    }

    #[test]
    fn separable_response_reaches_zero_error() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let z: Vec<f64> = x.iter().map(|&v| (v / 10.0).floor()).collect();
        let ds = one_feature(x);
        let w = vec![1.0; 30];
        let grown = fit_tree(&z, &w, &ds, 4).unwrap();
        let resid: f64 = grown
            .leaves
            .iter()
            .map(|l| weighted_se(&z, &w, &l.samples.iter().map(|&i| i as usize).collect::<Vec<_>>()))
            .sum();
        assert!(resid < 1e-9);
        assert_eq!(grown.tree.n_leaves(), 3, "growth stops once no positive gain remains");
    }

    #[test]
    fn twenty_leaves_partition_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ds = random_dataset(&mut rng, 100, 4);
        let z: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..100).map(|_| rng.random_range(0.1..1.0)).collect();
        let grown = fit_tree(&z, &w, &ds, 20).unwrap();
        assert_eq!(grown.tree.n_leaves(), 20);
        assert_eq!(grown.leaves.len(), 20);
        let internal = grown.tree.nodes().len() - 20;
        assert_eq!(internal, 19);
        let mut hits = vec![0; 100];
        for leaf in &grown.leaves {
            for &i in &leaf.samples {
                hits[i as usize] += 1;
                assert_eq!(grown.tree.leaf_of(&ds.row(i as usize)), leaf.node);
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn too_few_leaves() {
        let ds = one_feature(vec![0.0, 1.0]);
        assert_eq!(fit_tree(&[0.0; 2], &[1.0; 2], &ds, 1).unwrap_err(), TreeError::TooFewLeaves(1));
    }

    #[test]
    fn stump_routing_boundary_goes_left() {
        let tree = RegressionTree::from_nodes(vec![
            Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
            Node::Leaf { value: -1.0 },
            Node::Leaf { value: 2.0 },
        ])
        .unwrap();
        assert_eq!(predict_tree(&tree, &[0.5]), -1.0);
        assert_eq!(predict_tree(&tree, &[0.50001]), 2.0);
    }

    #[test]
    fn from_nodes_rejects_bad_links() {
        let cyc = vec![Node::Split { feature: 0, threshold: 0.0, left: 0, right: 1 }, Node::Leaf { value: 0.0 }];
        assert!(RegressionTree::from_nodes(cyc).is_err());
        let orphan = vec![Node::Leaf { value: 0.0 }, Node::Leaf { value: 1.0 }];
        assert!(RegressionTree::from_nodes(orphan).is_err());
    }

    #[test]
    fn leaf_value_examples() {
        // r = 1, p = 0.5: numerator 0.5, denominator 0.25
        let num = [0.5];
        let den = [0.25];
        let plain = leaf_value(&num, &den, &[0], LeafMode::Plain { n_classes: 3 });
        assert!((plain - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(leaf_value(&num, &den, &[0], LeafMode::Abc), 2.0);
        assert_eq!(leaf_value(&[0.0, 0.0], &[0.0, 0.3], &[0, 1], LeafMode::Abc), 0.0);
        // vanishing curvature is floored rather than dividing by zero
        assert_eq!(leaf_value(&[1e-20], &[0.0], &[0], LeafMode::Abc), 1e-20 / MIN_CHILD_WEIGHT);
    }

    #[test]
    fn mart_gain_is_unit_weight_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(2..40);
            let s = rng.random_range(1..n);
            let resid: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (l, r) = resid.split_at(s);
            let (sl, sr, st): (f64, f64, f64) = (l.iter().sum(), r.iter().sum(), resid.iter().sum());
            let mart = sl * sl / s as f64 + sr * sr / (n - s) as f64 - st * st / n as f64;
            let got = split_gain(sl, s as f64, sr, (n - s) as f64);
            // only the order of summation of the node total differs
            assert!((got - mart).abs() <= 1e-12 * (sl * sl + sr * sr + st * st).max(1e-300));
        }
    }

    #[test]
    fn logit_gain_is_newton_weight_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let n = rng.random_range(2..40);
            let s = rng.random_range(1..n);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
            let r: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.4))).collect();
            let w: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
            let z: Vec<f64> = (0..n).map(|i| (r[i] - p[i]) / w[i]).collect();
            let t = SplitTarget::from_response(&z, &w);
            let sum = |v: &[f64], a: usize, b: usize| v[a..b].iter().sum::<f64>();
            let res: Vec<f64> = (0..n).map(|i| r[i] - p[i]).collect();
            let logit = sum(&res, 0, s).powi(2) / sum(&w, 0, s) + sum(&res, s, n).powi(2) / sum(&w, s, n)
                - sum(&res, 0, n).powi(2) / sum(&w, 0, n);
            let via_target = split_gain(sum(&t.zw, 0, s), sum(&t.w, 0, s), sum(&t.zw, s, n), sum(&t.w, s, n));
            assert!((via_target - logit).abs() <= 1e-9 * logit.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn gain_shift_invariant(
            z in proptest::collection::vec(-3.0f64..3.0, 8),
            w in proptest::collection::vec(0.05f64..2.0, 8),
            c in -10.0f64..10.0,
        ) {
            let ds = one_feature((0..8).map(f64::from).collect());
            let ids: Vec<u32> = (0..8).collect();
            let a = best_split(&z, &w, &ids, &ds);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = best_split(&shifted, &w, &ids, &ds);
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a.gain - b.gain).abs() <= 1e-6 * a.gain.abs().max(1e-6));
            }
        }

        #[test]
        fn growth_is_deterministic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = random_dataset(&mut rng, 60, 3);
            let z: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = vec![1.0; 60];
            let a = fit_tree(&z, &w, &ds, 8).unwrap();
            let b = fit_tree(&z, &w, &ds, 8).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
