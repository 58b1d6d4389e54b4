//! Training loops and prediction.
//!
//! Plain algorithms (mart, logitboost) fit one tree per class per iteration.
//! The abc algorithms fit `K - 1` trees against a base class whose score is
//! recovered from the sum-to-zero constraint. The base class is chosen by
//! trying every class and keeping the one with the lowest training loss; with
//! a gap `G > 1` that search runs only on iterations `1, G + 1, 2G + 1, ...`
//! and the other iterations reuse the last chosen base.
//!
//! mart and abc-mart search splits with unit weights; logitboost and
//! abc-logitboost weight samples by the second derivative. Leaf values are a
//! single Newton step in all four.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Dataset, IndexBase};
use crate::numerics::{self, argmax, NumericsError, ScoreState};
use crate::tree::{self, GrownLeaf, LeafMode, RegressionTree, SplitTarget, TreeError};

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("iteration {iteration}: training loss is not finite")]
    NonFiniteLoss { iteration: usize },
    #[error("candidate loss for base class {base} is not finite")]
    NonFiniteCandidate { base: usize },
    #[error("feature vector has {got} entries, model expects {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub type Result<T> = std::result::Result<T, BoostError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Mart,
    LogitBoost,
    AbcMart,
    AbcLogitBoost,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::Mart, Algorithm::LogitBoost, Algorithm::AbcMart, Algorithm::AbcLogitBoost];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mart => "mart",
            Algorithm::LogitBoost => "logitboost",
            Algorithm::AbcMart => "abc-mart",
            Algorithm::AbcLogitBoost => "abc-logitboost",
        }
    }

    pub fn is_abc(self) -> bool {
        matches!(self, Algorithm::AbcMart | Algorithm::AbcLogitBoost)
    }

    /// Whether split search weights samples by the second derivative.
    pub fn weighted_split(self) -> bool {
        matches!(self, Algorithm::LogitBoost | Algorithm::AbcLogitBoost)
    }

    /// The one-tree-per-class algorithm sharing this one's split criterion.
    pub fn plain_counterpart(self) -> Algorithm {
        match self {
            Algorithm::Mart | Algorithm::AbcMart => Algorithm::Mart,
            Algorithm::LogitBoost | Algorithm::AbcLogitBoost => Algorithm::LogitBoost,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mart" => Ok(Algorithm::Mart),
            "logitboost" | "robust-logitboost" => Ok(Algorithm::LogitBoost),
            "abc-mart" => Ok(Algorithm::AbcMart),
            "abc-logitboost" | "abc-logit" => Ok(Algorithm::AbcLogitBoost),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Terminal nodes per tree (J).
    pub n_leaves: usize,
    /// Shrinkage (nu) applied to every leaf value.
    pub shrinkage: f64,
    /// Maximum number of boosting iterations (M).
    pub n_iterations: usize,
    /// Iterations between base-class searches (G). Ignored by plain algorithms.
    pub gap: usize,
    /// Stop after the first iteration whose training loss is at or below this.
    pub early_stop_loss: Option<f64>,
    /// Worker threads; 0 uses the rayon default. Never changes results.
    pub threads: usize,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainConfig {
            algorithm,
            n_leaves: 20,
            shrinkage: 0.1,
            n_iterations: 1000,
            gap: 1,
            early_stop_loss: None,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_leaves < 2 {
            return Err(BoostError::Config(format!("J must be at least 2, got {}", self.n_leaves)));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(BoostError::Config(format!("nu must lie in (0, 1], got {}", self.shrinkage)));
        }
        if self.gap < 1 {
            return Err(BoostError::Config("G must be at least 1".into()));
        }
        if let Some(t) = self.early_stop_loss {
            if !(t.is_finite() && t >= 0.0) {
                return Err(BoostError::Config(format!("early-stop loss must be finite and >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// What an abc iteration does about the base class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseStep {
    Search,
    Reuse,
}

/// Iteration `m` (1-based) searches iff `(m - 1) mod gap == 0`.
pub fn gap_schedule(m: usize, gap: usize) -> BaseStep {
    debug_assert!(m >= 1 && gap >= 1);
    if (m - 1).is_multiple_of(gap.max(1)) {
        BaseStep::Search
    } else {
        BaseStep::Reuse
    }
}

/// Number of trees fitted by `n_iterations` iterations, search candidates
/// included: `K M` for plain algorithms, `S K (K - 1) + (M - S)(K - 1)` with
/// `S = ceil(M / G)` searches for abc algorithms.
pub fn tree_fit_cost(n_classes: usize, n_iterations: usize, gap: usize, algorithm: Algorithm) -> u64 {
    let (k, m) = (n_classes as u64, n_iterations as u64);
    if !algorithm.is_abc() {
        return k * m;
    }
    let searches = m.div_ceil(gap.max(1) as u64);
    searches * k * (k - 1) + (m - searches) * (k - 1)
}

/// Lowest-loss candidate; ties go to the lowest class.
pub fn select_base(losses: &[f64]) -> Result<usize> {
    if let Some(base) = losses.iter().position(|l| !l.is_finite()) {
        return Err(BoostError::NonFiniteCandidate { base });
    }
    let mut best = 0;
    for (b, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = b;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTree {
    pub class: usize,
    pub tree: RegressionTree,
}

/// Trees added by one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// Base class of an abc stage; its score is minus the sum of the others.
    pub base: Option<usize>,
    pub trees: Vec<ClassTree>,
}

impl Stage {
    /// Adds this stage to one row of scores.
    pub fn apply(&self, scores: &mut [f64], x: impl Fn(usize) -> f64 + Copy, shrinkage: f64) {
        for ct in &self.trees {
            scores[ct.class] += shrinkage * ct.tree.predict_with(x);
        }
        if let Some(b) = self.base {
            rebalance_base(scores, b);
        }
    }
}

/// Sets the base class score to minus the sum of the other scores.
fn rebalance_base(row: &mut [f64], base: usize) {
    let mut sum = 0.0;
    for (k, &v) in row.iter().enumerate() {
        if k != base {
            sum += v;
        }
    }
    row[base] = -sum;
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub train_loss: f64,
    pub test_error: Option<usize>,
    pub base_class: Option<usize>,
    pub trees_fit_cum: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub config: TrainConfig,
    pub n_classes: usize,
    pub n_features: usize,
    /// Original label value of each class id.
    pub classes: Vec<i64>,
    pub index_base: IndexBase,
    pub stages: Vec<Stage>,
    /// Base class of every iteration (`None` for plain algorithms).
    pub base_history: Vec<Option<usize>>,
    pub metrics: Vec<IterationMetrics>,
    /// Trees fitted during training, discarded search candidates included.
    pub tree_fit_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub class: usize,
}

impl Ensemble {
    /// An untrained model: every prediction is uniform.
    pub fn empty(config: TrainConfig, n_classes: usize, n_features: usize) -> Self {
        Ensemble {
            config,
            n_classes,
            n_features,
            classes: (0..n_classes as i64).collect(),
            index_base: IndexBase::Zero,
            stages: Vec::new(),
            base_history: Vec::new(),
            metrics: Vec::new(),
            tree_fit_count: 0,
        }
    }

    pub fn n_iterations(&self) -> usize {
        self.stages.len()
    }

    fn stages_up_to(&self, up_to: Option<usize>) -> &[Stage] {
        &self.stages[..up_to.unwrap_or(self.stages.len()).min(self.stages.len())]
    }

    /// Scores after the first `up_to` stages (all when `None`).
    pub fn scores(&self, x: &[f64], up_to: Option<usize>) -> Result<Vec<f64>> {
        if x.len() < self.n_features {
            return Err(BoostError::Dimension { got: x.len(), expected: self.n_features });
        }
        let mut f = vec![0.0; self.n_classes];
        for stage in self.stages_up_to(up_to) {
            stage.apply(&mut f, |j| x[j], self.config.shrinkage);
        }
        Ok(f)
    }

    pub fn predict(&self, x: &[f64], up_to: Option<usize>) -> Result<Prediction> {
        let scores = self.scores(x, up_to)?;
        let mut probabilities = vec![0.0; self.n_classes];
        numerics::softmax_row(&scores, &mut probabilities);
        let class = argmax(&scores);
        Ok(Prediction { scores, probabilities, class })
    }

    /// Scores and probabilities for every row of `data`.
    pub fn score_dataset(&self, data: &Dataset, up_to: Option<usize>) -> Result<ScoreState> {
        if data.n_features < self.n_features {
            return Err(BoostError::Dimension { got: data.n_features, expected: self.n_features });
        }
        let k = self.n_classes;
        let stages = self.stages_up_to(up_to);
        let mut f = vec![0.0; data.n_samples * k];
        f.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
            for stage in stages {
                stage.apply(row, |j| data.columns[j][i], self.config.shrinkage);
            }
        });
        Ok(ScoreState::from_scores(k, f)?)
    }
}

/// Responses, weights and leaf-value inputs for one class's tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTargets {
    pub split: SplitTarget,
    /// Negative gradient per sample (leaf-value numerator).
    pub num: Vec<f64>,
    /// Second derivative per sample (leaf-value denominator).
    pub den: Vec<f64>,
    pub mode: LeafMode,
}

/// Targets for class `k`; `base` must be given exactly for abc algorithms.
pub fn class_targets(
    algorithm: Algorithm,
    state: &ScoreState,
    labels: &[u32],
    k: usize,
    base: Option<usize>,
) -> Result<ClassTargets> {
    let (g, den, mode) = match (algorithm.is_abc(), base) {
        (false, None) => {
            let (g, h) = numerics::plain_derivatives(state, labels, k);
            (g, h, LeafMode::Plain { n_classes: state.n_classes })
        }
        (true, Some(b)) => {
            let (g, h) = numerics::abc_derivatives(state, labels, k, b)?;
            (g, h, LeafMode::Abc)
        }
        _ => return Err(BoostError::Config(format!("{algorithm} called with base {base:?}"))),
    };
    let num: Vec<f64> = g.into_iter().map(|v| -v).collect();
    let split = if algorithm.weighted_split() {
        SplitTarget::weighted(num.clone(), den.clone())
    } else {
        SplitTarget::unit(num.clone())
    };
    Ok(ClassTargets { split, num, den, mode })
}

/// Grows a tree on `targets` and fills its leaves with Newton values.
pub fn fit_class_tree(
    targets: &ClassTargets,
    dataset: &Dataset,
    n_leaves: usize,
) -> Result<(RegressionTree, Vec<GrownLeaf>)> {
    let grown = tree::grow(&targets.split, dataset, n_leaves)?;
    Ok(grown.finalize(|samples| tree::leaf_value(&targets.num, &targets.den, samples, targets.mode)))
}

fn add_tree(f: &mut [f64], n_classes: usize, class: usize, tree: &RegressionTree, leaves: &[GrownLeaf], shrinkage: f64) {
    for leaf in leaves {
        let tree::Node::Leaf { value } = tree.nodes()[leaf.node] else { unreachable!() };
        let delta = shrinkage * value;
        for &i in &leaf.samples {
            f[i as usize * n_classes + class] += delta;
        }
    }
}

/// Outcome of trying one base class for one abc iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePass {
    pub base: usize,
    /// Scores and probabilities if this candidate were committed.
    pub state: ScoreState,
    pub loss: f64,
    /// The `K - 1` trees, ascending by class.
    pub trees: Vec<ClassTree>,
}

/// Fits the `K - 1` trees for base class `base` against the current state
/// and evaluates the training loss they would lead to. `state` is not
/// modified.
pub fn abc_candidate_pass(
    state: &ScoreState,
    dataset: &Dataset,
    base: usize,
    config: &TrainConfig,
) -> Result<CandidatePass> {
    let k = state.n_classes;
    if base >= k {
        return Err(BoostError::Config(format!("base class {base} out of range")));
    }
    let classes: Vec<usize> = (0..k).filter(|&c| c != base).collect();
    let fitted = classes
        .par_iter()
        .map(|&c| {
            let targets = class_targets(config.algorithm, state, &dataset.labels, c, Some(base))?;
            fit_class_tree(&targets, dataset, config.n_leaves).map(|(t, l)| (c, t, l))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut f = state.f.clone();
    for (c, tree, leaves) in &fitted {
        add_tree(&mut f, k, *c, tree, leaves, config.shrinkage);
    }
    for row in f.chunks_exact_mut(k) {
        rebalance_base(row, base);
    }
    let next = ScoreState::from_scores(k, f)?;
    let loss = next.neg_log_likelihood(&dataset.labels);
    let trees = fitted.into_iter().map(|(class, tree, _)| ClassTree { class, tree }).collect();
    Ok(CandidatePass { base, state: next, loss, trees })
}

fn plain_iteration(state: &mut ScoreState, dataset: &Dataset, config: &TrainConfig) -> Result<Stage> {
    let k = state.n_classes;
    let fitted = (0..k)
        .into_par_iter()
        .map(|c| {
            let targets = class_targets(config.algorithm, state, &dataset.labels, c, None)?;
            fit_class_tree(&targets, dataset, config.n_leaves)
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, (tree, leaves)) in fitted.iter().enumerate() {
        add_tree(&mut state.f, k, c, tree, leaves, config.shrinkage);
    }
    state.softmax_update()?;
    let trees = fitted.into_iter().enumerate().map(|(class, (tree, _))| ClassTree { class, tree }).collect();
    Ok(Stage { base: None, trees })
}

fn check_inputs(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>) -> Result<()> {
    config.validate()?;
    if train.n_samples == 0 {
        return Err(BoostError::Data("empty training set".into()));
    }
    if train.n_classes < crate::data::MIN_CLASSES {
        return Err(BoostError::Data(format!("{} classes; at least 3 required", train.n_classes)));
    }
    if let Some(missing) = train.class_counts().iter().position(|&c| c == 0) {
        return Err(BoostError::Data(format!("class {missing} has no training samples")));
    }
    if let Some(t) = test {
        if t.n_classes != train.n_classes {
            return Err(BoostError::Data(format!(
                "test set has {} classes, training set {}",
                t.n_classes, train.n_classes
            )));
        }
        if t.n_features < train.n_features {
            return Err(BoostError::Dimension { got: t.n_features, expected: train.n_features });
        }
    }
    Ok(())
}

/// Trains an ensemble; see [`train_with_observer`].
pub fn train(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>) -> Result<Ensemble> {
    train_with_observer(config, train, test, |_, _| {})
}

/// Trains an ensemble, calling `observe(m, state)` after every committed
/// iteration `m` with the training scores and probabilities.
pub fn train_with_observer(
    config: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    observe: impl FnMut(usize, &ScoreState) + Send,
) -> Result<Ensemble> {
    check_inputs(config, train, test)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| BoostError::ThreadPool(e.to_string()))?;
    pool.install(|| run(config, train, test, observe))
}

fn run(
    config: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    mut observe: impl FnMut(usize, &ScoreState),
) -> Result<Ensemble> {
    let k = train.n_classes;
    let mut ensemble = Ensemble::empty(config.clone(), k, train.n_features);
    ensemble.classes = train.classes.clone();
    ensemble.index_base = train.index_base;

    let mut state = ScoreState::new(train.n_samples, k);
    let mut test_scores = test.map(|t| vec![0.0; t.n_samples * k]);
    let mut base: Option<usize> = None;

    for m in 1..=config.n_iterations {
        let stage = if config.algorithm.is_abc() {
            let pass = match gap_schedule(m, config.gap) {
                BaseStep::Search => {
                    let passes = (0..k)
                        .into_par_iter()
                        .map(|b| abc_candidate_pass(&state, train, b, config))
                        .collect::<Result<Vec<_>>>()?;
                    let losses: Vec<f64> = passes.iter().map(|p| p.loss).collect();
                    let chosen = select_base(&losses)?;
                    ensemble.tree_fit_count += (k * (k - 1)) as u64;
                    passes.into_iter().nth(chosen).expect("one pass per class")
                }
                BaseStep::Reuse => {
                    let b = base.expect("the first iteration always searches");
                    ensemble.tree_fit_count += (k - 1) as u64;
                    abc_candidate_pass(&state, train, b, config)?
                }
            };
            base = Some(pass.base);
            state = pass.state;
            Stage { base, trees: pass.trees }
        } else {
            ensemble.tree_fit_count += k as u64;
            plain_iteration(&mut state, train, config)?
        };

        let train_loss = state.neg_log_likelihood(&train.labels);
        if !train_loss.is_finite() {
            return Err(BoostError::NonFiniteLoss { iteration: m });
        }
        let test_error = match (test, test_scores.as_mut()) {
            (Some(t), Some(f)) => Some(apply_and_count(&stage, t, f, k, config.shrinkage)),
            _ => None,
        };
        ensemble.base_history.push(stage.base);
        ensemble.metrics.push(IterationMetrics {
            iteration: m,
            train_loss,
            test_error,
            base_class: stage.base,
            trees_fit_cum: ensemble.tree_fit_count,
        });
        ensemble.stages.push(stage);
        observe(m, &state);

        if config.early_stop_loss.is_some_and(|t| train_loss <= t) {
            break;
        }
    }
    Ok(ensemble)
}

fn apply_and_count(stage: &Stage, data: &Dataset, f: &mut [f64], k: usize, shrinkage: f64) -> usize {
    f.par_chunks_mut(k)
        .enumerate()
        .map(|(i, row)| {
            stage.apply(row, |j| data.columns[j][i], shrinkage);
            usize::from(argmax(row) != data.labels[i] as usize)
        })
        .sum()
}
