//! Gradient-boosted regression trees for binary classification with the
//! logistic loss.
//!
//! Trees are grown level by level with exact greedy split search over
//! presorted feature columns. For a node with gradient sum `G` and hessian
//! sum `H` the split gain is
//!
//! ```text
//! gain = 1/2 * ( GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda) )
//! ```
//!
//! and a leaf stores `-eta * G/(H+lambda)`. Missing values (the configured
//! sentinel or NaN) are sent to whichever side gives the larger gain, and
//! that default direction is stored in the split.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod roc;

pub use roc::{roc_auc, RocCurve};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GbtError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("labels must be 0 or 1, got {0}")]
    BadLabel(u8),
    #[error("both classes are required")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model document: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub max_depth: usize,
    pub rounds_per_fit: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub lambda_l2: f64,
    pub base_score: f64,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
    pub missing_value: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            max_depth: 20,
            rounds_per_fit: 10,
            learning_rate: 0.3,
            min_samples_leaf: 2,
            lambda_l2: 1.0,
            base_score: 0.5,
            min_child_weight: 1.0,
            missing_value: -1.0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<(), GbtError> {
        let bad = |m: &str| Err(GbtError::InvalidConfig(m.to_string()));
        if self.max_depth == 0 || self.rounds_per_fit == 0 {
            return bad("max_depth and rounds_per_fit must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return bad("base_score must lie in (0, 1)");
        }
        if self.lambda_l2 < 0.0 || self.min_child_weight < 0.0 || self.min_samples_leaf == 0 {
            return bad("lambda_l2 and min_child_weight must be >= 0, min_samples_leaf >= 1");
        }
        Ok(())
    }

    fn is_missing(&self, v: f64) -> bool {
        v.is_nan() || v == self.missing_value
    }
}

pub fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Logistic loss of one example at raw margin `m`.
pub fn log_loss(m: f64, y: u8) -> f64 {
    let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
    softplus - f64::from(y) * m
}

/// First and second derivative of [`log_loss`] with respect to the margin.
pub fn logistic_grad_hess(m: f64, y: u8) -> (f64, f64) {
    let p = sigmoid(m);
    (p - f64::from(y), p * (1.0 - p))
}

/// Row-major feature matrix with binary labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    width: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(width: usize) -> Self {
        Dataset { width, values: Vec::new(), labels: Vec::new() }
    }

    pub fn from_rows<R: AsRef<[f64]>>(width: usize, rows: &[R], labels: &[u8]) -> Result<Self, GbtError> {
        if rows.len() != labels.len() {
            return Err(GbtError::LengthMismatch { scores: rows.len(), labels: labels.len() });
        }
        let mut ds = Dataset::new(width);
        for (r, y) in rows.iter().zip(labels) {
            ds.push(r.as_ref(), *y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, row: &[f64], label: u8) -> Result<(), GbtError> {
        if row.len() != self.width {
            return Err(GbtError::WidthMismatch { expected: self.width, got: row.len() });
        }
        if label > 1 {
            return Err(GbtError::BadLabel(label));
        }
        self.values.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|y| **y == 1).count()
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.width + feature]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Present values strictly below go left.
        threshold: f64,
        missing_left: bool,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn leaf_index(&self, row: &[f64], missing: f64) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, missing_left, left, right } => {
                    let v = row[*feature];
                    let go_left = if v.is_nan() || v == missing { *missing_left } else { v < *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64], missing: f64) -> f64 {
        match self.nodes[self.leaf_index(row, missing)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn scale(&mut self, s: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= s;
            }
        }
    }
}

/// Additive ensemble: `sigmoid(base_margin + sum of tree outputs)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    width: usize,
    base_margin: f64,
    missing_value: f64,
    trees: Vec<Tree>,
}

const MARGIN_CLAMP: f64 = 30.0;
const FORMAT: &str = "tiersim-gbt";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    config: GbtConfig,
    model: GbtModel,
}

impl GbtModel {
    pub fn empty(width: usize, cfg: &GbtConfig) -> Self {
        GbtModel { width, base_margin: logit(cfg.base_score), missing_value: cfg.missing_value, trees: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn base_margin(&self) -> f64 {
        self.base_margin
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    fn check(&self, row: &[f64]) -> Result<(), GbtError> {
        if row.len() != self.width {
            return Err(GbtError::WidthMismatch { expected: self.width, got: row.len() });
        }
        Ok(())
    }

    pub fn predict_margin(&self, row: &[f64]) -> Result<f64, GbtError> {
        self.check(row)?;
        Ok(self.margin_unchecked(row, 0))
    }

    fn margin_unchecked(&self, row: &[f64], from_tree: usize) -> f64 {
        let base = if from_tree == 0 { self.base_margin } else { 0.0 };
        base + self.trees[from_tree..].iter().map(|t| t.predict(row, self.missing_value)).sum::<f64>()
    }

    /// Probability of the positive class, strictly inside (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, GbtError> {
        Ok(sigmoid(self.predict_margin(row)?.clamp(-MARGIN_CLAMP, MARGIN_CLAMP)))
    }

    pub fn to_json(&self, cfg: &GbtConfig) -> Result<String, GbtError> {
        let doc = ModelDocument { format: FORMAT.into(), version: FORMAT_VERSION, config: *cfg, model: self.clone() };
        serde_json::to_string(&doc).map_err(|e| GbtError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<(GbtModel, GbtConfig), GbtError> {
        let doc: ModelDocument = serde_json::from_str(s).map_err(|e| GbtError::Format(e.to_string()))?;
        if doc.format != FORMAT || doc.version != FORMAT_VERSION {
            return Err(GbtError::Format(format!("unsupported document {} v{}", doc.format, doc.version)));
        }
        Ok((doc.model, doc.config))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn minus(self, o: Stats) -> Stats {
        Stats { g: self.g - o.g, h: self.h - o.h, n: self.n - o.n }
    }

    fn plus(self, o: Stats) -> Stats {
        Stats { g: self.g + o.g, h: self.h + o.h, n: self.n + o.n }
    }

    fn score(self, lambda: f64) -> f64 {
        self.g * self.g / (self.h + lambda)
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    missing_left: bool,
    left: Stats,
    right: Stats,
}

/// Per-feature row orders shared by every tree of one boosting call.
struct Presorted {
    present: Vec<Vec<u32>>,
    missing: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(ds: &Dataset, cfg: &GbtConfig) -> Self {
        let n = ds.len();
        let mut present = Vec::with_capacity(ds.width);
        let mut missing = Vec::with_capacity(ds.width);
        for f in 0..ds.width {
            let (mut p, m): (Vec<u32>, Vec<u32>) = (0..n as u32).partition(|r| !cfg.is_missing(ds.value(*r as usize, f)));
            p.sort_by(|a, b| ds.value(*a as usize, f).total_cmp(&ds.value(*b as usize, f)));
            present.push(p);
            missing.push(m);
        }
        Presorted { present, missing }
    }
}

struct TreeBuilder<'a> {
    ds: &'a Dataset,
    sorted: &'a Presorted,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbtConfig,
}

impl TreeBuilder<'_> {
    fn consider(&self, best: &mut Option<Candidate>, total: Stats, left: Stats, feature: usize, threshold: f64, missing_left: bool) {
        let right = total.minus(left);
        let cfg = self.cfg;
        if left.n < cfg.min_samples_leaf || right.n < cfg.min_samples_leaf {
            return;
        }
        if left.h < cfg.min_child_weight || right.h < cfg.min_child_weight {
            return;
        }
        let lambda = cfg.lambda_l2;
        let gain = 0.5 * (left.score(lambda) + right.score(lambda) - total.score(lambda));
        if gain >= -1e-12 && best.is_none_or(|b| gain > b.gain) {
            *best = Some(Candidate { gain, feature, threshold, missing_left, left, right });
        }
    }

    /// Grows one tree; returns it with the leaf node reached by every row.
    fn build(&self) -> (Tree, Vec<u32>) {
        let n = self.ds.len();
        let cfg = self.cfg;
        let mut root = Stats::default();
        for r in 0..n {
            root.add(self.grad[r], self.hess[r]);
        }
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stats = vec![root];
        let mut node_of = vec![0u32; n];
        let mut frontier = vec![0usize];

        for _depth in 0..cfg.max_depth {
            let active: Vec<usize> = frontier
                .iter()
                .copied()
                .filter(|&i| stats[i].n >= 2 * cfg.min_samples_leaf && stats[i].h >= 2.0 * cfg.min_child_weight)
                .collect();
            if active.is_empty() {
                break;
            }
            let mut slot = vec![usize::MAX; nodes.len()];
            for (s, &i) in active.iter().enumerate() {
                slot[i] = s;
            }
            let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
            let mut miss = vec![Stats::default(); active.len()];
            let mut seen = vec![Stats::default(); active.len()];
            let mut last = vec![f64::NAN; active.len()];

            for f in 0..self.ds.width {
                miss.iter_mut().for_each(|m| *m = Stats::default());
                seen.iter_mut().for_each(|m| *m = Stats::default());
                last.iter_mut().for_each(|v| *v = f64::NAN);
                for &r in &self.sorted.missing[f] {
                    let s = slot[node_of[r as usize] as usize];
                    if s != usize::MAX {
                        miss[s].add(self.grad[r as usize], self.hess[r as usize]);
                    }
                }
                for &r in &self.sorted.present[f] {
                    let r = r as usize;
                    let s = slot[node_of[r] as usize];
                    if s == usize::MAX {
                        continue;
                    }
                    let v = self.ds.value(r, f);
                    if seen[s].n > 0 && v > last[s] {
                        let mid = 0.5 * (last[s] + v);
                        let thr = if mid > last[s] { mid } else { v };
                        let total = stats[active[s]];
                        self.consider(&mut best[s], total, seen[s], f, thr, false);
                        if miss[s].n > 0 {
                            self.consider(&mut best[s], total, seen[s].plus(miss[s]), f, thr, true);
                        }
                    }
                    seen[s].add(self.grad[r], self.hess[r]);
                    last[s] = v;
                }
                for s in 0..active.len() {
                    if miss[s].n > 0 && seen[s].n > 0 {
                        let total = stats[active[s]];
                        self.consider(&mut best[s], total, seen[s], f, f64::MAX, false);
                        self.consider(&mut best[s], total, miss[s], f, f64::MIN, true);
                    }
                }
            }

            let mut next = Vec::new();
            let mut was_split = vec![false; nodes.len()];
            for (s, cand) in best.into_iter().enumerate() {
                let Some(c) = cand else { continue };
                let id = active[s];
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                stats.push(c.left);
                stats.push(c.right);
                nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    missing_left: c.missing_left,
                    left,
                    right: left + 1,
                };
                was_split[id] = true;
                next.push(left);
                next.push(left + 1);
            }
            if next.is_empty() {
                break;
            }
            for (r, nid) in node_of.iter_mut().enumerate() {
                let id = *nid as usize;
                if !was_split[id] {
                    continue;
                }
                if let Node::Split { feature, threshold, missing_left, left, right } = &nodes[id] {
                    let v = self.ds.value(r, *feature);
                    let go_left = if cfg.is_missing(v) { *missing_left } else { v < *threshold };
                    *nid = if go_left { *left as u32 } else { *right as u32 };
                }
            }
            frontier = next;
        }

        for (i, node) in nodes.iter_mut().enumerate() {
            if let Node::Leaf { value } = node {
                *value = -cfg.learning_rate * stats[i].g / (stats[i].h + cfg.lambda_l2);
            }
        }
        (Tree { nodes }, node_of)
    }
}

fn total_loss(margins: &[f64], labels: &[u8]) -> f64 {
    margins.iter().zip(labels).map(|(m, y)| log_loss(*m, *y)).sum()
}

/// Boosts `rounds` trees starting from `margins`, which are updated in place.
/// Each tree's step is halved until the training loss does not increase.
/// Returns the new trees and the loss after each round.
fn boost_rounds(ds: &Dataset, margins: &mut [f64], cfg: &GbtConfig, rounds: usize) -> (Vec<Tree>, Vec<f64>) {
    let sorted = Presorted::new(ds, cfg);
    let n = ds.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(rounds);
    let mut losses = Vec::with_capacity(rounds);
    let mut trial = vec![0.0; n];
    for _ in 0..rounds {
        for i in 0..n {
            let (g, h) = logistic_grad_hess(margins[i], ds.labels[i]);
            grad[i] = g;
            hess[i] = h;
        }
        let before = total_loss(margins, &ds.labels);
        let (mut tree, leaf_of) = TreeBuilder { ds, sorted: &sorted, grad: &grad, hess: &hess, cfg }.build();
        let out: Vec<f64> = leaf_of
            .iter()
            .map(|&l| match tree.nodes[l as usize] {
                Node::Leaf { value } => value,
                Node::Split { .. } => 0.0,
            })
            .collect();
        let mut scale = 1.0;
        let mut after;
        loop {
            for i in 0..n {
                trial[i] = margins[i] + scale * out[i];
            }
            after = total_loss(&trial, &ds.labels);
            if after <= before || scale < 1e-6 {
                break;
            }
            scale *= 0.5;
        }
        if after > before {
            scale = 0.0;
            after = before;
        }
        if scale != 1.0 {
            tree.scale(scale);
        }
        for i in 0..n {
            margins[i] += scale * out[i];
        }
        trees.push(tree);
        losses.push(after);
    }
    (trees, losses)
}

fn check_dataset(ds: &Dataset, width: usize) -> Result<(), GbtError> {
    if ds.is_empty() {
        return Err(GbtError::EmptyDataset);
    }
    if ds.width != width {
        return Err(GbtError::WidthMismatch { expected: width, got: ds.width });
    }
    Ok(())
}

/// Trains `rounds_per_fit` trees from the base score.
pub fn fit(ds: &Dataset, cfg: &GbtConfig) -> Result<GbtModel, GbtError> {
    fit_with_losses(ds, cfg).map(|(m, _)| m)
}

/// [`fit`], also returning the training loss before the first round and
/// after every round.
pub fn fit_with_losses(ds: &Dataset, cfg: &GbtConfig) -> Result<(GbtModel, Vec<f64>), GbtError> {
    cfg.validate()?;
    check_dataset(ds, ds.width)?;
    let mut model = GbtModel::empty(ds.width, cfg);
    let mut margins = vec![model.base_margin; ds.len()];
    let initial = total_loss(&margins, &ds.labels);
    let (trees, losses) = boost_rounds(ds, &mut margins, cfg, cfg.rounds_per_fit);
    model.trees = trees;
    Ok((model, std::iter::once(initial).chain(losses).collect()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn error_rate(&self) -> f64 {
        1.0 - self.accuracy()
    }
}

/// Classifies with `p > threshold` as positive.
pub fn evaluate(model: &GbtModel, ds: &Dataset, threshold: f64) -> Result<Confusion, GbtError> {
    check_dataset(ds, model.width)?;
    let mut c = Confusion::default();
    for i in 0..ds.len() {
        let positive = model.predict_proba(ds.row(i))? > threshold;
        match (positive, ds.labels[i] == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn predict_all(model: &GbtModel, ds: &Dataset) -> Result<Vec<f64>, GbtError> {
    if ds.width != model.width {
        return Err(GbtError::WidthMismatch { expected: model.width, got: ds.width });
    }
    (0..ds.len()).map(|i| model.predict_proba(ds.row(i))).collect()
}

/// Bounded FIFO of every training point seen so far, with each point's
/// margin under the first `trees_applied` trees of the model it serves.
#[derive(Clone, Debug)]
pub struct CumulativeStore {
    capacity: usize,
    width: usize,
    rows: VecDeque<Vec<f64>>,
    labels: VecDeque<u8>,
    margins: VecDeque<f64>,
    trees_applied: usize,
}

impl CumulativeStore {
    pub fn new(width: usize, capacity: usize) -> Self {
        CumulativeStore {
            capacity: capacity.max(1),
            width,
            rows: VecDeque::new(),
            labels: VecDeque::new(),
            margins: VecDeque::new(),
            trees_applied: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dataset(&self) -> Dataset {
        let mut ds = Dataset::new(self.width);
        for (r, y) in self.rows.iter().zip(&self.labels) {
            ds.values.extend_from_slice(r);
            ds.labels.push(*y);
        }
        ds
    }

    fn sync(&mut self, model: &GbtModel) {
        let applied = self.trees_applied;
        if applied == model.trees.len() {
            return;
        }
        for (m, r) in self.margins.iter_mut().zip(&self.rows) {
            *m = if applied < model.trees.len() && applied > 0 {
                *m + model.margin_unchecked(r, applied)
            } else {
                model.margin_unchecked(r, 0)
            };
        }
        self.trees_applied = model.trees.len();
    }

    fn push(&mut self, row: Vec<f64>, label: u8, margin: f64) {
        if self.labels.len() == self.capacity {
            self.rows.pop_front();
            self.labels.pop_front();
            self.margins.pop_front();
        }
        self.rows.push_back(row);
        self.labels.push_back(label);
        self.margins.push_back(margin);
    }
}

/// Appends `new_points` to the store (evicting the oldest beyond capacity)
/// and boosts `rounds_per_fit` more trees against the whole store, starting
/// from the model's current predictions. Existing trees are left alone.
/// Returns the number of trees added.
pub fn boost_incremental(
    model: &mut GbtModel,
    new_points: &Dataset,
    store: &mut CumulativeStore,
    cfg: &GbtConfig,
) -> Result<usize, GbtError> {
    if new_points.is_empty() {
        return Ok(0);
    }
    cfg.validate()?;
    if new_points.width != model.width || store.width != model.width {
        return Err(GbtError::WidthMismatch { expected: model.width, got: new_points.width });
    }
    store.sync(model);
    for i in 0..new_points.len() {
        let row = new_points.row(i).to_vec();
        let m = model.margin_unchecked(&row, 0);
        store.push(row, new_points.labels[i], m);
    }
    let ds = store.dataset();
    let mut margins: Vec<f64> = store.margins.iter().copied().collect();
    let (trees, _) = boost_rounds(&ds, &mut margins, cfg, cfg.rounds_per_fit);
    let added = trees.len();
    model.trees.extend(trees);
    for (slot, m) in store.margins.iter_mut().zip(margins) {
        *slot = m;
    }
    store.trees_applied = model.trees.len();
    Ok(added)
}

/// A model plus its cumulative store, boosted every `boost_every` points.
#[derive(Clone, Debug)]
pub struct IncrementalLearner {
    cfg: GbtConfig,
    model: GbtModel,
    store: CumulativeStore,
    pending: Dataset,
    boost_every: usize,
    boosts: usize,
}

impl IncrementalLearner {
    pub fn new(width: usize, cfg: GbtConfig, store_capacity: usize, boost_every: usize) -> Self {
        IncrementalLearner {
            cfg,
            model: GbtModel::empty(width, &cfg),
            store: CumulativeStore::new(width, store_capacity),
            pending: Dataset::new(width),
            boost_every: boost_every.max(1),
            boosts: 0,
        }
    }

    pub fn model(&self) -> &GbtModel {
        &self.model
    }

    pub fn config(&self) -> &GbtConfig {
        &self.cfg
    }

    pub fn store(&self) -> &CumulativeStore {
        &self.store
    }

    pub fn boosts(&self) -> usize {
        self.boosts
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Queues a point; boosts when enough are pending. Returns whether a
    /// boost happened.
    pub fn add(&mut self, row: &[f64], label: u8) -> Result<bool, GbtError> {
        self.pending.push(row, label)?;
        if self.pending.len() >= self.boost_every {
            self.flush()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Boosts on whatever is pending.
    pub fn flush(&mut self) -> Result<(), GbtError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let batch = std::mem::replace(&mut self.pending, Dataset::new(self.model.width));
        boost_incremental(&mut self.model, &batch, &mut self.store, &self.cfg)?;
        self.boosts += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xor() -> Dataset {
        Dataset::from_rows(2, &[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], &[0, 1, 1, 0]).unwrap()
    }

    fn small_cfg() -> GbtConfig {
        GbtConfig { max_depth: 2, min_samples_leaf: 1, min_child_weight: 0.0, ..GbtConfig::default() }
    }

    #[test]
    fn empty_model_predicts_base_score() {
        let m = GbtModel::empty(3, &GbtConfig::default());
        assert_eq!(m.predict_proba(&[0.1, 0.2, 0.3]).unwrap(), 0.5);
        assert_eq!(m.predict_proba(&[0.1]), Err(GbtError::WidthMismatch { expected: 3, got: 1 }));
    }

    #[test]
    fn xor_is_learned_exactly() {
        let ds = xor();
        let model = fit(&ds, &small_cfg()).unwrap();
        assert_eq!(evaluate(&model, &ds, 0.5).unwrap().accuracy(), 1.0);
        assert!(model.predict_proba(&[0.0, 1.0]).unwrap() > 0.5);
        assert!(model.trees().iter().all(|t| t.depth() <= 20));
    }

    #[test]
    fn all_positive_dataset() {
        let ds = Dataset::from_rows(1, &[[0.1], [0.2], [0.3], [0.4]], &[1, 1, 1, 1]).unwrap();
        let model = fit(&ds, &GbtConfig::default()).unwrap();
        for i in 0..ds.len() {
            assert!(model.predict_proba(ds.row(i)).unwrap() > 0.5);
        }
    }

    #[test]
    fn constant_half_is_negative() {
        let ds = Dataset::from_rows(1, &[[0.1], [0.2]], &[1, 0]).unwrap();
        let m = GbtModel::empty(1, &GbtConfig::default());
        let c = evaluate(&m, &ds, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (0, 0, 1, 1));
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn errors() {
        assert_eq!(fit(&Dataset::new(2), &GbtConfig::default()).unwrap_err(), GbtError::EmptyDataset);
        let mut ds = Dataset::new(2);
        assert!(matches!(ds.push(&[1.0], 0), Err(GbtError::WidthMismatch { .. })));
        assert_eq!(ds.push(&[1.0, 2.0], 2), Err(GbtError::BadLabel(2)));
    }

    #[test]
    fn missing_values_follow_learned_direction() {
        let rows = [[-1.0], [-1.0], [-1.0], [0.2], [0.3], [0.8], [0.9], [-1.0]];
        let labels = [1, 1, 1, 0, 0, 0, 0, 1];
        let ds = Dataset::from_rows(1, &rows, &labels).unwrap();
        let model = fit(&ds, &small_cfg()).unwrap();
        assert_eq!(evaluate(&model, &ds, 0.5).unwrap().accuracy(), 1.0);
        assert!(model.predict_proba(&[f64::NAN]).unwrap() > 0.5);
    }

    #[test]
    fn json_round_trip() {
        let cfg = small_cfg();
        let model = fit(&xor(), &cfg).unwrap();
        let text = model.to_json(&cfg).unwrap();
        let (back, back_cfg) = GbtModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_cfg, cfg);
        assert!(GbtModel::from_json("{\"format\":\"x\"}").is_err());
    }

    fn shifted(seed: u64, n: usize, flip: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = Dataset::new(2);
        for _ in 0..n {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let y = (a < 0.5) ^ flip;
            ds.push(&[a, b], u8::from(y)).unwrap();
        }
        ds
    }

    #[test]
    fn incremental_adapts_to_shift() {
        let cfg = GbtConfig::default();
        let phase1 = shifted(1, 600, false);
        let phase2 = shifted(2, 600, true);
        let test2 = shifted(3, 400, true);

        let mut model = GbtModel::empty(2, &cfg);
        let mut store = CumulativeStore::new(2, 100_000);
        boost_incremental(&mut model, &phase1, &mut store, &cfg).unwrap();
        let frozen = model.clone();
        let kept: Vec<Tree> = model.trees().to_vec();
        for _ in 0..4 {
            boost_incremental(&mut model, &phase2, &mut store, &cfg).unwrap();
        }
        assert_eq!(&model.trees()[..kept.len()], kept.as_slice());
        let acc_frozen = evaluate(&frozen, &test2, 0.5).unwrap().accuracy();
        let acc_inc = evaluate(&model, &test2, 0.5).unwrap().accuracy();
        assert!(acc_inc > acc_frozen, "{acc_inc} vs {acc_frozen}");
    }

    #[test]
    fn empty_increment_is_noop() {
        let cfg = GbtConfig::default();
        let mut model = fit(&xor(), &small_cfg()).unwrap();
        let before = model.clone();
        let mut store = CumulativeStore::new(2, 10);
        assert_eq!(boost_incremental(&mut model, &Dataset::new(2), &mut store, &cfg).unwrap(), 0);
        assert_eq!(model, before);
    }

    #[test]
    fn store_evicts_oldest() {
        let cfg = GbtConfig::default();
        let mut model = GbtModel::empty(1, &cfg);
        let mut store = CumulativeStore::new(1, 3);
        let ds = Dataset::from_rows(1, &[[0.1], [0.2], [0.3], [0.4], [0.5]], &[0, 1, 0, 1, 0]).unwrap();
        boost_incremental(&mut model, &ds, &mut store, &cfg).unwrap();
        assert_eq!(store.len(), 3);
        let kept = store.dataset();
        assert_eq!(kept.row(0), &[0.3]);
        assert_eq!(kept.labels(), &[0, 1, 0]);
    }

    #[test]
    fn store_margins_track_model() {
        let cfg = GbtConfig::default();
        let mut learner = IncrementalLearner::new(2, cfg, 1000, 100);
        let ds = shifted(9, 350, false);
        for i in 0..ds.len() {
            learner.add(ds.row(i), ds.label(i)).unwrap();
        }
        assert_eq!(learner.boosts(), 3);
        assert_eq!(learner.pending(), 50);
        let store = learner.store();
        for (r, m) in store.rows.iter().zip(&store.margins) {
            let direct = learner.model().predict_margin(r).unwrap();
            assert!((direct - m).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn grad_hess_match_finite_differences(m in -8.0..8.0f64, y in 0u8..2) {
            let e = 1e-4;
            let (g, h) = logistic_grad_hess(m, y);
            let fd_g = (log_loss(m + e, y) - log_loss(m - e, y)) / (2.0 * e);
            let fd_h = (log_loss(m + e, y) - 2.0 * log_loss(m, y) + log_loss(m - e, y)) / (e * e);
            prop_assert!((g - fd_g).abs() < 1e-5);
            prop_assert!((h - fd_h).abs() < 1e-5);
        }

        #[test]
        fn fit_loss_never_increases(seed in 0u64..1000, n in 4usize..80) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ds = Dataset::new(3);
            for _ in 0..n {
                let row: Vec<f64> = (0..3).map(|_| if rng.random_bool(0.2) { -1.0 } else { rng.random() }).collect();
                ds.push(&row, u8::from(rng.random_bool(0.4))).unwrap();
            }
            let (model, losses) = fit_with_losses(&ds, &GbtConfig::default()).unwrap();
            prop_assert_eq!(model.tree_count(), 10);
            for w in losses.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            for i in 0..ds.len() {
                let p = model.predict_proba(ds.row(i)).unwrap();
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }

        #[test]
        fn fit_is_deterministic(seed in 0u64..100) {
            let ds = shifted(seed, 60, false);
            let a = fit(&ds, &GbtConfig::default()).unwrap();
            let b = fit(&ds, &GbtConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
