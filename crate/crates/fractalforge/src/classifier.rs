//! From-scratch random forest over feature vectors: class-weighted Gini
//! training, bagged probability estimates, permutation importance, and a
//! versioned JSON model format.
//!
//! The forest is deliberately small and transparent — axis-aligned threshold
//! splits, hard per-tree votes, and a probability that is just the fraction of
//! trees voting Good — because it backs a filter whose behavior must be easy
//! to reason about and to reproduce bit-for-bit.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureVector, Label, FEATURE_COLUMNS};

/// Bump when the serialized layout changes; loads check it.
pub const MODEL_VERSION: u32 = 1;

/// Forest hyperparameters. The defaults are conventional: 100 trees grown to
/// purity, one sample per leaf, √d features inspected per split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure (or unsplittable).
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features inspected per split; `None` means floor(√d).
    pub features_per_split: Option<usize>,
    /// Weight classes inversely to their frequency (weighted Gini and
    /// weighted leaf votes). Turn off to reproduce an unweighted fit.
    pub balance_classes: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            balance_classes: true,
        }
    }
}

/// One decision tree as parallel node arrays (index 0 is the root).
///
/// `feature[i] >= 0` marks an internal node: descend left when
/// `x[feature[i]] <= threshold[i]`, right otherwise. `feature[i] == -1` marks
/// a leaf whose class is `vote_good[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<i32>,
    pub right: Vec<i32>,
    pub vote_good: Vec<bool>,
}

impl Tree {
    fn leaf(vote_good: bool) -> Self {
        Tree {
            feature: vec![-1],
            threshold: vec![0.0],
            left: vec![-1],
            right: vec![-1],
            vote_good: vec![vote_good],
        }
    }

    fn predict_good(&self, row: &[f64]) -> bool {
        let mut i = 0usize;
        while self.feature[i] >= 0 {
            let f = self.feature[i] as usize;
            i = if row[f] <= self.threshold[i] {
                self.left[i] as usize
            } else {
                self.right[i] as usize
            };
        }
        self.vote_good[i]
    }

    fn validate(&self, n_features: usize) -> std::result::Result<(), String> {
        let n = self.feature.len();
        if n == 0 {
            return Err("empty tree".into());
        }
        if [
            self.threshold.len(),
            self.left.len(),
            self.right.len(),
            self.vote_good.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err("node arrays disagree in length".into());
        }
        for i in 0..n {
            let f = self.feature[i];
            if f < -1 || f as i64 >= n_features as i64 {
                return Err(format!("node {i} references feature {f}"));
            }
            if f >= 0 {
                if !self.threshold[i].is_finite() {
                    return Err(format!("node {i} has non-finite threshold"));
                }
                for child in [self.left[i], self.right[i]] {
                    if child < 0 || child as usize >= n {
                        return Err(format!("node {i} has child index {child}"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub good: f64,
    pub bad: f64,
}

/// A trained forest plus everything needed to apply it safely later: the
/// feature schema it was fitted on (with a hash so a tampered or stale file
/// fails loudly), the class weights used, and the training configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub config: ForestConfig,
    pub schema: Vec<String>,
    pub schema_hash: String,
    pub class_weights: ClassWeights,
    pub trees: Vec<Tree>,
}

pub fn schema_hash(schema: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(schema.join("\n").as_bytes());
    format!("{:x}", h.finalize())
}

impl ForestModel {
    /// A forest of single-leaf trees with fixed votes. Exists for boundary
    /// tests and for documenting the probability semantics: the model returns
    /// exactly `votes.count(true) / votes.len()` for every input.
    pub fn from_leaf_votes(schema: &[&str], votes: &[bool]) -> Result<Self> {
        if votes.is_empty() {
            return Err(Error::InvalidInput("at least one vote required".into()));
        }
        let schema: Vec<String> = schema.iter().map(|s| s.to_string()).collect();
        Ok(ForestModel {
            version: MODEL_VERSION,
            config: ForestConfig {
                n_trees: votes.len(),
                ..ForestConfig::default()
            },
            schema_hash: schema_hash(&schema),
            schema,
            class_weights: ClassWeights {
                good: 1.0,
                bad: 1.0,
            },
            trees: votes.iter().map(|&v| Tree::leaf(v)).collect(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// Probability of Good for a raw row in schema order: the fraction of
    /// trees whose leaf votes Good.
    pub fn predict_proba_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.schema.len()
            )));
        }
        let good = self.trees.iter().filter(|t| t.predict_good(row)).count();
        Ok(good as f64 / self.trees.len() as f64)
    }

    /// Probability of Good for an extracted feature vector. The model's
    /// schema columns are looked up by name, so a model trained on a pruned
    /// column subset still applies.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        let full = x.numeric_row();
        let mut row = Vec::with_capacity(self.schema.len());
        for name in &self.schema {
            let idx = FEATURE_COLUMNS
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| {
                    Error::SchemaMismatch(format!("model schema column {name:?} is not a known feature"))
                })?;
            row.push(full[idx]);
        }
        self.predict_proba_row(&row)
    }

    /// Hard label at the 0.5 threshold (strictly greater than → Good).
    pub fn predict_row(&self, row: &[f64]) -> Result<Label> {
        Ok(if self.predict_proba_row(row)? > 0.5 {
            Label::Good
        } else {
            Label::Bad
        })
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Label> {
        Ok(if self.predict_proba(x)? > 0.5 {
            Label::Good
        } else {
            Label::Bad
        })
    }

    fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "model version {} unsupported (expected {MODEL_VERSION})",
                self.version
            )));
        }
        if self.schema.is_empty() || self.trees.is_empty() {
            return Err(Error::Model("empty schema or forest".into()));
        }
        if self.schema_hash != schema_hash(&self.schema) {
            return Err(Error::Model("schema hash does not match schema".into()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(self.schema.len())
                .map_err(|e| Error::Model(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path, e.to_string()))?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ForestModel =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// Train a forest on a labeled matrix.
///
/// Per-tree seeds are drawn from `rng` up front (one `u64` per tree, in tree
/// order), then trees are grown independently — so the result is identical
/// whether the growing itself runs serially or in parallel. Within a tree the
/// draw order is: bootstrap indices (n draws), then feature-subset draws at
/// each node in depth-first order (left subtree before right).
pub fn train(m: &FeatureMatrix, config: &ForestConfig, rng: &mut impl Rng) -> Result<ForestModel> {
    let labels = m
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("training requires a labeled matrix".into()))?;
    let n = m.n_rows();
    let d = m.n_cols();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "training requires at least 2 rows, got {n}"
        )));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
    }
    if config.min_samples_leaf == 0 {
        return Err(Error::InvalidConfig("min_samples_leaf must be at least 1".into()));
    }
    if let Some(k) = config.features_per_split {
        if k == 0 || k > d {
            return Err(Error::InvalidConfig(format!(
                "features_per_split {k} out of range 1..={d}"
            )));
        }
    }
    for (i, row) in m.rows.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("row {i} has non-finite values")));
        }
    }
    let n_good = labels.iter().filter(|&&l| l == Label::Good).count();
    let n_bad = n - n_good;
    if n_good == 0 || n_bad == 0 {
        return Err(Error::InvalidInput(
            "training data must contain both classes".into(),
        ));
    }
    let weights = if config.balance_classes {
        ClassWeights {
            good: n as f64 / (2.0 * n_good as f64),
            bad: n as f64 / (2.0 * n_bad as f64),
        }
    } else {
        ClassWeights {
            good: 1.0,
            bad: 1.0,
        }
    };
    let features_per_split = config
        .features_per_split
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));

    let seeds: Vec<u64> = (0..config.n_trees).map(|_| rng.next_u64()).collect();
    let grower = TreeGrower {
        rows: &m.rows,
        labels,
        weights,
        min_samples_leaf: config.min_samples_leaf,
        max_depth: config.max_depth,
        features_per_split,
        d,
    };
    let trees: Vec<Tree> = seeds
        .par_iter()
        .map(|&s| grower.grow_tree(ChaCha8Rng::seed_from_u64(s)))
        .collect();

    let schema = m.columns.clone();
    Ok(ForestModel {
        version: MODEL_VERSION,
        config: config.clone(),
        schema_hash: schema_hash(&schema),
        schema,
        class_weights: weights,
        trees,
    })
}

struct TreeGrower<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [Label],
    weights: ClassWeights,
    min_samples_leaf: usize,
    max_depth: Option<usize>,
    features_per_split: usize,
    d: usize,
}

impl TreeGrower<'_> {
    fn grow_tree(&self, mut rng: ChaCha8Rng) -> Tree {
        let n = self.rows.len();
        let mut indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut tree = Tree {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            vote_good: Vec::new(),
        };
        self.grow_node(&mut tree, &mut indices, 0, &mut rng);
        tree
    }

    fn weight(&self, label: Label) -> f64 {
        match label {
            Label::Good => self.weights.good,
            Label::Bad => self.weights.bad,
        }
    }

    /// Grow the node covering `indices`, append it (and its subtree) to the
    /// arrays, and return its index.
    fn grow_node(
        &self,
        tree: &mut Tree,
        indices: &mut [usize],
        depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> i32 {
        let mut w_good = 0.0;
        let mut w_bad = 0.0;
        for &i in indices.iter() {
            match self.labels[i] {
                Label::Good => w_good += self.weights.good,
                Label::Bad => w_bad += self.weights.bad,
            }
        }
        let vote_good = w_good > w_bad;

        let depth_capped = self.max_depth.is_some_and(|m| depth >= m);
        let pure = w_good == 0.0 || w_bad == 0.0;
        let too_small = indices.len() < 2 * self.min_samples_leaf;
        let split = if depth_capped || pure || too_small {
            None
        } else {
            self.best_split(indices, rng)
        };

        let Some((feature, threshold)) = split else {
            return push_leaf(tree, vote_good);
        };

        let node = push_internal(tree, feature, threshold);
        let mid = partition(indices, |i| self.rows[i][feature as usize] <= threshold);
        let (left_idx, right_idx) = indices.split_at_mut(mid);
        let l = self.grow_node(tree, left_idx, depth + 1, rng);
        let r = self.grow_node(tree, right_idx, depth + 1, rng);
        tree.left[node as usize] = l;
        tree.right[node as usize] = r;
        node
    }

    /// Best weighted-Gini split over a random feature subset, or `None` when
    /// no inspected feature admits a valid partition.
    fn best_split(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Option<(i32, f64)> {
        let mut order: Vec<usize> = (0..self.d).collect();
        for i in 0..self.features_per_split {
            let j = rng.random_range(i..self.d);
            order.swap(i, j);
        }

        let mut best: Option<(f64, i32, f64)> = None;
        let mut sorted: Vec<(f64, f64, f64)> = Vec::with_capacity(indices.len());
        for &f in &order[..self.features_per_split] {
            sorted.clear();
            for &i in indices {
                let w = self.weight(self.labels[i]);
                let (g, b) = match self.labels[i] {
                    Label::Good => (w, 0.0),
                    Label::Bad => (0.0, w),
                };
                sorted.push((self.rows[i][f], g, b));
            }
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let total_g: f64 = sorted.iter().map(|s| s.1).sum();
            let total_b: f64 = sorted.iter().map(|s| s.2).sum();
            let mut left_g = 0.0;
            let mut left_b = 0.0;
            for (k, s) in sorted.iter().enumerate().take(sorted.len() - 1) {
                left_g += s.1;
                left_b += s.2;
                let (a, b) = (s.0, sorted[k + 1].0);
                if a == b {
                    continue;
                }
                let left_n = k + 1;
                if left_n < self.min_samples_leaf
                    || sorted.len() - left_n < self.min_samples_leaf
                {
                    continue;
                }
                let score = gini_weight(left_g, left_b)
                    + gini_weight(total_g - left_g, total_b - left_b);
                if best.is_none_or(|(s, _, _)| score < s) {
                    // Midpoint threshold; fall back to the left value when
                    // rounding would put both sides of the split on one side.
                    let mut thr = 0.5 * (a + b);
                    if thr >= b {
                        thr = a;
                    }
                    best = Some((score, f as i32, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Weighted Gini contribution of one child: w · (1 − Σ p²), written to avoid
/// the division when the child is empty.
fn gini_weight(g: f64, b: f64) -> f64 {
    let w = g + b;
    if w <= 0.0 {
        0.0
    } else {
        w - (g * g + b * b) / w
    }
}

fn push_leaf(tree: &mut Tree, vote_good: bool) -> i32 {
    let id = tree.feature.len() as i32;
    tree.feature.push(-1);
    tree.threshold.push(0.0);
    tree.left.push(-1);
    tree.right.push(-1);
    tree.vote_good.push(vote_good);
    id
}

fn push_internal(tree: &mut Tree, feature: i32, threshold: f64) -> i32 {
    let id = tree.feature.len() as i32;
    tree.feature.push(feature);
    tree.threshold.push(threshold);
    tree.left.push(-1);
    tree.right.push(-1);
    tree.vote_good.push(false);
    id
}

/// In-place stable-enough partition: reorders `indices` so those satisfying
/// `pred` come first, returning the boundary.
fn partition(indices: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for i in 0..indices.len() {
        if pred(indices[i]) {
            indices.swap(mid, i);
            mid += 1;
        }
    }
    mid
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean: f64,
    pub std: f64,
}

/// Permutation importance results, sorted by mean importance descending.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub n_runs: usize,
    /// Balanced accuracy of the unperturbed model on the evaluation matrix.
    pub baseline: f64,
    pub features: Vec<FeatureImportance>,
}

pub const DEFAULT_IMPORTANCE_RUNS: usize = 100;

/// Balanced accuracy (mean of per-class recalls) of hard predictions at 0.5.
pub fn balanced_accuracy(model: &ForestModel, m: &FeatureMatrix) -> Result<f64> {
    let labels = m
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("balanced accuracy requires labels".into()))?;
    if m.columns != model.schema {
        return Err(Error::SchemaMismatch(
            "matrix columns do not match model schema".into(),
        ));
    }
    balanced_accuracy_rows(model, &m.rows, labels)
}

fn balanced_accuracy_rows(model: &ForestModel, rows: &[Vec<f64>], labels: &[Label]) -> Result<f64> {
    let predictions: Vec<Label> = rows
        .par_iter()
        .map(|r| model.predict_row(r))
        .collect::<Result<_>>()?;
    let mut hit = [0usize; 2];
    let mut count = [0usize; 2];
    for (p, &l) in predictions.iter().zip(labels) {
        let c = usize::from(l == Label::Bad);
        count[c] += 1;
        hit[c] += usize::from(*p == l);
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::InvalidInput(
            "balanced accuracy requires both classes present".into(),
        ));
    }
    Ok(0.5 * (hit[0] as f64 / count[0] as f64 + hit[1] as f64 / count[1] as f64))
}

/// Permutation importance on balanced accuracy.
///
/// For each feature (in schema order) and each of `n_runs` shuffles, the
/// column is permuted and the drop in balanced accuracy from `baseline` is
/// recorded; the report carries mean and sample standard deviation per
/// feature, sorted by mean descending. One shuffle of the column values is
/// drawn from `rng` per (feature, run), features outer, runs inner.
pub fn permutation_importance(
    model: &ForestModel,
    m: &FeatureMatrix,
    n_runs: usize,
    rng: &mut impl Rng,
) -> Result<ImportanceReport> {
    if n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    let labels = m
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("permutation importance requires labels".into()))?;
    if m.columns != model.schema {
        return Err(Error::SchemaMismatch(
            "matrix columns do not match model schema".into(),
        ));
    }
    let baseline = balanced_accuracy_rows(model, &m.rows, labels)?;

    let mut scratch = m.rows.clone();
    let mut features = Vec::with_capacity(m.n_cols());
    for j in 0..m.n_cols() {
        let original: Vec<f64> = m.rows.iter().map(|r| r[j]).collect();
        let mut drops = Vec::with_capacity(n_runs);
        for _ in 0..n_runs {
            let mut shuffled = original.clone();
            shuffle(&mut shuffled, rng);
            for (row, v) in scratch.iter_mut().zip(&shuffled) {
                row[j] = *v;
            }
            drops.push(baseline - balanced_accuracy_rows(model, &scratch, labels)?);
        }
        for (row, v) in scratch.iter_mut().zip(&original) {
            row[j] = *v;
        }
        let mean = drops.iter().sum::<f64>() / n_runs as f64;
        let std = if n_runs > 1 {
            (drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n_runs - 1) as f64).sqrt()
        } else {
            0.0
        };
        features.push(FeatureImportance {
            feature: m.columns[j].clone(),
            mean,
            std,
        });
    }
    features.sort_by(|a, b| b.mean.partial_cmp(&a.mean).unwrap());
    Ok(ImportanceReport {
        n_runs,
        baseline,
        features,
    })
}

/// Fisher–Yates, high-to-low, one `random_range` per swap.
fn shuffle<T>(values: &mut [T], rng: &mut impl Rng) {
    for i in (1..values.len()).rev() {
        let j = rng.random_range(0..=i);
        values.swap(i, j);
    }
}
