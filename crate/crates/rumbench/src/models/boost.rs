//! Gradient-boosted decision trees for multi-class choice.
//!
//! Each boosting round grows one regression tree per class on the gradients
//! and hessians of the softmax log-loss at the current scores, using
//! second-order leaf weights `-G/(H + l2)` and a structure gain with an L2
//! leaf penalty and a minimum split-loss threshold, the scheme popularised
//! by modern boosting libraries. Shrinkage is folded into the stored leaf
//! values, so prediction is a plain sum of tree outputs followed by softmax.
//! With zero rounds the model predicts the uniform distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, ChoiceModel};
use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Training settings for [`Gbdt::fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    /// Shrinkage applied to every leaf weight.
    pub learning_rate: f64,
    /// L2 penalty on leaf weights (lambda).
    pub l2: f64,
    /// Minimum gain a split must clear (gamma).
    pub min_split_loss: f64,
    /// Minimum hessian mass in each child.
    pub min_child_weight: f64,
    /// Fraction of rows sampled (without replacement) per round.
    pub subsample: f64,
    pub seed: u64,
}

impl GbdtConfig {
    pub fn new(seed: u64) -> Self {
        GbdtConfig {
            n_rounds: 100,
            max_depth: 3,
            learning_rate: 0.3,
            l2: 1.0,
            min_split_loss: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::config("max_depth must be >= 1"));
        }
        if !self.learning_rate.is_finite()
            || self.learning_rate <= 0.0
            || self.learning_rate > 1.0
        {
            return Err(Error::config("learning_rate must lie in (0, 1]"));
        }
        if !self.l2.is_finite() || self.l2 < 0.0 {
            return Err(Error::config("l2 must be finite and >= 0"));
        }
        if !self.min_split_loss.is_finite() || self.min_split_loss < 0.0 {
            return Err(Error::config("min_split_loss must be finite and >= 0"));
        }
        if !self.min_child_weight.is_finite() || self.min_child_weight < 0.0 {
            return Err(Error::config("min_child_weight must be finite and >= 0"));
        }
        if !self.subsample.is_finite() || self.subsample <= 0.0 || self.subsample > 1.0 {
            return Err(Error::config("subsample must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn value(&self, row: &[f64]) -> Result<f64> {
        let mut idx = 0usize;
        for _ in 0..=self.nodes.len() {
            match self.nodes.get(idx) {
                Some(Node::Leaf { value }) => return Ok(*value),
                Some(Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                }) => {
                    idx = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                None => break,
            }
        }
        Err(Error::InvalidModel("tree walk did not terminate".into()))
    }
}

/// A fitted gradient-boosted tree ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gbdt {
    n_features: usize,
    n_alternatives: usize,
    /// `rounds[r][c]` is the round-`r` tree for class `c`.
    rounds: Vec<Vec<Tree>>,
    /// Mean training log-loss after each round, for convergence monitoring.
    pub train_loss: Vec<f64>,
}

impl Gbdt {
    pub fn fit(dataset: &ChoiceDataset, config: &GbdtConfig) -> Result<Self> {
        config.validate()?;
        let n = dataset.n_rows();
        if n == 0 {
            return Err(Error::config("cannot train on an empty dataset"));
        }
        let k = dataset.n_alternatives();
        let mut scores = vec![0.0f64; n * k];
        let mut probs = vec![0.0f64; k];
        let mut grad = vec![0.0f64; n * k];
        let mut hess = vec![0.0f64; n * k];
        let mut rounds = Vec::with_capacity(config.n_rounds);
        let mut train_loss = Vec::with_capacity(config.n_rounds);
        let mut order: Vec<usize> = (0..n).collect();
        let sample_size = ((config.subsample * n as f64).ceil() as usize).clamp(1, n);

        for r in 0..config.n_rounds {
            // Gradients and hessians of the log-loss at the current scores,
            // shared by all class trees of this round.
            for row in 0..n {
                probs.copy_from_slice(&scores[row * k..(row + 1) * k]);
                softmax_in_place(&mut probs);
                let chosen = dataset.chosen(row);
                for c in 0..k {
                    let p = probs[c];
                    let y = if c == chosen { 1.0 } else { 0.0 };
                    grad[row * k + c] = p - y;
                    hess[row * k + c] = p * (1.0 - p);
                }
            }

            let sample: Vec<usize> = if sample_size < n {
                let mut sub_rng = rng::stream(config.seed, &format!("gbdt/round{r}/subsample"));
                for i in 0..sample_size {
                    let j = sub_rng.random_range(i..n);
                    order.swap(i, j);
                }
                let mut s = order[..sample_size].to_vec();
                s.sort_unstable();
                s
            } else {
                order.clone()
            };

            let mut class_trees = Vec::with_capacity(k);
            for c in 0..k {
                let mut builder = Builder {
                    dataset,
                    grad: &grad,
                    hess: &hess,
                    class: c,
                    k,
                    config,
                    nodes: Vec::new(),
                };
                builder.grow(sample.clone(), 0);
                let tree = Tree {
                    nodes: builder.nodes,
                };
                for row in 0..n {
                    scores[row * k + c] += tree.value(dataset.row(row))?;
                }
                class_trees.push(tree);
            }
            rounds.push(class_trees);

            let mut loss = 0.0;
            for row in 0..n {
                let z = &scores[row * k..(row + 1) * k];
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                loss += max + sum.ln() - z[dataset.chosen(row)];
            }
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "training loss became non-finite at round {r}"
                )));
            }
            train_loss.push(loss);
        }

        Ok(Gbdt {
            n_features: dataset.n_attributes(),
            n_alternatives: k,
            rounds,
            train_loss,
        })
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Every threshold any tree applies to `feature`, sorted and deduplicated.
    pub fn thresholds_on(&self, feature: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for tree in self.rounds.iter().flatten() {
            for node in &tree.nodes {
                if let Node::Split {
                    feature: f,
                    threshold,
                    ..
                } = node
                {
                    if *f == feature {
                        out.push(*threshold);
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_alternatives < 2 {
            return Err(Error::InvalidModel(
                "boosted model needs >= 1 feature and >= 2 alternatives".into(),
            ));
        }
        for round in &self.rounds {
            if round.len() != self.n_alternatives {
                return Err(Error::InvalidModel(format!(
                    "round carries {} trees for {} classes",
                    round.len(),
                    self.n_alternatives
                )));
            }
            for tree in round {
                if tree.nodes.is_empty() {
                    return Err(Error::InvalidModel("tree has no nodes".into()));
                }
                for (i, node) in tree.nodes.iter().enumerate() {
                    match node {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            if *feature >= self.n_features {
                                return Err(Error::InvalidModel(format!(
                                    "split on feature {feature} of {}",
                                    self.n_features
                                )));
                            }
                            if !threshold.is_finite() {
                                return Err(Error::InvalidModel("non-finite threshold".into()));
                            }
                            if *left <= i || *right <= i || *left >= tree.nodes.len()
                                || *right >= tree.nodes.len()
                            {
                                return Err(Error::InvalidModel(format!(
                                    "node {i} links to invalid children {left}/{right}"
                                )));
                            }
                        }
                        Node::Leaf { value } => {
                            if !value.is_finite() {
                                return Err(Error::InvalidModel("non-finite leaf value".into()));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl ChoiceModel for Gbdt {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_alternatives(&self) -> usize {
        self.n_alternatives
    }

    fn predict_proba_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::dimension(format!(
                "model expects {} features, row has {}",
                self.n_features,
                row.len()
            )));
        }
        let mut scores = vec![0.0; self.n_alternatives];
        for round in &self.rounds {
            for (c, tree) in round.iter().enumerate() {
                scores[c] += tree.value(row)?;
            }
        }
        softmax_in_place(&mut scores);
        Ok(scores)
    }
}

struct Builder<'a> {
    dataset: &'a ChoiceDataset,
    grad: &'a [f64],
    hess: &'a [f64],
    class: usize,
    k: usize,
    config: &'a GbdtConfig,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn stats(&self, rows: &[usize]) -> (f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        for &r in rows {
            g += self.grad[r * self.k + self.class];
            h += self.hess[r * self.k + self.class];
        }
        (g, h)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.config.learning_rate * g / (h + self.config.l2).max(1e-16)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (g, h) = self.stats(&rows);
        if depth >= self.config.max_depth || rows.len() < 2 {
            return self.push_leaf(g, h);
        }
        let Some(best) = self.best_split(&rows, g, h) else {
            return self.push_leaf(g, h);
        };
        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for r in rows {
            if self.dataset.row(r)[best.feature] <= best.threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let idx = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[idx]
        {
            *l = left;
            *r = right;
        }
        idx
    }

    fn push_leaf(&mut self, g: f64, h: f64) -> usize {
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(g, h),
        });
        self.nodes.len() - 1
    }

    /// Highest-gain split over all features, or None when nothing clears the
    /// minimum split loss and child-weight constraints.
    fn best_split(&self, rows: &[usize], g_total: f64, h_total: f64) -> Option<BestSplit> {
        let lambda = self.config.l2;
        let parent = g_total * g_total / (h_total + lambda).max(1e-16);
        let mut best: Option<BestSplit> = None;
        let mut entries: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
        for feature in 0..self.dataset.n_attributes() {
            entries.clear();
            entries.extend(rows.iter().map(|&r| {
                (
                    self.dataset.row(r)[feature],
                    self.grad[r * self.k + self.class],
                    self.hess[r * self.k + self.class],
                )
            }));
            entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut gl = 0.0;
            let mut hl = 0.0;
            for i in 0..entries.len() - 1 {
                gl += entries[i].1;
                hl += entries[i].2;
                if entries[i].0 == entries[i + 1].0 {
                    continue;
                }
                let gr = g_total - gl;
                let hr = h_total - hl;
                if hl < self.config.min_child_weight || hr < self.config.min_child_weight {
                    continue;
                }
                let gain = 0.5
                    * (gl * gl / (hl + lambda).max(1e-16)
                        + gr * gr / (hr + lambda).max(1e-16)
                        - parent)
                    - self.config.min_split_loss;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature,
                        threshold: (entries[i].0 + entries[i + 1].0) / 2.0,
                        gain,
                    });
                }
            }
        }
        best
    }
}
