use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{class_weights, Hyperparams};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Binary tree; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` uses all allowed features.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl TreeParams {
    pub fn from_hyperparams(hp: &Hyperparams) -> Result<Self> {
        let p = TreeParams {
            max_depth: hp.opt_usize("max_depth")?,
            min_samples_split: hp.usize("min_samples_split", 2)?,
            min_samples_leaf: hp.usize("min_samples_leaf", 1)?,
            max_features: None,
        };
        if p.min_samples_split < 2 || p.min_samples_leaf < 1 {
            return Err(Error::Invalid("min_samples_split >= 2 and min_samples_leaf >= 1 required".into()));
        }
        Ok(p)
    }
}

/// How split quality and leaf values are computed from per-row statistics
/// `[a, b]` summed over a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// `a = w * y`, `b = w`; weighted Gini, leaf = positive fraction.
    Gini,
    /// `a = residual`, `b = hessian`; squared-error split, Newton leaf `A / B`.
    Residual,
    /// `a = gradient`, `b = hessian`; second-order gain, leaf `-A / (B + lambda)`.
    SecondOrder { lambda: f64 },
}

#[derive(Clone, Copy, Default)]
struct Sums {
    a: f64,
    b: f64,
    n: f64,
}

impl Sums {
    fn add(&mut self, a: f64, b: f64) {
        self.a += a;
        self.b += b;
        self.n += 1.0;
    }

    fn sub(self, o: Sums) -> Sums {
        Sums {
            a: self.a - o.a,
            b: self.b - o.b,
            n: self.n - o.n,
        }
    }
}

impl Criterion {
    fn quality(self, s: Sums) -> f64 {
        match self {
            Criterion::Gini => {
                if s.b <= 0.0 {
                    0.0
                } else {
                    -2.0 * s.a * (s.b - s.a) / s.b
                }
            }
            Criterion::Residual => s.a * s.a / s.n,
            Criterion::SecondOrder { lambda } => s.a * s.a / (s.b + lambda),
        }
    }

    fn leaf(self, s: Sums) -> f64 {
        match self {
            Criterion::Gini => {
                if s.b > 0.0 {
                    s.a / s.b
                } else {
                    0.5
                }
            }
            Criterion::Residual => {
                if s.b > 0.0 {
                    s.a / s.b
                } else {
                    0.0
                }
            }
            Criterion::SecondOrder { lambda } => -s.a / (s.b + lambda),
        }
    }

    fn pure(self, s: Sums) -> bool {
        match self {
            Criterion::Gini => s.a <= 0.0 || s.a >= s.b,
            _ => false,
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    a: &'a [f64],
    b: &'a [f64],
    crit: Criterion,
    params: &'a TreeParams,
    features: Vec<usize>,
    rng: Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn sums(&self, rows: &[usize]) -> Sums {
        let mut s = Sums::default();
        for &i in rows {
            s.add(self.a[i], self.b[i]);
        }
        s
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let total = self.sums(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.crit.leaf(total),
        });
        let p = self.params;
        let n = rows.len();
        if self.crit.pure(total)
            || p.max_depth.is_some_and(|m| depth >= m)
            || n < p.min_samples_split
            || n < 2 * p.min_samples_leaf
        {
            return id;
        }
        let candidates: Vec<usize> = match p.max_features {
            Some(m) if m < self.features.len() => {
                let mut pick: Vec<usize> = sample(&mut self.rng, self.features.len(), m)
                    .into_iter()
                    .map(|k| self.features[k])
                    .collect();
                pick.sort_unstable();
                pick
            }
            _ => self.features.clone(),
        };
        let parent_q = self.crit.quality(total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &f in &candidates {
            order.clear();
            order.extend(rows.iter().map(|&i| (self.x.get(i, f), i)));
            order.sort_by(|u, v| u.0.total_cmp(&v.0).then(u.1.cmp(&v.1)));
            let mut left = Sums::default();
            for k in 0..n - 1 {
                let i = order[k].1;
                left.add(self.a[i], self.b[i]);
                let (lo, hi) = (order[k].0, order[k + 1].0);
                if lo == hi || k + 1 < p.min_samples_leaf || n - k - 1 < p.min_samples_leaf {
                    continue;
                }
                let gain = self.crit.quality(left) + self.crit.quality(total.sub(left)) - parent_q;
                if gain > 1e-12 * parent_q.abs().max(1e-300) && best.is_none_or(|b| gain > b.0) {
                    let mut thr = 0.5 * (lo + hi);
                    if thr >= hi {
                        thr = lo;
                    }
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree over `rows` (repeats allowed, as in a bootstrap sample).
    #[allow(clippy::too_many_arguments)]
    pub fn grow(
        x: &Matrix,
        a: &[f64],
        b: &[f64],
        rows: Vec<usize>,
        features: Vec<usize>,
        crit: Criterion,
        params: &TreeParams,
        seed: u64,
    ) -> DecisionTree {
        let mut builder = Builder {
            x,
            a,
            b,
            crit,
            params,
            features,
            rng: seeded(seed),
            nodes: Vec::new(),
        };
        builder.build(rows, 0);
        DecisionTree { nodes: builder.nodes }
    }

    pub fn fit_classifier(x: &Matrix, y: &[u8], hp: &Hyperparams, seed: u64) -> Result<Self> {
        let params = TreeParams::from_hyperparams(hp)?;
        let cw = class_weights(hp, y)?;
        let w: Vec<f64> = y.iter().map(|&l| cw[l as usize]).collect();
        let a: Vec<f64> = y.iter().zip(&w).map(|(&l, w)| l as f64 * w).collect();
        Ok(DecisionTree::grow(
            x,
            &a,
            &w,
            (0..x.rows()).collect(),
            (0..x.cols()).collect(),
            Criterion::Gini,
            &params,
            seed,
        ))
    }

    pub fn predict_row(&self, r: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if r[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Index of the leaf reached by `r`.
    pub fn leaf_index(&self, r: &[f64]) -> usize {
        let mut k = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = &self.nodes[k]
        {
            k = if r[*feature] <= *threshold { *left } else { *right };
        }
        k
    }

    pub fn set_leaf(&mut self, k: usize, value: f64) {
        self.nodes[k] = Node::Leaf { value };
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, k: usize) -> usize {
            match &t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}
