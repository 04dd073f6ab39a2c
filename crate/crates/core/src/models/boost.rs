use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, DecisionTree, TreeParams};
use super::{sigmoid, softplus, Hyperparams};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

fn logloss(f: f64, y: f64) -> f64 {
    softplus(f) - y * f
}

/// Stagewise regression trees on the logistic loss.
///
/// The classic variant splits on squared error of the residuals with Newton
/// leaves; `second_order` uses the gradient/hessian gain with L2 leaf
/// regularization (the XGBoost-style variant). A leaf step that would raise
/// the loss of its own in-bag rows is halved until it does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<DecisionTree>,
    /// Training loss before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

impl GradientBoosting {
    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams, seed: u64) -> Result<Self> {
        let n_stages = hp.usize("n_estimators", 100)?;
        let lr = hp.f64("learning_rate", 0.1)?;
        let subsample = hp.f64("subsample", 1.0)?;
        let colsample = hp.f64("colsample", 1.0)?;
        let second_order = hp.bool("second_order", false)?;
        let lambda = hp.f64("reg_lambda", 1.0)?;
        if !(lr > 0.0) || !(subsample > 0.0 && subsample <= 1.0) || !(colsample > 0.0 && colsample <= 1.0) {
            return Err(Error::Invalid(
                "gboost needs learning_rate > 0 and subsample, colsample in (0, 1]".into(),
            ));
        }
        let params = TreeParams {
            max_depth: Some(hp.usize("max_depth", 3)?),
            ..TreeParams::default()
        };
        let crit = if second_order {
            Criterion::SecondOrder { lambda }
        } else {
            Criterion::Residual
        };
        let (n, d) = (x.rows(), x.cols());
        let yf: Vec<f64> = y.iter().map(|&l| l as f64).collect();
        let prior = yf.iter().sum::<f64>() / n as f64;
        let init = (prior / (1.0 - prior)).ln();
        let mut f = vec![init; n];
        let total_loss = |f: &[f64]| f.iter().zip(&yf).map(|(&a, &b)| logloss(a, b)).sum::<f64>() / n as f64;
        let mut train_loss = vec![total_loss(&f)];
        let mut trees = Vec::with_capacity(n_stages);
        let n_rows = ((subsample * n as f64).round() as usize).clamp(1, n);
        let n_cols = ((colsample * d as f64).ceil() as usize).clamp(1, d);

        for stage in 0..n_stages {
            let mut rng = seeded(derive_seed(seed, &[stage as u64]));
            let mut rows: Vec<usize> = if n_rows < n {
                sample(&mut rng, n, n_rows).into_vec()
            } else {
                (0..n).collect()
            };
            rows.sort_unstable();
            let mut cols: Vec<usize> = if n_cols < d {
                sample(&mut rng, d, n_cols).into_vec()
            } else {
                (0..d).collect()
            };
            cols.sort_unstable();

            let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
            let h: Vec<f64> = p.iter().map(|&q| (q * (1.0 - q)).max(1e-16)).collect();
            let a: Vec<f64> = if second_order {
                p.iter().zip(&yf).map(|(q, t)| q - t).collect()
            } else {
                p.iter().zip(&yf).map(|(q, t)| t - q).collect()
            };
            let mut tree = DecisionTree::grow(x, &a, &h, rows.clone(), cols, crit, &params, 0);

            let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
            for &i in &rows {
                members[tree.leaf_index(x.row(i))].push(i);
            }
            for (k, m) in members.iter().enumerate() {
                if m.is_empty() {
                    continue;
                }
                let mut v = tree.predict_row(x.row(m[0]));
                let before: f64 = m.iter().map(|&i| logloss(f[i], yf[i])).sum();
                for _ in 0..60 {
                    let after: f64 = m.iter().map(|&i| logloss(f[i] + lr * v, yf[i])).sum();
                    if after <= before {
                        break;
                    }
                    v *= 0.5;
                }
                let after: f64 = m.iter().map(|&i| logloss(f[i] + lr * v, yf[i])).sum();
                if after > before {
                    v = 0.0;
                }
                tree.set_leaf(k, v);
            }
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += lr * tree.predict_row(x.row(i));
            }
            train_loss.push(total_loss(&f));
            trees.push(tree);
        }
        Ok(GradientBoosting {
            init,
            learning_rate: lr,
            trees,
            train_loss,
        })
    }

    pub fn decision(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>())
            .collect()
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        self.decision(x).into_iter().map(sigmoid).collect()
    }
}

/// SAMME with depth-1 Gini stumps; the score is the alpha-weighted fraction
/// of stumps voting positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub stumps: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
    pub prior: f64,
}

impl AdaBoost {
    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams) -> Result<Self> {
        let n_estimators = hp.usize("n_estimators", 50)?;
        let lr = hp.f64("learning_rate", 1.0)?;
        if !(lr > 0.0) {
            return Err(Error::Invalid(format!("learning_rate must be > 0, got {lr}")));
        }
        let n = x.rows();
        let params = TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        };
        let mut w = vec![1.0 / n as f64; n];
        let mut stumps = Vec::new();
        let mut alphas = Vec::new();
        for _ in 0..n_estimators {
            let a: Vec<f64> = y.iter().zip(&w).map(|(&l, w)| l as f64 * w).collect();
            let stump = DecisionTree::grow(
                x,
                &a,
                &w,
                (0..n).collect(),
                (0..x.cols()).collect(),
                Criterion::Gini,
                &params,
                0,
            );
            let pred: Vec<u8> = (0..n).map(|i| (stump.predict_row(x.row(i)) >= 0.5) as u8).collect();
            let total: f64 = w.iter().sum();
            let err: f64 = (0..n).filter(|&i| pred[i] != y[i]).map(|i| w[i]).sum::<f64>() / total;
            if err <= 1e-12 {
                stumps.push(stump);
                alphas.push(1.0);
                break;
            }
            if err >= 0.5 {
                break;
            }
            let alpha = lr * ((1.0 - err) / err).ln();
            for i in 0..n {
                if pred[i] != y[i] {
                    w[i] *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            stumps.push(stump);
            alphas.push(alpha);
        }
        let prior = y.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
        Ok(AdaBoost { stumps, alphas, prior })
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        let total: f64 = self.alphas.iter().sum();
        x.iter_rows()
            .map(|r| {
                if total <= 0.0 {
                    return self.prior;
                }
                let pos: f64 = self
                    .stumps
                    .iter()
                    .zip(&self.alphas)
                    .filter(|(s, _)| s.predict_row(r) >= 0.5)
                    .map(|(_, a)| a)
                    .sum();
                pos / total
            })
            .collect()
    }
}
