use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, DecisionTree, TreeParams};
use super::{class_weights, Hyperparams};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Bagged Gini trees with `floor(sqrt(d))` candidate features per split;
/// the score is the mean leaf probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams, seed: u64) -> Result<Self> {
        let n_trees = hp.usize("n_estimators", 100)?;
        if n_trees == 0 {
            return Err(Error::Invalid("n_estimators must be >= 1".into()));
        }
        let mut params = TreeParams::from_hyperparams(hp)?;
        let d = x.cols();
        params.max_features = Some(((d as f64).sqrt().floor() as usize).max(1));
        let cw = class_weights(hp, y)?;
        let w: Vec<f64> = y.iter().map(|&l| cw[l as usize]).collect();
        let a: Vec<f64> = y.iter().zip(&w).map(|(&l, w)| l as f64 * w).collect();
        let n = x.rows();
        // trees are independent; each owns a derived seed so the result does
        // not depend on scheduling
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let s = derive_seed(seed, &[t as u64]);
                let mut rng = seeded(s);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::grow(
                    x,
                    &a,
                    &w,
                    rows,
                    (0..d).collect(),
                    Criterion::Gini,
                    &params,
                    derive_seed(s, &[1]),
                )
            })
            .collect();
        Ok(RandomForest { trees })
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        let k = self.trees.len() as f64;
        x.iter_rows()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / k)
            .collect()
    }
}
