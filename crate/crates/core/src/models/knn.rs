use serde::{Deserialize, Serialize};

use super::Hyperparams;
use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

/// Brute-force k nearest neighbours over the stored standardized training set.
/// Distance ties go to the lower training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub metric: Metric,
    pub distance_weighted: bool,
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams) -> Result<Self> {
        let k = hp.usize("n_neighbors", 5)?;
        if k == 0 {
            return Err(Error::Invalid("n_neighbors must be >= 1".into()));
        }
        let metric = match hp.text("metric", "euclidean")?.as_str() {
            "euclidean" => Metric::Euclidean,
            "manhattan" => Metric::Manhattan,
            other => return Err(Error::Invalid(format!("unknown metric {other:?}"))),
        };
        let distance_weighted = match hp.text("weights", "uniform")?.as_str() {
            "uniform" => false,
            "distance" => true,
            other => return Err(Error::Invalid(format!("unknown weights {other:?}"))),
        };
        Ok(Knn {
            k: k.min(x.rows()),
            metric,
            distance_weighted,
            x: x.clone(),
            y: y.to_vec(),
        })
    }

    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.metric {
            Metric::Euclidean => a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum(),
        }
    }

    fn score_row(&self, r: &[f64]) -> f64 {
        let mut d: Vec<(f64, usize)> = self.x.iter_rows().enumerate().map(|(i, t)| (self.dist(r, t), i)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nn = &d[..self.k];
        if !self.distance_weighted {
            return nn.iter().filter(|&&(_, i)| self.y[i] == 1).count() as f64 / self.k as f64;
        }
        let exact: Vec<usize> = nn.iter().filter(|p| p.0 == 0.0).map(|p| p.1).collect();
        if !exact.is_empty() {
            return exact.iter().filter(|&&i| self.y[i] == 1).count() as f64 / exact.len() as f64;
        }
        let (mut pos, mut tot) = (0.0, 0.0);
        for &(dist, i) in nn {
            let w = 1.0 / dist;
            tot += w;
            if self.y[i] == 1 {
                pos += w;
            }
        }
        pos / tot
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.score_row(r)).collect()
    }
}
