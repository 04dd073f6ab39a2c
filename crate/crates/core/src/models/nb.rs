use serde::{Deserialize, Serialize};

use super::Hyperparams;
use crate::data::Matrix;
use crate::error::{Error, Result};

/// Gaussian naive Bayes with variance smoothing `eps * max_j var(x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl GaussianNb {
    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams) -> Result<Self> {
        let eps = hp.f64("var_smoothing", 1e-9)?;
        if eps < 0.0 {
            return Err(Error::Invalid(format!("var_smoothing must be >= 0, got {eps}")));
        }
        let d = x.cols();
        let n = x.rows() as f64;
        let overall_mean: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n).collect();
        let max_var = (0..d)
            .map(|j| x.column(j).iter().map(|v| (v - overall_mean[j]).powi(2)).sum::<f64>() / n)
            .fold(0.0, f64::max);
        let smoothing = eps * max_var;
        let mut mean = [vec![0.0; d], vec![0.0; d]];
        let mut var = [vec![0.0; d], vec![0.0; d]];
        let mut count = [0.0f64; 2];
        for (r, &l) in x.iter_rows().zip(y) {
            count[l as usize] += 1.0;
            for (m, v) in mean[l as usize].iter_mut().zip(r) {
                *m += v;
            }
        }
        for c in 0..2 {
            mean[c].iter_mut().for_each(|m| *m /= count[c]);
        }
        for (r, &l) in x.iter_rows().zip(y) {
            let c = l as usize;
            for j in 0..d {
                var[c][j] += (r[j] - mean[c][j]).powi(2);
            }
        }
        for c in 0..2 {
            for v in &mut var[c] {
                *v = *v / count[c] + smoothing;
                if *v <= 0.0 {
                    // every column constant within the class and eps = 0
                    *v = f64::MIN_POSITIVE.sqrt();
                }
            }
        }
        Ok(GaussianNb {
            log_prior: [(count[0] / n).ln(), (count[1] / n).ln()],
            mean,
            var,
        })
    }

    fn joint_log(&self, r: &[f64], c: usize) -> f64 {
        let mut s = self.log_prior[c];
        for j in 0..r.len() {
            let v = self.var[c][j];
            s -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (r[j] - self.mean[c][j]).powi(2) / v);
        }
        s
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| super::sigmoid(self.joint_log(r, 1) - self.joint_log(r, 0)))
            .collect()
    }
}
