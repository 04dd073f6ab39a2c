use serde::{Deserialize, Serialize};

use super::{class_weights, sigmoid, softplus, Hyperparams};
use crate::data::Matrix;
use crate::error::{Error, Result};

/// Penalized logistic regression.
///
/// Minimizes `(1/N) sum_i c_i logloss_i + pen(w) / (C N)` with
/// `pen = ||w||_1` or `||w||^2 / 2`; the intercept is not penalized. Solved by
/// FISTA with a fixed step from the Lipschitz bound and adaptive restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Penalty {
    L1,
    L2,
}

struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    cw: [f64; 2],
    lam: f64,
    penalty: Penalty,
}

impl Problem<'_> {
    fn n(&self) -> f64 {
        self.x.rows() as f64
    }

    // smooth part and its gradient; theta = [w..., b]
    fn smooth(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.x.cols();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (i, r) in self.x.iter_rows().enumerate() {
            let z = theta[d] + r.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            let yi = self.y[i] as f64;
            let c = self.cw[self.y[i] as usize];
            loss += c * (softplus(z) - yi * z);
            let g = c * (sigmoid(z) - yi);
            for (gj, xj) in grad.iter_mut().zip(r) {
                *gj += g * xj;
            }
            grad[d] += g;
        }
        let n = self.n();
        grad.iter_mut().for_each(|g| *g /= n);
        let mut f = loss / n;
        if self.penalty == Penalty::L2 {
            for j in 0..d {
                f += 0.5 * self.lam * theta[j] * theta[j];
                grad[j] += self.lam * theta[j];
            }
        }
        f
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; theta.len()];
        let mut f = self.smooth(theta, &mut g);
        if self.penalty == Penalty::L1 {
            f += self.lam * theta[..self.x.cols()].iter().map(|v| v.abs()).sum::<f64>();
        }
        f
    }

    /// Upper bound on the gradient's Lipschitz constant via power iteration
    /// on the weighted Gram matrix of the augmented design.
    fn lipschitz(&self) -> f64 {
        let d = self.x.cols() + 1;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut lam = 0.0;
        for _ in 0..100 {
            let mut out = vec![0.0; d];
            for (i, r) in self.x.iter_rows().enumerate() {
                let c = self.cw[self.y[i] as usize];
                let s = v[d - 1] + r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
                for (o, xj) in out.iter_mut().zip(r) {
                    *o += c * s * xj;
                }
                out[d - 1] += c * s;
            }
            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let next = norm / self.n();
            v = out.into_iter().map(|x| x / norm).collect();
            if (next - lam).abs() <= 1e-6 * next {
                lam = next;
                break;
            }
            lam = next;
        }
        let l2 = if self.penalty == Penalty::L2 { self.lam } else { 0.0 };
        // power iteration approaches from below; pad it
        0.25 * lam * 1.05 + l2 + 1e-12
    }
}

impl LogisticRegression {
    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams) -> Result<Self> {
        let c = hp.f64("C", 1.0)?;
        if !(c > 0.0) {
            return Err(Error::Invalid(format!("C must be positive, got {c}")));
        }
        let penalty = match hp.text("penalty", "l2")?.as_str() {
            "l1" => Penalty::L1,
            "l2" => Penalty::L2,
            other => return Err(Error::Invalid(format!("unknown penalty {other:?}"))),
        };
        let max_iter = hp.usize("max_iter", 2000)?;
        let tol = hp.f64("tol", 1e-9)?;
        let p = Problem {
            x,
            y,
            cw: class_weights(hp, y)?,
            lam: 1.0 / (c * x.rows() as f64),
            penalty,
        };
        let d = x.cols();
        let step = 1.0 / p.lipschitz();
        let mut theta = vec![0.0; d + 1];
        let mut z = theta.clone();
        let mut t = 1.0f64;
        let mut grad = vec![0.0; d + 1];
        let mut prev_obj = p.objective(&theta);
        let mut iterations = 0;
        for it in 0..max_iter {
            iterations = it + 1;
            p.smooth(&z, &mut grad);
            let mut next: Vec<f64> = z.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            if penalty == Penalty::L1 {
                let thr = step * p.lam;
                for v in &mut next[..d] {
                    *v = v.signum() * (v.abs() - thr).max(0.0);
                }
            }
            let obj = p.objective(&next);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let delta: f64 = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if obj > prev_obj {
                // restart momentum when the objective goes up
                z = theta.clone();
                t = 1.0;
                continue;
            }
            let mom = (t - 1.0) / t_next;
            z = next.iter().zip(&theta).map(|(a, b)| a + mom * (a - b)).collect();
            theta = next;
            t = t_next;
            let converged = delta <= tol * (1.0 + theta.iter().map(|v| v.abs()).fold(0.0, f64::max))
                && (prev_obj - obj).abs() <= tol * prev_obj.abs().max(1.0);
            prev_obj = obj;
            if converged {
                break;
            }
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logistic regression diverged".into()));
        }
        let b = theta[d];
        theta.truncate(d);
        Ok(LogisticRegression { w: theta, b, iterations })
    }

    pub fn decision(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| self.b + r.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        self.decision(x).into_iter().map(sigmoid).collect()
    }
}
