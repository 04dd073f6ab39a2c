use serde::{Deserialize, Serialize};

use super::{class_weights, HyperValue, Hyperparams};
use crate::data::Matrix;
use crate::error::{Error, Result};

/// Sigmoid calibration `1 / (1 + exp(A f + B))` of decision values, fit by
/// Newton's method with backtracking on smoothed targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub fn fit(dec: &[f64], y: &[u8]) -> Platt {
        let prior1 = y.iter().filter(|&&l| l == 1).count() as f64;
        let prior0 = y.len() as f64 - prior1;
        let hi = (prior1 + 1.0) / (prior1 + 2.0);
        let lo = 1.0 / (prior0 + 2.0);
        let t: Vec<f64> = y.iter().map(|&l| if l == 1 { hi } else { lo }).collect();
        let (min_step, sigma, eps) = (1e-10, 1e-12, 1e-5);
        let mut a = 0.0;
        let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
        let obj = |a: f64, b: f64| -> f64 {
            dec.iter()
                .zip(&t)
                .map(|(&f, &ti)| {
                    let fa = f * a + b;
                    if fa >= 0.0 {
                        ti * fa + (-fa).exp().ln_1p()
                    } else {
                        (ti - 1.0) * fa + fa.exp().ln_1p()
                    }
                })
                .sum()
        };
        let mut fval = obj(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
            for (&f, &ti) in dec.iter().zip(&t) {
                let fa = f * a + b;
                let (p, q) = if fa >= 0.0 {
                    let e = (-fa).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = fa.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += f * f * d2;
                h22 += d2;
                h21 += f * d2;
                let d1 = ti - p;
                g1 += f * d1;
                g2 += d1;
            }
            if g1.abs() < eps && g2.abs() < eps {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= min_step {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = obj(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    break;
                }
                step /= 2.0;
            }
            if step < min_step {
                break;
            }
        }
        Platt { a, b }
    }

    pub fn score(&self, f: f64) -> f64 {
        super::sigmoid(-(self.a * f + self.b))
    }
}

/// Linear SVM: `||w||^2 / (2 C N) + (1/N) sum_i c_i hinge_i`, solved by
/// deterministic full-batch Pegasos with the bias as an extra input fixed to 1.
/// The best objective iterate is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmLinear {
    pub w: Vec<f64>,
    pub b: f64,
    pub platt: Platt,
}

impl SvmLinear {
    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams) -> Result<Self> {
        let c = hp.f64("C", 1.0)?;
        if !(c > 0.0) {
            return Err(Error::Invalid(format!("C must be positive, got {c}")));
        }
        let max_iter = hp.usize("max_iter", 1000)?;
        let cw = class_weights(hp, y)?;
        let (n, d) = (x.rows(), x.cols());
        let lam = 1.0 / (c * n as f64);
        let s: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let radius = (cw[0].max(cw[1]) / lam).sqrt();

        let objective = |w: &[f64]| -> f64 {
            let reg = 0.5 * lam * w.iter().map(|v| v * v).sum::<f64>();
            let hinge: f64 = x
                .iter_rows()
                .enumerate()
                .map(|(i, r)| {
                    let m = s[i] * (w[d] + r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
                    cw[y[i] as usize] * (1.0 - m).max(0.0)
                })
                .sum();
            reg + hinge / n as f64
        };
        let mut w = vec![0.0; d + 1];
        let mut best = w.clone();
        let mut best_obj = objective(&w);
        for t in 1..=max_iter {
            let eta = 1.0 / (lam * t as f64);
            let mut g: Vec<f64> = w.iter().map(|v| lam * v).collect();
            for (i, r) in x.iter_rows().enumerate() {
                let m = s[i] * (w[d] + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
                if m < 1.0 {
                    let k = cw[y[i] as usize] * s[i] / n as f64;
                    for (gj, xj) in g.iter_mut().zip(r) {
                        *gj -= k * xj;
                    }
                    g[d] -= k;
                }
            }
            for (wj, gj) in w.iter_mut().zip(&g) {
                *wj -= eta * gj;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
            let obj = objective(&w);
            if obj < best_obj {
                best_obj = obj;
                best.clone_from(&w);
            }
        }
        let b = best[d];
        best.truncate(d);
        let dec: Vec<f64> = x
            .iter_rows()
            .map(|r| b + r.iter().zip(&best).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        Ok(SvmLinear {
            platt: Platt::fit(&dec, y),
            w: best,
            b,
        })
    }

    pub fn decision(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| self.b + r.iter().zip(&self.w).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        self.decision(x).into_iter().map(|f| self.platt.score(f)).collect()
    }
}

/// Kernel SVM with an RBF kernel, trained by SMO with second-order working
/// set selection on the dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmRbf {
    pub gamma: f64,
    pub support: Matrix,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub platt: Platt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub upper: Vec<f64>,
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `0 <= a_i <= upper_i`, `y'a = 0` with
/// `Q_ij = s_i s_j K_ij`.
pub fn smo(k: &[Vec<f64>], s: &[f64], upper: &[f64], tol: f64, max_iter: usize) -> SmoSolution {
    let n = s.len();
    let tau = 1e-12;
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let q = |i: usize, j: usize| s[i] * s[j] * k[i][j];
    let is_up = |a: &[f64], t: usize| (s[t] > 0.0 && a[t] < upper[t]) || (s[t] < 0.0 && a[t] > 0.0);
    let is_low = |a: &[f64], t: usize| (s[t] > 0.0 && a[t] > 0.0) || (s[t] < 0.0 && a[t] < upper[t]);
    let mut iterations = 0;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if is_up(&alpha, t) && -s[t] * g[t] >= gmax {
                if -s[t] * g[t] > gmax || i == usize::MAX {
                    gmax = -s[t] * g[t];
                    i = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            if !is_low(&alpha, t) {
                continue;
            }
            let v = -s[t] * g[t];
            gmin = gmin.min(v);
            if i == usize::MAX {
                continue;
            }
            let b = gmax - v;
            if b > 0.0 {
                let mut a = k[i][i] + k[t][t] - 2.0 * k[i][t];
                if a <= 0.0 {
                    a = tau;
                }
                let o = -(b * b) / a;
                if o < obj_min {
                    obj_min = o;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (upper[i], upper[j]);
        if s[i] != s[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = tau;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = tau;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            g[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = s[t] * g[t];
        if alpha[t] >= upper[t] {
            if s[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if s[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    SmoSolution {
        alpha,
        rho,
        iterations,
        upper: upper.to_vec(),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum()
}

impl SvmRbf {
    pub fn gamma_for(hp: &Hyperparams, x: &Matrix) -> Result<f64> {
        let d = x.cols().max(1) as f64;
        let scale = HyperValue::Text("scale".into());
        match hp.get("gamma").unwrap_or(&scale) {
            HyperValue::Text(s) if s == "scale" => {
                let v = x.as_slice();
                let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
                let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len().max(1) as f64;
                Ok(if var > 0.0 { 1.0 / (d * var) } else { 1.0 })
            }
            HyperValue::Text(s) if s == "auto" => Ok(1.0 / d),
            v => match v.as_f64() {
                Some(g) if g > 0.0 => Ok(g),
                _ => Err(Error::Invalid(format!("gamma must be scale, auto or > 0, got {v}"))),
            },
        }
    }

    pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams) -> Result<Self> {
        let c = hp.f64("C", 1.0)?;
        if !(c > 0.0) {
            return Err(Error::Invalid(format!("C must be positive, got {c}")));
        }
        let tol = hp.f64("tol", 1e-3)?;
        let gamma = Self::gamma_for(hp, x)?;
        let cw = class_weights(hp, y)?;
        let n = x.rows();
        let max_iter = hp.usize("max_iter", (100 * n).max(10_000_000))?;
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (-gamma * sq_dist(x.row(i), x.row(j))).exp()).collect())
            .collect();
        let s: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let upper: Vec<f64> = y.iter().map(|&l| c * cw[l as usize]).collect();
        let sol = smo(&k, &s, &upper, tol, max_iter);
        let sv: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
        let coef: Vec<f64> = sv.iter().map(|&i| sol.alpha[i] * s[i]).collect();
        let dec: Vec<f64> = (0..n)
            .map(|i| sv.iter().zip(&coef).map(|(&j, a)| a * k[i][j]).sum::<f64>() - sol.rho)
            .collect();
        Ok(SvmRbf {
            gamma,
            support: x.select_rows(&sv),
            coef,
            rho: sol.rho,
            platt: Platt::fit(&dec, y),
        })
    }

    pub fn decision(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| {
                self.support
                    .iter_rows()
                    .zip(&self.coef)
                    .map(|(sv, a)| a * (-self.gamma * sq_dist(r, sv)).exp())
                    .sum::<f64>()
                    - self.rho
            })
            .collect()
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        self.decision(x).into_iter().map(|f| self.platt.score(f)).collect()
    }
}
