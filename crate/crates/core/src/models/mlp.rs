//! Feed-forward network: `Linear -> BatchNorm -> ReLU -> Dropout` per hidden
//! layer and a single sigmoid output unit, trained with plain mini-batch SGD.
//!
//! Parameters live in one flat vector so that federated aggregation can treat
//! every layer alike. Per hidden layer the order is `W (out x in, row-major),
//! b, gamma, beta, running_mean, running_var`, followed by the output weights
//! and bias.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Hyperparams};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, fisher_yates, seeded, Rng};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub dropout: f64,
}

impl MlpArchitecture {
    /// Hidden depth from the input size: up to 16 features one layer, up to 64
    /// two, otherwise three. `cfg.hidden_layers` overrides the rule.
    pub fn depth_for(dim: usize) -> usize {
        match dim {
            0..=16 => 1,
            17..=64 => 2,
            _ => 3,
        }
    }

    pub fn for_dim(dim: usize, cfg: &MlpTraining) -> MlpArchitecture {
        MlpArchitecture {
            input_dim: dim,
            hidden_layers: cfg.hidden_layers.unwrap_or_else(|| Self::depth_for(dim)),
            hidden_width: cfg.hidden_width,
            dropout: cfg.dropout,
        }
    }

    fn layers(&self) -> Vec<LayerSlots> {
        let mut out = Vec::with_capacity(self.hidden_layers);
        let mut off = 0;
        let mut nin = self.input_dim;
        for _ in 0..self.hidden_layers {
            let o = self.hidden_width;
            let s = LayerSlots {
                nin,
                nout: o,
                w: off,
                b: off + o * nin,
                gamma: off + o * nin + o,
                beta: off + o * nin + 2 * o,
                rmean: off + o * nin + 3 * o,
                rvar: off + o * nin + 4 * o,
            };
            off = s.rvar + o;
            nin = o;
            out.push(s);
        }
        out
    }

    /// Width of the activations fed to the output unit.
    pub fn penultimate_dim(&self) -> usize {
        if self.hidden_layers == 0 {
            self.input_dim
        } else {
            self.hidden_width
        }
    }

    /// Offset of the output weights in the flat vector.
    pub fn output_offset(&self) -> usize {
        self.layers().last().map_or(0, |s| s.rvar + s.nout)
    }

    pub fn n_params(&self) -> usize {
        self.output_offset() + self.penultimate_dim() + 1
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSlots {
    nin: usize,
    nout: usize,
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
    rmean: usize,
    rvar: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTraining {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden_width: usize,
    pub hidden_layers: Option<usize>,
    pub dropout: f64,
}

impl Default for MlpTraining {
    fn default() -> Self {
        MlpTraining {
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 200,
            patience: 10,
            hidden_width: 64,
            hidden_layers: None,
            dropout: 0.1,
        }
    }
}

impl MlpTraining {
    pub fn from_hyperparams(hp: &Hyperparams) -> Result<Self> {
        let d = MlpTraining::default();
        let cfg = MlpTraining {
            lr: hp.f64("lr", d.lr)?,
            batch_size: hp.usize("batch_size", d.batch_size)?,
            max_epochs: hp.usize("max_epochs", d.max_epochs)?,
            patience: hp.usize("patience", d.patience)?,
            hidden_width: hp.usize("hidden_width", d.hidden_width)?,
            hidden_layers: hp.opt_usize("hidden_layers")?,
            dropout: hp.f64("dropout", d.dropout)?,
        };
        if !(cfg.lr >= 0.0) || cfg.batch_size == 0 || cfg.hidden_width == 0 || !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Invalid(
                "mlp needs lr >= 0, batch_size >= 1, hidden_width >= 1 and dropout in [0, 1)".into(),
            ));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub arch: MlpArchitecture,
    pub params: Vec<f64>,
}

// activations kept for the backward pass
struct Cache {
    input: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    bn_out: Vec<f64>,
    mask: Vec<f64>,
}

fn bce(logit: f64, y: u8) -> f64 {
    softplus(logit) - y as f64 * logit
}

impl Mlp {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and biases, BN
    /// scale 1, shift 0, running statistics (0, 1).
    pub fn init(arch: &MlpArchitecture, seed: u64) -> Mlp {
        let mut rng = seeded(seed);
        let mut p = vec![0.0; arch.n_params()];
        let uniform = |slice: &mut [f64], fan_in: usize, rng: &mut Rng| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in slice {
                *v = rng.random_range(-bound..bound);
            }
        };
        for s in arch.layers() {
            uniform(&mut p[s.w..s.b], s.nin, &mut rng);
            uniform(&mut p[s.b..s.gamma], s.nin, &mut rng);
            p[s.gamma..s.beta].fill(1.0);
            p[s.rvar..s.rvar + s.nout].fill(1.0);
        }
        let o = arch.output_offset();
        let h = arch.penultimate_dim();
        uniform(&mut p[o..o + h + 1], h, &mut rng);
        Mlp {
            arch: arch.clone(),
            params: p,
        }
    }

    pub fn from_params(arch: &MlpArchitecture, params: Vec<f64>) -> Result<Mlp> {
        if params.len() != arch.n_params() {
            return Err(Error::DimensionMismatch {
                expected: arch.n_params(),
                found: params.len(),
            });
        }
        Ok(Mlp {
            arch: arch.clone(),
            params,
        })
    }

    /// Inference-mode activations entering the output unit, one row per input.
    pub fn penultimate(&self, x: &Matrix) -> Vec<Vec<f64>> {
        let p = &self.params;
        x.iter_rows()
            .map(|r| {
                let mut h = r.to_vec();
                for s in self.arch.layers() {
                    let mut next = vec![0.0; s.nout];
                    for (j, out) in next.iter_mut().enumerate() {
                        let w = &p[s.w + j * s.nin..s.w + (j + 1) * s.nin];
                        let z = p[s.b + j] + w.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
                        let xhat = (z - p[s.rmean + j]) / (p[s.rvar + j] + BN_EPS).sqrt();
                        *out = (p[s.gamma + j] * xhat + p[s.beta + j]).max(0.0);
                    }
                    h = next;
                }
                h
            })
            .collect()
    }

    pub fn logits(&self, x: &Matrix) -> Vec<f64> {
        let o = self.arch.output_offset();
        let hd = self.arch.penultimate_dim();
        let (w, b) = (&self.params[o..o + hd], self.params[o + hd]);
        self.penultimate(x)
            .iter()
            .map(|h| b + h.iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    pub fn scores(&self, x: &Matrix) -> Vec<f64> {
        self.logits(x).into_iter().map(sigmoid).collect()
    }

    /// Mean cross-entropy in inference mode.
    pub fn loss(&self, x: &Matrix, y: &[u8]) -> f64 {
        let l = self.logits(x);
        l.iter().zip(y).map(|(&z, &t)| bce(z, t)).sum::<f64>() / l.len().max(1) as f64
    }

    /// Training-mode forward and backward pass over a batch. Returns the mean
    /// loss, the gradient in flat order (zero for running statistics) and the
    /// per-layer batch mean and biased variance.
    fn forward_backward(&self, x: &Matrix, y: &[u8], mut dropout: Option<&mut Rng>) -> (f64, Vec<f64>, Vec<(Vec<f64>, Vec<f64>)>) {
        let p = &self.params;
        let m = x.rows();
        let mf = m as f64;
        let layers = self.arch.layers();
        let mut caches = Vec::with_capacity(layers.len());
        let mut stats = Vec::with_capacity(layers.len());
        let mut h = x.as_slice().to_vec();
        for s in &layers {
            let (nin, o) = (s.nin, s.nout);
            let mut z = vec![0.0; m * o];
            for i in 0..m {
                let hi = &h[i * nin..(i + 1) * nin];
                for j in 0..o {
                    let w = &p[s.w + j * nin..s.w + (j + 1) * nin];
                    z[i * o + j] = p[s.b + j] + w.iter().zip(hi).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let mut mean = vec![0.0; o];
            let mut var = vec![0.0; o];
            for i in 0..m {
                for j in 0..o {
                    mean[j] += z[i * o + j];
                }
            }
            mean.iter_mut().for_each(|v| *v /= mf);
            for i in 0..m {
                for j in 0..o {
                    var[j] += (z[i * o + j] - mean[j]).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v /= mf);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = vec![0.0; m * o];
            let mut bn_out = vec![0.0; m * o];
            let mut mask = vec![1.0; m * o];
            let mut next = vec![0.0; m * o];
            let rate = self.arch.dropout;
            for i in 0..m {
                for j in 0..o {
                    let k = i * o + j;
                    xhat[k] = (z[k] - mean[j]) * inv_std[j];
                    bn_out[k] = p[s.gamma + j] * xhat[k] + p[s.beta + j];
                    if let Some(rng) = dropout.as_deref_mut() {
                        if rate > 0.0 {
                            mask[k] = if rng.random::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) };
                        }
                    }
                    next[k] = bn_out[k].max(0.0) * mask[k];
                }
            }
            caches.push(Cache {
                input: std::mem::replace(&mut h, next),
                xhat,
                inv_std,
                bn_out,
                mask,
            });
            stats.push((mean, var));
        }

        let mut grad = vec![0.0; p.len()];
        let off = self.arch.output_offset();
        let hd = self.arch.penultimate_dim();
        let mut loss = 0.0;
        let mut dh = vec![0.0; m * hd];
        for i in 0..m {
            let hi = &h[i * hd..(i + 1) * hd];
            let z = p[off + hd] + hi.iter().zip(&p[off..off + hd]).map(|(a, b)| a * b).sum::<f64>();
            loss += bce(z, y[i]);
            let g = (sigmoid(z) - y[i] as f64) / mf;
            for j in 0..hd {
                grad[off + j] += g * hi[j];
                dh[i * hd + j] = g * p[off + j];
            }
            grad[off + hd] += g;
        }

        for (s, c) in layers.iter().zip(&caches).rev() {
            let (nin, o) = (s.nin, s.nout);
            let mut dxhat = vec![0.0; m * o];
            let mut sum_dxhat = vec![0.0; o];
            let mut sum_dxhat_xhat = vec![0.0; o];
            for i in 0..m {
                for j in 0..o {
                    let k = i * o + j;
                    let dbn = if c.bn_out[k] > 0.0 { dh[k] * c.mask[k] } else { 0.0 };
                    grad[s.gamma + j] += dbn * c.xhat[k];
                    grad[s.beta + j] += dbn;
                    dxhat[k] = dbn * p[s.gamma + j];
                    sum_dxhat[j] += dxhat[k];
                    sum_dxhat_xhat[j] += dxhat[k] * c.xhat[k];
                }
            }
            let mut din = vec![0.0; m * nin];
            for i in 0..m {
                let xi = &c.input[i * nin..(i + 1) * nin];
                for j in 0..o {
                    let k = i * o + j;
                    let dz = c.inv_std[j] / mf * (mf * dxhat[k] - sum_dxhat[j] - c.xhat[k] * sum_dxhat_xhat[j]);
                    grad[s.b + j] += dz;
                    let w = s.w + j * nin;
                    for t in 0..nin {
                        grad[w + t] += dz * xi[t];
                        din[i * nin + t] += dz * p[w + t];
                    }
                }
            }
            dh = din;
        }
        (loss / mf, grad, stats)
    }

    /// One SGD step on a batch, including the running-statistics update.
    fn step(&mut self, x: &Matrix, y: &[u8], lr: f64, rng: &mut Rng) -> f64 {
        let (loss, grad, stats) = self.forward_backward(x, y, Some(rng));
        for (v, g) in self.params.iter_mut().zip(&grad) {
            *v -= lr * g;
        }
        let m = x.rows() as f64;
        if m > 1.0 {
            for (s, (mean, var)) in self.arch.layers().iter().zip(stats) {
                for j in 0..s.nout {
                    let rm = &mut self.params[s.rmean + j];
                    *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * mean[j];
                    let rv = &mut self.params[s.rvar + j];
                    *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * var[j] * m / (m - 1.0);
                }
            }
        }
        loss
    }

    /// Runs `epochs` shuffled passes of mini-batch SGD. A trailing batch of a
    /// single row is merged into the previous batch. Returns the mean batch
    /// loss of the last epoch. A zero learning rate freezes the running
    /// statistics too, so the network is left untouched.
    pub fn train_epochs(&mut self, x: &Matrix, y: &[u8], lr: f64, batch_size: usize, epochs: usize, rng: &mut Rng) -> Result<f64> {
        let n = x.rows();
        let mut last = 0.0;
        if lr == 0.0 && epochs > 0 {
            return Ok(self.loss(x, y));
        }
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..n).collect();
            fisher_yates(&mut order, rng);
            let mut batches: Vec<&[usize]> = order.chunks(batch_size.max(1)).collect();
            if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
                let k = batches.len();
                let start = (k - 2) * batch_size;
                batches.truncate(k - 2);
                batches.push(&order[start..]);
            }
            let mut total = 0.0;
            for b in &batches {
                let xb = x.select_rows(b);
                let yb: Vec<u8> = b.iter().map(|&i| y[i]).collect();
                total += self.step(&xb, &yb, lr, rng);
            }
            last = total / batches.len().max(1) as f64;
            if !last.is_finite() || self.params.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("mlp training loss".into()));
            }
        }
        Ok(last)
    }

    /// Trains from a fresh initialization with early stopping on validation
    /// loss; the best epoch's weights are returned.
    pub fn train(
        arch: &MlpArchitecture,
        cfg: &MlpTraining,
        x: &Matrix,
        y: &[u8],
        xv: &Matrix,
        yv: &[u8],
        seed: u64,
    ) -> Result<(Mlp, Vec<EpochLog>)> {
        if x.cols() != arch.input_dim || xv.cols() != arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: arch.input_dim,
                found: if x.cols() != arch.input_dim { x.cols() } else { xv.cols() },
            });
        }
        if xv.rows() == 0 {
            return Err(Error::Invalid("mlp needs a non-empty validation set".into()));
        }
        let mut net = Mlp::init(arch, derive_seed(seed, &[0]));
        let mut rng = seeded(derive_seed(seed, &[1]));
        let mut best = net.clone();
        let mut best_loss = net.loss(xv, yv);
        let mut wait = 0;
        let mut log = Vec::new();
        for epoch in 0..cfg.max_epochs {
            let train_loss = net.train_epochs(x, y, cfg.lr, cfg.batch_size, 1, &mut rng)?;
            let val_loss = net.loss(xv, yv);
            if !val_loss.is_finite() {
                return Err(Error::NonFinite(format!("mlp validation loss at epoch {epoch}")));
            }
            log.push(EpochLog {
                epoch,
                train_loss,
                val_loss,
            });
            if val_loss < best_loss {
                best_loss = val_loss;
                best = net.clone();
                wait = 0;
            } else {
                wait += 1;
                if wait >= cfg.patience {
                    break;
                }
            }
        }
        Ok((best, log))
    }
}

/// Exact gradient of the mean cross-entropy over `(x, y)` with batch
/// statistics and dropout disabled. Returns `(loss, gradient)` in flat order.
pub fn mlp_gradient(arch: &MlpArchitecture, params: &[f64], x: &Matrix, y: &[u8]) -> Result<(f64, Vec<f64>)> {
    let net = Mlp::from_params(arch, params.to_vec())?;
    if x.cols() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            found: x.cols(),
        });
    }
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::Invalid("gradient batch needs matching, non-empty x and y".into()));
    }
    let (loss, grad, _) = net.forward_backward(x, y, None);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("mlp forward pass".into()));
    }
    Ok((loss, grad))
}
