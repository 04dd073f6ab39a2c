//! Federated training simulation: one client per participant, local MLP
//! updates, and FedAvg or TurboSVM-style server aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::debug;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::evaluation::confusion_metrics;
use crate::models::svm::smo;
use crate::models::{
    threshold_scores, FittedParams, Hyperparams, Mlp, MlpArchitecture, MlpTraining, ModelSpec,
    Family, Standardizer, TrainedModel,
};
use crate::rng::{derive_seed, seeded, str_tag};

/// Training rows of one participant.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub participant: String,
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl ClientShard {
    pub fn count(&self) -> usize {
        self.y.len()
    }
}

/// One shard per participant, sorted by participant ID; row order inside a
/// shard follows the input.
pub fn partition_by_participant(train: &FeatureMatrix) -> Result<Vec<ClientShard>> {
    if train.is_empty() {
        return Err(Error::Invalid("cannot partition an empty training set".into()));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in train.participants.iter().enumerate() {
        groups.entry(p.as_str()).or_default().push(i);
    }
    Ok(groups
        .into_iter()
        .map(|(p, idx)| ClientShard {
            participant: p.to_string(),
            x: train.x.select_rows(&idx),
            y: idx.iter().map(|&i| train.labels[i]).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Fedavg,
    Turbosvm,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Fedavg => "fedavg",
            Strategy::Turbosvm => "turbosvm",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(Strategy::Fedavg),
            "turbosvm" => Ok(Strategy::Turbosvm),
            _ => Err(Error::Invalid(format!("unknown federated strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundConfig {
    pub rounds: usize,
    pub client_fraction: f64,
    pub local_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub server_lr: f64,
    pub logits_lr: f64,
    pub logits_steps: usize,
    pub patience: usize,
    pub hidden_width: usize,
    pub hidden_layers: Option<usize>,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            rounds: 30,
            client_fraction: 1.0,
            local_epochs: 5,
            batch: 8,
            lr: 1e-2,
            server_lr: 1.0,
            logits_lr: 1e-3,
            logits_steps: 10,
            patience: 10,
            hidden_width: 64,
            hidden_layers: None,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "client_fraction must be in (0, 1], got {}",
                self.client_fraction
            )));
        }
        if self.batch == 0 || !(self.lr >= 0.0) || !(self.server_lr >= 0.0) || !(self.logits_lr >= 0.0) {
            return Err(Error::Invalid("federated config needs batch >= 1 and non-negative rates".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, dim: usize) -> MlpArchitecture {
        let t = MlpTraining {
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            dropout: self.dropout,
            ..MlpTraining::default()
        };
        MlpArchitecture::for_dim(dim, &t)
    }

    /// Values reported in model artifacts and tuning traces.
    pub fn hyperparams(&self) -> Hyperparams {
        let mut h = Hyperparams::new();
        h.set("lr", self.lr);
        h.set("batch_size", self.batch);
        h.set("hidden_width", self.hidden_width);
        h.set("hidden_layers", self.hidden_layers);
        h.set("dropout", self.dropout);
        h.set("patience", self.patience);
        h
    }

    pub fn label(&self) -> String {
        format!(
            "rounds={};client_fraction={};local_epochs={};batch={};lr={};server_lr={};logits_lr={}",
            self.rounds, self.client_fraction, self.local_epochs, self.batch, self.lr, self.server_lr, self.logits_lr
        )
    }
}

/// Seed of the local pass of `participant` in `round`.
pub fn local_seed(seed: u64, round: usize, participant: &str) -> u64 {
    derive_seed(seed, &[2, round as u64, str_tag(participant)])
}

/// Seed of the global initialization.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, &[0])
}

/// Copy of the global network advanced by `local_epochs` SGD passes on the shard.
pub fn local_update(global: &Mlp, shard: &ClientShard, cfg: &RoundConfig, round: usize) -> Result<(Mlp, usize)> {
    if global.params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("global parameters before round {round}")));
    }
    let mut net = global.clone();
    let mut rng = seeded(local_seed(cfg.seed, round, &shard.participant));
    net.train_epochs(&shard.x, &shard.y, cfg.lr, cfg.batch, cfg.local_epochs, &mut rng)
        .map_err(|_| Error::NonFinite(format!("local loss of {} in round {round}", shard.participant)))?;
    Ok((net, shard.count()))
}

/// `count / sum(count)` per update.
pub fn fedavg_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn weighted_average(updates: &[(&[f64], f64)]) -> Result<Vec<f64>> {
    let len = updates
        .first()
        .ok_or_else(|| Error::Invalid("no updates to aggregate".into()))?
        .0
        .len();
    let mut out = vec![0.0; len];
    for (p, w) in updates {
        if p.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: p.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Count-weighted elementwise mean of parameter vectors.
pub fn fedavg_aggregate(updates: &[(Vec<f64>, usize)]) -> Result<Vec<f64>> {
    if updates.iter().any(|(_, c)| *c == 0) {
        return Err(Error::Invalid("client updates need a positive count".into()));
    }
    let counts: Vec<usize> = updates.iter().map(|u| u.1).collect();
    let w = fedavg_weights(&counts);
    let pairs: Vec<(&[f64], f64)> = updates.iter().zip(&w).map(|(u, &w)| (u.0.as_slice(), w)).collect();
    weighted_average(&pairs)
}

/// Per-class mean of the activations entering the output unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassEmbedding {
    pub negative: Option<Vec<f64>>,
    pub positive: Option<Vec<f64>>,
}

impl ClassEmbedding {
    pub fn compute(net: &Mlp, x: &Matrix, y: &[u8]) -> ClassEmbedding {
        let h = net.penultimate(x);
        let mean = |label: u8| -> Option<Vec<f64>> {
            let rows: Vec<&Vec<f64>> = h.iter().zip(y).filter(|(_, &l)| l == label).map(|(r, _)| r).collect();
            if rows.is_empty() {
                return None;
            }
            let mut m = vec![0.0; rows[0].len()];
            for r in &rows {
                for (a, b) in m.iter_mut().zip(r.iter()) {
                    *a += b;
                }
            }
            m.iter_mut().for_each(|v| *v /= rows.len() as f64);
            Some(m)
        };
        ClassEmbedding {
            negative: mean(0),
            positive: mean(1),
        }
    }

    fn both(&self) -> Option<(&[f64], &[f64])> {
        Some((self.negative.as_deref()?, self.positive.as_deref()?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub params: Vec<f64>,
    /// Final per-client weights (sum to 1).
    pub weights: Vec<f64>,
    /// True when TurboSVM fell back to plain FedAvg.
    pub fallback: bool,
}

const TURBO_C: f64 = 1e3;

/// Margin-reweighted aggregation.
///
/// 1. A linear max-margin separator is fit over the class embeddings of the
///    clients reporting both classes.
/// 2. Client weight = max(share of support-vector coefficient mass, FedAvg
///    share), renormalized; clients without both classes keep the FedAvg share.
/// 3. The weighted average is applied as a step of `server_lr` from `previous`.
/// 4. The output unit (class rows `+w/2` and `-w/2`) takes `logits_steps`
///    gradient steps of `logits_lr` on the mean hinge loss over the embeddings
///    plus the spreadout penalty `-log ||w||`.
///
/// Fewer than two eligible clients, clients that all report the same
/// embeddings, collapsed class embeddings or an empty support set fall back to
/// exact FedAvg.
pub fn turbosvm_aggregate(
    previous: &[f64],
    arch: &MlpArchitecture,
    updates: &[(Vec<f64>, usize)],
    embeddings: &[ClassEmbedding],
    cfg: &RoundConfig,
) -> Result<Aggregate> {
    if updates.len() != embeddings.len() {
        return Err(Error::DimensionMismatch {
            expected: updates.len(),
            found: embeddings.len(),
        });
    }
    if previous.len() != arch.n_params() {
        return Err(Error::DimensionMismatch {
            expected: arch.n_params(),
            found: previous.len(),
        });
    }
    let counts: Vec<usize> = updates.iter().map(|u| u.1).collect();
    let fed_w = fedavg_weights(&counts);
    let fallback = || -> Result<Aggregate> {
        Ok(Aggregate {
            params: fedavg_aggregate(updates)?,
            weights: fed_w.clone(),
            fallback: true,
        })
    };

    if embeddings.iter().all(|e| e == &embeddings[0]) {
        return fallback();
    }
    let eligible: Vec<usize> = (0..embeddings.len()).filter(|&i| embeddings[i].both().is_some()).collect();
    if eligible.len() < 2 {
        debug!("turbosvm: {} eligible clients, using fedavg", eligible.len());
        return fallback();
    }
    let mut points: Vec<&[f64]> = Vec::new();
    let mut signs = Vec::new();
    let mut owner = Vec::new();
    for &i in &eligible {
        let (neg, pos) = embeddings[i].both().expect("eligible");
        points.extend([neg, pos]);
        signs.extend([-1.0, 1.0]);
        owner.extend([i, i]);
    }
    if points.iter().all(|p| p == &points[0]) {
        return fallback();
    }
    let kernel: Vec<Vec<f64>> = points
        .iter()
        .map(|a| points.iter().map(|b| a.iter().zip(b.iter()).map(|(u, v)| u * v).sum()).collect())
        .collect();
    let sol = smo(&kernel, &signs, &vec![TURBO_C; points.len()], 1e-6, 100_000);
    let mut mass = vec![0.0; updates.len()];
    for (k, &i) in owner.iter().enumerate() {
        mass[i] += sol.alpha[k];
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return fallback();
    }
    let mut weights: Vec<f64> = (0..updates.len())
        .map(|i| if eligible.contains(&i) { (mass[i] / total).max(fed_w[i]) } else { fed_w[i] })
        .collect();
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);

    let pairs: Vec<(&[f64], f64)> = updates.iter().zip(&weights).map(|(u, &w)| (u.0.as_slice(), w)).collect();
    let avg = weighted_average(&pairs)?;
    let mut params: Vec<f64> = previous
        .iter()
        .zip(&avg)
        .map(|(p, a)| p + cfg.server_lr * (a - p))
        .collect();

    let o = arch.output_offset();
    let hd = arch.penultimate_dim();
    let np = points.len() as f64;
    for _ in 0..cfg.logits_steps {
        if cfg.logits_lr == 0.0 {
            break;
        }
        let (w, b) = (&params[o..o + hd], params[o + hd]);
        let mut gw = vec![0.0; hd];
        let mut gb = 0.0;
        for (p, s) in points.iter().zip(&signs) {
            let f = b + p.iter().zip(w).map(|(u, v)| u * v).sum::<f64>();
            if s * f < 1.0 {
                for (g, u) in gw.iter_mut().zip(p.iter()) {
                    *g -= s * u / np;
                }
                gb -= s / np;
            }
        }
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        if norm2 > 0.0 {
            for (g, v) in gw.iter_mut().zip(w) {
                *g -= v / norm2;
            }
        }
        for (k, g) in gw.iter().enumerate() {
            params[o + k] -= cfg.logits_lr * g;
        }
        params[o + hd] -= cfg.logits_lr * gb;
    }
    Ok(Aggregate {
        params,
        weights,
        fallback: false,
    })
}

/// Sorted indices of the clients taking part in `round`.
pub fn sample_clients(n: usize, fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    if k == n {
        return (0..n).collect();
    }
    let mut rng = seeded(derive_seed(seed, &[1, round as u64]));
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub strategy: Strategy,
    pub selected_clients: Vec<String>,
    pub val_loss: f64,
    pub val_f1: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct FederatedRun {
    /// Global model of the best validation round.
    pub model: TrainedModel,
    /// Global parameters after the last executed round.
    pub final_params: Vec<f64>,
    pub best_round: Option<usize>,
    pub log: Vec<RoundLog>,
}

fn standardize_shards(shards: &[ClientShard], st: &Standardizer) -> Result<Vec<ClientShard>> {
    shards
        .iter()
        .map(|s| {
            Ok(ClientShard {
                participant: s.participant.clone(),
                x: st.transform(&s.x)?,
                y: s.y.clone(),
            })
        })
        .collect()
}

/// Runs the simulation with early stopping on validation loss at round
/// granularity. Features are standardized with statistics pooled over all
/// shards.
pub fn run_federated(shards: &[ClientShard], val: &FeatureMatrix, cfg: &RoundConfig, strategy: Strategy) -> Result<FederatedRun> {
    cfg.validate()?;
    let first = shards.first().ok_or_else(|| Error::Invalid("federated run needs at least one shard".into()))?;
    let dim = first.x.cols();
    let mut pooled = first.x.clone();
    let mut labels = first.y.clone();
    for s in &shards[1..] {
        pooled = pooled.vstack(&s.x)?;
        labels.extend_from_slice(&s.y);
    }
    if !pooled.all_finite() {
        return Err(Error::NonFinite("client features contain NaN or infinity".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleClass);
    }
    if val.is_empty() {
        return Err(Error::Invalid("federated run needs a validation set".into()));
    }
    let st = Standardizer::fit(&pooled);
    let local = standardize_shards(shards, &st)?;
    let xv = st.transform(&val.x)?;
    let arch = cfg.architecture(dim);

    let mut global = Mlp::init(&arch, init_seed(cfg.seed));
    let mut best = global.clone();
    let mut best_loss = global.loss(&xv, &val.labels);
    let mut best_round = None;
    let mut wait = 0;
    let mut log = Vec::new();
    for round in 0..cfg.rounds {
        let chosen = sample_clients(local.len(), cfg.client_fraction, cfg.seed, round);
        let results: Vec<Result<(Mlp, usize)>> = chosen
            .par_iter()
            .map(|&i| local_update(&global, &local[i], cfg, round))
            .collect();
        let mut nets = Vec::with_capacity(chosen.len());
        for r in results {
            nets.push(r?);
        }
        let updates: Vec<(Vec<f64>, usize)> = nets.iter().map(|(n, c)| (n.params.clone(), *c)).collect();
        let agg = match strategy {
            Strategy::Fedavg => Aggregate {
                params: fedavg_aggregate(&updates)?,
                weights: fedavg_weights(&updates.iter().map(|u| u.1).collect::<Vec<_>>()),
                fallback: false,
            },
            Strategy::Turbosvm => {
                let emb: Vec<ClassEmbedding> = chosen
                    .iter()
                    .zip(&nets)
                    .map(|(&i, (n, _))| ClassEmbedding::compute(n, &local[i].x, &local[i].y))
                    .collect();
                turbosvm_aggregate(&global.params, &arch, &updates, &emb, cfg)?
            }
        };
        global = Mlp::from_params(&arch, agg.params)?;
        let val_loss = global.loss(&xv, &val.labels);
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss in round {round}")));
        }
        let pred = threshold_scores(&global.scores(&xv), 0.5)?;
        let val_f1 = confusion_metrics(&val.labels, &pred)?.f1;
        log.push(RoundLog {
            round,
            strategy,
            selected_clients: chosen.iter().map(|&i| local[i].participant.clone()).collect(),
            val_loss,
            val_f1,
            fallback: agg.fallback,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best = global.clone();
            best_round = Some(round);
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                break;
            }
        }
    }
    let spec = ModelSpec {
        family: Family::Mlp,
        hyperparams: cfg.hyperparams(),
        seed: cfg.seed,
    };
    let model = TrainedModel::from_parts(spec, dim, (0..dim).collect(), st, FittedParams::Mlp(best));
    Ok(FederatedRun {
        model,
        final_params: global.params,
        best_round,
        log,
    })
}

pub fn write_round_log(path: &Path, log: &[RoundLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Invalid(format!("{}: {e}", path.display()));
    w.write_record(["round", "strategy", "selected_clients", "val_loss", "val_f1"]).map_err(err)?;
    for r in log {
        w.write_record([
            r.round.to_string(),
            r.strategy.to_string(),
            r.selected_clients.join(";"),
            format!("{:.6}", r.val_loss),
            format!("{:.6}", r.val_f1),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windowing::Provenance;

    fn toy(participants: &[(&str, usize)], seed: u64) -> FeatureMatrix {
        use rand::Rng as _;
        let mut rng = seeded(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (p, n) in participants {
            for i in 0..*n {
                let l = (i % 2) as u8;
                let shift = if l == 1 { 1.0 } else { -1.0 };
                rows.push(vec![shift + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
                labels.push(l);
                ids.push(p.to_string());
            }
        }
        let n = labels.len();
        FeatureMatrix::new(
            Matrix::from_rows(&rows).unwrap(),
            labels,
            ids,
            vec![Provenance::Negative; n],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn partition_groups_rows_by_participant() {
        let data = toy(&[("b", 5), ("a", 10), ("c", 5)], 1);
        let shards = partition_by_participant(&data).unwrap();
        let sizes: Vec<(&str, usize)> = shards.iter().map(|s| (s.participant.as_str(), s.count())).collect();
        assert_eq!(sizes, vec![("a", 10), ("b", 5), ("c", 5)]);
        let single = toy(&[("only", 7)], 2);
        let s = partition_by_participant(&single).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].x, single.x);
        assert_eq!(s[0].y, single.labels);
    }

    #[test]
    fn fedavg_weighted_mean() {
        let out = fedavg_aggregate(&[(vec![0.0], 1), (vec![4.0], 3)]).unwrap();
        assert_eq!(out, vec![3.0]);
        assert_eq!(fedavg_aggregate(&[(vec![1.5, -2.0], 7)]).unwrap(), vec![1.5, -2.0]);
        assert!(fedavg_aggregate(&[(vec![1.0], 1), (vec![1.0, 2.0], 1)]).is_err());
        assert!(fedavg_aggregate(&[]).is_err());
    }

    #[test]
    fn fedavg_is_permutation_invariant() {
        let u = vec![(vec![1.0, 2.0], 2), (vec![-3.0, 0.5], 5), (vec![0.25, 8.0], 1)];
        let mut r = u.clone();
        r.reverse();
        let (a, b) = (fedavg_aggregate(&u).unwrap(), fedavg_aggregate(&r).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((fedavg_weights(&[2, 5, 1]).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn client_sampling_uses_the_ceiling() {
        for round in 0..5 {
            let s = sample_clients(4, 0.5, 9, round);
            assert_eq!(s.len(), 2);
            assert_eq!(s, sample_clients(4, 0.5, 9, round));
            assert_eq!(sample_clients(5, 1.0, 9, round), vec![0, 1, 2, 3, 4]);
        }
        assert_eq!(sample_clients(3, 0.5, 1, 0).len(), 2);
    }

    #[test]
    fn local_update_noops() {
        let data = toy(&[("a", 12)], 3);
        let shard = &partition_by_participant(&data).unwrap()[0];
        let arch = RoundConfig::default().architecture(2);
        let global = Mlp::init(&arch, 1);
        let cfg = RoundConfig {
            local_epochs: 0,
            ..RoundConfig::default()
        };
        assert_eq!(local_update(&global, shard, &cfg, 0).unwrap().0, global);
        let cfg = RoundConfig {
            lr: 0.0,
            ..RoundConfig::default()
        };
        assert_eq!(local_update(&global, shard, &cfg, 0).unwrap(), (global.clone(), 12));
        let cfg = RoundConfig::default();
        assert_eq!(local_update(&global, shard, &cfg, 3).unwrap(), local_update(&global, shard, &cfg, 3).unwrap());
    }

    fn arch1() -> MlpArchitecture {
        MlpArchitecture {
            input_dim: 2,
            hidden_layers: 1,
            hidden_width: 1,
            dropout: 0.0,
        }
    }

    #[test]
    fn turbosvm_identical_clients_fall_back_to_fedavg() {
        let arch = arch1();
        let p = Mlp::init(&arch, 5).params;
        let updates = vec![(p.clone(), 3), (p.clone(), 5)];
        let e = ClassEmbedding {
            negative: Some(vec![-0.5]),
            positive: Some(vec![0.5]),
        };
        let agg = turbosvm_aggregate(&vec![0.0; p.len()], &arch, &updates, &[e.clone(), e], &RoundConfig::default()).unwrap();
        assert!(agg.fallback);
        assert_eq!(agg.params, fedavg_aggregate(&updates).unwrap());
    }

    #[test]
    fn turbosvm_zero_rates_return_previous() {
        let arch = arch1();
        let prev = Mlp::init(&arch, 1).params;
        let updates = vec![(Mlp::init(&arch, 2).params, 4), (Mlp::init(&arch, 3).params, 2)];
        let emb = vec![
            ClassEmbedding {
                negative: Some(vec![-1.0]),
                positive: Some(vec![1.0]),
            },
            ClassEmbedding {
                negative: Some(vec![-2.0]),
                positive: Some(vec![3.0]),
            },
        ];
        let cfg = RoundConfig {
            server_lr: 0.0,
            logits_lr: 0.0,
            ..RoundConfig::default()
        };
        let agg = turbosvm_aggregate(&prev, &arch, &updates, &emb, &cfg).unwrap();
        assert!(!agg.fallback);
        assert_eq!(agg.params, prev);
    }

    #[test]
    fn turbosvm_two_separable_clients_share_positive_weight() {
        // 1-D embeddings: client 0 at (-1, +1), client 1 at (-2, +3). The hard
        // margin solution puts its support vectors at -1 and +1 (client 0), so
        // the margin share is (1, 0). The FedAvg floor lifts client 1 to 1/3 and
        // renormalizing (1, 1/3) gives (3/4, 1/4).
        let arch = arch1();
        let updates = vec![(Mlp::init(&arch, 2).params, 4), (Mlp::init(&arch, 3).params, 2)];
        let emb = vec![
            ClassEmbedding {
                negative: Some(vec![-1.0]),
                positive: Some(vec![1.0]),
            },
            ClassEmbedding {
                negative: Some(vec![-2.0]),
                positive: Some(vec![3.0]),
            },
        ];
        let agg = turbosvm_aggregate(&updates[0].0, &arch, &updates, &emb, &RoundConfig::default()).unwrap();
        assert!((agg.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(agg.weights.iter().all(|&w| w > 0.0));
        assert!((agg.weights[0] - 0.75).abs() < 1e-9, "{:?}", agg.weights);
        assert!((agg.weights[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn turbosvm_without_two_eligible_clients_is_flagged() {
        let arch = arch1();
        let updates = vec![(Mlp::init(&arch, 2).params, 4), (Mlp::init(&arch, 3).params, 2)];
        let emb = vec![
            ClassEmbedding {
                negative: Some(vec![-1.0]),
                positive: None,
            },
            ClassEmbedding {
                negative: Some(vec![-2.0]),
                positive: Some(vec![3.0]),
            },
        ];
        let agg = turbosvm_aggregate(&updates[0].0, &arch, &updates, &emb, &RoundConfig::default()).unwrap();
        assert!(agg.fallback);
    }

    #[test]
    fn zero_rounds_return_the_initialization() {
        let data = toy(&[("a", 10), ("b", 10)], 4);
        let val = toy(&[("v", 6)], 5);
        let cfg = RoundConfig {
            rounds: 0,
            ..RoundConfig::default()
        };
        let run = run_federated(&partition_by_participant(&data).unwrap(), &val, &cfg, Strategy::Fedavg).unwrap();
        let FittedParams::Mlp(m) = &run.model.params else {
            panic!("not an mlp")
        };
        assert_eq!(m.params, Mlp::init(&cfg.architecture(2), init_seed(0)).params);
        assert!(run.log.is_empty());
    }

    #[test]
    fn turbosvm_run_is_deterministic() {
        let data = toy(&[("a", 12), ("b", 10), ("c", 14)], 6);
        let val = toy(&[("v", 10)], 7);
        let cfg = RoundConfig {
            rounds: 3,
            local_epochs: 2,
            hidden_width: 8,
            ..RoundConfig::default()
        };
        let shards = partition_by_participant(&data).unwrap();
        let a = run_federated(&shards, &val, &cfg, Strategy::Turbosvm).unwrap();
        let b = run_federated(&shards, &val, &cfg, Strategy::Turbosvm).unwrap();
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.log, b.log);
    }
}
