//! Hyperparameter search: participant-grouped k-fold grid search for the
//! classic families, a multi-seed grid on the validation set for the MLP and
//! seeded random search for federated configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::debug;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluation::confusion_metrics;
use crate::federated::{partition_by_participant, run_federated, RoundConfig, Strategy};
use crate::models::{fit, threshold_scores, Family, HyperValue, Hyperparams, ModelSpec};
use crate::pipeline::TuningView;
use crate::rng::{fisher_yates, seeded};

/// A benchmarked model: a zoo family, the second-order boosting variant, or a
/// federated strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelChoice {
    Family(Family),
    Xgboost,
    Federated(Strategy),
}

impl ModelChoice {
    pub fn name(self) -> String {
        match self {
            ModelChoice::Family(f) => f.as_str().to_string(),
            ModelChoice::Xgboost => "xgboost".into(),
            ModelChoice::Federated(s) => s.as_str().to_string(),
        }
    }

    /// Family and fixed hyperparameters of a non-federated choice.
    pub fn base_spec(self) -> Option<ModelSpec> {
        match self {
            ModelChoice::Family(f) => Some(ModelSpec::new(f)),
            ModelChoice::Xgboost => Some(ModelSpec::new(Family::Gboost).with("second_order", true)),
            ModelChoice::Federated(_) => None,
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xgboost" => Ok(ModelChoice::Xgboost),
            "fedavg" | "turbosvm" => Ok(ModelChoice::Federated(s.parse()?)),
            _ => Ok(ModelChoice::Family(s.parse()?)),
        }
    }
}

impl Serialize for ModelChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for ModelChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Named value lists; points enumerate row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<HyperValue>)>,
}

fn axis<T: Into<HyperValue> + Clone>(name: &str, values: &[T]) -> (String, Vec<HyperValue>) {
    (name.to_string(), values.iter().cloned().map(Into::into).collect())
}

fn class_weight() -> (String, Vec<HyperValue>) {
    ("class_weight".into(), vec![HyperValue::Null, "balanced".into()])
}

fn max_depth_open() -> (String, Vec<HyperValue>) {
    ("max_depth".into(), vec![HyperValue::Null, 10.into(), 20.into(), 30.into()])
}

impl Grid {
    pub fn new(axes: Vec<(String, Vec<HyperValue>)>) -> Grid {
        Grid { axes }
    }

    /// Default search ranges for a model.
    pub fn standard(choice: ModelChoice) -> Grid {
        let axes = match choice {
            ModelChoice::Family(Family::SvmLinear) => vec![axis("C", &[0.1, 1.0, 10.0, 100.0]), class_weight()],
            ModelChoice::Family(Family::SvmRbf) => vec![
                axis("C", &[0.1, 1.0, 10.0, 100.0]),
                (
                    "gamma".into(),
                    vec!["scale".into(), "auto".into(), 0.001.into(), 0.01.into(), 0.1.into()],
                ),
                class_weight(),
            ],
            ModelChoice::Family(Family::Logreg) => {
                vec![axis("C", &[0.1, 1.0, 10.0]), axis("penalty", &["l1", "l2"]), class_weight()]
            }
            ModelChoice::Family(Family::GaussianNb) => vec![axis("var_smoothing", &[1e-9, 1e-8, 1e-7, 1e-6])],
            ModelChoice::Family(Family::Knn) => vec![
                axis("n_neighbors", &[3, 5, 7, 9]),
                axis("metric", &["euclidean", "manhattan"]),
                axis("weights", &["uniform", "distance"]),
            ],
            ModelChoice::Family(Family::RandomForest) => vec![
                axis("n_estimators", &[100, 200, 300]),
                max_depth_open(),
                axis("min_samples_split", &[2, 5, 10]),
                class_weight(),
            ],
            ModelChoice::Family(Family::Tree) => vec![
                max_depth_open(),
                axis("min_samples_split", &[2, 5, 10]),
                axis("min_samples_leaf", &[1, 2, 4]),
                class_weight(),
            ],
            ModelChoice::Family(Family::Gboost) => vec![
                axis("n_estimators", &[100, 200]),
                axis("max_depth", &[3, 6, 9]),
                axis("learning_rate", &[0.01, 0.1, 0.3]),
                axis("subsample", &[0.8, 1.0]),
            ],
            ModelChoice::Xgboost => vec![
                axis("n_estimators", &[100, 200]),
                axis("max_depth", &[3, 6, 9]),
                axis("learning_rate", &[0.01, 0.1, 0.3]),
                axis("subsample", &[0.8, 1.0]),
                axis("colsample", &[0.8, 1.0]),
            ],
            ModelChoice::Family(Family::Adaboost) => {
                vec![axis("n_estimators", &[50, 100, 200]), axis("learning_rate", &[0.01, 0.1, 0.3])]
            }
            ModelChoice::Family(Family::Mlp) => vec![axis("lr", &[1e-3, 1e-4, 1e-5]), axis("batch_size", &[4, 8, 16])],
            ModelChoice::Federated(_) => Vec::new(),
        };
        Grid { axes }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.1.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<Hyperparams> {
        let mut out = vec![Hyperparams::new()];
        for (name, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|h| {
                    values.iter().map(move |v| {
                        let mut h = h.clone();
                        h.set(name, v.clone());
                        h
                    })
                })
                .collect();
        }
        out
    }
}

/// Fold index per sample: seeded shuffle of `0..n`, then contiguous folds,
/// the first `n % k` of size `ceil(n / k)`.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(Error::Invalid(format!("k-fold needs 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    fisher_yates(&mut order, &mut seeded(seed));
    let (base, extra) = (n / k, n % k);
    let mut fold = vec![0; n];
    let mut pos = 0;
    for f in 0..k {
        let size = base + (f < extra) as usize;
        for &i in &order[pos..pos + size] {
            fold[i] = f;
        }
        pos += size;
    }
    Ok(fold)
}

/// One evaluation of the search: grid point (or draw) and fold or seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub family: String,
    pub grid_point: String,
    pub fold_or_seed: usize,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub best: Hyperparams,
    pub score: f64,
    pub index: usize,
    pub trace: Vec<TraceRow>,
}

fn mw_f1(spec: &ModelSpec, train: &FeatureMatrix, val: Option<&FeatureMatrix>, eval: &FeatureMatrix) -> Result<f64> {
    let m = fit(spec, train, val)?;
    let pred = threshold_scores(&m.predict_scores(&eval.x)?, 0.5)?;
    Ok(confusion_metrics(&eval.labels, &pred)?.f1)
}

/// Reduces per-point scores (in enumeration order) to the first maximum.
fn argmax(points: Vec<Hyperparams>, scores: Vec<Result<f64>>, trace: Vec<TraceRow>) -> Result<TuningResult> {
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for (i, s) in scores.into_iter().enumerate() {
        match s {
            Ok(v) if best.is_none_or(|b| v > b.1) => best = Some((i, v)),
            Ok(_) => {}
            Err(e) => {
                debug!("grid point {i} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((i, score)) => Ok(TuningResult {
            best: points[i].clone(),
            score,
            index: i,
            trace,
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Invalid("empty grid".into()))),
    }
}

/// Scores every grid point by mean held-out MW-F1 over `k` participant-grouped
/// folds of train+val. `base` supplies fixed keys merged under each point.
pub fn grid_search_cv(base: &ModelSpec, grid: &Grid, view: TuningView<'_>, k: usize, seed: u64) -> Result<TuningResult> {
    let points = grid.points();
    if grid.is_empty() {
        return Err(Error::Invalid("empty grid".into()));
    }
    let data = view.combined()?;
    let mut ids: Vec<String> = data.participants.clone();
    ids.sort();
    ids.dedup();
    let folds = kfold_indices(ids.len(), k, seed)?;
    let fold_of: BTreeMap<&str, usize> = ids.iter().map(String::as_str).zip(folds).collect();
    let splits: Vec<(FeatureMatrix, FeatureMatrix)> = (0..k)
        .map(|f| {
            let (tr, te): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| fold_of[data.participants[i].as_str()] != f);
            (data.select_rows(&tr), data.select_rows(&te))
        })
        .collect();
    let family = base.family.to_string();
    let per_point: Vec<(Result<f64>, Vec<TraceRow>)> = points
        .par_iter()
        .map(|hp| {
            let spec = ModelSpec {
                hyperparams: base.hyperparams.merged(hp),
                ..base.clone()
            };
            let mut rows = Vec::new();
            let mut total = 0.0;
            for (f, (tr, te)) in splits.iter().enumerate() {
                let v = match mw_f1(&spec, tr, Some(te), te) {
                    Ok(v) => v,
                    Err(e) => return (Err(e), rows),
                };
                rows.push(TraceRow {
                    family: family.clone(),
                    grid_point: hp.label(),
                    fold_or_seed: f,
                    metric: v,
                });
                total += v;
            }
            (Ok(total / k as f64), rows)
        })
        .collect();
    let (scores, traces): (Vec<_>, Vec<_>) = per_point.into_iter().unzip();
    argmax(points, scores, traces.into_iter().flatten().collect())
}

/// Trains every grid point with each seed on train and ranks by mean
/// validation MW-F1.
pub fn nn_grid_search(base: &ModelSpec, grid: &Grid, view: TuningView<'_>, seeds: &[u64]) -> Result<TuningResult> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::Invalid("empty grid or seed list".into()));
    }
    if view.val().is_empty() {
        return Err(Error::Invalid("neural grid search needs a validation set".into()));
    }
    let points = grid.points();
    let family = base.family.to_string();
    let per_point: Vec<(Result<f64>, Vec<TraceRow>)> = points
        .par_iter()
        .map(|hp| {
            let mut rows = Vec::new();
            let mut total = 0.0;
            for &seed in seeds {
                let spec = ModelSpec {
                    hyperparams: base.hyperparams.merged(hp),
                    seed,
                    ..base.clone()
                };
                let v = match mw_f1(&spec, view.train(), Some(view.val()), view.val()) {
                    Ok(v) => v,
                    Err(e) => return (Err(e), rows),
                };
                rows.push(TraceRow {
                    family: family.clone(),
                    grid_point: hp.label(),
                    fold_or_seed: seed as usize,
                    metric: v,
                });
                total += v;
            }
            (Ok(total / seeds.len() as f64), rows)
        })
        .collect();
    let (scores, traces): (Vec<_>, Vec<_>) = per_point.into_iter().unzip();
    argmax(points, scores, traces.into_iter().flatten().collect())
}

/// Finite federated search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedSpace {
    pub local_epochs: Vec<usize>,
    pub client_fraction: Vec<f64>,
    pub batch: Vec<usize>,
    pub lr: Vec<f64>,
    pub logits_lr: Vec<f64>,
}

impl FederatedSpace {
    pub fn standard(strategy: Strategy) -> FederatedSpace {
        FederatedSpace {
            local_epochs: vec![5, 15],
            client_fraction: vec![0.5, 1.0],
            batch: vec![4, 8, 16],
            lr: vec![1e-2, 1e-3, 1e-4],
            logits_lr: match strategy {
                Strategy::Fedavg => Vec::new(),
                Strategy::Turbosvm => vec![1e-3, 1e-4, 1e-5],
            },
        }
    }

    /// Every configuration, row-major in field order, on top of `base`.
    pub fn configs(&self, base: &RoundConfig) -> Vec<RoundConfig> {
        let logits: Vec<f64> = if self.logits_lr.is_empty() {
            vec![base.logits_lr]
        } else {
            self.logits_lr.clone()
        };
        let mut out = Vec::new();
        for &local_epochs in &self.local_epochs {
            for &client_fraction in &self.client_fraction {
                for &batch in &self.batch {
                    for &lr in &self.lr {
                        for &logits_lr in &logits {
                            out.push(RoundConfig {
                                local_epochs,
                                client_fraction,
                                batch,
                                lr,
                                logits_lr,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedResult {
    pub best: RoundConfig,
    pub score: f64,
    pub trace: Vec<TraceRow>,
}

/// Seeded random search: `min(budget, |space|)` distinct configurations,
/// each trained on the train shards and scored by validation MW-F1. Ties go
/// to the earliest configuration in enumeration order.
pub fn federated_search(
    space: &FederatedSpace,
    base: &RoundConfig,
    strategy: Strategy,
    view: TuningView<'_>,
    budget: usize,
    seed: u64,
) -> Result<FederatedResult> {
    if budget == 0 {
        return Err(Error::Invalid("search budget must be at least 1".into()));
    }
    let all = space.configs(base);
    if all.is_empty() {
        return Err(Error::Invalid("empty federated search space".into()));
    }
    let mut picked = sample(&mut seeded(seed), all.len(), budget.min(all.len())).into_vec();
    picked.sort_unstable();
    let shards = partition_by_participant(view.train())?;
    let results: Vec<Result<f64>> = picked
        .par_iter()
        .map(|&i| {
            let run = run_federated(&shards, view.val(), &all[i], strategy)?;
            let pred = threshold_scores(&run.model.predict_scores(&view.val().x)?, 0.5)?;
            Ok(confusion_metrics(&view.val().labels, &pred)?.f1)
        })
        .collect();
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for (&i, r) in picked.iter().zip(results) {
        match r {
            Ok(v) => {
                trace.push(TraceRow {
                    family: strategy.to_string(),
                    grid_point: all[i].label(),
                    fold_or_seed: seed as usize,
                    metric: v,
                });
                if best.is_none_or(|b| v > b.1) {
                    best = Some((i, v));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((i, score)) => Ok(FederatedResult {
            best: all[i].clone(),
            score,
            trace,
        }),
        None => Err(last_err.expect("at least one evaluation")),
    }
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let err = |e: csv::Error| Error::Invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["family", "grid_point", "fold_or_seed", "metric"]).map_err(err)?;
    for r in rows {
        w.write_record([r.family.clone(), r.grid_point.clone(), r.fold_or_seed.to_string(), format!("{:.6}", r.metric)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
