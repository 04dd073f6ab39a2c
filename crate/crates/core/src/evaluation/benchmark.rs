use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{above_chance, auc, chance_f1, confusion_metrics};
use super::report::{BenchmarkReport, MetricRecord};
use crate::corpus::{load_manifest, person_split, DatasetManifest, DEFAULT_RATIOS};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::federated::{partition_by_participant, run_federated, RoundConfig};
use crate::models::{fit, threshold_scores, Family, Hyperparams, ModelSpec, TrainedModel};
use crate::pipeline::{extract_features, load_sessions, FeatureConfig, PartitionedData};
use crate::tuning::{federated_search, grid_search_cv, nn_grid_search, FederatedSpace, Grid, ModelChoice, TraceRow};
use crate::windowing::SamplingMode;

/// Prevalence used as the chance F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChanceBasis {
    #[default]
    TestSplit,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub manifests: Vec<PathBuf>,
    pub modes: Vec<SamplingMode>,
    pub models: Vec<ModelChoice>,
    pub tuning: bool,
    pub seeds: Vec<u64>,
    pub split_seed: u64,
    pub features: FeatureConfig,
    /// Fixed hyperparameters per model name, applied under any tuned values.
    pub hyperparams: BTreeMap<String, Hyperparams>,
    pub federated: RoundConfig,
    pub search_budget: usize,
    pub chance: ChanceBasis,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            manifests: Vec::new(),
            modes: vec![SamplingMode::Pre],
            models: vec![ModelChoice::Family(Family::Logreg)],
            tuning: false,
            seeds: (0..5).collect(),
            split_seed: 0,
            features: FeatureConfig::default(),
            hyperparams: BTreeMap::new(),
            federated: RoundConfig::default(),
            search_budget: 20,
            chance: ChanceBasis::TestSplit,
        }
    }
}

impl BenchmarkConfig {
    /// Checks everything that can be checked without reading stream files.
    pub fn validate(&self) -> Result<()> {
        if self.manifests.is_empty() {
            return Err(Error::Invalid("no manifests configured".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Invalid("seed list is empty".into()));
        }
        if self.modes.is_empty() || self.models.is_empty() {
            return Err(Error::Invalid("need at least one sampling mode and one model".into()));
        }
        if self.search_budget == 0 {
            return Err(Error::Invalid("search_budget must be at least 1".into()));
        }
        self.features.frames.validate()?;
        self.federated.validate()?;
        let names: Vec<String> = self.models.iter().map(|m| m.name()).collect();
        for (name, hp) in &self.hyperparams {
            let choice: ModelChoice = name.parse()?;
            if !names.contains(name) {
                return Err(Error::Invalid(format!("hyperparameters given for {name}, which is not benchmarked")));
            }
            if let Some(base) = choice.base_spec() {
                ModelSpec {
                    hyperparams: base.hyperparams.merged(hp),
                    ..base
                }
                .validate()?;
            }
        }
        Ok(())
    }

    fn spec_for(&self, choice: ModelChoice) -> Option<ModelSpec> {
        let mut spec = choice.base_spec()?;
        if let Some(hp) = self.hyperparams.get(&choice.name()) {
            spec.hyperparams = spec.hyperparams.merged(hp);
        }
        Some(spec)
    }
}

/// A cell that could not produce a record. `seed` is `None` when the whole
/// (dataset, model, mode) failed before any seed ran.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellFailure {
    pub dataset: String,
    pub model: String,
    pub mode: SamplingMode,
    pub seed: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedChoice {
    pub dataset: String,
    pub model: String,
    pub mode: SamplingMode,
    pub hyperparams: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestMetrics {
    pub f1_mw: f64,
    pub ac: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub accuracy: f64,
}

/// Scores `test` at threshold 0.5 against the given chance F1.
pub fn evaluate_model(model: &TrainedModel, test: &FeatureMatrix, chance: f64) -> Result<TestMetrics> {
    let scores = model.predict_scores(&test.x)?;
    let pred = threshold_scores(&scores, 0.5)?;
    let cm = confusion_metrics(&test.labels, &pred)?;
    Ok(TestMetrics {
        f1_mw: cm.f1,
        ac: above_chance(cm.f1, chance, 1.0)?,
        precision: cm.precision,
        recall: cm.recall,
        auc: auc(&test.labels, &scores)?,
        accuracy: cm.accuracy,
    })
}

#[derive(Debug, Clone)]
enum Plan {
    Classic(ModelSpec),
    Federated(RoundConfig, crate::federated::Strategy),
}

struct Prepared {
    dataset: String,
    mode: SamplingMode,
    data: PartitionedData,
    chance: f64,
}

fn prepare(manifest: &DatasetManifest, cfg: &BenchmarkConfig, modes: &[SamplingMode]) -> Vec<(SamplingMode, Result<Prepared>)> {
    let loaded = load_sessions(manifest).and_then(|sessions| {
        let split = person_split(&manifest.participant_ids(), DEFAULT_RATIOS, cfg.split_seed)?;
        Ok((sessions, split))
    });
    modes
        .iter()
        .map(|&mode| {
            let r = loaded.as_ref().map_err(|e| Error::Invalid(e.to_string())).and_then(|(sessions, split)| {
                let ex = extract_features(manifest, sessions, mode, &cfg.features, &split.train, cfg.split_seed)?;
                let data = PartitionedData::new(&ex.features, split);
                let prevalence = match cfg.chance {
                    ChanceBasis::TestSplit => data.test().prevalence(),
                    ChanceBasis::Dataset => ex.features.prevalence(),
                };
                Ok(Prepared {
                    dataset: manifest.dataset_id.clone(),
                    mode,
                    data,
                    chance: chance_f1(prevalence)?,
                })
            });
            (mode, r)
        })
        .collect()
}

fn plan(cfg: &BenchmarkConfig, prep: &Prepared, choice: ModelChoice) -> Result<(Plan, Option<TunedChoice>, Vec<TraceRow>)> {
    let view = prep.data.tuning_view();
    let tuned = |hp: String, score: f64| TunedChoice {
        dataset: prep.dataset.clone(),
        model: choice.name(),
        mode: prep.mode,
        hyperparams: hp,
        score,
    };
    match choice {
        ModelChoice::Federated(strategy) => {
            if !cfg.tuning {
                return Ok((Plan::Federated(cfg.federated.clone(), strategy), None, Vec::new()));
            }
            let space = FederatedSpace::standard(strategy);
            let r = federated_search(&space, &cfg.federated, strategy, view, cfg.search_budget, 0)?;
            let t = tuned(r.best.label(), r.score);
            Ok((Plan::Federated(r.best, strategy), Some(t), r.trace))
        }
        _ => {
            let spec = cfg.spec_for(choice).expect("classic model");
            if !cfg.tuning {
                return Ok((Plan::Classic(spec), None, Vec::new()));
            }
            let grid = Grid::standard(choice);
            let r = if spec.family == Family::Mlp {
                nn_grid_search(&spec, &grid, view, &[0, 1, 2])?
            } else {
                grid_search_cv(&spec, &grid, view, 5, 0)?
            };
            let t = tuned(r.best.label(), r.score);
            let spec = ModelSpec {
                hyperparams: spec.hyperparams.merged(&r.best),
                ..spec
            };
            Ok((Plan::Classic(spec), Some(t), r.trace))
        }
    }
}

fn run_cell(prep: &Prepared, plan: &Plan, seed: u64) -> Result<TestMetrics> {
    let data = &prep.data;
    let model = match plan {
        Plan::Classic(spec) => {
            let spec = spec.clone().with_seed(seed);
            let val = (spec.family == Family::Mlp).then(|| data.val());
            fit(&spec, data.train(), val)?
        }
        Plan::Federated(rc, strategy) => {
            let rc = RoundConfig { seed, ..rc.clone() };
            let shards = partition_by_participant(data.train())?;
            run_federated(&shards, data.val(), &rc, *strategy)?.model
        }
    };
    evaluate_model(&model, data.test(), prep.chance)
}

/// Runs every (dataset, mode, model, seed) cell. Per-cell errors become
/// [`CellFailure`]s; only configuration errors abort the run.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let manifests = cfg
        .manifests
        .iter()
        .map(|p| load_manifest(p))
        .collect::<Result<Vec<_>>>()?;
    let mut modes = cfg.modes.clone();
    modes.sort();
    modes.dedup();
    let mut models = cfg.models.clone();
    models.sort_by_key(|m| m.name());
    models.dedup();

    let mut failures = Vec::new();
    let fail = |dataset: &str, model: &str, mode, seed, e: &Error| CellFailure {
        dataset: dataset.to_string(),
        model: model.to_string(),
        mode,
        seed,
        error: e.to_string(),
    };
    let mut prepared = Vec::new();
    for m in &manifests {
        for (mode, r) in prepare(m, cfg, &modes) {
            match r {
                Ok(p) => prepared.push(p),
                Err(e) => {
                    warn!("{} ({mode}): {e}", m.dataset_id);
                    for c in &models {
                        failures.push(fail(&m.dataset_id, &c.name(), mode, None, &e));
                    }
                }
            }
        }
    }

    let plans: Vec<(usize, ModelChoice, Result<(Plan, Option<TunedChoice>, Vec<TraceRow>)>)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(i, _)| models.iter().map(move |&c| (i, c)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, c)| (i, c, plan(cfg, &prepared[i], c)))
        .collect();

    let mut tuned = Vec::new();
    let mut trace = Vec::new();
    let mut cells = Vec::new();
    for (i, c, r) in plans {
        let p = &prepared[i];
        match r {
            Ok((plan, t, tr)) => {
                tuned.extend(t);
                trace.extend(tr);
                for &seed in &cfg.seeds {
                    cells.push((i, c, plan.clone(), seed));
                }
            }
            Err(e) => failures.push(fail(&p.dataset, &c.name(), p.mode, None, &e)),
        }
    }
    info!("running {} benchmark cells", cells.len());
    let results: Vec<(usize, ModelChoice, u64, Result<TestMetrics>)> = cells
        .into_par_iter()
        .map(|(i, c, plan, seed)| (i, c, seed, run_cell(&prepared[i], &plan, seed)))
        .collect();

    let mut records = Vec::new();
    for (i, c, seed, r) in results {
        let p = &prepared[i];
        match r {
            Ok(m) => records.push(MetricRecord {
                dataset: p.dataset.clone(),
                model: c.name(),
                mode: p.mode,
                seed,
                f1_mw: m.f1_mw,
                ac: m.ac,
                precision: m.precision,
                recall: m.recall,
                auc: m.auc,
                accuracy: m.accuracy,
                chance: p.chance,
                n_test: p.data.test().len(),
            }),
            Err(e) => failures.push(fail(&p.dataset, &c.name(), p.mode, Some(seed), &e)),
        }
    }
    let mut report = BenchmarkReport::from_records(records, failures);
    tuned.sort_by(|a: &TunedChoice, b| (&a.dataset, &a.model, a.mode).cmp(&(&b.dataset, &b.model, b.mode)));
    report.tuned = tuned;
    report.trace = trace;
    Ok(report)
}
