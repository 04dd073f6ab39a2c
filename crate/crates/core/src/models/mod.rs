//! Classifier zoo behind one fit / score interface.
//!
//! Every family sees standardized inputs (after optional feature selection)
//! and produces positive-class scores in `[0, 1]`.

mod boost;
mod forest;
mod hyper;
mod knn;
mod logreg;
pub mod mlp;
mod nb;
pub(crate) mod svm;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::selection::{anova_f, k_from_fraction, mutual_info, select_top_k};

pub use boost::{AdaBoost, GradientBoosting};
pub use forest::RandomForest;
pub use hyper::{HyperValue, Hyperparams};
pub use knn::Knn;
pub use logreg::LogisticRegression;
pub use mlp::{mlp_gradient, Mlp, MlpArchitecture, MlpTraining};
pub use nb::GaussianNb;
pub use svm::{Platt, SvmLinear, SvmRbf};
pub use tree::{DecisionTree, TreeParams};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logreg,
    GaussianNb,
    Knn,
    Tree,
    RandomForest,
    Gboost,
    Adaboost,
    SvmLinear,
    SvmRbf,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::Logreg,
        Family::GaussianNb,
        Family::Knn,
        Family::Tree,
        Family::RandomForest,
        Family::Gboost,
        Family::Adaboost,
        Family::SvmLinear,
        Family::SvmRbf,
        Family::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Logreg => "logreg",
            Family::GaussianNb => "gaussian_nb",
            Family::Knn => "knn",
            Family::Tree => "tree",
            Family::RandomForest => "random_forest",
            Family::Gboost => "gboost",
            Family::Adaboost => "adaboost",
            Family::SvmLinear => "svm_linear",
            Family::SvmRbf => "svm_rbf",
            Family::Mlp => "mlp",
        }
    }

    /// Hyperparameter keys the family understands (selection keys excluded).
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Family::Logreg => &["C", "penalty", "class_weight", "max_iter", "tol"],
            Family::GaussianNb => &["var_smoothing"],
            Family::Knn => &["n_neighbors", "metric", "weights"],
            Family::Tree => &["max_depth", "min_samples_split", "min_samples_leaf", "class_weight"],
            Family::RandomForest => &["n_estimators", "max_depth", "min_samples_split", "class_weight"],
            Family::Gboost => &[
                "n_estimators",
                "max_depth",
                "learning_rate",
                "subsample",
                "colsample",
                "second_order",
                "reg_lambda",
            ],
            Family::Adaboost => &["n_estimators", "learning_rate"],
            Family::SvmLinear => &["C", "class_weight", "max_iter"],
            Family::SvmRbf => &["C", "gamma", "class_weight", "tol", "max_iter"],
            Family::Mlp => &[
                "lr",
                "batch_size",
                "max_epochs",
                "patience",
                "hidden_width",
                "hidden_layers",
                "dropout",
            ],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown model family {s:?}")))
    }
}

/// Keys accepted by every family to control feature selection.
pub const SELECTION_KEYS: [&str; 3] = ["select", "select_k", "mi_bins"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            hyperparams: Hyperparams::default(),
            seed: 0,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<HyperValue>) -> Self {
        self.hyperparams.set(key, value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for key in self.hyperparams.keys() {
            if !self.family.keys().contains(&key) && !SELECTION_KEYS.contains(&key) {
                return Err(Error::Invalid(format!(
                    "hyperparameter {key:?} is not valid for {}",
                    self.family
                )));
            }
        }
        Ok(())
    }
}

/// Per-feature `(x - mean) / sd` with population statistics; zero-variance
/// columns keep sd = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Standardizer {
        let n = x.rows().max(1) as f64;
        let mut mean = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let sd = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, sd }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.sd[j];
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Logreg(LogisticRegression),
    GaussianNb(GaussianNb),
    Knn(Knn),
    Tree(DecisionTree),
    RandomForest(RandomForest),
    Gboost(GradientBoosting),
    Adaboost(AdaBoost),
    SvmLinear(SvmLinear),
    SvmRbf(SvmRbf),
    Mlp(Mlp),
}

impl FittedParams {
    fn scores(&self, x: &Matrix) -> Vec<f64> {
        match self {
            FittedParams::Logreg(m) => m.scores(x),
            FittedParams::GaussianNb(m) => m.scores(x),
            FittedParams::Knn(m) => m.scores(x),
            FittedParams::Tree(m) => m.scores(x),
            FittedParams::RandomForest(m) => m.scores(x),
            FittedParams::Gboost(m) => m.scores(x),
            FittedParams::Adaboost(m) => m.scores(x),
            FittedParams::SvmLinear(m) => m.scores(x),
            FittedParams::SvmRbf(m) => m.scores(x),
            FittedParams::Mlp(m) => m.scores(x),
        }
    }
}

/// A fitted classifier with its preprocessing, ready to score new windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub input_dim: usize,
    /// Columns kept by feature selection, ascending.
    pub selected: Vec<usize>,
    pub standardizer: Standardizer,
    pub params: FittedParams,
}

fn check_labels(y: &[u8]) -> Result<()> {
    if y.iter().any(|&l| l > 1) {
        return Err(Error::Invalid("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Columns to keep according to the selection keys of `hp`.
pub fn selection_indices(hp: &Hyperparams, x: &Matrix, y: &[u8]) -> Result<Vec<usize>> {
    let d = x.cols();
    let method = hp.text("select", "none")?;
    if method == "none" {
        return Ok((0..d).collect());
    }
    let k = match hp.get("select_k") {
        None | Some(HyperValue::Null) => d,
        Some(HyperValue::Float(f)) => k_from_fraction(*f, d),
        Some(HyperValue::Int(k)) => (*k).clamp(1, d as i64) as usize,
        Some(other) => return Err(Error::Invalid(format!("select_k must be a number, got {other}"))),
    };
    let scores = match method.as_str() {
        "anova_f" => anova_f(x, y)?,
        "mutual_info" => mutual_info(x, y, hp.usize("mi_bins", 10)?)?,
        other => return Err(Error::Invalid(format!("unknown selection method {other:?}"))),
    };
    select_top_k(&scores, k)
}

/// Trains `spec` on `train`. `val` is required for the neural family (early
/// stopping) and ignored otherwise.
pub fn fit(spec: &ModelSpec, train: &FeatureMatrix, val: Option<&FeatureMatrix>) -> Result<TrainedModel> {
    spec.validate()?;
    check_labels(&train.labels)?;
    if !train.x.all_finite() {
        return Err(Error::NonFinite("training features contain NaN or infinity".into()));
    }
    let selected = selection_indices(&spec.hyperparams, &train.x, &train.labels)?;
    let xs = train.x.select_cols(&selected);
    let standardizer = Standardizer::fit(&xs);
    let x = standardizer.transform(&xs)?;
    let y = &train.labels;
    let hp = &spec.hyperparams;
    let params = match spec.family {
        Family::Logreg => FittedParams::Logreg(LogisticRegression::fit(&x, y, hp)?),
        Family::GaussianNb => FittedParams::GaussianNb(GaussianNb::fit(&x, y, hp)?),
        Family::Knn => FittedParams::Knn(Knn::fit(&x, y, hp)?),
        Family::Tree => FittedParams::Tree(DecisionTree::fit_classifier(&x, y, hp, spec.seed)?),
        Family::RandomForest => FittedParams::RandomForest(RandomForest::fit(&x, y, hp, spec.seed)?),
        Family::Gboost => FittedParams::Gboost(GradientBoosting::fit(&x, y, hp, spec.seed)?),
        Family::Adaboost => FittedParams::Adaboost(AdaBoost::fit(&x, y, hp)?),
        Family::SvmLinear => FittedParams::SvmLinear(SvmLinear::fit(&x, y, hp)?),
        Family::SvmRbf => FittedParams::SvmRbf(SvmRbf::fit(&x, y, hp)?),
        Family::Mlp => {
            let val = val.ok_or_else(|| Error::Invalid("mlp needs a validation set".into()))?;
            let xv = standardizer.transform(&val.x.select_cols(&selected))?;
            let cfg = MlpTraining::from_hyperparams(hp)?;
            let arch = MlpArchitecture::for_dim(x.cols(), &cfg);
            let (mlp, _) = Mlp::train(&arch, &cfg, &x, y, &xv, &val.labels, spec.seed)?;
            FittedParams::Mlp(mlp)
        }
    };
    Ok(TrainedModel {
        version: ARTIFACT_VERSION,
        spec: spec.clone(),
        input_dim: train.dim(),
        selected,
        standardizer,
        params,
    })
}

impl TrainedModel {
    /// Wraps already-fitted parameters (used by the federated trainer).
    pub fn from_parts(
        spec: ModelSpec,
        input_dim: usize,
        selected: Vec<usize>,
        standardizer: Standardizer,
        params: FittedParams,
    ) -> TrainedModel {
        TrainedModel {
            version: ARTIFACT_VERSION,
            spec,
            input_dim,
            selected,
            standardizer,
            params,
        }
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Selects and standardizes raw features.
    pub fn prepare(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.cols(),
            });
        }
        self.standardizer.transform(&x.select_cols(&self.selected))
    }

    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        let z = self.prepare(x)?;
        Ok(self
            .params
            .scores(&z)
            .into_iter()
            .map(|s| if s.is_nan() { 0.5 } else { s.clamp(0.0, 1.0) })
            .collect())
    }

    pub fn predict_labels(&self, x: &Matrix, threshold: f64) -> Result<Vec<u8>> {
        Ok(threshold_scores(&self.predict_scores(x)?, threshold)?)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Invalid(format!("model serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<TrainedModel> {
        let m: TrainedModel =
            serde_json::from_str(s).map_err(|e| Error::Invalid(format!("model artifact: {e}")))?;
        if m.version != ARTIFACT_VERSION {
            return Err(Error::Invalid(format!(
                "artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_json(&s).map_err(|e| Error::parse(path, e))
    }
}

/// `1` iff score >= threshold.
pub fn threshold_scores(scores: &[f64], threshold: f64) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Invalid(format!("threshold must be in [0, 1], got {threshold}")));
    }
    Ok(scores.iter().map(|&s| (s >= threshold) as u8).collect())
}

/// Per-class sample weights: `None` gives 1, `balanced` gives N / (2 n_c).
pub(crate) fn class_weights(hp: &Hyperparams, y: &[u8]) -> Result<[f64; 2]> {
    match hp.get("class_weight") {
        None | Some(HyperValue::Null) => Ok([1.0, 1.0]),
        Some(HyperValue::Text(s)) if s == "balanced" => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|&&l| l == 1).count() as f64;
            Ok([n / (2.0 * (n - pos)), n / (2.0 * pos)])
        }
        Some(other) => Err(Error::Invalid(format!("class_weight must be null or \"balanced\", got {other}"))),
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests;
