//! The five classifiers behind one predict interface, tree importances,
//! subcarrier selection and stratified cross-validation.

mod bayes;
mod cv;
mod forest;
mod knn;
mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bayes::GaussianNb;
pub use cv::{
    confusion_matrix, cross_validate, metrics_from_confusion, Averaging, CvOptions, CvReport,
    FoldMetrics, Metrics,
};
pub use forest::{tree_rng, ForestParams, RandomForest};
pub use knn::KNearest;
pub use svm::{LinearSvm, SvmParams};
pub use tree::{DecisionTree, MaxFeatures, TrainingData, TreeParams};

use crate::dsp::DspError;

/// Version tag written into persisted models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("need at least two classes, got {0}")]
    DegenerateLabels(usize),
    #[error("non-finite feature at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("{0} has no feature importances")]
    UnsupportedModel(ModelKind),
    #[error("model never split, importances are undefined")]
    NoSplits,
    #[error("rows and labels differ in length ({rows} vs {labels})")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("bad feature name '{0}'")]
    BadFeatureName(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("model document: {0}")]
    Format(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    DecisionTree,
    Knn,
    GaussianNb,
    LinearSvm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::RandomForest,
        ModelKind::DecisionTree,
        ModelKind::LinearSvm,
        ModelKind::GaussianNb,
        ModelKind::Knn,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "rf",
            ModelKind::DecisionTree => "dt",
            ModelKind::Knn => "knn",
            ModelKind::GaussianNb => "nb",
            ModelKind::LinearSvm => "svm",
        }
    }

    pub fn is_tree_based(self) -> bool {
        matches!(self, ModelKind::RandomForest | ModelKind::DecisionTree)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::RandomForest => "RF",
            ModelKind::DecisionTree => "DT",
            ModelKind::Knn => "KNN",
            ModelKind::GaussianNb => "NB",
            ModelKind::LinearSvm => "SVM",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.short_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model '{s}', expected one of rf, dt, knn, nb, svm"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub forest: ForestParams,
    pub tree: TreeParams,
    pub knn_k: usize,
    /// Fraction of the largest feature variance added to every variance.
    pub nb_var_smoothing: f64,
    pub svm: SvmParams,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            forest: ForestParams {
                n_trees: 100,
                bootstrap: true,
                tree: TreeParams {
                    max_features: MaxFeatures::Sqrt,
                    ..TreeParams::default()
                },
            },
            tree: TreeParams::default(),
            knn_k: 5,
            nb_var_smoothing: 1e-9,
            svm: SvmParams {
                epochs: 200,
                regularization: 1e-4,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    RandomForest(RandomForest),
    DecisionTree(DecisionTree),
    Knn(KNearest),
    GaussianNb(GaussianNb),
    LinearSvm(LinearSvm),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub hyper: HyperParams,
    pub seed: u64,
    /// Ascending user labels; score vectors follow this order.
    pub classes: Vec<u32>,
    pub n_features: usize,
    pub feature_importances: Option<Vec<f64>>,
    pub params: ModelParams,
}

fn check_inputs(rows: &[Vec<f64>], labels: &[u32]) -> Result<(Vec<u32>, Vec<usize>), LearnError> {
    if rows.len() != labels.len() {
        return Err(LearnError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let width = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(LearnError::DimensionMismatch {
                expected: width,
                got: r.len(),
            });
        }
        if let Some(j) = r.iter().position(|x| !x.is_finite()) {
            return Err(LearnError::NonFiniteFeature { row: i, column: j });
        }
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(LearnError::DegenerateLabels(classes.len()));
    }
    let index: BTreeMap<u32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let targets = labels.iter().map(|l| index[l]).collect();
    Ok((classes, targets))
}

/// Fits a model of `kind`. Deterministic for a given seed.
pub fn train(
    kind: ModelKind,
    rows: &[Vec<f64>],
    labels: &[u32],
    hyper: &HyperParams,
    seed: u64,
) -> Result<TrainedModel, LearnError> {
    let (classes, targets) = check_inputs(rows, labels)?;
    let n_classes = classes.len();
    let width = rows[0].len();
    let params = match kind {
        ModelKind::RandomForest => {
            let data = TrainingData::new(rows, targets, n_classes);
            ModelParams::RandomForest(RandomForest::fit(&data, &hyper.forest, seed))
        }
        ModelKind::DecisionTree => {
            let data = TrainingData::new(rows, targets, n_classes);
            let mut rng = tree_rng(seed, 0);
            ModelParams::DecisionTree(DecisionTree::fit(
                &data,
                (0..rows.len()).collect(),
                &hyper.tree,
                &mut rng,
            ))
        }
        ModelKind::Knn => ModelParams::Knn(KNearest {
            k: hyper.knn_k.max(1),
            points: rows.to_vec(),
            targets,
        }),
        ModelKind::GaussianNb => ModelParams::GaussianNb(GaussianNb::fit(
            rows,
            &targets,
            n_classes,
            hyper.nb_var_smoothing,
        )),
        ModelKind::LinearSvm => {
            ModelParams::LinearSvm(LinearSvm::fit(rows, &targets, n_classes, &hyper.svm, seed))
        }
    };
    let feature_importances = match &params {
        ModelParams::RandomForest(f) => f.importances(width),
        ModelParams::DecisionTree(t) => t.importances(),
        _ => None,
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        hyper: hyper.clone(),
        seed,
        classes,
        n_features: width,
        feature_importances,
        params,
    })
}

impl TrainedModel {
    fn check_width(&self, row: &[f64]) -> Result<(), LearnError> {
        if row.len() != self.n_features {
            return Err(LearnError::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Per-class scores for one row, ordered like `classes`.
    pub fn scores_one(&self, row: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.check_width(row)?;
        let k = self.classes.len();
        Ok(match &self.params {
            ModelParams::RandomForest(f) => f.vote_fractions(row, k),
            ModelParams::DecisionTree(t) => t.leaf(row).to_vec(),
            ModelParams::Knn(m) => m.scores(row, k),
            ModelParams::GaussianNb(m) => m.posteriors(row),
            ModelParams::LinearSvm(m) => m.softmax_scores(row),
        })
    }

    pub fn predict_one(&self, row: &[f64]) -> Result<u32, LearnError> {
        let scores = self.scores_one(row)?;
        Ok(self.classes[tree::argmax(&scores)])
    }

    pub fn predict_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LearnError> {
        rows.par_iter().map(|r| self.scores_one(r)).collect()
    }

    /// Argmax of the scores; ties go to the lowest label.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<u32>, LearnError> {
        rows.par_iter().map(|r| self.predict_one(r)).collect()
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        serde_json::to_string(self).map_err(|e| LearnError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| LearnError::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Format(format!(
                "unsupported format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LearnError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Normalised mean decrease in Gini for tree-based models.
pub fn feature_importance(model: &TrainedModel) -> Result<Vec<f64>, LearnError> {
    if !model.kind.is_tree_based() {
        return Err(LearnError::UnsupportedModel(model.kind));
    }
    model
        .feature_importances
        .clone()
        .ok_or(LearnError::NoSplits)
}

/// Logical subcarrier index encoded in a feature name such as `amp_-100` or `phase_7`.
pub fn subcarrier_of(name: &str) -> Option<i32> {
    let (_, k) = name
        .strip_prefix("amp_")
        .map(|k| ("amp", k))
        .or_else(|| name.strip_prefix("phase_").map(|k| ("phase", k)))?;
    k.parse().ok()
}

/// Top `top_m` subcarriers by summed amplitude and phase importance; ties by ascending index.
pub fn select_subcarriers(
    importances: &[f64],
    feature_names: &[String],
    top_m: usize,
) -> Result<Vec<i32>, LearnError> {
    if importances.len() != feature_names.len() {
        return Err(LearnError::DimensionMismatch {
            expected: feature_names.len(),
            got: importances.len(),
        });
    }
    let mut per_subcarrier: BTreeMap<i32, f64> = BTreeMap::new();
    for (name, &imp) in feature_names.iter().zip(importances) {
        let k = subcarrier_of(name).ok_or_else(|| LearnError::BadFeatureName(name.clone()))?;
        *per_subcarrier.entry(k).or_default() += imp;
    }
    let mut ranked: Vec<(i32, f64)> = per_subcarrier.into_iter().collect();
    // stable sort keeps ascending index among equal scores
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked.into_iter().take(top_m).map(|(k, _)| k).collect())
}

/// Gini impurity `1 − Σ p_c²` of the labels at a node.
pub fn gini<T: Ord>(labels: &[T]) -> f64 {
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    tree::gini_from_counts(&counts.into_values().collect::<Vec<_>>())
}
