use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, HyperParams, LearnError, ModelKind};
use crate::dsp::{apply_scaler, fit_scaler, ScalerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean over classes.
    #[default]
    Macro,
    /// Mean over classes weighted by support.
    Weighted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub test_size: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub folds: usize,
    pub seed: u64,
    pub averaging: Averaging,
    pub classes: Vec<u32>,
    pub per_fold: Vec<FoldMetrics>,
    /// Metrics averaged over folds.
    pub mean: Metrics,
    /// Rows are true classes, columns predictions, summed over folds.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone)]
pub struct CvOptions<'a> {
    pub folds: usize,
    pub seed: u64,
    pub hyper: HyperParams,
    pub averaging: Averaging,
    /// Fit this scaler on each training fold and apply it to both sides.
    pub per_fold_scaler: Option<ScalerKind>,
    /// Keep rows sharing a group id (e.g. a capture session) in the same fold.
    pub groups: Option<&'a [u64]>,
}

impl Default for CvOptions<'_> {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            seed: 42,
            hyper: HyperParams::default(),
            averaging: Averaging::Macro,
            per_fold_scaler: None,
            groups: None,
        }
    }
}

pub fn confusion_matrix(classes: &[u32], truth: &[u32], predicted: &[u32]) -> Vec<Vec<u64>> {
    let index: BTreeMap<u32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut m = vec![vec![0u64; classes.len()]; classes.len()];
    for (t, p) in truth.iter().zip(predicted) {
        m[index[t]][index[p]] += 1;
    }
    m
}

/// Accuracy and averaged precision/recall/F1 over classes with non-zero support.
/// A class never predicted has precision 0.
pub fn metrics_from_confusion(confusion: &[Vec<u64>], averaging: Averaging) -> Metrics {
    let total: u64 = confusion.iter().flatten().sum();
    let correct: u64 = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    let (mut p_sum, mut r_sum, mut f_sum, mut w_sum) = (0.0, 0.0, 0.0, 0.0);
    for (c, row) in confusion.iter().enumerate() {
        let support: u64 = row.iter().sum();
        if support == 0 {
            continue;
        }
        let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
        let tp = row[c] as f64;
        let precision = if predicted == 0 {
            0.0
        } else {
            tp / predicted as f64
        };
        let recall = tp / support as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let w = match averaging {
            Averaging::Macro => 1.0,
            Averaging::Weighted => support as f64,
        };
        p_sum += w * precision;
        r_sum += w * recall;
        f_sum += w * f1;
        w_sum += w;
    }
    let div = |x: f64| if w_sum == 0.0 { 0.0 } else { x / w_sum };
    Metrics {
        accuracy: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
        precision: div(p_sum),
        recall: div(r_sum),
        f1: div(f_sum),
    }
}

/// Fold id for every row: per class, seeded shuffle then round robin.
fn assign_folds(
    labels: &[u32],
    groups: Option<&[u64]>,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // class -> unit -> rows
    let mut units: BTreeMap<u32, BTreeMap<u64, Vec<usize>>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        let unit = groups.map_or(i as u64, |g| g[i]);
        units.entry(l).or_default().entry(unit).or_default().push(i);
    }
    let mut fold_of = vec![0usize; labels.len()];
    for (offset, (class, members)) in units.into_iter().enumerate() {
        if members.len() < k {
            return Err(LearnError::TooFewSamples(format!(
                "class {class} has {} {} for {k} folds",
                members.len(),
                if groups.is_some() {
                    "groups"
                } else {
                    "samples"
                }
            )));
        }
        let mut order: Vec<Vec<usize>> = members.into_values().collect();
        order.shuffle(&mut rng);
        for (j, rows) in order.into_iter().enumerate() {
            for r in rows {
                fold_of[r] = (offset + j) % k;
            }
        }
    }
    Ok(fold_of)
}

/// Metrics and confusion matrix of one fold.
type FoldOutcome = (FoldMetrics, Vec<Vec<u64>>);

/// Stratified k-fold cross-validation of a model kind.
pub fn cross_validate(
    kind: ModelKind,
    rows: &[Vec<f64>],
    labels: &[u32],
    opts: &CvOptions<'_>,
) -> Result<CvReport, LearnError> {
    let k = opts.folds;
    if k < 2 {
        return Err(LearnError::TooFewSamples(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if rows.len() != labels.len() {
        return Err(LearnError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    if let Some(g) = opts.groups {
        if g.len() != labels.len() {
            return Err(LearnError::LengthMismatch {
                rows: labels.len(),
                labels: g.len(),
            });
        }
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(LearnError::DegenerateLabels(classes.len()));
    }
    let fold_of = assign_folds(labels, opts.groups, k, opts.seed)?;

    let results: Vec<Result<FoldOutcome, LearnError>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (mut train_x, mut train_y, mut test_x, mut test_y) =
                (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (i, (r, &l)) in rows.iter().zip(labels).enumerate() {
                if fold_of[i] == fold {
                    test_x.push(r.clone());
                    test_y.push(l);
                } else {
                    train_x.push(r.clone());
                    train_y.push(l);
                }
            }
            if let Some(kind) = opts.per_fold_scaler {
                let scaler = fit_scaler(kind, &train_x)?;
                train_x = apply_scaler(&scaler, &train_x)?;
                test_x = apply_scaler(&scaler, &test_x)?;
            }
            let fold_seed = opts.seed.wrapping_add(fold as u64);
            let model = train(kind, &train_x, &train_y, &opts.hyper, fold_seed)?;
            let predicted = model.predict(&test_x)?;
            let confusion = confusion_matrix(&classes, &test_y, &predicted);
            let metrics = metrics_from_confusion(&confusion, opts.averaging);
            Ok((
                FoldMetrics {
                    fold,
                    test_size: test_y.len(),
                    metrics,
                },
                confusion,
            ))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(k);
    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    for r in results {
        let (fm, cm) = r?;
        for (acc, row) in confusion.iter_mut().zip(cm) {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        per_fold.push(fm);
    }
    let n = per_fold.len() as f64;
    let mean_of =
        |get: fn(&Metrics) -> f64| per_fold.iter().map(|f| get(&f.metrics)).sum::<f64>() / n;
    let mean = Metrics {
        accuracy: mean_of(|m| m.accuracy),
        precision: mean_of(|m| m.precision),
        recall: mean_of(|m| m.recall),
        f1: mean_of(|m| m.f1),
    };
    Ok(CvReport {
        kind,
        folds: k,
        seed: opts.seed,
        averaging: opts.averaging,
        classes,
        per_fold,
        mean,
        confusion,
    })
}
