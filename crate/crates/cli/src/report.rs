use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use handpass::learners::CvReport;
use handpass::ModelKind;

use crate::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source: e.into(),
    }
}

/// Aligned plain-text table, one row per dataset and model.
pub fn metrics_table(results: &[(String, CvReport)]) -> String {
    let width = results
        .iter()
        .map(|(d, _)| d.len())
        .chain(std::iter::once("dataset".len()))
        .max()
        .unwrap_or(7);
    let mut out = format!(
        "{:<width$}  {:<5}  {:>8}  {:>9}  {:>8}  {:>8}\n",
        "dataset", "model", "accuracy", "precision", "recall", "f1"
    );
    for (name, r) in results {
        let m = r.mean;
        let _ = writeln!(
            out,
            "{:<width$}  {:<5}  {:>8.4}  {:>9.4}  {:>8.4}  {:>8.4}",
            name,
            r.kind.short_name().to_uppercase(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        );
    }
    out
}

pub fn write_metrics_csv(results: &[(String, CvReport)], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "dataset",
        "model",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "folds",
        "seed",
        "averaging",
    ])
    .map_err(csv_err(path))?;
    for (name, r) in results {
        let averaging = format!("{:?}", r.averaging).to_lowercase();
        w.write_record([
            name.clone(),
            r.kind.short_name().to_uppercase(),
            r.mean.accuracy.to_string(),
            r.mean.precision.to_string(),
            r.mean.recall.to_string(),
            r.mean.f1.to_string(),
            r.folds.to_string(),
            r.seed.to_string(),
            averaging,
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// F1 per dataset with one column per model, in the order requested.
pub fn write_slice_csv(
    results: &[(String, CvReport)],
    models: &[ModelKind],
    path: &Path,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["dataset".to_string()];
    header.extend(models.iter().map(|m| m.short_name().to_uppercase()));
    w.write_record(&header).map_err(csv_err(path))?;
    let mut datasets: Vec<&str> = Vec::new();
    for (name, _) in results {
        if !datasets.contains(&name.as_str()) {
            datasets.push(name);
        }
    }
    for d in datasets {
        let mut row = vec![d.to_string()];
        for m in models {
            let f1 = results
                .iter()
                .find(|(n, r)| n == d && r.kind == *m)
                .map(|(_, r)| r.mean.f1.to_string())
                .unwrap_or_default();
            row.push(f1);
        }
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json(results: &[(String, CvReport)], path: &Path) -> Result<(), CliError> {
    let doc: Vec<serde_json::Value> = results
        .iter()
        .map(|(name, r)| serde_json::json!({ "dataset": name, "report": r }))
        .collect();
    let file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(file, &doc).map_err(|e| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source: e.into(),
    })
}

pub fn write_importances(
    names: &[String],
    importances: &[f64],
    path: &Path,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["feature", "importance"])
        .map_err(csv_err(path))?;
    for (n, v) in names.iter().zip(importances) {
        w.write_record([n.clone(), v.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
