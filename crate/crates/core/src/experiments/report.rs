use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::ProtocolResult;

pub const RESULTS_FILE: &str = "results.json";
pub const RELIABILITY_FILE: &str = "reliability.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::csv("<memory>", e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::csv("<memory>", e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders every report file in memory. Floats use the shortest
/// representation that parses back to the same value.
pub fn render_reports(result: &ProtocolResult) -> Result<Vec<(&'static str, String)>> {
    if result.is_empty() {
        return Err(Error::invalid("protocol result is empty; nothing to report"));
    }
    let mut files = Vec::new();
    let json = serde_json::to_string_pretty(result).map_err(|e| Error::invalid(e.to_string()))? + "\n";
    files.push((RESULTS_FILE, json));

    if !result.contexts.is_empty() {
        files.push((
            RELIABILITY_FILE,
            csv_text(
                &["group", "method", "metric", "n", "me", "sd", "rmse"],
                result.reliability.iter().map(|r| {
                    vec![
                        r.group.clone(),
                        r.method.clone(),
                        r.metric.clone(),
                        r.report.entries.len().to_string(),
                        r.report.me.to_string(),
                        r.report.sd.to_string(),
                        r.report.rmse.to_string(),
                    ]
                }),
            )?,
        ));
        files.push((
            ERRORS_FILE,
            csv_text(
                &["group", "context_id", "train", "test", "method", "metric", "cv_estimate", "test_value", "signed_error"],
                result.reliability.iter().flat_map(|r| {
                    r.report.entries.iter().map(move |e| {
                        let ctx = result.contexts.iter().find(|c| c.context_id == e.context_id).expect("entry has a context");
                        vec![
                            r.group.clone(),
                            e.context_id.clone(),
                            ctx.train_sources.join(";"),
                            ctx.test_source.clone(),
                            r.method.clone(),
                            r.metric.clone(),
                            e.cv_estimate.to_string(),
                            e.test_value.to_string(),
                            e.signed_error.to_string(),
                        ]
                    })
                }),
            )?,
        ));
        files.push((
            FOLDS_FILE,
            csv_text(
                &["context_id", "method", "fold", "validation_source", "n_train", "n_val", "macro_auc", "micro_auc"],
                result.contexts.iter().flat_map(|c| {
                    c.cv.iter().flat_map(move |cv| {
                        cv.folds.iter().map(move |f| {
                            vec![
                                c.context_id.clone(),
                                cv.method.clone(),
                                f.fold.to_string(),
                                f.validation_source.clone().unwrap_or_default(),
                                f.n_train.to_string(),
                                f.n_val.to_string(),
                                opt(f.macro_auc),
                                opt(f.micro_auc),
                            ]
                        })
                    })
                }),
            )?,
        ));
    }
    if let Some(sp) = &result.source_prediction {
        let mut rows = Vec::new();
        for set in &sp.input_sets {
            for (t, row) in set.confusion.counts.iter().enumerate() {
                for (p, count) in row.iter().enumerate() {
                    rows.push(vec![
                        set.input_set.name().to_string(),
                        sp.classes[t].clone(),
                        sp.classes[p].clone(),
                        count.to_string(),
                    ]);
                }
            }
        }
        files.push((CONFUSION_FILE, csv_text(&["input_set", "truth", "predicted", "count"], rows)?));
    }
    Ok(files)
}

/// Writes the report files into `outdir`. Nothing is written if rendering fails.
pub fn emit_reports(result: &ProtocolResult, outdir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let outdir = outdir.as_ref();
    let files = render_reports(result)?;
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    files
        .into_iter()
        .map(|(name, text)| {
            let path = outdir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ProtocolResult> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let result: ProtocolResult =
        serde_json::from_str(&text).map_err(|e| Error::Manifest { path: path.into(), row: 0, message: e.to_string() })?;
    if result.schema != super::RESULTS_SCHEMA {
        return Err(Error::Manifest {
            path: path.into(),
            row: 0,
            message: format!("unsupported schema `{}`, expected `{}`", result.schema, super::RESULTS_SCHEMA),
        });
    }
    Ok(result)
}

/// Plain-text overview for terminals.
pub fn summarize(result: &ProtocolResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} | model {} | seed {} | {} records from {} sources | {} labels",
        result.protocol.name(),
        result.model,
        result.seed,
        result.n_records,
        result.sources.len(),
        result.labels.len()
    );
    if !result.contexts.is_empty() {
        let _ = writeln!(s, "\n{:<40} {:>8} {:>10} {:>10} {:>10}", "context", "method", "cv_macro", "test_macro", "error");
        for c in &result.contexts {
            for cv in &c.cv {
                let _ = writeln!(
                    s,
                    "{:<40} {:>8} {:>10.4} {:>10.4} {:>+10.4}",
                    c.context_id,
                    cv.method,
                    cv.estimate.macro_auc,
                    c.test.macro_auc,
                    cv.estimate.macro_auc - c.test.macro_auc
                );
            }
        }
        let _ = writeln!(s, "\n{:<16} {:>8} {:>10} {:>4} {:>9} {:>9} {:>9}", "group", "method", "metric", "n", "me", "sd", "rmse");
        for r in &result.reliability {
            let _ = writeln!(
                s,
                "{:<16} {:>8} {:>10} {:>4} {:>+9.4} {:>9.4} {:>9.4}",
                r.group,
                r.method,
                r.metric,
                r.report.entries.len(),
                r.report.me,
                r.report.sd,
                r.report.rmse
            );
        }
    }
    if let Some(sp) = &result.source_prediction {
        let _ = writeln!(s, "\nsource prediction ({} train / {} test), majority baseline {:.4}", sp.n_train, sp.n_test, sp.majority_baseline);
        for r in &sp.input_sets {
            let _ = writeln!(s, "  {:<30} accuracy {:.4}", r.input_set.name(), r.accuracy);
        }
    }
    let _ = writeln!(s, "\nleakage checks passed: {}", result.leakage_checks);
    for w in &result.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
