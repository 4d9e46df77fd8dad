//! End-to-end protocols: single-source, multi-source and source prediction.

pub mod config;
pub mod report;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_label_matrix, read_signal_file, Dataset, LabelMatrix, Payload};
use crate::error::{Error, Result};
use crate::metrics::{
    confusion_and_accuracy, macro_auc, majority_baseline, micro_auc, reliability, valid_labels, Confusion, ReliabilityReport,
    ScoreMatrix,
};
use crate::models::{fit_softmax, MultilabelLearner, ModelKind, TrainConfig};
use crate::seeds::derive_seed;
use crate::signal::{encode_demographics, lead2_feature_vector, sex_numeric, PrepConfig};
use crate::splits::{holdout_by_group, leave_source_out_by, stratified_kfold, FoldPlan};

pub use config::{DataConfig, ExperimentConfig, InputSet, Protocol, SourcePredictionConfig};
pub use report::{emit_reports, summarize};

pub const RESULTS_SCHEMA: &str = "mscv.results.v1";
pub const METHOD_KFOLD: &str = "kfold";
pub const METHOD_LSO: &str = "lso";
pub const METRICS: [&str; 2] = ["macro_auc", "micro_auc"];
pub const DEFAULT_SINGLE_SOURCE_K: usize = 5;

/// Model-ready matrices for one dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub record_ids: Vec<String>,
    pub sources: Vec<String>,
    /// Payload features (lead-II features for signal records).
    pub payload: Array2<f64>,
    /// Scaled age and numeric sex.
    pub demographics: Array2<f64>,
    pub labels: LabelMatrix,
    /// Records whose lead-II features used the no-R-peak fallback.
    pub hrv_fallbacks: usize,
}

impl Prepared {
    pub fn new(ds: &Dataset, prep: &PrepConfig) -> Result<Prepared> {
        if ds.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let rows: Vec<(Vec<f64>, bool)> = ds
            .records()
            .par_iter()
            .map(|r| match &r.payload {
                Payload::Features { values, .. } => Ok((values.clone(), false)),
                Payload::Signal(s) => {
                    let sig = read_signal_file(&ds.resolve(&s.path))?;
                    let mut f = lead2_feature_vector(&sig, s.fs_hz, r.age, r.sex, prep)
                        .map_err(|e| Error::invalid(format!("record `{}`: {e}", r.record_id)))?;
                    f.values.truncate(crate::signal::N_LEAD2_SIGNAL_FEATURES);
                    Ok((f.values, f.hrv_fallback))
                }
            })
            .collect::<Result<_>>()?;
        let d = rows[0].0.len();
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, (v, _))| v.len() != d) {
            return Err(Error::invalid(format!(
                "record `{}` has {} payload features, expected {d}",
                ds.records()[i].record_id,
                rows[i].0.len()
            )));
        }
        let n = ds.len();
        let payload = Array2::from_shape_vec((n, d), rows.iter().flat_map(|(v, _)| v.iter().copied()).collect())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let demographics = Array2::from_shape_fn((n, 2), |(i, j)| {
            let r = &ds.records()[i];
            if j == 0 {
                encode_demographics(r.age, r.sex, prep.age_scale_max).0
            } else {
                sex_numeric(r.sex)
            }
        });
        Ok(Prepared {
            record_ids: ds.records().iter().map(|r| r.record_id.clone()).collect(),
            sources: ds.records().iter().map(|r| r.source_id.clone()).collect(),
            payload,
            demographics,
            labels: build_label_matrix(ds),
            hrv_fallbacks: rows.iter().filter(|(_, f)| *f).count(),
        })
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    /// Input of the multilabel learners: payload features then demographics.
    pub fn model_features(&self) -> Array2<f64> {
        concatenate(Axis(1), &[self.payload.view(), self.demographics.view()]).expect("same row count")
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.sources.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn indices_of(&self, source: &str) -> Vec<usize> {
        self.sources.iter().enumerate().filter(|(_, s)| *s == source).map(|(i, _)| i).collect()
    }

    pub fn source_prediction_input(&self, set: InputSet) -> Array2<f64> {
        let labels = self.labels.values().mapv(f64::from);
        match set {
            InputSet::FeaturesDemographics => self.model_features(),
            InputSet::FeaturesDemographicsLabels => {
                concatenate(Axis(1), &[self.payload.view(), self.demographics.view(), labels.view()]).expect("same row count")
            }
            InputSet::LabelsOnly => labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub macro_auc: f64,
    pub micro_auc: f64,
}

impl Metrics {
    pub fn get(&self, metric: &str) -> f64 {
        match metric {
            "macro_auc" => self.macro_auc,
            "micro_auc" => self.micro_auc,
            other => panic!("unknown metric {other}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_source: Option<String>,
    pub n_train: usize,
    pub n_val: usize,
    pub macro_auc: Option<f64>,
    pub micro_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub method: String,
    pub k: usize,
    pub folds: Vec<FoldResult>,
    /// Unweighted mean over the folds where the metric was defined.
    pub estimate: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextResult {
    pub context_id: String,
    pub train_sources: Vec<String>,
    pub test_source: String,
    pub n_train: usize,
    pub n_test: usize,
    pub valid_labels: Vec<String>,
    pub cv: Vec<CvResult>,
    pub test: Metrics,
}

impl ContextResult {
    pub fn cv_for(&self, method: &str) -> Option<&CvResult> {
        self.cv.iter().find(|c| c.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    /// `all`, or the training source for per-source groups.
    pub group: String,
    pub method: String,
    pub metric: String,
    #[serde(flatten)]
    pub report: ReliabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSetResult {
    pub input_set: InputSet,
    pub n_features: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePredictionResult {
    pub train_frac: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: Vec<String>,
    pub majority_baseline: f64,
    pub input_sets: Vec<InputSetResult>,
}

impl SourcePredictionResult {
    pub fn accuracy(&self, set: InputSet) -> Option<f64> {
        self.input_sets.iter().find(|r| r.input_set == set).map(|r| r.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub schema: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub model: String,
    pub n_records: usize,
    pub sources: Vec<String>,
    pub labels: Vec<String>,
    pub contexts: Vec<ContextResult>,
    pub reliability: Vec<ReliabilityRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_prediction: Option<SourcePredictionResult>,
    /// Train/validation and test-isolation checks performed (all passed).
    pub leakage_checks: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ProtocolResult {
    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty() && self.source_prediction.as_ref().is_none_or(|s| s.input_sets.is_empty())
    }

    pub fn reliability_row(&self, group: &str, method: &str, metric: &str) -> Option<&ReliabilityRow> {
        self.reliability.iter().find(|r| r.group == group && r.method == method && r.metric == metric)
    }
}

struct LeakageGuard {
    checks: AtomicUsize,
}

impl LeakageGuard {
    fn new() -> LeakageGuard {
        LeakageGuard { checks: AtomicUsize::new(0) }
    }

    fn disjoint(&self, n: usize, a: &[usize], b: &[usize], what: &str) -> Result<()> {
        let mut mask = vec![false; n];
        a.iter().for_each(|&i| mask[i] = true);
        if let Some(&i) = b.iter().find(|&&i| mask[i]) {
            return Err(Error::Leakage(format!("record {i} appears on both sides of {what}")));
        }
        self.checks.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn no_source(&self, sources: &[String], idx: &[usize], forbidden: &str, what: &str) -> Result<()> {
        if let Some(&i) = idx.iter().find(|&&i| sources[i] == forbidden) {
            return Err(Error::Leakage(format!("record {i} from held-out source `{forbidden}` used in {what}")));
        }
        self.checks.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn count(&self) -> usize {
        self.checks.load(Ordering::Relaxed)
    }
}

fn select(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Validation scores of one CV round, kept so per-context label filters can
/// be applied later.
struct FoldScores {
    fold: usize,
    validation_source: Option<String>,
    train_labels: LabelMatrix,
    val_labels: LabelMatrix,
    scores: ScoreMatrix,
}

/// Runs a fold plan over `rows` (indices into the prepared data).
fn cv_rounds(
    learner: &dyn MultilabelLearner,
    x: &Array2<f64>,
    prep: &Prepared,
    rows: &[usize],
    plan: &FoldPlan,
    guard: &LeakageGuard,
    forbidden_source: Option<&str>,
) -> Result<Vec<FoldScores>> {
    (0..plan.n_folds)
        .into_par_iter()
        .map(|f| {
            let (tr, va) = plan.train_validation(f);
            let tr: Vec<usize> = tr.into_iter().map(|i| rows[i]).collect();
            let va: Vec<usize> = va.into_iter().map(|i| rows[i]).collect();
            guard.disjoint(prep.len(), &tr, &va, "a CV round")?;
            if let Some(src) = forbidden_source {
                guard.no_source(&prep.sources, &tr, src, "CV training")?;
                guard.no_source(&prep.sources, &va, src, "CV validation")?;
            }
            let train_labels = prep.labels.select_rows(&tr);
            let model = learner.fit(select(x, &tr).view(), &train_labels)?;
            let scores = model.predict_scores(select(x, &va).view())?;
            Ok(FoldScores {
                fold: f,
                validation_source: plan.fold_source.as_ref().map(|s| s[f].clone()),
                train_labels,
                val_labels: prep.labels.select_rows(&va),
                scores,
            })
        })
        .collect()
}

fn intersect(a: &[String], b: &[String]) -> Vec<String> {
    a.iter().filter(|c| b.contains(c)).cloned().collect()
}

/// Aggregates fold scores under a context's label filter. `None` when no fold
/// has a defined macro AUC.
fn cv_summary(method: &str, folds: &[FoldScores], context_valid: &[String]) -> Option<CvResult> {
    let results: Vec<FoldResult> = folds
        .iter()
        .map(|f| {
            let valid = intersect(context_valid, &valid_labels(&f.train_labels, &f.val_labels));
            FoldResult {
                fold: f.fold,
                validation_source: f.validation_source.clone(),
                n_train: f.train_labels.n_rows(),
                n_val: f.val_labels.n_rows(),
                macro_auc: macro_auc(&f.scores, &f.val_labels, &valid).ok(),
                micro_auc: micro_auc(&f.scores, &f.val_labels, &valid).ok(),
            }
        })
        .collect();
    let mean = |get: fn(&FoldResult) -> Option<f64>| {
        let v: Vec<f64> = results.iter().filter_map(get).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let macro_auc = mean(|f| f.macro_auc)?;
    let micro_auc = mean(|f| f.micro_auc)?;
    Some(CvResult { method: method.into(), k: folds.len(), folds: results, estimate: Metrics { macro_auc, micro_auc } })
}

fn test_metrics(scores: &ScoreMatrix, truth: &LabelMatrix, valid: &[String]) -> Option<Metrics> {
    Some(Metrics { macro_auc: macro_auc(scores, truth, valid).ok()?, micro_auc: micro_auc(scores, truth, valid).ok()? })
}

fn reliability_rows(group: &str, contexts: &[&ContextResult], methods: &[&str], warnings: &mut Vec<String>) -> Vec<ReliabilityRow> {
    let mut rows = Vec::new();
    for method in methods {
        for metric in METRICS {
            let triples: Vec<(String, f64, f64)> = contexts
                .iter()
                .filter_map(|c| c.cv_for(method).map(|cv| (c.context_id.clone(), cv.estimate.get(metric), c.test.get(metric))))
                .collect();
            match reliability(triples) {
                Ok(report) => rows.push(ReliabilityRow { group: group.into(), method: method.to_string(), metric: metric.into(), report }),
                Err(e) => warnings.push(format!("no reliability for group `{group}`, {method}/{metric}: {e}")),
            }
        }
    }
    rows
}

fn base_result(cfg: &ExperimentConfig, prep: &Prepared, learner: &dyn MultilabelLearner) -> ProtocolResult {
    ProtocolResult {
        schema: RESULTS_SCHEMA.into(),
        protocol: cfg.protocol,
        seed: cfg.seed,
        model: learner.name().to_string(),
        n_records: prep.len(),
        sources: prep.source_ids(),
        labels: prep.labels.labels().codes().to_vec(),
        contexts: Vec::new(),
        reliability: Vec::new(),
        source_prediction: None,
        leakage_checks: 0,
        warnings: Vec::new(),
    }
}

fn prep_warnings(prep: &Prepared) -> Vec<String> {
    if prep.hrv_fallbacks > 0 {
        vec![format!("{} records had no detectable R peaks; HRV features set to zero", prep.hrv_fallbacks)]
    } else {
        Vec::new()
    }
}

/// Train on one source, cross-validate within it, test on every other source.
pub fn run_single_source(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    let prep = Prepared::new(ds, &cfg.prep)?;
    run_single_source_prepared(&prep, cfg)
}

pub fn run_single_source_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    let learner = cfg.model.learner()?;
    let sources = prep.source_ids();
    if sources.len() < 2 {
        return Err(Error::invalid(format!("single-source protocol needs at least 2 sources, found {}", sources.len())));
    }
    let k = cfg.k.unwrap_or(DEFAULT_SINGLE_SOURCE_K);
    let x = prep.model_features();
    let guard = LeakageGuard::new();

    let per_source: Vec<(Vec<ContextResult>, Vec<String>)> = sources
        .par_iter()
        .map(|train_src| -> Result<(Vec<ContextResult>, Vec<String>)> {
            let rows = prep.indices_of(train_src);
            let lm = prep.labels.select_rows(&rows);
            let plan = stratified_kfold(&lm, k, derive_seed(cfg.seed, &format!("kfold:{train_src}")))
                .map_err(|e| Error::invalid(format!("source `{train_src}`: {e}")))?;
            let folds = cv_rounds(learner.as_ref(), &x, prep, &rows, &plan, &guard, None)?;
            let model = learner.fit(select(&x, &rows).view(), &lm)?;
            let mut contexts = Vec::new();
            let mut warnings = plan.warnings.clone();
            for test_src in sources.iter().filter(|s| *s != train_src) {
                let test_rows = prep.indices_of(test_src);
                guard.disjoint(prep.len(), &rows, &test_rows, "train/test")?;
                let test_lm = prep.labels.select_rows(&test_rows);
                let valid = valid_labels(&lm, &test_lm);
                let context_id = format!("train={train_src};test={test_src}");
                let scores = model.predict_scores(select(&x, &test_rows).view())?;
                let (Some(test), Some(cv)) = (test_metrics(&scores, &test_lm, &valid), cv_summary(METHOD_KFOLD, &folds, &valid)) else {
                    warnings.push(format!("{context_id}: no valid labels, context skipped"));
                    continue;
                };
                contexts.push(ContextResult {
                    context_id,
                    train_sources: vec![train_src.clone()],
                    test_source: test_src.clone(),
                    n_train: rows.len(),
                    n_test: test_rows.len(),
                    valid_labels: valid,
                    cv: vec![cv],
                    test,
                });
            }
            Ok((contexts, warnings))
        })
        .collect::<Result<_>>()?;

    let mut result = base_result(cfg, prep, learner.as_ref());
    result.warnings = prep_warnings(prep);
    for (c, w) in per_source {
        result.contexts.extend(c);
        result.warnings.extend(w);
    }
    let mut warnings = Vec::new();
    for src in &sources {
        let group: Vec<&ContextResult> = result.contexts.iter().filter(|c| &c.train_sources[0] == src).collect();
        if group.len() >= 2 {
            result.reliability.extend(reliability_rows(src, &group, &[METHOD_KFOLD], &mut warnings));
        }
    }
    let all: Vec<&ContextResult> = result.contexts.iter().collect();
    result.reliability.extend(reliability_rows("all", &all, &[METHOD_KFOLD], &mut warnings));
    result.warnings.extend(warnings);
    result.leakage_checks = guard.count();
    Ok(result)
}

/// Hold out each source in turn; estimate with stratified K-fold and
/// leave-source-out CV on the rest; test the shared final model on the held-out source.
pub fn run_multi_source(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    let prep = Prepared::new(ds, &cfg.prep)?;
    run_multi_source_prepared(&prep, cfg)
}

pub fn run_multi_source_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    let learner = cfg.model.learner()?;
    let sources = prep.source_ids();
    if sources.len() < 3 {
        return Err(Error::invalid(format!("multi-source protocol needs at least 3 sources, found {}", sources.len())));
    }
    let k = cfg.k.unwrap_or(sources.len() - 1);
    let x = prep.model_features();
    let guard = LeakageGuard::new();

    let per_test: Vec<(Option<ContextResult>, Vec<String>)> = sources
        .par_iter()
        .map(|test_src| -> Result<(Option<ContextResult>, Vec<String>)> {
            let test_rows = prep.indices_of(test_src);
            let rows: Vec<usize> = (0..prep.len()).filter(|&i| &prep.sources[i] != test_src).collect();
            guard.disjoint(prep.len(), &rows, &test_rows, "train/test")?;
            guard.no_source(&prep.sources, &rows, test_src, "training")?;
            let lm = prep.labels.select_rows(&rows);
            let train_sources: Vec<String> = rows.iter().map(|&i| prep.sources[i].clone()).collect();

            let kplan = stratified_kfold(&lm, k, derive_seed(cfg.seed, &format!("kfold:{test_src}")))?;
            let lplan = leave_source_out_by(&train_sources)?;
            lplan.validate_sources(&train_sources)?;
            guard.checks.fetch_add(1, Ordering::Relaxed);

            let kfolds = cv_rounds(learner.as_ref(), &x, prep, &rows, &kplan, &guard, Some(test_src))?;
            let lfolds = cv_rounds(learner.as_ref(), &x, prep, &rows, &lplan, &guard, Some(test_src))?;
            let model = learner.fit(select(&x, &rows).view(), &lm)?;
            let test_lm = prep.labels.select_rows(&test_rows);
            let valid = valid_labels(&lm, &test_lm);
            let scores = model.predict_scores(select(&x, &test_rows).view())?;
            let context_id = format!("test={test_src}");
            let mut warnings = kplan.warnings.clone();
            let parts = (test_metrics(&scores, &test_lm, &valid), cv_summary(METHOD_KFOLD, &kfolds, &valid), cv_summary(METHOD_LSO, &lfolds, &valid));
            let (Some(test), Some(kcv), Some(lcv)) = parts else {
                warnings.push(format!("{context_id}: no valid labels, context skipped"));
                return Ok((None, warnings));
            };
            let mut held_in: Vec<String> = train_sources;
            held_in.sort();
            held_in.dedup();
            Ok((
                Some(ContextResult {
                    context_id,
                    train_sources: held_in,
                    test_source: test_src.clone(),
                    n_train: rows.len(),
                    n_test: test_rows.len(),
                    valid_labels: valid,
                    cv: vec![kcv, lcv],
                    test,
                }),
                warnings,
            ))
        })
        .collect::<Result<_>>()?;

    let mut result = base_result(cfg, prep, learner.as_ref());
    result.warnings = prep_warnings(prep);
    for (c, w) in per_test {
        result.contexts.extend(c);
        result.warnings.extend(w);
    }
    let all: Vec<&ContextResult> = result.contexts.iter().collect();
    let mut warnings = Vec::new();
    result.reliability = reliability_rows("all", &all, &[METHOD_KFOLD, METHOD_LSO], &mut warnings);
    result.warnings.extend(warnings);
    result.leakage_checks = guard.count();
    Ok(result)
}

/// Multiclass source classifier on a source-stratified holdout.
pub fn run_source_prediction(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    let prep = Prepared::new(ds, &cfg.prep)?;
    run_source_prediction_prepared(&prep, cfg)
}

pub fn run_source_prediction_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    let classes = prep.source_ids();
    if classes.len() < 2 {
        return Err(Error::invalid(format!("source prediction needs at least 2 sources, found {}", classes.len())));
    }
    let sp = &cfg.source_prediction;
    let plan = holdout_by_group(&prep.sources, sp.train_frac, derive_seed(cfg.seed, "holdout"))?;
    let train = plan.fold_indices(0);
    let test = plan.fold_indices(1);
    let guard = LeakageGuard::new();
    guard.disjoint(prep.len(), &train, &test, "the source-prediction holdout")?;

    let train_cfg = match cfg.model {
        ModelKind::Logistic { train } => train,
        ModelKind::Gbdt { .. } => TrainConfig::default(),
    };
    let truth: Vec<usize> = test.iter().map(|&i| classes.binary_search(&prep.sources[i]).expect("known source")).collect();
    let baseline = majority_baseline(&truth, classes.len());
    let train_classes: Vec<&str> = train.iter().map(|&i| prep.sources[i].as_str()).collect();

    let input_sets: Vec<InputSetResult> = sp
        .input_sets
        .par_iter()
        .map(|&set| -> Result<InputSetResult> {
            let x = prep.source_prediction_input(set);
            let model = fit_softmax(select(&x, &train).view(), &train_classes, &train_cfg)?;
            let pred_local = model.predict(select(&x, &test).view())?;
            // map the model's class order onto the global one
            let pred: Vec<usize> =
                pred_local.iter().map(|&p| classes.binary_search(&model.classes[p]).expect("known source")).collect();
            let confusion = confusion_and_accuracy(&pred, &truth, &classes)?;
            Ok(InputSetResult { input_set: set, n_features: x.ncols(), accuracy: confusion.accuracy, confusion, converged: model.converged })
        })
        .collect::<Result<_>>()?;

    let learner = LearnerName("softmax");
    let mut result = base_result(cfg, prep, &learner);
    result.warnings = prep_warnings(prep);
    result.warnings.extend(plan.warnings.clone());
    result.source_prediction = Some(SourcePredictionResult {
        train_frac: sp.train_frac,
        n_train: train.len(),
        n_test: test.len(),
        classes,
        majority_baseline: baseline,
        input_sets,
    });
    result.leakage_checks = guard.count();
    Ok(result)
}

struct LearnerName(&'static str);

impl MultilabelLearner for LearnerName {
    fn name(&self) -> &str {
        self.0
    }

    fn fit(&self, _: ArrayView2<f64>, _: &LabelMatrix) -> Result<Box<dyn crate::models::MultilabelModel>> {
        Err(Error::invalid("not a trainable learner"))
    }
}

pub fn run_on(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    match cfg.protocol {
        Protocol::SingleSource => run_single_source(ds, cfg),
        Protocol::MultiSource => run_multi_source(ds, cfg),
        Protocol::SourcePrediction => run_source_prediction(ds, cfg),
    }
}

/// Loads or generates the configured data and runs the configured protocol.
pub fn run(cfg: &ExperimentConfig) -> Result<ProtocolResult> {
    cfg.validate()?;
    let ds = cfg.load_data()?;
    run_on(&ds, cfg)
}
