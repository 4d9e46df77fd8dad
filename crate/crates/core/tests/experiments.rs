use std::collections::BTreeMap;
use std::path::Path;

use mscv::data::{write_signal_file, Dataset, Payload, Record, SignalRef};
use mscv::experiments::report::{CONFUSION_FILE, ERRORS_FILE, FOLDS_FILE, RELIABILITY_FILE, RESULTS_FILE};
use mscv::experiments::{
    emit_reports, run, run_multi_source, run_single_source, run_source_prediction, ExperimentConfig, InputSet, Prepared,
    Protocol, ProtocolResult,
};
use mscv::metrics::error_summary;
use mscv::models::{GbdtConfig, ModelKind};
use mscv::synth::{generate, preset, SynthSpec};
use mscv::ErrorKind;

fn spec(name: &str, sizes: usize, seed: u64) -> SynthSpec {
    SynthSpec { sizes: vec![sizes], seed, ..preset(name).unwrap() }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn all_me(r: &ProtocolResult, method: &str, metric: &str) -> f64 {
    r.reliability_row("all", method, metric).unwrap().report.me
}

#[test]
fn single_source_pairs_and_groups() {
    let ds = generate(&spec("both", 300, 4)).unwrap();
    let r = run_single_source(&ds, &ExperimentConfig::new(Protocol::SingleSource, 4)).unwrap();
    assert_eq!(r.contexts.len(), 20);
    let groups: std::collections::BTreeSet<&str> =
        r.reliability.iter().filter(|row| row.group != "all").map(|row| row.group.as_str()).collect();
    assert_eq!(groups.len(), 5);
    for c in &r.contexts {
        assert_eq!(c.cv[0].k, 5);
        assert_eq!(c.n_test, 300);
        assert_ne!(c.train_sources[0], c.test_source);
    }
    // each train source is evaluated on its 4 peers
    for row in r.reliability.iter().filter(|row| row.group != "all") {
        assert_eq!(row.report.entries.len(), 4);
    }
}

#[test]
fn single_source_identical_sources_unbiased() {
    let me = mean((0..20).map(|seed| {
        let ds = generate(&SynthSpec { n_sources: 2, ..spec("no_shift", 1000, seed) }).unwrap();
        let r = run_single_source(&ds, &ExperimentConfig::new(Protocol::SingleSource, seed)).unwrap();
        all_me(&r, "kfold", "macro_auc")
    }));
    assert!(me.abs() < 0.02, "mean ME {me}");
}

#[test]
fn single_source_label_shift_is_optimistic() {
    // per-label AUC ignores priors, so the optimism shows up in the pooled micro AUC
    let me = mean((0..10).map(|seed| {
        let ds = generate(&SynthSpec { n_sources: 2, prior_shift: 2.0, ..spec("label_shift", 1000, seed) }).unwrap();
        let r = run_single_source(&ds, &ExperimentConfig::new(Protocol::SingleSource, seed)).unwrap();
        all_me(&r, "kfold", "micro_auc")
    }));
    assert!(me > 0.0, "mean micro ME {me}");
}

#[test]
fn protocols_need_enough_sources() {
    let one = generate(&SynthSpec { n_sources: 1, ..spec("no_shift", 50, 0) }).unwrap();
    let two = generate(&SynthSpec { n_sources: 2, ..spec("no_shift", 50, 0) }).unwrap();
    assert!(run_single_source(&one, &ExperimentConfig::new(Protocol::SingleSource, 0)).is_err());
    assert!(run_multi_source(&two, &ExperimentConfig::new(Protocol::MultiSource, 0)).is_err());
    assert!(run_source_prediction(&one, &ExperimentConfig::new(Protocol::SourcePrediction, 0)).is_err());
    // fewer records than folds
    let tiny = generate(&SynthSpec { n_sources: 2, ..spec("no_shift", 3, 0) }).unwrap();
    assert!(run_single_source(&tiny, &ExperimentConfig::new(Protocol::SingleSource, 0)).is_err());
}

fn multi(seed: u64) -> ProtocolResult {
    let ds = generate(&spec("both", 300, seed)).unwrap();
    run_multi_source(&ds, &ExperimentConfig::new(Protocol::MultiSource, seed)).unwrap()
}

#[test]
fn multi_source_shape() {
    let r = multi(2);
    assert_eq!(r.contexts.len(), 5);
    assert_eq!(r.reliability.len(), 4);
    for c in &r.contexts {
        assert_eq!(c.train_sources.len(), 4);
        assert!(!c.train_sources.contains(&c.test_source));
        let k = c.cv_for("kfold").unwrap();
        let l = c.cv_for("lso").unwrap();
        assert_eq!((k.k, l.k), (4, 4));
        let held: Vec<&str> = l.folds.iter().map(|f| f.validation_source.as_deref().unwrap()).collect();
        assert_eq!(held, c.train_sources.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(l.folds.iter().all(|f| f.n_val == 300 && f.n_train == 900));
    }
}

#[test]
fn reports_are_deterministic_and_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    emit_reports(&multi(5), &a).unwrap();
    emit_reports(&multi(5), &b).unwrap();
    for f in [RESULTS_FILE, RELIABILITY_FILE, ERRORS_FILE, FOLDS_FILE] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!a.join(CONFUSION_FILE).exists());

    let mut errors: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for row in csv::Reader::from_path(a.join(ERRORS_FILE)).unwrap().records() {
        let row = row.unwrap();
        let cv: f64 = row[6].parse().unwrap();
        let test: f64 = row[7].parse().unwrap();
        let e: f64 = row[8].parse().unwrap();
        assert_eq!(e.to_bits(), (cv - test).to_bits());
        errors.entry((row[0].to_string(), row[4].to_string(), row[5].to_string())).or_default().push(e);
    }
    let mut rows = 0;
    for row in csv::Reader::from_path(a.join(RELIABILITY_FILE)).unwrap().records() {
        let row = row.unwrap();
        let e = &errors[&(row[0].to_string(), row[1].to_string(), row[2].to_string())];
        let (me, sd, rmse) = error_summary(e).unwrap();
        let parsed: Vec<f64> = (4..7).map(|i| row[i].parse().unwrap()).collect();
        assert_eq!(parsed, vec![me, sd, rmse]);
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn empty_result_writes_nothing() {
    let mut r = multi(1);
    r.contexts.clear();
    r.reliability.clear();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(emit_reports(&r, &out).is_err());
    assert!(!out.exists());
}

#[test]
fn source_prediction_separation_and_null() {
    let shifted = SynthSpec { covariate_shift: 4.0, ..spec("label_shift", 400, 3) };
    let r = run_source_prediction(&generate(&shifted).unwrap(), &ExperimentConfig::new(Protocol::SourcePrediction, 3)).unwrap();
    let sp = r.source_prediction.as_ref().unwrap();
    assert_eq!(sp.input_sets.len(), 3);
    assert!(sp.accuracy(InputSet::FeaturesDemographics).unwrap() > sp.majority_baseline + 0.2);
    assert!(sp.accuracy(InputSet::LabelsOnly).unwrap() > sp.majority_baseline);
    let counts: usize = sp.input_sets[0].confusion.counts.iter().flatten().sum();
    assert_eq!(counts, sp.n_test);
    assert_eq!(sp.n_train + sp.n_test, 2000);

    let null = run_source_prediction(&generate(&spec("no_shift", 400, 3)).unwrap(), &ExperimentConfig::new(Protocol::SourcePrediction, 3))
        .unwrap();
    let sp = null.source_prediction.as_ref().unwrap();
    for set in &sp.input_sets {
        assert!((set.accuracy - sp.majority_baseline).abs() < 0.05, "{:?} {} vs {}", set.input_set, set.accuracy, sp.majority_baseline);
    }

    let dir = tempfile::tempdir().unwrap();
    let files = emit_reports(&r, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, vec![RESULTS_FILE, CONFUSION_FILE]);
    let rows = csv::Reader::from_path(dir.path().join(CONFUSION_FILE)).unwrap().records().count();
    assert_eq!(rows, 3 * 25);
}

#[test]
fn config_driven_run_with_gbdt() {
    let cfg = ExperimentConfig::parse(
        r#"
        protocol = "multi_source"
        seed = 7
        [data.synthetic]
        preset = "both"
        n_sources = 3
        sizes = [120]
        [model]
        kind = "gbdt"
        n_rounds = 10
        max_depth = 3
        "#,
    )
    .unwrap();
    let r = run(&cfg).unwrap();
    assert_eq!(r.model, "gbdt");
    assert_eq!(r.contexts.len(), 3);
    assert!(r.contexts.iter().all(|c| c.test.macro_auc > 0.5));
    assert_eq!(run(&cfg).unwrap(), r);
    assert!(matches!(cfg.model, ModelKind::Gbdt { params: GbdtConfig { n_rounds: 10, .. } }));
}

fn write_signal_dataset(dir: &Path) -> Dataset {
    let fs = 250.0;
    let mut records = Vec::new();
    for s in 0..3 {
        for i in 0..12 {
            let rate = 1.0 + 0.1 * i as f64 + 0.2 * s as f64;
            let n = (fs * 10.0) as usize;
            let beat = (fs / rate) as usize;
            let lead: Vec<f64> = (0..n)
                .map(|t| (t as f64 * 0.05).sin() * 0.05 + if t % beat == beat / 2 { 1.0 } else { 0.0 })
                .collect();
            let rel = format!("sig/s{s}_{i}.csv");
            write_signal_file(&dir.join(&rel), &[lead.clone(), lead]).unwrap();
            let labels: Vec<&str> = if i % 2 == 0 { vec!["fast"] } else { vec!["slow"] };
            let mut r = Record::new(format!("s{s}-{i}"), format!("site{s}"), labels, Payload::Signal(SignalRef {
                path: rel.into(),
                fs_hz: fs,
                n_leads: 2,
            }));
            r.age = Some(40.0 + i as f64);
            records.push(r);
        }
    }
    Dataset::from_records(records).unwrap().with_base_dir(dir)
}

#[test]
fn signal_payloads_use_lead_ii_features() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("sig")).unwrap();
    let ds = write_signal_dataset(dir.path());
    let cfg = ExperimentConfig::new(Protocol::MultiSource, 0);
    let prep = Prepared::new(&ds, &cfg.prep).unwrap();
    assert_eq!(prep.payload.ncols(), mscv::signal::N_LEAD2_SIGNAL_FEATURES);
    assert_eq!(prep.model_features().ncols(), mscv::signal::N_LEAD2_FEATURES);
    assert_eq!(prep.hrv_fallbacks, 0);
    let r = run_multi_source(&ds, &ExperimentConfig { k: Some(2), ..cfg }).unwrap();
    assert_eq!(r.contexts.len(), 3);

    std::fs::remove_file(dir.path().join("sig/s1_3.csv")).unwrap();
    let err = Prepared::new(&ds, &ExperimentConfig::new(Protocol::MultiSource, 0).prep).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("s1_3.csv"));
}
