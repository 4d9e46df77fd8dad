use mscv::data::{Dataset, Payload};
use mscv::experiments::{run_source_prediction, ExperimentConfig, InputSet, Protocol, SourcePredictionConfig};
use mscv::synth::{generate, generate_with_params, preset, SynthSpec};

// two-sided normal critical value at alpha = 0.01
const Z_CRIT: f64 = 2.5758293035489;

fn features_of(ds: &Dataset, source: &str) -> Vec<Vec<f64>> {
    ds.records()
        .iter()
        .filter(|r| r.source_id == source)
        .map(|r| match &r.payload {
            Payload::Features { values, .. } => values.clone(),
            Payload::Signal(_) => unreachable!(),
        })
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn unshifted_sources_pass_two_sample_tests() {
    let seeds = 100;
    let mut rejections = 0;
    let mut tests = 0;
    for seed in 0..seeds {
        let ds = generate(&SynthSpec { seed, ..preset("no_shift").unwrap() }).unwrap();
        let (a, b) = (features_of(&ds, "src0"), features_of(&ds, "src1"));
        for j in 0..a[0].len() {
            let (ma, va) = mean_var(&a.iter().map(|r| r[j]).collect::<Vec<_>>());
            let (mb, vb) = mean_var(&b.iter().map(|r| r[j]).collect::<Vec<_>>());
            let z = (ma - mb) / (va / a.len() as f64 + vb / b.len() as f64).sqrt();
            rejections += usize::from(z.abs() > Z_CRIT);
            tests += 1;
        }
    }
    // twice the expected false-positive count
    let bound = (2.0 * 0.01 * tests as f64) as usize;
    assert!(rejections <= bound, "{rejections} rejections of {tests} tests (bound {bound})");
}

#[test]
fn shifted_offsets_have_requested_length() {
    let (_, p) = generate_with_params(&SynthSpec { covariate_shift: 5.0, ..preset("no_shift").unwrap() }).unwrap();
    for o in &p.offsets {
        let len = o.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((len - 5.0).abs() < 1e-9);
    }
}

#[test]
fn large_covariate_shift_makes_sources_identifiable() {
    let spec = SynthSpec { covariate_shift: 5.0, sizes: vec![600], ..preset("no_shift").unwrap() };
    let cfg = ExperimentConfig {
        source_prediction: SourcePredictionConfig { input_sets: vec![InputSet::FeaturesDemographics], ..Default::default() },
        ..ExperimentConfig::new(Protocol::SourcePrediction, 0)
    };
    let r = run_source_prediction(&generate(&spec).unwrap(), &cfg).unwrap();
    let acc = r.source_prediction.unwrap().input_sets[0].accuracy;
    assert!(acc > 0.9, "accuracy {acc}");
}

#[test]
fn presets_share_structure_across_shift_settings() {
    let a = generate_with_params(&preset("no_shift").unwrap()).unwrap().1;
    let b = generate_with_params(&preset("covariate_shift").unwrap()).unwrap().1;
    assert_eq!(a.prevalence, b.prevalence);
    assert_eq!(a.effects, b.effects);
}
