//! Synthetic multi-source multilabel data: a linear-Gaussian model with
//! per-source label priors and per-source feature offsets.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{write_dataset, Dataset, LabelSpace, Payload, Record, Sex};
use crate::error::{Error, Result};
use crate::seeds::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_sources: usize,
    /// Records per source; a single value applies to every source.
    pub sizes: Vec<usize>,
    pub n_labels: usize,
    pub n_features: usize,
    /// Explicit prevalence per source and label. Overrides `base_prevalence`
    /// and `prior_shift` when present.
    #[serde(default)]
    pub prevalence: Option<Vec<Vec<f64>>>,
    /// Per-label prevalence before shifting.
    #[serde(default)]
    pub base_prevalence: Vec<f64>,
    /// Source prevalence is `sigmoid(logit(base) + prior_shift * z)`, z ~ N(0, 1)
    /// drawn per source and label.
    #[serde(default)]
    pub prior_shift: f64,
    /// Length of each source's feature-mean offset (random direction).
    #[serde(default)]
    pub covariate_shift: f64,
    /// Explicit label -> feature displacement matrix. Overrides `effect_magnitude`.
    #[serde(default)]
    pub effects: Option<Vec<Vec<f64>>>,
    /// Norm of each random label displacement vector.
    #[serde(default = "default_effect")]
    pub effect_magnitude: f64,
    /// Relative per-source perturbation of the label displacements
    /// (0 keeps one shared effect matrix).
    #[serde(default)]
    pub effect_shift: f64,
    pub noise_std: f64,
    /// Source noise scale is `noise_std * exp(noise_spread * z)`, z ~ N(0, 1)
    /// per source; 0 gives every source the same noise level.
    #[serde(default)]
    pub noise_spread: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_effect() -> f64 {
    1.5
}

pub const PRESET_NAMES: [&str; 4] = ["no_shift", "label_shift", "covariate_shift", "both"];

pub const PRESET_BASE_PREVALENCE: [f64; 8] = [0.05, 0.08, 0.12, 0.15, 0.2, 0.25, 0.3, 0.4];
pub const PRESET_PRIOR_SHIFT: f64 = 1.0;
pub const PRESET_COVARIATE_SHIFT: f64 = 3.0;
/// `both` also perturbs label effects and noise levels per source.
pub const PRESET_EFFECT_SHIFT: f64 = 0.5;
pub const PRESET_NOISE_SPREAD: f64 = 0.3;

/// Fixed specs: 5 sources x 2000 records, 8 labels, 24 features, unit noise.
pub fn preset(name: &str) -> Result<SynthSpec> {
    let (prior, cov, effect, spread) = match name {
        "no_shift" => (0.0, 0.0, 0.0, 0.0),
        "label_shift" => (PRESET_PRIOR_SHIFT, 0.0, 0.0, 0.0),
        "covariate_shift" => (0.0, PRESET_COVARIATE_SHIFT, 0.0, 0.0),
        "both" => (PRESET_PRIOR_SHIFT, PRESET_COVARIATE_SHIFT, PRESET_EFFECT_SHIFT, PRESET_NOISE_SPREAD),
        other => return Err(Error::Config(format!("unknown preset `{other}` (expected one of {PRESET_NAMES:?})"))),
    };
    Ok(SynthSpec {
        n_sources: 5,
        sizes: vec![2000],
        n_labels: 8,
        n_features: 24,
        prevalence: None,
        base_prevalence: PRESET_BASE_PREVALENCE.to_vec(),
        prior_shift: prior,
        covariate_shift: cov,
        effects: None,
        effect_magnitude: default_effect(),
        effect_shift: effect,
        noise_std: 1.0,
        noise_spread: spread,
        seed: 0,
    })
}

pub fn source_id(s: usize) -> String {
    format!("src{s}")
}

pub fn label_code(l: usize) -> String {
    format!("L{l}")
}

/// Realized generative parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthParams {
    /// source x label
    pub prevalence: Vec<Vec<f64>>,
    /// source x label x feature
    pub effects: Vec<Vec<Vec<f64>>>,
    /// source x feature
    pub offsets: Vec<Vec<f64>>,
    /// per-source noise standard deviation
    pub noise: Vec<f64>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn random_direction<R: Rng>(rng: &mut R, d: usize, norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x * norm / len).collect()
}

impl SynthSpec {
    pub fn size_of(&self, s: usize) -> usize {
        if self.sizes.len() == 1 {
            self.sizes[0]
        } else {
            self.sizes[s]
        }
    }

    pub fn total_records(&self) -> usize {
        (0..self.n_sources).map(|s| self.size_of(s)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_sources == 0 || self.n_labels == 0 || self.n_features == 0 {
            return bad("n_sources, n_labels and n_features must be positive".into());
        }
        if !(self.sizes.len() == 1 || self.sizes.len() == self.n_sources) || self.sizes.contains(&0) {
            return bad("sizes must hold one positive value or one per source".into());
        }
        if !(self.noise_std > 0.0) {
            return bad("noise_std must be positive".into());
        }
        if !(self.prior_shift >= 0.0 && self.covariate_shift >= 0.0 && self.effect_shift >= 0.0 && self.noise_spread >= 0.0) {
            return bad("shift magnitudes must be non-negative".into());
        }
        match &self.prevalence {
            Some(p) => {
                if p.len() != self.n_sources || p.iter().any(|r| r.len() != self.n_labels) {
                    return bad("prevalence must be n_sources x n_labels".into());
                }
                if p.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("prevalences must lie in [0, 1]".into());
                }
            }
            None => {
                if self.base_prevalence.len() != self.n_labels {
                    return bad("base_prevalence must have n_labels entries".into());
                }
                if self.base_prevalence.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                    return bad("base prevalences must lie strictly between 0 and 1".into());
                }
            }
        }
        if let Some(e) = &self.effects {
            if e.len() != self.n_labels || e.iter().any(|r| r.len() != self.n_features) {
                return bad("effects must be n_labels x n_features".into());
            }
        }
        Ok(())
    }

    /// Draws the structural parameters (prevalences, effects, offsets).
    pub fn params(&self) -> Result<SynthParams> {
        self.validate()?;
        let mut rng = rng_for(self.seed, "structure");
        let base_effects: Vec<Vec<f64>> = match &self.effects {
            Some(e) => e.clone(),
            None => (0..self.n_labels).map(|_| random_direction(&mut rng, self.n_features, self.effect_magnitude)).collect(),
        };
        let mut prevalence = Vec::with_capacity(self.n_sources);
        let mut offsets = Vec::with_capacity(self.n_sources);
        let mut effects = Vec::with_capacity(self.n_sources);
        let mut noise = Vec::with_capacity(self.n_sources);
        for _ in 0..self.n_sources {
            let row: Vec<f64> = match &self.prevalence {
                Some(p) => p[prevalence.len()].clone(),
                None => self
                    .base_prevalence
                    .iter()
                    .map(|&b| {
                        let z: f64 = rng.sample(StandardNormal);
                        let lz = logit(b) + self.prior_shift * z;
                        1.0 / (1.0 + (-lz).exp())
                    })
                    .collect(),
            };
            prevalence.push(row);
            offsets.push(random_direction(&mut rng, self.n_features, self.covariate_shift));
            let eff: Vec<Vec<f64>> = base_effects
                .iter()
                .map(|e| {
                    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let pert = random_direction(&mut rng, self.n_features, self.effect_shift * norm);
                    e.iter().zip(pert).map(|(a, b)| a + b).collect()
                })
                .collect();
            effects.push(eff);
            let z: f64 = rng.sample(StandardNormal);
            noise.push(self.noise_std * (self.noise_spread * z).exp());
        }
        Ok(SynthParams { prevalence, effects, offsets, noise })
    }
}

pub const AGE_MEAN: f64 = 55.0;
pub const AGE_STD: f64 = 15.0;

fn generate_source(spec: &SynthSpec, params: &SynthParams, s: usize, codes: &[String]) -> Vec<Record> {
    let mut rng = rng_for(spec.seed, &format!("source:{s}"));
    let noise = Normal::new(0.0, params.noise[s]).expect("positive noise");
    let age = Normal::new(AGE_MEAN, AGE_STD).expect("positive spread");
    let src = source_id(s);
    (0..spec.size_of(s))
        .map(|i| {
            let present: Vec<usize> = (0..spec.n_labels).filter(|&l| rng.random::<f64>() < params.prevalence[s][l]).collect();
            let mut x = params.offsets[s].clone();
            for &l in &present {
                x.iter_mut().zip(&params.effects[s][l]).for_each(|(a, b)| *a += b);
            }
            x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            let mut r = Record::new(format!("{src}-{i:05}"), src.clone(), present.iter().map(|&l| codes[l].clone()), Payload::features(x));
            r.normal = present.is_empty();
            r.age = Some(age.sample(&mut rng).clamp(18.0, 95.0).round());
            r.sex = if rng.random::<bool>() { Sex::Male } else { Sex::Female };
            r
        })
        .collect()
}

/// Generates the dataset together with the realized parameters.
pub fn generate_with_params(spec: &SynthSpec) -> Result<(Dataset, SynthParams)> {
    let params = spec.params()?;
    let codes: Vec<String> = (0..spec.n_labels).map(label_code).collect();
    let per_source: Vec<Vec<Record>> = (0..spec.n_sources).into_par_iter().map(|s| generate_source(spec, &params, s, &codes)).collect();
    let ds = Dataset::new(per_source.into_iter().flatten().collect(), LabelSpace::new(codes)?)?;
    Ok((ds, params))
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    Ok(generate_with_params(spec)?.0)
}

/// Writes a generated dataset as manifest plus feature files; returns the manifest path.
pub fn generate_to_dir(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf> {
    let ds = generate(spec)?;
    write_dataset(&ds, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(prior: f64, cov: f64) -> SynthSpec {
        SynthSpec { sizes: vec![300], prior_shift: prior, covariate_shift: cov, ..preset("no_shift").unwrap() }
    }

    #[test]
    fn presets() {
        let p = preset("no_shift").unwrap();
        assert_eq!((p.prior_shift, p.covariate_shift), (0.0, 0.0));
        let b = preset("both").unwrap();
        assert!(b.prior_shift > 0.0 && b.covariate_shift > 0.0);
        assert_eq!(preset("both").unwrap(), b);
        assert_eq!(b.total_records(), 10_000);
        assert!(preset("nope").is_err());
        for n in PRESET_NAMES {
            preset(n).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let spec = small(1.0, 2.0);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(a.len(), 1500);
        assert_eq!(a.sources().len(), 5);
        assert!(a.records().iter().all(|r| matches!(&r.payload, Payload::Features { values, .. } if values.len() == 24)));
        let c = generate(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn certain_prevalence_marks_every_record() {
        let mut prev = vec![vec![0.3; 8]; 5];
        prev[2][4] = 1.0;
        prev[1][0] = 0.0;
        let spec = SynthSpec { prevalence: Some(prev), ..small(0.0, 0.0) };
        let ds = generate(&spec).unwrap();
        for r in ds.records() {
            if r.source_id == "src2" {
                assert!(r.labels.contains("L4"));
            }
            if r.source_id == "src1" {
                assert!(!r.labels.contains("L0"));
            }
        }
    }

    #[test]
    fn prevalence_converges() {
        let spec = SynthSpec { seed: 11, ..preset("both").unwrap() };
        let (ds, params) = generate_with_params(&spec).unwrap();
        let counts = ds.label_counts_by_source();
        for s in 0..5 {
            let n = 2000.0;
            for l in 0..8 {
                let p = params.prevalence[s][l];
                let obs = counts[&source_id(s)].get(&label_code(l)).copied().unwrap_or(0) as f64 / n;
                let bound = 3.0 * (p * (1.0 - p) / n).sqrt();
                assert!((obs - p).abs() <= bound, "source {s} label {l}: {obs} vs {p}");
            }
        }
    }

    #[test]
    fn validation_errors() {
        assert!(SynthSpec { noise_std: 0.0, ..small(0.0, 0.0) }.validate().is_err());
        assert!(SynthSpec { sizes: vec![0], ..small(0.0, 0.0) }.validate().is_err());
        assert!(SynthSpec { sizes: vec![1, 2], ..small(0.0, 0.0) }.validate().is_err());
        assert!(SynthSpec { prevalence: Some(vec![vec![1.5; 8]; 5]), ..small(0.0, 0.0) }.validate().is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            n_sources = 2
            sizes = [10, 20]
            n_labels = 2
            n_features = 3
            base_prevalence = [0.2, 0.5]
            prior_shift = 0.5
            noise_std = 1.0
            seed = 4
        "#;
        let spec: SynthSpec = toml::from_str(text).unwrap();
        assert_eq!(generate(&spec).unwrap().len(), 30);
    }
}
