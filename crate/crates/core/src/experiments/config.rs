use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, restrict_labels, Dataset};
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::signal::PrepConfig;
use crate::synth::{generate, preset, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SingleSource,
    MultiSource,
    SourcePrediction,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::SingleSource => "single_source",
            Protocol::MultiSource => "multi_source",
            Protocol::SourcePrediction => "source_prediction",
        }
    }
}

/// Inputs for the source classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSet {
    /// Payload features (or lead-II features for signals), age and sex.
    FeaturesDemographics,
    /// As above plus the diagnosis vector.
    FeaturesDemographicsLabels,
    /// Diagnosis vector only.
    LabelsOnly,
}

impl InputSet {
    pub const ALL: [InputSet; 3] = [InputSet::FeaturesDemographics, InputSet::FeaturesDemographicsLabels, InputSet::LabelsOnly];

    pub fn name(self) -> &'static str {
        match self {
            InputSet::FeaturesDemographics => "features_demographics",
            InputSet::FeaturesDemographicsLabels => "features_demographics_labels",
            InputSet::LabelsOnly => "labels_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcePredictionConfig {
    pub input_sets: Vec<InputSet>,
    pub train_frac: f64,
}

impl Default for SourcePredictionConfig {
    fn default() -> Self {
        SourcePredictionConfig { input_sets: InputSet::ALL.to_vec(), train_frac: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Manifest CSV; relative paths resolve against the config file's directory.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Generator settings: either a full spec, or `preset = "<name>"` plus
    /// any spec fields to override.
    #[serde(default)]
    pub synthetic: Option<toml::Table>,
    /// Keep only these label codes.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    #[serde(default)]
    pub seed: u64,
    /// Fold count; defaults to 5 for single-source and to the number of
    /// training sources for multi-source.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub prep: PrepConfig,
    #[serde(default)]
    pub source_prediction: SourcePredictionConfig,
}

impl ExperimentConfig {
    /// A config over an in-memory dataset with default model and prep settings.
    pub fn new(protocol: Protocol, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            protocol,
            seed,
            k: None,
            output_dir: None,
            data: DataConfig::default(),
            model: ModelKind::default(),
            prep: PrepConfig::default(),
            source_prediction: SourcePredictionConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.data.manifest {
            cfg.data.manifest = Some(base.join(m));
        }
        if let Some(o) = &cfg.output_dir {
            cfg.output_dir = Some(base.join(o));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.k {
            if k < 2 {
                return Err(Error::Config(format!("k must be at least 2, got {k}")));
            }
        }
        match (&self.data.manifest, &self.data.synthetic) {
            (Some(_), Some(_)) => return Err(Error::Config("data: give either `manifest` or `synthetic`, not both".into())),
            (None, None) => return Err(Error::Config("data: one of `manifest` or `synthetic` is required".into())),
            _ => {}
        }
        self.model.learner()?;
        self.prep.validate()?;
        if self.protocol == Protocol::SourcePrediction {
            let sp = &self.source_prediction;
            if sp.input_sets.is_empty() {
                return Err(Error::Config("source_prediction.input_sets is empty".into()));
            }
            if !(sp.train_frac > 0.0 && sp.train_frac < 1.0) {
                return Err(Error::Config("source_prediction.train_frac must lie strictly between 0 and 1".into()));
            }
        }
        if self.data.synthetic.is_some() {
            self.synth_spec()?;
        }
        Ok(())
    }

    /// The generator spec described by `[data.synthetic]`. The top-level seed
    /// is used when the table gives none.
    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let table = self.data.synthetic.clone().ok_or_else(|| Error::Config("no synthetic data section".into()))?;
        synth_spec_from_table(table, self.seed)
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let ds = match (&self.data.manifest, &self.data.synthetic) {
            (Some(m), None) => load_dataset(m)?,
            (None, Some(_)) => generate(&self.synth_spec()?)?,
            _ => return Err(Error::Config("data: exactly one of `manifest` or `synthetic` is required".into())),
        };
        match &self.data.labels {
            Some(keep) => restrict_labels(&ds, keep),
            None => Ok(ds),
        }
    }
}

pub fn synth_spec_from_table(mut table: toml::Table, default_seed: u64) -> Result<SynthSpec> {
    let mut merged = match table.remove("preset") {
        Some(toml::Value::String(name)) => toml::Table::try_from(preset(&name)?).map_err(|e| Error::Config(e.to_string()))?,
        Some(other) => return Err(Error::Config(format!("synthetic.preset must be a string, got {other}"))),
        None => toml::Table::new(),
    };
    merged.insert("seed".into(), toml::Value::Integer(default_seed as i64));
    merged.extend(table);
    // optional fields that are None serialize as absent, so defaults still apply
    let spec: SynthSpec = merged.try_into().map_err(|e: toml::de::Error| Error::Config(format!("synthetic: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::parse(
            r#"
            protocol = "multi_source"
            seed = 9
            k = 4
            [data.synthetic]
            preset = "both"
            sizes = [100]
            [model]
            kind = "logistic"
            l2 = 0.01
            [prep]
            target_fs = 500.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.protocol, Protocol::MultiSource);
        let spec = cfg.synth_spec().unwrap();
        assert_eq!((spec.seed, spec.sizes.clone(), spec.prior_shift), (9, vec![100], crate::synth::PRESET_PRIOR_SHIFT));
        match cfg.model {
            ModelKind::Logistic { train } => assert_eq!((train.l2, train.max_iter), (0.01, 2000)),
            _ => panic!("wrong model"),
        }
        assert_eq!(cfg.prep.target_fs, 500.0);
    }

    #[test]
    fn gbdt_section() {
        let cfg = ExperimentConfig::parse(
            "protocol = \"single_source\"\n[data]\nmanifest = \"m.csv\"\n[model]\nkind = \"gbdt\"\nn_rounds = 5\n",
        )
        .unwrap();
        assert!(matches!(cfg.model, ModelKind::Gbdt { ref params } if params.n_rounds == 5 && params.max_depth == 6));
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "protocol = \"multi_source\"\n[data]\n",
            "protocol = \"multi_source\"\nk = 1\n[data]\nmanifest = \"m\"\n",
            "protocol = \"nope\"\n[data]\nmanifest = \"m\"\n",
            "protocol = \"multi_source\"\ncolour = 1\n[data]\nmanifest = \"m\"\n",
            "protocol = \"multi_source\"\n[data.synthetic]\npreset = \"huge\"\n",
            "protocol = \"source_prediction\"\n[data]\nmanifest = \"m\"\n[source_prediction]\ntrain_frac = 1.0\n",
            "protocol = \"multi_source\"\n[data]\nmanifest = \"m\"\n[model]\nkind = \"logistic\"\ntol = -1.0\n",
            "protocol = \"multi_source\"\n[data]\nmanifest = \"m\"\n[model]\nkind = \"logistic\"\nl3 = 1.0\n",
            "protocol = \"multi_source\"\n[data]\nmanifest = \"m\"\n[model]\nkind = \"gbdt\"\nrounds = 1\n",
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.kind(), crate::ErrorKind::Config, "{text}");
        }
    }
}
