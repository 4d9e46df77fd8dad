//! Classifier contract and the benchmark learners.

pub mod gbdt;
pub mod logistic;
pub mod optim;
pub mod softmax;

use ndarray::{Array2, ArrayView2, Axis};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::data::{LabelMatrix, LabelSpace};
use crate::error::{Error, Result};
use crate::metrics::ScoreMatrix;

pub use gbdt::{fit_gbdt, GbdtConfig, GbdtLearner, GbdtModel};
pub use logistic::{fit_ovr, LogisticOvr, OvrModel};
pub use softmax::{fit_softmax, SoftmaxModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_iter: 2000, tol: 1e-6, l2: 1e-4, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::Config(format!("l2 must be a finite non-negative number, got {}", self.l2)));
        }
        Ok(())
    }
}

/// Per-column mean and standard deviation from a training set.
/// Constant columns keep unit scale so they map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
        }
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

/// A trained multilabel scorer.
pub trait MultilabelModel: Send + Sync {
    fn labels(&self) -> &LabelSpace;
    fn predict_scores(&self, features: ArrayView2<f64>) -> Result<ScoreMatrix>;
}

/// Anything that can be fit on a feature matrix and a label matrix.
pub trait MultilabelLearner: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, features: ArrayView2<f64>, labels: &LabelMatrix) -> Result<Box<dyn MultilabelModel>>;
}

/// Learner selection as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Logistic {
        #[serde(flatten)]
        train: TrainConfig,
    },
    Gbdt {
        #[serde(flatten)]
        params: GbdtConfig,
    },
}

impl Default for ModelKind {
    fn default() -> Self {
        ModelKind::Logistic { train: TrainConfig::default() }
    }
}

// A derived impl with `flatten` would silently accept unknown keys.
impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mut map = serde_json::Map::deserialize(d)?;
        let kind = match map.remove("kind") {
            Some(serde_json::Value::String(k)) => k,
            Some(other) => return Err(D::Error::custom(format!("model kind must be a string, got {other}"))),
            None => "logistic".to_string(),
        };
        let rest = serde_json::Value::Object(map);
        match kind.as_str() {
            "logistic" => serde_json::from_value(rest).map(|train| ModelKind::Logistic { train }),
            "gbdt" => serde_json::from_value(rest).map(|params| ModelKind::Gbdt { params }),
            other => return Err(D::Error::custom(format!("unknown model kind `{other}`, expected `logistic` or `gbdt`"))),
        }
        .map_err(D::Error::custom)
    }
}

impl ModelKind {
    pub fn learner(&self) -> Result<Box<dyn MultilabelLearner>> {
        match self {
            ModelKind::Logistic { train } => {
                train.validate()?;
                Ok(Box::new(LogisticOvr { cfg: *train }))
            }
            ModelKind::Gbdt { params } => {
                params.validate()?;
                Ok(Box::new(GbdtLearner { cfg: params.clone() }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardizer_centers_and_scales() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let st = Standardizer::fit(x.view());
        assert_eq!(st.transform(x.view()), array![[-1.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn model_kind_round_trips_and_rejects_unknown_keys() {
        let m: ModelKind = serde_json::from_str(r#"{"kind": "gbdt", "n_rounds": 3}"#).unwrap();
        assert!(matches!(&m, ModelKind::Gbdt { params } if params.n_rounds == 3));
        assert_eq!(serde_json::from_str::<ModelKind>(&serde_json::to_string(&m).unwrap()).unwrap(), m);
        assert_eq!(serde_json::from_str::<ModelKind>("{}").unwrap(), ModelKind::default());
        assert!(serde_json::from_str::<ModelKind>(r#"{"kind": "logistic", "rounds": 3}"#).is_err());
        assert!(serde_json::from_str::<ModelKind>(r#"{"kind": "svm"}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { max_iter: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { l2: -1.0, ..Default::default() }.validate().is_err());
    }
}
