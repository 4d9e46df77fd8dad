//! L2-regularized logistic regression: binary solver and one-vs-rest wrapper.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{minimize, LbfgsOptions};
use super::{MultilabelLearner, MultilabelModel, Standardizer, TrainConfig};
use crate::data::{LabelMatrix, LabelSpace};
use crate::error::{Error, Result};
use crate::metrics::ScoreMatrix;

pub const OVR_SCHEMA: &str = "mscv.ovr.v1";

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy plus `l2 / 2 * |w|^2` (intercept unpenalized).
///
/// `params` holds the weights followed by the intercept; the gradient is
/// written into `grad` with the same layout.
pub fn binary_objective(x: ArrayView2<f64>, y: ArrayView1<f64>, l2: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let d = x.ncols();
    let n = x.nrows() as f64;
    let w = ArrayView1::from(&params[..d]);
    let b = params[d];
    let z = x.dot(&w);
    let mut loss = 0.0;
    let mut resid = Array1::<f64>::zeros(x.nrows());
    for i in 0..x.nrows() {
        let zi = z[i] + b;
        loss += softplus(zi) - y[i] * zi;
        resid[i] = sigmoid(zi) - y[i];
    }
    let gw = x.t().dot(&resid);
    let mut penalty = 0.0;
    for j in 0..d {
        grad[j] = gw[j] / n + l2 * params[j];
        penalty += params[j] * params[j];
    }
    grad[d] = resid.sum() / n;
    loss / n + 0.5 * l2 * penalty
}

/// Weights and intercept of one fitted binary model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearHead {
    pub fn score(&self, row: ArrayView1<f64>) -> f64 {
        sigmoid(row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
    }
}

/// Fits a binary model on `x` as given (no standardization).
pub fn fit_binary(x: ArrayView2<f64>, y: ArrayView1<f64>, cfg: &TrainConfig) -> LinearHead {
    let d = x.ncols();
    let mean_y = y.mean().unwrap_or(0.5).clamp(1e-6, 1.0 - 1e-6);
    let mut x0 = vec![0.0; d + 1];
    x0[d] = (mean_y / (1.0 - mean_y)).ln();
    let opts = LbfgsOptions { max_iter: cfg.max_iter, tol: cfg.tol, memory: 10 };
    let m = minimize(x0, |p, g| binary_objective(x, y, cfg.l2, p, g), opts);
    if !m.converged {
        log::debug!("logistic fit stopped after {} iterations, |grad| = {:.3e}", m.iterations, m.grad_norm);
    }
    let intercept = m.x[d];
    let mut weights = m.x;
    weights.truncate(d);
    LinearHead { weights, intercept, iterations: m.iterations, converged: m.converged }
}

/// One binary logistic model per label over internally standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrModel {
    pub schema: String,
    pub labels: LabelSpace,
    pub standardizer: Standardizer,
    /// `None` for labels skipped at training time.
    pub heads: Vec<Option<LinearHead>>,
    /// Training base rate per label; the constant score of skipped labels.
    pub base_rates: Vec<f64>,
    pub skipped: Vec<String>,
}

pub fn fit_ovr(features: ArrayView2<f64>, lm: &LabelMatrix, cfg: &TrainConfig) -> Result<OvrModel> {
    cfg.validate()?;
    let (n, d) = features.dim();
    if n == 0 {
        return Err(Error::invalid("fit_ovr: no training rows"));
    }
    if d == 0 {
        return Err(Error::invalid("fit_ovr: zero feature dimension"));
    }
    if lm.n_rows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: lm.n_rows() });
    }
    let standardizer = Standardizer::fit(features);
    let xs = standardizer.transform(features);

    let results: Vec<(Option<LinearHead>, f64)> = (0..lm.n_labels())
        .into_par_iter()
        .map(|j| {
            let pos = lm.positives(j);
            let rate = pos as f64 / n as f64;
            if pos == 0 || pos == n {
                return (None, rate);
            }
            let y: Array1<f64> = lm.column(j).mapv(f64::from);
            (Some(fit_binary(xs.view(), y.view(), cfg)), rate)
        })
        .collect();

    let skipped = results
        .iter()
        .enumerate()
        .filter(|(_, (h, _))| h.is_none())
        .map(|(j, _)| lm.labels().code(j).to_string())
        .collect();
    let (heads, base_rates) = results.into_iter().unzip();
    Ok(OvrModel { schema: OVR_SCHEMA.into(), labels: lm.labels().clone(), standardizer, heads, base_rates, skipped })
}

impl OvrModel {
    pub fn feature_dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn predict_scores(&self, features: ArrayView2<f64>) -> Result<ScoreMatrix> {
        if features.ncols() != self.feature_dim() {
            return Err(Error::DimensionMismatch { expected: self.feature_dim(), actual: features.ncols() });
        }
        let xs = self.standardizer.transform(features);
        let k = self.labels.len();
        let flat: Vec<f64> = (0..xs.nrows())
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = xs.row(i);
                self.heads.iter().enumerate().map(move |(j, head)| match head {
                    Some(h) => h.score(x),
                    None => self.base_rates[j],
                })
            })
            .collect();
        let out = Array2::from_shape_vec((xs.nrows(), k), flat).expect("row-major scores");
        ScoreMatrix::new(out, self.labels.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<OvrModel> {
        let m: OvrModel = serde_json::from_str(text)?;
        if m.schema != OVR_SCHEMA {
            return Err(Error::invalid(format!("unsupported model schema `{}`", m.schema)));
        }
        Ok(m)
    }
}

impl MultilabelModel for OvrModel {
    fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    fn predict_scores(&self, features: ArrayView2<f64>) -> Result<ScoreMatrix> {
        OvrModel::predict_scores(self, features)
    }
}

/// One-vs-rest logistic regression learner.
#[derive(Debug, Clone, Default)]
pub struct LogisticOvr {
    pub cfg: TrainConfig,
}

impl MultilabelLearner for LogisticOvr {
    fn name(&self) -> &str {
        "logistic_ovr"
    }

    fn fit(&self, features: ArrayView2<f64>, labels: &LabelMatrix) -> Result<Box<dyn MultilabelModel>> {
        Ok(Box::new(fit_ovr(features, labels, &self.cfg)?))
    }
}
