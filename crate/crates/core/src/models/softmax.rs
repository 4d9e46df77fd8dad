//! Multiclass softmax regression with L2 penalty.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::optim::{minimize, LbfgsOptions};
use super::{Standardizer, TrainConfig};
use crate::error::{Error, Result};

pub const SOFTMAX_SCHEMA: &str = "mscv.softmax.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub schema: String,
    /// Sorted class names; row `k` of `weights` belongs to `classes[k]`.
    pub classes: Vec<String>,
    pub standardizer: Standardizer,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Mean cross-entropy plus `l2 / 2 * |W|^2`. Parameters are laid out class by
/// class as `[w_k (d values), b_k]`.
pub fn softmax_objective(x: ArrayView2<f64>, y: &[usize], k: usize, l2: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let d = x.ncols();
    let n = x.nrows() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        for c in 0..k {
            let p = &params[c * (d + 1)..(c + 1) * (d + 1)];
            z[c] = row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + p[d];
        }
        softmax_in_place(&mut z);
        loss -= z[y[i]].max(f64::MIN_POSITIVE).ln();
        for c in 0..k {
            let r = z[c] - if c == y[i] { 1.0 } else { 0.0 };
            let g = &mut grad[c * (d + 1)..(c + 1) * (d + 1)];
            for (gj, xj) in g.iter_mut().zip(row.iter()) {
                *gj += r * xj;
            }
            g[d] += r;
        }
    }
    let mut penalty = 0.0;
    for c in 0..k {
        for j in 0..=d {
            let idx = c * (d + 1) + j;
            grad[idx] /= n;
            if j < d {
                grad[idx] += l2 * params[idx];
                penalty += params[idx] * params[idx];
            }
        }
    }
    loss / n + 0.5 * l2 * penalty
}

pub fn fit_softmax<S: AsRef<str>>(features: ArrayView2<f64>, classes: &[S], cfg: &TrainConfig) -> Result<SoftmaxModel> {
    cfg.validate()?;
    let (n, d) = features.dim();
    if n == 0 || d == 0 {
        return Err(Error::invalid("fit_softmax: empty feature matrix"));
    }
    if classes.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: classes.len() });
    }
    let names: Vec<String> =
        classes.iter().map(|c| c.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    if names.len() < 2 {
        return Err(Error::invalid("fit_softmax: need at least two classes"));
    }
    let y: Vec<usize> = classes.iter().map(|c| names.binary_search(&c.as_ref().to_string()).unwrap()).collect();
    let k = names.len();
    let standardizer = Standardizer::fit(features);
    let xs = standardizer.transform(features);

    let mut x0 = vec![0.0; k * (d + 1)];
    for c in 0..k {
        let prior = y.iter().filter(|&&v| v == c).count() as f64 / n as f64;
        x0[c * (d + 1) + d] = prior.ln();
    }
    let opts = LbfgsOptions { max_iter: cfg.max_iter, tol: cfg.tol, memory: 10 };
    let m = minimize(x0, |p, g| softmax_objective(xs.view(), &y, k, cfg.l2, p, g), opts);
    let weights = (0..k).map(|c| m.x[c * (d + 1)..c * (d + 1) + d].to_vec()).collect();
    let intercepts = (0..k).map(|c| m.x[c * (d + 1) + d]).collect();
    Ok(SoftmaxModel {
        schema: SOFTMAX_SCHEMA.into(),
        classes: names,
        standardizer,
        weights,
        intercepts,
        iterations: m.iterations,
        converged: m.converged,
    })
}

impl SoftmaxModel {
    pub fn predict_proba(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        let d = self.standardizer.mean.len();
        if features.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: features.ncols() });
        }
        let xs = self.standardizer.transform(features);
        let k = self.classes.len();
        let mut out = Array2::zeros((features.nrows(), k));
        for (row, mut o) in xs.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            let mut z: Vec<f64> = (0..k)
                .map(|c| row.iter().zip(&self.weights[c]).map(|(a, b)| a * b).sum::<f64>() + self.intercepts[c])
                .collect();
            softmax_in_place(&mut z);
            o.iter_mut().zip(z).for_each(|(a, b)| *a = b);
        }
        Ok(out)
    }

    /// Index into `classes` of the most probable class per row; ties go to the lower index.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        let p = self.predict_proba(features)?;
        Ok(p.axis_iter(Axis(0))
            .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn clouds(seed: u64, n_per: &[usize], sep: f64) -> (Array2<f64>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let total: usize = n_per.iter().sum();
        let mut x = Array2::zeros((total, 3));
        let mut y = Vec::new();
        let mut i = 0;
        for (c, &m) in n_per.iter().enumerate() {
            for _ in 0..m {
                for j in 0..3 {
                    x[[i, j]] = normal.sample(&mut rng) + if j == 0 { sep * c as f64 } else { 0.0 };
                }
                y.push(format!("s{c}"));
                i += 1;
            }
        }
        (x, y)
    }

    fn accuracy(m: &SoftmaxModel, x: &Array2<f64>, y: &[String]) -> f64 {
        let pred = m.predict(x.view()).unwrap();
        pred.iter().zip(y).filter(|(p, t)| &m.classes[**p] == *t).count() as f64 / y.len() as f64
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = clouds(4, &[10, 12, 8], 1.0);
        let yi: Vec<usize> = y.iter().map(|s| s[1..].parse().unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 0.5).unwrap();
        let np = 3 * 4;
        for _ in 0..10 {
            let p: Vec<f64> = (0..np).map(|_| normal.sample(&mut rng)).collect();
            let mut g = vec![0.0; np];
            softmax_objective(x.view(), &yi, 3, 0.2, &p, &mut g);
            let mut scratch = vec![0.0; np];
            for k in 0..np {
                let h = 1e-5;
                let (mut up, mut dn) = (p.clone(), p.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (softmax_objective(x.view(), &yi, 3, 0.2, &up, &mut scratch)
                    - softmax_objective(x.view(), &yi, 3, 0.2, &dn, &mut scratch))
                    / (2.0 * h);
                assert!((fd - g[k]).abs() / g[k].abs().max(1e-8) < 1e-5);
            }
        }
    }

    #[test]
    fn separated_clouds_are_learned() {
        let (x, y) = clouds(1, &[200, 200], 4.0);
        let m = fit_softmax(x.view(), &y, &TrainConfig::default()).unwrap();
        let (xt, yt) = clouds(2, &[200, 200], 4.0);
        assert!(accuracy(&m, &xt, &yt) > 0.95);
        let p = m.predict_proba(xt.view()).unwrap();
        for r in p.axis_iter(Axis(0)) {
            assert!((r.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_distributions_give_majority_share() {
        let (x, y) = clouds(5, &[600, 250, 150], 0.0);
        let m = fit_softmax(x.view(), &y, &TrainConfig::default()).unwrap();
        let (xt, yt) = clouds(6, &[600, 250, 150], 0.0);
        let acc = accuracy(&m, &xt, &yt);
        assert!((acc - 0.6).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn single_class_is_an_error() {
        let (x, _) = clouds(1, &[5], 0.0);
        let y = vec!["a"; 5];
        assert!(fit_softmax(x.view(), &y, &TrainConfig::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let (x, y) = clouds(3, &[50, 60, 40], 1.0);
        let a = fit_softmax(x.view(), &y, &TrainConfig::default()).unwrap();
        let b = fit_softmax(x.view(), &y, &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
