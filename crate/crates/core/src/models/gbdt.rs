//! Histogram gradient-boosted regression trees on the logistic loss, one
//! ensemble per label.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::{MultilabelLearner, MultilabelModel};
use crate::data::{LabelMatrix, LabelSpace};
use crate::error::{Error, Result};
use crate::metrics::ScoreMatrix;

pub const GBDT_SCHEMA: &str = "mscv.gbdt.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub max_bins: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig { n_rounds: 100, max_depth: 6, learning_rate: 0.3, lambda: 1.0, gamma: 0.0, min_child_weight: 1.0, max_bins: 256 }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.max_bins < 2 || self.max_bins > u16::MAX as usize {
            return Err(Error::Config("gbdt: max_depth must be >= 1 and max_bins in 2..=65535".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) || !(self.gamma >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(Error::Config("gbdt: learning_rate must be positive; lambda, gamma, min_child_weight non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base_margin: f64,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub schema: String,
    pub labels: LabelSpace,
    pub n_features: usize,
    pub ensembles: Vec<Option<Ensemble>>,
    pub base_rates: Vec<f64>,
    pub skipped: Vec<String>,
}

/// Per-feature cut points; bin index is the number of cuts `<= x`.
struct Binned {
    cuts: Vec<Vec<f64>>,
    /// column-major bin indices
    bins: Vec<Vec<u16>>,
}

fn build_bins(x: ArrayView2<f64>, max_bins: usize) -> Binned {
    let mut cuts = Vec::with_capacity(x.ncols());
    let mut bins = Vec::with_capacity(x.ncols());
    for col in x.axis_iter(Axis(1)) {
        let mut v: Vec<f64> = col.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        let c: Vec<f64> = if v.len() <= max_bins {
            v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut sorted: Vec<f64> = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut c: Vec<f64> = (1..max_bins)
                .map(|q| {
                    let pos = q * sorted.len() / max_bins;
                    0.5 * (sorted[pos - 1] + sorted[pos])
                })
                .collect();
            c.dedup();
            c
        };
        bins.push(col.iter().map(|&xv| c.partition_point(|&t| t <= xv) as u16).collect());
        cuts.push(c);
    }
    Binned { cuts, bins }
}

struct Grower<'a> {
    data: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbdtConfig,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.cfg.lambda) * self.cfg.learning_rate
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return id;
        }
        let lambda = self.cfg.lambda;
        let parent = g * g / (h + lambda);
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, col) in self.data.bins.iter().enumerate() {
            let nb = self.data.cuts[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            for &i in &rows {
                let b = col[i] as usize;
                hg[b] += self.grad[i];
                hh[b] += self.hess[i];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent) - self.cfg.gamma;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, feature, b)) = best else { return id };
        let col = &self.data.bins[feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| (col[i] as usize) <= b);
        if l.is_empty() || r.is_empty() {
            return id;
        }
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold: self.data.cuts[feature][b], left, right };
        id
    }
}

fn fit_ensemble(data: &Binned, raw: ArrayView2<f64>, y: &[f64], cfg: &GbdtConfig) -> Ensemble {
    let n = y.len();
    let rate = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_margin = (rate / (1.0 - rate)).ln();
    let mut margin = vec![base_margin; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    for _ in 0..cfg.n_rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let mut grower = Grower { data, grad: &grad, hess: &hess, cfg, nodes: Vec::new() };
        grower.grow((0..n).collect(), 0);
        let tree = Tree { nodes: grower.nodes };
        for (i, row) in raw.axis_iter(Axis(0)).enumerate() {
            margin[i] += tree.eval(row.as_slice().expect("standard layout"));
        }
        trees.push(tree);
    }
    Ensemble { base_margin, trees }
}

pub fn fit_gbdt(features: ArrayView2<f64>, lm: &LabelMatrix, cfg: &GbdtConfig) -> Result<GbdtModel> {
    cfg.validate()?;
    let (n, d) = features.dim();
    if n == 0 || d == 0 {
        return Err(Error::invalid("fit_gbdt: empty feature matrix"));
    }
    if lm.n_rows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: lm.n_rows() });
    }
    let raw = features.as_standard_layout().to_owned();
    let data = build_bins(raw.view(), cfg.max_bins);
    let results: Vec<(Option<Ensemble>, f64)> = (0..lm.n_labels())
        .into_par_iter()
        .map(|j| {
            let pos = lm.positives(j);
            let rate = pos as f64 / n as f64;
            if pos == 0 || pos == n {
                return (None, rate);
            }
            let y: Vec<f64> = lm.column(j).iter().map(|&v| v as f64).collect();
            (Some(fit_ensemble(&data, raw.view(), &y, cfg)), rate)
        })
        .collect();
    let skipped = results
        .iter()
        .enumerate()
        .filter(|(_, (e, _))| e.is_none())
        .map(|(j, _)| lm.labels().code(j).to_string())
        .collect();
    let (ensembles, base_rates) = results.into_iter().unzip();
    Ok(GbdtModel { schema: GBDT_SCHEMA.into(), labels: lm.labels().clone(), n_features: d, ensembles, base_rates, skipped })
}

impl GbdtModel {
    pub fn predict_scores(&self, features: ArrayView2<f64>) -> Result<ScoreMatrix> {
        if features.ncols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, actual: features.ncols() });
        }
        let raw = features.as_standard_layout().to_owned();
        let flat: Vec<f64> = (0..raw.nrows())
            .into_par_iter()
            .flat_map_iter(|i| {
                let row = raw.row(i).to_slice().expect("standard layout");
                self.ensembles.iter().enumerate().map(move |(j, e)| match e {
                    Some(e) => sigmoid(e.base_margin + e.trees.iter().map(|t| t.eval(row)).sum::<f64>()),
                    None => self.base_rates[j],
                })
            })
            .collect();
        let out = Array2::from_shape_vec((raw.nrows(), self.labels.len()), flat).expect("row-major scores");
        ScoreMatrix::new(out, self.labels.clone())
    }
}

impl MultilabelModel for GbdtModel {
    fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    fn predict_scores(&self, features: ArrayView2<f64>) -> Result<ScoreMatrix> {
        GbdtModel::predict_scores(self, features)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GbdtLearner {
    pub cfg: GbdtConfig,
}

impl MultilabelLearner for GbdtLearner {
    fn name(&self) -> &str {
        "gbdt"
    }

    fn fit(&self, features: ArrayView2<f64>, labels: &LabelMatrix) -> Result<Box<dyn MultilabelModel>> {
        Ok(Box::new(fit_gbdt(features, labels, &self.cfg)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_auc;
    use crate::models::{fit_ovr, TrainConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xor(seed: u64, n: usize) -> (Array2<f64>, LabelMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, 1), |(i, _)| u8::from((x[[i, 0]] > 0.0) != (x[[i, 1]] > 0.0)));
        (x, LabelMatrix::new(y, LabelSpace::new(["xor"]).unwrap()).unwrap())
    }

    fn train_auc(sm: &ScoreMatrix, lm: &LabelMatrix) -> f64 {
        roc_auc(&sm.column(0).to_vec(), &lm.column(0).to_vec()).unwrap()
    }

    #[test]
    fn xor_is_learned_by_trees_not_lines() {
        let (x, lm) = xor(1, 400);
        let g = fit_gbdt(x.view(), &lm, &GbdtConfig::default()).unwrap();
        assert!(train_auc(&g.predict_scores(x.view()).unwrap(), &lm) > 0.9);
        let lr = fit_ovr(x.view(), &lm, &TrainConfig::default()).unwrap();
        assert!(train_auc(&lr.predict_scores(x.view()).unwrap(), &lm) < 0.7);
    }

    #[test]
    fn stump_has_two_values() {
        let (x, lm) = xor(2, 100);
        let cfg = GbdtConfig { n_rounds: 1, max_depth: 1, ..Default::default() };
        let sm = fit_gbdt(x.view(), &lm, &cfg).unwrap().predict_scores(x.view()).unwrap();
        let mut v = sm.column(0).to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn zero_rounds_is_base_rate() {
        let (x, lm) = xor(3, 50);
        let rate = lm.positives(0) as f64 / 50.0;
        let cfg = GbdtConfig { n_rounds: 0, ..Default::default() };
        let sm = fit_gbdt(x.view(), &lm, &cfg).unwrap().predict_scores(x.view()).unwrap();
        assert!(sm.scores().iter().all(|s| (s - rate).abs() < 1e-12));
    }

    #[test]
    fn bins_respect_thresholds() {
        let x = ndarray::array![[1.0], [2.0], [2.0], [5.0]];
        let b = build_bins(x.view(), 256);
        assert_eq!(b.cuts[0], vec![1.5, 3.5]);
        assert_eq!(b.bins[0], vec![0, 1, 1, 2]);
        let x = Array2::from_shape_fn((1000, 1), |(i, _)| i as f64);
        let b = build_bins(x.view(), 16);
        assert_eq!(b.cuts[0].len(), 15);
    }

    #[test]
    fn deterministic() {
        let (x, lm) = xor(4, 200);
        let a = fit_gbdt(x.view(), &lm, &GbdtConfig::default()).unwrap();
        let b = fit_gbdt(x.view(), &lm, &GbdtConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
