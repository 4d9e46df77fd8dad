//! ROC-AUC (per label, macro, micro), source-prediction accuracy, and the
//! mean error / standard deviation / RMSE summary of CV estimate errors.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{LabelMatrix, LabelSpace};
use crate::error::{Error, Result};

/// Per-record per-label classifier scores, columns aligned to `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    scores: Array2<f64>,
    labels: LabelSpace,
}

impl ScoreMatrix {
    pub fn new(scores: Array2<f64>, labels: LabelSpace) -> Result<ScoreMatrix> {
        if scores.ncols() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), actual: scores.ncols() });
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("score matrix contains non-finite entries"));
        }
        Ok(ScoreMatrix { scores, labels })
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.scores.nrows()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.scores.column(j)
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic with midranks:
/// P(s+ > s-) + 0.5 P(s+ = s-).
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), actual: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("roc_auc: non-finite score"));
    }
    let n_pos = truth.iter().filter(|&&t| t != 0).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("roc_auc: truth must contain both classes"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based) midranks of the positives. Ranks are half-integers, so
    // this sum is exact in f64 for any realistic n.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| truth[k] != 0).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Labels with at least one positive in both the training and evaluation slices.
pub fn valid_labels(train: &LabelMatrix, eval: &LabelMatrix) -> Vec<String> {
    train
        .labels()
        .iter()
        .enumerate()
        .filter(|&(j, code)| {
            train.positives(j) > 0 && eval.labels().position(code).is_some_and(|k| eval.positives(k) > 0)
        })
        .map(|(_, code)| code.to_string())
        .collect()
}

fn aligned_columns<'a, S: AsRef<str>>(
    sm: &ScoreMatrix,
    lm: &LabelMatrix,
    valid: &'a [S],
) -> Result<Vec<(&'a str, usize, usize)>> {
    if sm.n_rows() != lm.n_rows() {
        return Err(Error::DimensionMismatch { expected: lm.n_rows(), actual: sm.n_rows() });
    }
    valid
        .iter()
        .map(|code| {
            let code = code.as_ref();
            let s = sm.labels().position(code).ok_or_else(|| Error::UnknownLabel(code.to_string()))?;
            let t = lm.labels().position(code).ok_or_else(|| Error::UnknownLabel(code.to_string()))?;
            Ok((code, s, t))
        })
        .collect()
}

/// AUC of every valid label that has both classes in the evaluation slice.
pub fn per_label_auc<S: AsRef<str>>(sm: &ScoreMatrix, lm: &LabelMatrix, valid: &[S]) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (code, s, t) in aligned_columns(sm, lm, valid)? {
        let truth: Vec<u8> = lm.column(t).to_vec();
        let pos = truth.iter().filter(|&&v| v != 0).count();
        if pos == 0 || pos == truth.len() {
            continue;
        }
        let scores: Vec<f64> = sm.column(s).to_vec();
        out.push((code.to_string(), roc_auc(&scores, &truth)?));
    }
    Ok(out)
}

/// Unweighted mean of per-label AUCs over the valid labels.
pub fn macro_auc<S: AsRef<str>>(sm: &ScoreMatrix, lm: &LabelMatrix, valid: &[S]) -> Result<f64> {
    let per = per_label_auc(sm, lm, valid)?;
    if per.is_empty() {
        return Err(Error::invalid("macro_auc: no valid label with both classes"));
    }
    Ok(per.iter().map(|(_, a)| a).sum::<f64>() / per.len() as f64)
}

/// AUC of all (score, truth) pairs pooled over the valid labels.
pub fn micro_auc<S: AsRef<str>>(sm: &ScoreMatrix, lm: &LabelMatrix, valid: &[S]) -> Result<f64> {
    let cols = aligned_columns(sm, lm, valid)?;
    if cols.is_empty() {
        return Err(Error::invalid("micro_auc: empty valid label set"));
    }
    let mut scores = Vec::with_capacity(cols.len() * sm.n_rows());
    let mut truth = Vec::with_capacity(scores.capacity());
    for (_, s, t) in cols {
        scores.extend(sm.column(s).iter().copied());
        truth.extend(lm.column(t).iter().copied());
    }
    roc_auc(&scores, &truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEntry {
    pub context_id: String,
    pub cv_estimate: f64,
    pub test_value: f64,
    pub signed_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub entries: Vec<ReliabilityEntry>,
    pub me: f64,
    pub sd: f64,
    pub rmse: f64,
}

/// Mean error, sample standard deviation (n - 1) and sqrt(me^2 + sd^2).
pub fn error_summary(errors: &[f64]) -> Result<(f64, f64, f64)> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::invalid(format!("reliability needs at least 2 errors, got {n}")));
    }
    let me = errors.iter().sum::<f64>() / n as f64;
    let var = errors.iter().map(|e| (e - me).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    Ok((me, sd, (me * me + sd * sd).sqrt()))
}

/// Builds a report from (context, CV estimate, test value) triples.
pub fn reliability<S, I>(pairs: I) -> Result<ReliabilityReport>
where
    S: Into<String>,
    I: IntoIterator<Item = (S, f64, f64)>,
{
    let entries: Vec<ReliabilityEntry> = pairs
        .into_iter()
        .map(|(ctx, cv, test)| ReliabilityEntry {
            context_id: ctx.into(),
            cv_estimate: cv,
            test_value: test,
            signed_error: cv - test,
        })
        .collect();
    let errors: Vec<f64> = entries.iter().map(|e| e.signed_error).collect();
    let (me, sd, rmse) = error_summary(&errors)?;
    Ok(ReliabilityReport { entries, me, sd, rmse })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: Vec<String>,
    /// `counts[truth][predicted]`
    pub counts: Vec<Vec<usize>>,
    pub accuracy: f64,
}

pub fn confusion_and_accuracy<S: AsRef<str>>(pred: &[usize], truth: &[usize], classes: &[S]) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), actual: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::invalid("confusion matrix of empty input"));
    }
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(Error::invalid(format!("class id {} out of range 0..{k}", p.max(t))));
        }
        counts[t][p] += 1;
    }
    let correct: usize = (0..k).map(|i| counts[i][i]).sum();
    Ok(Confusion {
        classes: classes.iter().map(|c| c.as_ref().to_string()).collect(),
        counts,
        accuracy: correct as f64 / truth.len() as f64,
    })
}

/// Accuracy of always predicting the most frequent class.
pub fn majority_baseline(truth: &[usize], n_classes: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; n_classes];
    for &t in truth {
        if t < n_classes {
            counts[t] += 1;
        }
    }
    *counts.iter().max().unwrap_or(&0) as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn pair_count_auc(scores: &[f64], truth: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &ti) in truth.iter().enumerate() {
            if ti == 0 {
                continue;
            }
            for (j, &tj) in truth.iter().enumerate() {
                if tj != 0 {
                    continue;
                }
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        // pairs (pos, neg): (0.8, 0.2) (0.8, 0.5) (0.5, 0.2) (0.5, 0.5) -> (1 + 1 + 1 + 0.5) / 4
        let s = [0.2, 0.8, 0.5, 0.5];
        let t = [0, 1, 1, 0];
        assert_eq!(pair_count_auc(&s, &t), 0.875);
        assert_eq!(roc_auc(&s, &t).unwrap(), 0.875);
        assert!(roc_auc(&[0.2, 0.3], &[1, 1]).is_err());
        assert!(roc_auc(&[f64::NAN, 0.3], &[1, 0]).is_err());
    }

    fn space(codes: &[&str]) -> LabelSpace {
        LabelSpace::new(codes.iter().copied()).unwrap()
    }

    #[test]
    fn macro_and_filtering() {
        let labels = space(&["a", "b"]);
        // a: perfect; b: all ties -> 0.5
        let sm = ScoreMatrix::new(array![[0.9, 0.5], [0.1, 0.5], [0.8, 0.5], [0.2, 0.5]], labels.clone()).unwrap();
        let lm = LabelMatrix::new(array![[1, 1], [0, 0], [1, 0], [0, 1]], labels.clone()).unwrap();
        assert_eq!(macro_auc(&sm, &lm, &["a", "b"]).unwrap(), 0.75);

        // b has no evaluation positives: excluded
        let lm2 = LabelMatrix::new(array![[1, 0], [0, 0], [1, 0], [0, 0]], labels).unwrap();
        assert_eq!(macro_auc(&sm, &lm2, &["a", "b"]).unwrap(), 1.0);
        assert!(macro_auc(&sm, &lm2, &["b"]).is_err());
        assert!(macro_auc::<&str>(&sm, &lm2, &[]).is_err());
    }

    #[test]
    fn identical_columns_macro_equals_shared() {
        let labels = space(&["a", "b"]);
        let sm = ScoreMatrix::new(array![[0.4, 0.4], [0.1, 0.1], [0.35, 0.35], [0.8, 0.8]], labels.clone()).unwrap();
        let lm = LabelMatrix::new(array![[1, 1], [0, 0], [0, 0], [1, 1]], labels).unwrap();
        let single = roc_auc(&[0.4, 0.1, 0.35, 0.8], &[1, 0, 0, 1]).unwrap();
        assert_eq!(macro_auc(&sm, &lm, &["a", "b"]).unwrap(), single);
    }

    #[test]
    fn micro_pools_pairs() {
        let labels = space(&["a", "b"]);
        // label a: AUC 1 with scores in [0.6, 0.9]; label b: AUC 0 with scores in [0.0, 0.3]
        let sm = ScoreMatrix::new(array![[0.9, 0.0], [0.6, 0.3], [0.8, 0.1], [0.7, 0.2]], labels.clone()).unwrap();
        let lm = LabelMatrix::new(array![[1, 1], [0, 0], [1, 1], [0, 0]], labels).unwrap();
        assert_eq!(per_label_auc(&sm, &lm, &["a", "b"]).unwrap(), vec![("a".into(), 1.0), ("b".into(), 0.0)]);
        let pooled_s = [0.9, 0.6, 0.8, 0.7, 0.0, 0.3, 0.1, 0.2];
        let pooled_t = [1, 0, 1, 0, 1, 0, 1, 0];
        let oracle = pair_count_auc(&pooled_s, &pooled_t);
        assert_eq!(micro_auc(&sm, &lm, &["a", "b"]).unwrap(), oracle);
        assert_eq!(oracle, 0.5);
        assert_eq!(micro_auc(&sm, &lm, &["a"]).unwrap(), 1.0);
    }

    #[test]
    fn micro_single_class_errors() {
        let labels = space(&["a"]);
        let sm = ScoreMatrix::new(array![[0.9], [0.1]], labels.clone()).unwrap();
        let lm = LabelMatrix::new(array![[1], [1]], labels).unwrap();
        assert!(micro_auc(&sm, &lm, &["a"]).is_err());
    }

    #[test]
    fn reliability_examples() {
        let r = reliability([("a", 0.0, 0.0), ("b", 0.5, 0.5), ("c", 0.7, 0.7)]).unwrap();
        assert_eq!((r.me, r.sd, r.rmse), (0.0, 0.0, 0.0));

        let (me, sd, rmse) = error_summary(&[0.1, 0.2, 0.3]).unwrap();
        assert!((me - 0.2).abs() < 1e-12);
        assert!((sd - 0.1).abs() < 1e-12);
        assert!((rmse - 0.05f64.sqrt()).abs() < 1e-12);
        assert!((rmse - 0.2236).abs() < 1e-4);
        assert!(error_summary(&[0.1]).is_err());

        let r = reliability([("x", 0.9, 0.8), ("y", 0.7, 0.75)]).unwrap();
        assert!((r.entries[1].signed_error + 0.05).abs() < 1e-12);
    }

    #[test]
    fn confusion_examples() {
        let classes = ["a", "b", "c"];
        let c = confusion_and_accuracy(&[0, 1, 2], &[0, 1, 2], &classes).unwrap();
        assert_eq!(c.accuracy, 1.0);
        assert_eq!(c.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);

        let c = confusion_and_accuracy(&[1, 1, 0], &[0, 0, 1], &classes[..2]).unwrap();
        assert_eq!(c.accuracy, 0.0);
        assert_eq!(c.counts, vec![vec![0, 2], vec![1, 0]]);

        // 424 of 1000 in the majority class, constant majority prediction
        let truth: Vec<usize> = (0..1000).map(|i| if i < 424 { 0 } else { 1 + i % 4 }).collect();
        let pred = vec![0usize; 1000];
        let five = ["0", "1", "2", "3", "4"];
        let c = confusion_and_accuracy(&pred, &truth, &five).unwrap();
        assert!((c.accuracy - 0.424).abs() < 1e-12);
        assert!((majority_baseline(&truth, 5) - 0.424).abs() < 1e-12);

        assert!(confusion_and_accuracy::<&str>(&[], &[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            data in prop::collection::vec((0u8..20, 0u8..2), 2..200)
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 7.0).collect();
            let truth: Vec<u8> = data.iter().map(|&(_, t)| t).collect();
            let pos = truth.iter().filter(|&&t| t == 1).count();
            prop_assume!(pos > 0 && pos < truth.len());
            let a = roc_auc(&scores, &truth).unwrap();
            prop_assert_eq!(a, pair_count_auc(&scores, &truth));
        }

        #[test]
        fn auc_flip_and_monotone(
            raw in prop::collection::hash_set(-1000i32..1000, 2..60),
            mask in prop::collection::vec(0u8..2, 60)
        ) {
            let scores: Vec<f64> = raw.into_iter().map(|v| v as f64 / 10.0).collect();
            let truth: Vec<u8> = mask[..scores.len()].to_vec();
            let pos = truth.iter().filter(|&&t| t == 1).count();
            prop_assume!(pos > 0 && pos < truth.len());
            let a = roc_auc(&scores, &truth).unwrap();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((a + roc_auc(&neg, &truth).unwrap() - 1.0).abs() < 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| (s / 50.0).exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(a, roc_auc(&warped, &truth).unwrap());
        }

        #[test]
        fn rmse_identity(errors in prop::collection::vec(-1.0f64..1.0, 2..40)) {
            let (me, sd, rmse) = error_summary(&errors).unwrap();
            prop_assert!((rmse * rmse - (me * me + sd * sd)).abs() < 1e-12);
            prop_assert!(rmse >= me.abs() && rmse >= sd);
        }
    }
}
