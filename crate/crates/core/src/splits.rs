//! Fold partitions: iterative multilabel stratified K-fold, leave-source-out,
//! and source-stratified holdout.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    StratifiedKfold,
    LeaveSourceOut,
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyBy {
    Source,
}

/// A partition of record indices into folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub kind: SplitKind,
    pub n_folds: usize,
    /// `assignment[i]` is the fold of record `i`.
    pub assignment: Vec<usize>,
    /// Source of each fold; leave-source-out only.
    pub fold_source: Option<Vec<String>>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FoldPlan {
    fn checked(self) -> Result<FoldPlan> {
        self.validate()?;
        Ok(self)
    }

    /// Partition check: every record in exactly one fold with a valid id.
    pub fn validate(&self) -> Result<()> {
        if let Some(&bad) = self.assignment.iter().find(|&&f| f >= self.n_folds) {
            return Err(Error::invalid(format!("fold id {bad} outside 0..{}", self.n_folds)));
        }
        if let Some(src) = &self.fold_source {
            if src.len() != self.n_folds {
                return Err(Error::invalid("fold_source length differs from n_folds"));
            }
        }
        Ok(())
    }

    /// Checks the leave-source-out invariant against per-record sources.
    pub fn validate_sources<S: AsRef<str>>(&self, record_sources: &[S]) -> Result<()> {
        let Some(fs) = &self.fold_source else { return Ok(()) };
        for (i, &f) in self.assignment.iter().enumerate() {
            if record_sources[i].as_ref() != fs[f] {
                return Err(Error::Leakage(format!(
                    "record {i} from `{}` placed in fold of `{}`",
                    record_sources[i].as_ref(),
                    fs[f]
                )));
            }
        }
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|&(_, &f)| f == fold).map(|(i, _)| i).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// (training indices, validation indices) for one CV round.
    pub fn train_validation(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        (train, val)
    }

    /// Writes `record_id,fold` rows.
    pub fn write_csv<S: AsRef<str>>(&self, record_ids: &[S], path: &Path) -> Result<()> {
        if record_ids.len() != self.assignment.len() {
            return Err(Error::DimensionMismatch { expected: self.assignment.len(), actual: record_ids.len() });
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["record_id", "fold"]).map_err(|e| Error::csv(path, e))?;
        for (id, f) in record_ids.iter().zip(&self.assignment) {
            w.write_record([id.as_ref(), &f.to_string()]).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Picks uniformly among the indices whose key equals the maximum.
fn argmax_random<K: PartialOrd + Copy>(keys: impl Iterator<Item = K>, rng: &mut ChaCha8Rng) -> usize {
    let keys: Vec<K> = keys.collect();
    let mut best = keys[0];
    for &k in &keys[1..] {
        if k > best {
            best = k;
        }
    }
    let ties: Vec<usize> = (0..keys.len()).filter(|&i| keys[i] == best).collect();
    *ties.choose(rng).expect("non-empty")
}

/// Iterative multilabel stratification into `k` folds.
///
/// Labels are processed rarest-first (fewest unassigned positives). Each
/// record carrying the current label goes to the fold with the largest
/// remaining quota for that label, then the largest remaining capacity, then
/// a seeded uniform choice. Records without labels fill remaining capacity.
pub fn stratified_kfold(lm: &LabelMatrix, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = lm.n_rows();
    if k < 2 {
        return Err(Error::invalid(format!("stratified_kfold needs K >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("K = {k} exceeds the number of records ({n})")));
    }
    let n_labels = lm.n_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let values = lm.values();
    let record_labels: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n_labels).filter(|&j| values[[i, j]] != 0).collect()).collect();

    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for &i in &order {
        for &j in &record_labels[i] {
            by_label[j].push(i);
        }
    }
    let mut remaining: Vec<usize> = by_label.iter().map(Vec::len).collect();
    let mut quota: Vec<Vec<f64>> =
        (0..k).map(|_| remaining.iter().map(|&c| c as f64 / k as f64).collect()).collect();
    let mut capacity: Vec<f64> = vec![n as f64 / k as f64; k];

    const UNASSIGNED: usize = usize::MAX;
    let mut assignment = vec![UNASSIGNED; n];

    loop {
        let Some(min_left) = remaining.iter().copied().filter(|&c| c > 0).min() else { break };
        let rarest: Vec<usize> = (0..n_labels).filter(|&j| remaining[j] == min_left).collect();
        let label = *rarest.choose(&mut rng).expect("non-empty");

        for idx in 0..by_label[label].len() {
            let i = by_label[label][idx];
            if assignment[i] != UNASSIGNED {
                continue;
            }
            let fold = argmax_random((0..k).map(|f| (quota[f][label], capacity[f])), &mut rng);
            assignment[i] = fold;
            capacity[fold] -= 1.0;
            for &j in &record_labels[i] {
                quota[fold][j] -= 1.0;
                remaining[j] -= 1;
            }
        }
    }

    for &i in &order {
        if assignment[i] == UNASSIGNED {
            let fold = argmax_random(capacity.iter().copied(), &mut rng);
            assignment[i] = fold;
            capacity[fold] -= 1.0;
        }
    }

    FoldPlan {
        kind: SplitKind::StratifiedKfold,
        n_folds: k,
        assignment,
        fold_source: None,
        seed: Some(seed),
        warnings: Vec::new(),
    }
    .checked()
}

/// One fold per source (sorted by source id); deterministic.
pub fn leave_source_out(ds: &Dataset) -> Result<FoldPlan> {
    let sources: Vec<&str> = ds.records().iter().map(|r| r.source_id.as_str()).collect();
    leave_source_out_by(&sources)
}

/// Leave-source-out over an explicit per-record source list.
pub fn leave_source_out_by<S: AsRef<str>>(record_sources: &[S]) -> Result<FoldPlan> {
    let mut ids: Vec<&str> = record_sources.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::invalid(format!("leave-source-out needs >= 2 sources, got {}", ids.len())));
    }
    let fold_of: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(f, &s)| (s, f)).collect();
    let assignment = record_sources.iter().map(|s| fold_of[s.as_ref()]).collect();
    let plan = FoldPlan {
        kind: SplitKind::LeaveSourceOut,
        n_folds: ids.len(),
        assignment,
        fold_source: Some(ids.iter().map(|s| s.to_string()).collect()),
        seed: None,
        warnings: Vec::new(),
    }
    .checked()?;
    plan.validate_sources(record_sources)?;
    Ok(plan)
}

/// Two-fold split (0 = train, 1 = test) taking `round(train_frac * n_s)`
/// records of every source into training after a seeded shuffle.
pub fn stratified_holdout(ds: &Dataset, train_frac: f64, stratify_by: StratifyBy, seed: u64) -> Result<FoldPlan> {
    let groups: Vec<&str> = match stratify_by {
        StratifyBy::Source => ds.records().iter().map(|r| r.source_id.as_str()).collect(),
    };
    holdout_by_group(&groups, train_frac, seed)
}

pub fn holdout_by_group<S: AsRef<str>>(groups: &[S], train_frac: f64, seed: u64) -> Result<FoldPlan> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!("train_frac must lie in (0, 1), got {train_frac}")));
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; groups.len()];
    let mut warnings = Vec::new();
    for (group, mut idx) in members {
        let n = idx.len();
        idx.shuffle(&mut rng);
        if n < 2 {
            let msg = format!("group `{group}` has {n} record(s); all assigned to training");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
        for &i in &idx[n_train..] {
            assignment[i] = 1;
        }
    }
    FoldPlan { kind: SplitKind::Holdout, n_folds: 2, assignment, fold_source: None, seed: Some(seed), warnings }
        .checked()
}
