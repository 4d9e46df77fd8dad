//! Label harmonization: AHA to SNOMED CT mapping with merge rules, label
//! selection, sinus-rhythm imputation and deduplication.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelMatrix, LabelSpace, Payload, Record, NORMAL_TOKEN};
use crate::error::{Error, Result};
use crate::models::logistic::{fit_binary, sigmoid};
use crate::models::TrainConfig;

/// Prefix marking a merge-rule row in the mapping CSV.
pub const MERGE_PREFIX: &str = "snomed:";

pub const SINUS_RHYTHM: &str = "426783006";

const DEFAULT_TABLE: &str = include_str!("../data/v1/aha_snomed.csv");

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MappingRow {
    aha_code: String,
    snomed_code: String,
    #[serde(default)]
    note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingTable {
    entries: BTreeMap<String, String>,
    /// Already closed under chaining: every target is final.
    merge_rules: BTreeMap<String, String>,
    notes: BTreeMap<String, String>,
}

impl MappingTable {
    /// `entries` maps AHA statements to SNOMED codes or to the normal token;
    /// `merge_rules` maps SNOMED codes to SNOMED codes.
    pub fn new(entries: BTreeMap<String, String>, merge_rules: BTreeMap<String, String>) -> Result<MappingTable> {
        let mut closed = BTreeMap::new();
        for from in merge_rules.keys() {
            let mut seen = BTreeSet::from([from.as_str()]);
            let mut to = &merge_rules[from];
            while let Some(next) = merge_rules.get(to) {
                if !seen.insert(to.as_str()) {
                    return Err(Error::invalid(format!("merge rules contain a cycle through `{from}`")));
                }
                to = next;
            }
            if to == from {
                return Err(Error::invalid(format!("merge rule maps `{from}` to itself")));
            }
            closed.insert(from.clone(), to.clone());
        }
        Ok(MappingTable { entries, merge_rules: closed, notes: BTreeMap::new() })
    }

    /// The table shipped with the crate.
    pub fn default_table() -> MappingTable {
        MappingTable::from_csv_reader(DEFAULT_TABLE.as_bytes(), "<built-in>").expect("built-in mapping table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MappingTable> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        MappingTable::from_csv_reader(f, &path.display().to_string())
    }

    fn from_csv_reader<R: Read>(r: R, name: &str) -> Result<MappingTable> {
        let mut entries = BTreeMap::new();
        let mut merges = BTreeMap::new();
        let mut notes = BTreeMap::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        for (i, row) in rdr.deserialize::<MappingRow>().enumerate() {
            let row = row.map_err(|e| Error::Manifest { path: name.into(), row: i + 1, message: e.to_string() })?;
            let bad = |m: String| Error::Manifest { path: name.into(), row: i + 1, message: m };
            if row.aha_code.is_empty() || row.snomed_code.is_empty() {
                return Err(bad("empty code".into()));
            }
            let (map, key) = match row.aha_code.strip_prefix(MERGE_PREFIX) {
                Some(from) => (&mut merges, from.to_string()),
                None => (&mut entries, row.aha_code.clone()),
            };
            if let Some(prev) = map.insert(key.clone(), row.snomed_code.clone()) {
                if prev != row.snomed_code {
                    return Err(bad(format!("`{key}` mapped to both `{prev}` and `{}`", row.snomed_code)));
                }
            }
            if !row.note.is_empty() {
                notes.insert(row.aha_code, row.note);
            }
        }
        let mut t = MappingTable::new(entries, merges)?;
        t.notes = notes;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let rows = self
            .entries
            .iter()
            .map(|(a, s)| (a.clone(), s.clone()))
            .chain(self.merge_rules.iter().map(|(f, t)| (format!("{MERGE_PREFIX}{f}"), t.clone())));
        for (aha_code, snomed_code) in rows {
            let note = self.notes.get(&aha_code).cloned().unwrap_or_default();
            w.serialize(MappingRow { aha_code, snomed_code, note }).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn merge_rules(&self) -> &BTreeMap<String, String> {
        &self.merge_rules
    }

    pub fn note(&self, aha_code: &str) -> Option<&str> {
        self.notes.get(aha_code).map(String::as_str)
    }

    /// Final code after merge rules.
    pub fn merge(&self, snomed: &str) -> String {
        self.merge_rules.get(snomed).cloned().unwrap_or_else(|| snomed.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MappedLabels {
    pub codes: BTreeSet<String>,
    pub normal: bool,
    pub unmapped: Vec<String>,
}

pub fn map_labels<S: AsRef<str>>(codes: impl IntoIterator<Item = S>, table: &MappingTable) -> MappedLabels {
    let mut out = MappedLabels::default();
    for c in codes {
        let c = c.as_ref();
        match table.entries.get(c) {
            Some(s) if s == NORMAL_TOKEN => out.normal = true,
            Some(s) => {
                out.codes.insert(table.merge(s));
            }
            None => out.unmapped.push(c.to_string()),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MappingReport {
    pub records: usize,
    /// Unmapped input code -> number of occurrences.
    pub unmapped: BTreeMap<String, usize>,
    pub normal_flagged: usize,
}

fn sorted_space(records: &[Record]) -> Result<LabelSpace> {
    let all: BTreeSet<&str> = records.iter().flat_map(|r| r.labels.iter().map(String::as_str)).collect();
    LabelSpace::new(all)
}

/// Maps every record of an AHA-labelled dataset. The result's label space is
/// the sorted set of codes that occur.
pub fn map_dataset(ds: &Dataset, table: &MappingTable) -> Result<(Dataset, MappingReport)> {
    let mut report = MappingReport { records: ds.len(), ..Default::default() };
    let mut records = Vec::with_capacity(ds.len());
    for r in ds.records() {
        let m = map_labels(&r.labels, table);
        for u in m.unmapped {
            *report.unmapped.entry(u).or_default() += 1;
        }
        let mut r = r.clone();
        r.normal |= m.normal;
        if r.normal {
            report.normal_flagged += 1;
        }
        r.labels = m.codes;
        records.push(r);
    }
    let space = sorted_space(&records)?;
    Ok((Dataset::new(records, space)?.with_base_dir(ds.base_dir()), report))
}

/// Applies only the merge rules, for datasets already labelled in SNOMED CT.
pub fn merge_dataset(ds: &Dataset, table: &MappingTable) -> Result<Dataset> {
    let records: Vec<Record> = ds
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.labels = r.labels.iter().map(|c| table.merge(c)).collect();
            r
        })
        .collect();
    let space = sorted_space(&records)?;
    Ok(Dataset::new(records, space)?.with_base_dir(ds.base_dir()))
}

/// Removes records with no labels unless they carry the normal flag.
pub fn drop_unlabeled(ds: &Dataset) -> Result<(Dataset, usize)> {
    let kept: Vec<Record> = ds.records().iter().filter(|r| !r.labels.is_empty() || r.normal).cloned().collect();
    let removed = ds.len() - kept.len();
    Ok((ds.with_records(kept)?, removed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionCriteria {
    pub min_sources: usize,
    pub min_count_per_source: usize,
    pub allowed_pool: Option<BTreeSet<String>>,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria { min_sources: 4, min_count_per_source: 50, allowed_pool: None }
    }
}

/// Labels with at least `min_count_per_source` occurrences in at least
/// `min_sources` sources. `counts` is source -> label -> count. Sorted output.
pub fn select_labels(counts: &BTreeMap<String, BTreeMap<String, usize>>, crit: &SelectionCriteria) -> Result<Vec<String>> {
    if crit.min_sources < 1 {
        return Err(Error::Config("min_sources must be at least 1".into()));
    }
    let universe: BTreeSet<&String> = counts.values().flat_map(|m| m.keys()).collect();
    Ok(universe
        .into_iter()
        .filter(|l| crit.allowed_pool.as_ref().is_none_or(|p| p.contains(*l)))
        .filter(|l| {
            let ok = counts.values().filter(|m| m.get(*l).copied().unwrap_or(0) >= crit.min_count_per_source).count();
            ok >= crit.min_sources
        })
        .cloned()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub features: LabelSpace,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub threshold: f64,
}

impl ImputationModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        sigmoid(row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
    }
}

/// Logistic model predicting SR from the other labels. The loss is mean
/// cross-entropy plus `lambda / 2 * |w|^2` on raw 0/1 inputs.
pub fn fit_sr_imputer(train: &LabelMatrix, sr_targets: &[u8], lambda: f64, threshold: f64) -> Result<ImputationModel> {
    if train.n_rows() != sr_targets.len() {
        return Err(Error::DimensionMismatch { expected: train.n_rows(), actual: sr_targets.len() });
    }
    let pos = sr_targets.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == sr_targets.len() {
        return Err(Error::invalid("SR targets contain a single class"));
    }
    if !(lambda >= 0.0) || !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config("imputer needs lambda >= 0 and threshold in [0, 1]".into()));
    }
    let x = train.values().mapv(f64::from);
    let y = Array1::from_iter(sr_targets.iter().map(|&v| f64::from(v)));
    let cfg = TrainConfig { max_iter: 2000, tol: 1e-8, l2: lambda, seed: 0 };
    let head = fit_binary(x.view(), y.view(), &cfg);
    Ok(ImputationModel { features: train.labels().clone(), weights: head.weights, intercept: head.intercept, lambda, threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationReport {
    pub records: usize,
    pub normal_positive: usize,
    pub imputed_positive: usize,
}

impl ImputationReport {
    pub fn positive(&self) -> usize {
        self.normal_positive + self.imputed_positive
    }
}

/// Adds the SR column. Normal-flagged records are always positive; the rest
/// are positive when the model score reaches the threshold.
pub fn impute_sr(model: &ImputationModel, ds: &Dataset) -> Result<(Dataset, ImputationReport)> {
    let space = ds.label_space();
    if space.contains(SINUS_RHYTHM) {
        return Err(Error::invalid("dataset already has a sinus rhythm label"));
    }
    let mine: BTreeSet<&str> = space.iter().collect();
    let theirs: BTreeSet<&str> = model.features.iter().collect();
    if mine != theirs {
        let diff: Vec<&str> = mine.symmetric_difference(&theirs).copied().collect();
        return Err(Error::invalid(format!("label space does not match imputation features (differs in {diff:?})")));
    }
    let mut report = ImputationReport { records: ds.len(), normal_positive: 0, imputed_positive: 0 };
    let mut records = Vec::with_capacity(ds.len());
    for r in ds.records() {
        let mut r = r.clone();
        let positive = if r.normal {
            report.normal_positive += 1;
            true
        } else {
            let row: Vec<f64> = model.features.iter().map(|c| if r.labels.contains(c) { 1.0 } else { 0.0 }).collect();
            let p = model.score(&row) >= model.threshold;
            report.imputed_positive += usize::from(p);
            p
        };
        if positive {
            r.labels.insert(SINUS_RHYTHM.to_string());
        }
        records.push(r);
    }
    let space = space.with_appended(SINUS_RHYTHM);
    Ok((Dataset::new(records, space)?.with_base_dir(ds.base_dir()), report))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DupReport {
    /// Groups (of size >= 2) of record ids sharing all metadata, in manifest order.
    pub metadata_groups: Vec<Vec<String>>,
    /// Records that share metadata with an earlier record.
    pub metadata_duplicates: usize,
    /// Removed record id -> id of the retained identical record.
    pub removed: Vec<(String, String)>,
}

impl DupReport {
    pub fn exact_duplicates(&self) -> usize {
        self.removed.len()
    }

    pub fn metadata_only(&self) -> usize {
        self.metadata_duplicates - self.removed.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct MetaKey {
    labels: Vec<String>,
    normal: bool,
    age: Option<u64>,
    sex: &'static str,
    source: String,
    samples: usize,
    date: Option<String>,
    patient: Option<String>,
}

fn payload_bytes(ds: &Dataset, r: &Record) -> Result<(usize, Vec<u8>)> {
    match &r.payload {
        Payload::Signal(s) => {
            let path = ds.resolve(&s.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let samples = crate::data::read_signal_file(&path)?.first().map_or(0, Vec::len);
            Ok((samples, bytes))
        }
        Payload::Features { values, .. } => {
            Ok((values.len(), values.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect()))
        }
    }
}

/// Groups records by metadata and drops later records whose payload is
/// byte-identical to a retained one. The first record in manifest order wins.
pub fn deduplicate(ds: &Dataset) -> Result<(Dataset, DupReport)> {
    let mut groups: HashMap<MetaKey, Vec<usize>> = HashMap::new();
    let mut order: Vec<MetaKey> = Vec::new();
    let mut payloads = Vec::with_capacity(ds.len());
    for (i, r) in ds.records().iter().enumerate() {
        let (samples, bytes) = payload_bytes(ds, r)?;
        payloads.push(bytes);
        let key = MetaKey {
            labels: r.labels.iter().cloned().collect(),
            normal: r.normal,
            age: r.age.map(f64::to_bits),
            sex: r.sex.token(),
            source: r.source_id.clone(),
            samples,
            date: r.date.clone(),
            patient: r.patient_id.clone(),
        };
        let g = groups.entry(key.clone()).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(i);
    }
    let mut report = DupReport::default();
    let mut drop = vec![false; ds.len()];
    for key in &order {
        let g = &groups[key];
        if g.len() < 2 {
            continue;
        }
        report.metadata_groups.push(g.iter().map(|&i| ds.records()[i].record_id.clone()).collect());
        report.metadata_duplicates += g.len() - 1;
        let mut kept: Vec<usize> = Vec::new();
        for &i in g {
            match kept.iter().find(|&&k| payloads[k] == payloads[i]) {
                Some(&k) => {
                    drop[i] = true;
                    report.removed.push((ds.records()[i].record_id.clone(), ds.records()[k].record_id.clone()));
                }
                None => kept.push(i),
            }
        }
    }
    let records: Vec<Record> = ds.records().iter().zip(&drop).filter(|(_, d)| !**d).map(|(r, _)| r.clone()).collect();
    Ok((ds.with_records(records)?, report))
}

/// Builds the SR imputation training matrix: the rows of `ds` over `features`,
/// plus the SR column as targets.
pub fn sr_training_data(ds: &Dataset, features: &LabelSpace) -> Result<(LabelMatrix, Vec<u8>)> {
    if !ds.label_space().contains(SINUS_RHYTHM) {
        return Err(Error::UnknownLabel(SINUS_RHYTHM.into()));
    }
    let mut x = Array2::<u8>::zeros((ds.len(), features.len()));
    let mut y = Vec::with_capacity(ds.len());
    for (i, r) in ds.records().iter().enumerate() {
        for (j, c) in features.iter().enumerate() {
            x[[i, j]] = u8::from(r.labels.contains(c));
        }
        y.push(u8::from(r.labels.contains(SINUS_RHYTHM)));
    }
    Ok((LabelMatrix::new(x, features.clone())?, y))
}
