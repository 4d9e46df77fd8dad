//! Multi-source multilabel data model and manifest ingestion.
//!
//! A manifest is a CSV file with one row per ECG record. Payloads (raw signals
//! or precomputed feature vectors) live in separate files referenced by path,
//! resolved relative to the manifest's directory.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Manifest token marking a record as a normal ECG (no abnormality).
pub const NORMAL_TOKEN: &str = "NORMAL";

/// Upper bound accepted for ages in years.
pub const MAX_AGE: f64 = 130.0;

/// Ordered set of label codes with a code → column index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels = Vec::new();
        let mut index = HashMap::new();
        for code in codes {
            let code = code.into();
            if index.insert(code.clone(), labels.len()).is_some() {
                return Err(Error::invalid(format!("label `{code}` listed twice")));
            }
            labels.push(code);
        }
        Ok(LabelSpace { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.labels
    }

    pub fn position(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn contains(&self, code: &str) -> bool {
        self.index.contains_key(code)
    }

    pub fn code(&self, column: usize) -> &str {
        &self.labels[column]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    /// New space with `code` appended; no-op if already present.
    pub fn with_appended(&self, code: &str) -> LabelSpace {
        let mut out = self.clone();
        if !out.contains(code) {
            out.index.insert(code.to_string(), out.labels.len());
            out.labels.push(code.to_string());
        }
        out
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSpace::new(v)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(s: LabelSpace) -> Self {
        s.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

impl Sex {
    pub fn parse(token: &str) -> Option<Sex> {
        match token.trim() {
            "M" => Some(Sex::Male),
            "F" => Some(Sex::Female),
            "U" => Some(Sex::Unknown),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
            Sex::Unknown => "U",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Reference to a raw multi-lead signal file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRef {
    pub path: PathBuf,
    pub fs_hz: f64,
    pub n_leads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Signal(SignalRef),
    /// Precomputed features. `path` is where the values were read from (or
    /// will be written to); `None` for in-memory data.
    Features { path: Option<PathBuf>, values: Vec<f64> },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Signal(_) => "signal",
            Payload::Features { .. } => "features",
        }
    }

    pub fn features(values: Vec<f64>) -> Payload {
        Payload::Features { path: None, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub record_id: String,
    pub source_id: String,
    pub age: Option<f64>,
    pub sex: Sex,
    pub labels: BTreeSet<String>,
    /// Normal-ECG marker; never stored as a label column.
    pub normal: bool,
    pub payload: Payload,
    pub date: Option<String>,
    pub patient_id: Option<String>,
}

impl Record {
    pub fn new(
        record_id: impl Into<String>,
        source_id: impl Into<String>,
        labels: impl IntoIterator<Item = impl Into<String>>,
        payload: Payload,
    ) -> Record {
        Record {
            record_id: record_id.into(),
            source_id: source_id.into(),
            age: None,
            sex: Sex::Unknown,
            labels: labels.into_iter().map(Into::into).collect(),
            normal: false,
            payload,
            date: None,
            patient_id: None,
        }
    }
}

/// Distinct sources with their record counts, in sorted source order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRegistry {
    counts: BTreeMap<String, usize>,
}

impl SourceRegistry {
    pub fn from_records(records: &[Record]) -> SourceRegistry {
        let mut counts = BTreeMap::new();
        for r in records {
            *counts.entry(r.source_id.clone()).or_insert(0) += 1;
        }
        SourceRegistry { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, source: &str) -> Option<usize> {
        self.counts.get(source).copied()
    }

    pub fn contains(&self, source: &str) -> bool {
        self.counts.contains_key(source)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn counts(&self) -> &BTreeMap<String, usize> {
        &self.counts
    }
}

/// Immutable collection of records sharing a label space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    label_space: LabelSpace,
    sources: SourceRegistry,
    base_dir: PathBuf,
}

impl Dataset {
    /// Validates every record against the label space and builds the source registry.
    pub fn new(records: Vec<Record>, label_space: LabelSpace) -> Result<Dataset> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::DuplicateRecord(r.record_id.clone()));
            }
            if let Some(code) = r.labels.iter().find(|c| !label_space.contains(c)) {
                return Err(Error::UnknownLabel(code.clone()));
            }
            if let Some(age) = r.age {
                if !(0.0..=MAX_AGE).contains(&age) {
                    return Err(Error::invalid(format!(
                        "record `{}`: age {age} outside 0..={MAX_AGE}",
                        r.record_id
                    )));
                }
            }
            if let Payload::Signal(s) = &r.payload {
                if !(s.fs_hz > 0.0) || s.n_leads == 0 {
                    return Err(Error::invalid(format!(
                        "record `{}`: signal needs fs_hz > 0 and n_leads >= 1",
                        r.record_id
                    )));
                }
            }
        }
        let sources = SourceRegistry::from_records(&records);
        Ok(Dataset { records, label_space, sources, base_dir: PathBuf::from(".") })
    }

    /// Label space is the union of record labels in order of first appearance.
    pub fn from_records(records: Vec<Record>) -> Result<Dataset> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        for r in &records {
            for c in &r.labels {
                if seen.insert(c.clone()) {
                    order.push(c.clone());
                }
            }
        }
        Dataset::new(records, LabelSpace::new(order)?)
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Dataset {
        self.base_dir = dir.into();
        self
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn sources(&self) -> &SourceRegistry {
        &self.sources
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Resolves a payload path against the manifest directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Record indices grouped by source, in sorted source order.
    pub fn indices_by_source(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            out.entry(r.source_id.clone()).or_default().push(i);
        }
        out
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.sources.ids().map(str::to_string).collect()
    }

    /// Per-source per-label positive counts.
    pub fn label_counts_by_source(&self) -> BTreeMap<String, BTreeMap<String, usize>> {
        let mut out: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for src in self.sources.ids() {
            out.insert(src.to_string(), BTreeMap::new());
        }
        for r in &self.records {
            let row = out.entry(r.source_id.clone()).or_default();
            for c in &r.labels {
                *row.entry(c.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    /// Same label space and base directory, different records.
    pub fn with_records(&self, records: Vec<Record>) -> Result<Dataset> {
        Ok(Dataset::new(records, self.label_space.clone())?.with_base_dir(self.base_dir.clone()))
    }

    pub fn into_parts(self) -> (Vec<Record>, LabelSpace, PathBuf) {
        (self.records, self.label_space, self.base_dir)
    }
}

/// Dense binary record × label matrix aligned to a label space.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: Array2<u8>,
    labels: LabelSpace,
}

impl LabelMatrix {
    pub fn new(values: Array2<u8>, labels: LabelSpace) -> Result<LabelMatrix> {
        if values.ncols() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), actual: values.ncols() });
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::invalid("label matrix entries must be 0 or 1"));
        }
        Ok(LabelMatrix { values, labels })
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_labels(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, u8> {
        self.values.column(j)
    }

    pub fn positives(&self, j: usize) -> usize {
        self.values.column(j).iter().map(|&v| v as usize).sum()
    }

    pub fn select_rows(&self, rows: &[usize]) -> LabelMatrix {
        LabelMatrix { values: self.values.select(ndarray::Axis(0), rows), labels: self.labels.clone() }
    }

    pub fn select_columns(&self, cols: &[usize]) -> LabelMatrix {
        let labels = LabelSpace::new(cols.iter().map(|&j| self.labels.code(j).to_string()))
            .expect("column subset of a valid space is valid");
        LabelMatrix { values: self.values.select(ndarray::Axis(1), cols), labels }
    }
}

pub fn build_label_matrix(ds: &Dataset) -> LabelMatrix {
    let space = ds.label_space();
    let mut values = Array2::<u8>::zeros((ds.len(), space.len()));
    for (i, r) in ds.records().iter().enumerate() {
        for c in &r.labels {
            let j = space.position(c).expect("dataset invariant: labels within space");
            values[[i, j]] = 1;
        }
    }
    LabelMatrix { values, labels: space.clone() }
}

/// Keeps only the given labels (in the original column order); records are never dropped.
pub fn restrict_labels<S: AsRef<str>>(ds: &Dataset, keep: &[S]) -> Result<Dataset> {
    let keep: HashSet<&str> = keep.iter().map(AsRef::as_ref).collect();
    if let Some(unknown) = keep.iter().find(|c| !ds.label_space().contains(c)) {
        return Err(Error::UnknownLabel(unknown.to_string()));
    }
    let space = LabelSpace::new(ds.label_space().iter().filter(|c| keep.contains(c)))?;
    let records = ds
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.labels.retain(|c| keep.contains(c.as_str()));
            r
        })
        .collect();
    Ok(Dataset::new(records, space)?.with_base_dir(ds.base_dir().to_path_buf()))
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestRow {
    record_id: String,
    source_id: String,
    age: String,
    sex: String,
    labels: String,
    payload_kind: String,
    payload_path: String,
    fs_hz: String,
    n_leads: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patient_id: Option<String>,
}

fn valid_code(code: &str) -> bool {
    !code.is_empty()
        && code.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '_' | '.' | ':'))
}

fn parse_row(row: ManifestRow, base_dir: &Path, load_features: bool) -> std::result::Result<Record, String> {
    let record_id = row.record_id.trim().to_string();
    if record_id.is_empty() {
        return Err("empty record_id".into());
    }
    let source_id = row.source_id.trim().to_string();
    if source_id.is_empty() {
        return Err("empty source_id".into());
    }
    let age = match row.age.trim() {
        "" => None,
        s => {
            let a: f64 = s.parse().map_err(|_| format!("unparseable age `{s}`"))?;
            if a < 0.0 {
                return Err(format!("negative age {a}"));
            }
            if !(a <= MAX_AGE) {
                return Err(format!("age {a} above {MAX_AGE}"));
            }
            Some(a)
        }
    };
    let sex = Sex::parse(&row.sex).ok_or_else(|| format!("unknown sex token `{}`", row.sex))?;

    let mut labels = BTreeSet::new();
    let mut normal = false;
    let raw = row.labels.trim();
    if !raw.is_empty() {
        for tok in raw.split('|') {
            let tok = tok.trim();
            if tok == NORMAL_TOKEN {
                normal = true;
            } else if valid_code(tok) {
                labels.insert(tok.to_string());
            } else {
                return Err(format!("unparseable label code `{tok}`"));
            }
        }
    }
    if labels.is_empty() && !normal {
        return Err("label column empty and no NORMAL marker".into());
    }

    let path = PathBuf::from(row.payload_path.trim());
    let payload = match row.payload_kind.trim() {
        "signal" => {
            let fs_hz: f64 = row
                .fs_hz
                .trim()
                .parse()
                .map_err(|_| format!("unparseable fs_hz `{}`", row.fs_hz))?;
            let n_leads: usize = row
                .n_leads
                .trim()
                .parse()
                .map_err(|_| format!("unparseable n_leads `{}`", row.n_leads))?;
            if !(fs_hz > 0.0) || n_leads == 0 {
                return Err("signal payload needs fs_hz > 0 and n_leads >= 1".into());
            }
            Payload::Signal(SignalRef { path, fs_hz, n_leads })
        }
        "features" => {
            let values = if load_features {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(&path) };
                read_feature_file(&full).map_err(|e| e.to_string())?
            } else {
                Vec::new()
            };
            Payload::Features { path: Some(path), values }
        }
        other => return Err(format!("unknown payload_kind `{other}`")),
    };

    let opt = |s: Option<String>| s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
    Ok(Record {
        record_id,
        source_id,
        age,
        sex,
        labels,
        normal,
        payload,
        date: opt(row.date),
        patient_id: opt(row.patient_id),
    })
}

/// Loads a manifest CSV and reads its feature payloads.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    load_manifest(manifest_path.as_ref(), true)
}

/// Loads a manifest without touching payload files (feature values stay empty).
pub fn load_manifest_only(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    load_manifest(manifest_path.as_ref(), false)
}

fn load_manifest(path: &Path, load_features: bool) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(file);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Manifest { path: path.into(), row: row_no, message: e.to_string() })?;
        let rec = parse_row(row, &base_dir, load_features)
            .map_err(|message| Error::Manifest { path: path.into(), row: row_no, message })?;
        if !seen.insert(rec.record_id.clone()) {
            return Err(Error::Manifest {
                path: path.into(),
                row: row_no,
                message: format!("duplicate record_id `{}`", rec.record_id),
            });
        }
        records.push(rec);
    }
    Ok(Dataset::from_records(records)?.with_base_dir(base_dir))
}

fn format_float(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v}")
}

/// Writes the manifest rows of `ds` to `path`. Feature payloads without a
/// path are assigned `features/<record_id>.csv`; payload files are not written.
pub fn save_manifest(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let has_date = ds.records().iter().any(|r| r.date.is_some());
    let has_pid = ds.records().iter().any(|r| r.patient_id.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["record_id", "source_id", "age", "sex", "labels", "payload_kind", "payload_path", "fs_hz", "n_leads"];
    if has_date {
        header.push("date");
    }
    if has_pid {
        header.push("patient_id");
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in ds.records() {
        let mut labels: Vec<&str> = r.labels.iter().map(String::as_str).collect();
        if r.normal {
            labels.push(NORMAL_TOKEN);
        }
        let (payload_path, fs, leads) = match &r.payload {
            Payload::Signal(s) => (s.path.display().to_string(), format_float(s.fs_hz), s.n_leads.to_string()),
            Payload::Features { path, .. } => (
                path.as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| default_feature_path(&r.record_id).display().to_string()),
                String::new(),
                String::new(),
            ),
        };
        let mut row = vec![
            r.record_id.clone(),
            r.source_id.clone(),
            r.age.map(format_float).unwrap_or_default(),
            r.sex.token().to_string(),
            labels.join("|"),
            r.payload.kind().to_string(),
            payload_path,
            fs,
            leads,
        ];
        if has_date {
            row.push(r.date.clone().unwrap_or_default());
        }
        if has_pid {
            row.push(r.patient_id.clone().unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn default_feature_path(record_id: &str) -> PathBuf {
    Path::new("features").join(format!("{record_id}.csv"))
}

/// Writes `manifest.csv` plus every in-memory feature payload under `out_dir`.
pub fn write_dataset(ds: &Dataset, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for r in ds.records() {
        if let Payload::Features { path, values } = &r.payload {
            let rel = path.clone().unwrap_or_else(|| default_feature_path(&r.record_id));
            let full = if rel.is_absolute() { rel } else { out_dir.join(rel) };
            if let Some(parent) = full.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_feature_file(&full, values)?;
        }
    }
    let manifest = out_dir.join("manifest.csv");
    save_manifest(ds, &manifest)?;
    Ok(manifest)
}

pub fn read_feature_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    line.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("{}: unparseable feature value `{t}`", path.display())))
        })
        .collect()
}

pub fn write_feature_file(path: &Path, values: &[f64]) -> Result<()> {
    let line: Vec<String> = values.iter().map(|v| format_float(*v)).collect();
    fs::write(path, line.join(",") + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a signal CSV (one column per lead, one row per sample) into
/// lead-major order. A non-numeric first row is treated as a header.
pub fn read_signal_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut leads: Vec<Vec<f64>> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let parsed: std::result::Result<Vec<f64>, _> = row.iter().map(|t| t.trim().parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::invalid(format!("{}: non-numeric sample at row {}", path.display(), i + 1)))
            }
        };
        if leads.is_empty() {
            leads = vec![Vec::new(); values.len()];
        }
        for (lead, v) in leads.iter_mut().zip(values) {
            lead.push(v);
        }
    }
    Ok(leads)
}

pub fn write_signal_file(path: &Path, leads: &[Vec<f64>]) -> Result<()> {
    let n = leads.first().map_or(0, Vec::len);
    let mut out = String::new();
    for t in 0..n {
        let row: Vec<String> = leads.iter().map(|l| format_float(l[t])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
