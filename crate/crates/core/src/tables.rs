//! Shipped reference data: the study label set, expected per-source label
//! counts, source sizes, and the challenge-scored diagnosis list.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DATA_VERSION: &str = "v1";

const STUDY_LABELS: &str = include_str!("../data/v1/study_labels.csv");
const REFERENCE_COUNTS: &str = include_str!("../data/v1/reference_counts.csv");
const SOURCE_TOTALS: &str = include_str!("../data/v1/source_totals.csv");
const CINC_SCORED: &str = include_str!("../data/v1/cinc2021_scored.csv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyLabel {
    pub snomed_code: String,
    pub abbrev: String,
    pub diagnosis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub source_id: String,
    pub name: String,
    pub total_ecgs: usize,
    pub included_ecgs: usize,
    /// Semicolon-separated when a source mixes rates.
    pub fs_hz: String,
    pub labeling: String,
}

fn parse_builtin<T: for<'de> Deserialize<'de>>(text: &str) -> Vec<T> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<std::result::Result<_, _>>().expect("built-in table parses")
}

/// The 17 study diagnoses in table order.
pub fn study_labels() -> Vec<StudyLabel> {
    parse_builtin(STUDY_LABELS)
}

pub fn study_label_codes() -> Vec<String> {
    study_labels().into_iter().map(|l| l.snomed_code).collect()
}

pub fn abbrev(code: &str) -> Option<String> {
    study_labels().into_iter().find(|l| l.snomed_code == code).map(|l| l.abbrev)
}

pub fn source_info() -> Vec<SourceInfo> {
    parse_builtin(SOURCE_TOTALS)
}

/// The 30 diagnoses scored in the 2021 PhysioNet/CinC challenge, as listed
/// in the challenge documentation; usable as a selection pool.
pub fn cinc2021_scored() -> BTreeSet<String> {
    #[derive(Deserialize)]
    struct Row {
        snomed_code: String,
    }
    parse_builtin::<Row>(CINC_SCORED).into_iter().map(|r| r.snomed_code).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub absolute: usize,
    /// Fraction of the expected count.
    pub relative: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { absolute: 0, relative: 0.0 }
    }
}

impl Tolerance {
    fn allows(&self, expected: usize, observed: usize) -> bool {
        let diff = expected.abs_diff(observed) as f64;
        diff <= self.absolute as f64 || diff <= self.relative * expected as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCounts {
    pub sources: Vec<String>,
    /// label -> count per source, in `sources` order
    pub counts: BTreeMap<String, Vec<usize>>,
    /// label -> published total
    pub totals: BTreeMap<String, usize>,
    pub tolerance: Tolerance,
}

impl ReferenceCounts {
    pub fn builtin() -> ReferenceCounts {
        ReferenceCounts::parse(REFERENCE_COUNTS, "<built-in>").expect("built-in reference counts parse")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ReferenceCounts> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ReferenceCounts::parse(&text, &path.display().to_string())
    }

    /// Wide CSV: `snomed_code`, one column per source, optional `total`.
    pub fn parse(text: &str, name: &str) -> Result<ReferenceCounts> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::csv(name, e))?.clone();
        if header.get(0) != Some("snomed_code") {
            return Err(Error::Manifest { path: name.into(), row: 0, message: "first column must be snomed_code".into() });
        }
        let total_col = header.iter().position(|h| h == "total");
        let sources: Vec<String> =
            header.iter().enumerate().skip(1).filter(|(i, _)| Some(*i) != total_col).map(|(_, h)| h.to_string()).collect();
        let mut counts = BTreeMap::new();
        let mut totals = BTreeMap::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(name, e))?;
            let bad = |m: String| Error::Manifest { path: name.into(), row: row + 1, message: m };
            let code = rec.get(0).unwrap_or_default().to_string();
            let mut per = Vec::new();
            for (i, field) in rec.iter().enumerate().skip(1) {
                let v: usize = field.trim().parse().map_err(|_| bad(format!("non-integer count `{field}`")))?;
                if Some(i) == total_col {
                    totals.insert(code.clone(), v);
                } else {
                    per.push(v);
                }
            }
            if counts.insert(code.clone(), per).is_some() {
                return Err(bad(format!("duplicate label `{code}`")));
            }
        }
        Ok(ReferenceCounts { sources, counts, totals, tolerance: Tolerance::default() })
    }

    pub fn expected(&self, label: &str, source: &str) -> Option<usize> {
        let j = self.sources.iter().position(|s| s == source)?;
        self.counts.get(label).map(|v| v[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDiff {
    pub label: String,
    pub source: String,
    pub expected: usize,
    pub observed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReferenceReport {
    /// Counts outside tolerance.
    pub diffs: Vec<CountDiff>,
    /// Reference sources absent from the dataset.
    pub missing_sources: Vec<String>,
    /// Dataset sources the reference does not know.
    pub extra_sources: Vec<String>,
}

impl ReferenceReport {
    pub fn is_clean(&self) -> bool {
        self.diffs.is_empty() && self.missing_sources.is_empty() && self.extra_sources.is_empty()
    }
}

/// Advisory comparison of a harmonized dataset against reference counts.
pub fn validate_against_reference(ds: &Dataset, reference: &ReferenceCounts) -> ReferenceReport {
    let observed = ds.label_counts_by_source();
    let mut report = ReferenceReport::default();
    for (j, source) in reference.sources.iter().enumerate() {
        let Some(obs) = observed.get(source) else {
            report.missing_sources.push(source.clone());
            continue;
        };
        for (label, per) in &reference.counts {
            let o = obs.get(label).copied().unwrap_or(0);
            if !reference.tolerance.allows(per[j], o) {
                report.diffs.push(CountDiff { label: label.clone(), source: source.clone(), expected: per[j], observed: o });
            }
        }
    }
    report.extra_sources = observed.keys().filter(|s| !reference.sources.contains(s)).cloned().collect();
    report
}
