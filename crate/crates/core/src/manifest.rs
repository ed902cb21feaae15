//! Text formats: cohort manifests, assignment files with their JSON metadata
//! sidecar, feature matrices and prediction files.
//!
//! All CSV outputs use LF line endings and are sorted by scan id, so repeated
//! runs on the same input are byte-identical. Headers are checked exactly.

use std::collections::{BTreeMap, BTreeSet};

use csv::{ReaderBuilder, StringRecord, Terminator, WriterBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::Predictions;
use crate::cohort::{Cohort, CohortError, DiagnosisLabel, ScanId, ScanRecord};
use crate::features::{FeatureError, FeatureMatrix};
use crate::split::{Partition, Scheme, SplitAssignment, SplitRatios};

pub const MANIFEST_HEADER: [&str; 5] = ["scan_id", "subject_id", "visit_index", "acquisition_date", "label"];
pub const ASSIGNMENT_HEADER: [&str; 3] = ["scan_id", "subject_id", "partition"];
pub const PREDICTIONS_HEADER: [&str; 2] = ["scan_id", "label"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifestError {
    #[error("file is empty")]
    EmptyFile,
    #[error("bad header: expected {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: bad label {value:?} (expected CN, MCI or AD)")]
    BadLabel { line: u64, value: String },
    #[error("line {line}: bad visit index {value:?}")]
    BadVisitIndex { line: u64, value: String },
    #[error("line {line}: bad partition {value:?} (expected train, val or test)")]
    BadPartition { line: u64, value: String },
    #[error("line {line}: bad feature value {value:?}")]
    BadFeature { line: u64, value: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: u64, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: scan {scan} is not in the cohort")]
    UnknownScanId { line: u64, scan: ScanId },
    #[error("cohort scan {0} has no assignment")]
    MissingScanId(ScanId),
    #[error("line {line}: scan {scan} assigned more than once")]
    DuplicateAssignment { line: u64, scan: ScanId },
    #[error("line {line}: scan {scan} belongs to subject {expected}, file says {found}")]
    SubjectMismatch { line: u64, scan: ScanId, expected: String, found: String },
    #[error("assignment does not cover the cohort: {missing} missing, {unknown} unknown scan ids")]
    CoverageMismatch { missing: usize, unknown: usize },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn writer() -> csv::Writer<Vec<u8>> {
    WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer cannot fail");
    String::from_utf8(bytes).expect("csv output of UTF-8 input is UTF-8")
}

fn line_of(record: &StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Reads all records, checks the header, and returns the data rows.
fn rows(text: &str, header: &[&str]) -> Result<Vec<StringRecord>, ManifestError> {
    if text.trim().is_empty() {
        return Err(ManifestError::EmptyFile);
    }
    let mut records = Vec::new();
    for r in reader(text).records() {
        let r = r.map_err(|e| ManifestError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        records.push(r);
    }
    let mut it = records.into_iter();
    let first = it.next().ok_or(ManifestError::EmptyFile)?;
    check_header(&first, header)?;
    let mut out = Vec::new();
    for r in it {
        if r.len() != header.len() {
            return Err(ManifestError::FieldCount { line: line_of(&r), expected: header.len(), found: r.len() });
        }
        out.push(r);
    }
    Ok(out)
}

fn check_header(found: &StringRecord, expected: &[&str]) -> Result<(), ManifestError> {
    // A UTF-8 byte-order mark on the first field is tolerated.
    let fields: Vec<&str> = found
        .iter()
        .enumerate()
        .map(|(i, f)| if i == 0 { f.trim_start_matches('\u{feff}') } else { f })
        .collect();
    if fields != expected {
        return Err(ManifestError::BadHeader { expected: expected.join(","), found: fields.join(",") });
    }
    Ok(())
}

fn parse_label(line: u64, value: &str) -> Result<DiagnosisLabel, ManifestError> {
    value
        .parse()
        .map_err(|_| ManifestError::BadLabel { line, value: value.to_owned() })
}

/// Parses a cohort manifest into records in file order. Labels are
/// case-insensitive.
pub fn parse_manifest(text: &str) -> Result<Vec<ScanRecord>, ManifestError> {
    rows(text, &MANIFEST_HEADER)?
        .into_iter()
        .map(|r| {
            let line = line_of(&r);
            let visit = &r[2];
            let visit_index = visit
                .trim()
                .parse::<u32>()
                .map_err(|_| ManifestError::BadVisitIndex { line, value: visit.to_owned() })?;
            if r[0].is_empty() || r[1].is_empty() {
                return Err(ManifestError::Malformed { line, message: "empty scan_id or subject_id".into() });
            }
            let date = r[3].trim();
            Ok(ScanRecord {
                scan_id: ScanId::new(&r[0]),
                subject_id: r[1].into(),
                visit_index,
                acquisition_date: (!date.is_empty()).then(|| date.to_owned()),
                label: parse_label(line, &r[4])?,
            })
        })
        .collect()
}

/// Parses and validates a manifest in one step.
pub fn read_cohort(text: &str) -> Result<Cohort, ManifestError> {
    Ok(Cohort::build(parse_manifest(text)?)?)
}

/// Canonical manifest text: sorted by scan id, labels upper-case.
pub fn write_manifest(cohort: &Cohort) -> String {
    let mut w = writer();
    w.write_record(MANIFEST_HEADER).expect("in-memory write");
    for s in cohort.scans() {
        let visit = s.visit_index.to_string();
        w.write_record([
            s.scan_id.as_str(),
            s.subject_id.as_str(),
            &visit,
            s.acquisition_date.as_deref().unwrap_or(""),
            s.label.as_str(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Sidecar document written next to every assignment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetadata {
    pub scheme: String,
    pub parameters: Scheme,
    pub seed: u64,
    pub ratios: Option<SplitRatios>,
    pub counts_train: usize,
    pub counts_val: usize,
    pub counts_test: usize,
    pub subjects_train: usize,
    pub subjects_val: usize,
    pub subjects_test: usize,
    pub rng: String,
    pub version: String,
    /// Free-form resolved configuration of the producing command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl SplitMetadata {
    pub fn describe(assignment: &SplitAssignment, cohort: &Cohort) -> Self {
        let [counts_train, counts_val, counts_test] = assignment.counts();
        let subjects = |p| assignment.subjects_in(cohort, p).len();
        Self {
            scheme: assignment.scheme.name().to_owned(),
            parameters: assignment.scheme.clone(),
            seed: assignment.seed,
            ratios: assignment.scheme.ratios(),
            counts_train,
            counts_val,
            counts_test,
            subjects_train: subjects(Partition::Train),
            subjects_val: subjects(Partition::Val),
            subjects_test: subjects(Partition::Test),
            rng: crate::rng::ALGORITHM.to_owned(),
            version: crate::TOOL_VERSION.to_owned(),
            config: None,
        }
    }

    pub fn to_document(&self) -> String {
        to_document(self)
    }

    pub fn from_document(text: &str) -> Result<Self, ManifestError> {
        serde_json::from_str(text).map_err(|e| ManifestError::Metadata(e.to_string()))
    }
}

/// Pretty JSON with a trailing newline; field order follows the struct.
pub fn to_document<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Emits the assignment file (sorted by scan id) and its metadata sidecar.
pub fn write_assignment(
    assignment: &SplitAssignment,
    cohort: &Cohort,
) -> Result<(String, SplitMetadata), ManifestError> {
    let missing = cohort.scan_ids().filter(|s| assignment.partition_of(s.as_str()).is_none()).count();
    let unknown = assignment.mapping().keys().filter(|s| !cohort.contains_scan(s.as_str())).count();
    if missing > 0 || unknown > 0 {
        return Err(ManifestError::CoverageMismatch { missing, unknown });
    }
    let mut w = writer();
    w.write_record(ASSIGNMENT_HEADER).expect("in-memory write");
    for (scan, partition) in assignment.mapping() {
        let record = cohort.scan(scan.as_str()).expect("coverage checked");
        w.write_record([scan.as_str(), record.subject_id.as_str(), partition.as_str()])
            .expect("in-memory write");
    }
    Ok((finish(w), SplitMetadata::describe(assignment, cohort)))
}

/// Reads an assignment file and validates it against `cohort`. Scheme and
/// seed come from `metadata` when given, otherwise they are
/// [`Scheme::Unspecified`] and 0.
pub fn read_assignment(
    text: &str,
    metadata: Option<&SplitMetadata>,
    cohort: &Cohort,
) -> Result<SplitAssignment, ManifestError> {
    let mut mapping = BTreeMap::new();
    for r in rows(text, &ASSIGNMENT_HEADER)? {
        let line = line_of(&r);
        let scan = ScanId::new(&r[0]);
        let Some(record) = cohort.scan(scan.as_str()) else {
            return Err(ManifestError::UnknownScanId { line, scan });
        };
        if record.subject_id.as_str() != &r[1] {
            return Err(ManifestError::SubjectMismatch {
                line,
                expected: record.subject_id.to_string(),
                found: r[1].to_owned(),
                scan,
            });
        }
        let partition: Partition = r[2]
            .parse()
            .map_err(|_| ManifestError::BadPartition { line, value: r[2].to_owned() })?;
        if mapping.insert(scan.clone(), partition).is_some() {
            return Err(ManifestError::DuplicateAssignment { line, scan });
        }
    }
    if let Some(missing) = cohort.scan_ids().find(|s| !mapping.contains_key(s.as_str())) {
        return Err(ManifestError::MissingScanId(missing.clone()));
    }
    let (scheme, seed) = match metadata {
        Some(m) => (m.parameters.clone(), m.seed),
        None => (Scheme::Unspecified, 0),
    };
    Ok(SplitAssignment::new(scheme, seed, mapping))
}

/// Feature file: header `scan_id,f0,...,f{d-1}`.
pub fn parse_features(text: &str) -> Result<FeatureMatrix, ManifestError> {
    if text.trim().is_empty() {
        return Err(ManifestError::EmptyFile);
    }
    let mut records = reader(text).into_records();
    let header = records
        .next()
        .ok_or(ManifestError::EmptyFile)?
        .map_err(|e| ManifestError::Malformed { line: 1, message: e.to_string() })?;
    let dim = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("scan_id".to_owned())
        .chain((0..dim).map(|i| format!("f{i}")))
        .collect();
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    check_header(&header, &expected)?;
    let mut matrix = FeatureMatrix::new(dim)?;
    for r in records {
        let r = r.map_err(|e| ManifestError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = line_of(&r);
        if r.len() != dim + 1 {
            return Err(ManifestError::FieldCount { line, expected: dim + 1, found: r.len() });
        }
        let row = r
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| ManifestError::BadFeature { line, value: v.to_owned() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        matrix.insert(ScanId::new(&r[0]), row)?;
    }
    Ok(matrix)
}

/// Values are written in shortest round-trip form.
pub fn write_features(features: &FeatureMatrix) -> String {
    let mut w = writer();
    let header: Vec<String> = std::iter::once("scan_id".to_owned())
        .chain((0..features.dim()).map(|i| format!("f{i}")))
        .collect();
    w.write_record(&header).expect("in-memory write");
    for (scan, row) in features.rows() {
        let fields = std::iter::once(scan.to_string()).chain(row.iter().map(f64::to_string));
        w.write_record(fields).expect("in-memory write");
    }
    finish(w)
}

/// Predictions file: header `scan_id,label`.
pub fn write_predictions(predictions: &Predictions) -> String {
    let mut w = writer();
    w.write_record(PREDICTIONS_HEADER).expect("in-memory write");
    for (scan, label) in predictions.labels() {
        w.write_record([scan.as_str(), label.as_str()]).expect("in-memory write");
    }
    finish(w)
}

pub fn parse_predictions(text: &str, provenance: &str) -> Result<Predictions, ManifestError> {
    let mut labels = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in rows(text, &PREDICTIONS_HEADER)? {
        let line = line_of(&r);
        let scan = ScanId::new(&r[0]);
        if !seen.insert(scan.clone()) {
            return Err(ManifestError::DuplicateAssignment { line, scan });
        }
        labels.insert(scan, parse_label(line, &r[1])?);
    }
    Ok(Predictions::new(provenance, labels))
}
