//! Shared data model: student records, comment streams, and the dense feature grid
//! handed to preprocessing and training. Tabular data is read from CSV, comments
//! from JSON Lines.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ID_COLUMN: &str = "student_id";
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Positive,
    Neutral,
    Negative,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; 3] =
        [SentimentClass::Positive, SentimentClass::Neutral, SentimentClass::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Positive => "positive",
            SentimentClass::Neutral => "neutral",
            SentimentClass::Negative => "negative",
        }
    }

    pub fn index(self) -> usize {
        match self {
            SentimentClass::Positive => 0,
            SentimentClass::Neutral => 1,
            SentimentClass::Negative => 2,
        }
    }
}

/// One student's tabular row. `features` is aligned with the owning dataset's
/// `feature_names`; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub student_id: String,
    pub features: Vec<Option<f64>>,
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<StudentRecord>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, records: Vec<StudentRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (row, rec) in records.iter().enumerate() {
            if !seen.insert(rec.student_id.as_str()) {
                return Err(Error::DuplicateStudentId(rec.student_id.clone()));
            }
            if rec.features.len() != feature_names.len() {
                return Err(Error::SchemaMismatch {
                    expected: feature_names.clone(),
                    got: vec![format!("row {row} has {} values", rec.features.len())],
                });
            }
            if let Some(l) = rec.label {
                if l > 1 {
                    return Err(Error::BadLabel { row, value: l.to_string() });
                }
            }
        }
        Ok(Self { records, feature_names })
    }

    pub fn records(&self) -> &[StudentRecord] {
        &self.records
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn m(&self) -> usize {
        self.feature_names.len()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.student_id.clone()).collect()
    }

    /// Labels for every record, or `None` if any record is unlabeled.
    pub fn labels(&self) -> Option<Vec<u8>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn feature_matrix(&self) -> FeatureMatrix {
        let n = self.n();
        let m = self.m();
        let mut values = Vec::with_capacity(n * m);
        let mut mask = Vec::with_capacity(n * m);
        for rec in &self.records {
            for v in &rec.features {
                match v {
                    Some(x) => {
                        values.push(*x);
                        mask.push(false);
                    }
                    None => {
                        values.push(f64::NAN);
                        mask.push(true);
                    }
                }
            }
        }
        FeatureMatrix {
            values,
            missing_mask: mask,
            column_names: self.feature_names.clone(),
            row_ids: self.ids(),
        }
    }

    /// Records whose id is in `ids`, in the original order.
    pub fn subset(&self, ids: &HashSet<String>) -> Dataset {
        Dataset {
            records: self.records.iter().filter(|r| ids.contains(&r.student_id)).cloned().collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Copy with the named columns removed.
    pub fn drop_columns(&self, names: &[String]) -> Dataset {
        let keep: Vec<usize> = (0..self.m()).filter(|&j| !names.contains(&self.feature_names[j])).collect();
        Dataset {
            records: self
                .records
                .iter()
                .map(|r| StudentRecord {
                    student_id: r.student_id.clone(),
                    features: keep.iter().map(|&j| r.features[j]).collect(),
                    label: r.label,
                })
                .collect(),
            feature_names: keep.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

/// Dense row-major grid. Masked cells hold `NaN` and must not be read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub missing_mask: Vec<bool>,
    pub column_names: Vec<String>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    /// Fully observed matrix from row vectors.
    pub fn from_rows(column_names: Vec<String>, row_ids: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let m = column_names.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for r in rows {
            assert_eq!(r.len(), m, "row width must match column count");
            values.extend_from_slice(r);
        }
        assert_eq!(row_ids.len(), rows.len());
        let missing_mask = vec![false; values.len()];
        Self { values, missing_mask, column_names, row_ids }
    }

    /// Fully observed matrix with synthetic names `x0..`, ids `r0..`.
    pub fn from_unnamed_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.first().map_or(0, |r| r.len());
        let names = (0..m).map(|j| format!("x{j}")).collect();
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        Self::from_rows(names, ids, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    #[inline]
    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing_mask[i * self.n_cols() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_cols();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn is_fully_imputed(&self) -> bool {
        !self.missing_mask.iter().any(|&b| b)
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let m = self.n_cols();
        let mut values = Vec::with_capacity(idx.len() * m);
        let mut mask = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            values.extend_from_slice(self.row(i));
            mask.extend_from_slice(&self.missing_mask[i * m..(i + 1) * m]);
        }
        FeatureMatrix {
            values,
            missing_mask: mask,
            column_names: self.column_names.clone(),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Columns by name, in the order given. Unknown names are a schema error.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_names.iter().position(|c| c == n).ok_or_else(|| Error::SchemaMismatch {
                    expected: names.to_vec(),
                    got: self.column_names.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let n = self.n_rows();
        let mut values = Vec::with_capacity(n * idx.len());
        let mut mask = Vec::with_capacity(n * idx.len());
        for i in 0..n {
            for &j in &idx {
                values.push(self.get(i, j));
                mask.push(self.is_missing(i, j));
            }
        }
        Ok(FeatureMatrix {
            values,
            missing_mask: mask,
            column_names: names.to_vec(),
            row_ids: self.row_ids.clone(),
        })
    }

    /// Column-wise concatenation; rows must align by id.
    pub fn hconcat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.n_rows() != other.n_rows() {
            return Err(Error::LengthMismatch(self.n_rows(), other.n_rows()));
        }
        if let Some(i) = (0..self.n_rows()).find(|&i| self.row_ids[i] != other.row_ids[i]) {
            return Err(Error::UnknownStudent(other.row_ids[i].clone()));
        }
        let (a, b) = (self.n_cols(), other.n_cols());
        let mut values = Vec::with_capacity(self.n_rows() * (a + b));
        let mut mask = Vec::with_capacity(self.n_rows() * (a + b));
        for i in 0..self.n_rows() {
            values.extend_from_slice(self.row(i));
            values.extend_from_slice(other.row(i));
            mask.extend_from_slice(&self.missing_mask[i * a..(i + 1) * a]);
            mask.extend_from_slice(&other.missing_mask[i * b..(i + 1) * b]);
        }
        let mut names = self.column_names.clone();
        names.extend(other.column_names.iter().cloned());
        Ok(FeatureMatrix { values, missing_mask: mask, column_names: names, row_ids: self.row_ids.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<SentimentClass>,
}

/// Comments ordered by `(student_id, timestamp)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommentSet {
    comments: Vec<Comment>,
}

impl CommentSet {
    pub fn new(mut comments: Vec<Comment>) -> Self {
        comments.sort_by(|a, b| a.student_id.cmp(&b.student_id).then(a.timestamp.cmp(&b.timestamp)));
        Self { comments }
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn subset(&self, ids: &HashSet<String>) -> CommentSet {
        CommentSet { comments: self.comments.iter().filter(|c| ids.contains(&c.student_id)).cloned().collect() }
    }

    pub fn student_ids(&self) -> BTreeSet<String> {
        self.comments.iter().map(|c| c.student_id.clone()).collect()
    }
}

fn parse_cell(raw: &str, row: usize, col: &str) -> Result<Option<f64>> {
    let t = raw.trim();
    if t.is_empty() {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::NonNumericCell { row, col: col.to_string() }),
    }
}

/// Reads a tabular CSV. Columns other than `student_id` and `label` become features
/// in header order. `schema`, when given, must equal the feature column list exactly.
pub fn load_tabular(path: impl AsRef<Path>, schema: Option<&[String]>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tabular(file, schema)
}

pub fn read_tabular<R: std::io::Read>(reader: R, schema: Option<&[String]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let id_col = headers
        .iter()
        .position(|h| h == ID_COLUMN)
        .ok_or_else(|| Error::MissingColumn(ID_COLUMN.to_string()))?;
    let label_col = headers.iter().position(|h| h == LABEL_COLUMN);
    let feature_cols: Vec<usize> =
        (0..headers.len()).filter(|&j| j != id_col && Some(j) != label_col).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&j| headers[j].clone()).collect();
    if let Some(expected) = schema {
        if expected != feature_names.as_slice() {
            return Err(Error::SchemaMismatch { expected: expected.to_vec(), got: feature_names });
        }
    }

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let student_id = rec.get(id_col).unwrap_or("").trim().to_string();
        let features = feature_cols
            .iter()
            .map(|&j| parse_cell(rec.get(j).unwrap_or(""), row, &headers[j]))
            .collect::<Result<Vec<_>>>()?;
        let label = match label_col.map(|j| rec.get(j).unwrap_or("").trim()) {
            None | Some("") => None,
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some(other) => return Err(Error::BadLabel { row, value: other.to_string() }),
        };
        records.push(StudentRecord { student_id, features, label });
    }
    Dataset::new(feature_names, records)
}

/// Writes `ds` in the format [`load_tabular`] reads. A `label` column is emitted
/// when any record carries a label.
pub fn write_tabular<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let with_label = ds.records.iter().any(|r| r.label.is_some());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(ds.feature_names.iter().cloned());
    if with_label {
        header.push(LABEL_COLUMN.to_string());
    }
    wtr.write_record(&header)?;
    for rec in &ds.records {
        let mut row = Vec::with_capacity(header.len());
        row.push(rec.student_id.clone());
        row.extend(rec.features.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        if with_label {
            row.push(rec.label.map(|l| l.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_tabular(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tabular(ds, std::io::BufWriter::new(file))
}

/// Accepts RFC 3339, a naive `YYYY-MM-DDTHH:MM:SS` (taken as UTC), or a bare date.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)).map(|t| t.and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

#[derive(Deserialize)]
struct RawComment {
    student_id: String,
    timestamp: String,
    text: String,
    #[serde(default)]
    gold_label: Option<SentimentClass>,
}

#[derive(Serialize)]
struct RawCommentOut<'a> {
    student_id: &'a str,
    timestamp: String,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_label: Option<SentimentClass>,
}

pub fn load_comments(path: impl AsRef<Path>) -> Result<CommentSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_comments(BufReader::new(file))
}

/// Parses JSON Lines. Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_comments<R: BufRead>(reader: R) -> Result<CommentSet> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<comments>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawComment = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedJson { line: lineno, message: e.to_string() })?;
        let timestamp = parse_timestamp(&raw.timestamp).ok_or(Error::BadTimestamp(lineno))?;
        if raw.text.trim().is_empty() {
            return Err(Error::EmptyText(lineno));
        }
        out.push(Comment { student_id: raw.student_id, timestamp, text: raw.text, gold_label: raw.gold_label });
    }
    Ok(CommentSet::new(out))
}

pub fn write_comments<W: Write>(cs: &CommentSet, mut writer: W) -> Result<()> {
    for c in &cs.comments {
        let raw = RawCommentOut {
            student_id: &c.student_id,
            timestamp: format_timestamp(&c.timestamp),
            text: &c.text,
            gold_label: c.gold_label,
        };
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<comments>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<comments>", e))?;
    Ok(())
}

pub fn save_comments(cs: &CommentSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_comments(cs, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMissingRate {
    pub feature: String,
    pub missing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_records: usize,
    pub n_features: usize,
    pub n_comments: usize,
    /// Comment student ids with no tabular record (warnings).
    pub orphan_comment_ids: Vec<String>,
    pub missing_rates: Vec<FeatureMissingRate>,
    pub labeled: usize,
    /// Share of labeled records with label 1.
    pub positive_rate: Option<f64>,
}

pub fn validate(ds: &Dataset, cs: &CommentSet) -> ValidationReport {
    let ids: HashSet<&str> = ds.records.iter().map(|r| r.student_id.as_str()).collect();
    let orphan_comment_ids =
        cs.student_ids().into_iter().filter(|id| !ids.contains(id.as_str())).collect();

    let mut missing = vec![0usize; ds.m()];
    for rec in &ds.records {
        for (j, v) in rec.features.iter().enumerate() {
            if v.is_none() {
                missing[j] += 1;
            }
        }
    }
    let n = ds.n();
    let missing_rates = ds
        .feature_names
        .iter()
        .zip(&missing)
        .map(|(f, &c)| FeatureMissingRate {
            feature: f.clone(),
            missing_rate: if n == 0 { 0.0 } else { c as f64 / n as f64 },
        })
        .collect();

    let labels: Vec<u8> = ds.records.iter().filter_map(|r| r.label).collect();
    let positive_rate = if labels.is_empty() {
        None
    } else {
        Some(labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64)
    };

    ValidationReport {
        n_records: n,
        n_features: ds.m(),
        n_comments: cs.len(),
        orphan_comment_ids,
        missing_rates,
        labeled: labels.len(),
        positive_rate,
    }
}

/// Row index by student id.
pub fn id_index(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}
