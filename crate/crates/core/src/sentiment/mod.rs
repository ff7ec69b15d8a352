//! Comment sentiment: per-comment scores, calendar-month aggregation, the paired
//! t-test, and the per-student feature block merged into the tabular data.

mod scorer;
mod ttest;

pub use scorer::{train_scorer, ScorerConfig, SentimentScorer, TextConfig, SCORER_FORMAT_VERSION};
pub use ttest::{ln_gamma, paired_ttest, regularized_incomplete_beta, student_t_two_sided_p, TTestResult};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::data::{parse_timestamp, CommentSet, FeatureMatrix, SentimentClass};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    /// Scores at or above this are positive.
    pub positive: f64,
    /// Scores at or below this are negative.
    pub negative: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self { positive: 0.2, negative: -0.2 }
    }
}

impl ClassThresholds {
    pub fn classify(&self, score: f64) -> SentimentClass {
        if score >= self.positive {
            SentimentClass::Positive
        } else if score <= self.negative {
            SentimentClass::Negative
        } else {
            SentimentClass::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub score: f64,
    pub class: SentimentClass,
}

/// Calendar month (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn of(t: &DateTime<Utc>) -> Self {
        Self { year: t.year(), month: t.month() }
    }

    pub fn of_date(d: &NaiveDate) -> Self {
        Self { year: d.year(), month: d.month() }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for YearMonth {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("bad year-month `{s}`"))?;
        let year = y.parse().map_err(|_| format!("bad year `{y}`"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month `{m}`"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month {month} out of range"));
        }
        Ok(Self { year, month })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySentiment {
    pub student_id: String,
    pub month: YearMonth,
    pub mean_score: f64,
    pub comment_count: usize,
}

/// One record per (student, month) with at least one comment, ordered by student then month.
pub fn aggregate_monthly(scores: &[SentimentScore]) -> Vec<MonthlySentiment> {
    let mut acc: BTreeMap<(&str, YearMonth), (f64, usize)> = BTreeMap::new();
    for s in scores {
        let e = acc.entry((s.student_id.as_str(), YearMonth::of(&s.timestamp))).or_insert((0.0, 0));
        e.0 += s.score;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((id, month), (sum, count))| MonthlySentiment {
            student_id: id.to_string(),
            month,
            mean_score: (sum / count as f64).clamp(-1.0, 1.0),
            comment_count: count,
        })
        .collect()
}

#[derive(Deserialize)]
struct RawExternalScore {
    student_id: String,
    timestamp: String,
    score: f64,
}

/// Reads externally produced scores (`{"student_id", "timestamp", "score"}` per line).
pub fn load_external_scores(path: impl AsRef<Path>, thresholds: &ClassThresholds) -> Result<Vec<SentimentScore>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_external_scores(std::io::BufReader::new(file), thresholds)
}

pub fn read_external_scores<R: BufRead>(reader: R, thresholds: &ClassThresholds) -> Result<Vec<SentimentScore>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<scores>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExternalScore = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedJson { line: lineno, message: e.to_string() })?;
        let timestamp = parse_timestamp(&raw.timestamp).ok_or(Error::BadTimestamp(lineno))?;
        if !(-1.0..=1.0).contains(&raw.score) {
            return Err(Error::ScoreOutOfRange { line: lineno, score: raw.score });
        }
        out.push(SentimentScore {
            student_id: raw.student_id,
            timestamp,
            score: raw.score,
            class: thresholds.classify(raw.score),
        });
    }
    out.sort_by(|a, b| a.student_id.cmp(&b.student_id).then(a.timestamp.cmp(&b.timestamp)));
    Ok(out)
}

/// Per-student sentiment summary. Students without comments get the neutral
/// default (all zeros, `has_comments = false`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentFeatures {
    pub student_id: String,
    pub overall_mean: f64,
    pub first_month_mean: f64,
    pub last_month_mean: f64,
    pub comment_count: usize,
    pub negative_fraction: f64,
    pub has_comments: bool,
    /// At least one negative comment during the first term month.
    pub early_negative: bool,
    pub first_month_count: usize,
    pub last_month: Option<YearMonth>,
}

impl SentimentFeatures {
    pub fn neutral(student_id: &str) -> Self {
        Self {
            student_id: student_id.to_string(),
            overall_mean: 0.0,
            first_month_mean: 0.0,
            last_month_mean: 0.0,
            comment_count: 0,
            negative_fraction: 0.0,
            has_comments: false,
            early_negative: false,
            first_month_count: 0,
            last_month: None,
        }
    }

    /// first-month mean minus last-month mean, when both months exist and differ.
    pub fn first_last_difference(&self, term_start: NaiveDate) -> Option<f64> {
        let first = YearMonth::of_date(&term_start);
        match self.last_month {
            Some(last) if self.first_month_count > 0 && last > first => {
                Some(self.first_month_mean - self.last_month_mean)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlockOptions {
    /// Append the first-minus-last monthly difference (0 when undefined).
    pub include_first_last_difference: bool,
}

pub const SENTIMENT_COLUMNS: [&str; 7] = [
    "sent_overall_mean",
    "sent_first_month_mean",
    "sent_last_month_mean",
    "sent_comment_count",
    "sent_negative_fraction",
    "sent_has_comments",
    "sent_early_negative",
];
pub const SENTIMENT_DIFF_COLUMN: &str = "sent_first_last_diff";

/// Summaries for every id in `students` (in that order) from already-scored comments.
pub fn features_from_scores(
    scores: &[SentimentScore],
    students: &[String],
    term_start: NaiveDate,
) -> Vec<SentimentFeatures> {
    let first = YearMonth::of_date(&term_start);
    let mut by_student: HashMap<&str, Vec<&SentimentScore>> = HashMap::new();
    for s in scores {
        by_student.entry(s.student_id.as_str()).or_default().push(s);
    }
    students
        .iter()
        .map(|id| {
            let Some(list) = by_student.get(id.as_str()) else {
                return SentimentFeatures::neutral(id);
            };
            let mut list: Vec<&SentimentScore> = list.clone();
            list.sort_by_key(|s| s.timestamp);
            let count = list.len();
            let overall = list.iter().map(|s| s.score).sum::<f64>() / count as f64;
            let negatives = list.iter().filter(|s| s.class == SentimentClass::Negative).count();
            let in_first: Vec<&&SentimentScore> =
                list.iter().filter(|s| YearMonth::of(&s.timestamp) == first).collect();
            let first_mean = if in_first.is_empty() {
                0.0
            } else {
                in_first.iter().map(|s| s.score).sum::<f64>() / in_first.len() as f64
            };
            let last = list.iter().map(|s| YearMonth::of(&s.timestamp)).max().expect("non-empty");
            let in_last: Vec<f64> =
                list.iter().filter(|s| YearMonth::of(&s.timestamp) == last).map(|s| s.score).collect();
            SentimentFeatures {
                student_id: id.clone(),
                overall_mean: overall,
                first_month_mean: first_mean,
                last_month_mean: in_last.iter().sum::<f64>() / in_last.len() as f64,
                comment_count: count,
                negative_fraction: negatives as f64 / count as f64,
                has_comments: true,
                early_negative: in_first.iter().any(|s| s.class == SentimentClass::Negative),
                first_month_count: in_first.len(),
                last_month: Some(last),
            }
        })
        .collect()
}

/// Scores `cs` with `scorer` and summarizes per student.
pub fn sentiment_features(
    cs: &CommentSet,
    scorer: &SentimentScorer,
    term_start: NaiveDate,
    students: &[String],
) -> Vec<SentimentFeatures> {
    features_from_scores(&scorer.score_all(cs), students, term_start)
}

pub fn sentiment_column_names(opts: &FeatureBlockOptions) -> Vec<String> {
    let mut names: Vec<String> = SENTIMENT_COLUMNS.iter().map(|s| s.to_string()).collect();
    if opts.include_first_last_difference {
        names.push(SENTIMENT_DIFF_COLUMN.to_string());
    }
    names
}

/// Numeric block with one row per feature row, ids preserved.
pub fn feature_block(rows: &[SentimentFeatures], term_start: NaiveDate, opts: &FeatureBlockOptions) -> FeatureMatrix {
    let values: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.overall_mean,
                r.first_month_mean,
                r.last_month_mean,
                r.comment_count as f64,
                r.negative_fraction,
                f64::from(u8::from(r.has_comments)),
                f64::from(u8::from(r.early_negative)),
            ];
            if opts.include_first_last_difference {
                v.push(r.first_last_difference(term_start).unwrap_or(0.0));
            }
            v
        })
        .collect();
    FeatureMatrix::from_rows(
        sentiment_column_names(opts),
        rows.iter().map(|r| r.student_id.clone()).collect(),
        &values,
    )
}

/// Per-student first-vs-last differences for the paired t-test.
pub fn ttest_differences(rows: &[SentimentFeatures], term_start: NaiveDate) -> Vec<f64> {
    rows.iter().filter_map(|r| r.first_last_difference(term_start)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskGroup {
    pub students: usize,
    pub dropouts: usize,
    /// `None` when the group is empty.
    pub dropout_rate: Option<f64>,
}

impl RiskGroup {
    fn from_counts(students: usize, dropouts: usize) -> Self {
        Self {
            students,
            dropouts,
            dropout_rate: (students > 0).then(|| dropouts as f64 / students as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    /// Negative comment during the first term month.
    pub early_negative: RiskGroup,
    /// Negative comments only after the first month.
    pub late_negative_only: RiskGroup,
    pub never_negative: RiskGroup,
}

/// Dropout rate by when (if ever) a student first voiced negative sentiment.
pub fn temporal_risk(rows: &[SentimentFeatures], labels: &HashMap<String, u8>) -> TemporalReport {
    let mut counts = [(0usize, 0usize); 3];
    for r in rows {
        let Some(&y) = labels.get(&r.student_id) else { continue };
        let g = if r.early_negative {
            0
        } else if r.negative_fraction > 0.0 {
            1
        } else {
            2
        };
        counts[g].0 += 1;
        counts[g].1 += usize::from(y == 1);
    }
    TemporalReport {
        early_negative: RiskGroup::from_counts(counts[0].0, counts[0].1),
        late_negative_only: RiskGroup::from_counts(counts[1].0, counts[1].1),
        never_negative: RiskGroup::from_counts(counts[2].0, counts[2].1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(ts: &str, score: f64) -> SentimentScore {
        let t = ClassThresholds::default();
        SentimentScore {
            student_id: "s".into(),
            timestamp: parse_timestamp(ts).unwrap(),
            score,
            class: t.classify(score),
        }
    }

    fn sept() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 9, 1).unwrap()
    }

    #[test]
    fn class_thresholds() {
        let t = ClassThresholds::default();
        assert_eq!(t.classify(0.6), SentimentClass::Positive);
        assert_eq!(t.classify(0.2), SentimentClass::Positive);
        assert_eq!(t.classify(0.0), SentimentClass::Neutral);
        assert_eq!(t.classify(-0.2), SentimentClass::Negative);
        assert_eq!(t.classify(-0.7), SentimentClass::Negative);
    }

    #[test]
    fn score_definition_from_probs() {
        // score = p(pos) - p(neg)
        let t = ClassThresholds::default();
        for (pp, pn, want, cls) in [
            (0.7, 0.1, 0.6, SentimentClass::Positive),
            (0.3, 0.3, 0.0, SentimentClass::Neutral),
            (0.1, 0.8, -0.7, SentimentClass::Negative),
        ] {
            let s: f64 = pp - pn;
            assert!((s - want).abs() < 1e-12);
            assert_eq!(t.classify(s), cls);
        }
    }

    #[test]
    fn monthly_examples() {
        let m = aggregate_monthly(&[at("2023-03-05", 0.4)]);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].mean_score, m[0].comment_count), (0.4, 1));
        assert_eq!(m[0].month.to_string(), "2023-03");

        let m = aggregate_monthly(&[at("2023-03-05", 0.5), at("2023-03-20", -0.5)]);
        assert_eq!((m[0].mean_score, m[0].comment_count), (0.0, 2));

        let m = aggregate_monthly(&[at("2023-02-05", 0.5), at("2023-03-20", -0.3), at("2023-03-21", -0.1)]);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].mean_score, 0.5);
        assert!((m[1].mean_score + 0.2).abs() < 1e-12);
    }

    #[test]
    fn student_feature_examples() {
        let ids = vec!["s".to_string(), "quiet".to_string()];
        let rows = features_from_scores(&[at("2023-09-03", 0.4)], &ids, sept());
        assert_eq!(rows[0].overall_mean, 0.4);
        assert_eq!(rows[0].first_month_mean, 0.4);
        assert_eq!(rows[0].comment_count, 1);
        assert_eq!(rows[0].negative_fraction, 0.0);
        assert_eq!(rows[1], SentimentFeatures::neutral("quiet"));

        let rows = features_from_scores(&[at("2023-09-03", -0.5), at("2023-11-03", 0.5)], &ids[..1], sept());
        assert_eq!(rows[0].negative_fraction, 0.5);
        assert!(rows[0].early_negative);
        assert_eq!(rows[0].first_last_difference(sept()), Some(-1.0));
        assert_eq!(ttest_differences(&rows, sept()), vec![-1.0]);
    }

    #[test]
    fn block_columns() {
        let rows = vec![SentimentFeatures::neutral("a")];
        let b = feature_block(&rows, sept(), &FeatureBlockOptions { include_first_last_difference: true });
        assert_eq!(b.n_cols(), 8);
        assert!(b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn temporal_groups() {
        let mut early = SentimentFeatures::neutral("e");
        early.early_negative = true;
        early.negative_fraction = 1.0;
        let mut late = SentimentFeatures::neutral("l");
        late.negative_fraction = 0.5;
        let never = SentimentFeatures::neutral("n");
        let labels: HashMap<String, u8> =
            [("e".to_string(), 1), ("l".to_string(), 0), ("n".to_string(), 0)].into_iter().collect();
        let rep = temporal_risk(&[early, late, never.clone()], &labels);
        assert_eq!(rep.early_negative.dropout_rate, Some(1.0));
        assert_eq!(rep.late_negative_only.dropout_rate, Some(0.0));
        assert_eq!(rep.never_negative.dropout_rate, Some(0.0));

        let rep = temporal_risk(&[never], &labels);
        assert_eq!(rep.early_negative.students, 0);
        assert_eq!(rep.early_negative.dropout_rate, None);
        assert_eq!(rep.late_negative_only.students, 0);
    }

    #[test]
    fn external_scores() {
        let t = ClassThresholds::default();
        let s = read_external_scores(
            r#"{"student_id":"a","timestamp":"2023-09-01","score":-0.9}"#.as_bytes(),
            &t,
        )
        .unwrap();
        assert_eq!(s[0].class, SentimentClass::Negative);
        let err = read_external_scores(r#"{"student_id":"a","timestamp":"2023-09-01","score":2}"#.as_bytes(), &t)
            .unwrap_err();
        assert!(matches!(err, Error::ScoreOutOfRange { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn monthly_mass_conservation(
            items in proptest::collection::vec((0u8..4, 1u32..=12, 1u32..=28, -1.0f64..=1.0), 0..60)
        ) {
            let scores: Vec<SentimentScore> = items
                .iter()
                .map(|&(s, m, d, v)| SentimentScore {
                    student_id: format!("s{s}"),
                    timestamp: NaiveDate::from_ymd_opt(2023, m, d).unwrap().and_hms_opt(12, 0, 0).unwrap().and_utc(),
                    score: v,
                    class: ClassThresholds::default().classify(v),
                })
                .collect();
            let agg = aggregate_monthly(&scores);
            let lhs: f64 = agg.iter().map(|r| r.mean_score * r.comment_count as f64).sum();
            let rhs: f64 = scores.iter().map(|s| s.score).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
            prop_assert_eq!(agg.iter().map(|r| r.comment_count).sum::<usize>(), scores.len());
            for r in &agg {
                prop_assert!(r.comment_count >= 1 && (-1.0..=1.0).contains(&r.mean_score));
            }
        }

        #[test]
        fn thresholds_partition(score in -1.0f64..=1.0) {
            let t = ClassThresholds::default();
            let c = t.classify(score);
            let hits = [score >= 0.2, score <= -0.2, score > -0.2 && score < 0.2];
            prop_assert_eq!(hits.iter().filter(|&&h| h).count(), 1);
            match c {
                SentimentClass::Positive => prop_assert!(hits[0]),
                SentimentClass::Negative => prop_assert!(hits[1]),
                SentimentClass::Neutral => prop_assert!(hits[2]),
            }
        }
    }
}
