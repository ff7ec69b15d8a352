//! Synthetic cohorts with a known generative mechanism.
//!
//! Per student: latent engagement `e ~ N(0,1)` loads onto the four named engagement
//! columns; latent affect `a = rho e + sqrt(1 - rho^2) u` drives the polarity of
//! monthly comments. The dropout label is Bernoulli with
//! `logit = bias - sum_k w_k z_k - w_sent a + boost * [negative comment in month 1]`,
//! where `z_k` are the standardized drivers behind the engagement columns and `bias`
//! is solved so the mean probability equals the configured base rate.

use chrono::{DateTime, Datelike, Duration, Months, NaiveDate, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Comment, CommentSet, Dataset, SentimentClass, StudentRecord};
use crate::error::{Error, Result};
use crate::rng;

pub const NAMED_COLUMNS: [&str; 5] = ["weekly_minutes", "active_days", "progression_totale", "heures_derniers_1_ans", "age"];
pub const TOTAL_COLUMNS: usize = 49;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectWeights {
    pub weekly_minutes: f64,
    pub active_days: f64,
    pub progression_totale: f64,
    pub heures_derniers_1_ans: f64,
    pub sentiment: f64,
    pub early_negative_boost: f64,
}

impl Default for EffectWeights {
    fn default() -> Self {
        Self {
            weekly_minutes: 0.9,
            active_days: 0.6,
            progression_totale: 0.7,
            heures_derniers_1_ans: 0.4,
            sentiment: 0.6,
            early_negative_boost: 0.8,
        }
    }
}

impl EffectWeights {
    fn engagement(&self) -> [f64; 4] {
        [self.weekly_minutes, self.active_days, self.progression_totale, self.heures_derniers_1_ans]
    }

    pub fn zero() -> Self {
        Self {
            weekly_minutes: 0.0,
            active_days: 0.0,
            progression_totale: 0.0,
            heures_derniers_1_ans: 0.0,
            sentiment: 0.0,
            early_negative_boost: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lexicons {
    pub positive: Vec<String>,
    pub neutral: Vec<String>,
    pub negative: Vec<String>,
    /// Polarity-free words mixed into every comment.
    pub filler: Vec<String>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for Lexicons {
    fn default() -> Self {
        Self {
            positive: strings(&[
                "really enjoying this course",
                "great explanations in the lectures",
                "the tutor was very helpful",
                "i love the practical exercises",
                "feeling motivated and confident",
                "excellent feedback on my work",
                "this module is fantastic",
                "happy with my progress",
            ]),
            neutral: strings(&[
                "submitted the assignment",
                "question about the schedule",
                "when is the next exam",
                "the lab session is on tuesday",
                "uploaded my report",
                "attended the webinar",
                "checking the reading list",
                "need the room number",
            ]),
            negative: strings(&[
                "thinking about quitting",
                "too hard to follow",
                "feeling lost and frustrated",
                "the workload is overwhelming",
                "i want to drop out",
                "nobody answers my questions",
                "completely stressed and behind",
                "boring and useless content",
            ]),
            filler: strings(&["today", "this week", "for module two", "again", "before friday", "for the project", "honestly", "so far"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_students: usize,
    pub dropout_base_rate: f64,
    pub weights: EffectWeights,
    /// Correlation between engagement and affect.
    pub rho: f64,
    /// Loading of each named engagement column on the latent engagement.
    pub loading: f64,
    /// Mean comments per student per month.
    pub comment_rate: f64,
    pub term_months: u32,
    pub term_start: NaiveDate,
    /// Sharpness of the affect-to-polarity softmax.
    pub polarity_gain: f64,
    /// Per-comment affect noise.
    pub affect_noise: f64,
    /// Fraction of comments that keep their gold class label.
    pub gold_fraction: f64,
    /// Fraction of feature cells blanked out.
    pub missing_rate: f64,
    pub lexicons: Lexicons,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_students: 5000,
            dropout_base_rate: 0.25,
            weights: EffectWeights::default(),
            rho: 0.4,
            loading: 0.8,
            comment_rate: 1.2,
            term_months: 4,
            term_start: NaiveDate::from_ymd_opt(2023, 9, 1).expect("valid date"),
            polarity_gain: 1.5,
            affect_noise: 0.5,
            gold_fraction: 0.3,
            missing_rate: 0.02,
            lexicons: Lexicons::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Default,
    /// Sentiment dominates the label mechanism.
    SentimentDriven,
    /// Labels independent of sentiment given the tabular columns.
    Null,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "default" => Some(Preset::Default),
            "sentiment-driven" => Some(Preset::SentimentDriven),
            "null" => Some(Preset::Null),
            _ => None,
        }
    }

    pub fn config(self) -> SynthConfig {
        let mut cfg = SynthConfig::default();
        match self {
            Preset::Default => {}
            Preset::SentimentDriven => {
                cfg.weights = EffectWeights {
                    weekly_minutes: 0.5,
                    active_days: 0.3,
                    progression_totale: 0.4,
                    heures_derniers_1_ans: 0.2,
                    sentiment: 1.6,
                    early_negative_boost: 1.5,
                };
                cfg.rho = 0.2;
            }
            Preset::Null => {
                cfg.weights.sentiment = 0.0;
                cfg.weights.early_negative_boost = 0.0;
            }
        }
        cfg
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if self.n_students < 2 {
            return bad("n_students must be at least 2");
        }
        if !(self.dropout_base_rate > 0.0 && self.dropout_base_rate < 1.0) {
            return bad("dropout_base_rate must lie in (0, 1)");
        }
        if !(-1.0..=1.0).contains(&self.rho) || !(0.0..=1.0).contains(&self.loading) {
            return bad("rho must lie in [-1, 1] and loading in [0, 1]");
        }
        if !(self.comment_rate >= 0.0) || self.term_months == 0 {
            return bad("comment_rate must be >= 0 and term_months >= 1");
        }
        if !(0.0..=1.0).contains(&self.gold_fraction) || !(0.0..1.0).contains(&self.missing_rate) {
            return bad("gold_fraction must lie in [0, 1] and missing_rate in [0, 1)");
        }
        if !(self.polarity_gain >= 0.0) || !(self.affect_noise >= 0.0) {
            return bad("polarity_gain and affect_noise must be >= 0");
        }
        let w = &self.weights;
        if [w.weekly_minutes, w.active_days, w.progression_totale, w.heures_derniers_1_ans, w.sentiment, w.early_negative_boost]
            .iter()
            .any(|v| !v.is_finite())
        {
            return bad("effect weights must be finite");
        }
        let lex = &self.lexicons;
        if lex.positive.is_empty() || lex.neutral.is_empty() || lex.negative.is_empty() {
            return bad("every lexicon needs at least one phrase");
        }
        let lists = [&lex.positive, &lex.neutral, &lex.negative];
        for (i, a) in lists.iter().enumerate() {
            for b in &lists[i + 1..] {
                if a.iter().any(|p| b.contains(p)) {
                    return bad("lexicons must be disjoint");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentTruth {
    pub student_id: String,
    pub engagement: f64,
    pub affect: f64,
    /// Standardized drivers of the four engagement columns.
    pub drivers: [f64; 4],
    pub early_negative: bool,
    pub n_comments: usize,
    pub dropout_probability: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub bias: f64,
    pub feature_names: Vec<String>,
    pub students: Vec<StudentTruth>,
}

pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = NAMED_COLUMNS.iter().map(|s| s.to_string()).collect();
    names.extend((NAMED_COLUMNS.len() + 1..=TOTAL_COLUMNS).map(|k| format!("synth_f{k:02}")));
    names
}

/// Noise columns loading weakly on engagement (no direct label effect).
const WEAK_PROXIES: usize = 10;
const WEAK_LOADING: f64 = 0.3;

fn normal(r: &mut rng::Rng) -> f64 {
    StandardNormal.sample(r)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Draft {
    truth: StudentTruth,
    features: Vec<Option<f64>>,
    comments: Vec<Comment>,
    /// Uniform draw deciding the label once the bias is known.
    u: f64,
    eta: f64,
}

fn comment_time(cfg: &SynthConfig, month: u32, r: &mut rng::Rng) -> DateTime<Utc> {
    let first = cfg.term_start.with_day(1).expect("first of month");
    let start = first.checked_add_months(Months::new(month)).expect("date in range");
    let day = r.random_range(0..28);
    let secs = r.random_range(0..86_400);
    let naive = start.and_hms_opt(0, 0, 0).expect("midnight") + Duration::days(day) + Duration::seconds(secs);
    Utc.from_utc_datetime(&naive)
}

fn compose_text(lex: &Lexicons, class: SentimentClass, r: &mut rng::Rng) -> String {
    let phrases = match class {
        SentimentClass::Positive => &lex.positive,
        SentimentClass::Neutral => &lex.neutral,
        SentimentClass::Negative => &lex.negative,
    };
    let phrase = phrases.choose(r).expect("non-empty lexicon");
    match lex.filler.choose(r) {
        Some(f) if r.random::<f64>() < 0.7 => {
            if r.random::<bool>() {
                format!("{phrase} {f}")
            } else {
                format!("{f} {phrase}")
            }
        }
        _ => phrase.clone(),
    }
}

fn draft_student(cfg: &SynthConfig, i: usize) -> Draft {
    let id = format!("S{:05}", i + 1);
    let mut r = rng::rng(rng::derive_path(cfg.seed, &[rng::stream::SYNTH, i as u64]));
    let e = normal(&mut r);
    let affect = cfg.rho * e + (1.0 - cfg.rho * cfg.rho).sqrt() * normal(&mut r);
    let lam = cfg.loading;
    let resid = (1.0 - lam * lam).sqrt();
    let z: [f64; 4] = std::array::from_fn(|_| lam * e + resid * normal(&mut r));

    let mut values = Vec::with_capacity(TOTAL_COLUMNS);
    values.push((150.0 + 60.0 * z[0]).max(0.0));
    values.push((3.5 + 1.5 * z[1]).round().clamp(0.0, 7.0));
    values.push((100.0 * sigmoid(1.2 * z[2])).round());
    values.push((200.0 + 80.0 * z[3]).max(0.0).round());
    values.push((18.0 + 6.0 * normal(&mut r).abs()).round());
    let weak_resid = (1.0 - WEAK_LOADING * WEAK_LOADING).sqrt();
    for k in 0..TOTAL_COLUMNS - NAMED_COLUMNS.len() {
        let v = if k < WEAK_PROXIES { WEAK_LOADING * e + weak_resid * normal(&mut r) } else { normal(&mut r) };
        values.push(v);
    }

    let poisson = (cfg.comment_rate > 0.0).then(|| Poisson::new(cfg.comment_rate).expect("positive rate"));
    let mut comments = Vec::new();
    let mut early_negative = false;
    for month in 0..cfg.term_months {
        let count = poisson.as_ref().map_or(0, |p| p.sample(&mut r) as usize);
        for _ in 0..count {
            let a = affect + cfg.affect_noise * normal(&mut r);
            let logits = [cfg.polarity_gain * a, 0.5, -cfg.polarity_gain * a];
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let u = r.random::<f64>() * w.iter().sum::<f64>();
            let class = if u < w[0] {
                SentimentClass::Positive
            } else if u < w[0] + w[1] {
                SentimentClass::Neutral
            } else {
                SentimentClass::Negative
            };
            if month == 0 && class == SentimentClass::Negative {
                early_negative = true;
            }
            let timestamp = comment_time(cfg, month, &mut r);
            let text = compose_text(&cfg.lexicons, class, &mut r);
            let gold = (r.random::<f64>() < cfg.gold_fraction).then_some(class);
            comments.push(Comment { student_id: id.clone(), timestamp, text, gold_label: gold });
        }
    }

    let w = &cfg.weights;
    let eta = -w.engagement().iter().zip(&z).map(|(wk, zk)| wk * zk).sum::<f64>() - w.sentiment * affect
        + if early_negative { w.early_negative_boost } else { 0.0 };
    let u = r.random::<f64>();

    let mut noise = rng::rng(rng::derive_path(cfg.seed, &[rng::stream::NOISE, i as u64]));
    let features = values.into_iter().map(|v| (noise.random::<f64>() >= cfg.missing_rate).then_some(v)).collect();

    Draft {
        truth: StudentTruth {
            student_id: id,
            engagement: e,
            affect,
            drivers: z,
            early_negative,
            n_comments: comments.len(),
            dropout_probability: 0.0,
            label: 0,
        },
        features,
        comments,
        u,
        eta,
    }
}

/// Intercept making the mean dropout probability equal `rate`.
fn solve_bias(etas: &[f64], rate: f64) -> f64 {
    let mean_p = |b: f64| etas.iter().map(|e| sigmoid(b + e)).sum::<f64>() / etas.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, CommentSet, GroundTruth)> {
    cfg.validate()?;
    let drafts: Vec<Draft> = (0..cfg.n_students).into_par_iter().map(|i| draft_student(cfg, i)).collect();
    let etas: Vec<f64> = drafts.iter().map(|d| d.eta).collect();
    let bias = solve_bias(&etas, cfg.dropout_base_rate);
    let mut records = Vec::with_capacity(drafts.len());
    let mut truths = Vec::with_capacity(drafts.len());
    let mut comments = Vec::new();
    for d in drafts {
        let p = sigmoid(bias + d.eta);
        let label = u8::from(d.u < p);
        records.push(StudentRecord { student_id: d.truth.student_id.clone(), features: d.features, label: Some(label) });
        truths.push(StudentTruth { dropout_probability: p, label, ..d.truth });
        comments.extend(d.comments);
    }
    let names = feature_names();
    let ds = Dataset::new(names.clone(), records)?;
    let truth = GroundTruth { config: cfg.clone(), bias, feature_names: names, students: truths };
    Ok((ds, CommentSet::new(comments), truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_comments, write_tabular};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig { n_students: 300, seed, ..Default::default() }
    }

    #[test]
    fn column_layout() {
        let names = feature_names();
        assert_eq!(names.len(), 49);
        assert_eq!(names[5], "synth_f06");
        assert_eq!(names[48], "synth_f49");
    }

    #[test]
    fn byte_identical_for_same_seed() {
        let out = |seed| {
            let (ds, cs, _) = generate(&small(seed)).unwrap();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            write_tabular(&ds, &mut a).unwrap();
            write_comments(&cs, &mut b).unwrap();
            (a, b)
        };
        assert_eq!(out(3), out(3));
        assert_ne!(out(3), out(4));
    }

    #[test]
    fn base_rate_and_engagement_correlation() {
        let (ds, _, truth) = generate(&SynthConfig { seed: 1, ..Default::default() }).unwrap();
        let labels = ds.labels().unwrap();
        let rate = labels.iter().map(|&v| f64::from(v)).sum::<f64>() / labels.len() as f64;
        assert!((rate - 0.25).abs() <= 0.03, "rate {rate}");
        let pairs: Vec<(f64, f64)> = ds
            .records()
            .iter()
            .zip(&truth.students)
            .filter_map(|(r, t)| r.features[0].map(|v| (v, t.engagement)))
            .collect();
        let n = pairs.len() as f64;
        let (mx, my) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
        let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>().sqrt();
        let sy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>().sqrt();
        assert!(cov / (sx * sy) > 0.5);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small(0);
        cfg.dropout_base_rate = 1.0;
        assert!(matches!(generate(&cfg), Err(Error::BadConfig(_))));
        let mut cfg = small(0);
        cfg.lexicons.negative.push(cfg.lexicons.positive[0].clone());
        assert!(matches!(generate(&cfg), Err(Error::BadConfig(_))));
    }

    #[test]
    fn early_negative_matches_comments() {
        let (_, cs, truth) = generate(&small(5)).unwrap();
        let first = crate::sentiment::YearMonth::of_date(&truth.config.term_start);
        for t in &truth.students {
            let any = cs.comments().iter().any(|c| {
                c.student_id == t.student_id
                    && crate::sentiment::YearMonth::of(&c.timestamp) == first
                    && c.text_class(&truth.config.lexicons) == Some(SentimentClass::Negative)
            });
            assert_eq!(any, t.early_negative, "{}", t.student_id);
        }
    }

    trait TextClass {
        fn text_class(&self, lex: &Lexicons) -> Option<SentimentClass>;
    }

    impl TextClass for Comment {
        fn text_class(&self, lex: &Lexicons) -> Option<SentimentClass> {
            let has = |list: &[String]| list.iter().any(|p| self.text.contains(p.as_str()));
            if has(&lex.negative) {
                Some(SentimentClass::Negative)
            } else if has(&lex.positive) {
                Some(SentimentClass::Positive)
            } else if has(&lex.neutral) {
                Some(SentimentClass::Neutral)
            } else {
                None
            }
        }
    }
}
