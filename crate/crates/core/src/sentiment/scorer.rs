//! Reference comment scorer: multinomial logistic regression over unigram and
//! bigram counts. Any other model can stand in by emitting scores in the
//! external-score JSONL format instead.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClassThresholds, SentimentScore};
use crate::data::{Comment, CommentSet, SentimentClass};
use crate::error::{Error, Result};
use crate::optim::{self, GdConfig};
use crate::rng;

pub const SCORER_FORMAT_VERSION: u32 = 1;

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "am", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "could", "did",
    "do", "does", "for", "from", "had", "has", "have", "he", "her", "here", "him", "his", "how", "i", "if", "in",
    "into", "is", "it", "its", "just", "me", "my", "of", "on", "or", "our", "she", "so", "some", "that", "the",
    "their", "them", "then", "there", "these", "they", "this", "those", "to", "up", "us", "was", "we", "were",
    "what", "when", "which", "who", "will", "with", "would", "you", "your",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    pub lowercase: bool,
    pub remove_stopwords: bool,
    pub ngram_orders: Vec<usize>,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self { lowercase: true, remove_stopwords: true, ngram_orders: vec![1, 2] }
    }
}

impl TextConfig {
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase { text.to_lowercase() } else { text.to_string() };
        text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
            .map(|t| t.trim_matches('\''))
            .filter(|t| !t.is_empty())
            .filter(|t| !(self.remove_stopwords && STOPWORDS.contains(t)))
            .map(str::to_string)
            .collect()
    }

    pub fn ngrams(&self, text: &str) -> Vec<String> {
        let toks = self.tokens(text);
        let mut out = Vec::new();
        for &n in &self.ngram_orders {
            if n == 0 || toks.len() < n {
                continue;
            }
            for w in toks.windows(n) {
                out.push(w.join(" "));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub text: TextConfig,
    pub l2: f64,
    pub optimizer: GdConfig,
    pub holdout_fraction: f64,
    pub thresholds: ClassThresholds,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            text: TextConfig::default(),
            l2: 1e-3,
            optimizer: GdConfig { learning_rate: 1.0, max_epochs: 300, tol: 1e-8 },
            holdout_fraction: 0.2,
            thresholds: ClassThresholds::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScorer {
    pub format_version: u32,
    pub config: ScorerConfig,
    pub vocabulary: BTreeMap<String, usize>,
    /// Row-major 3 x V, rows ordered positive, neutral, negative.
    pub weights: Vec<f64>,
    pub intercepts: [f64; 3],
    pub holdout_accuracy: Option<f64>,
}

type SparseDoc = Vec<(usize, f64)>;

fn vectorize(vocab: &BTreeMap<String, usize>, text: &TextConfig, s: &str) -> SparseDoc {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for g in text.ngrams(s) {
        if let Some(&k) = vocab.get(&g) {
            *counts.entry(k).or_insert(0.0) += 1.0;
        }
    }
    counts.into_iter().collect()
}

fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let mx = z[0].max(z[1]).max(z[2]);
    let e = [(z[0] - mx).exp(), (z[1] - mx).exp(), (z[2] - mx).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

fn logits(weights: &[f64], intercepts: &[f64], v: usize, doc: &SparseDoc) -> [f64; 3] {
    let mut z = [intercepts[0], intercepts[1], intercepts[2]];
    for &(k, c) in doc {
        for (cls, zc) in z.iter_mut().enumerate() {
            *zc += weights[cls * v + k] * c;
        }
    }
    z
}

struct Fit {
    weights: Vec<f64>,
    intercepts: [f64; 3],
}

fn fit_softmax(docs: &[SparseDoc], labels: &[usize], v: usize, cfg: &ScorerConfig) -> Fit {
    let n = docs.len() as f64;
    let d = 3 * v + 3;
    let out = optim::minimize(vec![0.0; d], &cfg.optimizer, |x, g| {
        let (w, b) = x.split_at(3 * v);
        g.iter_mut().for_each(|gi| *gi = 0.0);
        let mut loss = 0.0;
        for (doc, &y) in docs.iter().zip(labels) {
            let p = softmax3(logits(w, b, v, doc));
            loss -= p[y].max(1e-300).ln();
            for cls in 0..3 {
                let r = p[cls] - if cls == y { 1.0 } else { 0.0 };
                for &(k, c) in doc {
                    g[cls * v + k] += r * c;
                }
                g[3 * v + cls] += r;
            }
        }
        loss /= n;
        g.iter_mut().for_each(|gi| *gi /= n);
        let mut reg = 0.0;
        for k in 0..3 * v {
            reg += w[k] * w[k];
            g[k] += cfg.l2 * w[k];
        }
        loss + 0.5 * cfg.l2 * reg
    });
    let (w, b) = out.params.split_at(3 * v);
    Fit { weights: w.to_vec(), intercepts: [b[0], b[1], b[2]] }
}

fn build_vocab(texts: &[&str], text: &TextConfig) -> BTreeMap<String, usize> {
    let mut set = std::collections::BTreeSet::new();
    for t in texts {
        set.extend(text.ngrams(t));
    }
    set.into_iter().enumerate().map(|(i, g)| (g, i)).collect()
}

/// Trains on comments carrying a gold label; unlabeled comments are ignored.
///
/// Held-out accuracy is measured on a seeded internal split before the final
/// model is refit on every labeled comment.
pub fn train_scorer(labeled: &CommentSet, cfg: &ScorerConfig) -> Result<SentimentScorer> {
    let examples: Vec<(&Comment, SentimentClass)> =
        labeled.comments().iter().filter_map(|c| c.gold_label.map(|g| (c, g))).collect();
    for cls in SentimentClass::ALL {
        if !examples.iter().any(|(_, g)| *g == cls) {
            return Err(Error::MissingClass(cls.as_str().to_string()));
        }
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng::rng(rng::derive(cfg.seed, rng::stream::SCORER)));
    let n_hold = ((examples.len() as f64) * cfg.holdout_fraction).floor() as usize;
    let holdout_accuracy = if n_hold >= 1 && n_hold < examples.len() {
        let (hold, train) = order.split_at(n_hold);
        let texts: Vec<&str> = train.iter().map(|&i| examples[i].0.text.as_str()).collect();
        let vocab = build_vocab(&texts, &cfg.text);
        let docs: Vec<SparseDoc> = texts.iter().map(|t| vectorize(&vocab, &cfg.text, t)).collect();
        let labels: Vec<usize> = train.iter().map(|&i| examples[i].1.index()).collect();
        let fit = fit_softmax(&docs, &labels, vocab.len(), cfg);
        let correct = hold
            .iter()
            .filter(|&&i| {
                let doc = vectorize(&vocab, &cfg.text, &examples[i].0.text);
                let p = softmax3(logits(&fit.weights, &fit.intercepts, vocab.len(), &doc));
                argmax3(p) == examples[i].1.index()
            })
            .count();
        Some(correct as f64 / hold.len() as f64)
    } else {
        None
    };

    let texts: Vec<&str> = examples.iter().map(|(c, _)| c.text.as_str()).collect();
    let vocab = build_vocab(&texts, &cfg.text);
    let docs: Vec<SparseDoc> = texts.iter().map(|t| vectorize(&vocab, &cfg.text, t)).collect();
    let labels: Vec<usize> = examples.iter().map(|(_, g)| g.index()).collect();
    let fit = fit_softmax(&docs, &labels, vocab.len(), cfg);
    Ok(SentimentScorer {
        format_version: SCORER_FORMAT_VERSION,
        config: cfg.clone(),
        vocabulary: vocab,
        weights: fit.weights,
        intercepts: fit.intercepts,
        holdout_accuracy,
    })
}

fn argmax3(p: [f64; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

impl SentimentScorer {
    /// Class probabilities (positive, neutral, negative).
    pub fn probabilities(&self, text: &str) -> [f64; 3] {
        let doc = vectorize(&self.vocabulary, &self.config.text, text);
        softmax3(logits(&self.weights, &self.intercepts, self.vocabulary.len(), &doc))
    }

    /// p(positive) - p(negative); empty text scores 0.
    pub fn score_text(&self, text: &str) -> f64 {
        if text.trim().is_empty() {
            return 0.0;
        }
        let p = self.probabilities(text);
        (p[0] - p[2]).clamp(-1.0, 1.0)
    }

    pub fn score(&self, c: &Comment) -> SentimentScore {
        let score = self.score_text(&c.text);
        SentimentScore {
            student_id: c.student_id.clone(),
            timestamp: c.timestamp,
            score,
            class: self.config.thresholds.classify(score),
        }
    }

    pub fn score_all(&self, cs: &CommentSet) -> Vec<SentimentScore> {
        use rayon::prelude::*;
        cs.comments().par_iter().map(|c| self.score(c)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sc: SentimentScorer = serde_json::from_str(&s)?;
        if sc.format_version != SCORER_FORMAT_VERSION {
            return Err(Error::UnknownVersion(sc.format_version));
        }
        Ok(sc)
    }
}
