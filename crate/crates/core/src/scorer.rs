//! Reference log-likelihood for linguistic-quality scoring.
//!
//! [`ReferenceScorer`] is the seam: anything that can assign a conditional
//! log-probability to an answer given a question can drive the
//! linguistic-quality reward. [`NGramModel`] is the bundled implementation,
//! an add-alpha smoothed word n-gram model with longest-suffix backoff.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const FILE_FORMAT: &str = "interleave-ngram";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("training corpus has no words")]
    EmptyCorpus,
    #[error("answer has no words")]
    EmptyAnswer,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("model file is not an {FILE_FORMAT} v{FILE_VERSION} dump: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Conditional log-likelihood of an answer under a reference distribution.
pub trait ReferenceScorer: Send + Sync {
    /// Sum over answer tokens of `ln p(a_t | question, a_<t)`. Always <= 0.
    fn log_likelihood(&self, question: &str, answer: &str) -> Result<f64, ScorerError>;
}

/// Lower-cased whitespace words with surrounding ASCII punctuation removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    vocabulary: BTreeSet<String>,
    counts: BTreeMap<Vec<String>, BTreeMap<String, u64>>,
    totals: BTreeMap<Vec<String>, u64>,
}

impl NGramModel {
    /// Counts every window up to `order` over `BOS`-padded, `EOS`-terminated
    /// sentences (one per corpus entry).
    pub fn train<S: AsRef<str>>(corpus: &[S], order: usize, alpha: f64) -> Result<Self, ScorerError> {
        if order == 0 {
            return Err(ScorerError::InvalidOrder);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ScorerError::InvalidAlpha(alpha));
        }
        let mut vocabulary: BTreeSet<String> =
            [BOS, EOS, UNK].into_iter().map(String::from).collect();
        let mut counts: BTreeMap<Vec<String>, BTreeMap<String, u64>> = BTreeMap::new();
        let mut seen_words = false;

        for line in corpus {
            let words = tokenize(line.as_ref());
            if words.is_empty() {
                continue;
            }
            seen_words = true;
            let mut padded = vec![BOS.to_string(); order - 1];
            padded.extend(words);
            padded.push(EOS.to_string());
            for j in (order - 1)..padded.len() {
                vocabulary.insert(padded[j].clone());
                for k in 0..order {
                    let ctx = padded[j - k..j].to_vec();
                    *counts.entry(ctx).or_default().entry(padded[j].clone()).or_default() += 1;
                }
            }
        }
        if !seen_words {
            return Err(ScorerError::EmptyCorpus);
        }
        let totals = counts
            .iter()
            .map(|(ctx, next)| (ctx.clone(), next.values().sum()))
            .collect();
        Ok(NGramModel {
            order,
            alpha,
            vocabulary,
            counts,
            totals,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Vocabulary size including the reserved symbols.
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.vocabulary.iter().map(String::as_str)
    }

    /// Raw count of `word` after `context` (exact context, no backoff).
    pub fn count(&self, context: &[&str], word: &str) -> u64 {
        let ctx: Vec<String> = context.iter().map(|s| s.to_string()).collect();
        self.counts
            .get(&ctx)
            .and_then(|m| m.get(word))
            .copied()
            .unwrap_or(0)
    }

    fn map_word<'a>(&'a self, word: &'a str) -> &'a str {
        if self.vocabulary.contains(word) {
            word
        } else {
            UNK
        }
    }

    /// The context actually used for `context`: the longest suffix (at most
    /// `order - 1` words) seen in training. `None` means no usable context
    /// and the uniform distribution applies. Order-1 models always use the
    /// empty context.
    pub fn effective_context(&self, context: &[&str]) -> Option<Vec<String>> {
        let mapped: Vec<String> = context.iter().map(|w| self.map_word(w).to_string()).collect();
        if self.order == 1 {
            return Some(Vec::new());
        }
        let max = (self.order - 1).min(mapped.len());
        (1..=max).rev().find_map(|k| {
            let suffix = mapped[mapped.len() - k..].to_vec();
            (self.totals.get(&suffix).copied().unwrap_or(0) > 0).then_some(suffix)
        })
    }

    /// `ln[(count(w|ctx) + alpha) / (total(ctx) + alpha * |V|)]`, with unseen
    /// words mapped to `UNK`.
    pub fn log_prob(&self, word: &str, context: &[&str]) -> f64 {
        let v = self.vocab_size() as f64;
        let word = self.map_word(word);
        match self.effective_context(context) {
            Some(ctx) => {
                let c = self.counts.get(&ctx).and_then(|m| m.get(word)).copied().unwrap_or(0) as f64;
                let total = self.totals.get(&ctx).copied().unwrap_or(0) as f64;
                ((c + self.alpha) / (total + self.alpha * v)).ln()
            }
            None => (1.0 / v).ln(),
        }
    }

    /// Per-token terms of the answer log-likelihood: one per answer word,
    /// then the end-of-sentence term.
    pub fn log_likelihood_terms(&self, question: &str, answer: &str) -> Result<Vec<f64>, ScorerError> {
        let answer = tokenize(answer);
        if answer.is_empty() {
            return Err(ScorerError::EmptyAnswer);
        }
        let mut history: Vec<String> = vec![BOS.to_string(); self.order - 1];
        history.extend(tokenize(question));
        let window = self.order - 1;
        let mut terms = Vec::with_capacity(answer.len() + 1);
        for token in answer.iter().map(String::as_str).chain(std::iter::once(EOS)) {
            let ctx: Vec<&str> = history[history.len() - window..].iter().map(String::as_str).collect();
            terms.push(self.log_prob(token, &ctx));
            history.push(token.to_string());
        }
        Ok(terms)
    }

    pub fn log_likelihood(&self, question: &str, answer: &str) -> Result<f64, ScorerError> {
        Ok(self.log_likelihood_terms(question, answer)?.iter().sum())
    }

    pub fn to_json(&self) -> Result<String, ScorerError> {
        let file = ModelFile {
            format: FILE_FORMAT.into(),
            version: FILE_VERSION,
            order: self.order,
            alpha: self.alpha,
            vocabulary: self.vocabulary.iter().cloned().collect(),
            contexts: self
                .counts
                .iter()
                .map(|(context, next)| ContextCounts {
                    context: context.clone(),
                    next: next.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FILE_FORMAT || file.version != FILE_VERSION {
            return Err(ScorerError::BadModelFile(format!(
                "found {} v{}",
                file.format, file.version
            )));
        }
        if file.order == 0 {
            return Err(ScorerError::InvalidOrder);
        }
        if !(file.alpha > 0.0 && file.alpha.is_finite()) {
            return Err(ScorerError::InvalidAlpha(file.alpha));
        }
        let vocabulary: BTreeSet<String> = file.vocabulary.into_iter().collect();
        for reserved in [BOS, EOS, UNK] {
            if !vocabulary.contains(reserved) {
                return Err(ScorerError::BadModelFile(format!("missing reserved symbol {reserved}")));
            }
        }
        let mut counts = BTreeMap::new();
        for entry in file.contexts {
            if entry.context.len() >= file.order {
                return Err(ScorerError::BadModelFile("context longer than order - 1".into()));
            }
            if let Some(w) = entry.next.keys().find(|w| !vocabulary.contains(*w)) {
                return Err(ScorerError::BadModelFile(format!("count for out-of-vocabulary word {w}")));
            }
            counts.insert(entry.context, entry.next);
        }
        let totals = counts
            .iter()
            .map(|(ctx, next): (&Vec<String>, &BTreeMap<String, u64>)| (ctx.clone(), next.values().sum()))
            .collect();
        Ok(NGramModel {
            order: file.order,
            alpha: file.alpha,
            vocabulary,
            counts,
            totals,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScorerError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl ReferenceScorer for NGramModel {
    fn log_likelihood(&self, question: &str, answer: &str) -> Result<f64, ScorerError> {
        NGramModel::log_likelihood(self, question, answer)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    vocabulary: Vec<String>,
    contexts: Vec<ContextCounts>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextCounts {
    context: Vec<String>,
    next: BTreeMap<String, u64>,
}
