//! Rewards for interleaved responses.
//!
//! * TA-balance: quadratic penalty on each thinking segment's distance from a
//!   target word count, averaged over segments; zero for malformed streams.
//! * Accuracy: 1 when the prediction taken from the last answer segment
//!   matches the ground truth.
//! * Linguistic quality: for correct samples only, the scaled excess of the
//!   length-normalized reference log-likelihood over the group mean.
//!
//! The total is the weighted sum of the three.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{self, count_words, InterleavedSequence, SegmentKind};
use crate::scorer::{ReferenceScorer, ScorerError};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("linguistic-quality reward needs a group of at least 2 samples, got {0}")]
    GroupTooSmall(usize),
    #[error("sample {0} has no normalized log-likelihood")]
    MissingLikelihood(usize),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_ta: f64,
    pub w_acc: f64,
    pub w_lq: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_ta: 1.0,
            w_acc: 1.0,
            w_lq: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), RewardError> {
        let ws = [self.w_ta, self.w_acc, self.w_lq];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(RewardError::InvalidConfig("weights must be finite and >= 0".into()));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(RewardError::InvalidConfig("at least one weight must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaConfig {
    /// Target words per thinking segment.
    pub l_target: usize,
}

impl Default for TaConfig {
    fn default() -> Self {
        TaConfig { l_target: 40 }
    }
}

impl TaConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.l_target == 0 {
            return Err(RewardError::InvalidConfig("l_target must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqConfig {
    pub beta: f64,
}

impl Default for LqConfig {
    fn default() -> Self {
        LqConfig { beta: 1.0 }
    }
}

impl LqConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(RewardError::InvalidConfig("beta must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_ta: f64,
    pub r_acc: f64,
    pub r_lq: f64,
    pub r_total: f64,
    /// Per-thinking-segment TA scores (empty for malformed streams).
    pub segment_scores: Vec<f64>,
}

/// Score of one thinking segment of `len` words.
pub fn segment_score(len: usize, l_target: usize) -> f64 {
    let half = l_target as f64 / 2.0;
    let d = (len as f64 - l_target as f64) / half;
    (1.0 - d * d).max(0.0)
}

/// Per-segment scores for a well-formed sequence.
pub fn segment_scores(seq: &InterleavedSequence, cfg: &TaConfig) -> Vec<f64> {
    seq.thinking()
        .map(|t| segment_score(t.word_count(), cfg.l_target))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// TA-balance reward of a parsed sequence.
pub fn ta_reward_seq(seq: &InterleavedSequence, cfg: &TaConfig) -> f64 {
    mean(&segment_scores(seq, cfg))
}

/// TA-balance reward of a raw stream; 0 when the stream is malformed.
pub fn ta_reward(raw: &str, cfg: &TaConfig) -> f64 {
    match format::parse(raw) {
        Ok(seq) => ta_reward_seq(&seq, cfg),
        Err(_) => 0.0,
    }
}

fn numeric_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?").unwrap())
}

/// Last number in `text`, commas removed, keeping a leading minus when it
/// stands on its own (start of text, after whitespace, a bracket or a
/// currency sign).
fn last_number(text: &str) -> Option<String> {
    let m = numeric_re().find_iter(text).last()?;
    let digits = m.as_str().replace(',', "");
    let before = &text[..m.start()];
    let negative = before.strip_suffix('-').is_some_and(|rest| {
        rest.chars()
            .last()
            .is_none_or(|c| c.is_whitespace() || matches!(c, '(' | '$' | '€' | '£' | '¥'))
    });
    Some(if negative { format!("-{digits}") } else { digits })
}

fn normalize_text(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Normalized answer literal of a piece of answer text: the last number if
/// the text has any digit, otherwise the lower-cased text without trailing
/// punctuation.
pub fn normalize_answer(text: &str) -> String {
    last_number(text).unwrap_or_else(|| normalize_text(text))
}

/// Prediction carried by the final answer segment.
pub fn extract_prediction(seq: &InterleavedSequence) -> String {
    normalize_answer(seq.last_answer().text())
}

/// Canonical decimal form (`"014.50"` -> `"14.5"`), or `None` if `s` is not
/// a plain decimal number.
fn canonical_number(s: &str) -> Option<String> {
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if body.contains('.') && frac.is_empty() {
        return None;
    }
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let mut out = String::new();
    if negative && !(int == "0" && frac.is_empty()) {
        out.push('-');
    }
    out.push_str(int);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    Some(out)
}

/// Equality after normalization; numbers compare by value.
pub fn answers_match(predicted: &str, ground_truth: &str) -> bool {
    let p = normalize_answer(predicted);
    let g = normalize_answer(ground_truth);
    if p.is_empty() {
        return false;
    }
    match (canonical_number(&p), canonical_number(&g)) {
        (Some(a), Some(b)) => a == b,
        _ => p == g,
    }
}

pub fn accuracy_reward(seq: &InterleavedSequence, ground_truth: &str) -> f64 {
    if answers_match(&extract_prediction(seq), ground_truth) {
        1.0
    } else {
        0.0
    }
}

/// Accuracy on a raw stream, well-formed or not: the prediction comes from
/// the text after the last `<|answer|>` flag.
pub fn accuracy_reward_raw(raw: &str, ground_truth: &str) -> f64 {
    match format::last_answer_text(raw) {
        Some(text) if answers_match(text, ground_truth) => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqInput {
    pub normalized_loglik: f64,
    pub correct: bool,
}

/// Linguistic-quality rewards for one group, aligned with the input. The
/// mean is over the whole group, correct or not.
pub fn lq_rewards(group: &[LqInput], cfg: &LqConfig) -> Result<Vec<f64>, RewardError> {
    cfg.validate()?;
    if group.len() < 2 {
        return Err(RewardError::GroupTooSmall(group.len()));
    }
    let scores: Vec<f64> = group.iter().map(|s| s.normalized_loglik).collect();
    Ok(group
        .iter()
        .zip(&scores)
        .map(|(s, &l)| {
            if s.correct {
                (cfg.beta * deviation_from_mean(l, &scores)).max(0.0)
            } else {
                0.0
            }
        })
        .collect())
}

/// `x - mean(xs)` with the numerator `sum(x - x_j)` summed exactly, so the
/// sign is always right: a score equal to the mean gives exactly zero.
fn deviation_from_mean(x: f64, xs: &[f64]) -> f64 {
    if !x.is_finite() || xs.iter().any(|v| !v.is_finite()) {
        return x - mean(xs);
    }
    let mut terms = Vec::with_capacity(2 * xs.len());
    for &v in xs {
        let (hi, lo) = two_sum(x, -v);
        terms.push(hi);
        terms.push(lo);
    }
    exact_sum(&terms) / xs.len() as f64
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Correctly rounded sum of finite values (Shewchuk partials).
fn exact_sum(xs: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in xs {
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        let y = partials[n - 1];
        n -= 1;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // Round half-way cases using the sign of the remaining partials.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Weighted sum of the three components.
pub fn total_reward(r_ta: f64, r_acc: f64, r_lq: f64, weights: &RewardWeights) -> RewardBreakdown {
    RewardBreakdown {
        r_ta,
        r_acc,
        r_lq,
        r_total: weights.w_ta * r_ta + weights.w_acc * r_acc + weights.w_lq * r_lq,
        segment_scores: Vec::new(),
    }
}

/// The audible text of a raw stream: answer segments joined by single
/// spaces. Malformed streams contribute whatever answer segments they have.
pub fn answer_text(raw: &str) -> String {
    match format::parse(raw) {
        Ok(seq) => format::concat_answers(&seq),
        Err(_) => {
            let (_, segs) = format::tokenize(raw);
            segs.iter()
                .filter(|s| s.kind == SegmentKind::Answer)
                .map(|s| s.text.trim())
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
                .join(" ")
        }
    }
}

/// Reference log-likelihood of the audible text divided by its word count.
/// `None` when there is no audible text.
pub fn normalized_loglik(
    scorer: &dyn ReferenceScorer,
    question: &str,
    answer: &str,
) -> Result<Option<f64>, RewardError> {
    let words = count_words(answer);
    if words == 0 {
        return Ok(None);
    }
    match scorer.log_likelihood(question, answer) {
        Ok(ll) => Ok(Some(ll / words as f64)),
        Err(ScorerError::EmptyAnswer) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// One candidate response inside a group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSample {
    pub id: String,
    pub sequence_raw: String,
    #[serde(skip)]
    pub parsed: Option<InterleavedSequence>,
    pub ground_truth: String,
    pub predicted: Option<String>,
    pub normalized_loglik: Option<f64>,
    pub rewards: Option<RewardBreakdown>,
}

impl GroupSample {
    pub fn new(id: impl Into<String>, sequence_raw: impl Into<String>, ground_truth: impl Into<String>) -> Self {
        let sequence_raw = sequence_raw.into();
        let parsed = format::parse(&sequence_raw).ok();
        let predicted = format::last_answer_text(&sequence_raw).map(normalize_answer);
        GroupSample {
            id: id.into(),
            sequence_raw,
            parsed,
            ground_truth: ground_truth.into(),
            predicted,
            normalized_loglik: None,
            rewards: None,
        }
    }

    pub fn from_sequence(id: impl Into<String>, seq: InterleavedSequence, ground_truth: impl Into<String>) -> Self {
        let sequence_raw = seq.to_string();
        let predicted = Some(extract_prediction(&seq));
        GroupSample {
            id: id.into(),
            sequence_raw,
            parsed: Some(seq),
            ground_truth: ground_truth.into(),
            predicted,
            normalized_loglik: None,
            rewards: None,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.predicted
            .as_deref()
            .is_some_and(|p| answers_match(p, &self.ground_truth))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub ta: TaConfig,
    pub lq: LqConfig,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        self.weights.validate()?;
        self.ta.validate()?;
        self.lq.validate()
    }
}

/// Scores whole groups against a reference scorer.
pub struct RewardEngine<'a> {
    cfg: RewardConfig,
    scorer: &'a dyn ReferenceScorer,
}

impl<'a> RewardEngine<'a> {
    pub fn new(cfg: RewardConfig, scorer: &'a dyn ReferenceScorer) -> Result<Self, RewardError> {
        cfg.validate()?;
        Ok(RewardEngine { cfg, scorer })
    }

    pub fn config(&self) -> &RewardConfig {
        &self.cfg
    }

    /// Fills `normalized_loglik` and `rewards` on every sample.
    ///
    /// A sample with no audible text is placed at the group's lowest
    /// normalized likelihood for the mean; it can never be correct, so it
    /// never earns a linguistic-quality reward itself.
    pub fn score_group(&self, question: &str, samples: &mut [GroupSample]) -> Result<(), RewardError> {
        if samples.len() < 2 {
            return Err(RewardError::GroupTooSmall(samples.len()));
        }
        for s in samples.iter_mut() {
            s.normalized_loglik = normalized_loglik(self.scorer, question, &answer_text(&s.sequence_raw))?;
        }
        let floor = samples
            .iter()
            .filter_map(|s| s.normalized_loglik)
            .fold(f64::INFINITY, f64::min);
        let inputs: Vec<LqInput> = samples
            .iter()
            .map(|s| LqInput {
                normalized_loglik: s.normalized_loglik.unwrap_or(if floor.is_finite() { floor } else { 0.0 }),
                correct: s.is_correct(),
            })
            .collect();
        let lq = lq_rewards(&inputs, &self.cfg.lq)?;

        for (s, r_lq) in samples.iter_mut().zip(lq) {
            let (r_ta, scores) = match &s.parsed {
                Some(seq) => {
                    let scores = segment_scores(seq, &self.cfg.ta);
                    (mean(&scores), scores)
                }
                None => (0.0, Vec::new()),
            };
            let r_acc = if s.is_correct() { 1.0 } else { 0.0 };
            let mut breakdown = total_reward(r_ta, r_acc, r_lq, &self.cfg.weights);
            breakdown.segment_scores = scores;
            s.rewards = Some(breakdown);
        }
        Ok(())
    }

    /// TA and accuracy only, for a single sample outside any group.
    pub fn score_single(&self, sample: &GroupSample) -> RewardBreakdown {
        let (r_ta, scores) = match &sample.parsed {
            Some(seq) => {
                let scores = segment_scores(seq, &self.cfg.ta);
                (mean(&scores), scores)
            }
            None => (0.0, Vec::new()),
        };
        let r_acc = if sample.is_correct() { 1.0 } else { 0.0 };
        let mut b = total_reward(r_ta, r_acc, 0.0, &self.cfg.weights);
        b.segment_scores = scores;
        b
    }
}
