//! Ratio-controlled construction of interleaved training samples.
//!
//! Input is a verified reasoning chain plus an oral-style summary of it. The
//! summary is cut into short speech units (the answer segments); reasoning
//! sentences are then handed out to the units in order until each unit's
//! thinking reaches `target_ratio` times its own length.
//!
//! Rewriting steps that need a language model (desymbolization, summary
//! generation, thinking paraphrase) are plug-in hooks; the defaults leave
//! text untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{FormatReport, InterleavedSequence, Segment};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("summary has no words")]
    EmptySummary,
    #[error("reasoning has {reasoning_words} words but {units} speech units need thinking")]
    InsufficientReasoning { reasoning_words: usize, units: usize },
    #[error("pair {pair} has empty thinking text")]
    EmptyThinking { pair: usize },
    #[error("no pairs to assemble")]
    NoPairs,
    #[error("sample field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("invalid pairing config: {0}")]
    InvalidConfig(String),
    #[error("assembled sequence is malformed: {0}")]
    Format(#[from] FormatReport),
}

fn default_abbreviations() -> Vec<String> {
    [
        "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "vs.", "e.g.", "i.e.", "etc.", "approx.",
        "no.", "fig.", "eq.",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairingConfig {
    /// Thinking words per answer word.
    pub target_ratio: f64,
    /// Relative tolerance on the global ratio.
    pub ratio_tolerance: f64,
    pub min_unit_words: usize,
    pub max_unit_words: usize,
    /// Lower-cased words ending in `.` that do not end a sentence.
    pub abbreviations: Vec<String>,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            target_ratio: 4.0,
            ratio_tolerance: 0.25,
            min_unit_words: 3,
            max_unit_words: 30,
            abbreviations: default_abbreviations(),
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.target_ratio > 0.0 && self.target_ratio.is_finite()) {
            return Err(PipelineError::InvalidConfig("target_ratio must be > 0".into()));
        }
        if !(self.ratio_tolerance > 0.0 && self.ratio_tolerance.is_finite()) {
            return Err(PipelineError::InvalidConfig("ratio_tolerance must be > 0".into()));
        }
        if self.min_unit_words == 0 || self.min_unit_words > self.max_unit_words {
            return Err(PipelineError::InvalidConfig(
                "need 1 <= min_unit_words <= max_unit_words".into(),
            ));
        }
        Ok(())
    }
}

/// One answer-sized piece of the summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechUnit {
    pub index: usize,
    pub text: String,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub id: String,
    pub question: String,
    pub reasoning_chain: String,
    pub summary: String,
    pub ground_truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub per_pair_ratios: Vec<f64>,
    pub global_ratio: f64,
    pub within_tolerance: bool,
    /// Pairs whose own ratio falls below the tolerance band. Late pairs end
    /// up here when the reasoning runs out before reaching them.
    pub shortfall_pairs: Vec<usize>,
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}'];

fn ends_sentence(word: &str, abbreviations: &[String]) -> bool {
    let core = word.trim_end_matches(CLOSERS);
    let Some(last) = core.chars().last() else {
        return false;
    };
    if !matches!(last, '.' | '!' | '?') {
        return false;
    }
    if last == '.' {
        let lower = core.to_lowercase();
        if abbreviations.contains(&lower) {
            return false;
        }
    }
    true
}

fn ends_clause(word: &str) -> bool {
    matches!(word.trim_end_matches(CLOSERS).chars().last(), Some(',' | ';' | ':'))
}

/// Splits text into sentences of whitespace-delimited words. A sentence ends
/// at a word whose final character (ignoring closing quotes and brackets) is
/// `.`, `!` or `?`, unless the word is a listed abbreviation.
pub fn split_sentences<'a>(text: &'a str, abbreviations: &[String]) -> Vec<Vec<&'a str>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for word in text.split_whitespace() {
        current.push(word);
        if ends_sentence(word, abbreviations) {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Cuts an over-long sentence at clause punctuation, packing clauses up to
/// `max` words. A single clause longer than `max` is cut at word boundaries.
fn split_long_sentence<'a>(sentence: &[&'a str], max: usize) -> Vec<Vec<&'a str>> {
    let mut clauses: Vec<Vec<&str>> = Vec::new();
    let mut cur = Vec::new();
    for &w in sentence {
        cur.push(w);
        if ends_clause(w) {
            clauses.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        clauses.push(cur);
    }

    let mut out: Vec<Vec<&str>> = Vec::new();
    let mut chunk: Vec<&str> = Vec::new();
    for clause in clauses {
        if clause.len() > max {
            if !chunk.is_empty() {
                out.push(std::mem::take(&mut chunk));
            }
            out.extend(clause.chunks(max).map(<[&str]>::to_vec));
            continue;
        }
        if chunk.len() + clause.len() > max {
            out.push(std::mem::take(&mut chunk));
        }
        chunk.extend(clause);
    }
    if !chunk.is_empty() {
        out.push(chunk);
    }
    out
}

/// Breaks a summary into speech units.
pub fn split_semantic_units(
    summary: &str,
    cfg: &PairingConfig,
) -> Result<Vec<SpeechUnit>, PipelineError> {
    cfg.validate()?;
    let (min, max) = (cfg.min_unit_words, cfg.max_unit_words);
    let mut pieces: Vec<Vec<&str>> = Vec::new();
    for sentence in split_sentences(summary, &cfg.abbreviations) {
        if sentence.len() <= max {
            pieces.push(sentence);
        } else {
            pieces.extend(split_long_sentence(&sentence, max));
        }
    }
    if pieces.is_empty() {
        return Err(PipelineError::EmptySummary);
    }

    // Short pieces join the following piece when the result still fits.
    let mut merged: Vec<Vec<&str>> = Vec::new();
    for piece in pieces {
        match merged.last_mut() {
            Some(last) if last.len() < min && last.len() + piece.len() <= max => last.extend(piece),
            _ => merged.push(piece),
        }
    }
    // A short tail folds back into its predecessor when it fits.
    if merged.len() >= 2 {
        let n = merged.len();
        if merged[n - 1].len() < min && merged[n - 2].len() + merged[n - 1].len() <= max {
            let tail = merged.pop().unwrap();
            merged.last_mut().unwrap().extend(tail);
        }
    }

    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(index, words)| SpeechUnit {
            index,
            word_count: words.len(),
            text: words.join(" "),
        })
        .collect())
}

/// Hands reasoning sentences to units in order.
///
/// Unit `i` takes sentences until its thinking reaches
/// `target_ratio * unit_words`, always at least one, and never so many that
/// a later unit would be left without a sentence. The last unit takes every
/// remaining sentence. When there are fewer sentences than units the chain
/// is handed out word by word instead.
pub fn align_thinking(
    reasoning_chain: &str,
    units: &[SpeechUnit],
    cfg: &PairingConfig,
) -> Result<Vec<(String, SpeechUnit)>, PipelineError> {
    cfg.validate()?;
    let reasoning_words = reasoning_chain.split_whitespace().count();
    if units.is_empty() || reasoning_words < units.len() {
        return Err(PipelineError::InsufficientReasoning {
            reasoning_words,
            units: units.len(),
        });
    }

    let mut pieces = split_sentences(reasoning_chain, &cfg.abbreviations);
    if pieces.len() < units.len() {
        pieces = reasoning_chain.split_whitespace().map(|w| vec![w]).collect();
    }

    let n = units.len();
    let mut next = 0;
    let mut out = Vec::with_capacity(n);
    for (k, unit) in units.iter().enumerate() {
        let is_last = k + 1 == n;
        let limit = if is_last { pieces.len() } else { pieces.len() - (n - k - 1) };
        let demand = cfg.target_ratio * unit.word_count as f64;
        let mut words: Vec<&str> = Vec::new();
        while next < limit && (is_last || words.is_empty() || (words.len() as f64) < demand) {
            words.extend(&pieces[next]);
            next += 1;
        }
        out.push((words.join(" "), unit.clone()));
    }
    Ok(out)
}

/// Builds `[T_1, A_1, ..., T_n, A_n]` from aligned pairs.
pub fn assemble(pairs: &[(String, SpeechUnit)]) -> Result<InterleavedSequence, PipelineError> {
    if pairs.is_empty() {
        return Err(PipelineError::NoPairs);
    }
    let mut segments = Vec::with_capacity(pairs.len() * 2);
    for (i, (thinking, unit)) in pairs.iter().enumerate() {
        if thinking.trim().is_empty() {
            return Err(PipelineError::EmptyThinking { pair: i });
        }
        segments.push(Segment::thinking(thinking.as_str())?);
        segments.push(Segment::answer(unit.text.as_str())?);
    }
    Ok(InterleavedSequence::new(segments)?)
}

/// Per-pair and global thinking:answer word ratios.
pub fn check_ratio(seq: &InterleavedSequence, cfg: &PairingConfig) -> RatioReport {
    let mut thinking_total = 0usize;
    let mut answer_total = 0usize;
    let mut per_pair_ratios = Vec::with_capacity(seq.pair_count());
    for (t, a) in seq.pairs() {
        thinking_total += t.word_count();
        answer_total += a.word_count();
        per_pair_ratios.push(t.word_count() as f64 / a.word_count() as f64);
    }
    let global_ratio = thinking_total as f64 / answer_total as f64;
    let target = cfg.target_ratio;
    let within_tolerance = (global_ratio - target).abs() / target <= cfg.ratio_tolerance;
    let floor = target * (1.0 - cfg.ratio_tolerance);
    let shortfall_pairs = per_pair_ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| **r < floor)
        .map(|(i, _)| i)
        .collect();
    RatioReport {
        per_pair_ratios,
        global_ratio,
        within_tolerance,
        shortfall_pairs,
    }
}

/// Plain text rewrite step (desymbolization, oral-style summarization).
pub trait TextTransform: Send + Sync {
    fn transform(&self, text: &str) -> String;
}

/// Rewrites the thinking text of one pair, e.g. with a language model.
pub trait ThinkingRewriter: Send + Sync {
    fn rewrite(&self, pair_index: usize, thinking: &str, unit: &SpeechUnit) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl TextTransform for Identity {
    fn transform(&self, text: &str) -> String {
        text.to_owned()
    }
}

impl ThinkingRewriter for Identity {
    fn rewrite(&self, _pair_index: usize, thinking: &str, _unit: &SpeechUnit) -> String {
        thinking.to_owned()
    }
}

/// Output record: the input sample plus the assembled stream and its ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltSample {
    #[serde(flatten)]
    pub sample: RawSample,
    pub sequence_raw: String,
    pub ratio_report: RatioReport,
}

pub struct Pipeline {
    cfg: PairingConfig,
    question: Box<dyn TextTransform>,
    summary: Box<dyn TextTransform>,
    rewriter: Box<dyn ThinkingRewriter>,
}

impl Pipeline {
    pub fn new(cfg: PairingConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            question: Box::new(Identity),
            summary: Box::new(Identity),
            rewriter: Box::new(Identity),
        })
    }

    pub fn with_question_hook(mut self, hook: impl TextTransform + 'static) -> Self {
        self.question = Box::new(hook);
        self
    }

    pub fn with_summary_hook(mut self, hook: impl TextTransform + 'static) -> Self {
        self.summary = Box::new(hook);
        self
    }

    pub fn with_rewriter(mut self, rewriter: impl ThinkingRewriter + 'static) -> Self {
        self.rewriter = Box::new(rewriter);
        self
    }

    pub fn config(&self) -> &PairingConfig {
        &self.cfg
    }

    pub fn build(&self, sample: &RawSample) -> Result<BuiltSample, PipelineError> {
        for (name, value) in [
            ("id", &sample.id),
            ("question", &sample.question),
            ("reasoning_chain", &sample.reasoning_chain),
            ("summary", &sample.summary),
            ("ground_truth", &sample.ground_truth),
        ] {
            if value.trim().is_empty() {
                return Err(PipelineError::EmptyField(name));
            }
        }
        let mut out = sample.clone();
        out.question = self.question.transform(&sample.question);
        out.summary = self.summary.transform(&sample.summary);

        let units = split_semantic_units(&out.summary, &self.cfg)?;
        let pairs: Vec<(String, SpeechUnit)> = align_thinking(&out.reasoning_chain, &units, &self.cfg)?
            .into_iter()
            .enumerate()
            .map(|(i, (t, u))| (self.rewriter.rewrite(i, &t, &u), u))
            .collect();
        let seq = assemble(&pairs)?;
        let ratio_report = check_ratio(&seq, &self.cfg);
        Ok(BuiltSample {
            sample: out,
            sequence_raw: seq.to_string(),
            ratio_report,
        })
    }
}
