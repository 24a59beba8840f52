//! Interleaved thinking/answer streams.
//!
//! A response is a flat string in which the single-token flags
//! `<|thinking|>` and `<|answer|>` switch the stream between hidden
//! reasoning and audible answer text. There are no closing tags: each flag
//! ends the previous segment and starts a new one.
//!
//! A well-formed stream is a non-empty run of complete (thinking, answer)
//! pairs with nothing before the first flag and at least one word in every
//! segment.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

/// Flag that switches the stream into reasoning.
pub const THINKING_FLAG: &str = "<|thinking|>";
/// Flag that switches the stream into audible answer text.
pub const ANSWER_FLAG: &str = "<|answer|>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Thinking,
    Answer,
}

impl SegmentKind {
    pub fn flag(self) -> &'static str {
        match self {
            SegmentKind::Thinking => THINKING_FLAG,
            SegmentKind::Answer => ANSWER_FLAG,
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentKind::Thinking => f.write_str("thinking"),
            SegmentKind::Answer => f.write_str("answer"),
        }
    }
}

/// Number of words in `text`: NFC-normalize, split on Unicode whitespace,
/// drop empty pieces.
pub fn count_words(text: &str) -> usize {
    if is_nfc_quick(text.chars()) == IsNormalized::Yes {
        return text.split_whitespace().count();
    }
    let normalized: String = text.nfc().collect();
    normalized.split_whitespace().count()
}

/// Length unit used for segment word counts. Plain words by default; a
/// different unit (e.g. subword tokens) can be supplied to [`parse_with`].
pub type WordCounter = fn(&str) -> usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    kind: SegmentKind,
    text: String,
    word_count: usize,
}

impl Segment {
    /// Builds a segment. Fails if the text contains a flag literal or has no
    /// words.
    pub fn new(kind: SegmentKind, text: impl Into<String>) -> Result<Self, FormatReport> {
        Self::with_counter(kind, text, count_words)
    }

    pub fn with_counter(
        kind: SegmentKind,
        text: impl Into<String>,
        counter: WordCounter,
    ) -> Result<Self, FormatReport> {
        let text = text.into();
        let mut violations = Vec::with_capacity(4);
        if text.contains(THINKING_FLAG) || text.contains(ANSWER_FLAG) {
            violations.push(Violation::new(
                ViolationCode::UnknownTag,
                0,
                0,
                "segment text contains a state flag",
            ));
        }
        let word_count = counter(&text);
        if word_count == 0 {
            violations.push(Violation::new(
                ViolationCode::EmptySegment,
                0,
                0,
                format!("{kind} segment has no words"),
            ));
        }
        if violations.is_empty() {
            Ok(Segment {
                kind,
                text,
                word_count,
            })
        } else {
            Err(FormatReport { violations })
        }
    }

    pub fn thinking(text: impl Into<String>) -> Result<Self, FormatReport> {
        Self::new(SegmentKind::Thinking, text)
    }

    pub fn answer(text: impl Into<String>) -> Result<Self, FormatReport> {
        Self::new(SegmentKind::Answer, text)
    }

    pub fn kind(&self) -> SegmentKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }
}

/// Complete (thinking, answer) pairs in stream order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InterleavedSequence {
    segments: Vec<Segment>,
}

impl InterleavedSequence {
    /// Checks the pair structure: thinking first, answer last, strict
    /// alternation, at least one pair.
    pub fn new(segments: Vec<Segment>) -> Result<Self, FormatReport> {
        let kinds: Vec<SegmentKind> = segments.iter().map(Segment::kind).collect();
        let violations = structural_violations(&kinds, &[]);
        if violations.is_empty() {
            Ok(InterleavedSequence { segments })
        } else {
            Err(FormatReport { violations })
        }
    }

    /// Builds a sequence from `(thinking, answer)` text pairs.
    pub fn from_pairs<T, A>(pairs: impl IntoIterator<Item = (T, A)>) -> Result<Self, FormatReport>
    where
        T: Into<String>,
        A: Into<String>,
    {
        let mut segments = Vec::new();
        for (t, a) in pairs {
            segments.push(Segment::thinking(t)?);
            segments.push(Segment::answer(a)?);
        }
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn pair_count(&self) -> usize {
        self.segments.len() / 2
    }

    /// `(T_i, A_i)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (&Segment, &Segment)> {
        self.segments.chunks_exact(2).map(|c| (&c[0], &c[1]))
    }

    pub fn thinking(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().step_by(2)
    }

    pub fn answers(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().skip(1).step_by(2)
    }

    pub fn last_answer(&self) -> &Segment {
        self.segments.last().expect("sequence holds at least one pair")
    }
}

impl fmt::Display for InterleavedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            f.write_str(seg.kind.flag())?;
            f.write_str(&seg.text)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    ConsecutiveSameKind,
    MissingLeadingThinking,
    MissingTrailingAnswer,
    EmptySegment,
    StrayText,
    UnknownTag,
}

/// One format problem. `position` is the 1-based segment index (0 for text
/// before the first flag); `offset` is the byte offset into the raw stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub position: usize,
    pub offset: usize,
    pub message: Cow<'static, str>,
}

impl Violation {
    fn new(code: ViolationCode, position: usize, offset: usize, message: impl Into<Cow<'static, str>>) -> Self {
        Violation {
            code,
            position,
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatReport {
    pub violations: Vec<Violation>,
}

impl FormatReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

impl fmt::Display for FormatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{:?}@{}: {}", v.code, v.position, v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for FormatReport {}

/// Raw segment as found in the stream, before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSegment<'a> {
    pub kind: SegmentKind,
    pub text: &'a str,
    /// Byte offset of the flag that opens this segment.
    pub offset: usize,
}

/// Byte offset of the next `<|`.
fn find_marker(s: &str) -> Option<usize> {
    s.as_bytes().windows(2).position(|w| w == b"<|")
}

/// Splits `raw` at every flag occurrence. Returns the text before the first
/// flag and the flagged segments in order.
pub fn tokenize(raw: &str) -> (&str, Vec<RawSegment<'_>>) {
    let mut flags = Vec::with_capacity(8);
    let mut i = 0;
    while let Some(rel) = find_marker(&raw[i..]) {
        let at = i + rel;
        let rest = &raw[at..];
        if rest.starts_with(THINKING_FLAG) {
            flags.push((at, SegmentKind::Thinking, THINKING_FLAG.len()));
            i = at + THINKING_FLAG.len();
        } else if rest.starts_with(ANSWER_FLAG) {
            flags.push((at, SegmentKind::Answer, ANSWER_FLAG.len()));
            i = at + ANSWER_FLAG.len();
        } else {
            i = at + 2;
        }
    }
    let prefix_end = flags.first().map_or(raw.len(), |f| f.0);
    let segments = flags
        .iter()
        .enumerate()
        .map(|(n, &(at, kind, len))| {
            let end = flags.get(n + 1).map_or(raw.len(), |f| f.0);
            RawSegment {
                kind,
                text: &raw[at + len..end],
                offset: at,
            }
        })
        .collect();
    (&raw[..prefix_end], segments)
}

/// Finds `<|name|>` markers that are not one of the two known flags.
fn unknown_tags(text: &str) -> Vec<(usize, &str)> {
    let mut found = Vec::new();
    let mut i = 0;
    while let Some(rel) = find_marker(&text[i..]) {
        let start = i + rel;
        let body_start = start + 2;
        let mut end = None;
        for (j, c) in text[body_start..].char_indices() {
            if c == '|' {
                if text[body_start + j..].starts_with("|>") && j > 0 {
                    end = Some(body_start + j + 2);
                }
                break;
            }
            if !(c.is_alphanumeric() || c == '_' || c == '-') {
                break;
            }
        }
        match end {
            Some(e) => {
                found.push((start, &text[start..e]));
                i = e;
            }
            None => i = body_start,
        }
    }
    found
}

/// Structural checks over the kind sequence. `offsets[i]` is the byte offset
/// of segment `i` when known.
fn structural_violations(kinds: &[SegmentKind], offsets: &[usize]) -> Vec<Violation> {
    let off = |i: usize| offsets.get(i).copied().unwrap_or(0);
    let mut out = Vec::new();
    match kinds.first() {
        None => {
            out.push(Violation::new(
                ViolationCode::MissingLeadingThinking,
                1,
                0,
                "stream has no thinking flag",
            ));
            out.push(Violation::new(
                ViolationCode::MissingTrailingAnswer,
                1,
                0,
                "stream has no answer flag",
            ));
            return out;
        }
        Some(SegmentKind::Answer) => out.push(Violation::new(
            ViolationCode::MissingLeadingThinking,
            1,
            off(0),
            "stream starts with an answer segment",
        )),
        Some(SegmentKind::Thinking) => {}
    }
    for (i, pair) in kinds.windows(2).enumerate() {
        if pair[0] == pair[1] {
            out.push(Violation::new(
                ViolationCode::ConsecutiveSameKind,
                i + 2,
                off(i + 1),
                match pair[1] {
                    SegmentKind::Thinking => "two consecutive thinking segments",
                    SegmentKind::Answer => "two consecutive answer segments",
                },
            ));
        }
    }
    if kinds.last() == Some(&SegmentKind::Thinking) {
        let last = kinds.len() - 1;
        out.push(Violation::new(
            ViolationCode::MissingTrailingAnswer,
            last + 1,
            off(last),
            "stream ends in a thinking segment",
        ));
    }
    out
}

fn check(raw: &str, counter: WordCounter) -> (FormatReport, Vec<RawSegment<'_>>, Vec<usize>) {
    let (prefix, segments) = tokenize(raw);
    let mut violations = Vec::with_capacity(4);
    if !prefix.is_empty() {
        violations.push(Violation::new(
            ViolationCode::StrayText,
            0,
            0,
            "text before the first flag",
        ));
    }
    for (at, tag) in unknown_tags(prefix) {
        violations.push(Violation::new(
            ViolationCode::UnknownTag,
            0,
            at,
            format!("unknown tag {tag}"),
        ));
    }
    let mut counts = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let body = seg.offset + seg.kind.flag().len();
        for (at, tag) in unknown_tags(seg.text) {
            violations.push(Violation::new(
                ViolationCode::UnknownTag,
                i + 1,
                body + at,
                format!("unknown tag {tag}"),
            ));
        }
        let words = counter(seg.text);
        counts.push(words);
        if words == 0 {
            violations.push(Violation::new(
                ViolationCode::EmptySegment,
                i + 1,
                seg.offset,
                match seg.kind {
                    SegmentKind::Thinking => "thinking segment has no words",
                    SegmentKind::Answer => "answer segment has no words",
                },
            ));
        }
    }
    let kinds: Vec<SegmentKind> = segments.iter().map(|s| s.kind).collect();
    let offsets: Vec<usize> = segments.iter().map(|s| s.offset).collect();
    violations.extend(structural_violations(&kinds, &offsets));
    violations.sort_by_key(|v| (v.position, v.offset));
    (FormatReport { violations }, segments, counts)
}

/// Parses a raw stream. On failure every violation found is reported.
pub fn parse(raw: &str) -> Result<InterleavedSequence, FormatReport> {
    parse_with(raw, count_words)
}

/// [`parse`] with a caller-supplied length unit.
pub fn parse_with(raw: &str, counter: WordCounter) -> Result<InterleavedSequence, FormatReport> {
    let (report, raw_segments, counts) = check(raw, counter);
    if !report.is_valid() {
        return Err(report);
    }
    let segments = raw_segments
        .into_iter()
        .zip(counts)
        .map(|(s, word_count)| Segment {
            kind: s.kind,
            text: s.text.to_owned(),
            word_count,
        })
        .collect();
    Ok(InterleavedSequence { segments })
}

/// Full diagnostics for any string. Never fails.
pub fn validate(raw: &str) -> FormatReport {
    check(raw, count_words).0
}

/// Flags and texts in order, nothing added.
pub fn serialize(seq: &InterleavedSequence) -> String {
    seq.to_string()
}

/// Serializes loose segments, rejecting anything that would not parse back
/// to the same sequence.
pub fn serialize_segments(segments: &[Segment]) -> Result<String, FormatReport> {
    let mut violations = Vec::with_capacity(4);
    for (i, seg) in segments.iter().enumerate() {
        if seg.text.contains(THINKING_FLAG) || seg.text.contains(ANSWER_FLAG) {
            violations.push(Violation::new(
                ViolationCode::UnknownTag,
                i + 1,
                0,
                "segment text contains a state flag",
            ));
        }
        if seg.word_count == 0 {
            violations.push(Violation::new(
                ViolationCode::EmptySegment,
                i + 1,
                0,
                "segment has no words",
            ));
        }
    }
    let kinds: Vec<SegmentKind> = segments.iter().map(|s| s.kind).collect();
    violations.extend(structural_violations(&kinds, &[]));
    if !violations.is_empty() {
        return Err(FormatReport { violations });
    }
    Ok(segments
        .iter()
        .map(|s| format!("{}{}", s.kind.flag(), s.text))
        .collect())
}

/// The audible response: answer texts, trimmed, joined by single spaces.
pub fn concat_answers(seq: &InterleavedSequence) -> String {
    seq.answers()
        .map(|a| a.text().trim())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Text after the last `<|answer|>` flag, up to the next flag or the end.
/// Works on malformed streams too.
pub fn last_answer_text(raw: &str) -> Option<&str> {
    let (_, segments) = tokenize(raw);
    segments
        .iter()
        .rev()
        .find(|s| s.kind == SegmentKind::Answer)
        .map(|s| s.text)
}

/// Persisted sample: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub question: String,
    pub sequence_raw: String,
    pub ground_truth: String,
}
