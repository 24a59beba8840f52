//! Evaluation metrics and reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{self, InterleavedSequence};
use crate::latency::{self, RateConfig, SimSummary};
use crate::pipeline::split_sentences;
use crate::reward::answer_text;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no categories to aggregate")]
    NoCategories,
    #[error("category `{0}` has no questions")]
    EmptyCategory(String),
    #[error("no thinking segments to summarize")]
    NoThinkingSegments,
    #[error("fluency judge unavailable: {0}")]
    JudgeUnavailable(String),
    #[error("judge returned an unusable reply: {0}")]
    BadJudgment(String),
    #[error("answer text is empty")]
    EmptyAnswer,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub name: String,
    /// Number of questions.
    pub n: usize,
    /// Accuracy in [0, 100].
    pub score: f64,
}

/// Question-count weighted mean of category scores.
pub fn weighted_score(categories: &[CategoryResult]) -> Result<f64, EvalError> {
    if categories.is_empty() {
        return Err(EvalError::NoCategories);
    }
    if let Some(c) = categories.iter().find(|c| c.n == 0) {
        return Err(EvalError::EmptyCategory(c.name.clone()));
    }
    let total: usize = categories.iter().map(|c| c.n).sum();
    Ok(categories
        .iter()
        .map(|c| c.n as f64 / total as f64 * c.score)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub categories: Vec<CategoryResult>,
    pub total_score: f64,
}

impl BenchmarkResult {
    pub fn new(categories: Vec<CategoryResult>) -> Result<Self, EvalError> {
        let total_score = weighted_score(&categories)?;
        Ok(BenchmarkResult {
            categories,
            total_score,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluencyJudgment {
    /// 0 incoherent, 1 fluent but disjointed, 2 excellent.
    pub score: u8,
    pub rationale: String,
}

pub trait FluencyJudge: Send + Sync {
    fn name(&self) -> &str;
    fn judge(&self, answer: &str) -> Result<FluencyJudgment, EvalError>;
}

pub fn judge_fluency(answer: &str, judge: &dyn FluencyJudge) -> Result<FluencyJudgment, EvalError> {
    if answer.trim().is_empty() {
        return Err(EvalError::EmptyAnswer);
    }
    let j = judge.judge(answer)?;
    if j.score > 2 {
        return Err(EvalError::BadJudgment(format!("score {} out of range", j.score)));
    }
    Ok(j)
}

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "also", "an", "and", "are", "as", "at", "be", "been", "by", "each", "for",
    "from", "had", "has", "have", "he", "her", "his", "i", "in", "is", "it", "its", "just", "net",
    "of", "on", "only", "or", "our", "per", "she", "so", "that", "the", "their", "them", "then",
    "there", "therefore", "these", "they", "this", "those", "thus", "to", "total", "was", "we",
    "were", "which", "will", "with", "would", "you",
];

const CONNECTIVES: &[&str] = &[
    "so", "then", "therefore", "thus", "next", "after", "afterwards", "finally", "first", "second",
    "third", "also", "and", "but", "however", "because", "since", "together", "altogether",
    "adding", "now", "meanwhile", "it", "this", "that", "these", "those", "which", "here",
];

const CONNECTIVE_PHRASES: &[&str] = &["at that time", "after that", "on top of", "in total", "all together", "as a result"];

const RECONCILERS: &[&str] = &[
    "but", "however", "after", "now", "remaining", "left", "instead", "actually", "correction",
    "minus", "plus", "subtract", "subtracting", "add", "adding", "becomes", "new", "originally",
    "initially", "before", "earlier", "still",
];

fn clean(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn number_value(word: &str) -> Option<String> {
    let core: String = word
        .trim_matches(|c: char| !c.is_ascii_digit())
        .chars()
        .filter(|c| *c != ',')
        .collect();
    if core.is_empty() || !core.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    let v: f64 = core.parse().ok()?;
    Some(format!("{v}"))
}

fn is_content(word: &str) -> bool {
    !word.is_empty() && !STOPWORDS.contains(&word) && !word.chars().any(|c| c.is_ascii_digit())
}

/// Sentence-level features used by the heuristic judge.
struct Sentence {
    words: Vec<String>,
    /// `(keyword before, keyword after, value)` for every number.
    claims: Vec<(Option<String>, Option<String>, String)>,
}

impl Sentence {
    fn new(raw: &[&str]) -> Self {
        let words: Vec<String> = raw.iter().map(|w| clean(w)).collect();
        let mut claims = Vec::new();
        for (i, w) in raw.iter().enumerate() {
            let Some(value) = number_value(w) else { continue };
            let before = words[..i].iter().rev().find(|w| is_content(w)).cloned();
            let after = words[i + 1..].iter().find(|w| is_content(w)).cloned();
            if before.is_some() || after.is_some() {
                claims.push((before, after, value));
            }
        }
        Sentence { words, claims }
    }

    fn content(&self) -> Vec<&str> {
        let mut c: Vec<&str> = self.words.iter().map(String::as_str).filter(|w| is_content(w)).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    fn first(&self) -> Option<&str> {
        self.words.iter().map(String::as_str).find(|w| !w.is_empty())
    }

    fn opens_with_connective(&self) -> bool {
        let Some(first) = self.first() else { return false };
        if CONNECTIVES.contains(&first) {
            return true;
        }
        let head = self.words.iter().take(4).cloned().collect::<Vec<_>>().join(" ");
        CONNECTIVE_PHRASES.iter().any(|p| head.starts_with(p))
    }

    fn reconciles(&self) -> bool {
        self.words.iter().any(|w| RECONCILERS.contains(&w.as_str()))
    }
}

fn jaccard(a: &[&str], b: &[&str]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.iter().filter(|w| b.contains(w)).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Offline rule-based fluency scorer for exercising the pipeline. It is not
/// a substitute for an LLM judge.
///
/// * 0: two sentences state different values for the same quantity (same
///   content word before and after the number) and neither sentence
///   signals a change.
/// * 1: most sentences open with the same word as the one before and no
///   sentence opens with a connective.
/// * 2: a single sentence, or at least half of the sentence transitions
///   open with a connective or share content words above the threshold.
/// * 1 otherwise.
#[derive(Debug, Clone)]
pub struct HeuristicJudge {
    pub overlap_threshold: f64,
    pub abbreviations: Vec<String>,
}

impl Default for HeuristicJudge {
    fn default() -> Self {
        HeuristicJudge {
            overlap_threshold: 0.2,
            abbreviations: crate::pipeline::PairingConfig::default().abbreviations,
        }
    }
}

impl HeuristicJudge {
    fn conflict(&self, sentences: &[Sentence]) -> Option<String> {
        let mut seen: HashMap<(Option<&str>, Option<&str>), (&str, usize)> = HashMap::new();
        for (i, s) in sentences.iter().enumerate() {
            for (before, after, value) in &s.claims {
                let key = (before.as_deref(), after.as_deref());
                match seen.get(&key) {
                    Some((prev, j)) if *prev != value.as_str()
                        && !s.reconciles() && !sentences[*j].reconciles() => {
                            let name = before.as_deref().or(after.as_deref()).unwrap_or("?");
                            return Some(format!(
                                "`{name}` is {prev} in sentence {} but {value} in sentence {}",
                                j + 1,
                                i + 1
                            ));
                        }
                    _ => {}
                }
                seen.insert(key, (value.as_str(), i));
            }
        }
        None
    }
}

impl FluencyJudge for HeuristicJudge {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn judge(&self, answer: &str) -> Result<FluencyJudgment, EvalError> {
        let sentences: Vec<Sentence> = split_sentences(answer, &self.abbreviations)
            .iter()
            .map(|s| Sentence::new(s))
            .collect();
        if sentences.is_empty() {
            return Err(EvalError::EmptyAnswer);
        }
        if let Some(why) = self.conflict(&sentences) {
            return Ok(FluencyJudgment { score: 0, rationale: format!("contradiction: {why}") });
        }
        if sentences.len() == 1 {
            return Ok(FluencyJudgment { score: 2, rationale: "single coherent sentence".into() });
        }
        let transitions = sentences.len() - 1;
        let any_connective = sentences[1..].iter().any(Sentence::opens_with_connective);
        let repeated = sentences
            .windows(2)
            .filter(|w| w[0].first().is_some() && w[0].first() == w[1].first())
            .count();
        if !any_connective && repeated * 2 > transitions {
            return Ok(FluencyJudgment {
                score: 1,
                rationale: format!("{repeated} of {transitions} sentences repeat the previous opening"),
            });
        }
        let linked = sentences
            .windows(2)
            .filter(|w| {
                w[1].opens_with_connective() || jaccard(&w[0].content(), &w[1].content()) >= self.overlap_threshold
            })
            .count();
        if linked * 2 >= transitions {
            Ok(FluencyJudgment { score: 2, rationale: format!("{linked} of {transitions} transitions linked") })
        } else {
            Ok(FluencyJudgment { score: 1, rationale: format!("only {linked} of {transitions} transitions linked") })
        }
    }
}

/// Runs an external program as the judge: the prompt and answer go to its
/// stdin, the first digit 0-2 on its stdout is the score and the rest of
/// the output is kept as the rationale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandJudge {
    pub program: String,
    pub args: Vec<String>,
    pub prompt: String,
}

impl FluencyJudge for CommandJudge {
    fn name(&self) -> &str {
        "external"
    }

    fn judge(&self, answer: &str) -> Result<FluencyJudgment, EvalError> {
        if self.program.is_empty() {
            return Err(EvalError::JudgeUnavailable("no judge program configured".into()));
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EvalError::JudgeUnavailable(format!("{}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            let input = format!("{}\n\n{}\n", self.prompt, answer);
            stdin
                .write_all(input.as_bytes())
                .map_err(|e| EvalError::JudgeUnavailable(e.to_string()))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| EvalError::JudgeUnavailable(e.to_string()))?;
        if !out.status.success() {
            return Err(EvalError::JudgeUnavailable(format!("judge exited with {}", out.status)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let score = text
            .chars()
            .find(|c| c.is_ascii_digit())
            .and_then(|c| c.to_digit(10))
            .filter(|d| *d <= 2)
            .ok_or_else(|| EvalError::BadJudgment(text.trim().to_string()))?;
        Ok(FluencyJudgment {
            score: score as u8,
            rationale: text.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub count: usize,
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// position `(n - 1) * p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn length_stats_of(lengths: &[usize]) -> Result<LengthStats, EvalError> {
    if lengths.is_empty() {
        return Err(EvalError::NoThinkingSegments);
    }
    let mut sorted: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    Ok(LengthStats {
        median: quantile(&sorted, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        count: sorted.len(),
    })
}

/// Quartiles of thinking-segment word counts pooled over all sequences.
pub fn length_stats(sequences: &[InterleavedSequence]) -> Result<LengthStats, EvalError> {
    let lengths: Vec<usize> = sequences
        .iter()
        .flat_map(|s| s.thinking().map(|t| t.word_count()))
        .collect();
    length_stats_of(&lengths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluencySummary {
    pub judge: String,
    pub judged: usize,
    pub mean: f64,
    /// Number of answers scored 0, 1 and 2.
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub benchmark: BenchmarkResult,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub length_stats: Option<LengthStats>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fluency: Option<FluencySummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub simulation: Option<SimSummary>,
}

/// JSON rendering, pretty-printed with a trailing newline.
pub fn render_json(report: &Report) -> Result<String, EvalError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Markdown rendering; absent sections are left out.
pub fn render_markdown(report: &Report) -> String {
    let mut md = String::new();
    let b = &report.benchmark;
    md.push_str("# Evaluation report\n\n## Accuracy\n\n");
    md.push_str("| category | n | score |\n|---|---:|---:|\n");
    for c in &b.categories {
        let _ = writeln!(md, "| {} | {} | {} |", c.name, c.n, c.score);
    }
    let _ = writeln!(md, "\nWeighted total: {}\n", b.total_score);

    if let Some(s) = &report.length_stats {
        md.push_str("## Thinking segment lengths\n\n| stat | value |\n|---|---:|\n");
        let _ = writeln!(md, "| count | {} |", s.count);
        let _ = writeln!(md, "| q1 | {} |", s.q1);
        let _ = writeln!(md, "| median | {} |", s.median);
        let _ = writeln!(md, "| q3 | {} |", s.q3);
        let _ = writeln!(md, "| iqr | {} |\n", s.iqr);
    }
    if let Some(f) = &report.fluency {
        md.push_str("## Fluency\n\n| stat | value |\n|---|---:|\n");
        let _ = writeln!(md, "| judge | {} |", f.judge);
        let _ = writeln!(md, "| judged | {} |", f.judged);
        let _ = writeln!(md, "| mean | {} |", f.mean);
        for (score, n) in f.counts.iter().enumerate() {
            let _ = writeln!(md, "| score {score} | {n} |");
        }
        md.push('\n');
    }
    if let Some(s) = &report.simulation {
        md.push_str("## Latency simulation\n\n| stat | value |\n|---|---:|\n");
        let _ = writeln!(md, "| samples | {} |", s.samples);
        let _ = writeln!(md, "| mean_ttft | {} |", s.mean_ttft);
        let _ = writeln!(md, "| max_ttft | {} |", s.max_ttft);
        let _ = writeln!(md, "| mean_total_stall | {} |", s.mean_total_stall);
        let _ = writeln!(md, "| max_total_stall | {} |", s.max_total_stall);
        let _ = writeln!(md, "| fully_masked_fraction | {} |\n", s.fully_masked_fraction);
    }
    md
}

/// One evaluated response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(default)]
    pub id: String,
    pub category: String,
    pub correct: bool,
    pub sequence_raw: String,
}

/// Aggregates records into a report. Categories keep first-appearance order.
/// Length statistics and the latency summary use well-formed streams only.
pub fn evaluate(
    records: &[EvalRecord],
    judge: Option<&dyn FluencyJudge>,
    rates: Option<&RateConfig>,
) -> Result<Report, EvalError> {
    let mut order: Vec<&str> = Vec::new();
    let mut tally: HashMap<&str, (usize, usize)> = HashMap::new();
    for r in records {
        let e = tally.entry(r.category.as_str()).or_insert_with(|| {
            order.push(r.category.as_str());
            (0, 0)
        });
        e.0 += 1;
        e.1 += usize::from(r.correct);
    }
    let categories = order
        .iter()
        .map(|name| {
            let (n, ok) = tally[name];
            CategoryResult {
                name: name.to_string(),
                n,
                score: 100.0 * ok as f64 / n as f64,
            }
        })
        .collect();
    let benchmark = BenchmarkResult::new(categories)?;

    let parsed: Vec<InterleavedSequence> = records
        .iter()
        .filter_map(|r| format::parse(&r.sequence_raw).ok())
        .collect();
    let length_stats = length_stats(&parsed).ok();

    let fluency = match judge {
        Some(judge) => {
            let mut counts = [0usize; 3];
            for r in records {
                let text = answer_text(&r.sequence_raw);
                if text.is_empty() {
                    continue;
                }
                counts[judge_fluency(&text, judge)?.score as usize] += 1;
            }
            let judged: usize = counts.iter().sum();
            (judged > 0).then(|| FluencySummary {
                judge: judge.name().to_string(),
                judged,
                mean: (counts[1] + 2 * counts[2]) as f64 / judged as f64,
                counts,
            })
        }
        None => None,
    };

    let simulation = rates.and_then(|r| {
        let timelines: Vec<_> = parsed.iter().map(|s| latency::simulate(s, r)).collect();
        latency::summarize(&timelines)
    });

    Ok(Report {
        benchmark,
        length_stats,
        fluency,
        simulation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(name: &str, n: usize, score: f64) -> CategoryResult {
        CategoryResult { name: name.into(), n, score }
    }

    #[test]
    fn weighted_example() {
        let cats = [cat("S", 10, 80.0), cat("L", 10, 60.0), cat("R1", 20, 70.0), cat("Rm", 10, 50.0)];
        assert!((weighted_score(&cats).unwrap() - 66.0).abs() < 1e-12);
        assert!((weighted_score(&[cat("a", 3, 42.5), cat("b", 9, 42.5)]).unwrap() - 42.5).abs() < 1e-12);
        assert_eq!(weighted_score(&[cat("x", 7, 33.0)]).unwrap(), 33.0);
    }

    #[test]
    fn weighted_errors() {
        assert!(matches!(weighted_score(&[]), Err(EvalError::NoCategories)));
        assert!(matches!(weighted_score(&[cat("x", 0, 1.0)]), Err(EvalError::EmptyCategory(_))));
    }

    fn judge(text: &str) -> u8 {
        HeuristicJudge::default().judge(text).unwrap().score
    }

    #[test]
    fn heuristic_contradiction() {
        assert_eq!(judge("The total loss is 48 units. Therefore, the net loss is 32 units."), 0);
        // A change marker reconciles the two values.
        assert_eq!(judge("The total loss is 48 units. After the refund, the net loss is 32 units."), 2);
    }

    #[test]
    fn heuristic_disjointed() {
        assert_eq!(
            judge("She spends $10 on orange creamsicles. She spends $4.50 on ice cream sandwiches. She spends $14.50 in total."),
            1
        );
    }

    #[test]
    fn heuristic_single_sentence() {
        assert_eq!(judge("She spends fourteen dollars and fifty cents in total."), 2);
    }

    #[test]
    fn heuristic_connected() {
        assert_eq!(
            judge("She spends $10 on orange creamsicles. Then she adds $4.50 for sandwiches. So she spends $14.50 in total."),
            2
        );
    }

    #[test]
    fn heuristic_empty() {
        assert!(judge_fluency("  ", &HeuristicJudge::default()).is_err());
    }

    #[test]
    fn external_judge_unavailable() {
        let j = CommandJudge::default();
        assert!(matches!(judge_fluency("Fine.", &j), Err(EvalError::JudgeUnavailable(_))));
        let j = CommandJudge { program: "/nonexistent/judge".into(), ..Default::default() };
        assert!(matches!(judge_fluency("Fine.", &j), Err(EvalError::JudgeUnavailable(_))));
    }

    #[test]
    fn external_judge_reads_score() {
        let j = CommandJudge {
            program: "sh".into(),
            args: vec!["-c".into(), "cat > /dev/null; echo 'Score: 2 - smooth'".into()],
            prompt: "Rate fluency 0-2.".into(),
        };
        let got = judge_fluency("It is fine.", &j).unwrap();
        assert_eq!(got.score, 2);
        assert_eq!(got.rationale, "Score: 2 - smooth");
    }

    #[test]
    fn quartiles() {
        let s = length_stats_of(&[10, 20, 30, 40]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.iqr), (25.0, 17.5, 32.5, 15.0));
        assert_eq!(length_stats_of(&[7; 5]).unwrap().iqr, 0.0);
        assert_eq!(length_stats_of(&[40, 10, 30, 20]).unwrap(), s);
        assert!(matches!(length_stats_of(&[]), Err(EvalError::NoThinkingSegments)));
    }

    #[test]
    fn stats_over_sequences() {
        let a = InterleavedSequence::from_pairs([(["w"; 10].join(" "), "x"), (vec!["w"; 20].join(" "), "y")]).unwrap();
        let b = InterleavedSequence::from_pairs([(vec!["w"; 30].join(" "), "x"), (vec!["w"; 40].join(" "), "y")]).unwrap();
        assert_eq!(length_stats(&[a, b]).unwrap().median, 25.0);
    }

    fn sample_report() -> Report {
        Report {
            benchmark: BenchmarkResult::new(vec![cat("S", 10, 80.0), cat("L", 30, 55.5)]).unwrap(),
            length_stats: Some(length_stats_of(&[3, 9, 27]).unwrap()),
            fluency: None,
            simulation: None,
        }
    }

    #[test]
    fn optional_sections_are_omitted() {
        let r = sample_report();
        let md = render_markdown(&r);
        assert!(md.contains("## Thinking segment lengths"));
        assert!(!md.contains("## Fluency"));
        assert!(!md.contains("## Latency"));
        let json = render_json(&r).unwrap();
        assert!(!json.contains("fluency"));
        assert!(!json.contains("simulation"));
    }

    #[test]
    fn rendering_is_stable() {
        let r = sample_report();
        assert_eq!(render_json(&r).unwrap(), render_json(&r.clone()).unwrap());
        assert_eq!(render_markdown(&r), render_markdown(&r.clone()));
        let back: Report = serde_json::from_str(&render_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn evaluate_records() {
        let rec = |c: &str, ok: bool, raw: &str| EvalRecord {
            id: String::new(),
            category: c.into(),
            correct: ok,
            sequence_raw: raw.into(),
        };
        let records = vec![
            rec("S", true, "<|thinking|>a b<|answer|>It is 4."),
            rec("S", false, "<|thinking|>a b c d<|answer|>It is 5."),
            rec("L", true, "<|answer|>bad"),
        ];
        let report = evaluate(&records, Some(&HeuristicJudge::default()), Some(&RateConfig::default())).unwrap();
        assert_eq!(report.benchmark.categories[0].name, "S");
        assert_eq!(report.benchmark.categories[0].score, 50.0);
        assert_eq!(report.benchmark.categories[1].score, 100.0);
        assert!((report.benchmark.total_score - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.length_stats.unwrap().count, 2);
        assert_eq!(report.fluency.as_ref().unwrap().judged, 3);
        assert_eq!(report.simulation.unwrap().samples, 2);
    }
}
