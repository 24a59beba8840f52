//! Timeline of a thinking-while-speaking response.
//!
//! One decoder produces the segments in stream order. Audio for answer
//! `A_i` plays once `A_i` is available and the previous answer has finished
//! playing, so the decoder works on `T_{i+1}` while `A_i` is being spoken.
//! A gap between two answers' audio is a stall.
//!
//! Answer text reaches the speech engine as it is decoded. By default its
//! decode time is not charged to the schedule (`answer_gen_rate = None`):
//! the only work that has to hide under `A_i`'s audio is `T_{i+1}`. Setting
//! `answer_gen_rate` charges answer decoding serially as well, and `A_i`
//! becomes playable only once fully decoded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{InterleavedSequence, SegmentKind};

/// Gaps shorter than this are rounding noise, not stalls.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LatencyError {
    #[error("invalid rate config: {0}")]
    InvalidRates(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    /// Thinking words decoded per second.
    pub gen_rate: f64,
    /// Answer words spoken per second.
    pub playback_rate: f64,
    /// Fixed delay before decoding starts, seconds.
    pub ttft_overhead: f64,
    /// Answer words decoded per second, when answer decoding is charged.
    pub answer_gen_rate: Option<f64>,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            gen_rate: 40.0,
            playback_rate: 2.5,
            ttft_overhead: 0.2,
            answer_gen_rate: None,
        }
    }
}

impl RateConfig {
    pub fn new(gen_rate: f64, playback_rate: f64, ttft_overhead: f64) -> Result<Self, LatencyError> {
        let r = RateConfig {
            gen_rate,
            playback_rate,
            ttft_overhead,
            answer_gen_rate: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), LatencyError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.gen_rate) || !positive(self.playback_rate) {
            return Err(LatencyError::InvalidRates("rates must be positive and finite".into()));
        }
        if !(self.ttft_overhead >= 0.0 && self.ttft_overhead.is_finite()) {
            return Err(LatencyError::InvalidRates("ttft_overhead must be >= 0".into()));
        }
        if let Some(r) = self.answer_gen_rate {
            if !positive(r) {
                return Err(LatencyError::InvalidRates("answer_gen_rate must be positive".into()));
            }
        }
        Ok(())
    }

    fn decode_time(&self, kind: SegmentKind, words: usize) -> f64 {
        match kind {
            SegmentKind::Thinking => words as f64 / self.gen_rate,
            SegmentKind::Answer => self.answer_gen_rate.map_or(0.0, |r| words as f64 / r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    GenStart,
    GenEnd,
    PlayStart,
    PlayEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// 0-based index into the sequence's segments.
    pub segment_index: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stall {
    /// 0-based pair index of the answer after which the silence falls.
    pub after_answer_index: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<Event>,
    /// Time until the first answer word exists.
    pub ttft: f64,
    /// Time the first answer starts playing.
    pub first_audio: f64,
    pub stalls: Vec<Stall>,
    /// Time the last answer finishes playing.
    pub end_time: f64,
}

impl Timeline {
    pub fn total_stall(&self) -> f64 {
        self.stalls.iter().map(|s| s.duration).sum()
    }

    pub fn event(&self, kind: EventKind, segment_index: usize) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == kind && e.segment_index == segment_index)
            .map(|e| e.time)
    }
}

/// Runs the event schedule for one sequence.
pub fn simulate(seq: &InterleavedSequence, rates: &RateConfig) -> Timeline {
    let segs = seq.segments();
    let mut events = Vec::with_capacity(segs.len() * 3);
    let mut gen_end = Vec::with_capacity(segs.len());
    let mut t = rates.ttft_overhead;
    for (i, seg) in segs.iter().enumerate() {
        events.push(Event { kind: EventKind::GenStart, segment_index: i, time: t });
        t += rates.decode_time(seg.kind(), seg.word_count());
        events.push(Event { kind: EventKind::GenEnd, segment_index: i, time: t });
        gen_end.push(t);
    }

    let mut stalls = Vec::new();
    let mut prev_end: Option<f64> = None;
    let mut first_audio = None;
    for (pair, i) in (1..segs.len()).step_by(2).enumerate() {
        let ready = gen_end[i];
        let start = match prev_end {
            Some(pe) => {
                if ready - pe > TIME_EPS {
                    stalls.push(Stall { after_answer_index: pair - 1, duration: ready - pe });
                }
                ready.max(pe)
            }
            None => ready,
        };
        first_audio.get_or_insert(start);
        let end = start + segs[i].word_count() as f64 / rates.playback_rate;
        events.push(Event { kind: EventKind::PlayStart, segment_index: i, time: start });
        events.push(Event { kind: EventKind::PlayEnd, segment_index: i, time: end });
        prev_end = Some(end);
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));

    Timeline {
        events,
        ttft: rates.ttft_overhead + segs[0].word_count() as f64 / rates.gen_rate,
        first_audio: first_audio.expect("sequence has an answer"),
        stalls,
        end_time: prev_end.expect("sequence has an answer"),
    }
}

/// Largest thinking:answer ratio `|T_{i+1}| / |A_i|` that playback can
/// hide: `gen_rate / playback_rate`. Exact when answer decoding is not
/// charged; an upper bound otherwise.
pub fn max_maskable_ratio(rates: &RateConfig) -> f64 {
    rates.gen_rate / rates.playback_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMasking {
    pub pair_index: usize,
    /// Decode time from `A_i` being available to `A_{i+1}` being available.
    pub gen_time_next_thinking: f64,
    pub playback_time_answer: f64,
    /// `playback_time_answer - gen_time_next_thinking`, ignoring earlier pairs.
    pub isolated_slack: f64,
    /// Isolated slack plus any playback backlog carried from earlier pairs.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingReport {
    pub fully_masked: bool,
    pub per_pair: Vec<PairMasking>,
}

/// Closed-form masking check, pair by pair.
///
/// Audio for `A_i` may start late because earlier answers were still
/// playing; that backlog adds to the time available for `T_{i+1}`.
pub fn check_masking(seq: &InterleavedSequence, rates: &RateConfig) -> MaskingReport {
    let pairs: Vec<(usize, usize)> = seq.pairs().map(|(t, a)| (t.word_count(), a.word_count())).collect();
    let mut per_pair = Vec::with_capacity(pairs.len().saturating_sub(1));
    let mut backlog = 0.0;
    for i in 0..pairs.len().saturating_sub(1) {
        let (_, answer) = pairs[i];
        let (next_thinking, next_answer) = pairs[i + 1];
        let gen = rates.decode_time(SegmentKind::Thinking, next_thinking)
            + rates.decode_time(SegmentKind::Answer, next_answer);
        let play = answer as f64 / rates.playback_rate;
        let isolated = play - gen;
        let slack = backlog + isolated;
        backlog = slack.max(0.0);
        per_pair.push(PairMasking {
            pair_index: i,
            gen_time_next_thinking: gen,
            playback_time_answer: play,
            isolated_slack: isolated,
            slack,
        });
    }
    MaskingReport {
        fully_masked: per_pair.iter().all(|p| p.slack >= -TIME_EPS),
        per_pair,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub samples: usize,
    pub mean_ttft: f64,
    pub max_ttft: f64,
    pub mean_total_stall: f64,
    pub max_total_stall: f64,
    pub fully_masked_fraction: f64,
}

pub fn summarize(timelines: &[Timeline]) -> Option<SimSummary> {
    if timelines.is_empty() {
        return None;
    }
    let n = timelines.len() as f64;
    let stalls: Vec<f64> = timelines.iter().map(Timeline::total_stall).collect();
    Some(SimSummary {
        samples: timelines.len(),
        mean_ttft: timelines.iter().map(|t| t.ttft).sum::<f64>() / n,
        max_ttft: timelines.iter().map(|t| t.ttft).fold(f64::MIN, f64::max),
        mean_total_stall: stalls.iter().sum::<f64>() / n,
        max_total_stall: stalls.iter().copied().fold(f64::MIN, f64::max),
        fully_masked_fraction: timelines.iter().filter(|t| t.stalls.is_empty()).count() as f64 / n,
    })
}
