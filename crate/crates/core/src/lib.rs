//! Interleaved thinking and answering: format, data construction, rewards,
//! policy optimization, latency simulation and evaluation.

pub mod eval;
pub mod format;
pub mod grpo;
pub mod latency;
pub mod pipeline;
pub mod reward;
pub mod scorer;
