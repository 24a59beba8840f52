//! Group-relative advantages and a two-parameter length policy.
//!
//! The toy policy only controls how long its thinking segments are: each
//! segment length is drawn from `Normal(mu, sigma)`. Training samples a group
//! of rollouts, scores them with the TA-balance reward, normalizes the
//! rewards within the group and takes a REINFORCE step. No critic, no
//! clipping, no KL term.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{InterleavedSequence, Segment};
use crate::reward::{self, GroupSample, TaConfig};

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("group needs at least 2 samples, got {0}")]
    GroupTooSmall(usize),
    #[error("{advantages} advantages for {samples} samples")]
    Misaligned { advantages: usize, samples: usize },
    #[error("sample {0} has no parsed sequence")]
    Unparsed(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSet {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

/// `(r - mean) / (population_std + epsilon)`; all zeros when every reward
/// is the same.
pub fn compute_advantages(rewards: &[f64], epsilon: f64) -> Result<AdvantageSet, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if !(epsilon > 0.0) {
        return Err(GrpoError::InvalidConfig("epsilon must be > 0".into()));
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(AdvantageSet {
            values: vec![0.0; rewards.len()],
            epsilon,
        });
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + epsilon;
    Ok(AdvantageSet {
        values: rewards.iter().map(|r| (r - mean) / denom).collect(),
        epsilon,
    })
}

/// Candidates sampled for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub prompt_id: String,
    pub samples: Vec<GroupSample>,
}

impl Group {
    pub fn new(prompt_id: impl Into<String>, samples: Vec<GroupSample>) -> Result<Self, GrpoError> {
        if samples.len() < 2 {
            return Err(GrpoError::GroupTooSmall(samples.len()));
        }
        Ok(Group {
            prompt_id: prompt_id.into(),
            samples,
        })
    }

    pub fn size(&self) -> usize {
        self.samples.len()
    }
}

fn default_templates() -> Vec<String> {
    [
        "Let me walk through this.",
        "Here is the next step.",
        "That part checks out.",
        "So we are getting close.",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

const PLACEHOLDER: &str = "think";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub mu: f64,
    pub log_sigma: f64,
    pub answer_templates: Vec<String>,
}

impl ToyPolicy {
    pub fn new(mu: f64, sigma: f64) -> Self {
        ToyPolicy {
            mu,
            log_sigma: sigma.ln(),
            answer_templates: default_templates(),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// Gaussian log-density at an integer length.
    pub fn log_prob_length(&self, length: usize) -> f64 {
        let sigma = self.sigma();
        let z = (length as f64 - self.mu) / sigma;
        -0.5 * (2.0 * std::f64::consts::PI).ln() - self.log_sigma - 0.5 * z * z
    }

    /// `(d/dmu, d/dlog_sigma)` of [`Self::log_prob_length`].
    pub fn grad_log_prob(&self, length: usize) -> (f64, f64) {
        let var = self.sigma().powi(2);
        let d = length as f64 - self.mu;
        (d / var, d * d / var - 1.0)
    }
}

/// Draws one response with `pairs` (thinking, answer) pairs. Thinking
/// lengths are `round(Normal(mu, sigma))`, at least 1.
pub fn sample_rollout(policy: &ToyPolicy, pairs: usize, seed: u64) -> InterleavedSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(policy.mu, policy.sigma()).expect("sigma is positive and finite");
    let mut segments = Vec::with_capacity(pairs.max(1) * 2);
    for i in 0..pairs.max(1) {
        let len = normal.sample(&mut rng).round().max(1.0) as usize;
        let thinking = vec![PLACEHOLDER; len].join(" ");
        let answer = if policy.answer_templates.is_empty() {
            "Okay.".to_string()
        } else {
            policy.answer_templates[i % policy.answer_templates.len()].clone()
        };
        segments.push(Segment::thinking(thinking).expect("placeholder words are non-empty"));
        segments.push(Segment::answer(answer).expect("answer templates are non-empty"));
    }
    InterleavedSequence::new(segments).expect("rollout alternates by construction")
}

/// One REINFORCE step: parameters move by `lr` times the group mean of
/// `advantage * grad(sum of segment log-probs)`, preconditioned by the
/// inverse Fisher information.
pub fn policy_gradient_step(
    policy: &ToyPolicy,
    group: &Group,
    advantages: &AdvantageSet,
    lr: f64,
) -> Result<ToyPolicy, GrpoError> {
    if advantages.values.len() != group.samples.len() {
        return Err(GrpoError::Misaligned {
            advantages: advantages.values.len(),
            samples: group.samples.len(),
        });
    }
    let mut g_mu = 0.0;
    let mut g_ls = 0.0;
    for (k, (sample, adv)) in group.samples.iter().zip(&advantages.values).enumerate() {
        let seq = sample.parsed.as_ref().ok_or(GrpoError::Unparsed(k))?;
        if *adv == 0.0 {
            continue;
        }
        for t in seq.thinking() {
            let (dm, ds) = policy.grad_log_prob(t.word_count());
            g_mu += adv * dm;
            g_ls += adv * ds;
        }
    }
    // Preconditioned by the inverse Fisher information of the Gaussian
    // (sigma^2 for mu, 1/2 for log sigma) so the step size does not depend
    // on the length scale.
    let n = group.samples.len() as f64;
    let mut next = policy.clone();
    next.mu += lr * policy.sigma().powi(2) * g_mu / n;
    next.log_sigma += lr * 0.5 * g_ls / n;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub l_target: usize,
    pub group_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    pub epsilon: f64,
    /// Initial mean length; `2 * l_target` when unset.
    pub mu0: Option<f64>,
    /// Initial sigma as a fraction of `l_target`.
    pub sigma0_frac: f64,
    /// Lower bound on sigma during training.
    pub min_sigma: f64,
    pub pairs_per_rollout: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            l_target: 40,
            group_size: 16,
            iterations: 2000,
            lr: 0.05,
            seed: 7,
            epsilon: DEFAULT_EPSILON,
            mu0: None,
            sigma0_frac: 0.25,
            min_sigma: 0.5,
            pairs_per_rollout: 3,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: &str| Err(GrpoError::InvalidConfig(m.into()));
        if self.l_target == 0 {
            return bad("l_target must be >= 1");
        }
        if self.group_size < 2 {
            return bad("group_size must be >= 2");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if !(self.sigma0_frac > 0.0 && self.min_sigma > 0.0) {
            return bad("sigma settings must be > 0");
        }
        if self.pairs_per_rollout == 0 {
            return bad("pairs_per_rollout must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub mu: f64,
    pub sigma: f64,
    pub mean_reward: f64,
    pub mean_abs_advantage: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    /// Mean of `mu` over the last `window` records.
    pub fn running_mean_mu(&self, window: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(window)..];
        tail.iter().map(|r| r.mu).sum::<f64>() / tail.len() as f64
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent seed for rollout `k` of iteration `iter`.
pub fn rollout_seed(seed: u64, iter: usize, k: usize) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(iter as u64)) ^ k as u64)
}

/// Runs the toy loop. Each record describes the policy that sampled that
/// iteration's group.
pub fn train_toy(cfg: &ToyConfig) -> Result<(ToyPolicy, TrainTrace), GrpoError> {
    cfg.validate()?;
    let ta = TaConfig { l_target: cfg.l_target };
    let l = cfg.l_target as f64;
    let mut policy = ToyPolicy::new(cfg.mu0.unwrap_or(2.0 * l), cfg.sigma0_frac * l);
    let min_log_sigma = cfg.min_sigma.ln();
    let mut trace = TrainTrace::default();

    for iter in 0..cfg.iterations {
        let samples: Vec<GroupSample> = (0..cfg.group_size)
            .map(|k| {
                let seq = sample_rollout(&policy, cfg.pairs_per_rollout, rollout_seed(cfg.seed, iter, k));
                GroupSample::from_sequence(format!("{iter}-{k}"), seq, "")
            })
            .collect();
        let rewards: Vec<f64> = samples
            .iter()
            .map(|s| reward::ta_reward_seq(s.parsed.as_ref().expect("rollouts are parsed"), &ta))
            .collect();
        let adv = compute_advantages(&rewards, cfg.epsilon)?;
        trace.records.push(TraceRecord {
            iteration: iter,
            mu: policy.mu,
            sigma: policy.sigma(),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            mean_abs_advantage: adv.values.iter().map(|a| a.abs()).sum::<f64>() / adv.values.len() as f64,
        });
        let group = Group::new(format!("iter-{iter}"), samples)?;
        policy = policy_gradient_step(&policy, &group, &adv, cfg.lr)?;
        policy.log_sigma = policy.log_sigma.max(min_log_sigma);
    }
    Ok((policy, trace))
}
