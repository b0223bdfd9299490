//! Policy evaluation against the feedback channels.

use serde::{Deserialize, Serialize};

use crate::dataset::PromptRecord;
use crate::error::{Error, Result};
use crate::grpo::{score_sample, FeedbackEnv};
use crate::labels::Dimension;
use crate::policy::PolicyParams;
use crate::rewards::{match_vector, RewardWeights};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub prompts: usize,
    pub samples_per_prompt: usize,
    pub mean_wer: f64,
    pub mean_reward: f64,
    pub label_match_rate: f64,
    pub label_match_structure: f64,
    pub label_match_emotion: f64,
    pub label_match_speed: f64,
    pub label_match_tone: f64,
}

impl EvalReport {
    pub fn per_dimension(&self) -> [f64; 4] {
        [
            self.label_match_structure,
            self.label_match_emotion,
            self.label_match_speed,
            self.label_match_tone,
        ]
    }
}

/// Draws `n_samples` scored samples per prompt; sample `k` of prompt `i`
/// uses the stream `(seed, EVAL, i, k)`. Label matches compare the judged
/// labels with the prompt targets.
pub fn evaluate(
    params: &PolicyParams,
    prompts: &[PromptRecord],
    env: &FeedbackEnv,
    weights: &RewardWeights,
    n_samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n_samples == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    if prompts.is_empty() {
        return Err(Error::config("dataset", "no prompts to evaluate"));
    }
    let mut wer = 0.0;
    let mut reward = 0.0;
    let mut hits = [0usize; 4];
    for (i, prompt) in prompts.iter().enumerate() {
        for k in 0..n_samples {
            let mut rng = rng::stream(seed, &[tag::EVAL, i as u64, k as u64]);
            let scored = score_sample(params, prompt, env, weights, &mut rng)?;
            wer += scored.breakdown.wer_value;
            reward += scored.breakdown.total;
            for (h, m) in hits.iter_mut().zip(match_vector(&scored.judged, &prompt.target)) {
                *h += usize::from(m);
            }
        }
    }
    let n = (prompts.len() * n_samples) as f64;
    let dims = hits.map(|h| h as f64 / n);
    Ok(EvalReport {
        prompts: prompts.len(),
        samples_per_prompt: n_samples,
        mean_wer: wer / n,
        mean_reward: reward / n,
        label_match_rate: dims.iter().sum::<f64>() / 4.0,
        label_match_structure: dims[0],
        label_match_emotion: dims[1],
        label_match_speed: dims[2],
        label_match_tone: dims[3],
    })
}

/// Expected per-dimension match rate of the uniform policy: `1 / |categories|`.
pub fn chance_rates() -> [f64; 4] {
    Dimension::ALL.map(|d| 1.0 / d.size() as f64)
}
