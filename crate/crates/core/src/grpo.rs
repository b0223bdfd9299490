//! Group-relative policy optimization.
//!
//! For each prompt the current policy draws a group of `G` samples, each
//! sample is scored by the feedback channels, and rewards are turned into
//! group-relative advantages. The loss minimized per step is
//!
//! ```text
//! L(θ) = −(1/B) Σ_groups (1/G) Σ_i A_i · ln π_θ(s_i | t)  +  β · KL(π_θ ∥ π_θ_old)
//! ```
//!
//! so that descending `L` ascends the advantage-weighted log-likelihood.
//! `θ_old` is the parameter snapshot the batch was sampled with. The KL is
//! evaluated exactly: categorical KL for each prosody head plus one
//! Bernoulli KL per prompt word for the articulation head.

use serde::{Deserialize, Serialize};

use crate::dataset::PromptRecord;
use crate::error::{Error, Result};
use crate::feedback::{judge_labels, simulate_asr, AsrNoiseConfig, JudgeConfig};
use crate::labels::{Dimension, ProsodyLabels};
use crate::policy::{
    self, accumulate_grad_log_prob, featurize, log_prob_with_features, log_sigmoid, sigmoid, PolicyParams,
    PromptFeatures, SpeechSample,
};
use crate::rewards::{composite_reward, label_reward, match_vector, RewardBreakdown, RewardWeights};
use crate::rng::{self, tag};
use crate::textmetrics::wer;

/// Added to the group standard deviation before dividing.
pub const STD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvantageMode {
    /// `(r − mean) / (std + ε)` with the population standard deviation.
    Standardized,
    /// `r − mean`.
    Centered,
    /// `r` itself: plain reward-weighted REINFORCE, no group baseline.
    Raw,
}

impl std::str::FromStr for AdvantageMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "standardized" => Ok(AdvantageMode::Standardized),
            "centered" => Ok(AdvantageMode::Centered),
            "raw" => Ok(AdvantageMode::Raw),
            _ => Err(format!("unknown advantage mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoHyper {
    pub group_size: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Prompts (rollout groups) per update step.
    pub prompts_per_step: usize,
    pub advantage_mode: AdvantageMode,
    /// `false` zeroes the label-reward weight.
    pub use_label_reward: bool,
    /// `false` forces [`AdvantageMode::Raw`].
    pub use_group_norm: bool,
}

impl Default for GrpoHyper {
    fn default() -> Self {
        GrpoHyper {
            group_size: 8,
            beta: 0.04,
            learning_rate: 2.0,
            epochs: 7,
            prompts_per_step: 16,
            advantage_mode: AdvantageMode::Standardized,
            use_label_reward: true,
            use_group_norm: true,
        }
    }
}

impl GrpoHyper {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::config("group_size", format!("must be at least 2, got {}", self.group_size)));
        }
        if self.prompts_per_step == 0 {
            return Err(Error::config("prompts_per_step", "must be at least 1"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("beta", format!("must be finite and non-negative, got {}", self.beta)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(
                "learning_rate",
                format!("must be finite and non-negative, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }

    /// Advantage mode after applying the group-normalization ablation.
    pub fn effective_mode(&self) -> AdvantageMode {
        if self.use_group_norm {
            self.advantage_mode
        } else {
            AdvantageMode::Raw
        }
    }

    /// Reward weights after applying the label-reward ablation.
    pub fn effective_weights(&self, weights: &RewardWeights) -> RewardWeights {
        if self.use_label_reward {
            *weights
        } else {
            RewardWeights { alpha2: 0.0, ..*weights }
        }
    }
}

/// Both feedback channels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackEnv {
    pub asr: AsrNoiseConfig,
    pub judge: JudgeConfig,
}

/// One scored sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub sample: SpeechSample,
    pub transcript: String,
    pub judged: ProsodyLabels,
    pub breakdown: RewardBreakdown,
}

/// Draws one sample and runs it through both channels. All randomness comes
/// from `rng`, in the order policy, ASR, judge.
pub fn score_sample(
    params: &PolicyParams,
    prompt: &PromptRecord,
    env: &FeedbackEnv,
    weights: &RewardWeights,
    rng: &mut rng::Rng,
) -> Result<ScoredSample> {
    let sample = policy::sample(params, prompt, rng)?;
    let transcript = simulate_asr(&sample, &env.asr, rng);
    let judged = judge_labels(&sample, &env.judge, rng);
    let breakdown = composite_reward(
        wer(&prompt.text, &transcript),
        label_reward(&judged, &prompt.target, weights),
        weights,
    );
    Ok(ScoredSample { sample, transcript, judged, breakdown })
}

/// A group of samples for one prompt, with everything the update needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRollout {
    pub prompt: PromptRecord,
    pub samples: Vec<SpeechSample>,
    pub transcripts: Vec<String>,
    pub judged: Vec<ProsodyLabels>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub logp_old: Vec<f64>,
    pub breakdowns: Vec<RewardBreakdown>,
}

impl GroupRollout {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn assign_advantages(&mut self, mode: AdvantageMode) {
        self.advantages = compute_advantages(&self.rewards, mode);
    }

    /// Fraction of judged labels equal to the target, per dimension.
    pub fn match_rates(&self) -> [f64; 4] {
        let mut hits = [0usize; 4];
        for j in &self.judged {
            for (h, m) in hits.iter_mut().zip(match_vector(j, &self.prompt.target)) {
                *h += usize::from(m);
            }
        }
        hits.map(|h| h as f64 / self.len() as f64)
    }
}

/// Samples and scores a group of `group_size` outputs. With `key = (step, slot)`
/// sample `i` draws from the stream `(seed, ROLLOUT, step, slot, i)`, so the
/// result does not depend on evaluation order. Advantages are left at zero.
pub fn rollout_group(
    params: &PolicyParams,
    prompt: &PromptRecord,
    group_size: usize,
    env: &FeedbackEnv,
    weights: &RewardWeights,
    seed: u64,
    key: (u64, u64),
) -> Result<GroupRollout> {
    if group_size < 2 {
        return Err(Error::GroupTooSmall(group_size));
    }
    let features = featurize(&prompt.text, params.feature_dim());
    let mut g = GroupRollout {
        prompt: prompt.clone(),
        samples: Vec::with_capacity(group_size),
        transcripts: Vec::with_capacity(group_size),
        judged: Vec::with_capacity(group_size),
        rewards: Vec::with_capacity(group_size),
        advantages: vec![0.0; group_size],
        logp_old: Vec::with_capacity(group_size),
        breakdowns: Vec::with_capacity(group_size),
    };
    for i in 0..group_size {
        let mut rng = rng::stream(seed, &[tag::ROLLOUT, key.0, key.1, i as u64]);
        let scored = score_sample(params, prompt, env, weights, &mut rng)?;
        g.logp_old.push(log_prob_with_features(params, &features, &scored.sample));
        g.rewards.push(scored.breakdown.total);
        g.breakdowns.push(scored.breakdown);
        g.judged.push(scored.judged);
        g.transcripts.push(scored.transcript);
        g.samples.push(scored.sample);
    }
    Ok(g)
}

/// Group-relative advantages. All-equal rewards give all zeros in the
/// standardized and centered modes.
pub fn compute_advantages(rewards: &[f64], mode: AdvantageMode) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    match mode {
        AdvantageMode::Raw => rewards.to_vec(),
        AdvantageMode::Centered => rewards.iter().map(|r| r - mean).collect(),
        AdvantageMode::Standardized => {
            let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
            let denom = var.sqrt() + STD_EPSILON;
            rewards.iter().map(|r| (r - mean) / denom).collect()
        }
    }
}

/// `KL(p ∥ q)` for two categorical distributions given as probabilities.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// `KL(Bern(p) ∥ Bern(q))`.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    categorical_kl(&[p, 1.0 - p], &[q, 1.0 - q])
}

fn prompt_kl(params: &PolicyParams, old: &PolicyParams, features: &PromptFeatures, n_words: usize) -> f64 {
    let heads: f64 = Dimension::ALL
        .iter()
        .map(|&d| {
            let lp = policy::log_softmax(&params.logits(features, d));
            let lq = policy::log_softmax(&old.logits(features, d));
            lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>()
        })
        .sum();
    let (a, b) = (params.articulation_logit(features), old.articulation_logit(features));
    let p = sigmoid(a);
    let word = p * (log_sigmoid(a) - log_sigmoid(b)) + (1.0 - p) * (log_sigmoid(-a) - log_sigmoid(-b));
    heads + n_words as f64 * word
}

/// `grad += weight · ∇_θ KL(π_θ ∥ π_old)` for one prompt.
fn accumulate_prompt_kl_grad(
    params: &PolicyParams,
    old: &PolicyParams,
    features: &PromptFeatures,
    n_words: usize,
    weight: f64,
    grad: &mut PolicyParams,
) {
    let x = features.as_slice();
    let f = params.feature_dim();
    for d in Dimension::ALL {
        let lp = policy::log_softmax(&params.logits(features, d));
        let lq = policy::log_softmax(&old.logits(features, d));
        let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
        let head = grad.head_mut(d);
        for (k, (a, b)) in lp.iter().zip(&lq).enumerate() {
            let coeff = weight * a.exp() * (a - b - kl);
            for (g, xi) in head[k * f..(k + 1) * f].iter_mut().zip(x) {
                *g += coeff * xi;
            }
        }
    }
    let (a, b) = (params.articulation_logit(features), old.articulation_logit(features));
    let p = sigmoid(a);
    let coeff = weight * n_words as f64 * p * (1.0 - p) * (a - b);
    for (g, xi) in grad.articulation_mut().iter_mut().zip(x) {
        *g += coeff * xi;
    }
}

/// Exact `KL(π_params ∥ π_old)` averaged over `prompts`.
pub fn kl_divergence(params: &PolicyParams, old: &PolicyParams, prompts: &[PromptRecord]) -> f64 {
    if prompts.is_empty() {
        return 0.0;
    }
    let total: f64 = prompts
        .iter()
        .map(|p| {
            let x = featurize(&p.text, params.feature_dim());
            prompt_kl(params, old, &x, crate::textmetrics::normalize_tokens(&p.text).len())
        })
        .sum();
    total / prompts.len() as f64
}

/// Groups sampled under one parameter snapshot.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub params_old: PolicyParams,
    pub groups: Vec<GroupRollout>,
}

impl RolloutBatch {
    pub fn prompts(&self) -> Vec<PromptRecord> {
        self.groups.iter().map(|g| g.prompt.clone()).collect()
    }
}

/// Loss value and its analytic gradient.
pub fn loss_and_gradient(
    params: &PolicyParams,
    batch: &RolloutBatch,
    beta: f64,
) -> Result<(f64, PolicyParams)> {
    if batch.groups.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = batch.groups.len() as f64;
    let mut loss = 0.0;
    let mut grad = PolicyParams::zeros(params.feature_dim());
    for g in &batch.groups {
        if g.len() < 2 {
            return Err(Error::GroupTooSmall(g.len()));
        }
        let x = featurize(&g.prompt.text, params.feature_dim());
        let scale = 1.0 / (b * g.len() as f64);
        // Zero-advantage samples contribute nothing; skipping them keeps the
        // all-zero case exactly stationary.
        for (s, &a) in g.samples.iter().zip(&g.advantages).filter(|(_, &a)| a != 0.0) {
            loss -= scale * a * log_prob_with_features(params, &x, s);
            accumulate_grad_log_prob(params, &x, s, -scale * a, &mut grad);
        }
        if beta > 0.0 {
            let n_words = g.samples.first().map_or(0, |s| s.words.len());
            loss += beta / b * prompt_kl(params, &batch.params_old, &x, n_words);
            accumulate_prompt_kl_grad(params, &batch.params_old, &x, n_words, beta / b, &mut grad);
        }
    }
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("loss is {loss}")));
    }
    Ok((loss, grad))
}

pub fn grpo_loss(params: &PolicyParams, batch: &RolloutBatch, hyper: &GrpoHyper) -> Result<f64> {
    loss_and_gradient(params, batch, hyper.beta).map(|(l, _)| l)
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub params: PolicyParams,
    /// Loss before the update.
    pub loss: f64,
    pub grad_norm: f64,
}

/// One plain gradient-descent step on [`grpo_loss`].
pub fn grpo_step(params: &PolicyParams, batch: &RolloutBatch, hyper: &GrpoHyper) -> Result<StepOutcome> {
    let (loss, grad) = loss_and_gradient(params, batch, hyper.beta)?;
    if !grad.is_finite() {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    let mut next = params.clone();
    next.axpy(-hyper.learning_rate, &grad);
    if !next.is_finite() {
        return Err(Error::Divergence("non-finite parameters after update".into()));
    }
    Ok(StepOutcome { grad_norm: grad.norm(), params: next, loss })
}

/// Per-step metrics, one line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub epoch: u64,
    pub mean_reward: f64,
    pub mean_wer: f64,
    pub label_match_rate: f64,
    pub label_match_structure: f64,
    pub label_match_emotion: f64,
    pub label_match_speed: f64,
    pub label_match_tone: f64,
    /// `KL(π_new ∥ π_old)` over the step's prompts, after the update.
    pub kl_value: f64,
    pub grad_norm: f64,
    /// Loss before the update.
    pub loss: f64,
}

/// Everything [`train`] needs besides the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub seed: u64,
    pub feature_dim: usize,
    pub hyper: GrpoHyper,
    pub weights: RewardWeights,
    pub env: FeedbackEnv,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub metrics: Vec<MetricsRow>,
}

/// Training loop starting from zero parameters. See [`train_from`].
pub fn train(
    prompts: &[PromptRecord],
    settings: &TrainSettings,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    train_from(PolicyParams::zeros(settings.feature_dim), prompts, settings, sink)
}

/// Each epoch visits every prompt once in an order shuffled by the stream
/// `(seed, SHUFFLE, epoch)`. Consecutive runs of `prompts_per_step` prompts
/// form one batch, one rollout group each, and one update.
/// Rows are handed to `sink` as they are produced, so on error everything up
/// to the failing step has already been emitted.
pub fn train_from(
    init: PolicyParams,
    prompts: &[PromptRecord],
    settings: &TrainSettings,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    use rand::seq::SliceRandom;

    let hyper = settings.hyper;
    hyper.validate()?;
    let weights = hyper.effective_weights(&settings.weights);
    let mode = hyper.effective_mode();
    let mut params = init;
    let mut metrics = Vec::new();
    let mut step = 0u64;
    for epoch in 1..=hyper.epochs as u64 {
        let mut order: Vec<usize> = (0..prompts.len()).collect();
        order.shuffle(&mut rng::stream(settings.seed, &[tag::SHUFFLE, epoch]));
        for chunk in order.chunks(hyper.prompts_per_step) {
            step += 1;
            let groups = chunk
                .iter()
                .enumerate()
                .map(|(slot, &idx)| {
                    let mut group = rollout_group(
                        &params,
                        &prompts[idx],
                        hyper.group_size,
                        &settings.env,
                        &weights,
                        settings.seed,
                        (step, slot as u64),
                    )?;
                    group.assign_advantages(mode);
                    Ok(group)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = RolloutBatch { params_old: params, groups };
            let outcome = grpo_step(&batch.params_old, &batch, &hyper)?;
            let row = metrics_row(step, epoch, &batch, &outcome);
            sink(&row)?;
            metrics.push(row);
            params = outcome.params;
        }
    }
    Ok(TrainOutcome { params, metrics })
}

fn metrics_row(step: u64, epoch: u64, batch: &RolloutBatch, outcome: &StepOutcome) -> MetricsRow {
    let n: usize = batch.groups.iter().map(GroupRollout::len).sum();
    let n = n as f64;
    let mut reward = 0.0;
    let mut wer_sum = 0.0;
    let mut dims = [0.0; 4];
    for g in &batch.groups {
        reward += g.breakdowns.iter().map(|b| b.total).sum::<f64>();
        wer_sum += g.breakdowns.iter().map(|b| b.wer_value).sum::<f64>();
        for (acc, r) in dims.iter_mut().zip(g.match_rates()) {
            *acc += r * g.len() as f64;
        }
    }
    let dims = dims.map(|d| d / n);
    MetricsRow {
        step,
        epoch,
        mean_reward: reward / n,
        mean_wer: wer_sum / n,
        label_match_rate: dims.iter().sum::<f64>() / 4.0,
        label_match_structure: dims[0],
        label_match_emotion: dims[1],
        label_match_speed: dims[2],
        label_match_tone: dims[3],
        kl_value: kl_divergence(&outcome.params, &batch.params_old, &batch.prompts()),
        grad_norm: outcome.grad_norm,
        loss: outcome.loss,
    }
}

/// Policy-gradient estimates (the advantage term only, no KL) from `steps`
/// independent batches of `prompts_per_step` groups at fixed `params`,
/// cycling through `prompts`.
pub fn fixed_policy_gradients(
    params: &PolicyParams,
    prompts: &[PromptRecord],
    steps: usize,
    settings: &TrainSettings,
    mode: AdvantageMode,
) -> Result<Vec<PolicyParams>> {
    if prompts.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hyper = settings.hyper;
    let weights = hyper.effective_weights(&settings.weights);
    let mut next = (0..prompts.len()).cycle();
    (0..steps as u64)
        .map(|s| {
            let groups = (0..hyper.prompts_per_step as u64)
                .map(|slot| {
                    let prompt = &prompts[next.next().expect("prompts is non-empty")];
                    let mut group =
                        rollout_group(params, prompt, hyper.group_size, &settings.env, &weights, settings.seed, (s + 1, slot))?;
                    group.assign_advantages(mode);
                    Ok(group)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = RolloutBatch { params_old: params.clone(), groups };
            loss_and_gradient(params, &batch, 0.0).map(|(_, g)| g)
        })
        .collect()
}
