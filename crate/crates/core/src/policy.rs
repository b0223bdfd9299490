//! Linear-softmax multi-head generator.
//!
//! A prompt is featurized into a hashed bag-of-words vector `x` (last slot is
//! a constant 1). Four categorical heads emit the prosody tokens with
//! probabilities `softmax(W_k x)`; one articulation head flags each prompt
//! word as cleanly articulated with probability `sigmoid(v · x)`. All draws
//! are independent given `x`, so the sample log-probability is a plain sum.

use rand::Rng as _;

use crate::dataset::PromptRecord;
use crate::error::{Error, Result};
use crate::labels::{Dimension, ProsodyLabels};
use crate::rng::Rng;
use crate::textmetrics::{normalize_tokens, TokenSequence};

pub const DEFAULT_FEATURE_DIM: usize = 32;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Slot that `token` occupies in a feature vector of dimension `dim`.
pub fn feature_slot(token: &str, dim: usize) -> usize {
    (fnv1a(token.as_bytes()) % (dim as u64 - 1)) as usize
}

/// Hashed bag-of-words with a trailing bias component fixed to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptFeatures(Vec<f64>);

impl PromptFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Token counts hashed into `dim - 1` slots plus the bias. Panics if `dim < 2`.
pub fn featurize(prompt_text: &str, dim: usize) -> PromptFeatures {
    assert!(dim >= 2, "feature dimension must be at least 2, got {dim}");
    let mut v = vec![0.0; dim];
    for token in normalize_tokens(prompt_text).iter() {
        v[feature_slot(token, dim)] += 1.0;
    }
    v[dim - 1] = 1.0;
    PromptFeatures(v)
}

/// Trainable parameters. Each categorical head is a row-major
/// `size × feature_dim` matrix; the articulation head is a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    feature_dim: usize,
    heads: [Vec<f64>; 4],
    articulation: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(feature_dim: usize) -> Self {
        assert!(feature_dim >= 2, "feature dimension must be at least 2, got {feature_dim}");
        PolicyParams {
            feature_dim,
            heads: Dimension::ALL.map(|d| vec![0.0; d.size() * feature_dim]),
            articulation: vec![0.0; feature_dim],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn head(&self, dim: Dimension) -> &[f64] {
        &self.heads[dim.index()]
    }

    pub fn head_mut(&mut self, dim: Dimension) -> &mut [f64] {
        &mut self.heads[dim.index()]
    }

    /// Row `category` of the head matrix for `dim`.
    pub fn row_mut(&mut self, dim: Dimension, category: usize) -> &mut [f64] {
        let f = self.feature_dim;
        &mut self.heads[dim.index()][category * f..(category + 1) * f]
    }

    pub fn articulation(&self) -> &[f64] {
        &self.articulation
    }

    pub fn articulation_mut(&mut self) -> &mut [f64] {
        &mut self.articulation
    }

    pub fn num_params(&self) -> usize {
        self.heads.iter().map(Vec::len).sum::<usize>() + self.articulation.len()
    }

    /// All parameters in checkpoint order: the four heads, then articulation.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.heads.iter().flatten().chain(self.articulation.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.heads.iter_mut().flatten().chain(self.articulation.iter_mut())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    /// Inverse of [`to_flat`](Self::to_flat). Panics on a length mismatch.
    pub fn from_flat(feature_dim: usize, values: &[f64]) -> Self {
        let mut p = PolicyParams::zeros(feature_dim);
        assert_eq!(values.len(), p.num_params(), "flat parameter length");
        p.iter_mut().zip(values).for_each(|(dst, &v)| *dst = v);
        p
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &PolicyParams) {
        assert_eq!(self.feature_dim, other.feature_dim);
        self.iter_mut().zip(other.iter()).for_each(|(a, &b)| *a += alpha * b);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.iter_mut().for_each(|a| *a *= alpha);
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.feature_dim == other.feature_dim
    }

    fn check_features(&self, features: &PromptFeatures) {
        assert_eq!(
            features.dim(),
            self.feature_dim,
            "feature vector does not match parameter shape"
        );
    }

    pub fn logits(&self, features: &PromptFeatures, dim: Dimension) -> Vec<f64> {
        self.check_features(features);
        self.heads[dim.index()]
            .chunks_exact(self.feature_dim)
            .map(|row| dot(row, features.as_slice()))
            .collect()
    }

    pub fn articulation_logit(&self, features: &PromptFeatures) -> f64 {
        self.check_features(features);
        dot(&self.articulation, features.as_slice())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(z)`, stable for large |z|.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Category probabilities of one head.
pub fn head_distribution(
    params: &PolicyParams,
    features: &PromptFeatures,
    head: Dimension,
) -> Result<Vec<f64>> {
    let logits = params.logits(features, head);
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFiniteLogits { head: head.name() });
    }
    Ok(softmax(&logits))
}

pub fn articulation_probability(params: &PolicyParams, features: &PromptFeatures) -> Result<f64> {
    let z = params.articulation_logit(features);
    if !z.is_finite() {
        return Err(Error::NonFiniteLogits { head: "articulation" });
    }
    Ok(sigmoid(z))
}

/// One generated output: emitted prosody tokens plus the prompt words with
/// per-word articulation flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeechSample {
    pub labels: ProsodyLabels,
    pub words: TokenSequence,
    pub articulated: Vec<bool>,
}

fn draw_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws one sample at temperature 1: the four heads in canonical order,
/// then one Bernoulli flag per word.
pub fn sample(params: &PolicyParams, prompt: &PromptRecord, rng: &mut Rng) -> Result<SpeechSample> {
    let features = featurize(&prompt.text, params.feature_dim());
    let mut idx = [0usize; 4];
    for d in Dimension::ALL {
        idx[d.index()] = draw_categorical(&head_distribution(params, &features, d)?, rng);
    }
    let p_clean = articulation_probability(params, &features)?;
    let words = normalize_tokens(&prompt.text);
    let articulated = (0..words.len()).map(|_| rng.gen::<f64>() < p_clean).collect();
    Ok(SpeechSample {
        labels: ProsodyLabels::from_indices(idx).expect("indices drawn within range"),
        words,
        articulated,
    })
}

/// `ln P(sample | prompt; params)`. Non-finite parameters yield NaN.
pub fn log_prob(params: &PolicyParams, prompt: &PromptRecord, sample: &SpeechSample) -> f64 {
    let features = featurize(&prompt.text, params.feature_dim());
    log_prob_with_features(params, &features, sample)
}

pub(crate) fn log_prob_with_features(
    params: &PolicyParams,
    features: &PromptFeatures,
    sample: &SpeechSample,
) -> f64 {
    let heads: f64 = Dimension::ALL
        .iter()
        .map(|&d| log_softmax(&params.logits(features, d))[sample.labels.get(d)])
        .sum();
    let z = params.articulation_logit(features);
    let (log_clean, log_garbled) = (log_sigmoid(z), log_sigmoid(-z));
    let words: f64 = sample
        .articulated
        .iter()
        .map(|&a| if a { log_clean } else { log_garbled })
        .sum();
    heads + words
}

/// Analytic `∇ ln P(sample | prompt; params)`, shaped like the parameters.
pub fn grad_log_prob(params: &PolicyParams, prompt: &PromptRecord, sample: &SpeechSample) -> PolicyParams {
    let features = featurize(&prompt.text, params.feature_dim());
    let mut grad = PolicyParams::zeros(params.feature_dim());
    accumulate_grad_log_prob(params, &features, sample, 1.0, &mut grad);
    grad
}

/// `grad += weight · ∇ ln P(sample)`.
pub(crate) fn accumulate_grad_log_prob(
    params: &PolicyParams,
    features: &PromptFeatures,
    sample: &SpeechSample,
    weight: f64,
    grad: &mut PolicyParams,
) {
    let x = features.as_slice();
    let f = params.feature_dim();
    for d in Dimension::ALL {
        let probs = softmax(&params.logits(features, d));
        let chosen = sample.labels.get(d);
        let head = grad.head_mut(d);
        for (k, p) in probs.iter().enumerate() {
            let coeff = weight * (f64::from(u8::from(k == chosen)) - p);
            for (g, xi) in head[k * f..(k + 1) * f].iter_mut().zip(x) {
                *g += coeff * xi;
            }
        }
    }
    let p_clean = sigmoid(params.articulation_logit(features));
    let residual: f64 = sample
        .articulated
        .iter()
        .map(|&a| f64::from(u8::from(a)) - p_clean)
        .sum();
    for (g, xi) in grad.articulation_mut().iter_mut().zip(x) {
        *g += weight * residual * xi;
    }
}
