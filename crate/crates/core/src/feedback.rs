//! Simulated AI-feedback channels and the rule-based annotator.
//!
//! The ASR channel turns a [`SpeechSample`] into a transcript, corrupting
//! garbled words far more often than cleanly articulated ones, with every
//! corruption probability scaled by the emitted speaking speed. The judge
//! reads the emitted prosody tokens back with a per-dimension flip rate.
//! The annotator assigns target labels from keywords and punctuation and
//! acts as the environment's ground truth.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::PromptRecord;
use crate::error::{Error, Result};
use crate::labels::{Dimension, Emotion, ProsodyLabels, Speed, Structure, Tone};
use crate::policy::SpeechSample;
use crate::rng::Rng;
use crate::textmetrics::{normalize_tokens, NOISE_TOKEN};

/// Corruption probabilities of the simulated recognizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsrNoiseConfig {
    /// Substitution probability for a garbled word.
    pub base_sub: f64,
    /// Deletion probability for a garbled word.
    pub base_del: f64,
    /// Corruption probability for a cleanly articulated word.
    pub clean_err: f64,
    /// Multipliers indexed by [`Speed`]: slow, normal, fast.
    pub speed_multiplier: [f64; 3],
}

impl Default for AsrNoiseConfig {
    fn default() -> Self {
        AsrNoiseConfig {
            base_sub: 0.4,
            base_del: 0.2,
            clean_err: 0.01,
            speed_multiplier: [0.5, 1.0, 2.0],
        }
    }
}

impl AsrNoiseConfig {
    /// A channel that never corrupts anything.
    pub fn noiseless() -> Self {
        AsrNoiseConfig {
            base_sub: 0.0,
            base_del: 0.0,
            clean_err: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("base_sub", self.base_sub),
            ("base_del", self.base_del),
            ("clean_err", self.clean_err),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("probability must lie in [0, 1], got {p}")));
            }
        }
        for (speed, m) in Speed::ALL.iter().zip(self.speed_multiplier) {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::config(
                    format!("speed_{speed}"),
                    format!("multiplier must be finite and non-negative, got {m}"),
                ));
            }
        }
        Ok(())
    }

    fn scaled(&self, p: f64, speed: Speed) -> f64 {
        (p * self.speed_multiplier[speed.index()]).clamp(0.0, 1.0)
    }

    /// Probability that a cleanly articulated word is corrupted at `speed`.
    pub fn clean_corruption(&self, speed: Speed) -> f64 {
        self.scaled(self.clean_err, speed)
    }

    /// `(substitute, delete)` probabilities for a garbled word at `speed`.
    /// Deletion receives at most what substitution leaves over.
    pub fn garbled_corruption(&self, speed: Speed) -> (f64, f64) {
        let sub = self.scaled(self.base_sub, speed);
        let del = self.scaled(self.base_del, speed).min(1.0 - sub);
        (sub, del)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub flip_prob: f64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig { flip_prob: 0.05 }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..0.5).contains(&self.flip_prob) {
            Ok(())
        } else {
            Err(Error::config(
                "flip_prob",
                format!("must lie in [0, 0.5), got {}", self.flip_prob),
            ))
        }
    }
}

/// Transcribes a sample. Exactly one uniform draw is consumed per word:
/// articulated words are replaced by [`NOISE_TOKEN`] when it falls below the
/// clean corruption rate; garbled words are substituted below the
/// substitution rate, deleted in the band above it, and kept otherwise.
pub fn simulate_asr(sample: &SpeechSample, cfg: &AsrNoiseConfig, rng: &mut Rng) -> String {
    let speed = sample.labels.speed;
    let clean = cfg.clean_corruption(speed);
    let (sub, del) = cfg.garbled_corruption(speed);
    let mut out: Vec<&str> = Vec::with_capacity(sample.words.len());
    for (word, &articulated) in sample.words.iter().zip(&sample.articulated) {
        let u: f64 = rng.gen();
        if articulated {
            out.push(if u < clean { NOISE_TOKEN } else { word });
        } else if u < sub {
            out.push(NOISE_TOKEN);
        } else if u >= sub + del {
            out.push(word);
        }
    }
    out.join(" ")
}

/// Reads back the emitted labels; each dimension independently flips to a
/// uniformly chosen different category with probability `flip_prob`.
pub fn judge_labels(sample: &SpeechSample, cfg: &JudgeConfig, rng: &mut Rng) -> ProsodyLabels {
    let mut out = sample.labels;
    for d in Dimension::ALL {
        if rng.gen::<f64>() < cfg.flip_prob {
            let own = sample.labels.get(d);
            let other = rng.gen_range(0..d.size() - 1);
            out.set(d, if other >= own { other + 1 } else { other });
        }
    }
    out
}

/// Emotion keywords in lookup order. The first token of a text found here
/// decides its emotion.
pub const EMOTION_LEXICON: &[(&str, Emotion)] = &[
    ("wonderful", Emotion::Happy),
    ("joy", Emotion::Happy),
    ("joyful", Emotion::Happy),
    ("delighted", Emotion::Happy),
    ("cheerful", Emotion::Happy),
    ("glad", Emotion::Happy),
    ("alas", Emotion::Sad),
    ("grief", Emotion::Sad),
    ("sorrow", Emotion::Sad),
    ("tears", Emotion::Sad),
    ("mourn", Emotion::Sad),
    ("furious", Emotion::Angry),
    ("rage", Emotion::Angry),
    ("outraged", Emotion::Angry),
    ("enraged", Emotion::Angry),
    ("livid", Emotion::Angry),
    ("astonishing", Emotion::Surprised),
    ("suddenly", Emotion::Surprised),
    ("unexpected", Emotion::Surprised),
    ("amazed", Emotion::Surprised),
    ("astonished", Emotion::Surprised),
];

pub fn lexicon_emotion(token: &str) -> Option<Emotion> {
    EMOTION_LEXICON
        .iter()
        .find(|(w, _)| *w == token)
        .map(|&(_, e)| e)
}

/// Rule-based target labels.
///
/// * structure: any `?` makes a question, otherwise any `!` an exclamation
/// * emotion: first lexicon keyword in the text, else neutral
/// * speed: happy/angry fast, sad slow, otherwise normal
/// * tone: questions and surprise rise, sadness falls, otherwise flat
pub fn annotate(prompt_text: &str) -> ProsodyLabels {
    let structure = if prompt_text.contains('?') {
        Structure::Question
    } else if prompt_text.contains('!') {
        Structure::Exclamation
    } else {
        Structure::Statement
    };
    let emotion = normalize_tokens(prompt_text)
        .iter()
        .find_map(lexicon_emotion)
        .unwrap_or(Emotion::Neutral);
    let speed = match emotion {
        Emotion::Happy | Emotion::Angry => Speed::Fast,
        Emotion::Sad => Speed::Slow,
        Emotion::Neutral | Emotion::Surprised => Speed::Normal,
    };
    let tone = if structure == Structure::Question || emotion == Emotion::Surprised {
        Tone::Rising
    } else if emotion == Emotion::Sad {
        Tone::Falling
    } else {
        Tone::Flat
    };
    ProsodyLabels { structure, emotion, speed, tone }
}

/// Sentence parts used by [`generate_dataset`].
///
/// The default bank keeps every structure marker and emotion keyword in a
/// feature slot of its own at the default feature dimension, so the labels
/// are linearly recoverable from the hashed features.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    pub subjects: Vec<&'static str>,
    /// `(base form, past form)` pairs.
    pub verbs: Vec<(&'static str, &'static str)>,
    pub objects: Vec<&'static str>,
    pub question_openers: Vec<&'static str>,
    pub exclamation_openers: Vec<&'static str>,
    /// Closing phrases per emotion, indexed by [`Emotion::index`].
    pub tails: [Vec<&'static str>; 5],
}

impl Default for TemplateBank {
    fn default() -> Self {
        TemplateBank {
            subjects: vec!["the teacher", "my sister", "the old farmer", "the doctor", "a friend from the village"],
            verbs: vec![("write", "wrote"), ("carry", "carried"), ("get", "got"), ("see", "saw")],
            objects: vec!["the letters", "a report", "an answer", "a message", "the words"],
            question_openers: vec!["did", "will"],
            exclamation_openers: vec!["look", "indeed"],
            tails: [
                vec!["as usual", "in the ordinary way", "at night"],
                vec!["and was delighted", "with joyful words"],
                vec![", alas", "in tears"],
                vec!["and was outraged", "with enraged words"],
                vec!["with unexpected words", "in an astonishing way"],
            ],
        }
    }
}

impl TemplateBank {
    /// Builds one sentence with the requested structure and emotion.
    pub fn compose(&self, structure: Structure, emotion: Emotion, rng: &mut Rng) -> String {
        let pick = |items: &[&'static str], rng: &mut Rng| *items.choose(rng).expect("non-empty bank");
        let subject = pick(&self.subjects, rng);
        let &(base, past) = self.verbs.choose(rng).expect("non-empty bank");
        let object = pick(&self.objects, rng);
        let tail = pick(&self.tails[emotion.index()], rng);
        let tail = if tail.starts_with(',') {
            tail.to_string()
        } else {
            format!(" {tail}")
        };
        let sentence = match structure {
            Structure::Statement => format!("{subject} {past} {object}{tail}."),
            Structure::Question => {
                let opener = pick(&self.question_openers, rng);
                format!("{opener} {subject} {base} {object}{tail}?")
            }
            Structure::Exclamation => {
                let opener = pick(&self.exclamation_openers, rng);
                format!("{opener}, {subject} {past} {object}{tail}!")
            }
        };
        capitalize(&sentence)
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// `n` prompts with uniformly drawn structure and emotion, labelled by
/// [`annotate`]. Ids are `prompt-00000`, `prompt-00001`, ...
pub fn generate_dataset(n: usize, rng: &mut Rng, bank: &TemplateBank) -> Vec<PromptRecord> {
    (0..n)
        .map(|i| {
            let structure = *Structure::ALL.choose(rng).expect("non-empty");
            let emotion = *Emotion::ALL.choose(rng).expect("non-empty");
            let text = bank.compose(structure, emotion, rng);
            PromptRecord {
                id: format!("prompt-{i:05}"),
                target: annotate(&text),
                text,
            }
        })
        .collect()
}
