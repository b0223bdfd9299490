//! Desk-scale GRPO laboratory.
//!
//! A linear-softmax generator emits four prosody tokens and per-word
//! articulation flags for a text prompt. Simulated feedback channels (a noisy
//! recognizer and a noisy prosody judge) score each output, and group
//! relative policy optimization drives the generator toward matching the
//! target labels while keeping the word error rate low.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod grpo;
pub mod harness;
pub mod labels;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod textmetrics;

pub use dataset::PromptRecord;
pub use error::{Error, Result};
pub use labels::{Dimension, Emotion, ProsodyLabels, Speed, Structure, Tone};
pub use policy::{PolicyParams, SpeechSample};
