//! Run configuration: a sectioned TOML file whose keys map 1:1 onto
//! [`RunConfig`] fields, plus `--key value` command-line overrides.
//!
//! Sections only group keys for readability; every key is unique across the
//! file, so `[grpo] epochs = 3` and a top-level `epochs = 3` mean the same.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::feedback::{AsrNoiseConfig, JudgeConfig};
use crate::grpo::{AdvantageMode, FeedbackEnv, GrpoHyper, TrainSettings};
use crate::policy::DEFAULT_FEATURE_DIM;
use crate::rewards::RewardWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub feature_dim: usize,
    pub group_size: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub label_weights: [f64; 4],
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub prompts_per_step: usize,
    pub base_sub: f64,
    pub base_del: f64,
    pub clean_err: f64,
    pub speed_slow: f64,
    pub speed_normal: f64,
    pub speed_fast: f64,
    pub flip_prob: f64,
    pub advantage_mode: AdvantageMode,
    pub use_label_reward: bool,
    pub use_group_norm: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = GrpoHyper::default();
        let weights = RewardWeights::default();
        let asr = AsrNoiseConfig::default();
        RunConfig {
            dataset_path: PathBuf::new(),
            output_dir: PathBuf::from("run"),
            seed: 20_240_917,
            feature_dim: DEFAULT_FEATURE_DIM,
            group_size: hyper.group_size,
            alpha1: weights.alpha1,
            alpha2: weights.alpha2,
            label_weights: weights.label_weights,
            beta: hyper.beta,
            learning_rate: hyper.learning_rate,
            epochs: hyper.epochs,
            prompts_per_step: hyper.prompts_per_step,
            base_sub: asr.base_sub,
            base_del: asr.base_del,
            clean_err: asr.clean_err,
            speed_slow: asr.speed_multiplier[0],
            speed_normal: asr.speed_multiplier[1],
            speed_fast: asr.speed_multiplier[2],
            flip_prob: JudgeConfig::default().flip_prob,
            advantage_mode: hyper.advantage_mode,
            use_label_reward: hyper.use_label_reward,
            use_group_norm: hyper.use_group_norm,
        }
    }
}

/// Section layout of the resolved-config file.
const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["dataset_path", "output_dir", "seed"]),
    ("policy", &["feature_dim"]),
    ("reward", &["alpha1", "alpha2", "label_weights"]),
    (
        "grpo",
        &[
            "group_size",
            "beta",
            "learning_rate",
            "epochs",
            "prompts_per_step",
            "advantage_mode",
            "use_label_reward",
            "use_group_norm",
        ],
    ),
    ("asr", &["base_sub", "base_del", "clean_err", "speed_slow", "speed_normal", "speed_fast"]),
    ("judge", &["flip_prob"]),
];

fn known_key(key: &str) -> bool {
    SECTIONS.iter().any(|(_, keys)| keys.contains(&key))
}

fn flatten(doc: Table) -> Result<Table> {
    let mut flat = Table::new();
    let put = |flat: &mut Table, key: String, value: Value| {
        if !known_key(&key) {
            return Err(Error::config(key, "unknown configuration key"));
        }
        if flat.insert(key.clone(), value).is_some() {
            return Err(Error::config(key, "set more than once"));
        }
        Ok(())
    };
    for (key, value) in doc {
        match value {
            Value::Table(section) if SECTIONS.iter().any(|(s, _)| *s == key) => {
                for (k, v) in section {
                    put(&mut flat, k, v)?;
                }
            }
            other => put(&mut flat, key, other)?,
        }
    }
    Ok(flat)
}

/// Interprets an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Command-line overrides: `--key value` pairs, hyphens in keys read as underscores.
pub fn parse_overrides(args: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::config(flag.clone(), "expected a `--key value` override"))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(key, "missing value"))?;
                (key.to_string(), v.clone())
            }
        };
        out.insert(key.replace('-', "_"), value);
    }
    Ok(out)
}

impl RunConfig {
    /// Builds a config from optional file text and overrides, then validates it.
    pub fn resolve(file_text: Option<&str>, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let doc = match file_text {
            Some(text) => text
                .parse::<Table>()
                .map_err(|e| Error::config("config", e.to_string()))?,
            None => Table::new(),
        };
        let mut flat = flatten(doc)?;
        for (key, raw) in overrides {
            if !known_key(key) {
                return Err(Error::config(key.clone(), "unknown configuration key"));
            }
            flat.insert(key.clone(), parse_value(raw));
        }
        // Deserialize key by key so type errors name the offending field.
        for (key, value) in &flat {
            let mut single = Table::new();
            single.insert(key.clone(), value.clone());
            if let Err(e) = single.try_into::<RunConfig>() {
                return Err(Error::config(key.clone(), e.message().trim().to_string()));
            }
        }
        let cfg: RunConfig = flat.try_into().map_err(|e| Error::config("config", e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 2 {
            return Err(Error::config("feature_dim", format!("must be at least 2, got {}", self.feature_dim)));
        }
        self.weights().validate()?;
        self.hyper().validate()?;
        self.asr().validate()?;
        self.judge().validate()?;
        Ok(())
    }

    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            label_weights: self.label_weights,
        }
    }

    pub fn hyper(&self) -> GrpoHyper {
        GrpoHyper {
            group_size: self.group_size,
            beta: self.beta,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            prompts_per_step: self.prompts_per_step,
            advantage_mode: self.advantage_mode,
            use_label_reward: self.use_label_reward,
            use_group_norm: self.use_group_norm,
        }
    }

    pub fn asr(&self) -> AsrNoiseConfig {
        AsrNoiseConfig {
            base_sub: self.base_sub,
            base_del: self.base_del,
            clean_err: self.clean_err,
            speed_multiplier: [self.speed_slow, self.speed_normal, self.speed_fast],
        }
    }

    pub fn judge(&self) -> JudgeConfig {
        JudgeConfig { flip_prob: self.flip_prob }
    }

    pub fn env(&self) -> FeedbackEnv {
        FeedbackEnv { asr: self.asr(), judge: self.judge() }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            seed: self.seed,
            feature_dim: self.feature_dim,
            hyper: self.hyper(),
            weights: self.weights(),
            env: self.env(),
        }
    }

    /// Every effective value, in the sectioned file layout.
    pub fn to_toml(&self) -> String {
        let flat = Table::try_from(self).expect("config serializes to a table");
        let mut doc = Table::new();
        for (section, keys) in SECTIONS {
            let mut t = Table::new();
            for k in *keys {
                t.insert(k.to_string(), flat[*k].clone());
            }
            doc.insert(section.to_string(), Value::Table(t));
        }
        toml::to_string(&doc).expect("config renders as TOML")
    }
}
