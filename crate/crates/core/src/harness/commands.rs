use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::checkpoint;
use crate::dataset::{load_prompts, write_prompts};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::feedback::{generate_dataset, TemplateBank};
use crate::grpo::{train, MetricsRow};
use crate::harness::config::RunConfig;
use crate::rng::{self, tag};
use crate::textmetrics::{edit_counts, normalize_tokens, EditCounts};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "final.ckpt";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";

fn verbose() -> bool {
    std::env::var("PROSODY_RL_VERBOSE").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(fs::read_to_string).transpose().map_err(Error::from)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: RunConfig,
    pub steps: usize,
    pub last: Option<MetricsRow>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Resolves the config, trains, and writes `metrics.jsonl`, `final.ckpt` and
/// `resolved_config.toml` into the output directory.
pub fn cmd_train(config_path: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<TrainReport> {
    let config = RunConfig::resolve(read_config(config_path)?.as_deref(), overrides)?;
    if config.dataset_path.as_os_str().is_empty() {
        return Err(Error::config("dataset_path", "required"));
    }
    let prompts = load_prompts(&config.dataset_path)?;
    if prompts.is_empty() {
        return Err(Error::config("dataset_path", "dataset has no records"));
    }
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join(RESOLVED_CONFIG_FILE), config.to_toml())?;

    let metrics_path = out.join(METRICS_FILE);
    let mut writer = BufWriter::new(fs::File::create(&metrics_path)?);
    let loud = verbose();
    let result = train(&prompts, &config.train_settings(), &mut |row| {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n")?;
        if loud && row.step % 100 == 0 {
            eprintln!(
                "step {:>5} epoch {} reward {:.4} wer {:.4} match {:.4}",
                row.step, row.epoch, row.mean_reward, row.mean_wer, row.label_match_rate
            );
        }
        Ok(())
    });
    writer.flush()?;
    let outcome = result?;

    let checkpoint_path = out.join(CHECKPOINT_FILE);
    checkpoint::save(&checkpoint_path, &outcome.params)?;
    Ok(TrainReport {
        steps: outcome.metrics.len(),
        last: outcome.metrics.last().cloned(),
        config,
        metrics_path,
        checkpoint_path,
    })
}

/// Evaluates a checkpoint. The environment, reward weights, feature
/// dimension and seed come from the (optional) config plus overrides. The
/// report is written to `out`, or next to the checkpoint when `out` is `None`.
pub fn cmd_eval(
    checkpoint_path: &Path,
    dataset_path: &Path,
    config_path: Option<&Path>,
    overrides: &BTreeMap<String, String>,
    n_samples: usize,
    out: Option<&Path>,
) -> Result<EvalReport> {
    if n_samples == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    let config = RunConfig::resolve(read_config(config_path)?.as_deref(), overrides)?;
    let params = checkpoint::load(checkpoint_path)?;
    if params.feature_dim() != config.feature_dim {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint feature_dim {} differs from configured feature_dim {}",
            params.feature_dim(),
            config.feature_dim
        )));
    }
    let prompts = load_prompts(dataset_path)?;
    let report = evaluate(&params, &prompts, &config.env(), &config.weights(), n_samples, config.seed)?;
    let out = match out {
        Some(p) => p.to_path_buf(),
        None => checkpoint_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(EVAL_REPORT_FILE),
    };
    fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct LineWer {
    pub line: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    pub wer: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WerReport {
    pub lines: Vec<LineWer>,
    pub total_errors: usize,
    pub total_reference: usize,
    /// Total errors over total reference tokens (denominator at least 1).
    pub corpus_wer: f64,
}

/// Line-aligned WER between two text files.
pub fn cmd_wer(ref_path: &Path, hyp_path: &Path) -> Result<WerReport> {
    let refs = fs::read_to_string(ref_path)?;
    let hyps = fs::read_to_string(hyp_path)?;
    wer_report(&refs, &hyps)
}

pub fn wer_report(refs: &str, hyps: &str) -> Result<WerReport> {
    let (r_lines, h_lines): (Vec<_>, Vec<_>) = (refs.lines().collect(), hyps.lines().collect());
    if r_lines.len() != h_lines.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} lines but hypothesis has {}",
            r_lines.len(),
            h_lines.len()
        )));
    }
    let mut total = EditCounts::default();
    let lines = r_lines
        .iter()
        .zip(&h_lines)
        .enumerate()
        .map(|(i, (r, h))| {
            let c = edit_counts(&normalize_tokens(r), &normalize_tokens(h));
            total.substitutions += c.substitutions;
            total.insertions += c.insertions;
            total.deletions += c.deletions;
            total.reference_length += c.reference_length;
            LineWer {
                line: i + 1,
                substitutions: c.substitutions,
                insertions: c.insertions,
                deletions: c.deletions,
                reference_length: c.reference_length,
                wer: c.rate(),
            }
        })
        .collect();
    Ok(WerReport {
        lines,
        total_errors: total.errors(),
        total_reference: total.reference_length,
        corpus_wer: total.rate(),
    })
}

/// Writes `n` generated prompts drawn from the stream `(seed, DATAGEN)`.
pub fn cmd_datagen(n: usize, seed: u64, out: &Path) -> Result<usize> {
    if n == 0 {
        return Err(Error::config("n", "must be at least 1"));
    }
    let records = generate_dataset(n, &mut rng::stream(seed, &[tag::DATAGEN]), &TemplateBank::default());
    write_prompts(out, &records)?;
    Ok(records.len())
}
