use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use prosody_rl::harness::{self, parse_overrides};

#[derive(Parser)]
#[command(name = "prosody-rl", version, about = "GRPO against simulated ASR and prosody-judge feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from zero parameters; writes metrics, checkpoint and resolved config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `--key value` overrides of any config key.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 8)]
        n_samples: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report path; defaults to eval_report.json next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Per-line and corpus word error rate between two line-aligned files.
    Wer {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Generate a labelled prompt dataset.
    Datagen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, overrides } => {
            let mut overrides = parse_overrides(&overrides)?;
            let config = config.or_else(|| overrides.remove("config").map(PathBuf::from));
            let report = harness::cmd_train(config.as_deref(), &overrides)?;
            println!("steps: {}", report.steps);
            if let Some(last) = &report.last {
                println!("{}", serde_json::to_string(last)?);
            }
            println!("metrics: {}", report.metrics_path.display());
            println!("checkpoint: {}", report.checkpoint_path.display());
        }
        Command::Eval { checkpoint, dataset, n_samples, config, out, overrides } => {
            let overrides = parse_overrides(&overrides)?;
            let report = harness::cmd_eval(&checkpoint, &dataset, config.as_deref(), &overrides, n_samples, out.as_deref())
                .with_context(|| format!("evaluating {}", checkpoint.display()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Wer { reference, hyp } => {
            let report = harness::cmd_wer(&reference, &hyp)?;
            println!("line\tsub\tins\tdel\tref\twer");
            for l in &report.lines {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{:.6}",
                    l.line, l.substitutions, l.insertions, l.deletions, l.reference_length, l.wer
                );
            }
            println!(
                "corpus\terrors={}\tref={}\twer={:.6}",
                report.total_errors, report.total_reference, report.corpus_wer
            );
        }
        Command::Datagen { n, seed, out } => {
            let written = harness::cmd_datagen(n, seed, &out)?;
            println!("wrote {written} records to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
