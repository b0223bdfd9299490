//! Command implementations behind the `prosody-rl` executable.

pub mod commands;
pub mod config;

pub use commands::{cmd_datagen, cmd_eval, cmd_train, cmd_wer, TrainReport, WerReport};
pub use config::{parse_overrides, RunConfig};
