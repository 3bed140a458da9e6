//! Reproducible experiments on top of `burstpdmp-core`: TOML configuration,
//! run manifests, and the subcommands of the `burstpdmp` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use manifest::{RunContext, RunManifest};

/// The subcommands that write outputs and a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Reduce,
    Moments,
    Density,
    ReproduceFig1,
    ReproduceFig2,
    Selfcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Reduce => "reduce",
            Command::Moments => "moments",
            Command::Density => "density",
            Command::ReproduceFig1 => "reproduce-fig1",
            Command::ReproduceFig2 => "reproduce-fig2",
            Command::Selfcheck => "selfcheck",
        }
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Replaces the `γ₁` grid the command sweeps over.
    pub gamma1: Option<Vec<f64>>,
}

impl Overrides {
    /// The config as the command will run it; this is what the manifest records.
    pub fn apply(&self, command: Command, mut config: ExperimentConfig) -> ExperimentConfig {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.to_string_lossy().into_owned();
        }
        if let Some(grid) = &self.gamma1 {
            match command {
                Command::Moments => config.moments.gamma1 = grid.clone(),
                _ => config.sweep.gamma1 = grid.clone(),
            }
        }
        config
    }
}

/// Runs `command` with a resolved config, writing outputs and the manifest
/// into `config.output_dir`. A failed selfcheck still writes its manifest.
pub fn execute(
    command: Command,
    config: ExperimentConfig,
    selfcheck: &commands::selfcheck::SelfCheckOptions,
) -> CliResult<RunManifest> {
    let out = PathBuf::from(&config.output_dir);
    let mut ctx = RunContext::new(command.name(), config, out)?;
    let result = match command {
        Command::Simulate => commands::simulate::run(&mut ctx),
        Command::Reduce => commands::reduce::run(&mut ctx),
        Command::Moments => commands::moments::run(&mut ctx),
        Command::Density => commands::density::run(&mut ctx),
        Command::ReproduceFig1 => commands::figures::run_fig1(&mut ctx),
        Command::ReproduceFig2 => commands::figures::run_fig2(&mut ctx),
        Command::Selfcheck => commands::selfcheck::run(&mut ctx, selfcheck),
    };
    match result {
        Ok(()) => ctx.finish(),
        Err(e @ CliError::CheckFailed { .. }) => {
            ctx.finish()?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}
