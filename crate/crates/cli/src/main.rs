#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use burstpdmp_cli::commands::selfcheck::{self, SelfCheckOptions};
use burstpdmp_cli::manifest::{read_manifest, MANIFEST_FILE};
use burstpdmp_cli::{execute, CliError, CliResult, Command, ExperimentConfig, Overrides};
use burstpdmp_core::simulator::State2D;
use burstpdmp_core::ModelParams;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "burstpdmp",
    version,
    about = "Bursting gene-expression simulator and verification experiments"
)]
struct Cli {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replica ensembles.
    #[arg(long, global = true, env = "BURSTPDMP_THREADS")]
    threads: Option<usize>,
    /// Comma-separated γ₁ grid (overrides the config).
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    gamma1: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    /// Drops the mRNA contribution to protein in the flow.
    Flow,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Simulate full (mRNA, protein) trajectories.
    Simulate,
    /// Simulate or integrate the γ₁ → ∞ limit.
    Reduce,
    /// Monte Carlo moments and their γ₁ scaling exponents.
    Moments,
    /// Stationary and transient densities of the reduced model.
    Density,
    /// Histograms of X and Y across γ₁ with the analytic overlay.
    #[command(name = "reproduce-fig1")]
    ReproduceFig1,
    /// Density distances, protein moments and moment scaling across γ₁.
    #[command(name = "reproduce-fig2")]
    ReproduceFig2,
    /// Fast invariant checks.
    Selfcheck {
        /// Tolerance of the flow-exactness check.
        #[arg(long, default_value_t = 1e-10)]
        flow_tolerance: f64,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
}

fn faulty_flow(s: State2D, dt: f64, p: &ModelParams) -> State2D {
    let mut free = burstpdmp_core::simulator::flow(State2D::new(s.t, 0.0, s.y), dt, p);
    free.x = s.x * (-p.gamma1 * dt).exp();
    free
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("threads", e.to_string()))?;
    }
    let (command, check_opts) = match cli.command {
        Sub::Simulate => (Command::Simulate, SelfCheckOptions::default()),
        Sub::Reduce => (Command::Reduce, SelfCheckOptions::default()),
        Sub::Moments => (Command::Moments, SelfCheckOptions::default()),
        Sub::Density => (Command::Density, SelfCheckOptions::default()),
        Sub::ReproduceFig1 => (Command::ReproduceFig1, SelfCheckOptions::default()),
        Sub::ReproduceFig2 => (Command::ReproduceFig2, SelfCheckOptions::default()),
        Sub::Selfcheck {
            flow_tolerance,
            inject_fault,
        } => {
            if !(flow_tolerance > 0.0) {
                return Err(CliError::config("flow-tolerance", "must be positive"));
            }
            let mut opts = SelfCheckOptions {
                flow_tolerance,
                seed: cli.seed.unwrap_or(0),
                ..SelfCheckOptions::default()
            };
            if inject_fault == Some(Fault::Flow) {
                opts.flow = faulty_flow;
            }
            (Command::Selfcheck, opts)
        }
    };
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        gamma1: cli.gamma1,
    };
    let config = overrides.apply(command, config);
    config.validate()?;

    // Without --out the selfcheck only prints its report.
    if command == Command::Selfcheck && cli.out.is_none() {
        let checks = selfcheck::run_checks(&check_opts);
        selfcheck::print_report(std::io::stdout().lock(), &checks).map_err(|e| CliError::io("<stdout>", e))?;
        let failed = checks.iter().filter(|c| !c.passed).count();
        if failed > 0 {
            return Err(CliError::CheckFailed {
                failed,
                total: checks.len(),
            });
        }
        return Ok(());
    }
    let out_dir = PathBuf::from(&config.output_dir);
    let result = execute(command, config, &check_opts);
    if command == Command::Selfcheck && matches!(result, Ok(_) | Err(CliError::CheckFailed { .. })) {
        if let Ok(m) = read_manifest(&out_dir.join(MANIFEST_FILE)) {
            selfcheck::print_report(std::io::stdout().lock(), &m.checks).map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    let manifest = result?;
    for out in &manifest.outputs {
        log::info!("wrote {}", out.path);
    }
    println!(
        "{}: {} files in {} ({:.2} s)",
        manifest.command,
        manifest.outputs.len(),
        manifest.config.output_dir,
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("burstpdmp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
