use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use transit_deconv_cli::{run, CliError, Mode, MuSource, Overrides, PipelineConfig, SigmaSource};

#[derive(Debug, Parser)]
#[command(name = "transit-deconv", version, about = "Blind PSF-core estimation from transit observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON pipeline config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// fixed:<v> | rme | adaptive:<m1>,<m2>,...
    #[arg(long, global = true)]
    sigma: Option<SigmaSource>,
    /// fixed:<v> | estimate
    #[arg(long, global = true)]
    mu: Option<MuSource>,
    /// Parametric prefilter kernel (array stem).
    #[arg(long, global = true)]
    prefilter: Option<PathBuf>,
    /// Filter half-width and unknown border width.
    #[arg(long, global = true)]
    b: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    emit_pgm: bool,
    /// Write solver iterations as JSON lines.
    #[arg(long, global = true)]
    trace: bool,
    /// Blind mode: rerun with 1, 2, …, P patches, each warm-started.
    #[arg(long, global = true)]
    sweep: bool,
    #[arg(long, global = true)]
    print_effective_config: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Synthetic transit stack with ground truth and a manifest.
    Simulate,
    /// Joint filter and image estimation.
    Blind,
    /// Non-blind deconvolution with a given filter.
    Deconv,
    /// Deconvolve a held-out patch and report metrics.
    Validate,
    /// Check that a core-zeroed PSF tail is nearly constant inside the disk.
    LongrangeCheck,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Mode {
        match c {
            Command::Simulate => Mode::Simulate,
            Command::Blind => Mode::Blind,
            Command::Deconv => Mode::Deconv,
            Command::Validate => Mode::Validate,
            Command::LongrangeCheck => Mode::LongrangeCheck,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(
        cli.command.into(),
        Overrides {
            out_dir: cli.out_dir,
            sigma: cli.sigma,
            mu: cli.mu,
            prefilter: cli.prefilter,
            b: cli.b,
            seed: cli.seed,
            threads: cli.threads,
            emit_pgm: cli.emit_pgm,
            trace: cli.trace,
            sweep: cli.sweep,
        },
    );
    if cli.print_effective_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::config("config_error", e.to_string()))?;
    }
    let summary = run(&cfg)?;
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::config("usage_error", e.to_string()).to_json());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
