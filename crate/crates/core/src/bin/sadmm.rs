//! Command-line front end. Exit status: 0 when every enabled check passes,
//! 1 when a check fails, 2 on errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stochastic_admm::error::{AdmmError, Result};
use stochastic_admm::harness::{self, ExperimentConfig, RunOptions};
use stochastic_admm::presets::{build, PresetName};

#[derive(Parser)]
#[command(name = "sadmm", version, about = "Stochastic ADMM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replications and write trajectories, aggregate curve and report.
    Run(Common),
    /// Parse a config and print it with defaults filled in.
    Validate(Common),
    /// Compute and cache the reference solution.
    Reference(Common),
    /// Run with invariant probes enabled.
    CheckInvariants(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and SADMM_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Enable invariant probes.
    #[arg(long)]
    check: bool,
    /// Use a preset with default settings instead of a config file.
    #[arg(long)]
    preset: Option<PresetName>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, self.preset) {
            (Some(path), None) => harness::validate_config(path),
            (None, Some(p)) => {
                let cfg = ExperimentConfig::for_preset(p);
                cfg.validate()?;
                Ok(cfg)
            }
            (Some(_), Some(_)) => Err(AdmmError::InvalidConfig("pass either --config or --preset, not both".into())),
            (None, None) => Err(AdmmError::InvalidConfig("one of --config or --preset is required".into())),
        }
    }

    fn options(&self, check: bool) -> RunOptions {
        RunOptions {
            out_dir: self.out.clone(),
            workers: self.workers,
            check: self.check || check,
            seed: self.seed,
        }
    }
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Validate(c) => {
            print!("{}", c.load()?.to_toml());
            Ok(true)
        }
        Command::Reference(c) => {
            let cfg = c.load()?;
            let dir = harness::resolve_out_dir(&cfg, &c.options(false));
            harness::experiment::ensure_writable(&dir)?;
            let preset = build(cfg.preset, &cfg.problem)?;
            let (r, cached) = harness::cached_reference(&preset, &dir)?;
            println!("method {}", r.method.name());
            println!("theta_star {:e}", r.theta_star);
            println!("certified_tolerance {:e}", r.certified_tolerance);
            println!(
                "{} {}",
                if cached { "read" } else { "wrote" },
                dir.join(harness::experiment::REFERENCE_FILE).display()
            );
            Ok(true)
        }
        Command::Run(c) => report(c.load()?, c.options(false)),
        Command::CheckInvariants(c) => report(c.load()?, c.options(true)),
    }
}

fn report(cfg: ExperimentConfig, opts: RunOptions) -> Result<bool> {
    let out = harness::run_experiment(&cfg, &opts)?;
    for c in &out.report.criteria {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(f) = &out.report.fit {
        println!("slope {:.4} (r^2 {:.4}, {} points)", f.slope, f.r_squared, f.n_points);
    }
    println!("outputs in {}", out.out_dir.display());
    Ok(out.exit_ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
