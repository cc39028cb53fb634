//! `openxyz`: integrability checks, zero roots, energies and finite-size
//! validation of the open XYZ chain, driven by a TOML parameter file.

use clap::{Parser, Subcommand};
use openxyz_cli::commands::{self, CliError};
use openxyz_cli::config::RunConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "openxyz", version, about = "Open XYZ chain workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML parameter file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Series term cap, overriding the file.
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Series relative tolerance, overriding the file.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Worker threads for sweeps, overriding the file (0 picks the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Algebraic identities and Hermiticity region; writes check.json.
    Check,
    /// Zero roots of the lowest states; writes roots.csv.
    Roots,
    /// Surface and excitation energies over a sweep; writes energy.csv.
    Energy,
    /// Finite-size spectra against the formulas; writes validate.csv and validate.json.
    Validate,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut cfg =
        RunConfig::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(k) = cli.kmax {
        cfg.numerics.kmax = k;
    }
    if let Some(e) = cli.eps {
        cfg.numerics.eps = e;
    }
    if let Some(t) = cli.threads {
        cfg.numerics.threads = t;
    }
    if cfg.numerics.eps.is_nan() || cfg.numerics.eps <= 0.0 || cfg.numerics.kmax == 0 {
        return Err(CliError::Usage(
            "eps must be positive and kmax nonzero".into(),
        ));
    }
    Ok(cfg)
}

fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.numerics.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Check => commands::check(cfg, out),
        Command::Roots => commands::roots(cfg, out),
        Command::Energy => commands::energy(cfg, out),
        Command::Validate => commands::validate(cfg, out),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| run(cli.command, &cfg, &cli.out));
    match result {
        Ok(true) => {
            println!("PASS");
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("FAIL");
            ExitCode::from(1)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
