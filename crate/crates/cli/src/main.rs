//! `wulffcap`: runs capacity, monotonicity, inequality and identity checks
//! from a TOML configuration and writes a JSON report plus CSV curves.
//!
//! Exit status: 0 when every requested verdict passes, 1 on usage or
//! configuration errors, 2 when a verdict fails.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use report::write_atomic;
use run::Command;

const EXIT_USAGE: u8 = 1;
const EXIT_VERDICT: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "wulffcap", version, about = "Anisotropic p-capacity experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for report.json and CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run cases one after another so that the report depends only on the
    /// configuration and seed.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Check the norm identities and ellipticity.
    ValidateNorm,
    /// Wulff-ball volume, perimeter constant and closed-form capacities.
    WulffInfo,
    /// Solve the capacitary problem and estimate the capacity.
    Capacity,
    /// Sample the level-set functional along a geometric τ grid.
    Phi,
    /// Evaluate the Minkowski-type inequalities on the domain.
    Verify,
    /// Capacity sweep towards p → 1.
    SweepP,
    /// Pointwise identities and sign conditions.
    Identities,
    /// Every stage listed under `checks` in the configuration.
    All,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::ValidateNorm => Command::ValidateNorm,
            Sub::WulffInfo => Command::WulffInfo,
            Sub::Capacity => Command::Capacity,
            Sub::Phi => Command::Phi,
            Sub::Verify => Command::Verify,
            Sub::SweepP => Command::SweepP,
            Sub::Identities => Command::Identities,
            Sub::All => Command::All,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => return usage(e),
        },
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.threads {
        if k == 0 {
            return usage("--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            return usage(format!("--threads: {e}"));
        }
    }
    let out_dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("wulffcap-out"));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return usage(format!("{}: {e}", out_dir.display()));
    }
    // fail before the computation if the directory is not writable
    if let Err(e) = tempfile::NamedTempFile::new_in(&out_dir) {
        return usage(format!("{} is not writable: {e}", out_dir.display()));
    }

    let command = Command::from(cli.command);
    let output = match run::execute(&cfg, command, cfg.seed, cli.deterministic) {
        Ok(o) => o,
        Err(e) => return usage(e.0),
    };
    for line in &output.lines {
        println!("{line}");
    }
    for (name, bytes) in &output.files {
        if let Err(e) = write_atomic(&out_dir, name, bytes) {
            return usage(format!("writing {name}: {e}"));
        }
    }
    let json = match serde_json::to_vec_pretty(&output.report) {
        Ok(mut j) => {
            j.push(b'\n');
            j
        }
        Err(e) => return usage(format!("serializing the report: {e}")),
    };
    match write_atomic(&out_dir, "report.json", &json) {
        Ok(path) => println!("report: {}", path.display()),
        Err(e) => return usage(format!("writing report.json: {e}")),
    }
    if output.report.pass {
        println!("{}: PASS", command.name());
        ExitCode::SUCCESS
    } else {
        println!("{}: FAIL", command.name());
        ExitCode::from(EXIT_VERDICT)
    }
}
