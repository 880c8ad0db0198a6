//! `kperim`: command-line front end.
//!
//! Exit status: 0 when the verdict holds, 2 when it fails, 3 when it is
//! inconclusive, 1 on usage errors and malformed specs.

mod commands;
mod config;

use clap::Parser;
use config::{RunConfig, COMMANDS};
use std::path::PathBuf;
use std::process::ExitCode;

const THREADS_VAR: &str = "KPERIM_THREADS";

#[derive(Parser, Debug)]
#[command(name = "kperim", version, about = "Non-local perimeters and seminorms on grids")]
struct Args {
    /// Command to run, or `run` to take it from the config file.
    #[arg(value_parser = command_names())]
    command: String,
    /// Base run configuration (`key = value` lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Kernel spec file.
    #[arg(short, long)]
    kernel: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Further `key=value` settings, applied last.
    settings: Vec<String>,
}

fn command_names() -> clap::builder::PossibleValuesParser {
    let mut names: Vec<&'static str> = COMMANDS.to_vec();
    names.push("run");
    clap::builder::PossibleValuesParser::new(names)
}

fn build_config(args: &Args) -> Result<RunConfig, commands::CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| commands::CliError::Usage(format!("cannot read config `{}`: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if args.command != "run" {
        cfg.command = args.command.clone();
    } else if args.config.is_none() {
        return Err(commands::CliError::Usage("`run` needs --config".into()));
    }
    if let Some(k) = &args.kernel {
        cfg.kernel = Some(k.clone());
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    for (i, s) in args.settings.iter().enumerate() {
        let Some((k, v)) = s.split_once('=') else {
            return Err(commands::CliError::Usage(format!("setting {} (`{s}`): expected key=value", i + 1)));
        };
        cfg.set(k.trim(), v.trim()).map_err(|m| commands::CliError::Usage(format!("setting {} (`{s}`): {m}", i + 1)))?;
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(m) = init_threads() {
        eprintln!("kperim: {m}");
        return ExitCode::from(1);
    }
    let cfg = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("kperim: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let out = cfg.out.clone();
    match commands::run(cfg) {
        Ok(o) => {
            println!("{} [{}] ({} artifacts in {})", o.summary, o.verdict.label(), o.artifacts.len(), out.display());
            ExitCode::from(commands::exit_code(o.verdict) as u8)
        }
        Err(e) => {
            eprintln!("kperim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
