//! Config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 config error, 3 certificate
//! failure, 4 budget exceeded.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amenable_core::tiling::TilingFaults;
use amenable_core::verify::{Faults, Level};
use amenable_core::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use commands::Outcome;
use config::{Loaded, VerifySection};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] amenable_core::Error),
    #[error("certificate failure: {0}")]
    Certificate(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Certificate(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Certificate => 3,
                ErrorKind::Budget => 4,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "io",
            2 => "config",
            3 => "certificate",
            _ => "budget",
        }
    }

    /// Stage tags attached by the pipeline, outermost first.
    fn stages(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if let CliError::Core(e) = self {
            let mut e = e;
            while let amenable_core::Error::Stage { stage, source } = e {
                out.push(*stage);
                e = &**source;
            }
        }
        out
    }
}

#[derive(Parser)]
#[command(name = "amenable", version, about = "Entropy and large-deviation experiments on amenable group actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML with dotted keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    TileCoverage,
}

#[derive(Subcommand)]
enum Command {
    /// Følner ratios, temperedness and growth diagnostics.
    Folner(Common),
    /// Quasi-tile a target set and certify the result.
    Tile {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Katok, topological or SMB entropy curves.
    Entropy(Common),
    /// Tail exponents against the variational bounds.
    Ldp(Common),
    /// Shadow-point construction behind the lower bound.
    Thm3demo(Common),
    /// Cross-module invariant suite.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        level: Option<LevelArg>,
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: &'a str,
    seed: Option<u64>,
    passed: bool,
    result: &'a Value,
}

#[derive(Serialize)]
struct Failure<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: Option<&'a str>,
    exit_code: u8,
    kind: &'a str,
    stages: Vec<&'a str>,
    message: String,
}

fn load(common: &Common, required: bool) -> Result<Loaded, CliError> {
    let mut loaded = match &common.config {
        Some(p) => Loaded::read(p)?,
        None if required => return Err(CliError::Config("--config is required".into())),
        None => Loaded::empty(),
    };
    if common.seed.is_some() {
        loaded.config.seed = common.seed;
    }
    Ok(loaded)
}

fn out_dir(common: &Common, loaded: Option<&Loaded>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| loaded.and_then(|l| l.config.output.as_ref()?.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn fault(arg: Option<&str>) -> Result<bool, CliError> {
    match arg {
        None => Ok(false),
        Some("tile-coverage") => Ok(true),
        Some(other) => Err(CliError::Config(format!("unknown fault `{other}` (tile-coverage)"))),
    }
}

fn dispatch(command: &Command, loaded: &mut Loaded) -> Result<Outcome, CliError> {
    match command {
        Command::Folner(_) => commands::folner(loaded),
        Command::Tile { inject_fault, .. } => {
            if inject_fault.is_some() {
                loaded.config.verify.get_or_insert_with(VerifySection::default).inject_fault = Some("tile-coverage".into());
            }
            let coverage_off_by_one = fault(loaded.config.verify.as_ref().and_then(|v| v.inject_fault.as_deref()))?;
            commands::tile(loaded, TilingFaults { coverage_off_by_one })
        }
        Command::Entropy(_) => commands::entropy(loaded),
        Command::Ldp(_) => commands::ldp(loaded),
        Command::Thm3demo(_) => commands::thm3demo(loaded),
        Command::Verify { level, inject_fault, .. } => {
            let v = loaded.config.verify.get_or_insert_with(VerifySection::default);
            if let Some(l) = level {
                v.level = Some(match l {
                    LevelArg::Quick => "quick".into(),
                    LevelArg::Full => "full".into(),
                });
            }
            if inject_fault.is_some() {
                v.inject_fault = Some("tile-coverage".into());
            }
            let level: Level = v.level.as_deref().unwrap_or("quick").parse().map_err(config::config_err)?;
            let tile_coverage = fault(v.inject_fault.as_deref())?;
            Ok(commands::verify(level, Faults { tile_coverage }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Folner(c) => ("folner", c),
        Command::Tile { common, .. } => ("tile", common),
        Command::Entropy(c) => ("entropy", c),
        Command::Ldp(c) => ("ldp", c),
        Command::Thm3demo(c) => ("thm3demo", c),
        Command::Verify { common, .. } => ("verify", common),
    };
    let fail = |dir: &Path, hash: Option<&str>, err: CliError| -> ExitCode {
        let record = Failure {
            command: name,
            version: VERSION,
            config_sha256: hash,
            exit_code: err.exit_code(),
            kind: err.kind(),
            stages: err.stages(),
            message: err.to_string(),
        };
        eprintln!("error: {err}");
        let body = serde_json::to_vec_pretty(&record).expect("failure record serializes");
        if let Err(e) = write(dir, "failure.json", &body) {
            eprintln!("error: could not write failure record: {e}");
        }
        ExitCode::from(record.exit_code)
    };
    let mut loaded = match load(common, name != "verify") {
        Ok(l) => l,
        Err(e) => return fail(&out_dir(common, None), None, e),
    };
    let dir = out_dir(common, Some(&loaded));
    let outcome = dispatch(&cli.command, &mut loaded);
    let hash = loaded.hash();
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return fail(&dir, Some(&hash), e),
    };
    let report = Report {
        command: name,
        version: VERSION,
        config_sha256: &hash,
        seed: loaded.config.seed,
        passed: outcome.passed,
        result: &outcome.result,
    };
    let mut body = serde_json::to_vec_pretty(&report).expect("report serializes");
    body.push(b'\n');
    let written = write(&dir, "report.json", &body).and_then(|_| write(&dir, "curves.csv", outcome.csv.as_bytes()));
    if let Err(e) = written {
        return fail(&dir, Some(&hash), e);
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    if outcome.passed {
        println!("wrote {}", dir.join("report.json").display());
        ExitCode::SUCCESS
    } else {
        fail(&dir, Some(&hash), CliError::Certificate(format!("{name} certificates failed; see report.json")))
    }
}
