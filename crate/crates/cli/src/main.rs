use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qfilter_core::filter::{LocationRule, Precision};

mod commands;
mod config;
mod output;
mod presets;

use config::CommandKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn from_core(e: qfilter_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }

    pub fn context(self, ctx: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{ctx}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{ctx}: {m}")),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<qfilter_core::Error> for CliError {
    fn from(e: qfilter_core::Error) -> Self {
        CliError::from_core(e)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Cp,
    Udd,
}

/// Filter functions and operational fidelities of single-qubit control under classical noise.
#[derive(Debug, Parser)]
#[command(name = "qfilter", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration; see `qfilter presets`.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory [default: $QFILTER_OUT_DIR, else the current directory].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    realizations: Option<usize>,
    #[arg(long, global = true, value_enum)]
    precision: Option<PrecisionArg>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Sample F_x, F_y, F_z on the log grid and fit the suppression order.
    Filter,
    /// First-order (and optionally higher-order) operational fidelity.
    Fidelity,
    /// Monte Carlo ensemble fidelity.
    Simulate,
    /// Analytic against Monte Carlo infidelity over a duration sweep.
    Compare,
    /// Print normalized pulse locations.
    Locations { rule: RuleArg, n: usize },
    /// Run a preset with the command it was written for.
    Figure { name: String },
    /// List built-in presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qfilter: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let kind = match &cli.command {
        Cmd::Locations { rule, n } => {
            let rule = match rule {
                RuleArg::Cp => LocationRule::Cp,
                RuleArg::Udd => LocationRule::Udd,
            };
            return commands::locations(rule, *n);
        }
        Cmd::Presets => {
            for name in presets::names() {
                println!("{name}");
            }
            return Ok(());
        }
        Cmd::Filter => Some(CommandKind::Filter),
        Cmd::Fidelity => Some(CommandKind::Fidelity),
        Cmd::Simulate => Some(CommandKind::Simulate),
        Cmd::Compare => Some(CommandKind::Compare),
        Cmd::Figure { .. } => None,
    };
    let preset = match &cli.command {
        Cmd::Figure { name } => {
            if cli.preset.is_some() || cli.config.is_some() {
                return Err(CliError::Config("`figure` takes the preset name only".into()));
            }
            Some(name.as_str())
        }
        _ => cli.preset.as_deref(),
    };
    let (raw, base, default_stem) = load(cli.config.as_deref(), preset)?;
    let mut cfg = config::resolve(raw, &base)?;
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(n) = cli.realizations {
        cfg.ensemble.realizations = n;
    }
    if let Some(p) = cli.precision {
        cfg.grid.precision = match p {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Extended => Precision::Extended,
        };
    }
    let kind = match kind.or(cfg.command) {
        Some(k) => k,
        None => return Err(CliError::Config("preset does not name a command".into())),
    };
    let dir = cli
        .out
        .or_else(|| cfg.output.dir.as_ref().map(|d| base.join(d)))
        .or_else(|| std::env::var_os("QFILTER_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let run = commands::Run {
        stem: cfg.output.stem.clone().unwrap_or(default_stem),
        out: output::OutDir::new(dir)?,
        cfg,
    };
    log::debug!("writing to {}", run.out.path().display());
    match kind {
        CommandKind::Filter => run.filter(),
        CommandKind::Fidelity => run.fidelity(),
        CommandKind::Simulate => run.simulate(),
        CommandKind::Compare => run.compare(),
    }
}

fn load(config: Option<&Path>, preset: Option<&str>) -> Result<(config::RunConfig, PathBuf, String), CliError> {
    match (config, preset) {
        (Some(path), None) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let raw = config::parse(&text, &path.display().to_string())?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let stem = path
                .file_stem()
                .map_or_else(|| "qfilter".to_string(), |s| s.to_string_lossy().into_owned());
            Ok((raw, base, stem))
        }
        (None, Some(name)) => {
            let (canonical, text) = presets::lookup(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown preset `{name}` (available: {})",
                    presets::names().collect::<Vec<_>>().join(", ")
                ))
            })?;
            Ok((config::parse(text, canonical)?, PathBuf::new(), canonical.to_string()))
        }
        (Some(_), Some(_)) => Err(CliError::Config("give either --config or --preset, not both".into())),
        (None, None) => Err(CliError::Config(
            "no configuration: pass --config <path> or --preset <name>".into(),
        )),
    }
}
