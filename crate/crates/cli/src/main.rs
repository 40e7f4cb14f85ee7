mod commands;
mod config;
mod data;
mod error;
mod figures;
mod svg;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commands::{Loaded, Source, TableFormat};
use config::RunConfig;
use error::{CliError, CliResult};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulate telomere shortening and estimate the initial length distribution.
#[derive(Parser)]
#[command(name = "telomere", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// INI run configuration
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (exponential, gamma, curse-k5, curse-k16, yeast)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory, overriding the config
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate lineages and write their senescence times
    Simulate(ConfigArgs),
    /// Estimate the initial length density from senescence data
    Estimate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Experimental senescence times (CSV with a time_hours column)
        #[arg(long, value_name = "PATH", conflicts_with_all = ["synthetic", "exact"])]
        data: Option<PathBuf>,
        /// Cell-cycle durations used to estimate the division rate
        #[arg(long, value_name = "PATH", requires = "data")]
        divisions: Option<PathBuf>,
        /// Use simulated senescence times (the default)
        #[arg(long, conflicts_with = "exact")]
        synthetic: bool,
        /// Use the exact senescence-time law of the model
        #[arg(long)]
        exact: bool,
    },
    /// Compare simulation, closed forms and the grid solver
    Crosscheck(ConfigArgs),
    /// Tabulate the error bound constants
    Bounds {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Regenerate a figure by id, or all of them with `all`
    Figures {
        #[arg(required_unless_present = "list")]
        id: Option<String>,
        /// Print the figure ids
        #[arg(long)]
        list: bool,
        #[arg(long, value_name = "DIR", default_value = "figures")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(args: &ConfigArgs) -> CliResult<Loaded> {
    match (&args.config, &args.preset) {
        (Some(path), _) => {
            let config = RunConfig::load(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok(Loaded { config, base })
        }
        (None, Some(name)) => Ok(Loaded { config: config::preset(name)?, base: PathBuf::from(".") }),
        (None, None) => Ok(Loaded { config: RunConfig::default(), base: PathBuf::from(".") }),
    }
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Simulate(a) => {
            let l = load(&a)?;
            commands::simulate(&l, &l.output_dir(a.out.as_deref()))
        }
        Command::Estimate { cfg, data, divisions, exact, .. } => {
            let l = load(&cfg)?;
            let source = match data {
                Some(data) => Source::Experimental { data, divisions },
                None if exact => Source::Exact,
                None => Source::Synthetic,
            };
            commands::estimate(&l, source, &l.output_dir(cfg.out.as_deref()))
        }
        Command::Crosscheck(a) => {
            let l = load(&a)?;
            commands::crosscheck(&l, &l.output_dir(a.out.as_deref()))
        }
        Command::Bounds { cfg, format } => {
            let l = load(&cfg)?;
            let format = match format {
                FormatArg::Text => TableFormat::Text,
                FormatArg::Csv => TableFormat::Csv,
            };
            commands::bounds(&l, format, &l.output_dir(cfg.out.as_deref()))
        }
        Command::Figures { id, list, out, seed } => {
            if list {
                return Ok(figures::FIGURE_IDS.iter().map(|s| format!("{s}\n")).collect());
            }
            let id = id.ok_or_else(|| CliError::Config("missing figure id".into()))?;
            let files = figures::figures(&id, &out, seed)?;
            Ok(files.iter().map(|p| format!("wrote {}\n", p.display())).collect())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
