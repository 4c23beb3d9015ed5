//! `defectforge` command line: synthesize single defects, generate corpora,
//! fit prototype banks, evaluate, and run the studio service.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use defectforge_core::DefectType;

pub use config::RunConfig;
pub use error::{CliError, EXIT_INVALID, EXIT_IO, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "defectforge", version, about = "Point-cloud defect synthesis and anomaly detection")]
pub struct Cli {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration (defaults when no --config) and exit.
    #[arg(long)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inject one defect into one cloud.
    Synth(SynthArgs),
    /// Generate a defect corpus as configured.
    Batch,
    /// Fit the normalization profile and prototype bank on normal clouds.
    Fit(FitArgs),
    /// Score a test set and write metrics plus per-cloud overlays.
    Eval(EvalArgs),
    /// Run the studio HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defect type; the rule template for it is used (or a model candidate with --use-model).
    #[arg(long = "type", conflicts_with = "instruction", required_unless_present = "instruction")]
    pub defect: Option<DefectType>,
    /// Instruction JSON file.
    #[arg(long)]
    pub instruction: Option<PathBuf>,
    /// Required with --type; overrides the instruction's seed otherwise.
    #[arg(long, required_unless_present = "instruction")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Profile JSON giving the length scale; fitted to the input cloud when absent.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Ask the endpoint named by DEFECTFORGE_LLM_URL for a candidate first.
    #[arg(long, requires = "defect")]
    pub use_model: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Overrides `paths.train`.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Overrides `paths.out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Overrides `paths.test`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Defaults to `<paths.out>/bank.json`.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Defaults to `<paths.out>/profile.json`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Where metrics and overlays go; overrides `paths.out` for outputs only.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; the ambient pool when absent.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Persist uploads and banks here.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Allowed CORS origin; any origin when absent.
    #[arg(long)]
    pub cors_origin: Option<String>,
    #[arg(long, default_value_t = 50 * 1024 * 1024)]
    pub upload_limit: usize,
    #[arg(long, default_value_t = 20_000)]
    pub preview_budget: usize,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Err(CliError::invalid("config", "this command needs --config")),
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    if cli.print_config {
        let text = match &cli.config {
            Some(p) => toml::to_string_pretty(&RunConfig::load(p)?).expect("config serializes"),
            None => RunConfig::default_toml(),
        };
        write!(stdout, "{text}").map_err(|e| CliError::io("cannot write stdout", e))?;
        return Ok(EXIT_OK);
    }
    let Some(command) = &cli.command else {
        return Err(CliError::invalid("usage", "no command given; see --help"));
    };
    match command {
        Command::Synth(a) => commands::cmd_synth(a, stdout),
        Command::Batch => commands::cmd_batch(&load_config(&cli)?, stdout),
        Command::Fit(a) => {
            let mut cfg = load_config(&cli)?;
            if let Some(t) = &a.train {
                cfg.paths.train = t.clone();
            }
            if let Some(o) = &a.out {
                cfg.paths.out = o.clone();
            }
            commands::cmd_fit(&cfg, stdout)
        }
        Command::Eval(a) => {
            let mut cfg = load_config(&cli)?;
            // artifact defaults follow the configured output dir, not --out
            let bank = a.bank.clone().unwrap_or_else(|| cfg.bank_path());
            let profile = a.profile.clone().unwrap_or_else(|| cfg.profile_path());
            if let Some(t) = &a.test {
                cfg.paths.test = t.clone();
            }
            if let Some(o) = &a.out {
                cfg.paths.out = o.clone();
            }
            commands::cmd_eval(&cfg, &bank, &profile, a.threads, stdout)
        }
        Command::Serve(a) => commands::cmd_serve(a, stdout),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Results go to `stdout`; failures are reported on `stderr` as JSON.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let err = CliError::invalid("usage", "invalid arguments").with_detail(serde_json::json!(e.to_string()));
            let _ = writeln!(stderr, "{}", err.to_json());
            return err.exit_code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json());
            e.exit_code
        }
    }
}
