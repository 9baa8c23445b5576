//! Command-line front end. Exit codes: 0 success, 1 partial failure,
//! 2 configuration or usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use proact_core::evaluation::render_report_table;

use crate::app::{build_report, pipeline_config, run_eval, run_judge, run_synth, Channels, TransportFactory};
use crate::config::{ConfigError, FileConfig, FlagOverlay, Settings};
use crate::gateway::CassetteMode;
use crate::io::{read_jsonl, resolve_distribution, resolve_scenarios, write_jsonl, write_text, IoError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "proact", version, about = "Simulate, judge and synthesize proactive agent dialogs")]
pub struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a ShareGPT dataset with critic-gated self-play.
    Synth(RunArgs),
    /// Run dialogs against an agent and write transcripts.
    Eval(RunArgs),
    /// Judge stored transcripts.
    Judge(JudgeArgs),
    /// Aggregate judgments into a report.
    Report(ReportArgs),
    /// Re-run an eval from a cassette without network access.
    Replay(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `builtin:test`, `builtin:train`, `builtin:<set>:sp,sn,cp,cn`, a JSON
    /// distribution file or a JSONL scenario file.
    #[arg(long)]
    pub scenarios: Option<String>,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
    /// Base URL of a chat-completions server, `oracle` or `fixture:<name>`.
    #[arg(long)]
    pub agent_endpoint: Option<String>,
    #[arg(long)]
    pub agent_model: Option<String>,
    #[arg(long)]
    pub user_endpoint: Option<String>,
    /// Play the user with this model instead of the scripted user.
    #[arg(long)]
    pub user_model: Option<String>,
    #[arg(long)]
    pub critic_model: Option<String>,
    /// Agent sampling temperature [default: 0.2]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Re-solicitations after an unparsable agent reply [default: 2]
    #[arg(long)]
    pub parse_retries: Option<u32>,
    /// Turn cap for both tiers [default: 20 simple, 28 complex]
    #[arg(long)]
    pub max_turns: Option<u32>,
    /// Use the guided agent system prompt.
    #[arg(long)]
    pub guided: bool,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub cassette_mode: Option<CassetteMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Transcript JSONL written by `eval`.
    #[arg(long)]
    pub transcripts: PathBuf,
    /// Scenario set the transcripts were run on.
    #[arg(long)]
    pub scenarios: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Judgment JSONL output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Judgment JSONL written by `judge`.
    #[arg(long)]
    pub judgments: PathBuf,
    /// Write the JSON report here as well as printing the table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Input(IoError),
    #[error(transparent)]
    Output(IoError),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) | Failure::Input(_) => EXIT_CONFIG,
            Failure::Output(_) => EXIT_PARTIAL,
        }
    }
}

impl RunArgs {
    fn overlay(&self) -> FlagOverlay {
        FlagOverlay {
            scenarios: self.scenarios.clone(),
            seed: self.seed,
            workers: self.workers,
            cassette: self.cassette.clone(),
            cassette_mode: self.cassette_mode,
            agent_endpoint: self.agent_endpoint.clone(),
            agent_model: self.agent_model.clone(),
            user_endpoint: self.user_endpoint.clone(),
            user_model: self.user_model.clone(),
            critic_model: self.critic_model.clone(),
            temperature: self.temperature,
            parse_retries: self.parse_retries,
            max_turns: self.max_turns,
            guided: self.guided,
        }
    }
}

fn settings(config: Option<&Path>, flags: &FlagOverlay) -> Result<Settings, ConfigError> {
    let file = match config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    Settings::resolve(&file, flags)
}

fn scenarios_name(s: &Settings) -> Result<&str, ConfigError> {
    s.scenarios.as_deref().ok_or_else(|| ConfigError::Invalid("no scenario set given (--scenarios)".into()))
}

fn report_failures(out: &mut dyn Write, what: &str, failures: &[(String, String)]) {
    for (name, why) in failures {
        let _ = writeln!(out, "{what} {name}: {why}");
    }
}

fn eval(args: &RunArgs, config: Option<&Path>, replay: bool, factory: &TransportFactory<'_>, err: &mut dyn Write) -> Result<i32, Failure> {
    let mut flags = args.overlay();
    if replay {
        if flags.cassette.is_none() {
            return Err(ConfigError::Invalid("replay needs --cassette".into()).into());
        }
        flags.cassette_mode = Some(CassetteMode::Replay);
    }
    let s = settings(config, &flags)?;
    let items = resolve_scenarios(scenarios_name(&s)?, s.seed).map_err(Failure::Input)?;
    let channels = Channels::build(&s, factory)?;
    let outcome = run_eval(&s, &items, &channels)?;
    write_jsonl(&args.out, &outcome.records).map_err(Failure::Output)?;
    report_failures(err, "dialog failed", &outcome.failures);
    let _ = writeln!(err, "{} transcripts written to {}", outcome.records.len(), args.out.display());
    Ok(if outcome.failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn synth(args: &RunArgs, config: Option<&Path>, factory: &TransportFactory<'_>, err: &mut dyn Write) -> Result<i32, Failure> {
    let s = settings(config, &args.overlay())?;
    let requests = resolve_distribution(scenarios_name(&s)?).map_err(Failure::Input)?;
    let cfg = pipeline_config(&s, requests);
    let channels = Channels::build(&s, factory)?;
    let outcome = run_synth(&s, &cfg, &channels)?;
    write_jsonl(&args.out, &outcome.records).map_err(Failure::Output)?;
    let prov = args.out.with_extension("provenance.jsonl");
    write_jsonl(&prov, &outcome.provenance).map_err(Failure::Output)?;
    let dropped = outcome.provenance.iter().filter(|p| p.dropped).count();
    let _ = writeln!(err, "{} records written to {} ({dropped} dropped)", outcome.records.len(), args.out.display());
    match outcome.aborted {
        Some(a) => {
            let _ = writeln!(err, "batch aborted at {a}");
            Ok(EXIT_PARTIAL)
        }
        None => Ok(EXIT_OK),
    }
}

fn judge(args: &JudgeArgs, config: Option<&Path>, err: &mut dyn Write) -> Result<i32, Failure> {
    let flags = FlagOverlay { scenarios: args.scenarios.clone(), seed: args.seed, ..FlagOverlay::default() };
    let s = settings(config, &flags)?;
    let items = resolve_scenarios(scenarios_name(&s)?, s.seed).map_err(Failure::Input)?;
    let records = read_jsonl(&args.transcripts).map_err(Failure::Input)?;
    let outcome = run_judge(&records, &items);
    write_jsonl(&args.out, &outcome.judgments).map_err(Failure::Output)?;
    report_failures(err, "refused", &outcome.refused);
    Ok(if outcome.refused.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let records = read_jsonl(&args.judgments).map_err(Failure::Input)?;
    let r = build_report(&records);
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&r).expect("report serializes");
        write_text(path, &(json + "\n")).map_err(Failure::Output)?;
    }
    let _ = write!(out, "{}", render_report_table(&r));
    if let Some(h) = &r.config_hash {
        let _ = writeln!(out, "config {h}");
    }
    Ok(EXIT_OK)
}

/// Parses `args` and runs the command. `factory` supplies transports for
/// remote endpoints.
pub fn run_with<I, T>(args: I, factory: &TransportFactory<'_>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Synth(a) => synth(a, config, factory, err),
        Command::Eval(a) => eval(a, config, false, factory, err),
        Command::Replay(a) => eval(a, config, true, factory, err),
        Command::Judge(a) => judge(a, config, err),
        Command::Report(a) => report(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}
