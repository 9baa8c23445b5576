//! TOML configuration file, command-line overlays and the resolved
//! settings every command runs with. Flags win over the file, the file
//! wins over defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use proact_core::actors::FixtureKind;
use proact_core::chat::sha256_hex;
use proact_core::orchestrator::RunConfig;
use proact_core::synthesis::{DEFAULT_REGENERATION_BUDGET, PASS_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::gateway::{CassetteMode, RetryPolicy, DEFAULT_IN_FLIGHT, DEFAULT_RETRY_BUDGET, DEFAULT_TIMEOUT_SECS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("config file {0}: {1}")]
    Parse(PathBuf, toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Per-role connection settings (`[agent]`, `[user]`, `[critic]`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleFile {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retry_budget: Option<u32>,
    pub in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub temperature: Option<f64>,
    pub parse_retries: Option<u32>,
    pub max_turns_simple: Option<u32>,
    pub max_turns_complex: Option<u32>,
    pub guided: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub regeneration_budget: Option<u32>,
    pub threshold: Option<u32>,
    pub generation_temperature: Option<f64>,
}

/// Layout of the config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenarios: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub cassette: Option<PathBuf>,
    pub cassette_mode: Option<CassetteMode>,
    #[serde(default)]
    pub run: RunFile,
    #[serde(default)]
    pub agent: RoleFile,
    #[serde(default)]
    pub user: RoleFile,
    #[serde(default)]
    pub critic: RoleFile,
    #[serde(default)]
    pub synth: SynthFile,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(path.to_path_buf(), e))
    }
}

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagOverlay {
    pub scenarios: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub cassette: Option<PathBuf>,
    pub cassette_mode: Option<CassetteMode>,
    pub agent_endpoint: Option<String>,
    pub agent_model: Option<String>,
    pub user_endpoint: Option<String>,
    pub user_model: Option<String>,
    pub critic_model: Option<String>,
    pub temperature: Option<f64>,
    pub parse_retries: Option<u32>,
    pub max_turns: Option<u32>,
    pub guided: bool,
}

/// Who plays the agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentSource {
    Oracle,
    Fixture { name: String },
    Remote { endpoint: String },
}

impl AgentSource {
    pub fn parse(s: &str) -> Result<AgentSource, ConfigError> {
        if s == "oracle" {
            return Ok(AgentSource::Oracle);
        }
        if let Some(name) = s.strip_prefix("fixture:") {
            return match FixtureKind::from_name(name) {
                Some(_) => Ok(AgentSource::Fixture { name: name.to_string() }),
                None => Err(ConfigError::Invalid(format!("unknown fixture agent {name:?}"))),
            };
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(AgentSource::Remote { endpoint: s.to_string() });
        }
        Err(ConfigError::Invalid(format!("agent endpoint {s:?} is neither a URL, `oracle` nor `fixture:<name>`")))
    }

    pub fn fixture(&self) -> Option<FixtureKind> {
        match self {
            AgentSource::Fixture { name } => FixtureKind::from_name(name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleSettings {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    #[serde(skip)]
    pub timeout_secs: u64,
    #[serde(skip)]
    pub retry_budget: u32,
    #[serde(skip)]
    pub in_flight: usize,
}

impl RoleSettings {
    fn resolve(file: &RoleFile, endpoint: Option<String>, model: Option<String>) -> RoleSettings {
        RoleSettings {
            endpoint: endpoint.or_else(|| file.endpoint.clone()),
            model: model.or_else(|| file.model.clone()),
            timeout_secs: file.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS),
            retry_budget: file.retry_budget.unwrap_or(DEFAULT_RETRY_BUDGET),
            in_flight: file.in_flight.unwrap_or(DEFAULT_IN_FLIGHT).max(1),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { budget: self.retry_budget, ..RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSettings {
    pub regeneration_budget: u32,
    pub threshold: u32,
    pub generation_temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub scenarios: Option<String>,
    pub seed: u64,
    pub run: RunConfig,
    pub agent: RoleSettings,
    pub user: RoleSettings,
    pub critic: RoleSettings,
    pub synth: SynthSettings,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub cassette: Option<PathBuf>,
    #[serde(skip)]
    pub cassette_mode: CassetteMode,
}

fn default_workers(in_flight: usize) -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    cores.min(in_flight).max(1)
}

impl Settings {
    pub fn resolve(file: &FileConfig, flags: &FlagOverlay) -> Result<Settings, ConfigError> {
        let defaults = RunConfig::default();
        let mut run = RunConfig {
            max_turns_simple: file.run.max_turns_simple.unwrap_or(defaults.max_turns_simple),
            max_turns_complex: file.run.max_turns_complex.unwrap_or(defaults.max_turns_complex),
            parse_retries: flags.parse_retries.or(file.run.parse_retries).unwrap_or(defaults.parse_retries),
            temperature: flags.temperature.or(file.run.temperature).unwrap_or(defaults.temperature),
            guided: flags.guided || file.run.guided.unwrap_or(defaults.guided),
        };
        if let Some(m) = flags.max_turns {
            run.max_turns_simple = m;
            run.max_turns_complex = m;
        }
        run.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let agent = RoleSettings::resolve(&file.agent, flags.agent_endpoint.clone(), flags.agent_model.clone());
        let user = RoleSettings::resolve(&file.user, flags.user_endpoint.clone(), flags.user_model.clone());
        let critic = RoleSettings::resolve(&file.critic, None, flags.critic_model.clone());
        if let Some(e) = &agent.endpoint {
            AgentSource::parse(e)?;
        }
        let synth = SynthSettings {
            regeneration_budget: file.synth.regeneration_budget.unwrap_or(DEFAULT_REGENERATION_BUDGET),
            threshold: file.synth.threshold.unwrap_or(PASS_THRESHOLD),
            generation_temperature: file.synth.generation_temperature.unwrap_or(0.7),
        };
        if synth.threshold > 100 {
            return Err(ConfigError::Invalid(format!("threshold {} exceeds 100", synth.threshold)));
        }
        if !(0.0..=2.0).contains(&synth.generation_temperature) {
            return Err(ConfigError::Invalid("generation_temperature must lie in [0, 2]".into()));
        }
        let workers = match flags.workers.or(file.workers) {
            Some(0) => return Err(ConfigError::Invalid("workers must be at least 1".into())),
            Some(n) => n,
            None => default_workers(agent.in_flight),
        };
        let cassette = flags.cassette.clone().or_else(|| file.cassette.clone());
        let cassette_mode = flags.cassette_mode.or(file.cassette_mode).unwrap_or(CassetteMode::Record);
        Ok(Settings {
            scenarios: flags.scenarios.clone().or_else(|| file.scenarios.clone()),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            run,
            agent,
            user,
            critic,
            synth,
            workers,
            cassette,
            cassette_mode,
        })
    }

    pub fn agent_source(&self) -> Result<Option<AgentSource>, ConfigError> {
        self.agent.endpoint.as_deref().map(AgentSource::parse).transpose()
    }

    /// Digest of every setting that can change dialog content. Worker
    /// count and cassette location are left out.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("settings serialize");
        sha256_hex(json.as_bytes())[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = r#"
scenarios = "builtin:test"
seed = 7
workers = 3

[run]
temperature = 0.5
max_turns_simple = 22

[agent]
endpoint = "https://api.example.com/v1"
model = "file-model"
retry_budget = 5

[synth]
threshold = 80
"#;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str(FILE).unwrap();
        let flags = FlagOverlay { agent_model: Some("flag-model".into()), seed: Some(9), ..FlagOverlay::default() };
        let s = Settings::resolve(&file, &flags).unwrap();
        assert_eq!(s.agent.model.as_deref(), Some("flag-model"));
        assert_eq!(s.agent.retry_budget, 5);
        assert_eq!(s.seed, 9);
        assert_eq!(s.workers, 3);
        assert_eq!(s.run.temperature, 0.5);
        assert_eq!(s.run.max_turns_simple, 22);
        assert_eq!(s.run.max_turns_complex, 28);
        assert_eq!(s.run.parse_retries, 2);
        assert_eq!(s.synth.threshold, 80);
        assert_eq!(s.scenarios.as_deref(), Some("builtin:test"));
    }

    #[test]
    fn defaults_without_file() {
        let s = Settings::resolve(&FileConfig::default(), &FlagOverlay::default()).unwrap();
        assert_eq!(s.run, RunConfig::default());
        assert_eq!(s.agent.retry_budget, 3);
        assert_eq!(s.synth.threshold, 75);
        assert_eq!(s.cassette_mode, CassetteMode::Record);
        assert!(s.workers >= 1);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[agent]\napi_key = \"x\"").is_err());
        let flags = FlagOverlay { max_turns: Some(5), ..FlagOverlay::default() };
        assert!(Settings::resolve(&FileConfig::default(), &flags).is_err());
        let flags = FlagOverlay { agent_endpoint: Some("ftp://x".into()), ..FlagOverlay::default() };
        assert!(Settings::resolve(&FileConfig::default(), &flags).is_err());
    }

    #[test]
    fn agent_sources() {
        assert_eq!(AgentSource::parse("oracle").unwrap(), AgentSource::Oracle);
        assert_eq!(AgentSource::parse("fixture:non_json").unwrap().fixture(), Some(FixtureKind::NonJson));
        assert!(AgentSource::parse("fixture:nope").is_err());
    }

    #[test]
    fn hash_ignores_workers_and_cassette() {
        let a = Settings::resolve(&FileConfig::default(), &FlagOverlay::default()).unwrap();
        let flags = FlagOverlay { workers: Some(17), cassette: Some("x.jsonl".into()), ..FlagOverlay::default() };
        let b = Settings::resolve(&FileConfig::default(), &flags).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let flags = FlagOverlay { temperature: Some(0.3), ..FlagOverlay::default() };
        let c = Settings::resolve(&FileConfig::default(), &flags).unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }
}
