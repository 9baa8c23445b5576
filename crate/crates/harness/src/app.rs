//! The work behind each CLI command, kept free of argument parsing so tests
//! can drive it with fake transports.

use std::collections::HashMap;
use std::sync::Arc;

use log::{info, warn};
use proact_core::actors::{
    AgentAdapter, FixtureAgent, LlmAgent, LlmUser, OracleAgent, ScriptedUser, UserAdapter,
};
use proact_core::chat::{ChannelError, ChatChannel, ChatRequest};
use proact_core::evaluation::{aggregate_report, judge_dialog, BenchmarkReport};
use proact_core::orchestrator::{run_dialog, DialogSpec, Transcript};
use proact_core::synthesis::{
    plan_samples, run_sample, BatchAbort, LlmActors, OfflineActors, PipelineConfig, ProvenanceEntry, SampleActors,
    SampleOutcome, ScenarioRequest, ShareGptRecord,
};

use crate::batch::{run_ordered, run_until};
use crate::config::{AgentSource, ConfigError, RoleSettings, Settings};
use crate::gateway::{Cassette, CassetteMode, Gateway, HttpTransport, Transport};
use crate::io::{EvalItem, JudgmentRecord, TranscriptRecord};

/// Builds the transport for one role endpoint.
pub type TransportFactory<'a> = dyn Fn(&str, &RoleSettings) -> Result<Box<dyn Transport>, ChannelError> + 'a;

pub fn http_factory(endpoint: &str, role: &RoleSettings) -> Result<Box<dyn Transport>, ChannelError> {
    Ok(Box::new(HttpTransport::new(endpoint, role.timeout())?))
}

/// One gateway per remote role, all sharing the cassette if one is set.
pub struct Channels {
    pub agent: Option<Gateway>,
    pub user: Option<Gateway>,
    pub critic: Option<Gateway>,
    pub cassette: Option<Arc<Cassette>>,
}

impl Channels {
    pub fn build(settings: &Settings, factory: &TransportFactory<'_>) -> Result<Channels, ConfigError> {
        let cassette = match &settings.cassette {
            Some(p) => Some(Arc::new(
                Cassette::open(p, settings.cassette_mode).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            )),
            None if settings.cassette_mode == CassetteMode::Replay => {
                return Err(ConfigError::Invalid("replay needs --cassette".into()))
            }
            None => None,
        };
        let agent_url = match settings.agent_source()? {
            Some(AgentSource::Remote { endpoint }) => Some(endpoint),
            _ => None,
        };
        let gateway = |url: Option<&String>, role: &RoleSettings| -> Result<Option<Gateway>, ConfigError> {
            let Some(url) = url else { return Ok(None) };
            let transport = factory(url, role).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let mut gw = Gateway::new(transport, role.retry_policy(), role.in_flight);
            if let Some(c) = &cassette {
                gw = gw.with_cassette(c.clone());
            }
            Ok(Some(gw))
        };
        let user_url = settings.user.endpoint.clone().or_else(|| agent_url.clone());
        let critic_url = settings.critic.endpoint.clone().or_else(|| agent_url.clone());
        Ok(Channels {
            agent: gateway(agent_url.as_ref(), &settings.agent)?,
            user: gateway(user_url.as_ref(), &settings.user)?,
            critic: gateway(critic_url.as_ref(), &settings.critic)?,
            cassette,
        })
    }
}

/// Routes requests to the user or critic gateway by model name, and
/// everything else to the agent gateway.
struct Router<'a> {
    channels: &'a Channels,
    user_model: String,
    critic_model: String,
}

impl ChatChannel for Router<'_> {
    fn complete(&self, req: &ChatRequest) -> Result<String, ChannelError> {
        let c = self.channels;
        let gw = if req.model == self.critic_model && c.critic.is_some() {
            c.critic.as_ref()
        } else if req.model == self.user_model && c.user.is_some() {
            c.user.as_ref()
        } else {
            c.agent.as_ref()
        };
        gw.ok_or_else(|| ChannelError::InvalidRequest("no endpoint configured".into()))?.complete(req)
    }
}

#[derive(Debug, Default)]
pub struct EvalOutcome {
    pub records: Vec<TranscriptRecord>,
    /// Dialogs that could not be run, with the reason.
    pub failures: Vec<(String, String)>,
}

fn remote_model(role: &RoleSettings, what: &str) -> Result<String, ConfigError> {
    role.model.clone().ok_or_else(|| ConfigError::Invalid(format!("{what} endpoint is remote but no model is set")))
}

pub fn run_eval(settings: &Settings, items: &[EvalItem], channels: &Channels) -> Result<EvalOutcome, ConfigError> {
    let source = settings
        .agent_source()?
        .ok_or_else(|| ConfigError::Invalid("eval needs --agent-endpoint (a URL, `oracle` or `fixture:<name>`)".into()))?;
    let agent_model = match source {
        AgentSource::Remote { .. } => Some(remote_model(&settings.agent, "agent")?),
        _ => None,
    };
    if settings.user.model.is_some() && channels.user.is_none() {
        return Err(ConfigError::Invalid("--user-model needs a user endpoint or a remote agent endpoint".into()));
    }
    let hash = settings.config_hash();
    let results = run_ordered(items, settings.workers, |item| -> Result<Transcript, String> {
        let sb = &item.scenario;
        let (tier, branch) = (item.tier, item.branch);
        let oracle = OracleAgent { scenario: sb, tier, branch };
        let agent: Box<dyn AgentAdapter + '_> = match (&source, &channels.agent) {
            (AgentSource::Remote { .. }, Some(gw)) => {
                Box::new(LlmAgent { channel: gw, model: agent_model.clone().expect("checked above") })
            }
            (AgentSource::Fixture { .. }, _) => {
                Box::new(FixtureAgent { kind: source.fixture().expect("parsed"), oracle })
            }
            _ => Box::new(oracle),
        };
        let user: Box<dyn UserAdapter + '_> = match (&settings.user.model, &channels.user) {
            (Some(model), Some(gw)) => Box::new(LlmUser {
                channel: gw,
                model: model.clone(),
                temperature: settings.run.temperature,
                scenario: sb,
            }),
            _ => Box::new(ScriptedUser::new(sb).map_err(|e| e.to_string())?),
        };
        let spec = DialogSpec { scenario: sb, scenario_ref: &item.scenario_ref, tier, branch, config: &settings.run };
        let t = run_dialog(&spec, agent.as_ref(), user.as_ref()).map_err(|e| e.to_string())?;
        info!("{}: {:?} after {} turns", item.scenario_ref, t.ending, t.turn_count());
        Ok(t)
    });
    let mut out = EvalOutcome::default();
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(t) => out.records.push(TranscriptRecord::from_transcript(&t, &hash)),
            Err(e) => {
                warn!("{}: {e}", item.scenario_ref);
                out.failures.push((item.scenario_ref.clone(), e));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct JudgeOutcome {
    pub judgments: Vec<JudgmentRecord>,
    pub refused: Vec<(String, String)>,
}

pub fn run_judge(records: &[TranscriptRecord], items: &[EvalItem]) -> JudgeOutcome {
    let by_ref: HashMap<&str, &EvalItem> = items.iter().map(|i| (i.scenario_ref.as_str(), i)).collect();
    let mut out = JudgeOutcome::default();
    for r in records {
        let name = &r.metadata.scenario_ref;
        let Some(item) = by_ref.get(name.as_str()) else {
            out.refused.push((name.clone(), "scenario not found in the scenario set".into()));
            continue;
        };
        match judge_dialog(&r.to_transcript(), &item.scenario) {
            Ok(judgment) => {
                out.judgments.push(JudgmentRecord { judgment, config_hash: Some(r.metadata.config_hash.clone()) })
            }
            Err(e) => out.refused.push((name.clone(), e.to_string())),
        }
    }
    out
}

/// Aggregate report; the config hash is kept when every judgment agrees.
pub fn build_report(records: &[JudgmentRecord]) -> BenchmarkReport {
    let js: Vec<_> = records.iter().map(|r| r.judgment.clone()).collect();
    let mut report = aggregate_report(&js);
    let mut hashes = records.iter().map(|r| r.config_hash.as_deref());
    if let Some(first) = hashes.next() {
        if hashes.all(|h| h == first) {
            report.config_hash = first.map(str::to_string);
        }
    }
    report
}

#[derive(Debug, Default)]
pub struct SynthOutcome {
    pub records: Vec<ShareGptRecord>,
    pub provenance: Vec<ProvenanceEntry>,
    pub aborted: Option<BatchAbort>,
}

pub fn pipeline_config(settings: &Settings, requests: Vec<ScenarioRequest>) -> PipelineConfig {
    PipelineConfig {
        requests,
        regeneration_budget: settings.synth.regeneration_budget,
        threshold: settings.synth.threshold,
        generation_temperature: settings.synth.generation_temperature,
        seed: settings.seed,
        run: settings.run.clone(),
    }
}

/// Samples run concurrently; results keep plan order. The first batch
/// abort stops new samples and everything before it is kept.
pub fn run_synth(settings: &Settings, cfg: &PipelineConfig, channels: &Channels) -> Result<SynthOutcome, ConfigError> {
    let plans = plan_samples(cfg).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let remote = match settings.agent_source()? {
        None | Some(AgentSource::Oracle) => None,
        Some(AgentSource::Remote { .. }) => {
            let agent = remote_model(&settings.agent, "agent")?;
            let user = settings.user.model.clone().unwrap_or_else(|| agent.clone());
            let critic = settings.critic.model.clone().unwrap_or_else(|| agent.clone());
            Some((agent, user, critic))
        }
        Some(AgentSource::Fixture { .. }) => {
            return Err(ConfigError::Invalid("synth runs with `oracle` or a remote agent".into()))
        }
    };
    let router = remote.as_ref().map(|(_, user, critic)| Router {
        channels,
        user_model: user.clone(),
        critic_model: critic.clone(),
    });
    let results = run_until(
        &plans,
        settings.workers,
        |plan| -> Result<SampleOutcome, BatchAbort> {
            match (&remote, &router) {
                (Some((agent, user, critic)), Some(router)) => {
                    let actors = LlmActors::new(router, agent, user, critic, cfg.generation_temperature);
                    run_sample(plan, cfg, &actors as &dyn SampleActors)
                }
                _ => run_sample(plan, cfg, &OfflineActors),
            }
        },
        |r| r.is_err(),
    );
    let mut out = SynthOutcome::default();
    for r in results {
        match r {
            Some(Ok(o)) => {
                out.records.extend(o.record);
                out.provenance.push(o.provenance);
            }
            Some(Err(abort)) => {
                warn!("batch aborted: {abort}");
                out.aborted = Some(abort);
                break;
            }
            None => break,
        }
    }
    Ok(out)
}
