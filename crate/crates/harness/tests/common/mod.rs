#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use proact::app::{build_report, run_eval, run_judge, Channels};
use proact::config::{FileConfig, FlagOverlay, RoleSettings, Settings};
use proact::gateway::{CassetteMode, NoTransport, Transport};
use proact::io::{resolve_scenarios, to_jsonl, EvalItem};
use proact_core::chat::{hash_request, ChannelError, ChatRequest};
use proact_core::json::Json;
use proact_core::protocol::{AgentResponse, ProactiveAction, TaskDescription, TaskStatus, TriggerCondition};

/// Stand-in for a remote model: the reply is a pure function of the
/// request, mixing valid protocol replies with occasional prose.
pub struct RuleModel {
    pub calls: Arc<AtomicUsize>,
}

impl RuleModel {
    pub fn new() -> (RuleModel, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        (RuleModel { calls: calls.clone() }, calls)
    }
}

pub fn rule_reply(req: &ChatRequest) -> String {
    let h = hash_request(req);
    let pick = u64::from_str_radix(&h[..8], 16).unwrap();
    if pick.is_multiple_of(11) {
        return "I will get back to you on that.".into();
    }
    let action = ProactiveAction::ALL[(pick / 11) as usize % ProactiveAction::ALL.len()];
    let closing = action == ProactiveAction::CompleteTask;
    AgentResponse {
        response_text: format!("reply {}", &h[..6]),
        proactive_action: action,
        trigger_condition: if action == ProactiveAction::SetReminder {
            TriggerCondition::event("a matching offer appears")
        } else {
            TriggerCondition::none()
        },
        task_description: TaskDescription {
            intention: (!closing).then(|| "help the user".into()),
            constraints: (!closing).then(|| vec![("request".into(), Json::str("as asked"))]),
            status: Some(match action {
                ProactiveAction::CompleteTask => TaskStatus::Completed,
                ProactiveAction::KeepSilent => TaskStatus::InProgress,
                _ => TaskStatus::Pending,
            }),
            extra: vec![],
        },
        extra: vec![],
    }
    .render()
}

impl Transport for RuleModel {
    fn send(&self, req: &ChatRequest) -> Result<String, ChannelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(rule_reply(req))
    }
}

/// Fails with a transient error `failures` times, then answers.
pub struct Flaky {
    pub failures: usize,
    pub calls: Arc<AtomicUsize>,
}

impl Transport for Flaky {
    fn send(&self, req: &ChatRequest) -> Result<String, ChannelError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            Err(ChannelError::Transport(format!("connection reset (attempt {})", n + 1)))
        } else {
            Ok(rule_reply(req))
        }
    }
}

pub fn remote_settings(cassette: &std::path::Path, mode: CassetteMode, workers: usize) -> Settings {
    let flags = FlagOverlay {
        scenarios: Some("builtin:test:2,2,1,1".into()),
        agent_endpoint: Some("http://127.0.0.1:9/v1".into()),
        agent_model: Some("rule-model".into()),
        cassette: Some(cassette.to_path_buf()),
        cassette_mode: Some(mode),
        workers: Some(workers),
        ..FlagOverlay::default()
    };
    Settings::resolve(&FileConfig::default(), &flags).unwrap()
}

pub fn offline_factory(_: &str, _: &RoleSettings) -> Result<Box<dyn Transport>, ChannelError> {
    Ok(Box::new(NoTransport))
}

/// Eval, judge and report as JSONL and pretty JSON text.
pub fn eval_artifacts(settings: &Settings, items: &[EvalItem], channels: &Channels) -> (String, String) {
    let out = run_eval(settings, items, channels).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    let judged = run_judge(&out.records, items);
    assert!(judged.refused.is_empty(), "{:?}", judged.refused);
    let report = serde_json::to_string_pretty(&build_report(&judged.judgments)).unwrap();
    (to_jsonl(&out.records), report)
}

pub fn items(settings: &Settings) -> Vec<EvalItem> {
    resolve_scenarios(settings.scenarios.as_deref().unwrap(), settings.seed).unwrap()
}
