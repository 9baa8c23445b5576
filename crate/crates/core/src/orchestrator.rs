//! Dialog loop: phases, endings, retries and the transcript it produces.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::actors::{ActorError, AgentAdapter, UserAdapter, UserUtterance};
use crate::protocol::{
    parse_agent_response, parse_observation, serialize_observation, validate_agent_response, AgentResponse, Finding,
    ObservationMessage, ObservationSource, ParseFailureKind, ProactiveAction,
};
use crate::runtime::{
    monitor_tick, next_user_kind, retrieval_snapshot, DialogContext, LastInput, ReminderRegistry, UserKind,
};
use crate::scenario::{validate_scenario, Branch, ScenarioBackground, ScenarioError, ScenarioIssue, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    ActiveInquiry,
    ConstraintRefinement,
    Dormant,
    FirstWakeup,
    ShiftRefinement,
    SecondDormant,
    SecondWakeup,
    Terminal,
}

impl Phase {
    pub fn is_dormant(self) -> bool {
        matches!(self, Phase::Dormant | Phase::SecondDormant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EndingReason {
    MissionFinishedProperly,
    AgentResponseJsonExtractionFailed,
    AgentResponseFormatError,
    TriggerConditionFormatError,
    TaskDescriptionFormatError,
    FailedOpeningIntentionShiftPhase,
    MaxTurnsReached,
    ArbitraryCompletion,
    PrematureSilence,
}

impl EndingReason {
    pub const ALL: [EndingReason; 9] = [
        EndingReason::MissionFinishedProperly,
        EndingReason::AgentResponseJsonExtractionFailed,
        EndingReason::AgentResponseFormatError,
        EndingReason::TriggerConditionFormatError,
        EndingReason::TaskDescriptionFormatError,
        EndingReason::FailedOpeningIntentionShiftPhase,
        EndingReason::MaxTurnsReached,
        EndingReason::ArbitraryCompletion,
        EndingReason::PrematureSilence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EndingReason::MissionFinishedProperly => "MISSION_FINISHED_PROPERLY",
            EndingReason::AgentResponseJsonExtractionFailed => "AGENT_RESPONSE_JSON_EXTRACTION_FAILED",
            EndingReason::AgentResponseFormatError => "AGENT_RESPONSE_FORMAT_ERROR",
            EndingReason::TriggerConditionFormatError => "TRIGGER_CONDITION_FORMAT_ERROR",
            EndingReason::TaskDescriptionFormatError => "TASK_DESCRIPTION_FORMAT_ERROR",
            EndingReason::FailedOpeningIntentionShiftPhase => "FAILED_OPENING_INTENTION_SHIFT_PHASE",
            EndingReason::MaxTurnsReached => "MAX_TURNS_REACHED",
            EndingReason::ArbitraryCompletion => "ARBITRARY_COMPLETION",
            EndingReason::PrematureSilence => "PREMATURE_SILENCE",
        }
    }

    /// Endings caused by output the harness could not use as a turn.
    pub fn is_output_failure(self) -> bool {
        matches!(
            self,
            EndingReason::AgentResponseJsonExtractionFailed
                | EndingReason::AgentResponseFormatError
                | EndingReason::TriggerConditionFormatError
                | EndingReason::TaskDescriptionFormatError
        )
    }
}

impl fmt::Display for EndingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnRole {
    User,
    Assistant,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogTurn {
    pub role: TurnRole,
    pub content: String,
}

impl DialogTurn {
    pub fn new(role: TurnRole, content: impl Into<String>) -> DialogTurn {
        DialogTurn { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub scenario_ref: String,
    pub tier: Tier,
    pub branch: Branch,
    pub system_prompt: String,
    pub turns: Vec<DialogTurn>,
    pub ending: Option<EndingReason>,
}

impl Transcript {
    /// Turn count with the system prompt counted as the first turn.
    pub fn turn_count(&self) -> usize {
        1 + self.turns.len()
    }

    pub fn count_role(&self, role: TurnRole) -> usize {
        self.turns.iter().filter(|t| t.role == role).count()
    }

    pub fn count_observations(&self, source: ObservationSource) -> usize {
        self.turns
            .iter()
            .filter(|t| t.role == TurnRole::Observation)
            .filter(|t| parse_observation(&t.content).is_ok_and(|o| o.source == source))
            .count()
    }

    /// Actions of every assistant turn that parses.
    pub fn actions(&self) -> Vec<ProactiveAction> {
        self.turns
            .iter()
            .filter(|t| t.role == TurnRole::Assistant)
            .filter_map(|t| parse_agent_response(&t.content).ok())
            .map(|r| r.proactive_action)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_turns_simple: u32,
    pub max_turns_complex: u32,
    pub parse_retries: u32,
    pub temperature: f64,
    pub guided: bool,
}

pub const MIN_MAX_TURNS: u32 = 13;

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig { max_turns_simple: 20, max_turns_complex: 28, parse_retries: 2, temperature: 0.2, guided: false }
    }
}

impl RunConfig {
    pub fn max_turns(&self, tier: Tier) -> u32 {
        match tier {
            Tier::Simple => self.max_turns_simple,
            Tier::Complex => self.max_turns_complex,
        }
    }

    pub fn check(&self) -> Result<(), OrchestratorError> {
        if self.max_turns_simple < MIN_MAX_TURNS || self.max_turns_complex < MIN_MAX_TURNS {
            return Err(OrchestratorError::InvalidConfig(alloc::format!("max_turns must be at least {MIN_MAX_TURNS}")));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(OrchestratorError::InvalidConfig("temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario does not validate: {0:?}")]
    InvalidScenario(Vec<ScenarioIssue>),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("user simulator failed: {0}")]
    User(#[from] ActorError),
    #[error("{role:?} turn {turn} rejected by the quality gate after {attempts} attempts")]
    GateExhausted { role: TurnRole, turn: usize, attempts: u32 },
    #[error("dialog stalled in a dormant phase without a pending monitor event")]
    Stalled,
    #[error("could not replay transcript turn {0}")]
    Replay(usize),
}

/// Event summarising the latest turn for phase bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnEvent {
    User(UserKind),
    Observation(ObservationSource),
    Agent(ProactiveAction),
}

/// Phase after `event`, given the context with `event` already applied.
pub fn advance_phase(phase: Phase, ctx: &DialogContext, event: TurnEvent) -> Phase {
    use ProactiveAction::*;
    let after_ack = ctx.last_input == Some(LastInput::User(UserKind::Ack));
    match (phase, event) {
        (Phase::Terminal, _) => Phase::Terminal,
        (Phase::ActiveInquiry, TurnEvent::Agent(a)) if a != InfoRetrieval => Phase::ConstraintRefinement,
        (Phase::ConstraintRefinement, TurnEvent::Agent(NoAction)) if after_ack && ctx.reminders_set > 0 => Phase::Dormant,
        (Phase::Dormant, TurnEvent::Observation(ObservationSource::EnvironmentMonitor)) => Phase::FirstWakeup,
        (Phase::FirstWakeup, TurnEvent::User(UserKind::Shift)) if ctx.tier == Tier::Complex => Phase::ShiftRefinement,
        (Phase::ShiftRefinement, TurnEvent::Agent(NoAction)) if after_ack && ctx.reminder_since_shift => {
            Phase::SecondDormant
        }
        (Phase::SecondDormant, TurnEvent::Observation(ObservationSource::EnvironmentMonitor)) => Phase::SecondWakeup,
        (Phase::FirstWakeup | Phase::SecondWakeup, TurnEvent::Agent(a)) => {
            if detect_ending(phase, ctx, a, 0, u32::MAX) == Some(EndingReason::MissionFinishedProperly) {
                Phase::Terminal
            } else {
                phase
            }
        }
        _ => phase,
    }
}

/// Ending caused by the agent's `action`, judged on the context with the
/// action applied. `phase` is the phase the action was taken in and
/// `turn_count` includes the system prompt.
pub fn detect_ending(
    phase: Phase,
    ctx: &DialogContext,
    action: ProactiveAction,
    turn_count: u32,
    max_turns: u32,
) -> Option<EndingReason> {
    use ProactiveAction::*;
    let answering_shift = ctx.last_input == Some(LastInput::User(UserKind::Shift));
    if phase == Phase::ShiftRefinement && answering_shift && matches!(action, CompleteTask | KeepSilent) {
        return Some(EndingReason::FailedOpeningIntentionShiftPhase);
    }
    match action {
        CompleteTask if ctx.user_satisfied => Some(EndingReason::MissionFinishedProperly),
        CompleteTask => Some(EndingReason::ArbitraryCompletion),
        KeepSilent
            if ctx.answering_monitor()
                && ctx.final_event_reached()
                && ctx.branch == Branch::Negative
                && !ctx.latest_event_satisfies() =>
        {
            Some(EndingReason::MissionFinishedProperly)
        }
        KeepSilent => Some(EndingReason::PrematureSilence),
        _ if turn_count >= max_turns => Some(EndingReason::MaxTurnsReached),
        _ => None,
    }
}

/// Verdict of a per-turn quality gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateVerdict {
    Accept,
    Reject(String),
}

/// Hook that can veto candidate turns; rejected turns are regenerated up to
/// `regeneration_budget` extra times.
pub trait TurnGate {
    fn regeneration_budget(&self) -> u32;
    fn review_user(&mut self, ctx: &DialogContext, turns: &[DialogTurn], candidate: &UserUtterance) -> GateVerdict;
    fn review_agent(&mut self, ctx: &DialogContext, turns: &[DialogTurn], candidate: &AgentResponse) -> GateVerdict;
}

/// Gate that accepts everything.
pub struct OpenGate;

impl TurnGate for OpenGate {
    fn regeneration_budget(&self) -> u32 {
        0
    }
    fn review_user(&mut self, _: &DialogContext, _: &[DialogTurn], _: &UserUtterance) -> GateVerdict {
        GateVerdict::Accept
    }
    fn review_agent(&mut self, _: &DialogContext, _: &[DialogTurn], _: &AgentResponse) -> GateVerdict {
        GateVerdict::Accept
    }
}

/// Dialog coordinates and run settings.
pub struct DialogSpec<'a> {
    pub scenario: &'a ScenarioBackground,
    pub scenario_ref: &'a str,
    pub tier: Tier,
    pub branch: Branch,
    pub config: &'a RunConfig,
}

enum NextInput {
    User,
    ToolCall,
    Monitor,
}

enum AgentOutcome {
    Parsed(AgentResponse),
    Failed(Option<String>, ParseFailureKind),
}

fn solicit_agent(agent: &dyn AgentAdapter, system: &str, turns: &[DialogTurn], cfg: &RunConfig) -> AgentOutcome {
    let mut last_raw = None;
    let mut last_kind = ParseFailureKind::JsonExtraction;
    for _ in 0..=cfg.parse_retries {
        match agent.respond(system, turns, cfg.temperature) {
            Ok(raw) => match parse_agent_response(&raw) {
                Ok(r) => return AgentOutcome::Parsed(r),
                Err(f) => {
                    last_kind = f.kind();
                    last_raw = Some(raw);
                }
            },
            Err(_) => {
                if last_raw.is_none() {
                    last_kind = ParseFailureKind::JsonExtraction;
                }
            }
        }
    }
    AgentOutcome::Failed(last_raw, last_kind)
}

/// Runs one dialog to its ending.
pub fn run_dialog(
    spec: &DialogSpec<'_>,
    agent: &dyn AgentAdapter,
    user: &dyn UserAdapter,
) -> Result<Transcript, OrchestratorError> {
    run_dialog_gated(spec, agent, user, &mut OpenGate)
}

/// [`run_dialog`] with a quality gate consulted on every user and agent turn.
pub fn run_dialog_gated(
    spec: &DialogSpec<'_>,
    agent: &dyn AgentAdapter,
    user: &dyn UserAdapter,
    gate: &mut dyn TurnGate,
) -> Result<Transcript, OrchestratorError> {
    let cfg = spec.config;
    cfg.check()?;
    let report = validate_scenario(spec.scenario, spec.tier);
    if !report.is_ok() {
        return Err(OrchestratorError::InvalidScenario(report.issues));
    }
    let max_turns = cfg.max_turns(spec.tier);
    let mut t = Transcript {
        scenario_ref: spec.scenario_ref.to_string(),
        tier: spec.tier,
        branch: spec.branch,
        system_prompt: crate::prompts::agent_system_prompt(cfg.guided),
        turns: Vec::new(),
        ending: None,
    };
    let mut ctx = DialogContext::new(spec.tier, spec.branch);
    let mut registry = ReminderRegistry::default();
    let mut phase = Phase::ActiveInquiry;
    let mut next = NextInput::User;
    let budget = gate.regeneration_budget();

    let ending = loop {
        match next {
            NextInput::User => {
                let mut attempts = 0;
                let utterance = loop {
                    let u = user.next(phase, &ctx, &t.turns)?;
                    attempts += 1;
                    match gate.review_user(&ctx, &t.turns, &u) {
                        GateVerdict::Accept => break u,
                        GateVerdict::Reject(_) if attempts > budget => {
                            return Err(OrchestratorError::GateExhausted {
                                role: TurnRole::User,
                                turn: t.turns.len(),
                                attempts,
                            })
                        }
                        GateVerdict::Reject(_) => {}
                    }
                };
                t.turns.push(DialogTurn::new(TurnRole::User, utterance.text));
                ctx.observe_user(utterance.kind);
                phase = advance_phase(phase, &ctx, TurnEvent::User(utterance.kind));
            }
            NextInput::ToolCall => {
                let info = retrieval_snapshot(&ctx, spec.scenario)?;
                push_observation(&mut t, &ObservationMessage::tool_call(info.clone()));
                ctx.observe_observation(ObservationSource::ToolCall);
                phase = advance_phase(phase, &ctx, TurnEvent::Observation(ObservationSource::ToolCall));
            }
            NextInput::Monitor => {
                let obs = monitor_tick(&ctx, &registry, spec.scenario, phase.is_dormant())?
                    .ok_or(OrchestratorError::Stalled)?;
                push_observation(&mut t, &obs);
                ctx.observe_observation(ObservationSource::EnvironmentMonitor);
                phase = advance_phase(phase, &ctx, TurnEvent::Observation(ObservationSource::EnvironmentMonitor));
            }
        }
        if t.turn_count() as u32 >= max_turns {
            break EndingReason::MaxTurnsReached;
        }

        let mut attempts = 0;
        let response = loop {
            match solicit_agent(agent, &t.system_prompt, &t.turns, cfg) {
                AgentOutcome::Failed(raw, kind) => {
                    if let Some(raw) = raw {
                        t.turns.push(DialogTurn::new(TurnRole::Assistant, raw));
                    }
                    break Err(match kind {
                        ParseFailureKind::JsonExtraction => EndingReason::AgentResponseJsonExtractionFailed,
                        ParseFailureKind::Format => EndingReason::AgentResponseFormatError,
                    });
                }
                AgentOutcome::Parsed(r) => {
                    attempts += 1;
                    match gate.review_agent(&ctx, &t.turns, &r) {
                        GateVerdict::Accept => break Ok(r),
                        GateVerdict::Reject(_) if attempts > budget => {
                            return Err(OrchestratorError::GateExhausted {
                                role: TurnRole::Assistant,
                                turn: t.turns.len(),
                                attempts,
                            })
                        }
                        GateVerdict::Reject(_) => {}
                    }
                }
            }
        };
        let r = match response {
            Ok(r) => r,
            Err(ending) => break ending,
        };
        t.turns.push(DialogTurn::new(TurnRole::Assistant, r.render()));
        let action = r.proactive_action;
        let findings = validate_agent_response(&r);
        ctx.observe_agent(action);
        if let Some(f) = findings.first() {
            break match f {
                Finding::TriggerConditionFormat => EndingReason::TriggerConditionFormatError,
                Finding::TaskDescriptionFormat => EndingReason::TaskDescriptionFormatError,
            };
        }
        if action == ProactiveAction::SetReminder {
            registry
                .register(&r.trigger_condition, spec.scenario_ref, ctx.turn_index)
                .expect("validated trigger registers");
        }
        let acted_in = phase;
        phase = advance_phase(phase, &ctx, TurnEvent::Agent(action));
        if let Some(ending) = detect_ending(acted_in, &ctx, action, t.turn_count() as u32, max_turns) {
            break ending;
        }
        next = if action == ProactiveAction::InfoRetrieval {
            NextInput::ToolCall
        } else if phase.is_dormant() {
            NextInput::Monitor
        } else {
            NextInput::User
        };
    };
    t.ending = Some(ending);
    Ok(t)
}

fn push_observation(t: &mut Transcript, obs: &ObservationMessage) {
    let text = serialize_observation(obs).expect("harness builds well-formed observations");
    t.turns.push(DialogTurn::new(TurnRole::Observation, text));
}

/// Rebuilds the dialog context from recorded turns. User turns are
/// classified by position, the same way the scripted user picks them.
pub fn replay_context(tier: Tier, branch: Branch, turns: &[DialogTurn]) -> Result<DialogContext, OrchestratorError> {
    let mut ctx = DialogContext::new(tier, branch);
    for (i, turn) in turns.iter().enumerate() {
        match turn.role {
            TurnRole::User => {
                let kind = next_user_kind(&ctx);
                ctx.observe_user(kind);
            }
            TurnRole::Observation => {
                let o = parse_observation(&turn.content).map_err(|_| OrchestratorError::Replay(i))?;
                ctx.observe_observation(o.source);
            }
            TurnRole::Assistant => {
                let r = parse_agent_response(&turn.content).map_err(|_| OrchestratorError::Replay(i))?;
                ctx.observe_agent(r.proactive_action);
            }
        }
    }
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ProactiveAction::*;

    #[test]
    fn phase_starts_in_inquiry_and_waits_for_agent() {
        let mut ctx = DialogContext::new(Tier::Simple, Branch::Positive);
        ctx.observe_user(UserKind::Opening);
        assert_eq!(advance_phase(Phase::ActiveInquiry, &ctx, TurnEvent::User(UserKind::Opening)), Phase::ActiveInquiry);
        ctx.observe_agent(InfoRetrieval);
        assert_eq!(advance_phase(Phase::ActiveInquiry, &ctx, TurnEvent::Agent(InfoRetrieval)), Phase::ActiveInquiry);
        ctx.observe_observation(ObservationSource::ToolCall);
        ctx.observe_agent(NoAction);
        assert_eq!(advance_phase(Phase::ActiveInquiry, &ctx, TurnEvent::Agent(NoAction)), Phase::ConstraintRefinement);
    }

    #[test]
    fn endings_for_terminal_moves() {
        let mut ctx = DialogContext::new(Tier::Complex, Branch::Negative);
        ctx.observe_observation(ObservationSource::EnvironmentMonitor);
        let silent = ctx.after_agent(KeepSilent);
        assert_eq!(detect_ending(Phase::FirstWakeup, &silent, KeepSilent, 10, 28), Some(EndingReason::PrematureSilence));
        ctx.observe_observation(ObservationSource::EnvironmentMonitor);
        let silent = ctx.after_agent(KeepSilent);
        assert_eq!(
            detect_ending(Phase::SecondWakeup, &silent, KeepSilent, 17, 28),
            Some(EndingReason::MissionFinishedProperly)
        );
        let done = ctx.after_agent(CompleteTask);
        assert_eq!(detect_ending(Phase::SecondWakeup, &done, CompleteTask, 17, 28), Some(EndingReason::ArbitraryCompletion));
    }

    #[test]
    fn shift_answered_with_completion_fails_the_phase() {
        let mut ctx = DialogContext::new(Tier::Complex, Branch::Positive);
        ctx.observe_user(UserKind::Shift);
        for a in [CompleteTask, KeepSilent] {
            let after = ctx.after_agent(a);
            assert_eq!(
                detect_ending(Phase::ShiftRefinement, &after, a, 12, 28),
                Some(EndingReason::FailedOpeningIntentionShiftPhase)
            );
        }
        let after = ctx.after_agent(SetReminder);
        assert_eq!(detect_ending(Phase::ShiftRefinement, &after, SetReminder, 12, 28), None);
    }

    #[test]
    fn budget_ends_dialog() {
        let ctx = DialogContext::new(Tier::Simple, Branch::Positive).after_agent(NoAction);
        assert_eq!(detect_ending(Phase::ConstraintRefinement, &ctx, NoAction, 20, 20), Some(EndingReason::MaxTurnsReached));
        assert_eq!(detect_ending(Phase::ConstraintRefinement, &ctx, NoAction, 19, 20), None);
    }

    #[test]
    fn config_defaults_and_bounds() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.max_turns(Tier::Simple), cfg.max_turns(Tier::Complex)), (20, 28));
        assert_eq!((cfg.parse_retries, cfg.temperature, cfg.guided), (2, 0.2, false));
        assert!(cfg.check().is_ok());
        let low = RunConfig { max_turns_simple: 12, ..RunConfig::default() };
        assert!(matches!(low.check(), Err(OrchestratorError::InvalidConfig(_))));
    }
}
