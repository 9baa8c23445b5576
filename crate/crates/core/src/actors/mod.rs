//! Agent and user adapters: the scripted user, the reference (oracle)
//! agent, LLM-backed actors and deliberately faulty fixture agents.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::chat::{ChannelError, ChatChannel, ChatMessage, ChatRequest, ChatRole};
use crate::json::Json;
use crate::orchestrator::{replay_context, DialogTurn, Phase, TurnRole};
use crate::prompts::{render, USER_SIMULATOR};
use crate::protocol::{parse_agent_response, AgentResponse, ProactiveAction, TaskDescription, TriggerCondition, TriggerKind};
use crate::runtime::{expected_actions, expected_status, next_user_kind, retrieval_snapshot, DialogContext, LastInput, UserKind};
use crate::scenario::{Branch, ScenarioBackground, Tier};

mod fixtures;

pub use fixtures::{FixtureAgent, FixtureKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActorError {
    #[error("scenario lacks {0}, needed for the next user message")]
    MissingScenarioField(&'static str),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("user simulator returned an empty message")]
    EmptyReply,
}

/// Produces raw agent output for the dialog so far.
pub trait AgentAdapter {
    fn respond(&self, system_prompt: &str, turns: &[DialogTurn], temperature: f64) -> Result<String, ChannelError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserUtterance {
    pub text: String,
    pub kind: UserKind,
}

/// Produces the next user message.
pub trait UserAdapter {
    fn next(&self, phase: Phase, ctx: &DialogContext, turns: &[DialogTurn]) -> Result<UserUtterance, ActorError>;
}

/// Canned user lines built from a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserScript {
    pub opening: String,
    pub constraints: String,
    pub ack: String,
    pub shift: Option<String>,
    pub satisfaction: String,
    pub rejection: String,
}

impl UserScript {
    pub fn from_scenario(sb: &ScenarioBackground) -> Result<UserScript, ActorError> {
        let opening = sb.initial_user_query.clone().ok_or(ActorError::MissingScenarioField("initial_user_query"))?;
        let reason = sb.user_rejection_reason.as_deref().ok_or(ActorError::MissingScenarioField("user_rejection_reason"))?;
        Ok(UserScript {
            opening,
            constraints: format!("Thanks, but none of these work for me. {reason}"),
            ack: "Great, thank you. I'll wait for your update.".into(),
            shift: sb.intention_shift.as_ref().map(|s| format!("Thanks, that looks good. One more thing though: {s}")),
            satisfaction: "That works for me, thank you!".into(),
            rejection: format!("Sorry, these still don't meet my needs. {reason}"),
        })
    }

    pub fn line(&self, kind: UserKind) -> Result<&str, ActorError> {
        Ok(match kind {
            UserKind::Opening => &self.opening,
            UserKind::Constraints => &self.constraints,
            UserKind::Ack => &self.ack,
            UserKind::Shift => self.shift.as_deref().ok_or(ActorError::MissingScenarioField("intention_shift"))?,
            UserKind::Satisfaction => &self.satisfaction,
            UserKind::Rejection => &self.rejection,
        })
    }
}

pub fn scripted_user_next(script: &UserScript, ctx: &DialogContext) -> Result<UserUtterance, ActorError> {
    let kind = next_user_kind(ctx);
    Ok(UserUtterance { text: script.line(kind)?.to_string(), kind })
}

/// Deterministic user that follows the canonical flow.
pub struct ScriptedUser {
    pub script: UserScript,
}

impl ScriptedUser {
    pub fn new(sb: &ScenarioBackground) -> Result<ScriptedUser, ActorError> {
        Ok(ScriptedUser { script: UserScript::from_scenario(sb)? })
    }
}

impl UserAdapter for ScriptedUser {
    fn next(&self, _: Phase, ctx: &DialogContext, _: &[DialogTurn]) -> Result<UserUtterance, ActorError> {
        scripted_user_next(&self.script, ctx)
    }
}

/// User and agent lines of a dialog, one per line. Assistant turns show
/// their `response_text`; observations are left out.
pub fn render_dialogue_history(turns: &[DialogTurn]) -> String {
    let mut lines = Vec::new();
    for t in turns {
        match t.role {
            TurnRole::User => lines.push(format!("User: {}", t.content)),
            TurnRole::Assistant => {
                let text = parse_agent_response(&t.content).map_or_else(|_| t.content.clone(), |r| r.response_text);
                lines.push(format!("Agent: {text}"));
            }
            TurnRole::Observation => {}
        }
    }
    lines.join("\n")
}

/// User-simulator prompt for the dialog so far. SIMPLE dialogs present no
/// shifted intention.
pub fn user_simulator_prompt(sb: &ScenarioBackground, tier: Tier, turns: &[DialogTurn]) -> String {
    let shift = match tier {
        Tier::Simple => "None",
        Tier::Complex => sb.intention_shift.as_deref().unwrap_or("None"),
    };
    let history = render_dialogue_history(turns);
    render(
        USER_SIMULATOR,
        &[
            ("user_profile", sb.user_profile.as_deref().unwrap_or("")),
            ("initial_user_query", sb.initial_user_query.as_deref().unwrap_or("")),
            ("intention_shift", shift),
            ("user_rejection_reason", sb.user_rejection_reason.as_deref().unwrap_or("")),
            ("dialogue_history", &history),
        ],
    )
}

/// User simulated by a language model. The message role is still taken
/// from the dialog state so phases stay well defined.
pub struct LlmUser<'a> {
    pub channel: &'a dyn ChatChannel,
    pub model: String,
    pub temperature: f64,
    pub scenario: &'a ScenarioBackground,
}

impl UserAdapter for LlmUser<'_> {
    fn next(&self, _: Phase, ctx: &DialogContext, turns: &[DialogTurn]) -> Result<UserUtterance, ActorError> {
        let req = ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::new(ChatRole::User, user_simulator_prompt(self.scenario, ctx.tier, turns))],
            temperature: self.temperature,
            max_output: None,
        };
        let text = self.channel.complete(&req)?;
        let text = text.trim().trim_matches('"').trim();
        if text.is_empty() {
            return Err(ActorError::EmptyReply);
        }
        Ok(UserUtterance { text: text.to_string(), kind: next_user_kind(ctx) })
    }
}

/// Chat request for the agent under test. Observations are sent with the
/// user role since providers only know system, user and assistant.
pub fn agent_request(model: &str, system_prompt: &str, turns: &[DialogTurn], temperature: f64) -> ChatRequest {
    let mut messages = vec![ChatMessage::new(ChatRole::System, system_prompt)];
    messages.extend(turns.iter().map(|t| {
        let role = match t.role {
            TurnRole::Assistant => ChatRole::Assistant,
            TurnRole::User | TurnRole::Observation => ChatRole::User,
        };
        ChatMessage::new(role, t.content.clone())
    }));
    ChatRequest { model: model.to_string(), messages, temperature, max_output: None }
}

pub struct LlmAgent<'a> {
    pub channel: &'a dyn ChatChannel,
    pub model: String,
}

impl AgentAdapter for LlmAgent<'_> {
    fn respond(&self, system_prompt: &str, turns: &[DialogTurn], temperature: f64) -> Result<String, ChannelError> {
        self.channel.complete(&agent_request(&self.model, system_prompt, turns, temperature))
    }
}

/// Reference agent: always takes the preferred expected action with the
/// expected status.
pub struct OracleAgent<'a> {
    pub scenario: &'a ScenarioBackground,
    pub tier: Tier,
    pub branch: Branch,
}

fn reminder_condition(sb: &ScenarioBackground, ctx: &DialogContext) -> String {
    let key = sb.payload_key();
    match (&sb.intention_shift, ctx.shift_announced) {
        (Some(shift), true) => format!("New {key} entry matches the updated request: {shift}"),
        _ => format!(
            "New {key} entry meets the user's requirements: {}",
            sb.user_rejection_reason.as_deref().unwrap_or("see constraints")
        ),
    }
}

fn open_constraints(sb: &ScenarioBackground, ctx: &DialogContext) -> Vec<(String, Json)> {
    let mut c = vec![("request".to_string(), Json::str(sb.initial_user_query.as_deref().unwrap_or("")))];
    if ctx.constraints_supplied {
        c.push(("requirements".into(), Json::str(sb.user_rejection_reason.as_deref().unwrap_or(""))));
    }
    if ctx.shift_announced {
        c.push(("updated_request".into(), Json::str(sb.intention_shift.as_deref().unwrap_or(""))));
    }
    c
}

fn response_text(action: ProactiveAction, ctx: &DialogContext, payload: &str) -> String {
    use ProactiveAction::*;
    match action {
        InfoRetrieval => "Let me look up the latest options for you.".into(),
        NoAction if ctx.last_input == Some(LastInput::User(UserKind::Ack)) => {
            "You're welcome. I'll keep watching for options that fit.".into()
        }
        NoAction => format!("Here is what I found: {payload}. Do any of these work for you?"),
        SetReminder if ctx.shift_announced => {
            "Understood. I've updated the reminder and will tell you as soon as something matches.".into()
        }
        SetReminder => "Nothing available fits yet, so I've set a reminder and will let you know when something does.".into(),
        FollowUp => format!("Good news, new options are available: {payload}. Would you like more details?"),
        KeepSilent => "The new listings still fall short, so there is nothing to report yet.".into(),
        CompleteTask => "Glad I could help. Let me know if you need anything else.".into(),
        FailedTask => "Sorry this didn't work out. I've closed the request.".into(),
    }
}

/// Response the reference agent gives for `action` in `ctx`, with status
/// and slots consistent with that action.
pub fn reference_response(sb: &ScenarioBackground, ctx: &DialogContext, action: ProactiveAction) -> AgentResponse {
    let after = ctx.after_agent(action);
    let payload = retrieval_snapshot(ctx, sb).map(|i| i.payload.clone()).unwrap_or_default();
    let trigger = if action == ProactiveAction::SetReminder {
        TriggerCondition { kind: Some(TriggerKind::Known(sb.trigger())), value: Some(reminder_condition(sb, ctx)) }
    } else {
        TriggerCondition::none()
    };
    let closing = matches!(action, ProactiveAction::CompleteTask | ProactiveAction::FailedTask);
    let (intention, constraints) = if closing {
        (None, None)
    } else {
        (
            Some(format!("Find a suitable {} option for the user", sb.name().replace('_', " "))),
            Some(open_constraints(sb, ctx)),
        )
    };
    AgentResponse {
        response_text: response_text(action, ctx, &payload),
        proactive_action: action,
        trigger_condition: trigger,
        task_description: TaskDescription { intention, constraints, status: Some(expected_status(&after)), extra: vec![] },
        extra: vec![],
    }
}

pub fn oracle_response(sb: &ScenarioBackground, ctx: &DialogContext) -> AgentResponse {
    let action = expected_actions(ctx)[0];
    reference_response(sb, ctx, action)
}

impl OracleAgent<'_> {
    pub fn context(&self, turns: &[DialogTurn]) -> Result<DialogContext, ChannelError> {
        replay_context(self.tier, self.branch, turns).map_err(|e| ChannelError::InvalidRequest(e.to_string()))
    }
}

impl AgentAdapter for OracleAgent<'_> {
    fn respond(&self, _: &str, turns: &[DialogTurn], _: f64) -> Result<String, ChannelError> {
        let ctx = self.context(turns)?;
        Ok(oracle_response(self.scenario, &ctx).render())
    }
}
