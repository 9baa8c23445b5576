//! Faulty agents with known failure signatures. Each one behaves like the
//! reference agent except for a single deliberate mistake.

use alloc::string::String;

use crate::chat::ChannelError;
use crate::json::Json;
use crate::orchestrator::DialogTurn;
use crate::protocol::{ObservationSource, ProactiveAction, TaskStatus};
use crate::runtime::{DialogContext, LastInput, UserKind};
use crate::scenario::{Branch, ScenarioBackground, Tier};

use super::{expected_actions, reference_response, AgentAdapter, OracleAgent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixtureKind {
    /// KEEP_SILENT on every turn.
    AlwaysSilent,
    /// COMPLETE_TASK when a monitor event arrives.
    PrematureCompleter,
    /// NO_ACTION wherever a reminder is due.
    NoReminder,
    /// SET_REMINDER right after the first retrieval.
    EarlyReminder,
    /// INFO_RETRIEVAL on every turn.
    RetrievalSpammer,
    /// Plain prose with no JSON.
    NonJson,
    /// Omits `task_description`.
    MissingField,
    /// Reminder with a null condition.
    BadTrigger,
    /// Completes without clearing intention and constraints.
    NonResettingCompleter,
    /// FOLLOW_UP right after the first retrieval.
    FollowUpAfterRetrieval,
    /// FAILED_TASK right after the first retrieval.
    FailedTaskAfterRetrieval,
    /// An action string outside the protocol.
    InvalidAction,
    /// A second reminder when the user acknowledges the first.
    RepeatedReminder,
    /// KEEP_SILENT at a monitor event that meets the user's needs.
    SilentWhenPositive,
    /// Reports IN_PROGRESS before any reminder exists.
    EarlyInProgress,
    /// Reports PENDING when setting a reminder.
    PendingAfterReminder,
    /// Completes while reporting IN_PROGRESS.
    CompletedStatusMissing,
    /// Reports FAILED when staying silent.
    FailedStatusWhenSilent,
    /// Completes the task in reply to a shifted intention.
    ShiftCompleter,
}

pub const INVALID_ACTION_NAME: &str = "WAIT_FOR_USER";

impl FixtureKind {
    pub const ALL: [FixtureKind; 19] = [
        FixtureKind::AlwaysSilent,
        FixtureKind::PrematureCompleter,
        FixtureKind::NoReminder,
        FixtureKind::EarlyReminder,
        FixtureKind::RetrievalSpammer,
        FixtureKind::NonJson,
        FixtureKind::MissingField,
        FixtureKind::BadTrigger,
        FixtureKind::NonResettingCompleter,
        FixtureKind::FollowUpAfterRetrieval,
        FixtureKind::FailedTaskAfterRetrieval,
        FixtureKind::InvalidAction,
        FixtureKind::RepeatedReminder,
        FixtureKind::SilentWhenPositive,
        FixtureKind::EarlyInProgress,
        FixtureKind::PendingAfterReminder,
        FixtureKind::CompletedStatusMissing,
        FixtureKind::FailedStatusWhenSilent,
        FixtureKind::ShiftCompleter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::AlwaysSilent => "always_silent",
            FixtureKind::PrematureCompleter => "premature_completer",
            FixtureKind::NoReminder => "no_reminder",
            FixtureKind::EarlyReminder => "early_reminder",
            FixtureKind::RetrievalSpammer => "retrieval_spammer",
            FixtureKind::NonJson => "non_json",
            FixtureKind::MissingField => "missing_field",
            FixtureKind::BadTrigger => "bad_trigger",
            FixtureKind::NonResettingCompleter => "non_resetting_completer",
            FixtureKind::FollowUpAfterRetrieval => "follow_up_after_retrieval",
            FixtureKind::FailedTaskAfterRetrieval => "failed_task_after_retrieval",
            FixtureKind::InvalidAction => "invalid_action",
            FixtureKind::RepeatedReminder => "repeated_reminder",
            FixtureKind::SilentWhenPositive => "silent_when_positive",
            FixtureKind::EarlyInProgress => "early_in_progress",
            FixtureKind::PendingAfterReminder => "pending_after_reminder",
            FixtureKind::CompletedStatusMissing => "completed_status_missing",
            FixtureKind::FailedStatusWhenSilent => "failed_status_when_silent",
            FixtureKind::ShiftCompleter => "shift_completer",
        }
    }

    pub fn from_name(name: &str) -> Option<FixtureKind> {
        FixtureKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Dialog setting in which the mistake shows up.
    pub fn setting(self) -> (Tier, Branch) {
        match self {
            FixtureKind::PrematureCompleter | FixtureKind::FailedStatusWhenSilent => (Tier::Simple, Branch::Negative),
            FixtureKind::ShiftCompleter => (Tier::Complex, Branch::Positive),
            _ => (Tier::Simple, Branch::Positive),
        }
    }
}

pub struct FixtureAgent<'a> {
    pub kind: FixtureKind,
    pub oracle: OracleAgent<'a>,
}

impl<'a> FixtureAgent<'a> {
    pub fn new(kind: FixtureKind, scenario: &'a ScenarioBackground) -> FixtureAgent<'a> {
        let (tier, branch) = kind.setting();
        FixtureAgent { kind, oracle: OracleAgent { scenario, tier, branch } }
    }
}

fn after_first_retrieval(ctx: &DialogContext) -> bool {
    ctx.last_input == Some(LastInput::Observation(ObservationSource::ToolCall)) && !ctx.constraints_supplied
}

fn drop_key(v: Json, key: &str) -> Json {
    match v {
        Json::Object(entries) => Json::Object(entries.into_iter().filter(|(k, _)| k != key).collect()),
        other => other,
    }
}

fn misbehave(kind: FixtureKind, sb: &ScenarioBackground, ctx: &DialogContext) -> String {
    use FixtureKind as F;
    use ProactiveAction::*;
    let planned = expected_actions(ctx)[0];
    let at_monitor = ctx.answering_monitor();
    let action = match kind {
        F::AlwaysSilent => KeepSilent,
        F::PrematureCompleter if at_monitor => CompleteTask,
        F::NoReminder if planned == SetReminder => NoAction,
        F::EarlyReminder if after_first_retrieval(ctx) => SetReminder,
        F::RetrievalSpammer => InfoRetrieval,
        F::FollowUpAfterRetrieval if after_first_retrieval(ctx) => FollowUp,
        F::FailedTaskAfterRetrieval if after_first_retrieval(ctx) => FailedTask,
        F::RepeatedReminder if ctx.last_input == Some(LastInput::User(UserKind::Ack)) && ctx.reminders_set == 1 => {
            SetReminder
        }
        F::SilentWhenPositive if at_monitor => KeepSilent,
        F::ShiftCompleter if ctx.last_input == Some(LastInput::User(UserKind::Shift)) => CompleteTask,
        _ => planned,
    };
    let mut r = reference_response(sb, ctx, action);
    let task = &mut r.task_description;
    match kind {
        F::NonJson => return "Let me check on that and get back to you shortly.".into(),
        F::MissingField => return drop_key(r.to_json(), "task_description").render(),
        F::InvalidAction => {
            let mut v = r.to_json();
            if let Json::Object(entries) = &mut v {
                for (k, val) in entries.iter_mut() {
                    if k == "proactive_action" {
                        *val = Json::str(INVALID_ACTION_NAME);
                    }
                }
            }
            return v.render();
        }
        F::BadTrigger if action == SetReminder => r.trigger_condition.value = None,
        F::NonResettingCompleter if action == CompleteTask => {
            let open = reference_response(sb, ctx, NoAction).task_description;
            task.intention = open.intention;
            task.constraints = open.constraints;
        }
        F::EarlyInProgress if ctx.agent_turns == 0 => task.status = Some(TaskStatus::InProgress),
        F::PendingAfterReminder if action == SetReminder => task.status = Some(TaskStatus::Pending),
        F::CompletedStatusMissing if action == CompleteTask => task.status = Some(TaskStatus::InProgress),
        F::FailedStatusWhenSilent if action == KeepSilent => task.status = Some(TaskStatus::Failed),
        F::ShiftCompleter if action == CompleteTask => task.status = Some(TaskStatus::InProgress),
        _ => {}
    }
    r.render()
}

impl AgentAdapter for FixtureAgent<'_> {
    fn respond(&self, _: &str, turns: &[DialogTurn], _: f64) -> Result<String, ChannelError> {
        let ctx = self.oracle.context(turns)?;
        Ok(misbehave(self.kind, self.oracle.scenario, &ctx))
    }
}
