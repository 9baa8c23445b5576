//! Dialog bookkeeping shared by the orchestrator, the reference actors and
//! the judge: what has happened so far, what should happen next, and the
//! reminder registry that drives environment-monitor events.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::environment::ExternalInfo;
use crate::protocol::{ObservationMessage, ObservationSource, ProactiveAction, TaskStatus, TriggerCondition, TriggerType};
use crate::scenario::{
    environment_state_at, monitor_event_satisfies, stage_for_event, Branch, ScenarioBackground, ScenarioError, Stage,
    Tier,
};

/// Role a user message plays in the dialog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UserKind {
    Opening,
    Constraints,
    Ack,
    Shift,
    Satisfaction,
    Rejection,
}

/// The input the agent is currently answering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LastInput {
    User(UserKind),
    Observation(ObservationSource),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogContext {
    pub tier: Tier,
    pub branch: Branch,
    /// Turns recorded so far, not counting the system prompt.
    pub turn_index: u32,
    pub user_turns: u32,
    pub agent_turns: u32,
    /// SET_REMINDER actions taken so far.
    pub reminders_set: u32,
    pub reminder_since_shift: bool,
    pub constraints_supplied: bool,
    pub retrieval_seen: bool,
    pub shift_announced: bool,
    pub user_satisfied: bool,
    pub user_cancelled: bool,
    /// The latest agent action was COMPLETE_TASK.
    pub completion_declared: bool,
    pub monitor_events_delivered: u32,
    pub last_observation_source: Option<ObservationSource>,
    pub last_input: Option<LastInput>,
    pub last_agent_action: Option<ProactiveAction>,
    /// The latest FOLLOW_UP answered an environment-monitor observation.
    pub followup_at_monitor: bool,
    /// Agent-turn numbers (1-based) of the latest retrieval and reminder.
    pub last_retrieval_turn: Option<u32>,
    pub last_reminder_turn: Option<u32>,
    /// Value of `agent_turns` when the latest constraint or shift message
    /// arrived.
    pub last_refinement_at: Option<u32>,
}

impl DialogContext {
    pub fn new(tier: Tier, branch: Branch) -> DialogContext {
        DialogContext {
            tier,
            branch,
            turn_index: 0,
            user_turns: 0,
            agent_turns: 0,
            reminders_set: 0,
            reminder_since_shift: false,
            constraints_supplied: false,
            retrieval_seen: false,
            shift_announced: false,
            user_satisfied: false,
            user_cancelled: false,
            completion_declared: false,
            monitor_events_delivered: 0,
            last_observation_source: None,
            last_input: None,
            last_agent_action: None,
            followup_at_monitor: false,
            last_retrieval_turn: None,
            last_reminder_turn: None,
            last_refinement_at: None,
        }
    }

    pub fn observe_user(&mut self, kind: UserKind) {
        self.turn_index += 1;
        self.user_turns += 1;
        self.last_input = Some(LastInput::User(kind));
        match kind {
            UserKind::Constraints => {
                self.constraints_supplied = true;
                self.last_refinement_at = Some(self.agent_turns);
            }
            UserKind::Shift => {
                self.shift_announced = true;
                self.reminder_since_shift = false;
                self.last_refinement_at = Some(self.agent_turns);
            }
            UserKind::Satisfaction => self.user_satisfied = true,
            UserKind::Rejection => self.user_cancelled = true,
            UserKind::Opening | UserKind::Ack => {}
        }
    }

    pub fn observe_observation(&mut self, source: ObservationSource) {
        self.turn_index += 1;
        self.last_observation_source = Some(source);
        self.last_input = Some(LastInput::Observation(source));
        self.retrieval_seen = true;
        if source == ObservationSource::EnvironmentMonitor {
            self.monitor_events_delivered += 1;
        }
    }

    pub fn observe_agent(&mut self, action: ProactiveAction) {
        let at_monitor = self.last_input == Some(LastInput::Observation(ObservationSource::EnvironmentMonitor));
        self.turn_index += 1;
        self.agent_turns += 1;
        self.completion_declared = action == ProactiveAction::CompleteTask;
        match action {
            ProactiveAction::InfoRetrieval => self.last_retrieval_turn = Some(self.agent_turns),
            ProactiveAction::SetReminder => {
                self.reminders_set += 1;
                self.last_reminder_turn = Some(self.agent_turns);
                if self.shift_announced {
                    self.reminder_since_shift = true;
                }
            }
            ProactiveAction::FollowUp => self.followup_at_monitor = at_monitor,
            _ => {}
        }
        self.last_agent_action = Some(action);
    }

    /// Context as it would be after the agent takes `action`.
    pub fn after_agent(&self, action: ProactiveAction) -> DialogContext {
        let mut next = self.clone();
        next.observe_agent(action);
        next
    }

    pub fn answering_monitor(&self) -> bool {
        self.last_input == Some(LastInput::Observation(ObservationSource::EnvironmentMonitor))
    }

    /// Satisfaction label of the latest monitor event.
    pub fn latest_event_satisfies(&self) -> bool {
        monitor_event_satisfies(self.tier, self.branch, self.monitor_events_delivered)
    }

    pub fn final_event_reached(&self) -> bool {
        self.monitor_events_delivered >= self.tier.monitor_events()
    }

    /// Stage whose snapshot a retrieval returns: the latest one the
    /// environment has shown.
    pub fn retrieval_stage(&self) -> Stage {
        if self.monitor_events_delivered == 0 {
            Stage::Initial
        } else {
            stage_for_event(self.monitor_events_delivered)
        }
    }
}

/// What the user says next, decided from the dialog so far.
pub fn next_user_kind(ctx: &DialogContext) -> UserKind {
    if ctx.user_turns == 0 {
        return UserKind::Opening;
    }
    if ctx.user_cancelled {
        return UserKind::Rejection;
    }
    if ctx.user_satisfied {
        return UserKind::Satisfaction;
    }
    if ctx.last_agent_action == Some(ProactiveAction::FollowUp) && ctx.followup_at_monitor {
        return if !ctx.latest_event_satisfies() {
            UserKind::Rejection
        } else if ctx.tier == Tier::Complex && !ctx.shift_announced {
            UserKind::Shift
        } else {
            UserKind::Satisfaction
        };
    }
    if !ctx.constraints_supplied {
        return UserKind::Constraints;
    }
    if ctx.shift_announced && !ctx.reminder_since_shift {
        return UserKind::Shift;
    }
    if ctx.reminders_set > 0 {
        UserKind::Ack
    } else {
        UserKind::Constraints
    }
}

/// Actions a well-behaved agent may take now, preferred first.
pub fn expected_actions(ctx: &DialogContext) -> Vec<ProactiveAction> {
    use ProactiveAction::*;
    match ctx.last_input {
        None | Some(LastInput::User(UserKind::Opening)) => vec![InfoRetrieval],
        Some(LastInput::Observation(ObservationSource::ToolCall)) => {
            if ctx.constraints_supplied {
                vec![SetReminder]
            } else {
                vec![NoAction]
            }
        }
        Some(LastInput::User(UserKind::Constraints)) => {
            if ctx.retrieval_seen {
                vec![SetReminder]
            } else {
                vec![InfoRetrieval]
            }
        }
        Some(LastInput::User(UserKind::Ack)) => vec![NoAction],
        Some(LastInput::Observation(ObservationSource::EnvironmentMonitor)) => {
            if ctx.latest_event_satisfies() {
                vec![FollowUp]
            } else {
                vec![KeepSilent]
            }
        }
        Some(LastInput::User(UserKind::Shift)) => vec![SetReminder, InfoRetrieval],
        Some(LastInput::User(UserKind::Satisfaction)) => vec![CompleteTask],
        Some(LastInput::User(UserKind::Rejection)) => vec![FailedTask],
    }
}

/// Status the agent should report, evaluated on the context after its
/// action has been applied.
pub fn expected_status(ctx: &DialogContext) -> TaskStatus {
    if ctx.user_cancelled {
        TaskStatus::Failed
    } else if ctx.user_satisfied {
        TaskStatus::Completed
    } else if ctx.reminders_set == 0 {
        TaskStatus::Pending
    } else if ctx.last_input == Some(LastInput::User(UserKind::Shift)) {
        TaskStatus::InProgress
    } else if ctx.completion_declared {
        TaskStatus::Completed
    } else {
        TaskStatus::InProgress
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReminderRecord {
    pub task_id: String,
    pub trigger_type: TriggerType,
    pub condition: String,
    pub created_at_turn: u32,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("reminder needs a TIME/EVENT trigger with a non-empty condition")]
    IncompleteTrigger,
}

/// Reminder records of one dialog. At most one record is active.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReminderRegistry {
    pub records: Vec<ReminderRecord>,
}

impl ReminderRegistry {
    /// Registers a reminder and deactivates any earlier one.
    pub fn register(
        &mut self,
        trigger: &TriggerCondition,
        task_id: &str,
        turn: u32,
    ) -> Result<&ReminderRecord, RuntimeError> {
        let (Some(trigger_type), Some(condition)) = (trigger.trigger_type(), trigger.value.clone()) else {
            return Err(RuntimeError::IncompleteTrigger);
        };
        if !trigger.is_complete() {
            return Err(RuntimeError::IncompleteTrigger);
        }
        for r in &mut self.records {
            r.active = false;
        }
        self.records.push(ReminderRecord {
            task_id: task_id.into(),
            trigger_type,
            condition,
            created_at_turn: turn,
            active: true,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn active(&self) -> Option<&ReminderRecord> {
        self.records.iter().find(|r| r.active)
    }
}

/// Next environment-monitor observation, if one is due. Events fire only
/// while the dialog is dormant with an active reminder, and never more than
/// the tier allows.
pub fn monitor_tick(
    ctx: &DialogContext,
    registry: &ReminderRegistry,
    sb: &ScenarioBackground,
    dormant: bool,
) -> Result<Option<ObservationMessage>, ScenarioError> {
    let Some(reminder) = registry.active() else {
        return Ok(None);
    };
    if !dormant || ctx.final_event_reached() {
        return Ok(None);
    }
    let stage = stage_for_event(ctx.monitor_events_delivered + 1);
    let info = environment_state_at(sb, ctx.tier, ctx.branch, stage)?;
    Ok(Some(ObservationMessage::monitor(reminder.trigger_type, info.clone())))
}

/// Snapshot a retrieval made now returns.
pub fn retrieval_snapshot<'a>(ctx: &DialogContext, sb: &'a ScenarioBackground) -> Result<&'a ExternalInfo, ScenarioError> {
    environment_state_at(sb, ctx.tier, ctx.branch, ctx.retrieval_stage())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin_templates, generate_scenario, ScenarioSource};
    use ProactiveAction::*;

    fn scenario() -> ScenarioBackground {
        generate_scenario(&builtin_templates()[0], Tier::Complex, ScenarioSource::Seeded(3)).unwrap()
    }

    #[test]
    fn status_follows_reminders_and_user_signals() {
        let mut ctx = DialogContext::new(Tier::Simple, Branch::Positive);
        assert_eq!(expected_status(&ctx), TaskStatus::Pending);
        ctx.observe_agent(SetReminder);
        assert_eq!(expected_status(&ctx), TaskStatus::InProgress);
        let mut sat = ctx.clone();
        sat.observe_user(UserKind::Satisfaction);
        assert_eq!(expected_status(&sat), TaskStatus::Completed);
        let mut cancel = ctx.clone();
        cancel.observe_user(UserKind::Rejection);
        assert_eq!(expected_status(&cancel), TaskStatus::Failed);
    }

    #[test]
    fn first_query_expects_retrieval() {
        let mut ctx = DialogContext::new(Tier::Simple, Branch::Positive);
        ctx.observe_user(UserKind::Opening);
        assert_eq!(expected_actions(&ctx), vec![InfoRetrieval]);
        ctx.observe_agent(InfoRetrieval);
        ctx.observe_observation(ObservationSource::ToolCall);
        assert_eq!(expected_actions(&ctx), vec![NoAction]);
    }

    #[test]
    fn shift_allows_reminder_or_retrieval() {
        let mut ctx = DialogContext::new(Tier::Complex, Branch::Negative);
        ctx.observe_user(UserKind::Shift);
        assert_eq!(expected_actions(&ctx), vec![SetReminder, InfoRetrieval]);
    }

    #[test]
    fn registry_keeps_one_active_record() {
        let mut reg = ReminderRegistry::default();
        assert_eq!(reg.register(&TriggerCondition::none(), "t", 1), Err(RuntimeError::IncompleteTrigger));
        reg.register(&TriggerCondition::event("price below 100"), "t", 2).unwrap();
        reg.register(&TriggerCondition::event("price below 120"), "t", 5).unwrap();
        assert_eq!(reg.records.len(), 2);
        assert_eq!(reg.records.iter().filter(|r| r.active).count(), 1);
        assert_eq!(reg.active().unwrap().condition, "price below 120");
    }

    #[test]
    fn monitor_requires_reminder_and_dormancy() {
        let sb = scenario();
        let ctx = DialogContext::new(Tier::Simple, Branch::Positive);
        let mut reg = ReminderRegistry::default();
        assert_eq!(monitor_tick(&ctx, &reg, &sb, true), Ok(None));
        reg.register(&TriggerCondition::event("x"), "t", 1).unwrap();
        assert_eq!(monitor_tick(&ctx, &reg, &sb, false), Ok(None));
        let obs = monitor_tick(&ctx, &reg, &sb, true).unwrap().unwrap();
        assert_eq!(&obs.latest_external_info, sb.updated_external_data.as_ref().unwrap());
        let mut after = ctx.clone();
        after.observe_observation(ObservationSource::EnvironmentMonitor);
        assert_eq!(monitor_tick(&after, &reg, &sb, true), Ok(None));
    }

    #[test]
    fn complex_negative_events() {
        let sb = scenario();
        let mut ctx = DialogContext::new(Tier::Complex, Branch::Negative);
        let mut reg = ReminderRegistry::default();
        reg.register(&TriggerCondition::event("x"), "t", 1).unwrap();
        let first = monitor_tick(&ctx, &reg, &sb, true).unwrap().unwrap();
        assert_eq!(&first.latest_external_info, sb.updated_external_data.as_ref().unwrap());
        ctx.observe_observation(ObservationSource::EnvironmentMonitor);
        assert!(ctx.latest_event_satisfies());
        let second = monitor_tick(&ctx, &reg, &sb, true).unwrap().unwrap();
        assert_eq!(&second.latest_external_info, sb.intention_shifted_external_data_negative.as_ref().unwrap());
        ctx.observe_observation(ObservationSource::EnvironmentMonitor);
        assert_eq!(expected_actions(&ctx), vec![KeepSilent]);
        assert_eq!(monitor_tick(&ctx, &reg, &sb, true), Ok(None));
    }

    #[test]
    fn user_script_order_for_simple_positive() {
        let mut ctx = DialogContext::new(Tier::Simple, Branch::Positive);
        let mut kinds = vec![];
        let mut step = |ctx: &mut DialogContext, agent: ProactiveAction, obs: Option<ObservationSource>| {
            let k = next_user_kind(ctx);
            kinds.push(k);
            ctx.observe_user(k);
            ctx.observe_agent(agent);
            if let Some(o) = obs {
                ctx.observe_observation(o);
                ctx.observe_agent(if o == ObservationSource::ToolCall { NoAction } else { FollowUp });
            }
        };
        step(&mut ctx, InfoRetrieval, Some(ObservationSource::ToolCall));
        step(&mut ctx, SetReminder, None);
        step(&mut ctx, NoAction, Some(ObservationSource::EnvironmentMonitor));
        step(&mut ctx, CompleteTask, None);
        assert_eq!(kinds, vec![UserKind::Opening, UserKind::Constraints, UserKind::Ack, UserKind::Satisfaction]);
    }
}
