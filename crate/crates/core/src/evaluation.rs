//! Offline judging of finished transcripts and benchmark aggregation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::orchestrator::{EndingReason, Transcript, TurnRole};
use crate::protocol::{parse_agent_response, parse_observation, ObservationSource, ParseFailure, ProactiveAction, TaskStatus};
use crate::runtime::{expected_actions, expected_status, next_user_kind, retrieval_snapshot, DialogContext, LastInput};
use crate::scenario::{environment_state_at, stage_for_event, Branch, ScenarioBackground, Tier};

macro_rules! variant_names {
    ($name:ident { $($variant:ident => $wire:literal,)+ }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $wire)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $wire,)+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

variant_names!(ActionErrorKind {
    UnnecessaryInfoRetrieval => "UNNECESSARY_INFO_RETRIEVAL",
    FirstSetReminderTooEarly => "FIRST_SET_REMINDER_TOO_EARLY",
    FollowUpKeepSilentUsage => "FOLLOW_UP_KEEP_SILENT_USAGE",
    IntentionConstraintsNotReset => "INTENTION_CONSTRAINTS_NOT_RESET",
    InvalidAction => "INVALID_ACTION",
    ShouldTakeNoActionAfterToolCall => "SHOULD_TAKE_NO_ACTION_AFTER_TOOL_CALL",
    SetReminderTooFrequent => "SET_REMINDER_TOO_FREQUENT",
    CompleteTaskInNegativeBranch => "COMPLETE_TASK_IN_NEGATIVE_BRANCH",
    KeepSilentInPositiveBranch => "KEEP_SILENT_IN_POSITIVE_BRANCH",
});

variant_names!(StatusErrorKind {
    ShouldBePending => "SHOULD_BE_PENDING",
    ShouldNotBePending => "SHOULD_NOT_BE_PENDING",
    MismatchExpectedCompleted => "MISMATCH_EXPECTED_COMPLETED",
    MismatchExpectedInProgress => "MISMATCH_EXPECTED_IN_PROGRESS",
});

/// `turn` indexes [`Transcript::turns`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionError {
    pub kind: ActionErrorKind,
    pub turn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusError {
    pub kind: StatusErrorKind,
    pub turn: usize,
    pub observed: TaskStatus,
}

/// Departures from the reference flow that no error row covers. Kept for
/// inspection and not counted against accuracy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub turn: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogJudgment {
    pub scenario_ref: String,
    pub tier: Tier,
    pub branch: Branch,
    pub success: bool,
    pub ending: EndingReason,
    pub action_errors: Vec<ActionError>,
    pub status_errors: Vec<StatusError>,
    pub agent_turns: u32,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl DialogJudgment {
    pub fn action_error_turns(&self) -> u32 {
        distinct_turns(self.action_errors.iter().map(|e| e.turn))
    }

    pub fn status_error_turns(&self) -> u32 {
        distinct_turns(self.status_errors.iter().map(|e| e.turn))
    }

    pub fn action_kinds(&self) -> Vec<ActionErrorKind> {
        let mut v: Vec<_> = self.action_errors.iter().map(|e| e.kind).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn status_kinds(&self) -> Vec<StatusErrorKind> {
        let mut v: Vec<_> = self.status_errors.iter().map(|e| e.kind).collect();
        v.sort();
        v.dedup();
        v
    }
}

fn distinct_turns(turns: impl Iterator<Item = usize>) -> u32 {
    let mut v: Vec<usize> = turns.collect();
    v.sort_unstable();
    v.dedup();
    v.len() as u32
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("transcript has no ending")]
    NoEnding,
    #[error("turn {turn}: {reason}")]
    RoleOrder { turn: usize, reason: &'static str },
    #[error("turn {0}: assistant output does not parse and is not the final turn")]
    UnparsedAssistant(usize),
    #[error("turn {turn}: malformed observation: {reason}")]
    BadObservation { turn: usize, reason: String },
    #[error("turn {0}: observation snapshot differs from the scenario state")]
    SnapshotMismatch(usize),
}

fn check_roles(t: &Transcript) -> Result<(), JudgeError> {
    let turns = &t.turns;
    if let Some(first) = turns.first() {
        if first.role != TurnRole::User {
            return Err(JudgeError::RoleOrder { turn: 0, reason: "dialog must open with a user turn" });
        }
    }
    for (i, pair) in turns.windows(2).enumerate() {
        let turn = i + 1;
        match (pair[0].role, pair[1].role) {
            (TurnRole::User, TurnRole::User) => {
                return Err(JudgeError::RoleOrder { turn, reason: "two consecutive user turns" })
            }
            (TurnRole::Assistant, TurnRole::Assistant) => {
                return Err(JudgeError::RoleOrder { turn, reason: "two consecutive assistant turns" })
            }
            (TurnRole::Observation, r) if r != TurnRole::Assistant => {
                return Err(JudgeError::RoleOrder { turn, reason: "observation not followed by an assistant turn" })
            }
            (TurnRole::User, TurnRole::Observation) => {
                return Err(JudgeError::RoleOrder { turn, reason: "observation directly after a user turn" })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Table-row classification for an action outside the expected set.
pub fn classify_action(ctx: &DialogContext, action: ProactiveAction) -> Option<ActionErrorKind> {
    use ActionErrorKind as K;
    use ProactiveAction::*;
    let current = ctx.agent_turns + 1;
    let at_monitor = ctx.answering_monitor();
    let refined_since = |prior: u32| ctx.last_refinement_at.is_some_and(|r| r >= prior);
    let repeated = |prior: Option<u32>| prior.is_some_and(|p| current - p <= 2 && !refined_since(p));
    let after_first_retrieval =
        ctx.last_input == Some(LastInput::Observation(ObservationSource::ToolCall)) && !ctx.constraints_supplied;
    match action {
        FollowUp | KeepSilent if !at_monitor => Some(K::FollowUpKeepSilentUsage),
        InfoRetrieval if at_monitor || repeated(ctx.last_retrieval_turn) => Some(K::UnnecessaryInfoRetrieval),
        SetReminder if !ctx.constraints_supplied && ctx.reminders_set == 0 => Some(K::FirstSetReminderTooEarly),
        SetReminder if repeated(ctx.last_reminder_turn) => Some(K::SetReminderTooFrequent),
        CompleteTask if ctx.branch == Branch::Negative => Some(K::CompleteTaskInNegativeBranch),
        KeepSilent if expected_actions(ctx).contains(&FollowUp) => Some(match ctx.branch {
            Branch::Positive => K::KeepSilentInPositiveBranch,
            Branch::Negative => K::FollowUpKeepSilentUsage,
        }),
        _ if after_first_retrieval => Some(K::ShouldTakeNoActionAfterToolCall),
        _ => None,
    }
}

/// Table-row classification for a status that differs from `expected`.
pub fn classify_status(expected: TaskStatus, observed: TaskStatus) -> Option<StatusErrorKind> {
    if expected == observed {
        return None;
    }
    Some(match (expected, observed) {
        (TaskStatus::Pending, _) => StatusErrorKind::ShouldBePending,
        (_, TaskStatus::Pending) => StatusErrorKind::ShouldNotBePending,
        (TaskStatus::Completed, _) => StatusErrorKind::MismatchExpectedCompleted,
        (TaskStatus::InProgress, _) => StatusErrorKind::MismatchExpectedInProgress,
        (TaskStatus::Failed, _) => return None,
    })
}

/// Replays `t` against the reference rules and records every deviation.
pub fn judge_dialog(t: &Transcript, sb: &ScenarioBackground) -> Result<DialogJudgment, JudgeError> {
    let ending = t.ending.ok_or(JudgeError::NoEnding)?;
    check_roles(t)?;
    let mut j = DialogJudgment {
        scenario_ref: t.scenario_ref.clone(),
        tier: t.tier,
        branch: t.branch,
        success: ending == EndingReason::MissionFinishedProperly,
        ending,
        action_errors: Vec::new(),
        status_errors: Vec::new(),
        agent_turns: 0,
        diagnostics: Vec::new(),
    };
    let mut ctx = DialogContext::new(t.tier, t.branch);
    let last = t.turns.len().saturating_sub(1);
    for (i, turn) in t.turns.iter().enumerate() {
        match turn.role {
            TurnRole::User => ctx.observe_user(next_user_kind(&ctx)),
            TurnRole::Observation => {
                let obs = parse_observation(&turn.content)
                    .map_err(|e| JudgeError::BadObservation { turn: i, reason: e.to_string() })?;
                let expected = match obs.source {
                    ObservationSource::ToolCall => retrieval_snapshot(&ctx, sb),
                    ObservationSource::EnvironmentMonitor => {
                        environment_state_at(sb, t.tier, t.branch, stage_for_event(ctx.monitor_events_delivered + 1))
                    }
                };
                if expected.ok() != Some(&obs.latest_external_info) {
                    return Err(JudgeError::SnapshotMismatch(i));
                }
                ctx.observe_observation(obs.source);
            }
            TurnRole::Assistant => {
                let r = match parse_agent_response(&turn.content) {
                    Ok(r) => r,
                    Err(_) if i != last => return Err(JudgeError::UnparsedAssistant(i)),
                    Err(ParseFailure::Format { unknown_action: Some(a), .. }) => {
                        j.agent_turns += 1;
                        j.action_errors.push(ActionError { kind: ActionErrorKind::InvalidAction, turn: i });
                        j.diagnostics.push(Diagnostic { turn: i, note: format!("unknown action {a:?}") });
                        continue;
                    }
                    Err(e) => {
                        j.diagnostics.push(Diagnostic { turn: i, note: format!("final output unusable: {e}") });
                        continue;
                    }
                };
                j.agent_turns += 1;
                let action = r.proactive_action;
                let allowed = expected_actions(&ctx);
                if !allowed.contains(&action) {
                    match classify_action(&ctx, action) {
                        Some(kind) => j.action_errors.push(ActionError { kind, turn: i }),
                        None => j.diagnostics.push(Diagnostic {
                            turn: i,
                            note: format!("off_script: {action} where {allowed:?} expected"),
                        }),
                    }
                }
                let task = &r.task_description;
                if action == ProactiveAction::CompleteTask && (task.intention.is_some() || task.constraints.is_some()) {
                    j.action_errors.push(ActionError { kind: ActionErrorKind::IntentionConstraintsNotReset, turn: i });
                }
                let after = ctx.after_agent(action);
                let want = expected_status(&after);
                match task.status {
                    None => j.diagnostics.push(Diagnostic { turn: i, note: "status missing".into() }),
                    Some(observed) => match classify_status(want, observed) {
                        Some(kind) => j.status_errors.push(StatusError { kind, turn: i, observed }),
                        None if want != observed => j.diagnostics.push(Diagnostic {
                            turn: i,
                            note: format!("status {observed} where {want} expected"),
                        }),
                        None => {}
                    },
                }
                ctx = after;
            }
        }
    }
    Ok(j)
}

/// Percentage held as integer hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent {
    pub centi: u64,
}

impl Percent {
    pub fn as_f64(self) -> f64 {
        self.centi as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.centi / 100, self.centi % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Percent, D::Error> {
        let v = f64::deserialize(d)?;
        if !(0.0..=100.0).contains(&v) {
            return Err(serde::de::Error::custom("percent outside [0, 100]"));
        }
        Ok(Percent { centi: (v * 100.0 + 0.5) as u64 })
    }
}

/// `round(a / b)` with halves rounded up.
fn div_half_up(a: u128, b: u128) -> u64 {
    ((2 * a + b) / (2 * b)) as u64
}

/// `100 * num / den` rounded half-up to hundredths; undefined for `den = 0`.
pub fn ratio_percent(num: u64, den: u64) -> Option<Percent> {
    (den != 0).then(|| Percent { centi: div_half_up(num as u128 * 10_000, den as u128) })
}

/// Equal-weight mean of two branch rates, computed from the exact counts
/// and rounded once.
pub fn equal_weight_percent(pos_hits: u64, pos_n: u64, neg_hits: u64, neg_n: u64) -> Option<Percent> {
    if pos_n == 0 || neg_n == 0 {
        return None;
    }
    let num = (pos_hits as u128 * neg_n as u128 + neg_hits as u128 * pos_n as u128) * 10_000;
    Some(Percent { centi: div_half_up(num, 2 * pos_n as u128 * neg_n as u128) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("rate undefined: no agent turns")]
    Undefined,
}

/// Share of agent turns without any action error.
pub fn action_accuracy(js: &[DialogJudgment]) -> Result<Percent, EvalError> {
    let turns: u64 = js.iter().map(|j| j.agent_turns as u64).sum();
    let bad: u64 = js.iter().map(|j| j.action_error_turns() as u64).sum();
    ratio_percent(turns - bad, turns).ok_or(EvalError::Undefined)
}

/// Share of agent turns without any status error.
pub fn status_accuracy(js: &[DialogJudgment]) -> Result<Percent, EvalError> {
    let turns: u64 = js.iter().map(|j| j.agent_turns as u64).sum();
    let bad: u64 = js.iter().map(|j| j.status_error_turns() as u64).sum();
    ratio_percent(turns - bad, turns).ok_or(EvalError::Undefined)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellReport {
    pub tier: Tier,
    pub branch: Branch,
    pub dialogs: u64,
    pub successes: u64,
    pub success_rate: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierReport {
    pub tier: Tier,
    pub dialogs: u64,
    pub overall: Option<Percent>,
    pub agent_turns: u64,
    pub action_accuracy: Option<Percent>,
    pub status_accuracy: Option<Percent>,
}

pub const ACCURACY_SCOPE: &str =
    "all parsed agent turns, including turns before an output-format ending; unknown-action outputs count as turns";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<CellReport>,
    pub tiers: Vec<TierReport>,
    pub endings: BTreeMap<EndingReason, u64>,
    pub action_errors: BTreeMap<ActionErrorKind, u64>,
    pub status_errors: BTreeMap<StatusErrorKind, u64>,
    pub accuracy_scope: String,
    #[serde(default)]
    pub config_hash: Option<String>,
}

pub fn aggregate_report(js: &[DialogJudgment]) -> BenchmarkReport {
    let mut cells = Vec::new();
    let mut tiers = Vec::new();
    for tier in Tier::ALL {
        let mut counts = [(0u64, 0u64); 2];
        for (slot, branch) in Branch::ALL.into_iter().enumerate() {
            let cell: Vec<_> = js.iter().filter(|j| j.tier == tier && j.branch == branch).collect();
            let hits = cell.iter().filter(|j| j.success).count() as u64;
            counts[slot] = (hits, cell.len() as u64);
            cells.push(CellReport {
                tier,
                branch,
                dialogs: cell.len() as u64,
                successes: hits,
                success_rate: ratio_percent(hits, cell.len() as u64),
            });
        }
        let in_tier: Vec<DialogJudgment> = js.iter().filter(|j| j.tier == tier).cloned().collect();
        tiers.push(TierReport {
            tier,
            dialogs: in_tier.len() as u64,
            overall: equal_weight_percent(counts[0].0, counts[0].1, counts[1].0, counts[1].1),
            agent_turns: in_tier.iter().map(|j| j.agent_turns as u64).sum(),
            action_accuracy: action_accuracy(&in_tier).ok(),
            status_accuracy: status_accuracy(&in_tier).ok(),
        });
    }
    let mut endings = BTreeMap::new();
    let mut action_errors = BTreeMap::new();
    let mut status_errors = BTreeMap::new();
    for j in js {
        *endings.entry(j.ending).or_insert(0) += 1;
        for e in &j.action_errors {
            *action_errors.entry(e.kind).or_insert(0) += 1;
        }
        for e in &j.status_errors {
            *status_errors.entry(e.kind).or_insert(0) += 1;
        }
    }
    BenchmarkReport {
        cells,
        tiers,
        endings,
        action_errors,
        status_errors,
        accuracy_scope: ACCURACY_SCOPE.to_string(),
        config_hash: None,
    }
}

fn cell(p: Option<Percent>) -> String {
    p.map_or_else(|| "n/a".to_string(), |p| p.to_string())
}

/// Plain-text table: one row per tier with branch rates, overall and the
/// two accuracies.
pub fn render_report_table(r: &BenchmarkReport) -> String {
    let header = ["Tier", "Positive (%)", "Negative (%)", "Overall (%)", "Action Acc (%)", "Status Acc (%)"];
    let mut rows = Vec::new();
    for t in &r.tiers {
        let rate = |b: Branch| r.cells.iter().find(|c| c.tier == t.tier && c.branch == b).and_then(|c| c.success_rate);
        rows.push([
            t.tier.to_string(),
            cell(rate(Branch::Positive)),
            cell(rate(Branch::Negative)),
            cell(t.overall),
            cell(t.action_accuracy),
            cell(t.status_accuracy),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[&str]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    for row in &rows {
        out.push('\n');
        out.push_str(&line(&row.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    if let Some(h) = &r.config_hash {
        out.push_str(&format!("\nconfig {h}"));
    }
    out.push('\n');
    out
}
