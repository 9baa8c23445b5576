use proact_core::actors::{FixtureAgent, FixtureKind, OracleAgent, ScriptedUser};
use proact_core::evaluation::{judge_dialog, ActionErrorKind as A, StatusErrorKind as S};
use proact_core::orchestrator::{run_dialog, DialogSpec, EndingReason as E, RunConfig};
use proact_core::scenario::{builtin_templates, generate_scenario, Branch, ScenarioSource, Tier};

fn expectation(kind: FixtureKind) -> (E, Vec<A>, Vec<S>) {
    use FixtureKind as F;
    match kind {
        F::AlwaysSilent => (E::PrematureSilence, vec![A::FollowUpKeepSilentUsage], vec![]),
        F::PrematureCompleter => (E::ArbitraryCompletion, vec![A::CompleteTaskInNegativeBranch], vec![]),
        F::NoReminder => (E::MaxTurnsReached, vec![], vec![]),
        F::EarlyReminder => (E::MissionFinishedProperly, vec![A::FirstSetReminderTooEarly], vec![]),
        F::RetrievalSpammer => (E::MaxTurnsReached, vec![A::UnnecessaryInfoRetrieval], vec![]),
        F::NonJson => (E::AgentResponseJsonExtractionFailed, vec![], vec![]),
        F::MissingField => (E::AgentResponseFormatError, vec![], vec![]),
        F::BadTrigger => (E::TriggerConditionFormatError, vec![], vec![]),
        F::NonResettingCompleter => (E::TaskDescriptionFormatError, vec![A::IntentionConstraintsNotReset], vec![]),
        F::FollowUpAfterRetrieval => (E::MissionFinishedProperly, vec![A::FollowUpKeepSilentUsage], vec![]),
        F::FailedTaskAfterRetrieval => (E::MissionFinishedProperly, vec![A::ShouldTakeNoActionAfterToolCall], vec![]),
        F::InvalidAction => (E::AgentResponseFormatError, vec![A::InvalidAction], vec![]),
        F::RepeatedReminder => (E::MissionFinishedProperly, vec![A::SetReminderTooFrequent], vec![]),
        F::SilentWhenPositive => (E::PrematureSilence, vec![A::KeepSilentInPositiveBranch], vec![]),
        F::EarlyInProgress => (E::MissionFinishedProperly, vec![], vec![S::ShouldBePending]),
        F::PendingAfterReminder => (E::MissionFinishedProperly, vec![], vec![S::ShouldNotBePending]),
        F::CompletedStatusMissing => (E::MissionFinishedProperly, vec![], vec![S::MismatchExpectedCompleted]),
        F::FailedStatusWhenSilent => (E::MissionFinishedProperly, vec![], vec![S::MismatchExpectedInProgress]),
        F::ShiftCompleter => (E::FailedOpeningIntentionShiftPhase, vec![], vec![]),
    }
}

#[test]
fn every_fixture_yields_exactly_its_signature() {
    let cfg = RunConfig::default();
    for template in builtin_templates() {
        for kind in FixtureKind::ALL {
            let (tier, branch) = kind.setting();
            let sb = generate_scenario(template, tier, ScenarioSource::Seeded(21)).unwrap();
            let spec = DialogSpec { scenario: &sb, scenario_ref: template.name, tier, branch, config: &cfg };
            let user = ScriptedUser::new(&sb).unwrap();
            let t = run_dialog(&spec, &FixtureAgent::new(kind, &sb), &user).unwrap();
            let j = judge_dialog(&t, &sb).unwrap();
            let (ending, actions, statuses) = expectation(kind);
            let label = format!("{} on {}", kind.name(), template.name);
            assert_eq!(j.ending, ending, "{label}");
            assert_eq!(j.action_kinds(), actions, "{label}: {:?}", j.diagnostics);
            assert_eq!(j.status_kinds(), statuses, "{label}");
            assert_eq!(j.success, ending == E::MissionFinishedProperly, "{label}");
        }
    }
}

#[test]
fn every_error_variant_has_a_fixture() {
    let mut actions: Vec<A> = FixtureKind::ALL.iter().flat_map(|k| expectation(*k).1).collect();
    let mut statuses: Vec<S> = FixtureKind::ALL.iter().flat_map(|k| expectation(*k).2).collect();
    actions.sort();
    actions.dedup();
    statuses.sort();
    statuses.dedup();
    assert_eq!(actions, A::ALL);
    assert_eq!(statuses, S::ALL);
}

#[test]
fn non_json_transcript_keeps_the_raw_output() {
    let sb = generate_scenario(&builtin_templates()[0], Tier::Simple, ScenarioSource::Seeded(1)).unwrap();
    let cfg = RunConfig::default();
    let spec = DialogSpec { scenario: &sb, scenario_ref: "p", tier: Tier::Simple, branch: Branch::Positive, config: &cfg };
    let t = run_dialog(&spec, &FixtureAgent::new(FixtureKind::NonJson, &sb), &ScriptedUser::new(&sb).unwrap()).unwrap();
    assert_eq!(t.turns.len(), 2);
    assert!(t.turns[1].content.starts_with("Let me check"));
}

#[test]
fn oracle_judged_clean_everywhere() {
    let cfg = RunConfig::default();
    for template in builtin_templates() {
        for tier in Tier::ALL {
            for branch in Branch::ALL {
                let sb = generate_scenario(template, tier, ScenarioSource::Seeded(4)).unwrap();
                let spec = DialogSpec { scenario: &sb, scenario_ref: template.name, tier, branch, config: &cfg };
                let agent = OracleAgent { scenario: &sb, tier, branch };
                let t = run_dialog(&spec, &agent, &ScriptedUser::new(&sb).unwrap()).unwrap();
                let j = judge_dialog(&t, &sb).unwrap();
                assert!(j.success);
                assert!(j.action_errors.is_empty() && j.status_errors.is_empty() && j.diagnostics.is_empty());
            }
        }
    }
}
