//! Scenario backgrounds: schema, validation, environment state selection
//! and generation.

mod generate;
mod templates;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::environment::ExternalInfo;
use crate::protocol::TriggerType;

pub use generate::{derive_seed, generate_scenario, scenario_prompt, GenerationError, ScenarioSource, MAX_GENERATION_ATTEMPTS};
pub use templates::{builtin_templates, template_by_name, ScenarioTemplate, TEMPLATE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tier {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Branch {
    Positive,
    Negative,
}

impl Tier {
    pub const ALL: [Tier; 2] = [Tier::Simple, Tier::Complex];

    /// Number of environment-monitor events a dialog of this tier receives.
    pub fn monitor_events(self) -> u32 {
        match self {
            Tier::Simple => 1,
            Tier::Complex => 2,
        }
    }
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::Positive, Branch::Negative];
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Simple => "SIMPLE",
            Tier::Complex => "COMPLEX",
        })
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Positive => "POSITIVE",
            Branch::Negative => "NEGATIVE",
        })
    }
}

/// Point in a dialog at which the environment is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Initial,
    FirstMonitor,
    SecondMonitor,
}

/// One scenario record. Every field is optional at the type level so that
/// incomplete records can be loaded and reported by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioBackground {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_user_query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_external_data: Option<ExternalInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_rejection_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updated_external_data: Option<ExternalInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updated_external_data_negative: Option<ExternalInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intention_shift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intention_shifted_external_data: Option<ExternalInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intention_shifted_external_data_negative: Option<ExternalInfo>,
    /// Unrecognised keys such as `_sample_index`; carried through untouched.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioIssue {
    MissingField(String),
    BadTriggerType(String),
    BadSnapshot { field: String, problems: Vec<String> },
    PartialShiftFields,
    PayloadKeyMismatch { field: String, key: String, expected: String },
    TimeOrder { earlier: String, later: String },
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioIssue::MissingField(n) => write!(f, "missing field {n}"),
            ScenarioIssue::BadTriggerType(t) => write!(f, "trigger_type {t:?} is not TIME or EVENT"),
            ScenarioIssue::BadSnapshot { field, problems } => write!(f, "{field}: {}", problems.join("; ")),
            ScenarioIssue::PartialShiftFields => f.write_str("shift fields must be all present or all absent"),
            ScenarioIssue::PayloadKeyMismatch { field, key, expected } => {
                write!(f, "{field} uses payload key {key:?}, expected {expected:?}")
            }
            ScenarioIssue::TimeOrder { earlier, later } => write!(f, "{later} is earlier than {earlier}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ScenarioIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("a SIMPLE dialog has no second monitor event")]
    NoSecondMonitor,
    #[error("scenario lacks snapshot {0}")]
    MissingSnapshot(&'static str),
}

impl ScenarioBackground {
    pub fn name(&self) -> &str {
        self.scenario_name.as_deref().unwrap_or("unnamed")
    }

    pub fn has_shift(&self) -> bool {
        self.intention_shift.is_some()
            && self.intention_shifted_external_data.is_some()
            && self.intention_shifted_external_data_negative.is_some()
    }

    /// Tier implied by the presence of the shift fields.
    pub fn natural_tier(&self) -> Tier {
        if self.has_shift() {
            Tier::Complex
        } else {
            Tier::Simple
        }
    }

    pub fn trigger(&self) -> TriggerType {
        self.trigger_type.as_deref().and_then(TriggerType::from_wire).unwrap_or(TriggerType::Event)
    }

    pub fn payload_key(&self) -> &str {
        self.initial_external_data.as_ref().map_or("external_info", |i| i.payload_key.as_str())
    }

    fn snapshots(&self) -> [(&'static str, Option<&ExternalInfo>); 5] {
        [
            ("initial_external_data", self.initial_external_data.as_ref()),
            ("updated_external_data", self.updated_external_data.as_ref()),
            ("updated_external_data_negative", self.updated_external_data_negative.as_ref()),
            ("intention_shifted_external_data", self.intention_shifted_external_data.as_ref()),
            ("intention_shifted_external_data_negative", self.intention_shifted_external_data_negative.as_ref()),
        ]
    }
}

/// Checks required fields for `tier`, snapshot contents, payload key
/// agreement and timestamp order.
pub fn validate_scenario(sb: &ScenarioBackground, tier: Tier) -> ValidationReport {
    let mut issues = Vec::new();
    let text_fields = [
        ("scenario_name", &sb.scenario_name),
        ("user_profile", &sb.user_profile),
        ("initial_user_query", &sb.initial_user_query),
        ("trigger_type", &sb.trigger_type),
        ("user_rejection_reason", &sb.user_rejection_reason),
    ];
    for (name, value) in text_fields {
        if value.as_deref().is_none_or(|v| v.trim().is_empty()) {
            issues.push(ScenarioIssue::MissingField(name.into()));
        }
    }
    if let Some(t) = &sb.trigger_type {
        if !t.trim().is_empty() && TriggerType::from_wire(t).is_none() {
            issues.push(ScenarioIssue::BadTriggerType(t.clone()));
        }
    }

    let shift_present = [
        sb.intention_shift.is_some(),
        sb.intention_shifted_external_data.is_some(),
        sb.intention_shifted_external_data_negative.is_some(),
    ];
    match tier {
        Tier::Complex => {
            if sb.intention_shift.as_deref().is_none_or(|v| v.trim().is_empty()) {
                issues.push(ScenarioIssue::MissingField("intention_shift".into()));
            }
        }
        Tier::Simple => {
            if shift_present.iter().any(|p| *p) && !shift_present.iter().all(|p| *p) {
                issues.push(ScenarioIssue::PartialShiftFields);
            }
        }
    }

    let expected_key = sb.initial_external_data.as_ref().map(|i| i.payload_key.clone());
    for (i, (name, snap)) in sb.snapshots().into_iter().enumerate() {
        let required = i < 3 || tier == Tier::Complex;
        match snap {
            None if required => issues.push(ScenarioIssue::MissingField(name.into())),
            None => {}
            Some(info) => {
                let problems = info.problems();
                if !problems.is_empty() {
                    issues.push(ScenarioIssue::BadSnapshot { field: name.into(), problems });
                }
                if let Some(expected) = &expected_key {
                    if &info.payload_key != expected {
                        issues.push(ScenarioIssue::PayloadKeyMismatch {
                            field: name.into(),
                            key: info.payload_key.clone(),
                            expected: expected.clone(),
                        });
                    }
                }
            }
        }
    }

    // Each later stage follows the snapshot it is sampled after.
    let order = [
        (&sb.initial_external_data, &sb.updated_external_data, "initial_external_data", "updated_external_data"),
        (
            &sb.initial_external_data,
            &sb.updated_external_data_negative,
            "initial_external_data",
            "updated_external_data_negative",
        ),
        (
            &sb.updated_external_data,
            &sb.intention_shifted_external_data,
            "updated_external_data",
            "intention_shifted_external_data",
        ),
        (
            &sb.updated_external_data,
            &sb.intention_shifted_external_data_negative,
            "updated_external_data",
            "intention_shifted_external_data_negative",
        ),
    ];
    for (a, b, an, bn) in order {
        if let (Some(ta), Some(tb)) = (a.as_ref().and_then(|x| x.timestamp()), b.as_ref().and_then(|x| x.timestamp())) {
            if tb < ta {
                issues.push(ScenarioIssue::TimeOrder { earlier: an.to_string(), later: bn.to_string() });
            }
        }
    }
    ValidationReport { issues }
}

/// Snapshot the environment shows at `stage` of a `tier`/`branch` dialog.
/// The first monitor event of a COMPLEX dialog always satisfies the
/// original needs, whatever the branch.
pub fn environment_state_at(
    sb: &ScenarioBackground,
    tier: Tier,
    branch: Branch,
    stage: Stage,
) -> Result<&ExternalInfo, ScenarioError> {
    let (snap, name) = match (stage, tier, branch) {
        (Stage::Initial, _, _) => (&sb.initial_external_data, "initial_external_data"),
        (Stage::FirstMonitor, Tier::Simple, Branch::Negative) => {
            (&sb.updated_external_data_negative, "updated_external_data_negative")
        }
        (Stage::FirstMonitor, _, _) => (&sb.updated_external_data, "updated_external_data"),
        (Stage::SecondMonitor, Tier::Simple, _) => return Err(ScenarioError::NoSecondMonitor),
        (Stage::SecondMonitor, Tier::Complex, Branch::Positive) => {
            (&sb.intention_shifted_external_data, "intention_shifted_external_data")
        }
        (Stage::SecondMonitor, Tier::Complex, Branch::Negative) => {
            (&sb.intention_shifted_external_data_negative, "intention_shifted_external_data_negative")
        }
    };
    snap.as_ref().ok_or(ScenarioError::MissingSnapshot(name))
}

/// Whether the snapshot delivered at monitor event `event` (1-based)
/// satisfies the user's needs at that point. This label is what the
/// reference agent and the judge act on.
pub fn monitor_event_satisfies(tier: Tier, branch: Branch, event: u32) -> bool {
    matches!(
        (tier, branch, event),
        (Tier::Simple, Branch::Positive, 1) | (Tier::Complex, _, 1) | (Tier::Complex, Branch::Positive, 2)
    )
}

/// Stage sampled for monitor event `event` (1-based).
pub fn stage_for_event(event: u32) -> Stage {
    if event <= 1 {
        Stage::FirstMonitor
    } else {
        Stage::SecondMonitor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScenarioBackground {
        generate_scenario(&builtin_templates()[0], Tier::Complex, ScenarioSource::Seeded(7)).unwrap()
    }

    #[test]
    fn generated_scenario_is_valid() {
        let sb = sample();
        assert!(validate_scenario(&sb, Tier::Complex).is_ok());
        assert!(validate_scenario(&sb, Tier::Simple).is_ok());
    }

    #[test]
    fn complex_requires_shift() {
        let mut sb = sample();
        sb.intention_shift = None;
        let report = validate_scenario(&sb, Tier::Complex);
        assert!(report.issues.contains(&ScenarioIssue::MissingField("intention_shift".into())));
        assert!(validate_scenario(&sb, Tier::Simple).issues.contains(&ScenarioIssue::PartialShiftFields));
    }

    #[test]
    fn second_monitor_rejected_for_simple() {
        let sb = sample();
        assert_eq!(
            environment_state_at(&sb, Tier::Simple, Branch::Positive, Stage::SecondMonitor),
            Err(ScenarioError::NoSecondMonitor)
        );
    }

    #[test]
    fn satisfaction_labels() {
        let table = [
            (Tier::Simple, Branch::Positive, 1, true),
            (Tier::Simple, Branch::Negative, 1, false),
            (Tier::Complex, Branch::Positive, 1, true),
            (Tier::Complex, Branch::Negative, 1, true),
            (Tier::Complex, Branch::Positive, 2, true),
            (Tier::Complex, Branch::Negative, 2, false),
        ];
        for (t, b, e, want) in table {
            assert_eq!(monitor_event_satisfies(t, b, e), want, "{t} {b} {e}");
        }
    }
}
