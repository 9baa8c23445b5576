//! Agent response and observation messages: types, lenient parsing,
//! validation and the canonical wire rendering.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::environment::ExternalInfo;
use crate::json::{extract_first_object, write_json, write_str, Json};

/// Message text carried by every environment-monitor observation.
pub const MONITOR_MESSAGE: &str = "**internal trigger: Continuously scan external information**";

macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $wire:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $wire)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $wire),+ }
            }

            pub fn from_wire(s: &str) -> Option<$name> {
                match s { $($wire => Some($name::$variant),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

wire_enum!(ProactiveAction {
    InfoRetrieval => "INFO_RETRIEVAL",
    SetReminder => "SET_REMINDER",
    FollowUp => "FOLLOW_UP",
    KeepSilent => "KEEP_SILENT",
    CompleteTask => "COMPLETE_TASK",
    FailedTask => "FAILED_TASK",
    NoAction => "NO_ACTION",
});

wire_enum!(TaskStatus {
    Pending => "PENDING",
    InProgress => "IN_PROGRESS",
    Completed => "COMPLETED",
    Failed => "FAILED",
});

wire_enum!(TriggerType {
    Time => "TIME",
    Event => "EVENT",
});

wire_enum!(ObservationSource {
    ToolCall => "tool_call",
    EnvironmentMonitor => "environment_monitor",
});

/// Trigger type as written by the agent; unknown strings are kept so the
/// validator can report them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerKind {
    Known(TriggerType),
    Other(String),
}

impl TriggerKind {
    pub fn from_wire(s: &str) -> TriggerKind {
        TriggerType::from_wire(s).map_or_else(|| TriggerKind::Other(s.to_string()), TriggerKind::Known)
    }

    pub fn as_str(&self) -> &str {
        match self {
            TriggerKind::Known(t) => t.as_str(),
            TriggerKind::Other(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TriggerCondition {
    pub kind: Option<TriggerKind>,
    pub value: Option<String>,
}

impl TriggerCondition {
    pub fn none() -> TriggerCondition {
        TriggerCondition::default()
    }

    pub fn event(value: impl Into<String>) -> TriggerCondition {
        TriggerCondition { kind: Some(TriggerKind::Known(TriggerType::Event)), value: Some(value.into()) }
    }

    /// Known type and non-empty value.
    pub fn is_complete(&self) -> bool {
        matches!(self.kind, Some(TriggerKind::Known(_))) && self.value.as_deref().is_some_and(|v| !v.trim().is_empty())
    }

    pub fn trigger_type(&self) -> Option<TriggerType> {
        match self.kind {
            Some(TriggerKind::Known(t)) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDescription {
    pub intention: Option<String>,
    /// Ordered key/value constraints; `None` when the agent wrote null.
    pub constraints: Option<Vec<(String, Json)>>,
    /// `None` when the agent omitted the status; reported by validation.
    pub status: Option<TaskStatus>,
    pub extra: Vec<(String, Json)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentResponse {
    pub response_text: String,
    pub proactive_action: ProactiveAction,
    pub trigger_condition: TriggerCondition,
    pub task_description: TaskDescription,
    /// Unknown top-level fields, kept in order and otherwise ignored.
    pub extra: Vec<(String, Json)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseFailureKind {
    JsonExtraction,
    Format,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseFailure {
    #[error("no decodable JSON object in agent output")]
    JsonExtraction,
    #[error("agent response format error: {reason}")]
    Format {
        reason: String,
        /// Set when the only problem class is an action string outside the
        /// known set.
        unknown_action: Option<String>,
    },
}

impl ParseFailure {
    pub fn kind(&self) -> ParseFailureKind {
        match self {
            ParseFailure::JsonExtraction => ParseFailureKind::JsonExtraction,
            ParseFailure::Format { .. } => ParseFailureKind::Format,
        }
    }

    fn format(reason: impl Into<String>) -> ParseFailure {
        ParseFailure::Format { reason: reason.into(), unknown_action: None }
    }
}

fn field<'a>(entries: &'a [(String, Json)], key: &str) -> Option<&'a Json> {
    entries.iter().find(|(k, _)| k == key).map(|(_, v)| v).filter(|v| !v.is_null())
}

fn opt_string(v: Option<&Json>, what: &str) -> Result<Option<String>, ParseFailure> {
    match v {
        None => Ok(None),
        Some(Json::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ParseFailure::format(alloc::format!("{what} is not a string"))),
    }
}

fn extras(entries: &[(String, Json)], known: &[&str]) -> Vec<(String, Json)> {
    entries.iter().filter(|(k, _)| !known.contains(&k.as_str())).cloned().collect()
}

const TOP_KEYS: [&str; 4] = ["response_text", "proactive_action", "trigger_condition", "task_description"];
const TASK_KEYS: [&str; 3] = ["intention", "constraints", "status"];

/// Parses raw agent output. Prose and code fences around the first
/// decodable JSON object are tolerated.
pub fn parse_agent_response(raw: &str) -> Result<AgentResponse, ParseFailure> {
    let (_, value) = extract_first_object(raw).ok_or(ParseFailure::JsonExtraction)?;
    let Json::Object(top) = value else {
        return Err(ParseFailure::JsonExtraction);
    };
    for key in TOP_KEYS {
        if field(&top, key).is_none() {
            return Err(ParseFailure::format(alloc::format!("missing field {key}")));
        }
    }
    let response_text = opt_string(field(&top, "response_text"), "response_text")?.unwrap_or_default();
    let action_text = field(&top, "proactive_action")
        .and_then(Json::as_str)
        .ok_or_else(|| ParseFailure::format("proactive_action is not a string"))?;
    let proactive_action = ProactiveAction::from_wire(action_text).ok_or_else(|| ParseFailure::Format {
        reason: alloc::format!("unknown proactive_action {action_text:?}"),
        unknown_action: Some(action_text.to_string()),
    })?;

    let Some(Json::Object(trigger)) = field(&top, "trigger_condition") else {
        return Err(ParseFailure::format("trigger_condition is not an object"));
    };
    let trigger_condition = TriggerCondition {
        kind: opt_string(field(trigger, "type"), "trigger type")?.map(|s| TriggerKind::from_wire(&s)),
        value: opt_string(field(trigger, "value"), "trigger value")?,
    };

    let Some(Json::Object(task)) = field(&top, "task_description") else {
        return Err(ParseFailure::format("task_description is not an object"));
    };
    let constraints = match field(task, "constraints") {
        None => None,
        Some(Json::Object(entries)) => Some(entries.clone()),
        Some(_) => return Err(ParseFailure::format("constraints is not an object")),
    };
    let status = match opt_string(field(task, "status"), "status")? {
        None => None,
        Some(s) => Some(
            TaskStatus::from_wire(&s).ok_or_else(|| ParseFailure::format(alloc::format!("unknown status {s:?}")))?,
        ),
    };
    let task_description = TaskDescription {
        intention: opt_string(field(task, "intention"), "intention")?,
        constraints,
        status,
        extra: extras(task, &TASK_KEYS),
    };
    Ok(AgentResponse {
        response_text,
        proactive_action,
        trigger_condition,
        task_description,
        extra: extras(&top, &TOP_KEYS),
    })
}

fn opt_json(v: &Option<String>) -> Json {
    v.as_ref().map_or(Json::Null, |s| Json::str(s))
}

impl AgentResponse {
    pub fn to_json(&self) -> Json {
        let trigger = Json::Object(alloc::vec![
            ("type".into(), self.trigger_condition.kind.as_ref().map_or(Json::Null, |k| Json::str(k.as_str()))),
            ("value".into(), opt_json(&self.trigger_condition.value)),
        ]);
        let mut task = alloc::vec![
            ("intention".into(), opt_json(&self.task_description.intention)),
            (
                "constraints".into(),
                self.task_description.constraints.clone().map_or(Json::Null, Json::Object),
            ),
            ("status".into(), self.task_description.status.map_or(Json::Null, |s| Json::str(s.as_str()))),
        ];
        task.extend(self.task_description.extra.iter().cloned());
        let mut top = alloc::vec![
            ("response_text".into(), Json::str(&self.response_text)),
            ("proactive_action".into(), Json::str(self.proactive_action.as_str())),
            ("trigger_condition".into(), trigger),
            ("task_description".into(), Json::Object(task)),
        ];
        top.extend(self.extra.iter().cloned());
        Json::Object(top)
    }

    /// Canonical single-line wire form.
    pub fn render(&self) -> String {
        self.to_json().render()
    }
}

/// Validation finding classes; each maps to a distinct dialog ending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Finding {
    TriggerConditionFormat,
    TaskDescriptionFormat,
}

/// Structural checks beyond parsing. Returns findings in a fixed order.
pub fn validate_agent_response(r: &AgentResponse) -> Vec<Finding> {
    let mut out = Vec::new();
    let trigger = &r.trigger_condition;
    let bad_type = matches!(trigger.kind, Some(TriggerKind::Other(_)));
    if bad_type || (r.proactive_action == ProactiveAction::SetReminder && !trigger.is_complete()) {
        out.push(Finding::TriggerConditionFormat);
    }
    let task = &r.task_description;
    let completed_not_reset =
        task.status == Some(TaskStatus::Completed) && (task.intention.is_some() || task.constraints.is_some());
    let nested_constraint = task.constraints.as_ref().is_some_and(|c| c.iter().any(|(_, v)| !v.is_scalar()));
    if task.status.is_none() || completed_not_reset || nested_constraint {
        out.push(Finding::TaskDescriptionFormat);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMessage {
    pub source: ObservationSource,
    pub trigger_type: Option<TriggerType>,
    pub message: Option<String>,
    pub latest_external_info: ExternalInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObservationError {
    #[error("tool_call observation must not carry trigger_type or message")]
    ToolCallExtras,
    #[error("environment_monitor observation needs trigger_type and the fixed message")]
    MonitorFields,
    #[error("malformed observation: {0}")]
    Malformed(String),
}

impl ObservationMessage {
    pub fn tool_call(info: ExternalInfo) -> ObservationMessage {
        ObservationMessage {
            source: ObservationSource::ToolCall,
            trigger_type: None,
            message: None,
            latest_external_info: info,
        }
    }

    pub fn monitor(trigger_type: TriggerType, info: ExternalInfo) -> ObservationMessage {
        ObservationMessage {
            source: ObservationSource::EnvironmentMonitor,
            trigger_type: Some(trigger_type),
            message: Some(MONITOR_MESSAGE.to_string()),
            latest_external_info: info,
        }
    }

    pub fn check(&self) -> Result<(), ObservationError> {
        match self.source {
            ObservationSource::ToolCall if self.trigger_type.is_some() || self.message.is_some() => {
                Err(ObservationError::ToolCallExtras)
            }
            ObservationSource::EnvironmentMonitor
                if self.trigger_type.is_none() || self.message.as_deref() != Some(MONITOR_MESSAGE) =>
            {
                Err(ObservationError::MonitorFields)
            }
            _ => Ok(()),
        }
    }
}

/// Wire form of an observation; refuses messages violating the source rules.
pub fn serialize_observation(o: &ObservationMessage) -> Result<String, ObservationError> {
    o.check()?;
    let mut out = String::from("{");
    write_str("source", &mut out);
    out.push_str(": ");
    write_str(o.source.as_str(), &mut out);
    if let (Some(t), Some(m)) = (o.trigger_type, &o.message) {
        out.push_str(", \"trigger_type\": ");
        write_str(t.as_str(), &mut out);
        out.push_str(", \"message\": ");
        write_str(m, &mut out);
    }
    out.push_str(", \"latest_external_info\": ");
    write_json(&o.latest_external_info.to_json(), &mut out);
    out.push('}');
    Ok(out)
}

pub fn parse_observation(text: &str) -> Result<ObservationMessage, ObservationError> {
    let malformed = |s: &str| ObservationError::Malformed(s.to_string());
    let v = Json::parse(text).map_err(|e| ObservationError::Malformed(e.to_string()))?;
    let source = v
        .get("source")
        .and_then(Json::as_str)
        .and_then(ObservationSource::from_wire)
        .ok_or_else(|| malformed("bad source"))?;
    let trigger_type = match v.get("trigger_type") {
        None | Some(Json::Null) => None,
        Some(t) => Some(t.as_str().and_then(TriggerType::from_wire).ok_or_else(|| malformed("bad trigger_type"))?),
    };
    let message = match v.get("message") {
        None | Some(Json::Null) => None,
        Some(m) => Some(m.as_str().ok_or_else(|| malformed("bad message"))?.to_string()),
    };
    let info = v.get("latest_external_info").ok_or_else(|| malformed("missing latest_external_info"))?;
    let o = ObservationMessage {
        source,
        trigger_type,
        message,
        latest_external_info: ExternalInfo::from_json(info).map_err(ObservationError::Malformed)?,
    };
    o.check()?;
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> ExternalInfo {
        ExternalInfo {
            time: "2026-03-13 10:20:12".into(),
            day_of_week: "Friday".into(),
            weather: "Sunny".into(),
            payload_key: "flight_deals".into(),
            payload: "Flight ZX208: 1320 USD".into(),
        }
    }

    const COMPLETE: &str = r#"{"response_text": "I'm glad I could help you find the perfect wireless security camera set! If you need assistance with purchasing or have any other questions, just let me know.", "proactive_action": "COMPLETE_TASK", "trigger_condition": {"type": null, "value": null}, "task_description": {"intention": null, "constraints": null, "status": "COMPLETED"}}"#;

    #[test]
    fn canonical_completion_round_trips_byte_exact() {
        let r = parse_agent_response(COMPLETE).unwrap();
        assert_eq!(r.proactive_action, ProactiveAction::CompleteTask);
        assert_eq!(r.task_description.status, Some(TaskStatus::Completed));
        assert!(validate_agent_response(&r).is_empty());
        assert_eq!(r.render(), COMPLETE);
    }

    #[test]
    fn fenced_output_parses() {
        let raw = alloc::format!("Here you go:\n```json\n{COMPLETE}\n```\nThanks");
        assert_eq!(parse_agent_response(&raw).unwrap().render(), COMPLETE);
    }

    #[test]
    fn failure_classes() {
        assert_eq!(parse_agent_response("I will check that."), Err(ParseFailure::JsonExtraction));
        let missing = r#"{"response_text": "x", "proactive_action": "NO_ACTION", "trigger_condition": {"type": null, "value": null}}"#;
        assert_eq!(parse_agent_response(missing).unwrap_err().kind(), ParseFailureKind::Format);
        let nulled = COMPLETE.replace(r#""trigger_condition": {"type": null, "value": null}"#, r#""trigger_condition": null"#);
        assert_eq!(parse_agent_response(&nulled).unwrap_err().kind(), ParseFailureKind::Format);
        let unknown = COMPLETE.replace("COMPLETE_TASK", "WAIT");
        match parse_agent_response(&unknown) {
            Err(ParseFailure::Format { unknown_action, .. }) => assert_eq!(unknown_action.as_deref(), Some("WAIT")),
            other => panic!("{other:?}"),
        }
        let bad_status = COMPLETE.replace("\"COMPLETED\"", "\"DONE\"");
        assert_eq!(parse_agent_response(&bad_status).unwrap_err().kind(), ParseFailureKind::Format);
    }

    #[test]
    fn extra_fields_are_kept_and_ignored() {
        let raw = COMPLETE.replacen('{', r#"{"confidence": 0.9, "#, 1);
        let r = parse_agent_response(&raw).unwrap();
        assert_eq!(r.extra.len(), 1);
        let expected = alloc::format!("{}, \"confidence\": 0.9}}", &COMPLETE[..COMPLETE.len() - 1]);
        assert_eq!(r.render(), expected);
        assert_eq!(parse_agent_response(&r.render()).unwrap(), r);
    }

    #[test]
    fn reminder_without_value_is_flagged() {
        let raw = r#"{"response_text": "ok", "proactive_action": "SET_REMINDER", "trigger_condition": {"type": "EVENT", "value": null}, "task_description": {"intention": "x", "constraints": {"budget": 1200}, "status": "IN_PROGRESS"}}"#;
        let r = parse_agent_response(raw).unwrap();
        assert_eq!(validate_agent_response(&r), alloc::vec![Finding::TriggerConditionFormat]);
        let weird = raw.replace("\"EVENT\", \"value\": null", "\"WEEKLY\", \"value\": \"v\"");
        let r = parse_agent_response(&weird).unwrap();
        assert_eq!(validate_agent_response(&r), alloc::vec![Finding::TriggerConditionFormat]);
    }

    #[test]
    fn completed_with_slots_is_flagged() {
        let raw = COMPLETE.replace(r#""intention": null"#, r#""intention": "keep""#);
        let r = parse_agent_response(&raw).unwrap();
        assert_eq!(validate_agent_response(&r), alloc::vec![Finding::TaskDescriptionFormat]);
        let no_status = COMPLETE.replace(r#", "status": "COMPLETED""#, "");
        let r = parse_agent_response(&no_status).unwrap();
        assert_eq!(r.task_description.status, None);
        assert_eq!(validate_agent_response(&r), alloc::vec![Finding::TaskDescriptionFormat]);
    }

    #[test]
    fn observation_wire_forms() {
        let tool = ObservationMessage::tool_call(info());
        let text = serialize_observation(&tool).unwrap();
        assert_eq!(
            text,
            r#"{"source": "tool_call", "latest_external_info": {"time": "2026-03-13 10:20:12", "Day of the week": "Friday", "Weather": "Sunny", "flight_deals": "Flight ZX208: 1320 USD"}}"#
        );
        assert_eq!(parse_observation(&text).unwrap(), tool);

        let mon = ObservationMessage::monitor(TriggerType::Event, info());
        let text = serialize_observation(&mon).unwrap();
        assert!(text.starts_with(
            r#"{"source": "environment_monitor", "trigger_type": "EVENT", "message": "**internal trigger: Continuously scan external information**", "latest_external_info": {"#
        ));
        assert_eq!(parse_observation(&text).unwrap(), mon);

        let mut bad = tool.clone();
        bad.message = Some("hi".into());
        assert_eq!(serialize_observation(&bad), Err(ObservationError::ToolCallExtras));
        let mut bad = mon;
        bad.message = Some("other".into());
        assert_eq!(serialize_observation(&bad), Err(ObservationError::MonitorFields));
    }
}
