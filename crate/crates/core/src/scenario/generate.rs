use alloc::string::{String, ToString};
use alloc::vec;

use sha2::{Digest, Sha256};

use super::{validate_scenario, ScenarioBackground, ScenarioTemplate, Tier};
use crate::chat::{ChatChannel, ChatMessage, ChatRequest, ChatRole};
use crate::json::extract_first_object;
use crate::prompts::{render, SCENARIO_GENERATION, SCENARIO_SHIFT_ADDENDUM};

pub const MAX_GENERATION_ATTEMPTS: usize = 3;

pub enum ScenarioSource<'a> {
    /// Offline generator; identical seeds give identical scenarios.
    Seeded(u64),
    Llm { channel: &'a dyn ChatChannel, model: &'a str, temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerationError {
    #[error("scenario generation failed after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: String },
}

/// Mixes a base seed with labels into an independent 64-bit seed.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Generation prompt for `template`; COMPLEX scenes also ask for the
/// shift fields.
pub fn scenario_prompt(template: &ScenarioTemplate, tier: Tier) -> String {
    let kind = &template.kinds[0];
    let query = render(template.queries[0], &[("noun", kind.noun), ("purpose", kind.purposes[0])]);
    let vars = [
        ("scenario_description", template.description),
        ("scenario_name", template.name),
        ("initial_query_template", query.as_str()),
        ("external_info_key", template.payload_key),
        ("rejection_reason_template", template.rejection_template),
    ];
    let mut prompt = render(SCENARIO_GENERATION, &vars);
    if tier == Tier::Complex {
        prompt.push_str("\n\n");
        prompt.push_str(&render(SCENARIO_SHIFT_ADDENDUM, &vars));
    }
    prompt
}

fn attempt_llm(
    template: &ScenarioTemplate,
    tier: Tier,
    channel: &dyn ChatChannel,
    model: &str,
    temperature: f64,
) -> Result<ScenarioBackground, String> {
    let req = ChatRequest {
        model: model.to_string(),
        messages: vec![ChatMessage::new(ChatRole::User, scenario_prompt(template, tier))],
        temperature,
        max_output: None,
    };
    let text = channel.complete(&req).map_err(|e| e.to_string())?;
    let (span, _) = extract_first_object(&text).ok_or("no JSON object in generator output")?;
    let sb: ScenarioBackground = serde_json::from_str(span).map_err(|e| e.to_string())?;
    let report = validate_scenario(&sb, tier);
    match report.issues.first() {
        None => Ok(sb),
        Some(issue) => Err(issue.to_string()),
    }
}

/// Produces a scenario that validates for `tier`, retrying failed
/// generations up to [`MAX_GENERATION_ATTEMPTS`] times.
pub fn generate_scenario(
    template: &ScenarioTemplate,
    tier: Tier,
    source: ScenarioSource<'_>,
) -> Result<ScenarioBackground, GenerationError> {
    let mut last = String::new();
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let result = match source {
            ScenarioSource::Seeded(seed) => {
                let sb = template.build(tier, derive_seed(seed, &["attempt", &attempt.to_string()]));
                match validate_scenario(&sb, tier).issues.first() {
                    None => Ok(sb),
                    Some(issue) => Err(issue.to_string()),
                }
            }
            ScenarioSource::Llm { channel, model, temperature } => attempt_llm(template, tier, channel, model, temperature),
        };
        match result {
            Ok(sb) => return Ok(sb),
            Err(e) => last = e,
        }
    }
    Err(GenerationError::Exhausted { attempts: MAX_GENERATION_ATTEMPTS, last })
}
