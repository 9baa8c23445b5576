//! Prompt templates and their placeholder rendering.

use alloc::string::String;

pub const AGENT_BASIC: &str = include_str!("prompts/agent_basic.txt");
pub const AGENT_GUIDANCE: &str = include_str!("prompts/agent_guidance.txt");
pub const USER_SIMULATOR: &str = include_str!("prompts/user_simulator.txt");
pub const USER_CRITIC: &str = include_str!("prompts/user_critic.txt");
pub const AGENT_CRITIC: &str = include_str!("prompts/agent_critic.txt");
pub const SCENARIO_GENERATION: &str = include_str!("prompts/scenario_generation.txt");
pub const SCENARIO_SHIFT_ADDENDUM: &str = include_str!("prompts/scenario_shift_addendum.txt");

/// Fills `{name}` placeholders from `vars` and collapses `{{` / `}}` to
/// single braces. Braces around anything else are copied unchanged.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
            continue;
        }
        if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
            continue;
        }
        if tail.starts_with('{') {
            if let Some(end) = tail.find('}') {
                let name = &tail[1..end];
                if let Some((_, value)) = vars.iter().find(|(k, _)| *k == name) {
                    out.push_str(value);
                    rest = &tail[end + 1..];
                    continue;
                }
            }
        }
        out.push_str(&tail[..1]);
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// System prompt for the agent under test.
pub fn agent_system_prompt(guided: bool) -> String {
    let mut s = render(AGENT_BASIC, &[]);
    if guided {
        s.push_str("\n\n");
        s.push_str(AGENT_GUIDANCE);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_handles_escapes_and_unknown_names() {
        assert_eq!(render("{{ {a} }} {b} {Instructions:}", &[("a", "x")]), "{ x } {b} {Instructions:}");
        assert_eq!(render("}{", &[]), "}{");
    }

    #[test]
    fn agent_prompt_shape() {
        let basic = agent_system_prompt(false);
        assert!(basic.starts_with("**Role:**\nYou are a proactive agent"));
        assert!(basic.contains("\"constraints\": { ... } or null,"));
        assert!(!basic.contains("{{"));
        assert!(basic.ends_with("    }\n}"));
        let guided = agent_system_prompt(true);
        assert!(guided.starts_with(&basic));
        assert!(guided.ends_with("of which source is `tool_call`."));
    }

    #[test]
    fn templates_keep_placeholders() {
        for name in ["{user_profile}", "{initial_user_query}", "{intention_shift}", "{user_rejection_reason}", "{dialogue_history}"] {
            assert!(USER_SIMULATOR.contains(name), "{name}");
        }
        for name in ["{user_profile}", "{dialogue_history}", "{user_response}"] {
            assert!(USER_CRITIC.contains(name), "{name}");
        }
        for name in ["{dialogue_history}", "{agent_response}"] {
            assert!(AGENT_CRITIC.contains(name), "{name}");
        }
        for name in ["{scenario_description}", "{scenario_name}", "{initial_query_template}", "{external_info_key}", "{rejection_reason_template}"] {
            assert!(SCENARIO_GENERATION.contains(name), "{name}");
        }
    }
}
