//! Prompt templates and slot substitution.
//!
//! Templates are plain text with `{slot}` markers. [`fill`] substitutes all
//! slots in a single left-to-right pass, so text inserted into one slot is
//! never rescanned for further markers. Braces that do not form a known slot
//! (the JSON output examples) are left untouched.

use serde_json::json;

use crate::iposition::IPosition;

pub const EXTRACTION: &str = include_str!("../templates/extraction.txt");
pub const ENRICHMENT_QUESTIONS: &str = include_str!("../templates/enrichment_questions.txt");
pub const DIALOGUE: &str = include_str!("../templates/dialogue.txt");
pub const TOPICS: &str = include_str!("../templates/topics.txt");
pub const SCALE_SUMMARY: &str = include_str!("../templates/scale_summary.txt");
pub const REFINEMENT: &str = include_str!("../templates/refinement.txt");
pub const GROUP_AGENT: &str = include_str!("../templates/group_agent.txt");
pub const CONTROL: &str = include_str!("../templates/control.txt");

/// Replaces every `{name}` whose name appears in `slots`.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let candidate = &rest[open + 1..];
        for (name, value) in slots {
            if candidate.starts_with(name) && candidate[name.len()..].starts_with('}') {
                out.push_str(value);
                rest = &candidate[name.len() + 1..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = candidate;
    }
    out.push_str(rest);
    out
}

/// The `{input}` block describing one position: its name, core viewpoint and
/// narrative, keyed as in the extraction output.
pub fn position_profile(position: &IPosition) -> String {
    profile_block(&position.name, &position.core_viewpoint, &position.narrative)
}

pub fn profile_block(name: &str, core_viewpoint: &str, narrative: &str) -> String {
    let doc = json!({
        "I-position": name,
        "core_viewpoint": core_viewpoint,
        "narrative": narrative,
    });
    serde_json::to_string_pretty(&doc).expect("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_single_pass() {
        let out = fill("a {input} b {language} {other}", &[("input", "{language}"), ("language", "Korean")]);
        assert_eq!(out, "a {language} b Korean {other}");
    }

    #[test]
    fn fill_leaves_json_braces() {
        let out = fill("{\n  \"k\": [\"...\"]\n}\n{input}", &[("input", "X")]);
        assert_eq!(out, "{\n  \"k\": [\"...\"]\n}\nX");
    }

    #[test]
    fn templates_carry_their_slots() {
        assert!(EXTRACTION.contains("{input}") && EXTRACTION.contains("{language}"));
        assert!(ENRICHMENT_QUESTIONS.contains("{input}"));
        assert!(DIALOGUE.starts_with("[I-Position Profile] {input}"));
        assert!(!TOPICS.contains("{input}"));
    }
}
