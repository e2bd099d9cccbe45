//! Structured-document extraction from model output.
//!
//! Models wrap their JSON in prose and code fences. [`extract_structured`]
//! looks inside fenced blocks first, then the raw text, and returns the first
//! balanced top-level `{...}` block that parses as a JSON object and
//! satisfies the requested schema's key set.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    Extraction,
    EnrichmentQuestions,
    DiscussionTopics,
    ControlDecision,
    Refinement,
}

impl SchemaId {
    pub const ALL: [SchemaId; 5] = [
        SchemaId::Extraction,
        SchemaId::EnrichmentQuestions,
        SchemaId::DiscussionTopics,
        SchemaId::ControlDecision,
        SchemaId::Refinement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Extraction => "extraction",
            SchemaId::EnrichmentQuestions => "enrichment_questions",
            SchemaId::DiscussionTopics => "discussion_topics",
            SchemaId::ControlDecision => "control_decision",
            SchemaId::Refinement => "refinement",
        }
    }

    fn fields(self) -> &'static [Field] {
        match self {
            SchemaId::Extraction => EXTRACTION,
            SchemaId::EnrichmentQuestions => ENRICHMENT_QUESTIONS,
            SchemaId::DiscussionTopics => DISCUSSION_TOPICS,
            SchemaId::ControlDecision => CONTROL_DECISION,
            SchemaId::Refinement => REFINEMENT,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no structured document found in model output")]
    NoDocumentFound,
    #[error("malformed structured document: {0}")]
    MalformedDocument(String),
    #[error("{schema} document violates schema at `{key}`: {problem}")]
    SchemaViolation {
        schema: &'static str,
        key: String,
        problem: Violation,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Missing,
    Unexpected,
    WrongType(&'static str),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Missing => f.write_str("missing key"),
            Violation::Unexpected => f.write_str("unexpected key"),
            Violation::WrongType(expected) => write!(f, "expected {expected}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Text,
    TextList,
    ObjectList(&'static [Field]),
}

#[derive(Debug, Clone, Copy)]
struct Field {
    key: &'static str,
    kind: Kind,
    required: bool,
}

const fn req(key: &'static str, kind: Kind) -> Field {
    Field { key, kind, required: true }
}

const fn opt(key: &'static str, kind: Kind) -> Field {
    Field { key, kind, required: false }
}

const POSITION_ENTRY: &[Field] = &[
    req("I-position", Kind::Text),
    req("core_viewpoint", Kind::Text),
    req("narrative", Kind::Text),
];
const EXTRACTION: &[Field] = &[
    req("Common", Kind::ObjectList(POSITION_ENTRY)),
    req("Career_A", Kind::ObjectList(POSITION_ENTRY)),
    req("Career_B", Kind::ObjectList(POSITION_ENTRY)),
];
const ENRICHMENT_QUESTIONS: &[Field] = &[req("enrichingQuestions", Kind::TextList)];
const DISCUSSION_TOPICS: &[Field] = &[req("discussion_questions", Kind::TextList)];
const CONTROL_DECISION: &[Field] = &[req("next_speaker", Kind::Text), req("rationale", Kind::Text)];
const REFINEMENT: &[Field] = &[
    req("core_viewpoint", Kind::Text),
    req("narrative", Kind::Text),
    opt("I-position", Kind::Text),
    opt("name", Kind::Text),
];

/// Finds, parses and validates the structured document in `text`.
pub fn extract_structured(text: &str, schema: SchemaId) -> Result<Value, ExtractError> {
    let mut regions = fenced_blocks(text);
    regions.push(text);

    let mut saw_brace = false;
    let mut last_error: Option<String> = None;
    for region in regions {
        for block in top_level_blocks(region) {
            saw_brace = true;
            let Some(block) = block else {
                last_error.get_or_insert_with(|| "unbalanced braces".to_string());
                continue;
            };
            match serde_json::from_str::<Value>(block) {
                Ok(value @ Value::Object(_)) => {
                    validate(&value, schema)?;
                    return Ok(value);
                }
                Ok(_) => last_error = Some("not an object".into()),
                Err(e) => last_error = Some(e.to_string()),
            }
        }
    }
    if saw_brace {
        Err(ExtractError::MalformedDocument(last_error.unwrap_or_default()))
    } else {
        Err(ExtractError::NoDocumentFound)
    }
}

/// [`extract_structured`] followed by typed deserialization.
pub fn extract_as<T: DeserializeOwned>(text: &str, schema: SchemaId) -> Result<T, ExtractError> {
    let value = extract_structured(text, schema)?;
    serde_json::from_value(value).map_err(|e| ExtractError::MalformedDocument(e.to_string()))
}

/// Bodies of ``` fenced blocks, language tag line removed.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// Successive top-level `{...}` blocks; `None` marks an unterminated one.
fn top_level_blocks(text: &str) -> impl Iterator<Item = Option<&str>> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    std::iter::from_fn(move || {
        let start = pos + text[pos..].find('{')?;
        match balanced_end(&bytes[start..]) {
            Some(len) => {
                pos = start + len;
                Some(Some(&text[start..start + len]))
            }
            None => {
                pos = text.len();
                Some(None)
            }
        }
    })
}

/// Length of the balanced block starting at `bytes[0] == b'{'`, honouring
/// JSON string literals and escapes.
fn balanced_end(bytes: &[u8]) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn validate(value: &Value, schema: SchemaId) -> Result<(), ExtractError> {
    let object = value.as_object().expect("checked by caller");
    check_object(object, schema.fields(), "").map_err(|(key, problem)| ExtractError::SchemaViolation {
        schema: schema.as_str(),
        key,
        problem,
    })
}

fn check_object(object: &Map<String, Value>, fields: &[Field], path: &str) -> Result<(), (String, Violation)> {
    let join = |key: &str| if path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
    for field in fields {
        match object.get(field.key) {
            None if field.required => return Err((join(field.key), Violation::Missing)),
            None => {}
            Some(v) => check_kind(v, field.kind, &join(field.key))?,
        }
    }
    if let Some(extra) = object.keys().find(|k| !fields.iter().any(|f| f.key == k.as_str())) {
        return Err((join(extra), Violation::Unexpected));
    }
    Ok(())
}

fn check_kind(value: &Value, kind: Kind, path: &str) -> Result<(), (String, Violation)> {
    match kind {
        Kind::Text if value.is_string() => Ok(()),
        Kind::Text => Err((path.to_string(), Violation::WrongType("string"))),
        Kind::TextList => {
            let items = value
                .as_array()
                .ok_or((path.to_string(), Violation::WrongType("array of strings")))?;
            match items.iter().position(|item| !item.is_string()) {
                Some(i) => Err((format!("{path}[{i}]"), Violation::WrongType("string"))),
                None => Ok(()),
            }
        }
        Kind::ObjectList(fields) => {
            let items = value
                .as_array()
                .ok_or((path.to_string(), Violation::WrongType("array of objects")))?;
            for (i, item) in items.iter().enumerate() {
                let entry_path = format!("{path}[{i}]");
                let object = item
                    .as_object()
                    .ok_or((entry_path.clone(), Violation::WrongType("object")))?;
                check_object(object, fields, &entry_path)?;
            }
            Ok(())
        }
    }
}
