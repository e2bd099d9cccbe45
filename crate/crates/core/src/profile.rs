//! Pre-survey intake, scale summarisation and profile rendering.
//!
//! A pre-survey is one JSON document (`schema_version: 1`):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "user": "P6",
//!   "demographics": { "age": 24, "sex": "Female", "health_note": "...",
//!                     "nationality": "...", "residence": "...", "education": "...",
//!                     "major": "...", "semesters": 6, "income_satisfaction": "...",
//!                     "perceived_class": "...", "living_style": "..." },
//!   "scales": { "bfi2s": [30 integers 1-5], "swvi": [72 integers 1-5] },
//!   "strengths": ["...", "...", "..."],
//!   "weaknesses": ["...", "...", "..."],
//!   "career_context": "...",
//!   "path_a": { "label": "...", "origin_story": "...", "appeal": "...", "concerns": "...",
//!               "experience": "...", "timeline_feasibility": "...",
//!               "social_reactions": "...", "ultimate_goal": "..." },
//!   "path_b": { ... },
//!   "personality_summary": "optional, skips summarisation",
//!   "work_values_summary": "optional, skips summarisation"
//! }
//! ```
//!
//! Only `age` is required among the demographics; the remaining text fields
//! may be omitted but must not be empty when present.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::gateway::{self, GatewayError, GenerationSettings, Provider};
use crate::locale::Locale;
use crate::prompts;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("pre-survey is missing `{0}`")]
    MissingField(String),
    #[error("`{field}` must have exactly {expected} entries, found {found}")]
    CountMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid `{path}`: {reason}")]
    InvalidField { path: String, reason: String },
    #[error("unsupported pre-survey schema_version {0}")]
    UnsupportedSchemaVersion(u64),
    #[error("profile summaries have not been generated yet")]
    SummariesPending,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instrument {
    #[serde(rename = "BFI2S")]
    Bfi2s,
    #[serde(rename = "SWVI")]
    Swvi,
}

const BFI2S_DOMAINS: &[&str] = &[
    "Extraversion",
    "Agreeableness",
    "Conscientiousness",
    "Negative Emotionality",
    "Open-Mindedness",
];

const SWVI_DOMAINS: &[&str] = &[
    "Achievement",
    "Co-workers",
    "Creativity",
    "Income",
    "Independence",
    "Lifestyle",
    "Mental Challenge",
    "Prestige",
    "Security",
    "Supervision",
    "Variety",
    "Work Environment",
];

impl Instrument {
    pub fn display_name(self) -> &'static str {
        match self {
            Instrument::Bfi2s => "Big Five Inventory-2 Short Form",
            Instrument::Swvi => "Super's Work Values Inventory",
        }
    }

    pub fn item_count(self) -> usize {
        match self {
            Instrument::Bfi2s => 30,
            Instrument::Swvi => 72,
        }
    }

    pub fn bounds(self) -> (i32, i32) {
        (1, 5)
    }

    /// Domains in scoring order. Items are interleaved: item `i` (0-based)
    /// belongs to domain `i % domains().len()`.
    pub fn domains(self) -> &'static [&'static str] {
        match self {
            Instrument::Bfi2s => BFI2S_DOMAINS,
            Instrument::Swvi => SWVI_DOMAINS,
        }
    }

    pub fn domain_of(self, item: usize) -> usize {
        item % self.domains().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleResponse {
    pub instrument: Instrument,
    pub item_scores: Vec<i32>,
    /// 1-based item numbers scored in reverse (`min + max - score`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reverse_keyed: Vec<usize>,
}

impl ScaleResponse {
    pub fn new(instrument: Instrument, item_scores: Vec<i32>) -> Self {
        Self {
            instrument,
            item_scores,
            reverse_keyed: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let path = instrument_key(self.instrument);
        let expected = self.instrument.item_count();
        if self.item_scores.len() != expected {
            return Err(ProfileError::CountMismatch {
                field: format!("scales.{path}"),
                expected,
                found: self.item_scores.len(),
            });
        }
        let (min, max) = self.instrument.bounds();
        if let Some(i) = self.item_scores.iter().position(|s| !(min..=max).contains(s)) {
            return Err(ProfileError::InvalidField {
                path: format!("scales.{path}[{i}]"),
                reason: format!("score {} outside {min}..={max}", self.item_scores[i]),
            });
        }
        if let Some(item) = self.reverse_keyed.iter().find(|&&n| n == 0 || n > expected) {
            return Err(ProfileError::InvalidField {
                path: format!("scales.{path}.reverse_keyed"),
                reason: format!("item {item} out of range"),
            });
        }
        Ok(())
    }

    /// Keyed item score (reverse-keyed items flipped).
    fn keyed(&self, item: usize) -> i32 {
        let (min, max) = self.instrument.bounds();
        let raw = self.item_scores[item];
        if self.reverse_keyed.contains(&(item + 1)) {
            min + max - raw
        } else {
            raw
        }
    }

    /// Per-domain means of the keyed item scores, in domain order.
    pub fn domain_means(&self) -> Vec<(&'static str, f64)> {
        let domains = self.instrument.domains();
        let mut sums = vec![0i64; domains.len()];
        let mut counts = vec![0u32; domains.len()];
        for item in 0..self.item_scores.len() {
            let d = self.instrument.domain_of(item);
            sums[d] += self.keyed(item) as i64;
            counts[d] += 1;
        }
        domains
            .iter()
            .zip(sums.iter().zip(&counts))
            .map(|(name, (&sum, &count))| (*name, if count == 0 { 0.0 } else { sum as f64 / count as f64 }))
            .collect()
    }
}

fn instrument_key(instrument: Instrument) -> &'static str {
    match instrument {
        Instrument::Bfi2s => "bfi2s",
        Instrument::Swvi => "swvi",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub sex: Option<String>,
    pub health_note: Option<String>,
    pub nationality: Option<String>,
    pub residence: Option<String>,
    pub education: Option<String>,
    pub major: Option<String>,
    pub semesters: Option<u32>,
    pub income_satisfaction: Option<String>,
    pub perceived_class: Option<String>,
    pub living_style: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CareerPath {
    pub label: String,
    pub origin_story: String,
    pub appeal: Option<String>,
    pub concerns: Option<String>,
    pub experience: Option<String>,
    pub timeline_feasibility: Option<String>,
    pub social_reactions: Option<String>,
    pub ultimate_goal: Option<String>,
}

/// Everything the extraction prompt knows about the user. Summary fields
/// are empty until [`summarize_scales`] has filled them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserKnowledge {
    pub demographics: Demographics,
    pub personality_scale: ScaleResponse,
    pub work_values_scale: ScaleResponse,
    pub personality_summary: String,
    pub work_values_summary: String,
    pub strengths: Vec<String>,
    pub weaknesses: Vec<String>,
    pub career_context: String,
    pub path_a: CareerPath,
    pub path_b: CareerPath,
}

impl UserKnowledge {
    pub fn summaries_ready(&self) -> bool {
        !self.personality_summary.trim().is_empty() && !self.work_values_summary.trim().is_empty()
    }

    /// Serialises back into a pre-survey document for `user`.
    pub fn to_presurvey(&self, user: &str) -> Value {
        let mut doc = json!({
            "schema_version": SCHEMA_VERSION,
            "user": user,
            "demographics": self.demographics,
            "scales": {
                "bfi2s": self.personality_scale.item_scores,
                "swvi": self.work_values_scale.item_scores,
            },
            "strengths": self.strengths,
            "weaknesses": self.weaknesses,
            "career_context": self.career_context,
            "path_a": self.path_a,
            "path_b": self.path_b,
        });
        strip_nulls(&mut doc);
        if !self.personality_scale.reverse_keyed.is_empty() {
            doc["scales"]["bfi2s_reverse_keyed"] = json!(self.personality_scale.reverse_keyed);
        }
        if !self.work_values_scale.reverse_keyed.is_empty() {
            doc["scales"]["swvi_reverse_keyed"] = json!(self.work_values_scale.reverse_keyed);
        }
        if !self.personality_summary.is_empty() {
            doc["personality_summary"] = json!(self.personality_summary);
        }
        if !self.work_values_summary.is_empty() {
            doc["work_values_summary"] = json!(self.work_values_summary);
        }
        doc
    }
}

fn strip_nulls(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|_, v| !v.is_null());
            map.values_mut().for_each(strip_nulls);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

/// A validated pre-survey.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intake {
    pub user: String,
    pub knowledge: UserKnowledge,
}

/// Path-tracking view over a JSON object.
struct Fields<'a> {
    map: &'a Map<String, Value>,
    path: String,
}

impl<'a> Fields<'a> {
    fn root(value: &'a Value) -> Result<Self, ProfileError> {
        let map = value.as_object().ok_or_else(|| ProfileError::InvalidField {
            path: "$".into(),
            reason: "expected a JSON object".into(),
        })?;
        Ok(Self { map, path: String::new() })
    }

    fn path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn invalid(&self, key: &str, reason: &str) -> ProfileError {
        ProfileError::InvalidField {
            path: self.path(key),
            reason: reason.into(),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn require(&self, key: &str) -> Result<&'a Value, ProfileError> {
        self.get(key).ok_or_else(|| ProfileError::MissingField(self.path(key)))
    }

    fn object(&self, key: &str) -> Result<Fields<'a>, ProfileError> {
        let map = self
            .require(key)?
            .as_object()
            .ok_or_else(|| self.invalid(key, "expected an object"))?;
        Ok(Fields { map, path: self.path(key) })
    }

    fn opt_text(&self, key: &str) -> Result<Option<String>, ProfileError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(Some(s.clone())),
            Some(Value::String(_)) => Err(self.invalid(key, "must not be empty")),
            Some(_) => Err(self.invalid(key, "expected a string")),
        }
    }

    fn text(&self, key: &str) -> Result<String, ProfileError> {
        self.opt_text(key)?
            .ok_or_else(|| ProfileError::MissingField(self.path(key)))
    }

    fn opt_count(&self, key: &str) -> Result<Option<u32>, ProfileError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .map(Some)
                .ok_or_else(|| self.invalid(key, "expected a non-negative integer")),
        }
    }

    fn texts(&self, key: &str, expected: usize) -> Result<Vec<String>, ProfileError> {
        let items = self
            .require(key)?
            .as_array()
            .ok_or_else(|| self.invalid(key, "expected an array of strings"))?;
        let texts = items
            .iter()
            .enumerate()
            .map(|(i, item)| match item.as_str() {
                Some(s) if !s.trim().is_empty() => Ok(s.to_string()),
                _ => Err(self.invalid(&format!("{key}[{i}]"), "expected a non-empty string")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if texts.len() != expected {
            return Err(ProfileError::CountMismatch {
                field: self.path(key),
                expected,
                found: texts.len(),
            });
        }
        Ok(texts)
    }

    fn scores(&self, key: &str) -> Result<Vec<i32>, ProfileError> {
        self.require(key)?
            .as_array()
            .ok_or_else(|| self.invalid(key, "expected an array of integers"))?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_i64()
                    .and_then(|n| i32::try_from(n).ok())
                    .ok_or_else(|| self.invalid(&format!("{key}[{i}]"), "expected an integer"))
            })
            .collect()
    }

    fn item_numbers(&self, key: &str) -> Result<Vec<usize>, ProfileError> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .as_array()
                .ok_or_else(|| self.invalid(key, "expected an array of item numbers"))?
                .iter()
                .map(|n| {
                    n.as_u64()
                        .map(|n| n as usize)
                        .ok_or_else(|| self.invalid(key, "expected item numbers"))
                })
                .collect(),
        }
    }
}

fn career_path(fields: Fields<'_>) -> Result<CareerPath, ProfileError> {
    Ok(CareerPath {
        label: fields.text("label")?,
        origin_story: fields.text("origin_story")?,
        appeal: fields.opt_text("appeal")?,
        concerns: fields.opt_text("concerns")?,
        experience: fields.opt_text("experience")?,
        timeline_feasibility: fields.opt_text("timeline_feasibility")?,
        social_reactions: fields.opt_text("social_reactions")?,
        ultimate_goal: fields.opt_text("ultimate_goal")?,
    })
}

/// Validates a pre-survey document.
pub fn ingest_presurvey(document: &Value) -> Result<Intake, ProfileError> {
    let root = Fields::root(document)?;
    let version = root
        .require("schema_version")?
        .as_u64()
        .ok_or_else(|| root.invalid("schema_version", "expected an integer"))?;
    if version != SCHEMA_VERSION {
        return Err(ProfileError::UnsupportedSchemaVersion(version));
    }
    let user = root.text("user")?;

    let demo = root.object("demographics")?;
    let age = demo
        .opt_count("age")?
        .ok_or_else(|| ProfileError::MissingField(demo.path("age")))?;
    if age == 0 {
        return Err(demo.invalid("age", "must be positive"));
    }
    let demographics = Demographics {
        age,
        sex: demo.opt_text("sex")?,
        health_note: demo.opt_text("health_note")?,
        nationality: demo.opt_text("nationality")?,
        residence: demo.opt_text("residence")?,
        education: demo.opt_text("education")?,
        major: demo.opt_text("major")?,
        semesters: demo.opt_count("semesters")?,
        income_satisfaction: demo.opt_text("income_satisfaction")?,
        perceived_class: demo.opt_text("perceived_class")?,
        living_style: demo.opt_text("living_style")?,
    };

    let scales = root.object("scales")?;
    let personality_scale = ScaleResponse {
        instrument: Instrument::Bfi2s,
        item_scores: scales.scores("bfi2s")?,
        reverse_keyed: scales.item_numbers("bfi2s_reverse_keyed")?,
    };
    personality_scale.validate()?;
    let work_values_scale = ScaleResponse {
        instrument: Instrument::Swvi,
        item_scores: scales.scores("swvi")?,
        reverse_keyed: scales.item_numbers("swvi_reverse_keyed")?,
    };
    work_values_scale.validate()?;

    let strengths = root.texts("strengths", 3)?;
    let weaknesses = root.texts("weaknesses", 3)?;
    let career_context = root.text("career_context")?;
    let path_a = career_path(root.object("path_a")?)?;
    let path_b = career_path(root.object("path_b")?)?;
    if path_a.label == path_b.label {
        return Err(ProfileError::InvalidField {
            path: "path_b.label".into(),
            reason: "must differ from path_a.label".into(),
        });
    }

    Ok(Intake {
        user,
        knowledge: UserKnowledge {
            demographics,
            personality_scale,
            work_values_scale,
            personality_summary: root.opt_text("personality_summary")?.unwrap_or_default(),
            work_values_summary: root.opt_text("work_values_summary")?.unwrap_or_default(),
            strengths,
            weaknesses,
            career_context,
            path_a,
            path_b,
        },
    })
}

/// The summarisation prompt for one scale, with the domain means embedded.
pub fn summary_prompt(scale: &ScaleResponse, locale: &Locale) -> String {
    let (min, max) = scale.instrument.bounds();
    let scores = scale
        .domain_means()
        .iter()
        .map(|(domain, mean)| format!("- {domain}: {mean}"))
        .collect::<Vec<_>>()
        .join("\n");
    prompts::fill(
        prompts::SCALE_SUMMARY,
        &[
            ("instrument", scale.instrument.display_name()),
            ("min", &min.to_string()),
            ("max", &max.to_string()),
            ("scores", &scores),
            ("language", &locale.language),
        ],
    )
}

/// Turns a scale response into third-person prose via the gateway.
pub fn summarize_scales(
    scale: &ScaleResponse,
    provider: &dyn Provider,
    settings: &GenerationSettings,
    locale: &Locale,
) -> Result<String, ProfileError> {
    scale.validate()?;
    let request = settings.request(summary_prompt(scale, locale), Vec::new());
    let response = gateway::generate(provider, &request)?;
    Ok(response.text.trim().to_string())
}

pub const SECTION_DEMOGRAPHICS: &str = "[Demographics]";
pub const SECTION_PERSONALITY: &str = "[Big 5 Personality Traits]";
pub const SECTION_WORK_VALUES: &str = "[Super's Work Value Inventory]";
pub const SECTION_STRENGTHS: &str = "[3 Strengths this person considers themselves to have]";
pub const SECTION_WEAKNESSES: &str = "[3 Weaknesses this person considers themselves to have]";
pub const SECTION_CAREER: &str = "[Career Paths]";
pub const CAREER_CONTEXT_HEADER: &str =
    "Current Career Situation (Career Decision Timeline and Main Current Activities):";

/// Renders the knowledge block substituted into the extraction prompt.
pub fn render_profile(knowledge: &UserKnowledge) -> Result<String, ProfileError> {
    if !knowledge.summaries_ready() {
        return Err(ProfileError::SummariesPending);
    }
    let d = &knowledge.demographics;
    let mut out = String::new();

    let _ = writeln!(out, "{SECTION_DEMOGRAPHICS}");
    out.push_str("Demographics describe who this person is.\n\n");
    let _ = writeln!(out, "- Age: {}", d.age);
    let line = |out: &mut String, indent: &str, label: &str, value: &Option<String>| {
        if let Some(v) = value {
            let _ = writeln!(out, "{indent}- {label}: {v}");
        }
    };
    line(&mut out, "", "Sex", &d.sex);
    line(&mut out, "", "Health/Disability", &d.health_note);
    line(&mut out, "", "Nationality", &d.nationality);
    line(&mut out, "", "Residence", &d.residence);
    line(&mut out, "", "Education", &d.education);
    let sub = if d.education.is_some() { "  " } else { "" };
    line(&mut out, sub, "Major", &d.major);
    let semesters = d
        .semesters
        .map(|n| format!("{n} semester{}", if n == 1 { "" } else { "s" }));
    line(&mut out, sub, "Number of Semesters Enrolled", &semesters);
    line(&mut out, "", "Income Satisfaction", &d.income_satisfaction);
    line(&mut out, "", "Perceived Class", &d.perceived_class);
    line(&mut out, "", "Living Style", &d.living_style);

    let _ = write!(
        out,
        "\n{SECTION_PERSONALITY}\nThe following section presents an overview of the person's personality within five key domains.\n\n{}\n",
        knowledge.personality_summary.trim()
    );
    let _ = write!(
        out,
        "\n{SECTION_WORK_VALUES}\nThe following section provides an overview of the individual's key work values, offering insights into what drives their job satisfaction and career choices.\n\n{}\n",
        knowledge.work_values_summary.trim()
    );

    let _ = writeln!(out, "\n{SECTION_STRENGTHS}");
    for s in &knowledge.strengths {
        let _ = writeln!(out, "- {s}");
    }
    let _ = writeln!(out, "\n{SECTION_WEAKNESSES}");
    for w in &knowledge.weaknesses {
        let _ = writeln!(out, "- {w}");
    }

    let _ = write!(
        out,
        "\n{SECTION_CAREER}\nThis section provides information about this person's current career situation and specific thoughts on each future career direction they are considering.\n\n{CAREER_CONTEXT_HEADER}\n{}\n",
        knowledge.career_context.trim()
    );
    for (letter, path) in [("A", &knowledge.path_a), ("B", &knowledge.path_b)] {
        let _ = writeln!(out, "\nCareer Path {letter}: {}", path.label);
        let _ = writeln!(
            out,
            "- When & Why This Person Started Considering This Path: {}",
            path.origin_story
        );
        line(&mut out, "", "What Makes It Appealing", &path.appeal);
        line(&mut out, "", "Biggest Concerns", &path.concerns);
        line(&mut out, "", "Relevant Knowledge and Experience This Person Possesses", &path.experience);
        line(&mut out, "", "Estimated Time & Feasibility of Career Achievement", &path.timeline_feasibility);
        line(&mut out, "", "How People Around This Person React to This Path", &path.social_reactions);
        line(&mut out, "", "Ultimate Goal When Pursuing This Path", &path.ultimate_goal);
    }
    Ok(out.trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    #[test]
    fn p6_ingests() {
        let intake = ingest_presurvey(&testkit::p6_presurvey()).unwrap();
        assert_eq!(intake.user, "P6");
        assert_eq!(intake.knowledge.path_a.label, "Accountant at a Major Accounting Firm");
        assert_eq!(intake.knowledge.path_b.label, "Food & Beverage Entrepreneur");
        assert!(!intake.knowledge.summaries_ready());
    }

    #[test]
    fn two_strengths_is_count_mismatch() {
        let mut doc = testkit::p6_presurvey();
        doc["strengths"].as_array_mut().unwrap().pop();
        match ingest_presurvey(&doc) {
            Err(ProfileError::CountMismatch { field, expected: 3, found: 2 }) => assert_eq!(field, "strengths"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_its_path() {
        let mut doc = testkit::p6_presurvey();
        doc["path_b"].as_object_mut().unwrap().remove("origin_story");
        match ingest_presurvey(&doc) {
            Err(ProfileError::MissingField(path)) => assert_eq!(path, "path_b.origin_story"),
            other => panic!("unexpected {other:?}"),
        }
        let mut doc = testkit::p6_presurvey();
        doc["scales"].as_object_mut().unwrap().remove("swvi");
        assert!(matches!(ingest_presurvey(&doc), Err(ProfileError::MissingField(p)) if p == "scales.swvi"));
    }

    #[test]
    fn rejects_bad_values() {
        let mut doc = testkit::p6_presurvey();
        doc["demographics"]["age"] = json!(0);
        assert!(matches!(ingest_presurvey(&doc), Err(ProfileError::InvalidField { .. })));

        let mut doc = testkit::p6_presurvey();
        doc["scales"]["bfi2s"][4] = json!(6);
        assert!(matches!(ingest_presurvey(&doc), Err(ProfileError::InvalidField { path, .. }) if path == "scales.bfi2s[4]"));

        let mut doc = testkit::p6_presurvey();
        doc["demographics"]["sex"] = json!("  ");
        assert!(matches!(ingest_presurvey(&doc), Err(ProfileError::InvalidField { .. })));

        let mut doc = testkit::p6_presurvey();
        doc["path_b"]["label"] = doc["path_a"]["label"].clone();
        assert!(ingest_presurvey(&doc).is_err());

        let mut doc = testkit::p6_presurvey();
        doc["schema_version"] = json!(2);
        assert!(matches!(ingest_presurvey(&doc), Err(ProfileError::UnsupportedSchemaVersion(2))));
    }

    #[test]
    fn midpoint_scores_give_equal_means() {
        let scale = ScaleResponse::new(Instrument::Bfi2s, vec![3; 30]);
        let means = scale.domain_means();
        assert_eq!(means.len(), 5);
        assert!(means.iter().all(|(_, m)| *m == 3.0));
        let prompt = summary_prompt(&scale, &Locale::default());
        assert_eq!(prompt.matches(": 3\n").count(), 5);
    }

    #[test]
    fn reverse_keying_flips_scores() {
        let mut scale = ScaleResponse::new(Instrument::Bfi2s, vec![1; 30]);
        scale.reverse_keyed = vec![1];
        // Extraversion holds items 1, 6, 11, 16, 21, 26; item 1 becomes 5.
        assert_eq!(scale.domain_means()[0].1, (5.0 + 5.0) / 6.0);
    }

    #[test]
    fn summaries_required_before_render() {
        let intake = ingest_presurvey(&testkit::p6_presurvey()).unwrap();
        assert!(matches!(render_profile(&intake.knowledge), Err(ProfileError::SummariesPending)));
    }
}
