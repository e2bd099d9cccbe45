//! Fixtures and deterministic providers for tests, demos and offline runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use crate::gateway::{Fingerprint, GatewayError, GenerationRequest, GenerationResponse, Provider, Role};
use crate::ids::PositionId;
use crate::iposition::{Category, IPosition, Origin};
use crate::profile::{self, Intake};

const P6_PRESURVEY: &str = include_str!("../fixtures/p6_presurvey.json");

pub const P6_PERSONALITY_SUMMARY: &str = "This person has a vibrant personality that makes it easy to connect with others, creating a positive presence in both social and professional settings. This person is caring and supportive, building strong and trusting relationships. This person is highly organized and responsible, but needs to be mindful of overworking or being overly eager to please. Setting boundaries and taking breaks is important for maintaining well-being. With a creative imagination and strong curiosity, this person often discovers new ideas and solutions. By embracing these traits and maintaining balance, this person moves toward a fulfilling and well-rounded life.";

pub const P6_WORK_VALUES_SUMMARY: &str = "This person treasures a balance between work and life and seeks financial security to support this balance. This person is drawn to financially rewarding positions that come with positive working conditions and the chance to excel and be acknowledged in this person's field. An ideal job for this person would offer a mix of consistent responsibilities with some room for creative thought and independence, allowing for growth without feeling trapped or stifled. Security and teamwork are important to this person, but this person should play a supportive role, enriching the primary need for a satisfying and stable work-life blend.";

/// The P6 pre-survey document, without scale summaries.
pub fn p6_presurvey() -> Value {
    serde_json::from_str(P6_PRESURVEY).expect("fixture is valid JSON")
}

/// P6 as a validated intake with both summaries filled in.
pub fn p6_intake() -> Intake {
    let mut intake = profile::ingest_presurvey(&p6_presurvey()).expect("fixture is valid");
    intake.knowledge.personality_summary = P6_PERSONALITY_SUMMARY.to_string();
    intake.knowledge.work_values_summary = P6_WORK_VALUES_SUMMARY.to_string();
    intake
}

/// One extraction entry with placeholder viewpoint and narrative.
pub fn entry_json(name: impl Into<String>) -> Value {
    let name = name.into();
    json!({
        "I-position": name,
        "core_viewpoint": format!("I speak for {name}."),
        "narrative": format!("This is how {name} sees things, in a few honest sentences."),
    })
}

const P6_VOICES: [(&str, &str); 12] = [
    ("Myself, Seeking Stability", "A steady paycheck lets me breathe."),
    ("Myself, Fearing Failure", "What if I try my hardest and still fall short?"),
    ("Myself, Wanting My Parents' Approval", "I want them to be proud of the path I pick."),
    ("Myself, Needing Time Alone", "I recharge when nobody needs anything from me."),
    ("Myself, Aiming for the Executive Suite", "Expertise first, then the corner office."),
    ("Myself, Enduring the Exam Grind", "Three more years of study is a price I can pay."),
    ("Myself, Calculating the Odds", "Fifty-fifty is not a plan, it is a coin toss."),
    ("Myself, Losing Myself in Cooking", "When I cook, the worries go quiet."),
    ("Myself, Dreaming of My Own Shop", "I want a place that is mine from the menu to the door."),
    ("Myself, Doubting My Experience", "Watching videos is not the same as training."),
    ("Myself, Counting the Startup Costs", "Passion does not pay the deposit."),
    ("Myself, Trusting My Friends' Encouragement", "If they believe in me, maybe I should too."),
];

/// An extraction answer with `common`, `career_a` and `career_b` entries.
/// Names are drawn from a fixed P6-flavoured list and made unique.
pub fn extraction_response(common: usize, career_a: usize, career_b: usize) -> String {
    let mut n = 0;
    let mut next = || {
        let (name, viewpoint) = P6_VOICES[n % P6_VOICES.len()];
        let name = if n < P6_VOICES.len() {
            name.to_string()
        } else {
            format!("{name} {}", n / P6_VOICES.len() + 1)
        };
        n += 1;
        json!({
            "I-position": name,
            "core_viewpoint": viewpoint,
            "narrative": format!("I am the part of you that says: {viewpoint} I have been here for a while, and I am not going anywhere."),
        })
    };
    let common: Vec<Value> = (0..common).map(|_| next()).collect();
    let a: Vec<Value> = (0..career_a).map(|_| next()).collect();
    let b: Vec<Value> = (0..career_b).map(|_| next()).collect();
    let doc = json!({ "Common": common, "Career_A": a, "Career_B": b });
    format!("```json\n{}\n```", serde_json::to_string_pretty(&doc).expect("json"))
}

/// A minimal extracted position.
pub fn position(id: &str, name: &str) -> IPosition {
    IPosition {
        id: PositionId::from(id),
        name: name.to_string(),
        core_viewpoint: format!("{name} has one clear thought."),
        narrative: format!("I am {name}, and this is my story."),
        category: Category::Common,
        origin: Origin::Extracted,
        revision: 0,
    }
}

fn response(text: String) -> GenerationResponse {
    GenerationResponse {
        text,
        provider_latency_ms: 0,
        truncated: false,
        retries: 0,
    }
}

type Respond = dyn Fn(&GenerationRequest) -> Result<String, GatewayError> + Send + Sync;

/// Provider backed by a closure.
pub struct FnProvider(Box<Respond>);

impl FnProvider {
    pub fn new(f: impl Fn(&GenerationRequest) -> Result<String, GatewayError> + Send + Sync + 'static) -> Self {
        Self(Box::new(f))
    }
}

impl Provider for FnProvider {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        (self.0)(request).map(response)
    }
}

/// Which pipeline a request belongs to, recognised from its system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    ScaleSummary,
    Extraction,
    EnrichmentQuestions,
    Refinement,
    Dialogue,
    Topics,
    Control,
    GroupAgent,
}

pub fn classify(request: &GenerationRequest) -> Option<Pipeline> {
    let p = request.system_prompt.as_str();
    if p.starts_with("You will write a short natural-language summary") {
        Some(Pipeline::ScaleSummary)
    } else if p.starts_with("In Dialogical Self Theory (DST)") {
        Some(Pipeline::Extraction)
    } else if p.starts_with("Your task is to generate thoughtful questions") {
        Some(Pipeline::EnrichmentQuestions)
    } else if p.starts_with("You are helping a person refine") {
        Some(Pipeline::Refinement)
    } else if p.starts_with("This person has multiple I-positions") {
        Some(Pipeline::Topics)
    } else if p.starts_with("You are the orchestrator") {
        Some(Pipeline::Control)
    } else if p.starts_with("[I-Position Profile]") && p.contains("group conversation") {
        Some(Pipeline::GroupAgent)
    } else if p.starts_with("[I-Position Profile]") {
        Some(Pipeline::Dialogue)
    } else {
        None
    }
}

/// Name of the position described in a prompt's profile block.
fn profile_name(prompt: &str) -> &str {
    const KEY: &str = "\"I-position\": \"";
    prompt
        .find(KEY)
        .map(|i| &prompt[i + KEY.len()..])
        .and_then(|rest| rest.find('"').map(|end| &rest[..end]))
        .unwrap_or("an I-position")
}

fn last_user(request: &GenerationRequest) -> Option<&str> {
    request
        .history
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.text.as_str())
}

/// Answers every pipeline deterministically from the request content.
#[derive(Debug, Clone)]
pub struct RuleProvider {
    pub extraction: (usize, usize, usize),
}

impl Default for RuleProvider {
    fn default() -> Self {
        Self { extraction: (4, 3, 3) }
    }
}

impl RuleProvider {
    pub fn answer(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        let prompt = request.system_prompt.as_str();
        let pipeline = classify(request)
            .ok_or_else(|| GatewayError::InvalidRequest("unrecognised prompt".into()))?;
        let text = match pipeline {
            Pipeline::ScaleSummary if prompt.contains("Big Five") => P6_PERSONALITY_SUMMARY.to_string(),
            Pipeline::ScaleSummary => P6_WORK_VALUES_SUMMARY.to_string(),
            Pipeline::Extraction => {
                let (c, a, b) = self.extraction;
                extraction_response(c, a, b)
            }
            Pipeline::EnrichmentQuestions => {
                let name = profile_name(prompt);
                json!({ "enrichingQuestions": [
                    format!("When did you first notice {name} in your daily life?"),
                    format!("What would change if {name} got its way?"),
                    format!("Who in your life sounds most like {name}?"),
                ]})
                .to_string()
            }
            Pipeline::Refinement => {
                let answers: Vec<&str> = prompt
                    .lines()
                    .filter(|l| l.starts_with('A') && l.contains(": "))
                    .filter_map(|l| l.split_once(": ").map(|(_, a)| a))
                    .collect();
                let name = profile_name(prompt);
                json!({
                    "core_viewpoint": format!("{name} now knows why it matters."),
                    "narrative": format!("I have thought about what you told me. {}", answers.join(" ")),
                })
                .to_string()
            }
            Pipeline::Topics => json!({ "discussion_questions": [
                "What does each of you need in order to feel safe about the future?",
                "Where do your hopes for the next five years overlap?",
                "What would a first small step that respects both of you look like?",
            ]})
            .to_string(),
            Pipeline::Control => {
                let last = prompt
                    .lines()
                    .rev()
                    .find(|l| l.starts_with("A (") || l.starts_with("B ("));
                let next = match last {
                    Some(l) if l.starts_with("A (") => "B",
                    _ => "A",
                };
                json!({ "next_speaker": next, "rationale": "Keep both voices in the conversation." }).to_string()
            }
            Pipeline::Dialogue => {
                let name = profile_name(prompt);
                match last_user(request) {
                    None => format!("Hi, I am {name}. I am the part of you that has been waiting to talk."),
                    Some(text) => format!("As {name}, I hear you say \"{}\". Tell me more.", text.trim()),
                }
            }
            Pipeline::GroupAgent => {
                let name = profile_name(prompt);
                let turn = request.history.len();
                format!("{name} here (turn {turn}). This is how I see the question from where I stand.")
            }
        };
        Ok(text)
    }
}

impl Provider for RuleProvider {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        self.answer(request).map(response)
    }
}

/// Wraps a provider and records every successful answer by fingerprint, in
/// the scripted fixture format.
pub struct RecordingProvider<P> {
    inner: P,
    recorded: Mutex<BTreeMap<Fingerprint, String>>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn fixtures(&self) -> BTreeMap<Fingerprint, String> {
        self.recorded.lock().expect("recording lock").clone()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self.fixtures()).expect("fixtures serialise");
        std::fs::write(path, json + "\n")
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let response = self.inner.generate(request)?;
        self.recorded
            .lock()
            .expect("recording lock")
            .insert(request.fingerprint(), response.text.clone());
        Ok(response)
    }
}

/// Seeded adversarial provider: control decisions are random, malformed or
/// failing; other pipelines fail now and then.
pub struct ChaosProvider {
    rng: Mutex<StdRng>,
    rules: RuleProvider,
}

impl ChaosProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Mutex::new(StdRng::seed_from_u64(seed)),
            rules: RuleProvider::default(),
        }
    }
}

impl Provider for ChaosProvider {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let mut rng = self.rng.lock().expect("rng lock");
        if classify(request) == Some(Pipeline::Control) {
            let text = match rng.random_range(0..6) {
                0 => return Err(GatewayError::Timeout { attempts: 3 }),
                1 => "I think A should go. Or maybe B.".to_string(),
                2 => json!({ "next_speaker": "C", "rationale": "" }).to_string(),
                3 => json!({ "next_speaker": "B" }).to_string(),
                _ => {
                    let who = if rng.random_bool(0.5) { "A" } else { "B" };
                    json!({ "next_speaker": who, "rationale": "chaos" }).to_string()
                }
            };
            return Ok(response(text));
        }
        if rng.random_bool(0.05) {
            return Err(GatewayError::Unavailable {
                attempts: 3,
                message: "chaos".into(),
            });
        }
        drop(rng);
        self.rules.generate(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GenerationSettings, Message};

    #[test]
    fn extraction_names_are_unique() {
        let text = extraction_response(10, 5, 5);
        let doc: Value = crate::gateway::extract_structured(&text, crate::gateway::SchemaId::Extraction).unwrap();
        let mut names: Vec<&str> = ["Common", "Career_A", "Career_B"]
            .iter()
            .flat_map(|k| doc[k].as_array().unwrap())
            .map(|e| e["I-position"].as_str().unwrap())
            .collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
    }

    #[test]
    fn recording_captures_fingerprints() {
        let recorder = RecordingProvider::new(FnProvider::new(|_| Ok("ok".into())));
        let request = GenerationSettings::default().request("sys", vec![Message::user("hi")]);
        recorder.generate(&request).unwrap();
        assert_eq!(recorder.fixtures().get(&request.fingerprint()).map(String::as_str), Some("ok"));
    }
}
