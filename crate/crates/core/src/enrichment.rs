//! Story enrichment: scaffolding questions and answer-driven refinement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{self, extract_as, ExtractError, GatewayError, GenerationSettings, Provider, SchemaId};
use crate::ids::{PositionId, RoundId};
use crate::iposition::{check_fields, Diagnostic, IPosition, IPositionError};
use crate::locale::Locale;
use crate::prompts;

pub const MIN_QUESTIONS: usize = 2;
pub const MAX_QUESTIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentRound {
    pub id: RoundId,
    pub position_id: PositionId,
    pub questions: Vec<String>,
    pub answers: Vec<Option<String>>,
    pub applied: bool,
}

impl EnrichmentRound {
    pub fn new(id: RoundId, position_id: PositionId, questions: Vec<String>) -> Self {
        let answers = vec![None; questions.len()];
        Self {
            id,
            position_id,
            questions,
            answers,
            applied: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EnrichmentError {
    #[error("expected {MIN_QUESTIONS}-{MAX_QUESTIONS} enrichment questions, got {0}")]
    QuestionCountOutOfRange(usize),
    #[error("enrichment round {0} was already applied")]
    AlreadyApplied(RoundId),
    #[error("at least one answer is required")]
    NoAnswers,
    #[error("round has {expected} questions but {found} answers were given")]
    AnswerCountMismatch { expected: usize, found: usize },
    #[error("enrichment round {0} not found")]
    NotFound(RoundId),
    #[error("refined position is invalid: {0}")]
    InvalidRefinement(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Position(#[from] IPositionError),
}

pub fn questions_prompt(position: &IPosition, locale: &Locale) -> String {
    prompts::fill(
        prompts::ENRICHMENT_QUESTIONS,
        &[("input", &prompts::position_profile(position)), ("language", &locale.language)],
    )
}

#[derive(Deserialize)]
struct QuestionsDoc {
    #[serde(rename = "enrichingQuestions")]
    questions: Vec<String>,
}

/// Asks the model for 2-3 scaffolding questions about `position`.
pub fn generate_questions(
    position: &IPosition,
    provider: &dyn Provider,
    settings: &GenerationSettings,
    locale: &Locale,
) -> Result<Vec<String>, EnrichmentError> {
    let request = settings.request(questions_prompt(position, locale), Vec::new());
    let response = gateway::generate(provider, &request)?;
    let doc: QuestionsDoc = extract_as(&response.text, SchemaId::EnrichmentQuestions)?;
    let questions: Vec<String> = doc
        .questions
        .into_iter()
        .map(|q| q.trim().to_string())
        .filter(|q| !q.is_empty())
        .collect();
    if !(MIN_QUESTIONS..=MAX_QUESTIONS).contains(&questions.len()) {
        return Err(EnrichmentError::QuestionCountOutOfRange(questions.len()));
    }
    Ok(questions)
}

/// Normalises answers: blank strings become `None`. Fails when the shape
/// does not match the round or nothing was answered.
pub fn normalize_answers(
    round: &EnrichmentRound,
    answers: &[Option<String>],
) -> Result<Vec<Option<String>>, EnrichmentError> {
    if round.applied {
        return Err(EnrichmentError::AlreadyApplied(round.id.clone()));
    }
    if answers.len() != round.questions.len() {
        return Err(EnrichmentError::AnswerCountMismatch {
            expected: round.questions.len(),
            found: answers.len(),
        });
    }
    let answers: Vec<Option<String>> = answers
        .iter()
        .map(|a| a.as_deref().map(str::trim).filter(|a| !a.is_empty()).map(str::to_string))
        .collect();
    if answers.iter().all(Option::is_none) {
        return Err(EnrichmentError::NoAnswers);
    }
    Ok(answers)
}

pub fn refinement_prompt(position: &IPosition, questions: &[String], answers: &[Option<String>], locale: &Locale) -> String {
    let qa = questions
        .iter()
        .zip(answers)
        .enumerate()
        .filter_map(|(i, (q, a))| a.as_ref().map(|a| format!("Q{n}: {q}\nA{n}: {a}", n = i + 1)))
        .collect::<Vec<_>>()
        .join("\n\n");
    prompts::fill(
        prompts::REFINEMENT,
        &[
            ("input", &prompts::position_profile(position)),
            ("qa", &qa),
            ("language", &locale.language),
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refinement {
    pub core_viewpoint: String,
    pub narrative: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Deserialize)]
struct RefinementDoc {
    core_viewpoint: String,
    narrative: String,
    #[serde(rename = "I-position")]
    position_name: Option<String>,
    name: Option<String>,
}

/// Asks the model to fold the answers into viewpoint and narrative. The
/// position itself is not touched; a proposed rename is dropped with a
/// warning.
pub fn request_refinement(
    position: &IPosition,
    round: &EnrichmentRound,
    answers: &[Option<String>],
    provider: &dyn Provider,
    settings: &GenerationSettings,
    locale: &Locale,
) -> Result<Refinement, EnrichmentError> {
    let answers = normalize_answers(round, answers)?;
    let request = settings.request(refinement_prompt(position, &round.questions, &answers, locale), Vec::new());
    let response = gateway::generate(provider, &request)?;
    let doc: RefinementDoc = extract_as(&response.text, SchemaId::Refinement)?;

    let mut diagnostics = Vec::new();
    for proposed in [doc.position_name, doc.name].into_iter().flatten() {
        if proposed.trim() != position.name {
            diagnostics.push(Diagnostic::warn(format!(
                "model proposed renaming {:?} to {:?}; name kept",
                position.name,
                proposed.trim()
            )));
        }
    }
    let core_viewpoint = doc.core_viewpoint.trim().to_string();
    let narrative = doc.narrative.trim().to_string();
    check_fields(&position.name, &core_viewpoint, &narrative, locale).map_err(EnrichmentError::InvalidRefinement)?;
    Ok(Refinement {
        core_viewpoint,
        narrative,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{self, FnProvider};

    fn round(n: usize) -> EnrichmentRound {
        EnrichmentRound::new(
            RoundId::from("r1"),
            PositionId::from("p1"),
            (0..n).map(|i| format!("Question {i}?")).collect(),
        )
    }

    fn reply(text: &'static str) -> FnProvider {
        FnProvider::new(move |_| Ok(text.to_string()))
    }

    #[test]
    fn three_questions_accepted() {
        let provider = reply(
            r#"{"enrichingQuestions": ["When did this lotus leaf become a part of you?", "What does this lotus leaf truly want?", "Who taught you this?"]}"#,
        );
        let position = testkit::position("p1", "Myself, Seeking Stability");
        let questions = generate_questions(&position, &provider, &Default::default(), &Locale::default()).unwrap();
        assert_eq!(questions.len(), 3);
        assert_eq!(questions[0], "When did this lotus leaf become a part of you?");
    }

    #[test]
    fn two_accepted_one_and_four_rejected() {
        let position = testkit::position("p1", "Myself, Seeking Stability");
        let settings = GenerationSettings::default();
        let ok = reply(r#"{"enrichingQuestions": ["a?", "b?"]}"#);
        assert_eq!(generate_questions(&position, &ok, &settings, &Locale::default()).unwrap().len(), 2);
        for bad in [r#"{"enrichingQuestions": ["a?"]}"#, r#"{"enrichingQuestions": ["a","b","c","d"]}"#] {
            let provider = reply(bad);
            assert!(matches!(
                generate_questions(&position, &provider, &settings, &Locale::default()),
                Err(EnrichmentError::QuestionCountOutOfRange(_))
            ));
        }
    }

    #[test]
    fn empty_answers_rejected() {
        let r = round(3);
        assert!(matches!(
            normalize_answers(&r, &[None, Some("  ".into()), None]),
            Err(EnrichmentError::NoAnswers)
        ));
        assert!(matches!(
            normalize_answers(&r, &[Some("x".into())]),
            Err(EnrichmentError::AnswerCountMismatch { expected: 3, found: 1 })
        ));
        let mut applied = round(2);
        applied.applied = true;
        assert!(matches!(
            normalize_answers(&applied, &[Some("x".into()), None]),
            Err(EnrichmentError::AlreadyApplied(_))
        ));
    }

    #[test]
    fn refinement_prompt_lists_only_answered_pairs() {
        let position = testkit::position("p1", "Myself, Wanting to Contribute");
        let r = round(3);
        let prompt = refinement_prompt(&position, &r.questions, &[Some("yes".into()), None, Some("no".into())], &Locale::default());
        assert!(prompt.contains("Q1: Question 0?\nA1: yes"));
        assert!(prompt.contains("Q3: Question 2?\nA3: no"));
        assert!(!prompt.contains("Q2:"));
    }

    #[test]
    fn rename_is_discarded_with_warning() {
        let provider = reply(r#"{"I-position": "Myself, Someone Else", "core_viewpoint": "new view", "narrative": "new story"}"#);
        let position = testkit::position("p1", "Myself, Wanting to Contribute");
        let r = round(2);
        let refinement = request_refinement(
            &position,
            &r,
            &[Some("answer".into()), None],
            &provider,
            &Default::default(),
            &Locale::default(),
        )
        .unwrap();
        assert_eq!(refinement.core_viewpoint, "new view");
        assert_eq!(refinement.diagnostics.len(), 1);
    }
}
