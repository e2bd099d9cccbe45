//! Headless runner: plays a JSON script of stage actions against a fresh
//! session and leaves the log, state and snapshots in the data directory.
//!
//! Script format:
//!
//! ```json
//! { "steps": [
//!     { "action": "edit_position", "position": "Myself, a Planner", "patch": { "core_viewpoint": "..." } },
//!     { "action": "open_dialogue", "position": "p1", "messages": ["Hi"], "close": true },
//!     { "action": "generate_topics", "pair": ["p1", "p2"] },
//!     { "action": "start_group", "pair": ["p1", "p2"], "topic": 0 },
//!     { "action": "save_snapshot" }
//! ] }
//! ```
//!
//! Positions are referenced by id or by exact name. Group actions default to
//! the most recently started group.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use innerpond_core::clock::Clock;
use innerpond_core::error::ErrorKind;
use innerpond_core::gateway::Provider;
use innerpond_core::ids::{GroupId, PositionId};
use innerpond_core::iposition::{NewPosition, PositionPatch};
use innerpond_core::profile::ingest_presurvey;
use innerpond_core::{Session, SessionConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    EditPosition {
        position: String,
        patch: PositionPatch,
    },
    AddPosition {
        position: NewPosition,
    },
    DeletePosition {
        position: String,
    },
    /// Generates a question round and applies the answers. Missing answers
    /// count as skipped questions.
    Enrich {
        position: String,
        #[serde(default)]
        answers: Vec<Option<String>>,
    },
    OpenDialogue {
        position: String,
        #[serde(default)]
        messages: Vec<String>,
        #[serde(default)]
        close: bool,
    },
    MoveLeaf {
        position: String,
        x: f64,
        y: f64,
    },
    ResizeLeaf {
        position: String,
        size: f64,
    },
    RecolorLeaf {
        position: String,
        color: String,
    },
    GenerateTopics {
        pair: [String; 2],
    },
    StartGroup {
        pair: [String; 2],
        topic: TopicRef,
    },
    Skip {
        #[serde(default)]
        group: Option<String>,
    },
    Mediate {
        #[serde(default)]
        group: Option<String>,
        text: String,
    },
    SaveSnapshot {
        #[serde(default)]
        user: Option<String>,
    },
}

/// A topic given verbatim or as an index into the latest topic set
/// generated for the pair.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TopicRef {
    Index(usize),
    Text(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid document {path}: {reason}")]
    InvalidDocument { path: PathBuf, reason: String },
    #[error("step {step} ({action}): {source}")]
    Step {
        step: usize,
        action: &'static str,
        source: innerpond_core::Error,
    },
    #[error(transparent)]
    Session(#[from] innerpond_core::Error),
}

impl RunError {
    /// Process exit status:
    /// 2 usage, I/O or storage; 3 invalid input document; 4 domain error
    /// such as NotFound; 5 provider or extraction failure; 6 invariant
    /// violation.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Usage(_) | RunError::Io { .. } => 2,
            RunError::InvalidDocument { .. } => 3,
            RunError::Step { source, .. } | RunError::Session(source) => match source.kind() {
                ErrorKind::NotFound | ErrorKind::InvalidInput | ErrorKind::Conflict => 4,
                ErrorKind::Provider | ErrorKind::Extraction => 5,
                ErrorKind::Invariant => 6,
                ErrorKind::Storage => 2,
            },
        }
    }

    /// The error code of the underlying failure, if any.
    pub fn code(&self) -> Option<&'static str> {
        match self {
            RunError::Step { source, .. } | RunError::Session(source) => Some(source.code()),
            _ => None,
        }
    }
}

pub struct RunOptions {
    pub presurvey: PathBuf,
    pub script: PathBuf,
    pub data_dir: PathBuf,
    pub session_id: Option<String>,
    pub config: SessionConfig,
    pub provider: Arc<dyn Provider>,
    pub clock: Arc<dyn Clock>,
}

#[derive(Debug)]
pub struct RunReport {
    pub session_id: String,
    pub events: usize,
    pub snapshots: Vec<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| RunError::InvalidDocument {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn run(opts: RunOptions) -> Result<RunReport, RunError> {
    let session_id = opts.session_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    if !crate::state::valid_session_id(&session_id) {
        return Err(RunError::Usage(format!("invalid session id {session_id:?}")));
    }
    let presurvey: serde_json::Value = read_json(&opts.presurvey)?;
    let script: Script = read_json(&opts.script)?;
    let intake = ingest_presurvey(&presurvey).map_err(|e| RunError::InvalidDocument {
        path: opts.presurvey.clone(),
        reason: e.to_string(),
    })?;

    let mut session = Session::create(
        &session_id,
        intake,
        opts.config,
        opts.provider,
        opts.clock,
        Some(&opts.data_dir),
    )?;
    tracing::info!(session = %session_id, positions = session.positions().len(), "session created");

    for (i, step) in script.steps.iter().enumerate() {
        let step_no = i + 1;
        tracing::debug!(step = step_no, action = action_name(step), "running step");
        apply_step(&mut session, step).map_err(|source| RunError::Step {
            step: step_no,
            action: action_name(step),
            source,
        })?;
    }
    session.verify()?;

    let snapshots = match session.dir() {
        Some(dir) => session
            .snapshots()
            .iter()
            .map(|s| dir.snapshot_file(&s.label))
            .collect(),
        None => Vec::new(),
    };
    Ok(RunReport {
        session_id,
        events: session.events().len(),
        snapshots,
    })
}

fn action_name(step: &Step) -> &'static str {
    match step {
        Step::EditPosition { .. } => "edit_position",
        Step::AddPosition { .. } => "add_position",
        Step::DeletePosition { .. } => "delete_position",
        Step::Enrich { .. } => "enrich",
        Step::OpenDialogue { .. } => "open_dialogue",
        Step::MoveLeaf { .. } => "move_leaf",
        Step::ResizeLeaf { .. } => "resize_leaf",
        Step::RecolorLeaf { .. } => "recolor_leaf",
        Step::GenerateTopics { .. } => "generate_topics",
        Step::StartGroup { .. } => "start_group",
        Step::Skip { .. } => "skip",
        Step::Mediate { .. } => "mediate",
        Step::SaveSnapshot { .. } => "save_snapshot",
    }
}

fn resolve(session: &Session, key: &str) -> innerpond_core::Result<PositionId> {
    Ok(session.resolve_position(key)?.id.clone())
}

fn resolve_group(session: &Session, key: Option<&str>) -> innerpond_core::Result<GroupId> {
    match key {
        Some(k) => Ok(session.group(&GroupId::from(k))?.id.clone()),
        None => {
            let last = session.state().ids.group;
            Ok(session.group(&GroupId::from_seq(last.max(1)))?.id.clone())
        }
    }
}

/// Applies one script step to the session.
pub fn apply_step(session: &mut Session, step: &Step) -> innerpond_core::Result<()> {
    match step {
        Step::EditPosition { position, patch } => {
            let id = resolve(session, position)?;
            session.edit_position(&id, patch)?;
        }
        Step::AddPosition { position } => {
            session.add_position(position.clone())?;
        }
        Step::DeletePosition { position } => {
            let id = resolve(session, position)?;
            session.delete_position(&id)?;
        }
        Step::Enrich { position, answers } => {
            let id = resolve(session, position)?;
            let round = session.generate_questions(&id)?;
            let mut answers = answers.clone();
            answers.resize(round.questions.len(), None);
            session.apply_refinement(&round.id, &answers)?;
        }
        Step::OpenDialogue {
            position,
            messages,
            close,
        } => {
            let id = resolve(session, position)?;
            let dialogue = session.open_dialogue(&id)?;
            for text in messages {
                session.send_message(&dialogue.id, text)?;
            }
            if *close {
                session.close_dialogue(&dialogue.id)?;
            }
        }
        Step::MoveLeaf { position, x, y } => {
            let id = resolve(session, position)?;
            session.move_leaf(&id, *x, *y)?;
        }
        Step::ResizeLeaf { position, size } => {
            let id = resolve(session, position)?;
            session.resize_leaf(&id, *size)?;
        }
        Step::RecolorLeaf { position, color } => {
            let id = resolve(session, position)?;
            session.recolor_leaf(&id, color)?;
        }
        Step::GenerateTopics { pair } => {
            let (a, b) = (resolve(session, &pair[0])?, resolve(session, &pair[1])?);
            session.generate_topics(&a, &b)?;
        }
        Step::StartGroup { pair, topic } => {
            let (a, b) = (resolve(session, &pair[0])?, resolve(session, &pair[1])?);
            let topic = match topic {
                TopicRef::Text(t) => t.clone(),
                TopicRef::Index(i) => session
                    .state()
                    .topic_sets
                    .iter()
                    .rev()
                    .find(|set| set.is_for(&a, &b))
                    .and_then(|set| set.questions.get(*i))
                    .cloned()
                    .unwrap_or_default(),
            };
            session.start_group(&a, &b, &topic)?;
        }
        Step::Skip { group } => {
            let id = resolve_group(session, group.as_deref())?;
            session.skip(&id)?;
        }
        Step::Mediate { group, text } => {
            let id = resolve_group(session, group.as_deref())?;
            session.mediate(&id, text)?;
        }
        Step::SaveSnapshot { user } => {
            session.save_snapshot(user.as_deref())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_parse_with_defaults() {
        let script: Script = serde_json::from_str(
            r#"{"steps":[
                {"action":"start_group","pair":["p1","p2"],"topic":1},
                {"action":"start_group","pair":["p1","p2"],"topic":"Why?"},
                {"action":"skip"},
                {"action":"open_dialogue","position":"p1"}
            ]}"#,
        )
        .unwrap();
        assert!(matches!(script.steps[0], Step::StartGroup { topic: TopicRef::Index(1), .. }));
        assert!(matches!(&script.steps[1], Step::StartGroup { topic: TopicRef::Text(t), .. } if t == "Why?"));
        assert!(matches!(script.steps[2], Step::Skip { group: None }));
        assert!(matches!(&script.steps[3], Step::OpenDialogue { messages, close: false, .. } if messages.is_empty()));
    }

    #[test]
    fn unknown_actions_are_rejected() {
        assert!(serde_json::from_str::<Script>(r#"{"steps":[{"action":"dance"}]}"#).is_err());
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let invariant = RunError::Session(innerpond_core::Error::InvariantViolation("x".into()));
        assert_eq!(invariant.exit_code(), 6);
        assert_eq!(RunError::Usage("x".into()).exit_code(), 2);
    }
}
