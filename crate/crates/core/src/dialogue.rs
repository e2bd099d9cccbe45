//! 1:1 dialogue between the user and one leaf agent.
//!
//! The system prompt is assembled once when the dialogue opens and stored on
//! the session, so later edits to the position only affect new dialogues.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, Message};
use crate::ids::{DialogueId, PositionId};
use crate::iposition::IPosition;
use crate::locale::Locale;
use crate::prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Agent,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DialogueStatus {
    Open,
    Closed,
}

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("dialogue {0} not found")]
    NotFound(DialogueId),
    #[error("dialogue {0} is closed")]
    SessionClosed(DialogueId),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("turn rejected: {0}")]
    InvalidTurn(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub id: DialogueId,
    pub position_id: PositionId,
    pub system_prompt: String,
    pub transcript: Vec<Turn>,
    pub status: DialogueStatus,
}

pub fn dialogue_prompt(position: &IPosition, locale: &Locale) -> String {
    prompts::fill(
        prompts::DIALOGUE,
        &[("input", &prompts::position_profile(position)), ("language", &locale.language)],
    )
}

impl DialogueSession {
    pub fn open(id: DialogueId, position: &IPosition, locale: &Locale) -> Self {
        Self {
            id,
            position_id: position.id.clone(),
            system_prompt: dialogue_prompt(position, locale),
            transcript: Vec::new(),
            status: DialogueStatus::Open,
        }
    }

    pub fn ensure_open(&self) -> Result<(), DialogueError> {
        match self.status {
            DialogueStatus::Open => Ok(()),
            DialogueStatus::Closed => Err(DialogueError::SessionClosed(self.id.clone())),
        }
    }

    /// Gateway history for the next agent reply: the whole transcript.
    pub fn history(&self) -> Vec<Message> {
        self.transcript
            .iter()
            .map(|turn| match turn.speaker {
                Speaker::User => Message::user(&turn.text),
                Speaker::Agent => Message::agent(&turn.text),
                Speaker::System => Message::system(&turn.text),
            })
            .collect()
    }

    /// Appends a turn, enforcing non-empty text, non-decreasing timestamps
    /// and no two consecutive agent turns.
    pub fn push(&mut self, turn: Turn) -> Result<(), DialogueError> {
        self.ensure_open()?;
        if turn.text.trim().is_empty() {
            return Err(DialogueError::EmptyMessage);
        }
        if let Some(last) = self.transcript.last() {
            if turn.at < last.at {
                return Err(DialogueError::InvalidTurn("timestamp goes backwards".into()));
            }
            if last.speaker == Speaker::Agent && turn.speaker == Speaker::Agent {
                return Err(DialogueError::InvalidTurn("two consecutive agent turns".into()));
            }
        }
        self.transcript.push(turn);
        Ok(())
    }

    pub fn close(&mut self) -> Result<(), DialogueError> {
        self.ensure_open()?;
        self.status = DialogueStatus::Closed;
        Ok(())
    }

    /// Timestamp for a new turn: `now`, clamped to the last turn's time.
    pub fn next_time(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        self.transcript.last().map_or(now, |last| now.max(last.at))
    }
}
