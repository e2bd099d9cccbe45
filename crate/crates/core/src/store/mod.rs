//! Append-only session event log and on-disk session layout.
//!
//! ```text
//! <data-dir>/<session-id>/events.ndjson   one LogEvent per line
//! <data-dir>/<session-id>/state.json      latest StateDocument
//! <data-dir>/<session-id>/snapshots/      one JSON export per saved snapshot
//! ```

mod replay;

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Turn;
use crate::enrichment::EnrichmentRound;
use crate::ids::{DialogueId, GroupId, PositionId, RoundId};
use crate::iposition::{Diagnostic, IPosition};
use crate::orchestra::{GroupSession, GroupTurn, Mode, TopicSet};
use crate::pond::{LeafLayout, Snapshot};

pub use replay::replay;

pub const EVENT_SCHEMA_VERSION: u32 = 1;
pub const STATE_SCHEMA_VERSION: u32 = 1;
pub const EVENTS_FILE: &str = "events.ndjson";
pub const STATE_FILE: &str = "state.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Stage1,
    Stage2,
    Stage3,
    Stage4,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Stage1, Stage::Stage2, Stage::Stage3, Stage::Stage4];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    ProfileModification,
    LeafAddition,
    LeafDeletion,
    OneOnOneTurn,
    LayoutChange,
    VisualAttributeChange,
    PairSelection,
    TopicSelection,
    GroupTurn,
    SnapshotSaved,
    EnrichmentRound,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::ProfileModification,
        EventKind::LeafAddition,
        EventKind::LeafDeletion,
        EventKind::OneOnOneTurn,
        EventKind::LayoutChange,
        EventKind::VisualAttributeChange,
        EventKind::PairSelection,
        EventKind::TopicSelection,
        EventKind::GroupTurn,
        EventKind::SnapshotSaved,
        EventKind::EnrichmentRound,
    ];

    /// The stage each kind of record belongs to.
    pub fn stage(self) -> Stage {
        match self {
            EventKind::ProfileModification
            | EventKind::LeafAddition
            | EventKind::LeafDeletion
            | EventKind::OneOnOneTurn
            | EventKind::EnrichmentRound => Stage::Stage1,
            EventKind::LayoutChange | EventKind::VisualAttributeChange => Stage::Stage2,
            EventKind::PairSelection | EventKind::TopicSelection | EventKind::GroupTurn => Stage::Stage3,
            EventKind::SnapshotSaved => Stage::Stage4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    PositionAdded { position: IPosition, layout: LeafLayout },
    PositionEdited { position: IPosition },
    PositionDeleted { position_id: PositionId },
    EnrichmentQuestions { round: EnrichmentRound },
    EnrichmentApplied {
        round_id: RoundId,
        answers: Vec<Option<String>>,
        position: IPosition,
        diagnostics: Vec<Diagnostic>,
    },
    DialogueOpened {
        dialogue_id: DialogueId,
        position_id: PositionId,
        system_prompt: String,
    },
    DialogueTurn { dialogue_id: DialogueId, turn: Turn },
    DialogueClosed { dialogue_id: DialogueId },
    LeafMoved { layout: LeafLayout },
    LeafResized { layout: LeafLayout },
    LeafRecolored { layout: LeafLayout },
    TopicsGenerated { topics: TopicSet },
    GroupStarted { group: GroupSession },
    GroupTurnAdded {
        group_id: GroupId,
        turn: GroupTurn,
        mode: Option<Mode>,
    },
    SnapshotSaved { snapshot: Snapshot },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::PositionAdded { .. } => EventKind::LeafAddition,
            EventPayload::PositionEdited { .. } => EventKind::ProfileModification,
            EventPayload::PositionDeleted { .. } => EventKind::LeafDeletion,
            EventPayload::EnrichmentQuestions { .. } | EventPayload::EnrichmentApplied { .. } => {
                EventKind::EnrichmentRound
            }
            EventPayload::DialogueOpened { .. }
            | EventPayload::DialogueTurn { .. }
            | EventPayload::DialogueClosed { .. } => EventKind::OneOnOneTurn,
            EventPayload::LeafMoved { .. } => EventKind::LayoutChange,
            EventPayload::LeafResized { .. } | EventPayload::LeafRecolored { .. } => {
                EventKind::VisualAttributeChange
            }
            EventPayload::TopicsGenerated { .. } => EventKind::PairSelection,
            EventPayload::GroupStarted { .. } => EventKind::TopicSelection,
            EventPayload::GroupTurnAdded { .. } => EventKind::GroupTurn,
            EventPayload::SnapshotSaved { .. } => EventKind::SnapshotSaved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub v: u32,
    pub event_id: u64,
    pub at: DateTime<Utc>,
    pub stage: Stage,
    pub kind: EventKind,
    pub payload: EventPayload,
}

/// An event before it has been assigned an id.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEvent {
    pub at: DateTime<Utc>,
    pub stage: Stage,
    pub kind: EventKind,
    pub payload: EventPayload,
}

impl NewEvent {
    /// Stage and kind derived from the payload.
    pub fn from_payload(at: DateTime<Utc>, payload: EventPayload) -> Self {
        let kind = payload.kind();
        Self {
            at,
            stage: kind.stage(),
            kind,
            payload,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind:?} events belong to {expected:?}, not {stage:?}")]
    StageKindMismatch {
        stage: Stage,
        kind: EventKind,
        expected: Stage,
    },
    #[error("payload of type {payload:?} does not match kind {kind:?}")]
    PayloadKindMismatch { kind: EventKind, payload: EventKind },
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("corrupt log at event {event_id}: {reason}")]
    CorruptLog { event_id: u64, reason: String },
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::StorageFailure(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    pub stage: Option<Stage>,
    pub kind: Option<EventKind>,
}

impl EventFilter {
    pub fn matches(&self, event: &LogEvent) -> bool {
        self.stage.is_none_or(|s| s == event.stage) && self.kind.is_none_or(|k| k == event.kind)
    }
}

/// Append-only list of events, optionally mirrored to an ndjson file.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<LogEvent>,
    file: Option<File>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Reads an existing log file and keeps appending to it.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let events = read_events(path)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { events, file: Some(file) })
    }

    /// Starts mirroring to `path`, writing out everything recorded so far.
    pub fn attach(&mut self, path: &Path) -> Result<(), StoreError> {
        let mut file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        for event in &self.events {
            writeln!(file, "{}", serde_json::to_string(event).expect("event serialises"))?;
        }
        file.sync_data()?;
        self.file = Some(file);
        Ok(())
    }

    pub fn append(&mut self, event: NewEvent) -> Result<u64, StoreError> {
        let expected = event.kind.stage();
        if event.stage != expected {
            return Err(StoreError::StageKindMismatch {
                stage: event.stage,
                kind: event.kind,
                expected,
            });
        }
        if event.payload.kind() != event.kind {
            return Err(StoreError::PayloadKindMismatch {
                kind: event.kind,
                payload: event.payload.kind(),
            });
        }
        let record = LogEvent {
            v: EVENT_SCHEMA_VERSION,
            event_id: self.events.last().map_or(1, |e| e.event_id + 1),
            at: event.at,
            stage: event.stage,
            kind: event.kind,
            payload: event.payload,
        };
        if let Some(file) = &mut self.file {
            let line = serde_json::to_string(&record).expect("event serialises");
            writeln!(file, "{line}")?;
            file.sync_data()?;
        }
        let id = record.event_id;
        self.events.push(record);
        Ok(id)
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn query(&self, filter: &EventFilter) -> Vec<&LogEvent> {
        self.events.iter().filter(|e| filter.matches(e)).collect()
    }
}

/// Parses an ndjson log, checking that ids run 1, 2, 3, ...
pub fn read_events(path: &Path) -> Result<Vec<LogEvent>, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events: Vec<LogEvent> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let expected = events.len() as u64 + 1;
        let event: LogEvent = serde_json::from_str(&line).map_err(|e| StoreError::CorruptLog {
            event_id: expected,
            reason: e.to_string(),
        })?;
        if event.event_id != expected {
            return Err(StoreError::CorruptLog {
                event_id: event.event_id,
                reason: format!("expected event id {expected}"),
            });
        }
        events.push(event);
    }
    Ok(events)
}

/// Writes `contents` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Paths of one session's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionDir {
    pub root: PathBuf,
}

impl SessionDir {
    pub fn new(data_dir: &Path, session_id: &str) -> Self {
        Self {
            root: data_dir.join(session_id),
        }
    }

    pub fn events(&self) -> PathBuf {
        self.root.join(EVENTS_FILE)
    }

    pub fn state(&self) -> PathBuf {
        self.root.join(STATE_FILE)
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join(SNAPSHOT_DIR)
    }

    /// File name for a snapshot export; path separators in the label are
    /// replaced.
    pub fn snapshot_file(&self, label: &str) -> PathBuf {
        let safe: String = label
            .chars()
            .map(|c| if matches!(c, '/' | '\\' | '\0') { '_' } else { c })
            .collect();
        self.snapshots().join(format!("{safe}.json"))
    }

    pub fn exists(&self) -> bool {
        self.state().is_file()
    }

    pub fn create(&self) -> Result<(), StoreError> {
        fs::create_dir_all(self.snapshots())?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&self.root, fs::Permissions::from_mode(0o700))?;
        }
        Ok(())
    }
}
