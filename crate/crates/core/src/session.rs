//! One user's InnerPond session: the aggregate every operation goes through.
//!
//! Each state change is recorded as exactly one [`LogEvent`](crate::store::LogEvent).
//! The live state is always equal to `store::replay` of the log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::dialogue::{DialogueError, DialogueSession, Speaker, Turn};
use crate::enrichment::{self, EnrichmentError, EnrichmentRound};
use crate::error::{Error, Result};
use crate::gateway::{self, GenerationSettings, Message, Provider};
use crate::ids::{DialogueId, GroupId, IdCounters, PositionId, RoundId};
use crate::iposition::{
    extraction_prompt, parse_extraction, Diagnostic, ExtractionResult, IPosition, IPositionError, NewPosition,
    PositionPatch, PositionSet,
};
use crate::locale::Locale;
use crate::orchestra::{self, GroupSession, GroupTurn, Mode, OrchestraError, TopicSet, TurnDecision};
use crate::pond::{LeafLayout, PondError, PondState, Snapshot};
use crate::profile::{self, Intake, UserKnowledge};
use crate::store::{self, EventFilter, EventLog, EventPayload, LogEvent, NewEvent, SessionDir, StoreError};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub locale: Locale,
    pub generation: GenerationSettings,
}

impl SessionConfig {
    pub fn new(locale: Locale) -> Self {
        let generation = GenerationSettings {
            locale: locale.tag.clone(),
            ..GenerationSettings::default()
        };
        Self { locale, generation }
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self::new(Locale::default())
    }
}

/// Session facts fixed at creation; not part of the replayed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub user: String,
    pub created_at: DateTime<Utc>,
    pub locale: Locale,
    pub generation: GenerationSettings,
    pub knowledge: UserKnowledge,
    pub profile_text: String,
    pub extraction_diagnostics: Vec<Diagnostic>,
}

/// Everything reconstructible from the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub positions: PositionSet,
    pub pond: PondState,
    pub rounds: BTreeMap<RoundId, EnrichmentRound>,
    pub dialogues: BTreeMap<DialogueId, DialogueSession>,
    pub topic_sets: Vec<TopicSet>,
    pub groups: BTreeMap<GroupId, GroupSession>,
    pub snapshots: Vec<Snapshot>,
    pub ids: IdCounters,
}

impl SessionState {
    /// Every live position has exactly one leaf and every leaf a live
    /// position.
    pub fn check_bijection(&self) -> Result<()> {
        let positions: BTreeSet<&PositionId> = self.positions.iter().map(|p| &p.id).collect();
        let leaves: BTreeSet<&PositionId> = self.pond.layouts.keys().collect();
        if positions.len() != self.positions.len() {
            return Err(Error::InvariantViolation("duplicate position ids".into()));
        }
        if positions != leaves {
            return Err(Error::InvariantViolation(format!(
                "positions {positions:?} do not match leaves {leaves:?}"
            )));
        }
        Ok(())
    }
}

/// The `state.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDocument {
    pub schema_version: u32,
    pub meta: SessionMeta,
    pub state: SessionState,
}

/// An agent turn produced by the group scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReply {
    pub turn: GroupTurn,
    pub decision: TurnDecision,
}

pub struct Session {
    meta: SessionMeta,
    state: SessionState,
    log: EventLog,
    provider: Arc<dyn Provider>,
    clock: Arc<dyn Clock>,
    dir: Option<SessionDir>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.meta.session_id)
            .field("events", &self.log.len())
            .finish_non_exhaustive()
    }
}

const EXTRACTION_RETRY: &str = "Your previous answer could not be used: {reason}. \
Reply again with the complete JSON document in the required format.";

impl Session {
    /// Builds a session from a validated pre-survey: summarises the scales
    /// if needed, renders the profile and extracts the initial I-positions.
    ///
    /// With `data_dir` the session is persisted under
    /// `<data_dir>/<session_id>/`.
    pub fn create(
        session_id: &str,
        intake: Intake,
        config: SessionConfig,
        provider: Arc<dyn Provider>,
        clock: Arc<dyn Clock>,
        data_dir: Option<&Path>,
    ) -> Result<Self> {
        let dir = data_dir.map(|d| SessionDir::new(d, session_id));
        if let Some(dir) = &dir {
            if dir.exists() {
                return Err(StoreError::StorageFailure(format!("session {session_id} already exists")).into());
            }
        }
        let SessionConfig { locale, generation } = config;
        let mut knowledge = intake.knowledge;
        if knowledge.personality_summary.trim().is_empty() {
            knowledge.personality_summary =
                profile::summarize_scales(&knowledge.personality_scale, &*provider, &generation, &locale)?;
        }
        if knowledge.work_values_summary.trim().is_empty() {
            knowledge.work_values_summary =
                profile::summarize_scales(&knowledge.work_values_scale, &*provider, &generation, &locale)?;
        }
        let profile_text = profile::render_profile(&knowledge)?;

        let mut session = Self {
            meta: SessionMeta {
                session_id: session_id.to_string(),
                user: intake.user,
                created_at: clock.now(),
                locale,
                generation,
                knowledge,
                profile_text,
                extraction_diagnostics: Vec::new(),
            },
            state: SessionState::default(),
            log: EventLog::in_memory(),
            provider,
            clock,
            dir: None,
        };

        let extraction = session.extract()?;
        for position in extraction.positions {
            session.state.positions.insert(position.clone())?;
            let layout = session.state.pond.place(position.id.clone());
            session.record(EventPayload::PositionAdded { position, layout })?;
        }
        session.meta.extraction_diagnostics = extraction.diagnostics;

        if let Some(dir) = dir {
            dir.create()?;
            session.log.attach(&dir.events())?;
            session.dir = Some(dir);
            session.checkpoint();
        }
        Ok(session)
    }

    fn extract(&mut self) -> Result<ExtractionResult> {
        let prompt = extraction_prompt(&self.meta.profile_text, &self.meta.locale);
        let mut history = Vec::new();
        loop {
            let request = self.meta.generation.request(prompt.clone(), history.clone());
            let text = gateway::generate(&*self.provider, &request)?.text;
            let ids = &mut self.state.ids;
            match parse_extraction(&text, &self.meta.locale, || ids.next_position()) {
                Ok(result) => return Ok(result),
                Err(e @ (IPositionError::ValidationFailed(_) | IPositionError::Extract(_))) if history.is_empty() => {
                    log::warn!("extraction rejected, retrying once: {e}");
                    history.push(Message::user(EXTRACTION_RETRY.replace("{reason}", &e.to_string())));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Reopens a persisted session. The log is authoritative; `state.json`
    /// only supplies the session metadata.
    pub fn load(data_dir: &Path, session_id: &str, provider: Arc<dyn Provider>, clock: Arc<dyn Clock>) -> Result<Self> {
        let dir = SessionDir::new(data_dir, session_id);
        let raw = fs::read_to_string(dir.state()).map_err(StoreError::from)?;
        let doc: StateDocument = serde_json::from_str(&raw).map_err(|e| StoreError::CorruptLog {
            event_id: 0,
            reason: format!("state.json: {e}"),
        })?;
        if doc.schema_version != store::STATE_SCHEMA_VERSION {
            return Err(StoreError::CorruptLog {
                event_id: 0,
                reason: format!("unsupported state schema_version {}", doc.schema_version),
            }
            .into());
        }
        let log = EventLog::open(&dir.events())?;
        let state = store::replay(log.events())?;
        if state != doc.state {
            log::warn!("state.json for {session_id} is stale; using the replayed log");
        }
        let session = Self {
            meta: doc.meta,
            state,
            log,
            provider,
            clock,
            dir: Some(dir),
        };
        session.state.check_bijection()?;
        Ok(session)
    }

    /// Appends one event. If the append fails the live state is rebuilt
    /// from the log so the two never diverge.
    fn record(&mut self, payload: EventPayload) -> Result<()> {
        let event = NewEvent::from_payload(self.clock.now(), payload);
        if let Err(e) = self.log.append(event) {
            self.state = store::replay(self.log.events())?;
            return Err(e.into());
        }
        Ok(())
    }

    /// Rewrites `state.json`. Failures are logged, not returned: the event
    /// log already holds the change.
    fn checkpoint(&self) {
        let Some(dir) = &self.dir else { return };
        let doc = StateDocument {
            schema_version: store::STATE_SCHEMA_VERSION,
            meta: self.meta.clone(),
            state: self.state.clone(),
        };
        let bytes = serde_json::to_vec_pretty(&doc).expect("state serialises");
        if let Err(e) = store::write_atomic(&dir.state(), &bytes) {
            log::warn!("failed to write state.json for {}: {e}", self.meta.session_id);
        }
    }

    fn finish<T>(&self, result: Result<T>) -> Result<T> {
        self.checkpoint();
        result
    }

    pub fn id(&self) -> &str {
        &self.meta.session_id
    }

    pub fn meta(&self) -> &SessionMeta {
        &self.meta
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn events(&self) -> &[LogEvent] {
        self.log.events()
    }

    pub fn query(&self, filter: &EventFilter) -> Vec<&LogEvent> {
        self.log.query(filter)
    }

    pub fn dir(&self) -> Option<&SessionDir> {
        self.dir.as_ref()
    }

    /// Replays the log and checks it against the live state, plus the
    /// position/leaf bijection.
    pub fn verify(&self) -> Result<()> {
        let replayed = store::replay(self.log.events())?;
        if replayed != self.state {
            return Err(Error::InvariantViolation("replayed log differs from live state".into()));
        }
        self.state.check_bijection()
    }

    // Positions

    pub fn positions(&self) -> &PositionSet {
        &self.state.positions
    }

    pub fn position(&self, id: &PositionId) -> Result<&IPosition> {
        Ok(self.state.positions.get(id)?)
    }

    /// Resolves a position by id or, failing that, by name.
    pub fn resolve_position(&self, key: &str) -> Result<&IPosition> {
        let id = PositionId::from(key);
        if let Ok(p) = self.state.positions.get(&id) {
            return Ok(p);
        }
        self.state
            .positions
            .find_by_name(key)
            .ok_or_else(|| IPositionError::NotFound(id).into())
    }

    /// Applies a patch. An empty patch changes nothing and logs nothing.
    pub fn edit_position(&mut self, id: &PositionId, patch: &PositionPatch) -> Result<IPosition> {
        let Some(position) = self.state.positions.edit(id, patch, &self.meta.locale)? else {
            return Ok(self.state.positions.get(id)?.clone());
        };
        let result = self.record(EventPayload::PositionEdited {
            position: position.clone(),
        });
        self.finish(result.map(|_| position))
    }

    pub fn add_position(&mut self, draft: NewPosition) -> Result<(IPosition, LeafLayout)> {
        let SessionState { positions, ids, pond, .. } = &mut self.state;
        let position = positions.add(draft, &self.meta.locale, || ids.next_position())?;
        let layout = pond.place(position.id.clone());
        let result = self.record(EventPayload::PositionAdded {
            position: position.clone(),
            layout: layout.clone(),
        });
        self.finish(result.map(|_| (position, layout)))
    }

    /// Removes a position and its leaf. Transcripts that mention it are
    /// kept.
    pub fn delete_position(&mut self, id: &PositionId) -> Result<()> {
        self.state.positions.remove(id)?;
        self.state.pond.remove(id);
        let result = self.record(EventPayload::PositionDeleted { position_id: id.clone() });
        self.finish(result)
    }

    // Enrichment

    pub fn round(&self, id: &RoundId) -> Result<&EnrichmentRound> {
        self.state
            .rounds
            .get(id)
            .ok_or_else(|| EnrichmentError::NotFound(id.clone()).into())
    }

    pub fn generate_questions(&mut self, position_id: &PositionId) -> Result<EnrichmentRound> {
        let position = self.state.positions.get(position_id)?;
        let questions = enrichment::generate_questions(position, &*self.provider, &self.meta.generation, &self.meta.locale)?;
        let round = EnrichmentRound::new(self.state.ids.next_round(), position_id.clone(), questions);
        self.state.rounds.insert(round.id.clone(), round.clone());
        let result = self.record(EventPayload::EnrichmentQuestions { round: round.clone() });
        self.finish(result.map(|_| round))
    }

    /// Folds the answers of a round into its position's viewpoint and
    /// narrative. Returns the refined position and any warnings.
    pub fn apply_refinement(&mut self, round_id: &RoundId, answers: &[Option<String>]) -> Result<(IPosition, Vec<Diagnostic>)> {
        let round = self.round(round_id)?.clone();
        let position = self.state.positions.get(&round.position_id)?;
        let refinement = enrichment::request_refinement(
            position,
            &round,
            answers,
            &*self.provider,
            &self.meta.generation,
            &self.meta.locale,
        )?;
        let answers = enrichment::normalize_answers(&round, answers)?;
        let position = self.state.positions.refine(
            &round.position_id,
            &refinement.core_viewpoint,
            &refinement.narrative,
            &self.meta.locale,
        )?;
        let stored = self.state.rounds.get_mut(round_id).expect("checked");
        stored.answers = answers.clone();
        stored.applied = true;
        let result = self.record(EventPayload::EnrichmentApplied {
            round_id: round_id.clone(),
            answers,
            position: position.clone(),
            diagnostics: refinement.diagnostics.clone(),
        });
        self.finish(result.map(|_| (position, refinement.diagnostics)))
    }

    // One-on-one dialogue

    pub fn dialogue(&self, id: &DialogueId) -> Result<&DialogueSession> {
        self.state
            .dialogues
            .get(id)
            .ok_or_else(|| DialogueError::NotFound(id.clone()).into())
    }

    /// Opens a dialogue and generates the agent's introduction. If the
    /// introduction fails the dialogue stays open with an empty transcript
    /// and `Error::Incomplete` names it.
    pub fn open_dialogue(&mut self, position_id: &PositionId) -> Result<DialogueSession> {
        let position = self.state.positions.get(position_id)?;
        let id = self.state.ids.next_dialogue();
        let dialogue = DialogueSession::open(id.clone(), position, &self.meta.locale);
        self.state.dialogues.insert(id.clone(), dialogue.clone());
        if let Err(e) = self.record(EventPayload::DialogueOpened {
            dialogue_id: id.clone(),
            position_id: position_id.clone(),
            system_prompt: dialogue.system_prompt,
        }) {
            return self.finish(Err(e));
        }
        let result = match self.dialogue_reply(&id) {
            Ok(_) => Ok(self.state.dialogues[&id].clone()),
            Err(e) => Err(Error::Incomplete {
                entity: id.to_string(),
                source: Box::new(e),
            }),
        };
        self.finish(result)
    }

    fn dialogue_reply(&mut self, id: &DialogueId) -> Result<Turn> {
        let dialogue = self.dialogue(id)?;
        let request = self.meta.generation.request(dialogue.system_prompt.clone(), dialogue.history());
        let text = gateway::generate(&*self.provider, &request).map_err(DialogueError::from)?.text;
        let now = self.clock.now();
        let dialogue = self.state.dialogues.get_mut(id).expect("checked");
        let turn = Turn {
            speaker: Speaker::Agent,
            text: text.trim().to_string(),
            at: dialogue.next_time(now),
        };
        dialogue.push(turn.clone())?;
        self.record(EventPayload::DialogueTurn {
            dialogue_id: id.clone(),
            turn: turn.clone(),
        })?;
        Ok(turn)
    }

    /// Appends the user's message and returns the agent's reply. The user
    /// turn is kept even when generation fails.
    pub fn send_message(&mut self, id: &DialogueId, text: &str) -> Result<Turn> {
        let now = self.clock.now();
        let dialogue = self
            .state
            .dialogues
            .get_mut(id)
            .ok_or_else(|| DialogueError::NotFound(id.clone()))?;
        dialogue.ensure_open()?;
        if text.trim().is_empty() {
            return Err(DialogueError::EmptyMessage.into());
        }
        let turn = Turn {
            speaker: Speaker::User,
            text: text.trim().to_string(),
            at: dialogue.next_time(now),
        };
        dialogue.push(turn.clone())?;
        if let Err(e) = self.record(EventPayload::DialogueTurn {
            dialogue_id: id.clone(),
            turn,
        }) {
            return self.finish(Err(e));
        }
        let result = self.dialogue_reply(id);
        self.finish(result)
    }

    pub fn close_dialogue(&mut self, id: &DialogueId) -> Result<()> {
        self.state
            .dialogues
            .get_mut(id)
            .ok_or_else(|| DialogueError::NotFound(id.clone()))?
            .close()?;
        let result = self.record(EventPayload::DialogueClosed { dialogue_id: id.clone() });
        self.finish(result)
    }

    // Group conversation

    pub fn group(&self, id: &GroupId) -> Result<&GroupSession> {
        self.state
            .groups
            .get(id)
            .ok_or_else(|| OrchestraError::NotFound(id.clone()).into())
    }

    pub fn generate_topics(&mut self, a: &PositionId, b: &PositionId) -> Result<TopicSet> {
        if a == b {
            return Err(OrchestraError::SamePosition.into());
        }
        let pa = self.state.positions.get(a)?;
        let pb = self.state.positions.get(b)?;
        let topics = orchestra::generate_topics(pa, pb, &*self.provider, &self.meta.generation)?;
        self.state.topic_sets.push(topics.clone());
        let result = self.record(EventPayload::TopicsGenerated { topics: topics.clone() });
        self.finish(result.map(|_| topics))
    }

    /// Starts a group conversation on a generated topic. Member profiles
    /// are frozen at this point. The first agent turn follows immediately;
    /// if it fails the group exists and `Error::Incomplete` names it.
    pub fn start_group(&mut self, a: &PositionId, b: &PositionId, topic: &str) -> Result<(GroupSession, GroupReply)> {
        if a == b {
            return Err(OrchestraError::SamePosition.into());
        }
        let members = [
            self.state.positions.get(a)?.into(),
            self.state.positions.get(b)?.into(),
        ];
        let topic = topic.trim();
        if !self
            .state
            .topic_sets
            .iter()
            .any(|set| set.is_for(a, b) && set.questions.iter().any(|q| q == topic))
        {
            return Err(OrchestraError::TopicNotFromSet.into());
        }
        let id = self.state.ids.next_group();
        let group = GroupSession::new(id.clone(), members, topic.to_string(), self.clock.now());
        self.state.groups.insert(id.clone(), group.clone());
        if let Err(e) = self.record(EventPayload::GroupStarted { group }) {
            return self.finish(Err(e));
        }
        let result = match self.group_reply(&id) {
            Ok(reply) => Ok((self.state.groups[&id].clone(), reply)),
            Err(e) => Err(Error::Incomplete {
                entity: id.to_string(),
                source: Box::new(e),
            }),
        };
        self.finish(result)
    }

    /// Inserts the hidden skip intervention and lets the scheduler pick the
    /// next agent (observation mode).
    pub fn skip(&mut self, id: &GroupId) -> Result<GroupReply> {
        let now = self.clock.now();
        let group = self
            .state
            .groups
            .get_mut(id)
            .ok_or_else(|| OrchestraError::NotFound(id.clone()))?;
        let turn = group.push_intervention(now);
        if let Err(e) = self.record(EventPayload::GroupTurnAdded {
            group_id: id.clone(),
            turn,
            mode: Some(Mode::Observation),
        }) {
            return self.finish(Err(e));
        }
        let result = self.group_reply(id);
        self.finish(result)
    }

    /// Posts a user message into the group (mediation mode) and returns the
    /// next agent turn.
    pub fn mediate(&mut self, id: &GroupId, text: &str) -> Result<GroupReply> {
        let now = self.clock.now();
        let group = self
            .state
            .groups
            .get_mut(id)
            .ok_or_else(|| OrchestraError::NotFound(id.clone()))?;
        let turn = group.push_user(text, now)?;
        if let Err(e) = self.record(EventPayload::GroupTurnAdded {
            group_id: id.clone(),
            turn,
            mode: Some(Mode::Mediation),
        }) {
            return self.finish(Err(e));
        }
        let result = self.group_reply(id);
        self.finish(result)
    }

    fn group_reply(&mut self, id: &GroupId) -> Result<GroupReply> {
        let group = self.group(id)?;
        let decision = group.decide_next_turn(&*self.provider, &self.meta.generation, &self.meta.locale);
        let request = group.agent_request(&decision, &self.meta.generation, &self.meta.locale);
        let text = gateway::generate(&*self.provider, &request).map_err(OrchestraError::from)?.text;
        let now = self.clock.now();
        let group = self.state.groups.get_mut(id).expect("checked");
        let turn = group.push_agent(decision.next_speaker, &text, now, &self.meta.locale)?;
        self.record(EventPayload::GroupTurnAdded {
            group_id: id.clone(),
            turn: turn.clone(),
            mode: None,
        })?;
        Ok(GroupReply { turn, decision })
    }

    // Pond

    pub fn pond(&self) -> &PondState {
        &self.state.pond
    }

    pub fn move_leaf(&mut self, id: &PositionId, x: f64, y: f64) -> Result<LeafLayout> {
        let layout = self.state.pond.move_leaf(id, x, y)?;
        let result = self.record(EventPayload::LeafMoved { layout: layout.clone() });
        self.finish(result.map(|_| layout))
    }

    pub fn resize_leaf(&mut self, id: &PositionId, size: f64) -> Result<LeafLayout> {
        let layout = self.state.pond.resize_leaf(id, size)?;
        let result = self.record(EventPayload::LeafResized { layout: layout.clone() });
        self.finish(result.map(|_| layout))
    }

    pub fn recolor_leaf(&mut self, id: &PositionId, color: &str) -> Result<LeafLayout> {
        let layout = self.state.pond.recolor_leaf(id, color)?;
        let result = self.record(EventPayload::LeafRecolored { layout: layout.clone() });
        self.finish(result.map(|_| layout))
    }

    /// Freezes the current pond. `user_label` defaults to the session's
    /// user.
    pub fn save_snapshot(&mut self, user_label: Option<&str>) -> Result<Snapshot> {
        let user = user_label.unwrap_or(&self.meta.user);
        let snapshot = Snapshot::capture(
            user,
            self.clock.now(),
            &self.state.pond,
            self.state.positions.iter(),
            &self.state.snapshots,
        );
        if let Some(dir) = &self.dir {
            let bytes = serde_json::to_vec_pretty(&snapshot).expect("snapshot serialises");
            store::write_atomic(&dir.snapshot_file(&snapshot.label), &bytes)?;
        }
        self.state.snapshots.push(snapshot.clone());
        let result = self.record(EventPayload::SnapshotSaved {
            snapshot: snapshot.clone(),
        });
        self.finish(result.map(|_| snapshot))
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.state.snapshots
    }

    pub fn load_snapshot(&self, label: &str) -> Result<&Snapshot> {
        self.state
            .snapshots
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| PondError::SnapshotNotFound(label.to_string()).into())
    }
}
