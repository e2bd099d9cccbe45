//! Two-agent-plus-user group dialogue.
//!
//! Turn-taking rules, in order:
//!
//! 1. If the latest unanswered user turn names exactly one agent, that agent
//!    answers.
//! 2. Otherwise a control prompt asks the model who should speak next. If the
//!    call or its parse fails, speakers strictly alternate starting from
//!    agent A.
//! 3. The choice is flipped to the other agent when it would let an agent
//!    speak twice without a user turn addressing it in between.
//!
//! Rule 3 means an agent never holds two consecutive agent turns unless the
//! user explicitly called on it again.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{self, extract_as, ExtractError, GatewayError, GenerationRequest, GenerationSettings, Message, Provider, SchemaId};
use crate::ids::{GroupId, PositionId};
use crate::iposition::{IPosition, IPositionError};
use crate::locale::Locale;
use crate::prompts;

/// Injected as a hidden system turn whenever the user skips.
pub const SKIP_INTERVENTION: &str = "Do not repeat viewpoints; engage more deeply with each other's perspectives";

pub const TOPIC_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentSlot {
    AgentA,
    AgentB,
}

impl AgentSlot {
    pub fn other(self) -> Self {
        match self {
            AgentSlot::AgentA => AgentSlot::AgentB,
            AgentSlot::AgentB => AgentSlot::AgentA,
        }
    }

    pub fn index(self) -> usize {
        match self {
            AgentSlot::AgentA => 0,
            AgentSlot::AgentB => 1,
        }
    }

    pub fn speaker(self) -> GroupSpeaker {
        match self {
            AgentSlot::AgentA => GroupSpeaker::AgentA,
            AgentSlot::AgentB => GroupSpeaker::AgentB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupSpeaker {
    User,
    AgentA,
    AgentB,
    System,
}

impl GroupSpeaker {
    pub fn agent(self) -> Option<AgentSlot> {
        match self {
            GroupSpeaker::AgentA => Some(AgentSlot::AgentA),
            GroupSpeaker::AgentB => Some(AgentSlot::AgentB),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTurn {
    pub speaker: GroupSpeaker,
    pub text: String,
    pub at: DateTime<Utc>,
    /// Hidden turns steer the agents but are not shown to the user.
    #[serde(default)]
    pub hidden: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Mediation,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSet {
    pub pair: (PositionId, PositionId),
    pub questions: Vec<String>,
}

impl TopicSet {
    /// Whether this set was generated for `a` and `b`, in either order.
    pub fn is_for(&self, a: &PositionId, b: &PositionId) -> bool {
        (&self.pair.0 == a && &self.pair.1 == b) || (&self.pair.0 == b && &self.pair.1 == a)
    }
}

/// Frozen copy of a position taking part in a group session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMember {
    pub position_id: PositionId,
    pub name: String,
    pub core_viewpoint: String,
    pub narrative: String,
}

impl From<&IPosition> for GroupMember {
    fn from(p: &IPosition) -> Self {
        Self {
            position_id: p.id.clone(),
            name: p.name.clone(),
            core_viewpoint: p.core_viewpoint.clone(),
            narrative: p.narrative.clone(),
        }
    }
}

impl GroupMember {
    fn profile(&self) -> String {
        prompts::profile_block(&self.name, &self.core_viewpoint, &self.narrative)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSession {
    pub id: GroupId,
    pub members: [GroupMember; 2],
    pub chosen_topic: String,
    pub transcript: Vec<GroupTurn>,
    pub mode_history: Vec<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionSource {
    Addressed,
    Control,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnDecision {
    pub next_speaker: AgentSlot,
    pub rationale: String,
    pub source: DecisionSource,
    /// The anti-domination rule replaced the original choice.
    pub overridden: bool,
}

#[derive(Debug, Error)]
pub enum OrchestraError {
    #[error("a group needs two distinct positions")]
    SamePosition,
    #[error("expected exactly {TOPIC_COUNT} discussion questions, got {0}")]
    WrongQuestionCount(usize),
    #[error("topic was not generated for this pair")]
    TopicNotFromSet,
    #[error("group {0} not found")]
    NotFound(GroupId),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("turn rejected: {0}")]
    InvalidTurn(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Position(#[from] IPositionError),
}

/// Topic request: the template as system prompt, both profiles as the user
/// message.
pub fn topics_request(a: &IPosition, b: &IPosition, settings: &GenerationSettings) -> GenerationRequest {
    let input = format!(
        "[I-Position 1]\n{}\n\n[I-Position 2]\n{}",
        prompts::position_profile(a),
        prompts::position_profile(b)
    );
    settings.request(prompts::TOPICS, vec![Message::user(input)])
}

#[derive(Deserialize)]
struct TopicsDoc {
    discussion_questions: Vec<String>,
}

pub fn parse_topics(text: &str) -> Result<Vec<String>, OrchestraError> {
    let doc: TopicsDoc = extract_as(text, SchemaId::DiscussionTopics)?;
    let questions: Vec<String> = doc
        .discussion_questions
        .into_iter()
        .map(|q| q.trim().to_string())
        .filter(|q| !q.is_empty())
        .collect();
    if questions.len() != TOPIC_COUNT {
        return Err(OrchestraError::WrongQuestionCount(questions.len()));
    }
    Ok(questions)
}

pub fn generate_topics(
    a: &IPosition,
    b: &IPosition,
    provider: &dyn Provider,
    settings: &GenerationSettings,
) -> Result<TopicSet, OrchestraError> {
    if a.id == b.id {
        return Err(OrchestraError::SamePosition);
    }
    let response = gateway::generate(provider, &topics_request(a, b, settings))?;
    Ok(TopicSet {
        pair: (a.id.clone(), b.id.clone()),
        questions: parse_topics(&response.text)?,
    })
}

fn mentions(text_lower: &str, member: &GroupMember, locale: &Locale) -> bool {
    let full = member.name.to_lowercase();
    if text_lower.contains(&full) {
        return true;
    }
    match member.name.strip_prefix(locale.name_prefix.as_str()) {
        Some(short) if !short.trim().is_empty() => text_lower.contains(&short.trim().to_lowercase()),
        _ => false,
    }
}

impl GroupSession {
    /// A new session whose transcript holds the topic as its only turn.
    pub fn new(id: GroupId, members: [GroupMember; 2], chosen_topic: String, at: DateTime<Utc>) -> Self {
        let topic_turn = GroupTurn {
            speaker: GroupSpeaker::System,
            text: chosen_topic.clone(),
            at,
            hidden: false,
        };
        Self {
            id,
            members,
            chosen_topic,
            transcript: vec![topic_turn],
            mode_history: Vec::new(),
        }
    }

    pub fn member(&self, slot: AgentSlot) -> &GroupMember {
        &self.members[slot.index()]
    }

    pub fn next_time(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        self.transcript.last().map_or(now, |last| now.max(last.at))
    }

    pub fn last_agent(&self) -> Option<AgentSlot> {
        self.transcript.iter().rev().find_map(|t| t.speaker.agent())
    }

    /// Turns after the most recent agent turn.
    fn since_last_agent(&self) -> &[GroupTurn] {
        let start = self
            .transcript
            .iter()
            .rposition(|t| t.speaker.agent().is_some())
            .map_or(0, |i| i + 1);
        &self.transcript[start..]
    }

    /// The agent named by `text`, if exactly one is.
    pub fn addressed_in(&self, text: &str, locale: &Locale) -> Option<AgentSlot> {
        let lower = text.to_lowercase();
        match (mentions(&lower, &self.members[0], locale), mentions(&lower, &self.members[1], locale)) {
            (true, false) => Some(AgentSlot::AgentA),
            (false, true) => Some(AgentSlot::AgentB),
            _ => None,
        }
    }

    /// The agent addressed by the latest user turn that no agent has
    /// answered yet.
    pub fn addressed_agent(&self, locale: &Locale) -> Option<AgentSlot> {
        self.since_last_agent()
            .iter()
            .rev()
            .find(|t| t.speaker == GroupSpeaker::User)
            .and_then(|t| self.addressed_in(&t.text, locale))
    }

    /// Whether `slot` may take the next agent turn under the anti-domination
    /// rule.
    pub fn may_speak(&self, slot: AgentSlot, locale: &Locale) -> bool {
        if self.last_agent() != Some(slot) {
            return true;
        }
        self.since_last_agent()
            .iter()
            .any(|t| t.speaker == GroupSpeaker::User && self.addressed_in(&t.text, locale) == Some(slot))
    }

    /// Strict alternation from the last agent speaker; agent A opens.
    pub fn fallback_speaker(&self) -> AgentSlot {
        self.last_agent().map_or(AgentSlot::AgentA, AgentSlot::other)
    }

    fn push(&mut self, turn: GroupTurn) -> Result<(), OrchestraError> {
        if turn.text.trim().is_empty() {
            return Err(OrchestraError::EmptyMessage);
        }
        if self.transcript.last().is_some_and(|last| turn.at < last.at) {
            return Err(OrchestraError::InvalidTurn("timestamp goes backwards".into()));
        }
        self.transcript.push(turn);
        Ok(())
    }

    /// Appends a user message (mediation mode).
    pub fn push_user(&mut self, text: &str, now: DateTime<Utc>) -> Result<GroupTurn, OrchestraError> {
        let turn = GroupTurn {
            speaker: GroupSpeaker::User,
            text: text.trim().to_string(),
            at: self.next_time(now),
            hidden: false,
        };
        self.push(turn.clone())?;
        self.mode_history.push(Mode::Mediation);
        Ok(turn)
    }

    /// Appends the hidden skip intervention (observation mode).
    pub fn push_intervention(&mut self, now: DateTime<Utc>) -> GroupTurn {
        let turn = GroupTurn {
            speaker: GroupSpeaker::System,
            text: SKIP_INTERVENTION.to_string(),
            at: self.next_time(now),
            hidden: true,
        };
        self.push(turn.clone()).expect("constant intervention is valid");
        self.mode_history.push(Mode::Observation);
        turn
    }

    pub fn push_agent(&mut self, slot: AgentSlot, text: &str, now: DateTime<Utc>, locale: &Locale) -> Result<GroupTurn, OrchestraError> {
        if !self.may_speak(slot, locale) {
            return Err(OrchestraError::InvalidTurn(format!("{slot:?} would speak twice in a row")));
        }
        let turn = GroupTurn {
            speaker: slot.speaker(),
            text: text.trim().to_string(),
            at: self.next_time(now),
            hidden: false,
        };
        self.push(turn.clone())?;
        Ok(turn)
    }

    /// Appends a turn read back from the log without re-checking the
    /// scheduling rules.
    pub fn restore_turn(&mut self, turn: GroupTurn, mode: Option<Mode>) {
        self.transcript.push(turn);
        if let Some(mode) = mode {
            self.mode_history.push(mode);
        }
    }

    fn transcript_text(&self) -> String {
        self.transcript
            .iter()
            .map(|t| {
                let who = match t.speaker {
                    GroupSpeaker::User => "User".to_string(),
                    GroupSpeaker::AgentA => format!("A ({})", self.members[0].name),
                    GroupSpeaker::AgentB => format!("B ({})", self.members[1].name),
                    GroupSpeaker::System => "System".to_string(),
                };
                format!("{who}: {}", t.text)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn control_prompt(&self) -> String {
        prompts::fill(
            prompts::CONTROL,
            &[
                ("agent_a", &self.members[0].profile()),
                ("agent_b", &self.members[1].profile()),
                ("topic", &self.chosen_topic),
                ("transcript", &self.transcript_text()),
            ],
        )
    }

    fn parse_speaker(&self, value: &str) -> Option<AgentSlot> {
        let v = value.trim().to_lowercase();
        let compact: String = v.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
        match compact.as_str() {
            "a" | "agenta" => return Some(AgentSlot::AgentA),
            "b" | "agentb" => return Some(AgentSlot::AgentB),
            _ => {}
        }
        if v == self.members[0].name.to_lowercase() {
            Some(AgentSlot::AgentA)
        } else if v == self.members[1].name.to_lowercase() {
            Some(AgentSlot::AgentB)
        } else {
            None
        }
    }

    /// Picks the next agent. Never fails: provider or parse errors fall back
    /// to alternation.
    pub fn decide_next_turn(&self, provider: &dyn Provider, settings: &GenerationSettings, locale: &Locale) -> TurnDecision {
        let initial = match self.addressed_agent(locale) {
            Some(slot) => TurnDecision {
                next_speaker: slot,
                rationale: format!("The person addressed {} directly.", self.member(slot).name),
                source: DecisionSource::Addressed,
                overridden: false,
            },
            None => self.control_decision(provider, settings).unwrap_or_else(|| TurnDecision {
                next_speaker: self.fallback_speaker(),
                rationale: String::new(),
                source: DecisionSource::Fallback,
                overridden: false,
            }),
        };
        if self.may_speak(initial.next_speaker, locale) {
            initial
        } else {
            TurnDecision {
                next_speaker: initial.next_speaker.other(),
                overridden: true,
                ..initial
            }
        }
    }

    fn control_decision(&self, provider: &dyn Provider, settings: &GenerationSettings) -> Option<TurnDecision> {
        #[derive(Deserialize)]
        struct ControlDoc {
            next_speaker: String,
            rationale: String,
        }
        let request = settings.request(self.control_prompt(), Vec::new());
        let response = match gateway::generate(provider, &request) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("control prompt failed, falling back to alternation: {e}");
                return None;
            }
        };
        let doc: ControlDoc = match extract_as(&response.text, SchemaId::ControlDecision) {
            Ok(doc) => doc,
            Err(e) => {
                log::warn!("unusable control decision, falling back to alternation: {e}");
                return None;
            }
        };
        Some(TurnDecision {
            next_speaker: self.parse_speaker(&doc.next_speaker)?,
            rationale: doc.rationale.trim().to_string(),
            source: DecisionSource::Control,
            overridden: false,
        })
    }

    pub fn agent_prompt(&self, slot: AgentSlot, locale: &Locale) -> String {
        let me = self.member(slot);
        let other = self.member(slot.other());
        prompts::fill(
            prompts::GROUP_AGENT,
            &[
                ("input", &me.profile()),
                ("other", &other.name),
                ("topic", &self.chosen_topic),
                ("language", &locale.language),
            ],
        )
    }

    /// Request for `slot`'s next utterance, seen from its own perspective:
    /// its turns are agent messages, everyone else speaks as the user side.
    pub fn agent_request(&self, decision: &TurnDecision, settings: &GenerationSettings, locale: &Locale) -> GenerationRequest {
        let slot = decision.next_speaker;
        let mut history: Vec<Message> = self
            .transcript
            .iter()
            .map(|t| match t.speaker {
                GroupSpeaker::System => Message::system(&t.text),
                GroupSpeaker::User => Message::user(format!("[User] {}", t.text)),
                s if s.agent() == Some(slot) => Message::agent(&t.text),
                _ => Message::user(format!("[{}] {}", self.member(slot.other()).name, t.text)),
            })
            .collect();
        let guidance = match decision.source {
            DecisionSource::Addressed if !decision.overridden => {
                Some("The person addressed you directly. Answer them first.".to_string())
            }
            DecisionSource::Control if !decision.overridden && !decision.rationale.is_empty() => {
                Some(decision.rationale.clone())
            }
            _ => None,
        };
        if let Some(guidance) = guidance {
            history.push(Message::system(format!("Orchestrator: {guidance}")));
        }
        settings.request(self.agent_prompt(slot, locale), history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{self, FnProvider};
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn session() -> GroupSession {
        let a = testkit::position("p1", "Myself, Yearning for Creative Freedom");
        let b = testkit::position("p2", "Myself, Desiring Financial Abundance");
        GroupSession::new(GroupId::from("g1"), [(&a).into(), (&b).into()], "What matters most?".into(), t0())
    }

    fn failing() -> FnProvider {
        FnProvider::new(|_| Err(GatewayError::Unavailable { attempts: 1, message: "down".into() }))
    }

    #[test]
    fn intervention_constant_is_exact() {
        assert_eq!(
            SKIP_INTERVENTION.as_bytes(),
            "Do not repeat viewpoints; engage more deeply with each other's perspectives".as_bytes()
        );
    }

    #[test]
    fn addressed_agent_answers_first() {
        let locale = Locale::default();
        let mut s = session();
        s.push_agent(AgentSlot::AgentA, "hi", t0(), &locale).unwrap();
        s.push_agent(AgentSlot::AgentB, "hello", t0(), &locale).unwrap();
        s.push_user("What do you agree on, Myself, Yearning for Creative Freedom?", t0()).unwrap();
        let d = s.decide_next_turn(&failing(), &Default::default(), &locale);
        assert_eq!(d.next_speaker, AgentSlot::AgentA);
        assert_eq!(d.source, DecisionSource::Addressed);
    }

    #[test]
    fn short_name_addresses_too() {
        let s = session();
        assert_eq!(s.addressed_in("hey desiring financial abundance, why?", &Locale::default()), Some(AgentSlot::AgentB));
        assert_eq!(s.addressed_in("both Creative Freedom and Financial Abundance", &Locale::default()), None);
    }

    #[test]
    fn fallback_alternates() {
        let locale = Locale::default();
        let mut s = session();
        assert_eq!(s.decide_next_turn(&failing(), &Default::default(), &locale).next_speaker, AgentSlot::AgentA);
        s.push_agent(AgentSlot::AgentA, "x", t0(), &locale).unwrap();
        let d = s.decide_next_turn(&failing(), &Default::default(), &locale);
        assert_eq!((d.next_speaker, d.source), (AgentSlot::AgentB, DecisionSource::Fallback));
    }

    #[test]
    fn control_choice_is_overridden_when_dominating() {
        let locale = Locale::default();
        let mut s = session();
        s.push_agent(AgentSlot::AgentA, "x", t0(), &locale).unwrap();
        s.push_intervention(t0());
        let picks_a = FnProvider::new(|_| Ok(r#"{"next_speaker": "A", "rationale": "go on"}"#.into()));
        let d = s.decide_next_turn(&picks_a, &Default::default(), &locale);
        assert_eq!(d.next_speaker, AgentSlot::AgentB);
        assert!(d.overridden);
        assert!(s.push_agent(AgentSlot::AgentA, "again", t0(), &locale).is_err());
    }

    #[test]
    fn control_accepts_names() {
        let s = session();
        let picks_b = FnProvider::new(|_| Ok(r#"{"next_speaker": "Myself, Desiring Financial Abundance", "rationale": "refute"}"#.into()));
        let d = s.decide_next_turn(&picks_b, &Default::default(), &Locale::default());
        assert_eq!((d.next_speaker, d.source), (AgentSlot::AgentB, DecisionSource::Control));
        let garbage = FnProvider::new(|_| Ok(r#"{"next_speaker": "C", "rationale": ""}"#.into()));
        assert_eq!(s.decide_next_turn(&garbage, &Default::default(), &Locale::default()).source, DecisionSource::Fallback);
    }

    #[test]
    fn agent_history_is_perspective_mapped() {
        let locale = Locale::default();
        let mut s = session();
        s.push_agent(AgentSlot::AgentA, "I want freedom", t0(), &locale).unwrap();
        s.push_intervention(t0());
        let decision = TurnDecision {
            next_speaker: AgentSlot::AgentB,
            rationale: "Refute A".into(),
            source: DecisionSource::Control,
            overridden: false,
        };
        let req = s.agent_request(&decision, &Default::default(), &locale);
        assert!(req.system_prompt.contains("Myself, Desiring Financial Abundance"));
        let roles: Vec<_> = req.history.iter().map(|m| m.role).collect();
        use crate::gateway::Role::*;
        assert_eq!(roles, [System, User, System, System]);
        assert_eq!(req.history[1].text, "[Myself, Yearning for Creative Freedom] I want freedom");
        assert_eq!(req.history[3].text, "Orchestrator: Refute A");
    }

    #[test]
    fn topic_count_enforced() {
        assert!(matches!(parse_topics(r#"{"discussion_questions": ["a", "b"]}"#), Err(OrchestraError::WrongQuestionCount(2))));
        assert_eq!(parse_topics(r#"{"discussion_questions": ["a", "b", "c"]}"#).unwrap().len(), 3);
    }
}
