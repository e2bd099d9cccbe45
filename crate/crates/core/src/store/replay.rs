use crate::dialogue::{DialogueSession, DialogueStatus};
use crate::session::SessionState;

use super::{EventPayload, LogEvent, StoreError};

fn bump(counter: &mut u64, seq: Option<u64>) {
    if let Some(seq) = seq {
        *counter = (*counter).max(seq);
    }
}

/// Rebuilds session state by folding the log from an empty state.
pub fn replay(events: &[LogEvent]) -> Result<SessionState, StoreError> {
    let mut state = SessionState::default();
    for (i, event) in events.iter().enumerate() {
        let corrupt = |reason: String| StoreError::CorruptLog {
            event_id: event.event_id,
            reason,
        };
        if event.event_id != i as u64 + 1 {
            return Err(corrupt(format!("expected event id {}", i + 1)));
        }
        if event.payload.kind() != event.kind || event.kind.stage() != event.stage {
            return Err(corrupt("stage, kind and payload disagree".into()));
        }
        apply(&mut state, &event.payload).map_err(corrupt)?;
    }
    Ok(state)
}

fn apply(state: &mut SessionState, payload: &EventPayload) -> Result<(), String> {
    match payload {
        EventPayload::PositionAdded { position, layout } => {
            if layout.position_id != position.id {
                return Err("layout belongs to another position".into());
            }
            state.positions.insert(position.clone()).map_err(|e| e.to_string())?;
            bump(&mut state.ids.position, position.id.seq());
            state.pond.layouts.insert(layout.position_id.clone(), layout.clone());
            state.pond.placements += 1;
        }
        EventPayload::PositionEdited { position } => {
            state.positions.replace(position.clone()).map_err(|e| e.to_string())?;
        }
        EventPayload::PositionDeleted { position_id } => {
            state.positions.remove(position_id).map_err(|e| e.to_string())?;
            state.pond.remove(position_id);
        }
        EventPayload::EnrichmentQuestions { round } => {
            if !state.positions.contains(&round.position_id) {
                return Err(format!("round for unknown position {}", round.position_id));
            }
            bump(&mut state.ids.round, round.id.seq());
            state.rounds.insert(round.id.clone(), round.clone());
        }
        EventPayload::EnrichmentApplied { round_id, answers, position, .. } => {
            let round = state
                .rounds
                .get_mut(round_id)
                .ok_or_else(|| format!("unknown round {round_id}"))?;
            if round.applied {
                return Err(format!("round {round_id} applied twice"));
            }
            round.answers = answers.clone();
            round.applied = true;
            state.positions.replace(position.clone()).map_err(|e| e.to_string())?;
        }
        EventPayload::DialogueOpened {
            dialogue_id,
            position_id,
            system_prompt,
        } => {
            bump(&mut state.ids.dialogue, dialogue_id.seq());
            state.dialogues.insert(
                dialogue_id.clone(),
                DialogueSession {
                    id: dialogue_id.clone(),
                    position_id: position_id.clone(),
                    system_prompt: system_prompt.clone(),
                    transcript: Vec::new(),
                    status: DialogueStatus::Open,
                },
            );
        }
        EventPayload::DialogueTurn { dialogue_id, turn } => {
            let dialogue = state
                .dialogues
                .get_mut(dialogue_id)
                .ok_or_else(|| format!("unknown dialogue {dialogue_id}"))?;
            dialogue.push(turn.clone()).map_err(|e| e.to_string())?;
        }
        EventPayload::DialogueClosed { dialogue_id } => {
            let dialogue = state
                .dialogues
                .get_mut(dialogue_id)
                .ok_or_else(|| format!("unknown dialogue {dialogue_id}"))?;
            dialogue.close().map_err(|e| e.to_string())?;
        }
        EventPayload::LeafMoved { layout }
        | EventPayload::LeafResized { layout }
        | EventPayload::LeafRecolored { layout } => {
            state.pond.restore(layout.clone()).map_err(|e| e.to_string())?;
        }
        EventPayload::TopicsGenerated { topics } => state.topic_sets.push(topics.clone()),
        EventPayload::GroupStarted { group } => {
            bump(&mut state.ids.group, group.id.seq());
            state.groups.insert(group.id.clone(), group.clone());
        }
        EventPayload::GroupTurnAdded { group_id, turn, mode } => {
            let group = state
                .groups
                .get_mut(group_id)
                .ok_or_else(|| format!("unknown group {group_id}"))?;
            group.restore_turn(turn.clone(), *mode);
        }
        EventPayload::SnapshotSaved { snapshot } => state.snapshots.push(snapshot.clone()),
    }
    Ok(())
}
