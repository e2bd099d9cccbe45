//! I-positions: extraction, validation and user edits.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{extract_as, ExtractError, SchemaId};
use crate::ids::PositionId;
use crate::locale::Locale;
use crate::profile::{self, ProfileError, UserKnowledge};
use crate::prompts;

pub const TARGET_COUNT: usize = 10;
pub const MIN_COUNT: usize = 8;
pub const MAX_COUNT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Common,
    CareerA,
    CareerB,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Common, Category::CareerA, Category::CareerB];

    /// Key of this category in the extraction output document.
    pub fn extraction_key(self) -> &'static str {
        match self {
            Category::Common => "Common",
            Category::CareerA => "Career_A",
            Category::CareerB => "Career_B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Extracted,
    UserCreated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IPosition {
    pub id: PositionId,
    pub name: String,
    pub core_viewpoint: String,
    pub narrative: String,
    pub category: Category,
    pub origin: Origin,
    pub revision: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn warn(message: impl Into<String>) -> Self {
        Self { severity: Severity::Warn, message: message.into() }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub positions: Vec<IPosition>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Error)]
pub enum IPositionError {
    #[error("position {0} not found")]
    NotFound(PositionId),
    #[error("a position named {0:?} already exists")]
    DuplicateName(String),
    #[error("invalid position: {0}")]
    InvariantViolation(String),
    #[error("extraction failed validation: {}", summarize(.0))]
    ValidationFailed(Vec<Diagnostic>),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

fn summarize(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Checks the per-position invariants: prefixed name, one-line viewpoint,
/// non-empty narrative.
pub fn check_fields(name: &str, core_viewpoint: &str, narrative: &str, locale: &Locale) -> Result<(), String> {
    match name.strip_prefix(locale.name_prefix.as_str()) {
        None => return Err(format!("name {name:?} must start with {:?}", locale.name_prefix)),
        Some(rest) if rest.trim().is_empty() => return Err(format!("name {name:?} has nothing after the prefix")),
        Some(_) => {}
    }
    if name.contains(['\n', '\r']) {
        return Err("name must be a single line".into());
    }
    if core_viewpoint.trim().is_empty() {
        return Err("core viewpoint is empty".into());
    }
    if core_viewpoint.contains(['\n', '\r']) {
        return Err("core viewpoint must be a single sentence without line breaks".into());
    }
    if narrative.trim().is_empty() {
        return Err("narrative is empty".into());
    }
    Ok(())
}

/// Extraction prompt for an already rendered profile block.
pub fn extraction_prompt(profile_text: &str, locale: &Locale) -> String {
    prompts::fill(
        prompts::EXTRACTION,
        &[
            ("input", profile_text),
            ("language", &locale.language),
            ("prefix", &locale.name_prefix),
        ],
    )
}

pub fn build_extraction_prompt(knowledge: &UserKnowledge, locale: &Locale) -> Result<String, ProfileError> {
    Ok(extraction_prompt(&profile::render_profile(knowledge)?, locale))
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    #[serde(rename = "I-position")]
    name: String,
    core_viewpoint: String,
    narrative: String,
}

#[derive(Debug, Deserialize)]
struct RawExtraction {
    #[serde(rename = "Common")]
    common: Vec<RawEntry>,
    #[serde(rename = "Career_A")]
    career_a: Vec<RawEntry>,
    #[serde(rename = "Career_B")]
    career_b: Vec<RawEntry>,
}

/// Parses and validates the extraction output.
///
/// Errors: fewer than 8 or more than 12 positions, duplicate names, or any
/// entry breaking the position invariants. Warnings: a total other than 10 or
/// an empty category. `mint` is only called for accepted entries.
pub fn parse_extraction(
    text: &str,
    locale: &Locale,
    mut mint: impl FnMut() -> PositionId,
) -> Result<ExtractionResult, IPositionError> {
    let raw: RawExtraction = extract_as(text, SchemaId::Extraction)?;
    let groups = [
        (Category::Common, raw.common),
        (Category::CareerA, raw.career_a),
        (Category::CareerB, raw.career_b),
    ];

    let mut diagnostics = Vec::new();
    let total: usize = groups.iter().map(|(_, entries)| entries.len()).sum();
    if !(MIN_COUNT..=MAX_COUNT).contains(&total) {
        diagnostics.push(Diagnostic::error(format!(
            "extracted {total} I-positions, outside the accepted {MIN_COUNT}-{MAX_COUNT}"
        )));
    }
    if total != TARGET_COUNT {
        diagnostics.push(Diagnostic::warn(format!("count ≠ {TARGET_COUNT}: extracted {total} I-positions")));
    }
    let mut seen = HashSet::new();
    for (category, entries) in &groups {
        if entries.is_empty() {
            diagnostics.push(Diagnostic::warn(format!("category {} is empty", category.extraction_key())));
        }
        for (i, entry) in entries.iter().enumerate() {
            let name = entry.name.trim();
            if let Err(reason) = check_fields(name, entry.core_viewpoint.trim(), &entry.narrative, locale) {
                diagnostics.push(Diagnostic::error(format!("{}[{i}]: {reason}", category.extraction_key())));
            }
            if !seen.insert(name.to_lowercase()) {
                diagnostics.push(Diagnostic::error(format!("duplicate I-position name {name:?}")));
            }
        }
    }
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(IPositionError::ValidationFailed(diagnostics));
    }

    let positions = groups
        .into_iter()
        .flat_map(|(category, entries)| entries.into_iter().map(move |e| (category, e)))
        .map(|(category, entry)| IPosition {
            id: mint(),
            name: entry.name.trim().to_string(),
            core_viewpoint: entry.core_viewpoint.trim().to_string(),
            narrative: entry.narrative.trim().to_string(),
            category,
            origin: Origin::Extracted,
            revision: 0,
        })
        .collect();
    Ok(ExtractionResult { positions, diagnostics })
}

/// Optional replacements for a position's text fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PositionPatch {
    pub name: Option<String>,
    pub core_viewpoint: Option<String>,
    pub narrative: Option<String>,
}

impl PositionPatch {
    pub fn is_empty(&self) -> bool {
        self.name.is_none() && self.core_viewpoint.is_none() && self.narrative.is_none()
    }
}

/// Fields of a user-created position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewPosition {
    pub name: String,
    pub core_viewpoint: String,
    pub narrative: String,
    pub category: Category,
}

/// The live positions of one session, in creation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionSet {
    positions: Vec<IPosition>,
}

impl PositionSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &IPosition> {
        self.positions.iter()
    }

    pub fn get(&self, id: &PositionId) -> Result<&IPosition, IPositionError> {
        self.positions
            .iter()
            .find(|p| &p.id == id)
            .ok_or_else(|| IPositionError::NotFound(id.clone()))
    }

    pub fn contains(&self, id: &PositionId) -> bool {
        self.positions.iter().any(|p| &p.id == id)
    }

    /// Case-insensitive lookup by name.
    pub fn find_by_name(&self, name: &str) -> Option<&IPosition> {
        let wanted = name.trim().to_lowercase();
        self.positions.iter().find(|p| p.name.to_lowercase() == wanted)
    }

    fn name_taken(&self, name: &str, except: Option<&PositionId>) -> bool {
        let wanted = name.to_lowercase();
        self.positions
            .iter()
            .any(|p| Some(&p.id) != except && p.name.to_lowercase() == wanted)
    }

    /// Inserts an already validated position (extraction output or replay).
    pub fn insert(&mut self, position: IPosition) -> Result<(), IPositionError> {
        if self.contains(&position.id) || self.name_taken(&position.name, None) {
            return Err(IPositionError::DuplicateName(position.name));
        }
        self.positions.push(position);
        Ok(())
    }

    pub fn add(
        &mut self,
        draft: NewPosition,
        locale: &Locale,
        mint: impl FnOnce() -> PositionId,
    ) -> Result<IPosition, IPositionError> {
        let name = draft.name.trim().to_string();
        let core_viewpoint = draft.core_viewpoint.trim().to_string();
        check_fields(&name, &core_viewpoint, &draft.narrative, locale).map_err(IPositionError::InvariantViolation)?;
        if self.name_taken(&name, None) {
            return Err(IPositionError::DuplicateName(name));
        }
        let position = IPosition {
            id: mint(),
            name,
            core_viewpoint,
            narrative: draft.narrative.trim().to_string(),
            category: draft.category,
            origin: Origin::UserCreated,
            revision: 0,
        };
        self.positions.push(position.clone());
        Ok(position)
    }

    /// Applies a patch. An empty patch is a no-op and returns `None`.
    pub fn edit(
        &mut self,
        id: &PositionId,
        patch: &PositionPatch,
        locale: &Locale,
    ) -> Result<Option<IPosition>, IPositionError> {
        let current = self.get(id)?;
        if patch.is_empty() {
            return Ok(None);
        }
        let name = patch.name.as_deref().map(str::trim).unwrap_or(&current.name).to_string();
        let core_viewpoint = patch
            .core_viewpoint
            .as_deref()
            .map(str::trim)
            .unwrap_or(&current.core_viewpoint)
            .to_string();
        let narrative = patch.narrative.as_deref().map(str::trim).unwrap_or(&current.narrative).to_string();
        check_fields(&name, &core_viewpoint, &narrative, locale).map_err(IPositionError::InvariantViolation)?;
        if self.name_taken(&name, Some(id)) {
            return Err(IPositionError::DuplicateName(name));
        }
        let position = self.positions.iter_mut().find(|p| &p.id == id).expect("checked");
        position.name = name;
        position.core_viewpoint = core_viewpoint;
        position.narrative = narrative;
        position.revision += 1;
        Ok(Some(position.clone()))
    }

    /// Replaces viewpoint and narrative; name, category and origin are kept.
    pub fn refine(
        &mut self,
        id: &PositionId,
        core_viewpoint: &str,
        narrative: &str,
        locale: &Locale,
    ) -> Result<IPosition, IPositionError> {
        let current = self.get(id)?;
        check_fields(&current.name, core_viewpoint.trim(), narrative, locale)
            .map_err(IPositionError::InvariantViolation)?;
        let position = self.positions.iter_mut().find(|p| &p.id == id).expect("checked");
        position.core_viewpoint = core_viewpoint.trim().to_string();
        position.narrative = narrative.trim().to_string();
        position.revision += 1;
        Ok(position.clone())
    }

    pub fn remove(&mut self, id: &PositionId) -> Result<IPosition, IPositionError> {
        let index = self
            .positions
            .iter()
            .position(|p| &p.id == id)
            .ok_or_else(|| IPositionError::NotFound(id.clone()))?;
        Ok(self.positions.remove(index))
    }

    /// Overwrites a position wholesale (replay of an edit).
    pub fn replace(&mut self, position: IPosition) -> Result<(), IPositionError> {
        let slot = self
            .positions
            .iter_mut()
            .find(|p| p.id == position.id)
            .ok_or_else(|| IPositionError::NotFound(position.id.clone()))?;
        *slot = position;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::IdCounters;
    use crate::testkit;

    fn minted() -> impl FnMut() -> PositionId {
        let mut ids = IdCounters::default();
        move || ids.next_position()
    }

    #[test]
    fn ten_positions_parse_cleanly() {
        let result = parse_extraction(&testkit::extraction_response(4, 3, 3), &Locale::default(), minted()).unwrap();
        assert_eq!(result.positions.len(), 10);
        assert!(result.diagnostics.is_empty());
        let categories: HashSet<_> = result.positions.iter().map(|p| p.category).collect();
        assert_eq!(categories.len(), 3);
        assert!(result.positions.iter().all(|p| p.origin == Origin::Extracted && p.revision == 0));
    }

    #[test]
    fn duplicate_names_fail() {
        let doc = serde_json::json!({
            "Common": (0..4).map(|i| testkit::entry_json(if i < 2 { "Myself, Seeking Stability".into() } else { format!("Myself, Voice {i}") })).collect::<Vec<_>>(),
            "Career_A": (0..3).map(|i| testkit::entry_json(format!("Myself, A {i}"))).collect::<Vec<_>>(),
            "Career_B": (0..3).map(|i| testkit::entry_json(format!("Myself, B {i}"))).collect::<Vec<_>>(),
        });
        match parse_extraction(&doc.to_string(), &Locale::default(), minted()) {
            Err(IPositionError::ValidationFailed(diags)) => {
                assert!(diags.iter().any(|d| d.severity == Severity::Error && d.message.contains("duplicate")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nine_positions_warn() {
        let result = parse_extraction(&testkit::extraction_response(3, 3, 3), &Locale::default(), minted()).unwrap();
        assert_eq!(result.positions.len(), 9);
        assert_eq!(result.diagnostics.len(), 1);
        assert_eq!(result.diagnostics[0].severity, Severity::Warn);
        assert!(result.diagnostics[0].message.contains("count ≠ 10"));
    }

    #[test]
    fn unprefixed_name_is_invariant_violation() {
        let mut set = PositionSet::default();
        let draft = NewPosition {
            name: "Seeking Stability".into(),
            core_viewpoint: "v".into(),
            narrative: "n".into(),
            category: Category::Common,
        };
        assert!(matches!(
            set.add(draft, &Locale::default(), || PositionId::from("p1")),
            Err(IPositionError::InvariantViolation(_))
        ));
    }

    #[test]
    fn multiline_viewpoint_rejected() {
        assert!(check_fields("Myself, X", "one\ntwo", "n", &Locale::default()).is_err());
        assert!(check_fields("Myself, ", "v", "n", &Locale::default()).is_err());
        assert!(check_fields("Myself, X", "v", " ", &Locale::default()).is_err());
        assert!(check_fields("Myself, X", "v", "n", &Locale::default()).is_ok());
    }

    #[test]
    fn empty_patch_is_noop() {
        let mut set = PositionSet::default();
        let p = testkit::position("p1", "Myself, Seeking Stability");
        set.insert(p.clone()).unwrap();
        assert_eq!(set.edit(&p.id, &PositionPatch::default(), &Locale::default()).unwrap(), None);
        assert_eq!(set.get(&p.id).unwrap().revision, 0);
    }

    #[test]
    fn edit_cannot_steal_a_name() {
        let mut set = PositionSet::default();
        set.insert(testkit::position("p1", "Myself, A")).unwrap();
        set.insert(testkit::position("p2", "Myself, B")).unwrap();
        let patch = PositionPatch { name: Some("Myself, a".into()), ..Default::default() };
        assert!(matches!(
            set.edit(&PositionId::from("p2"), &patch, &Locale::default()),
            Err(IPositionError::DuplicateName(_))
        ));
        // Renaming to its own name in another case is allowed.
        let patch = PositionPatch { name: Some("Myself, b".into()), ..Default::default() };
        assert_eq!(set.edit(&PositionId::from("p2"), &patch, &Locale::default()).unwrap().unwrap().revision, 1);
    }

    #[test]
    fn remove_twice_is_not_found() {
        let mut set = PositionSet::default();
        set.insert(testkit::position("p1", "Myself, A")).unwrap();
        set.remove(&PositionId::from("p1")).unwrap();
        assert!(matches!(set.remove(&PositionId::from("p1")), Err(IPositionError::NotFound(_))));
    }
}
