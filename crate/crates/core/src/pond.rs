//! Leaf layout on the pond and frozen snapshots of it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::PositionId;
use crate::iposition::IPosition;

pub const DEFAULT_SIZE: f64 = 1.0;
pub const MIN_SIZE: f64 = 0.5;
pub const MAX_SIZE: f64 = 2.0;
/// Every new leaf starts in this gray.
pub const DEFAULT_COLOR: Color = Color([0x9E, 0x9E, 0x9E]);
/// Minimum centre distance between default placements.
pub const MIN_LEAF_SPACING: f64 = 0.2;

const GRID: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum PondError {
    #[error("no leaf for position {0}")]
    NotFound(PositionId),
    #[error("size {0} outside [{MIN_SIZE}, {MAX_SIZE}]")]
    SizeOutOfRange(f64),
    #[error("bad color {0:?}: expected #RRGGBB")]
    BadColor(String),
    #[error("coordinates must be finite")]
    BadCoordinate,
    #[error("snapshot {0:?} not found")]
    SnapshotNotFound(String),
}

/// sRGB color, serialised as `#rrggbb`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Color(pub [u8; 3]);

impl FromStr for Color {
    type Err = PondError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PondError::BadColor(s.to_string());
        let hex = s.trim().strip_prefix('#').unwrap_or(s.trim());
        if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad());
        }
        let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| bad());
        Ok(Color([channel(0)?, channel(2)?, channel(4)?]))
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, g, b] = self.0;
        write!(f, "#{r:02x}{g:02x}{b:02x}")
    }
}

impl fmt::Debug for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Color({self})")
    }
}

impl Serialize for Color {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Color {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafLayout {
    pub position_id: PositionId,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub color: Color,
}

/// Cells of a 5x5 grid over the unit square, nearest to the centre first.
fn placement_cells() -> Vec<(f64, f64)> {
    let step = 1.0 / GRID as f64;
    let mut cells: Vec<(f64, f64)> = (0..GRID * GRID)
        .map(|i| (step * ((i % GRID) as f64 + 0.5), step * ((i / GRID) as f64 + 0.5)))
        .collect();
    let key = |&(x, y): &(f64, f64)| {
        let (dx, dy) = (x - 0.5, y - 0.5);
        ((dx * dx + dy * dy) * 1e9).round() as i64
    };
    let angle = |&(x, y): &(f64, f64)| (y - 0.5).atan2(x - 0.5);
    cells.sort_by(|a, b| key(a).cmp(&key(b)).then(angle(a).total_cmp(&angle(b))));
    cells
}

/// Layout for the `index`-th leaf placed in a session: default size, the
/// shared gray, and a grid cell. The first 25 placements never overlap;
/// later ones wrap around with a half-cell offset.
pub fn default_layout(position_id: PositionId, index: usize) -> LeafLayout {
    let cells = placement_cells();
    let (mut x, mut y) = cells[index % cells.len()];
    if (index / cells.len()) % 2 == 1 {
        let half = 0.5 / GRID as f64;
        x = (x + half).min(1.0);
        y = (y + half).min(1.0);
    }
    LeafLayout {
        position_id,
        x,
        y,
        size: DEFAULT_SIZE,
        color: DEFAULT_COLOR,
    }
}

/// Current layout of every live leaf.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PondState {
    pub layouts: BTreeMap<PositionId, LeafLayout>,
    /// Leaves placed so far; ordinal for the next default placement.
    pub placements: usize,
}

impl PondState {
    pub fn place(&mut self, position_id: PositionId) -> LeafLayout {
        let layout = default_layout(position_id.clone(), self.placements);
        self.placements += 1;
        self.layouts.insert(position_id, layout.clone());
        layout
    }

    pub fn get(&self, id: &PositionId) -> Result<&LeafLayout, PondError> {
        self.layouts.get(id).ok_or_else(|| PondError::NotFound(id.clone()))
    }

    fn get_mut(&mut self, id: &PositionId) -> Result<&mut LeafLayout, PondError> {
        self.layouts.get_mut(id).ok_or_else(|| PondError::NotFound(id.clone()))
    }

    pub fn remove(&mut self, id: &PositionId) -> Option<LeafLayout> {
        self.layouts.remove(id)
    }

    /// Moves a leaf; coordinates are clamped into `[0, 1]`.
    pub fn move_leaf(&mut self, id: &PositionId, x: f64, y: f64) -> Result<LeafLayout, PondError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(PondError::BadCoordinate);
        }
        let layout = self.get_mut(id)?;
        layout.x = x.clamp(0.0, 1.0);
        layout.y = y.clamp(0.0, 1.0);
        Ok(layout.clone())
    }

    pub fn resize_leaf(&mut self, id: &PositionId, size: f64) -> Result<LeafLayout, PondError> {
        let layout = self.get_mut(id)?;
        if !(MIN_SIZE..=MAX_SIZE).contains(&size) {
            return Err(PondError::SizeOutOfRange(size));
        }
        layout.size = size;
        Ok(layout.clone())
    }

    pub fn recolor_leaf(&mut self, id: &PositionId, color: &str) -> Result<LeafLayout, PondError> {
        let color: Color = color.parse()?;
        let layout = self.get_mut(id)?;
        layout.color = color;
        Ok(layout.clone())
    }

    /// Overwrites a stored layout (replay).
    pub fn restore(&mut self, layout: LeafLayout) -> Result<(), PondError> {
        let slot = self.get_mut(&layout.position_id)?;
        *slot = layout;
        Ok(())
    }
}

/// Label pattern: `{user}'s InnerPond_{timestamp}`, timestamp in UTC
/// `YYYY-MM-DDTHH:MM:SSZ`.
pub fn snapshot_label(user: &str, at: DateTime<Utc>) -> String {
    format!("{user}'s InnerPond_{}", at.format("%Y-%m-%dT%H:%M:%SZ"))
}

/// A frozen pond: layouts and positions copied by value at capture time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub label: String,
    pub at: DateTime<Utc>,
    pub layouts: Vec<LeafLayout>,
    pub positions: Vec<IPosition>,
}

impl Snapshot {
    pub fn capture<'a>(
        user: &str,
        at: DateTime<Utc>,
        pond: &PondState,
        positions: impl IntoIterator<Item = &'a IPosition>,
        existing: &[Snapshot],
    ) -> Self {
        let base = snapshot_label(user, at);
        let mut label = base.clone();
        let mut n = 2;
        while existing.iter().any(|s| s.label == label) {
            label = format!("{base} ({n})");
            n += 1;
        }
        Self {
            label,
            at,
            layouts: pond.layouts.values().cloned().collect(),
            positions: positions.into_iter().cloned().collect(),
        }
    }
}
