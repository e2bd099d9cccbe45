//! Identifier newtypes.
//!
//! Ids inside a session are short sequential tokens (`p1`, `d3`, ...). They
//! are opaque to clients and stable across replay, which keeps event logs
//! byte-comparable between runs.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn from_seq(seq: u64) -> Self {
                Self(format!("{}{}", $prefix, seq))
            }

            /// Sequence number for ids minted by [`Self::from_seq`].
            pub fn seq(&self) -> Option<u64> {
                self.0.strip_prefix($prefix)?.parse().ok()
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

id_type!(
    /// Identifies an I-position (and its leaf).
    PositionId,
    "p"
);
id_type!(DialogueId, "d");
id_type!(GroupId, "g");
id_type!(RoundId, "r");

/// Per-session id counters; each holds the last sequence number handed out.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounters {
    pub position: u64,
    pub dialogue: u64,
    pub group: u64,
    pub round: u64,
}

impl IdCounters {
    pub fn next_position(&mut self) -> PositionId {
        self.position += 1;
        PositionId::from_seq(self.position)
    }

    pub fn next_dialogue(&mut self) -> DialogueId {
        self.dialogue += 1;
        DialogueId::from_seq(self.dialogue)
    }

    pub fn next_group(&mut self) -> GroupId {
        self.group += 1;
        GroupId::from_seq(self.group)
    }

    pub fn next_round(&mut self) -> RoundId {
        self.round += 1;
        RoundId::from_seq(self.round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_round_trips() {
        let mut ids = IdCounters::default();
        let p = ids.next_position();
        assert_eq!(p.as_str(), "p1");
        assert_eq!(p.seq(), Some(1));
        assert_eq!(PositionId::from("x9").seq(), None);
    }
}
