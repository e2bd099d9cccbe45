//! InnerPond core: inner voices ("I-positions") as persona agents.
//!
//! The crate is organised around the four stages of a session:
//!
//! - **Construction**: [`profile`] turns a pre-survey into a rendered profile,
//!   [`iposition`] extracts and edits the positions, [`enrichment`] refines them
//!   with scaffolding questions and [`dialogue`] runs 1:1 chats.
//! - **Relational positioning**: [`pond`] keeps the spatial layout of leaves.
//! - **Dialogical exchange**: [`orchestra`] generates discussion topics for a
//!   pair of positions and schedules a two-agent-plus-user conversation.
//! - **Reflective snapshot**: [`pond`] also freezes snapshots of the layout.
//!
//! Every mutation goes through [`session::Session`], which appends one
//! [`store::LogEvent`] per change. [`store::replay`] rebuilds the session
//! state from the log alone.
//!
//! All text generation goes through [`gateway::Provider`]; the
//! [`gateway::ScriptedProvider`] answers from a fixture map so every pipeline
//! can run offline and deterministically.

pub mod clock;
pub mod dialogue;
pub mod enrichment;
pub mod error;
pub mod gateway;
pub mod ids;
pub mod iposition;
pub mod locale;
pub mod orchestra;
pub mod pond;
pub mod profile;
pub mod prompts;
pub mod session;
pub mod store;
pub mod testkit;

pub use error::{Error, Result};
pub use session::{Session, SessionConfig, SessionState};
