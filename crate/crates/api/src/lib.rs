//! HTTP service and headless runner for InnerPond sessions.

pub mod error;
pub mod routes;
pub mod runner;
pub mod state;

pub use error::ApiError;
pub use routes::router;
pub use state::AppState;
