use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use innerpond_core::clock::{Clock, SystemClock};
use innerpond_core::gateway::Provider;
use innerpond_core::ids::GroupId;
use innerpond_core::orchestra::GroupTurn;
use innerpond_core::store::SessionDir;
use innerpond_core::{Session, SessionConfig};
use serde::Serialize;
use tokio::sync::broadcast;

use crate::error::ApiError;

const STREAM_CAPACITY: usize = 256;

/// One visible group turn, as pushed to stream subscribers.
#[derive(Debug, Clone, Serialize)]
pub struct GroupEvent {
    pub group_id: GroupId,
    pub index: usize,
    pub turn: GroupTurn,
}

pub struct SessionHandle {
    pub session: Mutex<Session>,
    pub events: broadcast::Sender<GroupEvent>,
}

impl SessionHandle {
    fn new(session: Session) -> Self {
        let (events, _) = broadcast::channel(STREAM_CAPACITY);
        Self {
            session: Mutex::new(session),
            events,
        }
    }

    pub fn lock(&self) -> Result<std::sync::MutexGuard<'_, Session>, ApiError> {
        self.session
            .lock()
            .map_err(|_| ApiError::internal("session lock poisoned"))
    }
}

struct Inner {
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    provider: Arc<dyn Provider>,
    clock: Arc<dyn Clock>,
    config: SessionConfig,
    data_dir: Option<PathBuf>,
}

/// Shared service state: the session registry plus what new sessions need.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(provider: Arc<dyn Provider>, config: SessionConfig, data_dir: Option<PathBuf>) -> Self {
        Self::with_clock(provider, Arc::new(SystemClock), config, data_dir)
    }

    pub fn with_clock(
        provider: Arc<dyn Provider>,
        clock: Arc<dyn Clock>,
        config: SessionConfig,
        data_dir: Option<PathBuf>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                sessions: Mutex::new(HashMap::new()),
                provider,
                clock,
                config,
                data_dir,
            }),
        }
    }

    pub fn provider(&self) -> Arc<dyn Provider> {
        self.inner.provider.clone()
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.inner.clock.clone()
    }

    pub fn config(&self) -> SessionConfig {
        self.inner.config.clone()
    }

    pub fn data_dir(&self) -> Option<PathBuf> {
        self.inner.data_dir.clone()
    }

    pub fn insert(&self, session: Session) -> Arc<SessionHandle> {
        let handle = Arc::new(SessionHandle::new(session));
        let id = handle.lock().map(|s| s.id().to_string()).expect("fresh lock");
        self.inner
            .sessions
            .lock()
            .expect("registry lock")
            .insert(id, handle.clone());
        handle
    }

    /// Looks a session up, reopening it from the data directory if it is
    /// not in memory. Blocking.
    pub fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        if !valid_session_id(id) {
            return Err(ApiError::session_not_found(id));
        }
        let mut sessions = self.inner.sessions.lock().expect("registry lock");
        if let Some(handle) = sessions.get(id) {
            return Ok(handle.clone());
        }
        let Some(dir) = &self.inner.data_dir else {
            return Err(ApiError::session_not_found(id));
        };
        if !SessionDir::new(dir, id).exists() {
            return Err(ApiError::session_not_found(id));
        }
        let session = Session::load(dir, id, self.provider(), self.clock())?;
        let handle = Arc::new(SessionHandle::new(session));
        sessions.insert(id.to_string(), handle.clone());
        Ok(handle)
    }
}

/// Session ids double as directory names.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}
