use thiserror::Error;

use crate::dialogue::DialogueError;
use crate::enrichment::EnrichmentError;
use crate::gateway::{ExtractError, GatewayError};
use crate::iposition::IPositionError;
use crate::orchestra::OrchestraError;
use crate::pond::PondError;
use crate::profile::ProfileError;
use crate::store::StoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Position(#[from] IPositionError),
    #[error(transparent)]
    Enrichment(#[from] EnrichmentError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Orchestra(#[from] OrchestraError),
    #[error(transparent)]
    Pond(#[from] PondError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("session invariant violated: {0}")]
    InvariantViolation(String),
    /// `entity` was created and logged, but generating its first turn
    /// failed.
    #[error("{entity} was created but its opening turn failed: {source}")]
    Incomplete {
        entity: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for HTTP statuses and exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    NotFound,
    InvalidInput,
    Conflict,
    Provider,
    Extraction,
    Invariant,
    Storage,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use ErrorKind as K;
        match self {
            Error::Gateway(e) => gateway_kind(e),
            Error::Extract(_) => K::Extraction,
            Error::Profile(e) => match e {
                ProfileError::Gateway(g) => gateway_kind(g),
                ProfileError::SummariesPending => K::Conflict,
                _ => K::InvalidInput,
            },
            Error::Position(e) => position_kind(e),
            Error::Enrichment(e) => match e {
                EnrichmentError::NotFound(_) => K::NotFound,
                EnrichmentError::AlreadyApplied(_) => K::Conflict,
                EnrichmentError::NoAnswers | EnrichmentError::AnswerCountMismatch { .. } => K::InvalidInput,
                EnrichmentError::QuestionCountOutOfRange(_)
                | EnrichmentError::InvalidRefinement(_)
                | EnrichmentError::Extract(_) => K::Extraction,
                EnrichmentError::Gateway(g) => gateway_kind(g),
                EnrichmentError::Position(p) => position_kind(p),
            },
            Error::Dialogue(e) => match e {
                DialogueError::NotFound(_) => K::NotFound,
                DialogueError::SessionClosed(_) => K::Conflict,
                DialogueError::EmptyMessage => K::InvalidInput,
                DialogueError::InvalidTurn(_) => K::Invariant,
                DialogueError::Gateway(g) => gateway_kind(g),
            },
            Error::Orchestra(e) => match e {
                OrchestraError::NotFound(_) => K::NotFound,
                OrchestraError::SamePosition | OrchestraError::TopicNotFromSet | OrchestraError::EmptyMessage => {
                    K::InvalidInput
                }
                OrchestraError::WrongQuestionCount(_) | OrchestraError::Extract(_) => K::Extraction,
                OrchestraError::InvalidTurn(_) => K::Invariant,
                OrchestraError::Gateway(g) => gateway_kind(g),
                OrchestraError::Position(p) => position_kind(p),
            },
            Error::Pond(e) => match e {
                PondError::NotFound(_) | PondError::SnapshotNotFound(_) => K::NotFound,
                _ => K::InvalidInput,
            },
            Error::Store(e) => match e {
                StoreError::StageKindMismatch { .. } | StoreError::PayloadKindMismatch { .. } => K::Invariant,
                StoreError::StorageFailure(_) | StoreError::CorruptLog { .. } => K::Storage,
            },
            Error::InvariantViolation(_) => K::Invariant,
            Error::Incomplete { source, .. } => source.kind(),
        }
    }

    /// Stable machine-readable code, named after the underlying error
    /// variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Gateway(e) => gateway_code(e),
            Error::Extract(e) => extract_code(e),
            Error::Profile(e) => match e {
                ProfileError::MissingField(_) => "MissingField",
                ProfileError::CountMismatch { .. } => "CountMismatch",
                ProfileError::InvalidField { .. } => "InvalidField",
                ProfileError::UnsupportedSchemaVersion(_) => "UnsupportedSchemaVersion",
                ProfileError::SummariesPending => "SummariesPending",
                ProfileError::Gateway(g) => gateway_code(g),
            },
            Error::Position(e) => position_code(e),
            Error::Enrichment(e) => match e {
                EnrichmentError::QuestionCountOutOfRange(_) => "QuestionCountOutOfRange",
                EnrichmentError::AlreadyApplied(_) => "AlreadyApplied",
                EnrichmentError::NoAnswers => "NoAnswers",
                EnrichmentError::AnswerCountMismatch { .. } => "AnswerCountMismatch",
                EnrichmentError::NotFound(_) => "NotFound",
                EnrichmentError::InvalidRefinement(_) => "InvalidRefinement",
                EnrichmentError::Gateway(g) => gateway_code(g),
                EnrichmentError::Extract(x) => extract_code(x),
                EnrichmentError::Position(p) => position_code(p),
            },
            Error::Dialogue(e) => match e {
                DialogueError::NotFound(_) => "NotFound",
                DialogueError::SessionClosed(_) => "SessionClosed",
                DialogueError::EmptyMessage => "EmptyMessage",
                DialogueError::InvalidTurn(_) => "InvalidTurn",
                DialogueError::Gateway(g) => gateway_code(g),
            },
            Error::Orchestra(e) => match e {
                OrchestraError::SamePosition => "SamePosition",
                OrchestraError::WrongQuestionCount(_) => "WrongQuestionCount",
                OrchestraError::TopicNotFromSet => "TopicNotFromSet",
                OrchestraError::NotFound(_) => "NotFound",
                OrchestraError::EmptyMessage => "EmptyMessage",
                OrchestraError::InvalidTurn(_) => "InvalidTurn",
                OrchestraError::Gateway(g) => gateway_code(g),
                OrchestraError::Extract(x) => extract_code(x),
                OrchestraError::Position(p) => position_code(p),
            },
            Error::Pond(e) => match e {
                PondError::NotFound(_) => "NotFound",
                PondError::SnapshotNotFound(_) => "SnapshotNotFound",
                PondError::SizeOutOfRange(_) => "SizeOutOfRange",
                PondError::BadColor(_) => "BadColor",
                PondError::BadCoordinate => "BadCoordinate",
            },
            Error::Store(e) => match e {
                StoreError::StageKindMismatch { .. } => "StageKindMismatch",
                StoreError::PayloadKindMismatch { .. } => "PayloadKindMismatch",
                StoreError::StorageFailure(_) => "StorageFailure",
                StoreError::CorruptLog { .. } => "CorruptLog",
            },
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::Incomplete { source, .. } => source.code(),
        }
    }

    /// Whether repeating the same call might succeed.
    pub fn retriable(&self) -> bool {
        match self {
            Error::Gateway(e)
            | Error::Profile(ProfileError::Gateway(e))
            | Error::Enrichment(EnrichmentError::Gateway(e))
            | Error::Dialogue(DialogueError::Gateway(e))
            | Error::Orchestra(OrchestraError::Gateway(e)) => e.is_retriable(),
            Error::Incomplete { source, .. } => source.retriable(),
            _ => false,
        }
    }
}

fn gateway_kind(e: &GatewayError) -> ErrorKind {
    match e {
        GatewayError::InvalidRequest(_) => ErrorKind::InvalidInput,
        _ => ErrorKind::Provider,
    }
}

fn gateway_code(e: &GatewayError) -> &'static str {
    match e {
        GatewayError::Timeout { .. } => "Timeout",
        GatewayError::ProviderRejected { .. } => "ProviderRejected",
        GatewayError::Unavailable { .. } => "Unavailable",
        GatewayError::FixtureMiss(_) => "FixtureMiss",
        GatewayError::EmptyResponse => "EmptyResponse",
        GatewayError::InvalidRequest(_) => "InvalidRequest",
        GatewayError::InvalidConfig(_) => "InvalidConfig",
        GatewayError::FixtureLoad { .. } => "FixtureLoad",
    }
}

fn extract_code(e: &ExtractError) -> &'static str {
    match e {
        ExtractError::NoDocumentFound => "NoDocumentFound",
        ExtractError::MalformedDocument(_) => "MalformedDocument",
        ExtractError::SchemaViolation { .. } => "SchemaViolation",
    }
}

fn position_kind(e: &IPositionError) -> ErrorKind {
    match e {
        IPositionError::NotFound(_) => ErrorKind::NotFound,
        IPositionError::DuplicateName(_) => ErrorKind::Conflict,
        IPositionError::InvariantViolation(_) => ErrorKind::InvalidInput,
        IPositionError::ValidationFailed(_) | IPositionError::Extract(_) => ErrorKind::Extraction,
        IPositionError::Profile(ProfileError::Gateway(g)) => gateway_kind(g),
        IPositionError::Profile(_) => ErrorKind::InvalidInput,
    }
}

fn position_code(e: &IPositionError) -> &'static str {
    match e {
        IPositionError::NotFound(_) => "NotFound",
        IPositionError::DuplicateName(_) => "DuplicateName",
        IPositionError::InvariantViolation(_) => "InvariantViolation",
        IPositionError::ValidationFailed(_) => "ValidationFailed",
        IPositionError::Extract(x) => extract_code(x),
        IPositionError::Profile(ProfileError::Gateway(g)) => gateway_code(g),
        IPositionError::Profile(_) => "InvalidProfile",
    }
}
