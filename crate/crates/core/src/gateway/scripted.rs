use std::collections::BTreeMap;
use std::path::Path;

use super::{Fingerprint, GatewayError, GenerationRequest, GenerationResponse, Provider};

/// Answers from a read-only map of fingerprint to response text.
///
/// The fixture file is a JSON object whose keys are hex fingerprints and
/// whose values are the response strings.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    fixtures: BTreeMap<Fingerprint, String>,
}

impl ScriptedProvider {
    pub fn new(fixtures: BTreeMap<Fingerprint, String>) -> Self {
        Self { fixtures }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let load_err = |message: String| GatewayError::FixtureLoad {
            path: path.to_path_buf(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let fixtures: BTreeMap<Fingerprint, String> =
            serde_json::from_str(&raw).map_err(|e| load_err(e.to_string()))?;
        Ok(Self { fixtures })
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl Provider for ScriptedProvider {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let fingerprint = request.fingerprint();
        match self.fixtures.get(&fingerprint) {
            Some(text) => Ok(GenerationResponse {
                text: text.clone(),
                provider_latency_ms: 0,
                truncated: false,
                retries: 0,
            }),
            None => Err(GatewayError::FixtureMiss(fingerprint)),
        }
    }
}
