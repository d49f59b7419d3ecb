//! Client for a remote text-embedding endpoint used for user keywords.
//!
//! Request: `POST {"text": ...}`; response: `{"embedding": [f32, ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const ENDPOINT_ENV: &str = "FRAMEPICK_EMBEDDING_ENDPOINT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embedding: Vec<f32>,
}

#[derive(Clone)]
pub struct EmbeddingClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for EmbeddingClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingClient").field("endpoint", &self.endpoint).finish()
    }
}

impl EmbeddingClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Blocking; call from a blocking task.
    pub fn embed(&self, text: &str) -> Result<Vec<f32>, String> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { text: text.into() })
            .map_err(|e| e.to_string())?;
        let body: EmbedResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(body.embedding)
    }
}
