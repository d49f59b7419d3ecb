//! Client for a remote keyword-extraction endpoint.
//!
//! One request carries a role block and a few-shot user block, both
//! rendered from editable templates. The reply text is expected to hold a
//! bracketed, comma-separated list.

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::IngestConfig;
use crate::error::{Error, Result};

pub const ENDPOINT_ENV: &str = "FRAMEPICK_KEYWORD_ENDPOINT";

const DEFAULT_ROLE_PROMPT: &str = include_str!("../../templates/role_prompt.txt");
const DEFAULT_USER_PROMPT: &str = include_str!("../../templates/user_prompt.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRequest {
    pub role_prompt: String,
    pub user_prompt: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordResponse {
    pub text: String,
}

/// Sends one extraction request. Implementations report transport
/// failures as retryable [`Error::Remote`].
pub trait KeywordTransport {
    fn send(&self, request: &KeywordRequest) -> Result<KeywordResponse>;
}

pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }

    pub fn from_env(timeout: Duration) -> Option<Self> {
        std::env::var(ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(|url| Self::new(url, timeout))
    }
}

impl KeywordTransport for HttpTransport {
    fn send(&self, request: &KeywordRequest) -> Result<KeywordResponse> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| Error::Remote {
                retryable: true,
                message: e.to_string(),
            })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Remote {
                retryable: true,
                message: e.to_string(),
            })?;
        if status >= 500 {
            return Err(Error::Remote {
                retryable: true,
                message: format!("status {status}"),
            });
        }
        if status >= 400 {
            return Err(Error::Remote {
                retryable: false,
                message: format!("status {status}: {body}"),
            });
        }
        serde_json::from_str(&body).map_err(|e| Error::RemoteParse {
            message: e.to_string(),
            raw: body,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub role: String,
    pub user: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            role: DEFAULT_ROLE_PROMPT.to_owned(),
            user: DEFAULT_USER_PROMPT.to_owned(),
        }
    }
}

impl PromptTemplates {
    /// Load `role_prompt.txt` and `user_prompt.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        Ok(Self {
            role: read("role_prompt.txt")?,
            user: read("user_prompt.txt")?,
        })
    }

    pub fn render(&self, title: &str, summary: &str, max_keywords: usize, max_tokens: u32) -> KeywordRequest {
        let user = self
            .user
            .replace("{title}", title)
            .replace("{summary}", summary)
            .replace("{max_keywords}", &max_keywords.to_string());
        KeywordRequest {
            role_prompt: self.role.clone(),
            user_prompt: user,
            max_tokens,
        }
    }
}

pub struct KeywordClient<T> {
    transport: T,
    templates: PromptTemplates,
    max_keywords: usize,
    retries: u32,
    max_tokens: u32,
}

impl<T: KeywordTransport> KeywordClient<T> {
    pub fn new(transport: T, templates: PromptTemplates, cfg: &IngestConfig) -> Self {
        Self {
            transport,
            templates,
            max_keywords: cfg.keyword_max,
            retries: cfg.keyword_retries,
            max_tokens: cfg.keyword_max_tokens,
        }
    }

    /// Request keywords for a video. Retryable failures are retried up to
    /// the configured bound before the last error is returned.
    pub fn extract(&self, summary: &str, title: &str) -> Result<Vec<String>> {
        if summary.trim().is_empty() {
            return Err(Error::Validation("summary must not be blank".into()));
        }
        let request = self
            .templates
            .render(title, summary, self.max_keywords, self.max_tokens);
        let mut attempt = 0;
        loop {
            match self.transport.send(&request) {
                Ok(resp) => return parse_keyword_list(&resp.text, self.max_keywords),
                Err(Error::Remote { retryable: true, message }) if attempt < self.retries => {
                    attempt += 1;
                    warn!(attempt, %message, "keyword extraction failed, retrying");
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// As [`extract`](Self::extract), but exhausted network retries fall
    /// back to `metadata` keywords. Parse errors still surface.
    pub fn extract_or_fallback(&self, summary: &str, title: &str, metadata: &[String]) -> Result<Vec<String>> {
        match self.extract(summary, title) {
            Err(Error::Remote { message, .. }) => {
                warn!(%message, "keyword endpoint unavailable, using metadata keywords");
                Ok(metadata.to_vec())
            }
            other => other,
        }
    }
}

/// Parse `[a, b, c]` out of a reply, deduplicating case-insensitively and
/// keeping at most `max` entries.
pub fn parse_keyword_list(text: &str, max: usize) -> Result<Vec<String>> {
    let (start, end) = match (text.find('['), text.rfind(']')) {
        (Some(s), Some(e)) if s < e => (s, e),
        _ => {
            return Err(Error::RemoteParse {
                message: "no bracketed keyword list".into(),
                raw: text.to_owned(),
            })
        }
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for part in text[start + 1..end].split(',') {
        let kw = part
            .trim()
            .trim_matches(|c| c == '"' || c == '\'')
            .trim();
        if kw.is_empty() {
            continue;
        }
        if seen.insert(kw.to_lowercase()) {
            out.push(kw.to_owned());
        }
        if out.len() == max {
            break;
        }
    }
    Ok(out)
}
