//! Masked language model scoring.
//!
//! Everything above this module talks to a [`MlmBackend`]. Backends answer two
//! kinds of [`MaskQuery`]: top-k predictions at each `<mask>` sentinel, or the
//! output distribution at an unmasked character position. Subword boundary
//! conventions are resolved by the backend into an explicit `begins_word`
//! flag, so nothing here knows about tokenizer vocabularies.

mod cache;
mod mock;
mod protocol;
mod server;
mod sidecar;

use serde::{Deserialize, Serialize};

pub use cache::CacheBackend;
pub use mock::{MockBackend, MockConfig, MockEntry, VocabItem};
pub use protocol::{WireError, WireRequest, WireResponse};
pub use server::{serve_connection, serve_tcp};
pub use sidecar::SidecarBackend;

/// The mask sentinel as it appears in query text.
pub const MASK: &str = "<mask>";

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GatewayError {
    /// Connection-level failure; the same query may succeed on retry.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("query of {len} characters exceeds the backend limit of {max}")]
    QueryTooLong { len: usize, max: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

/// One subword prediction. `logprob` is a natural log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedToken {
    pub surface: String,
    pub begins_word: bool,
    pub logprob: f64,
}

impl PredictedToken {
    pub fn new(surface: impl Into<String>, begins_word: bool, logprob: f64) -> Self {
        Self {
            surface: surface.into(),
            begins_word,
            logprob,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    MaskedTopk,
    PositionTopk,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskQuery {
    pub mode: QueryMode,
    pub text: String,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

impl MaskQuery {
    pub fn masked(text: impl Into<String>, top_k: usize) -> Self {
        Self {
            mode: QueryMode::MaskedTopk,
            text: text.into(),
            top_k,
            position: None,
        }
    }

    /// Distribution at the token starting at character offset `position`.
    pub fn at_position(text: impl Into<String>, position: usize, top_k: usize) -> Self {
        Self {
            mode: QueryMode::PositionTopk,
            text: text.into(),
            top_k,
            position: Some(position),
        }
    }

    pub fn mask_count(&self) -> usize {
        self.text.matches(MASK).count()
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.top_k == 0 {
            return Err(GatewayError::InvalidQuery("top_k must be positive".into()));
        }
        match self.mode {
            QueryMode::MaskedTopk => {
                if self.mask_count() == 0 {
                    return Err(GatewayError::InvalidQuery(
                        "masked_topk query without a <mask> sentinel".into(),
                    ));
                }
            }
            QueryMode::PositionTopk => {
                if self.mask_count() != 0 {
                    return Err(GatewayError::InvalidQuery(
                        "position_topk query must not contain <mask>".into(),
                    ));
                }
                match self.position {
                    Some(p) if p < self.text.chars().count() => {}
                    _ => {
                        return Err(GatewayError::InvalidQuery(
                            "position_topk query needs a position inside the text".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical string form used as a cache key.
    pub fn cache_key(&self) -> String {
        serde_json::to_string(self).expect("query serializes")
    }
}

/// Per-mask prediction lists in left-to-right sentinel order, or a single
/// list for position queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmResponse {
    pub predictions: Vec<Vec<PredictedToken>>,
}

impl MlmResponse {
    /// Checks list count, list length and ordering against the query.
    pub fn check_against(&self, q: &MaskQuery) -> Result<(), GatewayError> {
        let expected = match q.mode {
            QueryMode::MaskedTopk => q.mask_count(),
            QueryMode::PositionTopk => 1,
        };
        if self.predictions.len() != expected {
            return Err(GatewayError::Backend(format!(
                "expected {expected} prediction lists, got {}",
                self.predictions.len()
            )));
        }
        for list in &self.predictions {
            if list.len() > q.top_k {
                return Err(GatewayError::Backend(format!(
                    "list of {} tokens exceeds top_k={}",
                    list.len(),
                    q.top_k
                )));
            }
            if list.windows(2).any(|w| w[1].logprob > w[0].logprob) {
                return Err(GatewayError::Backend("logprobs not non-increasing".into()));
            }
            if list.iter().any(|t| t.surface.is_empty()) {
                return Err(GatewayError::Backend("empty token surface".into()));
            }
        }
        Ok(())
    }
}

/// A scoring backend. Implementations must be safe to call from many threads.
pub trait MlmBackend: Send + Sync {
    fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError>;
}

impl<B: MlmBackend + ?Sized> MlmBackend for &B {
    fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError> {
        (**self).score(q)
    }
}

impl<B: MlmBackend + ?Sized> MlmBackend for Box<B> {
    fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError> {
        (**self).score(q)
    }
}

impl<B: MlmBackend + ?Sized> MlmBackend for std::sync::Arc<B> {
    fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError> {
        (**self).score(q)
    }
}
