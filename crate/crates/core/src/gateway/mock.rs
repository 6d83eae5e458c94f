use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GatewayError, MaskQuery, MlmBackend, MlmResponse, PredictedToken, QueryMode};

/// Scripted answer for one query text: either one list shared by every mask,
/// or one list per mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockEntry {
    PerMask(Vec<Vec<PredictedToken>>),
    Shared(Vec<PredictedToken>),
}

/// Fallback vocabulary item: a bare string begins a word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VocabItem {
    Word(String),
    Token { surface: String, begins_word: bool },
}

/// JSON configuration of the mock backend.
///
/// ```json
/// {
///   "entries": {"<mask> are cute": [{"surface": "cat", "begins_word": true, "logprob": -0.5}]},
///   "positions": {"7:This cat is cute": [ ... ]},
///   "fallback_vocab": ["a", "b", "c", "d"],
///   "max_query_chars": 2000
/// }
/// ```
///
/// `entries` is keyed by exact masked query text; `positions` by
/// `"<char offset>:<text>"`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    #[serde(default)]
    pub entries: BTreeMap<String, MockEntry>,
    #[serde(default)]
    pub positions: BTreeMap<String, Vec<PredictedToken>>,
    #[serde(default)]
    pub fallback_vocab: Vec<VocabItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_query_chars: Option<usize>,
}

impl MockConfig {
    pub fn position_key(text: &str, position: usize) -> String {
        format!("{position}:{text}")
    }

    pub fn insert_masked(&mut self, text: impl Into<String>, tokens: Vec<PredictedToken>) {
        self.entries.insert(text.into(), MockEntry::Shared(tokens));
    }

    pub fn insert_per_mask(&mut self, text: impl Into<String>, lists: Vec<Vec<PredictedToken>>) {
        self.entries.insert(text.into(), MockEntry::PerMask(lists));
    }

    pub fn insert_position(&mut self, text: &str, position: usize, tokens: Vec<PredictedToken>) {
        self.positions
            .insert(Self::position_key(text, position), tokens);
    }
}

/// Deterministic scorer driven by a [`MockConfig`]. Unknown queries get a
/// uniform distribution over the fallback vocabulary.
#[derive(Clone, Debug)]
pub struct MockBackend {
    config: MockConfig,
    fallback: Vec<PredictedToken>,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Result<Self, GatewayError> {
        let check = |what: &str, list: &[PredictedToken]| -> Result<(), GatewayError> {
            if list.windows(2).any(|w| w[1].logprob > w[0].logprob) {
                return Err(GatewayError::Config(format!(
                    "{what}: logprobs must be non-increasing"
                )));
            }
            if list.iter().any(|t| t.surface.is_empty() || t.logprob > 0.0) {
                return Err(GatewayError::Config(format!(
                    "{what}: empty surface or positive logprob"
                )));
            }
            Ok(())
        };
        for (text, entry) in &config.entries {
            match entry {
                MockEntry::Shared(l) => check(text, l)?,
                MockEntry::PerMask(ls) => {
                    let masks = text.matches(super::MASK).count();
                    if ls.len() != masks {
                        return Err(GatewayError::Config(format!(
                            "{text}: {} lists for {masks} masks",
                            ls.len()
                        )));
                    }
                    for l in ls {
                        check(text, l)?;
                    }
                }
            }
        }
        for (key, l) in &config.positions {
            check(key, l)?;
        }
        let n = config.fallback_vocab.len();
        let logprob = if n <= 1 { 0.0 } else { -(n as f64).ln() };
        let fallback = config
            .fallback_vocab
            .iter()
            .map(|v| match v {
                VocabItem::Word(w) => PredictedToken::new(w.clone(), true, logprob),
                VocabItem::Token {
                    surface,
                    begins_word,
                } => PredictedToken::new(surface.clone(), *begins_word, logprob),
            })
            .collect();
        Ok(Self { config, fallback })
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let config: MockConfig = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::new(config)
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn truncated(list: &[PredictedToken], k: usize) -> Vec<PredictedToken> {
        list.iter().take(k).cloned().collect()
    }
}

impl MlmBackend for MockBackend {
    fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError> {
        q.validate()?;
        if let Some(max) = self.config.max_query_chars {
            let len = q.text.chars().count();
            if len > max {
                return Err(GatewayError::QueryTooLong { len, max });
            }
        }
        let predictions = match q.mode {
            QueryMode::MaskedTopk => {
                let masks = q.mask_count();
                match self.config.entries.get(&q.text) {
                    Some(MockEntry::Shared(l)) => vec![Self::truncated(l, q.top_k); masks],
                    Some(MockEntry::PerMask(ls)) => {
                        ls.iter().map(|l| Self::truncated(l, q.top_k)).collect()
                    }
                    None => vec![Self::truncated(&self.fallback, q.top_k); masks],
                }
            }
            QueryMode::PositionTopk => {
                let key = MockConfig::position_key(&q.text, q.position.unwrap_or(0));
                let list = self.config.positions.get(&key).unwrap_or(&self.fallback);
                vec![Self::truncated(list, q.top_k)]
            }
        };
        Ok(MlmResponse { predictions })
    }
}
