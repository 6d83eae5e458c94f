//! Newline-delimited JSON messages exchanged with a scoring sidecar.

use serde::{Deserialize, Serialize};

use super::{MaskQuery, PredictedToken, QueryMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: String,
    pub mode: QueryMode,
    pub text: String,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

impl WireRequest {
    pub fn new(id: impl Into<String>, q: &MaskQuery) -> Self {
        Self {
            id: id.into(),
            mode: q.mode,
            text: q.text.clone(),
            top_k: q.top_k,
            position: q.position,
        }
    }

    pub fn query(&self) -> MaskQuery {
        MaskQuery {
            mode: self.mode,
            text: self.text.clone(),
            top_k: self.top_k,
            position: self.position,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub id: String,
    pub error: String,
}

/// A sidecar reply: predictions or an error, matched to its request by `id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireResponse {
    Ok {
        id: String,
        predictions: Vec<Vec<PredictedToken>>,
    },
    Err(WireError),
}

impl WireResponse {
    pub fn id(&self) -> &str {
        match self {
            WireResponse::Ok { id, .. } => id,
            WireResponse::Err(e) => &e.id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let req = WireRequest::new("7", &MaskQuery::masked("a <mask>", 3));
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"id":"7","mode":"masked_topk","text":"a <mask>","top_k":3}"#
        );
        let ok: WireResponse = serde_json::from_str(
            r#"{"id":"7","predictions":[[{"surface":"b","begins_word":true,"logprob":-0.5}]]}"#,
        )
        .unwrap();
        assert!(matches!(ok, WireResponse::Ok { .. }));
        let err: WireResponse = serde_json::from_str(r#"{"id":"8","error":"boom"}"#).unwrap();
        assert_eq!(err.id(), "8");
        assert!(matches!(err, WireResponse::Err(_)));
    }
}
