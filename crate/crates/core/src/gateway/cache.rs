use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{GatewayError, MaskQuery, MlmBackend, MlmResponse};

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    request: MaskQuery,
    response: MlmResponse,
}

/// Replay cache in front of another backend.
///
/// The cache file is append-only JSONL of `{request, response}` records.
/// Without an inner backend the cache is replay-only and a miss is an error.
pub struct CacheBackend {
    inner: Option<Box<dyn MlmBackend>>,
    entries: RwLock<HashMap<String, MlmResponse>>,
    file: Mutex<File>,
    path: PathBuf,
}

impl CacheBackend {
    pub fn open(path: &Path, inner: Option<Box<dyn MlmBackend>>) -> Result<Self, GatewayError> {
        let cfg_err = |e: std::io::Error| GatewayError::Config(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(cfg_err)?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(cfg_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                    GatewayError::Config(format!("{} line {}: {e}", path.display(), i + 1))
                })?;
                // First record wins so replays match the original run.
                entries.entry(rec.request.cache_key()).or_insert(rec.response);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(cfg_err)?;
        Ok(Self {
            inner,
            entries: RwLock::new(entries),
            file: Mutex::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl MlmBackend for CacheBackend {
    fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError> {
        q.validate()?;
        let key = q.cache_key();
        if let Some(hit) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let inner = self
            .inner
            .as_ref()
            .ok_or_else(|| GatewayError::Backend(format!("cache miss in replay-only mode: {key}")))?;
        let resp = inner.score(q)?;
        let mut file = self.file.lock().expect("cache file lock");
        let mut entries = self.entries.write().expect("cache lock");
        if let Some(existing) = entries.get(&key) {
            return Ok(existing.clone());
        }
        let mut line = serde_json::to_string(&CacheRecord {
            request: q.clone(),
            response: resp.clone(),
        })
        .expect("cache record serializes");
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| GatewayError::Backend(format!("writing cache: {e}")))?;
        entries.insert(key, resp.clone());
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, MockConfig, PredictedToken};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting {
        inner: MockBackend,
        calls: Arc<AtomicUsize>,
    }

    impl MlmBackend for Counting {
        fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.score(q)
        }
    }

    fn mock() -> MockBackend {
        let mut cfg = MockConfig::default();
        cfg.insert_masked(
            "<mask> are cute",
            vec![
                PredictedToken::new("cat", true, -0.1234567891234),
                PredictedToken::new("dog", true, -1.0),
            ],
        );
        MockBackend::new(cfg).unwrap()
    }

    #[test]
    fn second_query_is_a_hit_and_replays_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let calls = Arc::new(AtomicUsize::new(0));
        let q = MaskQuery::masked("<mask> are cute", 2);
        let first = {
            let c = CacheBackend::open(
                &path,
                Some(Box::new(Counting {
                    inner: mock(),
                    calls: Arc::clone(&calls),
                })),
            )
            .unwrap();
            let a = c.score(&q).unwrap();
            let b = c.score(&q).unwrap();
            assert_eq!(calls.load(Ordering::SeqCst), 1);
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            a
        };
        let replay = CacheBackend::open(&path, None).unwrap();
        let again = replay.score(&q).unwrap();
        assert_eq!(
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
        assert!(replay.score(&MaskQuery::masked("<mask> x", 2)).is_err());
    }
}
