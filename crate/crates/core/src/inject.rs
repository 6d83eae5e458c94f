//! Target injection: symmetric dynamic patterns and static-embedding reranking.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::substgen::{sort_candidates, SubstituteCandidate, SubstituteSet, Template, SLOT};

#[derive(Debug, thiserror::Error)]
pub enum PatternError {
    #[error("pattern {name}: template {template:?} must contain {{T}} and {{M}} exactly once each")]
    Placeholder { name: String, template: String },
    #[error("no pattern {name:?} for language {language:?}")]
    Unknown { name: String, language: String },
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("instantiated pattern is not a valid template: {0}")]
    Template(String),
}

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
}

const TARGET: &str = "{T}";
const MASK_SLOT: &str = "{M}";

/// A symmetric pair of templates. `{T}` stands for the target word and
/// `{M}` for the position to fill with substitutes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub name: String,
    pub target_first: String,
    pub mask_first: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSide {
    TargetFirst,
    MaskFirst,
}

impl Pattern {
    pub fn new(name: &str, target_first: &str, mask_first: &str) -> Result<Self, PatternError> {
        for t in [target_first, mask_first] {
            if t.matches(TARGET).count() != 1 || t.matches(MASK_SLOT).count() != 1 {
                return Err(PatternError::Placeholder {
                    name: name.into(),
                    template: t.into(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            target_first: target_first.into(),
            mask_first: mask_first.into(),
        })
    }

    pub fn side(&self, side: PatternSide) -> &str {
        match side {
            PatternSide::TargetFirst => &self.target_first,
            PatternSide::MaskFirst => &self.mask_first,
        }
    }
}

/// Replaces the instance's target with one side of the pattern. The target
/// surface fills `{T}`; `{M}` becomes the generator slot.
pub fn instantiate_pattern(
    p: &Pattern,
    instance: &Instance,
    side: PatternSide,
) -> Result<Template, PatternError> {
    let raw = p.side(side);
    if raw.matches(TARGET).count() != 1 || raw.matches(MASK_SLOT).count() != 1 {
        return Err(PatternError::Placeholder {
            name: p.name.clone(),
            template: raw.into(),
        });
    }
    let (before, target, after) = instance.split_context();
    // Mark the slot first so a target containing "{M}" cannot collide.
    let (left, right) = raw.split_once(MASK_SLOT).expect("checked above");
    let fill = |s: &str| s.replace(TARGET, target);
    let text = format!("{before}{}{SLOT}{}{after}", fill(left), fill(right));
    Template::new(&text).map_err(|e| PatternError::Template(e.to_string()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SidePair {
    target_first: String,
    mask_first: String,
}

/// Pattern templates keyed by name and language.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatternCatalog {
    patterns: BTreeMap<String, BTreeMap<String, Pattern>>,
}

impl PatternCatalog {
    /// The four English patterns: "and", "or", "and also", "or even".
    pub fn english() -> Self {
        let mut c = Self::default();
        for (name, tf, mf) in [
            ("and", "{T} and {M}", "{M} and {T}"),
            ("or", "{T} or {M}", "{M} or {T}"),
            ("and also", "{T} (and also {M})", "{M} (and also {T})"),
            ("or even", "{T} (or even {M})", "{M} (or even {T})"),
        ] {
            c.insert("en", Pattern::new(name, tf, mf).expect("built-in pattern"));
        }
        c
    }

    pub fn insert(&mut self, language: &str, p: Pattern) {
        self.patterns
            .entry(p.name.clone())
            .or_default()
            .insert(language.to_string(), p);
    }

    /// Parses `{"name": {"lang": {"target_first": ..., "mask_first": ...}}}`.
    pub fn from_json(text: &str) -> Result<Self, PatternError> {
        let raw: BTreeMap<String, BTreeMap<String, SidePair>> =
            serde_json::from_str(text).map_err(|e| PatternError::Catalog(e.to_string()))?;
        let mut c = Self::default();
        for (name, langs) in raw {
            for (lang, pair) in langs {
                c.insert(&lang, Pattern::new(&name, &pair.target_first, &pair.mask_first)?);
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PatternError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PatternError::Catalog(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&String, BTreeMap<&String, SidePair>> = self
            .patterns
            .iter()
            .map(|(name, langs)| {
                (
                    name,
                    langs
                        .iter()
                        .map(|(l, p)| {
                            (
                                l,
                                SidePair {
                                    target_first: p.target_first.clone(),
                                    mask_first: p.mask_first.clone(),
                                },
                            )
                        })
                        .collect(),
                )
            })
            .collect();
        serde_json::to_string_pretty(&raw).expect("catalog serializes")
    }

    pub fn get(&self, name: &str, language: &str) -> Result<&Pattern, PatternError> {
        self.patterns
            .get(name)
            .and_then(|l| l.get(language))
            .ok_or_else(|| PatternError::Unknown {
                name: name.into(),
                language: language.into(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.patterns.keys().map(String::as_str)
    }
}

/// Fuses substitutes from the two sides of a symmetric pattern by
/// multiplying probabilities. A word missing on one side gets `floor` there.
/// Scores are kept in log space.
pub fn sdp_combine(a: &SubstituteSet, b: &SubstituteSet, floor: f64, k: usize) -> SubstituteSet {
    let floor_lp = floor.ln();
    let mut merged: BTreeMap<&str, (Option<&SubstituteCandidate>, Option<&SubstituteCandidate>)> =
        BTreeMap::new();
    for c in &a.candidates {
        merged.entry(c.word.as_str()).or_default().0 = Some(c);
    }
    for c in &b.candidates {
        merged.entry(c.word.as_str()).or_default().1 = Some(c);
    }
    let mut out: Vec<SubstituteCandidate> = merged
        .into_iter()
        .map(|(word, (ca, cb))| {
            let la = ca.map_or(floor_lp, |c| c.logprob);
            let lb = cb.map_or(floor_lp, |c| c.logprob);
            let n = match (ca, cb) {
                (Some(x), Some(y)) => x.n_subwords.min(y.n_subwords),
                (Some(x), None) | (None, Some(x)) => x.n_subwords,
                (None, None) => unreachable!(),
            };
            SubstituteCandidate {
                word: word.to_string(),
                logprob: la + lb,
                n_subwords: n,
            }
        })
        .collect();
    sort_candidates(&mut out);
    out.truncate(k);
    let instance_id = if a.instance_id.is_empty() {
        b.instance_id.clone()
    } else {
        a.instance_id.clone()
    };
    SubstituteSet {
        instance_id,
        candidates: out,
    }
}

/// Static word vectors for one language.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub language: String,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    /// Similarity assigned when either word is missing from the table.
    pub oov_similarity: f64,
}

impl EmbeddingTable {
    pub fn new(language: impl Into<String>, dim: usize) -> Self {
        Self {
            language: language.into(),
            dim,
            vectors: HashMap::new(),
            oov_similarity: 0.0,
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, v: Vec<f64>) {
        assert_eq!(v.len(), self.dim, "embedding dimension mismatch");
        self.vectors.insert(word.into(), v);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    /// Parses the text format: a `n d` header, then `word v1 ... vd` lines.
    pub fn parse(language: &str, text: &str, origin: &str) -> Result<Self, EmbeddingError> {
        let err = |line: usize, m: String| EmbeddingError::Parse {
            path: origin.into(),
            message: format!("line {line}: {m}"),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let mut h = header.split_whitespace();
        let (n, d) = match (h.next(), h.next(), h.next()) {
            (Some(n), Some(d), None) => (
                n.parse::<usize>().map_err(|e| err(1, e.to_string()))?,
                d.parse::<usize>().map_err(|e| err(1, e.to_string()))?,
            ),
            _ => return Err(err(1, "header must be \"n d\"".into())),
        };
        let mut table = Self::new(language, d);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ').filter(|p| !p.is_empty());
            let word = parts.next().expect("non-empty line");
            let v = parts
                .map(|x| x.parse::<f64>().map_err(|e| err(i + 2, e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            if v.len() != d {
                return Err(err(i + 2, format!("expected {d} values, got {}", v.len())));
            }
            table.vectors.insert(word.to_string(), v);
        }
        if table.vectors.len() != n {
            log::warn!("{origin}: header declares {n} words, found {}", table.vectors.len());
        }
        Ok(table)
    }

    pub fn load(language: &str, path: &Path) -> Result<Self, EmbeddingError> {
        let text = std::fs::read_to_string(path).map_err(|e| EmbeddingError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(language, &text, &path.display().to_string())
    }

    /// Cosine similarity, or `None` when either word is out of vocabulary.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.vectors.get(a)?, self.vectors.get(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
        let ny = y.iter().map(|p| p * p).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            return Some(0.0);
        }
        Some(dot / (nx * ny))
    }
}

/// Reranks substitutes by `p_mlm * softmax(cos / temperature)`.
///
/// Out-of-vocabulary candidates take the table's `oov_similarity`. When no
/// candidate is in vocabulary the MLM ranking is returned unchanged
/// (truncated to `k`).
pub fn embs_rerank(
    cands: &SubstituteSet,
    target: &str,
    emb: &EmbeddingTable,
    temperature: f64,
    k: usize,
) -> Result<SubstituteSet, EmbeddingError> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(EmbeddingError::Temperature(temperature));
    }
    if cands.is_empty() {
        return Ok(cands.clone());
    }
    if !cands.words().any(|w| emb.contains(w)) {
        log::warn!(
            "{}: no candidate has an embedding; keeping the MLM ranking",
            cands.instance_id
        );
        return Ok(cands.clone().truncated(k));
    }
    let logits: Vec<f64> = cands
        .candidates
        .iter()
        .map(|c| emb.cosine(target, &c.word).unwrap_or(emb.oov_similarity) / temperature)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut out: Vec<SubstituteCandidate> = cands
        .candidates
        .iter()
        .zip(&logits)
        .map(|(c, l)| SubstituteCandidate {
            word: c.word.clone(),
            logprob: c.logprob + (l - lse),
            n_subwords: c.n_subwords,
        })
        .collect();
    sort_candidates(&mut out);
    out.truncate(k);
    Ok(SubstituteSet {
        instance_id: cands.instance_id.clone(),
        candidates: out,
    })
}
