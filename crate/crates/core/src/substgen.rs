//! Lexical substitute generation from a masked language model.
//!
//! Three generators share the [`Template`] / [`SubstituteSet`] vocabulary:
//!
//! * [`concat_generate`] queries the slot filled with one, two or three
//!   consecutive masks, seeds `k` paths from the first mask and extends each
//!   path greedily. Only the first word of each decoded sequence is kept.
//! * [`wcm_generate`] targets a word-continuation model: masks are inserted
//!   one at a time right after the decoded prefix, and a path stops as soon as
//!   the best continuation would begin a new word.
//! * [`baseline_generate`] averages the distribution at the unmasked target
//!   with the distribution at a pattern mask; single-token substitutes only.
//!
//! Decode paths of one instance are expanded breadth-first, step by step.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::gateway::{GatewayError, MaskQuery, MlmBackend, PredictedToken, MASK};
use crate::inject::{instantiate_pattern, Pattern, PatternSide};

/// Placeholder marking where substitutes go in a [`Template`].
pub const SLOT: &str = "{T}";

/// Smoothing floor used when a token is absent from one distribution.
pub const DEFAULT_FLOOR: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("template must contain exactly one {SLOT} slot, found {0}")]
    BadTemplate(usize),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("mask counts must be a non-empty subset of {{1, 2, 3}}")]
    BadMaskCounts,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Pattern(#[from] crate::inject::PatternError),
}

/// Text with exactly one substitute slot. Whitespace runs are collapsed to
/// single spaces.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Template(String);

impl Template {
    pub fn new(text: &str) -> Result<Self, GenerateError> {
        let slots = text.matches(SLOT).count();
        if slots != 1 {
            return Err(GenerateError::BadTemplate(slots));
        }
        Ok(Self(text.split_whitespace().collect::<Vec<_>>().join(" ")))
    }

    /// The instance context with its target span replaced by the slot.
    pub fn from_instance(inst: &Instance) -> Result<Self, GenerateError> {
        let (before, _, after) = inst.split_context();
        Self::new(&format!("{before}{SLOT}{after}"))
    }

    pub fn fill(&self, filler: &str) -> String {
        self.0.replacen(SLOT, filler, 1)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Template {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstituteCandidate {
    pub word: String,
    pub logprob: f64,
    pub n_subwords: usize,
}

/// Ranked, deduplicated substitutes for one instance.
///
/// Ordered by logprob descending, ties broken by word.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubstituteSet {
    pub instance_id: String,
    pub candidates: Vec<SubstituteCandidate>,
}

impl SubstituteSet {
    /// Normalizes words, keeps the best-scoring duplicate, sorts, and
    /// optionally truncates to `k`.
    pub fn from_candidates(
        instance_id: impl Into<String>,
        raw: impl IntoIterator<Item = SubstituteCandidate>,
        k: Option<usize>,
    ) -> Self {
        let mut best: HashMap<String, SubstituteCandidate> = HashMap::new();
        for mut c in raw {
            let Some(word) = normalize_word(&c.word) else { continue };
            c.word = word;
            match best.get(&c.word) {
                Some(prev)
                    if prev.logprob > c.logprob
                        || (prev.logprob == c.logprob && prev.n_subwords <= c.n_subwords) => {}
                _ => {
                    best.insert(c.word.clone(), c);
                }
            }
        }
        let mut candidates: Vec<_> = best.into_values().collect();
        sort_candidates(&mut candidates);
        if let Some(k) = k {
            candidates.truncate(k);
        }
        Self {
            instance_id: instance_id.into(),
            candidates,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.word.as_str())
    }

    pub fn get(&self, word: &str) -> Option<&SubstituteCandidate> {
        self.candidates.iter().find(|c| c.word == word)
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.candidates.truncate(k);
        self
    }
}

pub(crate) fn sort_candidates(c: &mut [SubstituteCandidate]) {
    c.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then_with(|| a.word.cmp(&b.word)));
}

/// Lowercases and keeps the first whitespace-delimited piece.
fn normalize_word(w: &str) -> Option<String> {
    let first = w.split_whitespace().next()?;
    Some(first.to_lowercase())
}

/// How the per-mask-count candidate lists are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Merge all mask counts, deduplicate, keep the global top k.
    #[default]
    MergedTopK,
    /// Keep each mask count's top k and return the deduplicated union
    /// (up to `|mask_counts| * k` candidates).
    Union,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatParams {
    pub k: usize,
    pub mask_counts: BTreeSet<usize>,
    #[serde(default)]
    pub truncation: Truncation,
}

impl ConcatParams {
    pub fn new(k: usize, mask_counts: impl IntoIterator<Item = usize>) -> Self {
        Self {
            k,
            mask_counts: mask_counts.into_iter().collect(),
            truncation: Truncation::MergedTopK,
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        if self.k == 0 {
            return Err(GenerateError::ZeroK);
        }
        if self.mask_counts.is_empty() || self.mask_counts.iter().any(|m| !(1..=3).contains(m)) {
            return Err(GenerateError::BadMaskCounts);
        }
        Ok(())
    }
}

impl Default for ConcatParams {
    fn default() -> Self {
        Self::new(150, [1, 2, 3])
    }
}

/// A partially decoded substitute.
#[derive(Clone, Debug)]
struct Path {
    surface: String,
    logprob: f64,
    n_subwords: usize,
    done: bool,
}

impl Path {
    fn seed(t: &PredictedToken) -> Self {
        Self {
            surface: t.surface.clone(),
            logprob: t.logprob,
            n_subwords: 1,
            done: false,
        }
    }

    /// Appends a continuation, or finishes the path at a word boundary.
    fn extend(&mut self, next: Option<&PredictedToken>) {
        match next {
            Some(t) if !t.begins_word => {
                self.surface.push_str(&t.surface);
                self.logprob += t.logprob;
                self.n_subwords += 1;
            }
            _ => self.done = true,
        }
    }

    fn candidate(self) -> SubstituteCandidate {
        SubstituteCandidate {
            word: self.surface,
            logprob: self.logprob,
            n_subwords: self.n_subwords,
        }
    }
}

fn seeds(
    gw: &dyn MlmBackend,
    text: String,
    k: usize,
) -> Result<Vec<PredictedToken>, GenerateError> {
    let resp = gw.score(&MaskQuery::masked(text, k))?;
    Ok(resp.predictions.into_iter().next().unwrap_or_default())
}

fn argmax_first_mask(
    gw: &dyn MlmBackend,
    text: String,
) -> Result<Option<PredictedToken>, GenerateError> {
    let resp = gw.score(&MaskQuery::masked(text, 1))?;
    Ok(resp.predictions.into_iter().next().and_then(|l| l.into_iter().next()))
}

/// Multi-mask generator with greedy continuation decoding.
pub fn concat_generate(
    instance_id: &str,
    template: &Template,
    params: &ConcatParams,
    gw: &dyn MlmBackend,
) -> Result<SubstituteSet, GenerateError> {
    params.validate()?;
    let mut raw = Vec::new();
    for &m in &params.mask_counts {
        let first = seeds(gw, template.fill(&MASK.repeat(m)), params.k)?;
        let mut paths: Vec<Path> = first.iter().map(Path::seed).collect();
        for step in 1..m {
            for p in paths.iter_mut().filter(|p| !p.done) {
                let text = template.fill(&format!("{}{}", p.surface, MASK.repeat(m - step)));
                p.extend(argmax_first_mask(gw, text)?.as_ref());
            }
        }
        let found = paths.into_iter().map(Path::candidate);
        match params.truncation {
            Truncation::MergedTopK => raw.extend(found),
            Truncation::Union => raw.extend(
                SubstituteSet::from_candidates(instance_id, found, Some(params.k)).candidates,
            ),
        }
    }
    if raw.is_empty() {
        log::warn!("{instance_id}: backend returned no substitutes");
    }
    let k = match params.truncation {
        Truncation::MergedTopK => Some(params.k),
        Truncation::Union => None,
    };
    Ok(SubstituteSet::from_candidates(instance_id, raw, k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WcmParams {
    pub k: usize,
    pub max_subwords: usize,
}

impl Default for WcmParams {
    fn default() -> Self {
        Self {
            k: 150,
            max_subwords: 3,
        }
    }
}

/// Iterative mask-insertion decoding for word-continuation models.
pub fn wcm_generate(
    instance_id: &str,
    template: &Template,
    params: &WcmParams,
    gw: &dyn MlmBackend,
) -> Result<SubstituteSet, GenerateError> {
    if params.k == 0 || params.max_subwords == 0 {
        return Err(GenerateError::ZeroK);
    }
    let first = seeds(gw, template.fill(MASK), params.k)?;
    let mut paths: Vec<Path> = first.iter().map(Path::seed).collect();
    for _ in 1..params.max_subwords {
        let mut any = false;
        for p in paths.iter_mut().filter(|p| !p.done) {
            let text = template.fill(&format!("{}{MASK}", p.surface));
            p.extend(argmax_first_mask(gw, text)?.as_ref());
            any = true;
        }
        if !any {
            break;
        }
    }
    if paths.is_empty() {
        log::warn!("{instance_id}: backend returned no substitutes");
    }
    Ok(SubstituteSet::from_candidates(
        instance_id,
        paths.into_iter().map(Path::candidate),
        Some(params.k),
    ))
}

/// Single-token baseline: average of the log-distribution at the unmasked
/// target's first subword and at the mask of the pattern-injected context.
///
/// A token missing from one side contributes `ln(floor)`. Tokens that do not
/// begin a word in either list are dropped.
pub fn baseline_generate(
    instance: &Instance,
    pattern: &Pattern,
    k: usize,
    floor: f64,
    gw: &dyn MlmBackend,
) -> Result<SubstituteSet, GenerateError> {
    if k == 0 {
        return Err(GenerateError::ZeroK);
    }
    let at_target = gw.score(&MaskQuery::at_position(
        instance.context.clone(),
        instance.target_span.0,
        k,
    ))?;
    let injected = instantiate_pattern(pattern, instance, PatternSide::TargetFirst)?;
    let at_mask = gw.score(&MaskQuery::masked(injected.fill(MASK), k))?;

    let collect = |lists: Vec<Vec<PredictedToken>>| {
        let mut scores: HashMap<String, f64> = HashMap::new();
        let mut excluded = BTreeSet::new();
        for t in lists.into_iter().next().unwrap_or_default() {
            let Some(w) = normalize_word(&t.surface) else { continue };
            if !t.begins_word {
                excluded.insert(w);
                continue;
            }
            scores.entry(w).or_insert(t.logprob);
        }
        (scores, excluded)
    };
    let (a, ex_a) = collect(at_target.predictions);
    let (b, ex_b) = collect(at_mask.predictions);
    let floor_lp = floor.ln();
    let words: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let raw = words
        .into_iter()
        .filter(|w| !ex_a.contains(*w) && !ex_b.contains(*w))
        .map(|w| {
            let la = a.get(w).copied().unwrap_or(floor_lp);
            let lb = b.get(w).copied().unwrap_or(floor_lp);
            SubstituteCandidate {
                word: w.clone(),
                logprob: (la + lb) / 2.0,
                n_subwords: 1,
            }
        })
        .collect::<Vec<_>>();
    Ok(SubstituteSet::from_candidates(
        instance.instance_id.clone(),
        raw,
        Some(k),
    ))
}

/// One line of the substitute dump handed from generation to clustering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstituteRecord {
    pub instance_id: String,
    pub generator: String,
    pub params: serde_json::Value,
    pub candidates: Vec<SubstituteCandidate>,
}

impl SubstituteRecord {
    pub fn into_set(self) -> SubstituteSet {
        SubstituteSet {
            instance_id: self.instance_id,
            candidates: self.candidates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, MockConfig};

    fn tok(s: &str, b: bool, lp: f64) -> PredictedToken {
        PredictedToken::new(s, b, lp)
    }

    #[test]
    fn template_normalizes_whitespace() {
        let t = Template::new("cats  and\t{T}   are cute").unwrap();
        assert_eq!(t.fill("dogs"), "cats and dogs are cute");
        assert!(matches!(Template::new("no slot"), Err(GenerateError::BadTemplate(0))));
        assert!(matches!(Template::new("{T} {T}"), Err(GenerateError::BadTemplate(2))));
    }

    #[test]
    fn dedup_keeps_max_and_lowercases() {
        let s = SubstituteSet::from_candidates(
            "i",
            vec![
                SubstituteCandidate { word: "Cat".into(), logprob: -1.0, n_subwords: 1 },
                SubstituteCandidate { word: "cat".into(), logprob: -0.5, n_subwords: 2 },
                SubstituteCandidate { word: "bat".into(), logprob: -0.5, n_subwords: 1 },
            ],
            None,
        );
        let got: Vec<_> = s.candidates.iter().map(|c| (c.word.as_str(), c.logprob)).collect();
        assert_eq!(got, [("bat", -0.5), ("cat", -0.5)]);
    }

    #[test]
    fn single_mask_concat() {
        let mut cfg = MockConfig::default();
        cfg.insert_masked("a <mask> b", vec![tok("cat", true, -0.2), tok("dog", true, -0.9)]);
        let gw = MockBackend::new(cfg).unwrap();
        let t = Template::new("a {T} b").unwrap();
        let s = concat_generate("i", &t, &ConcatParams::new(2, [1]), &gw).unwrap();
        let got: Vec<_> = s.candidates.iter().map(|c| (c.word.as_str(), c.logprob, c.n_subwords)).collect();
        assert_eq!(got, [("cat", -0.2, 1), ("dog", -0.9, 1)]);
    }

    #[test]
    fn concat_rejects_bad_params() {
        let gw = MockBackend::new(MockConfig::default()).unwrap();
        let t = Template::new("{T}").unwrap();
        assert!(concat_generate("i", &t, &ConcatParams::new(0, [1]), &gw).is_err());
        assert!(concat_generate("i", &t, &ConcatParams::new(2, [4]), &gw).is_err());
    }

    #[test]
    fn empty_backend_gives_empty_set() {
        let gw = MockBackend::new(MockConfig::default()).unwrap();
        let t = Template::new("x {T}").unwrap();
        let s = concat_generate("i", &t, &ConcatParams::new(5, [1, 2]), &gw).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn baseline_averages_and_filters() {
        let inst = Instance {
            instance_id: "i".into(),
            target_lemma: "cat".into(),
            language: "en".into(),
            context: "This cat is cute".into(),
            target_span: (5, 8),
            gold_sense: None,
        };
        let mut cfg = MockConfig::default();
        cfg.insert_position(
            "This cat is cute",
            5,
            vec![tok("x", true, -1.0), tok("y", true, -2.0), tok("##z", false, -2.5)],
        );
        cfg.insert_masked(
            "This cat (or even <mask>) is cute",
            vec![tok("y", true, -2.0), tok("x", true, -3.0)],
        );
        let gw = MockBackend::new(cfg).unwrap();
        let pattern = Pattern::new("or even", "{T} (or even {M})", "{M} (or even {T})").unwrap();
        let s = baseline_generate(&inst, &pattern, 10, DEFAULT_FLOOR, &gw).unwrap();
        let got: Vec<_> = s.candidates.iter().map(|c| (c.word.as_str(), c.logprob)).collect();
        assert_eq!(got, [("x", -2.0), ("y", -2.0)]);
        let s1 = baseline_generate(&inst, &pattern, 1, DEFAULT_FLOOR, &gw).unwrap();
        assert_eq!(s1.len(), 1);
    }
}
