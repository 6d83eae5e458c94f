//! Interpretation helpers: sense-discriminative substitutes, taxonomy
//! relations between targets and substitutes, and script checks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::substgen::SubstituteSet;
use crate::vectorize::LemmaBag;

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("synset {from} has a hypernym edge to unknown synset {to}")]
    DanglingEdge { from: String, to: String },
    #[error("hypernym cycle through synset {0}")]
    Cycle(String),
    #[error("duplicate synset {0}")]
    Duplicate(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ranks lemmas per gold sense by `count_in_sense / (count_elsewhere + 1)`.
/// Ties are broken by lemma.
pub fn discriminative_substitutes(
    bags: &[LemmaBag],
    gold: &BTreeMap<String, String>,
    top_n: usize,
) -> BTreeMap<String, Vec<(String, f64)>> {
    let mut per_sense: BTreeMap<&str, HashMap<&str, f64>> = BTreeMap::new();
    let mut totals: HashMap<&str, f64> = HashMap::new();
    for b in bags {
        let Some(sense) = gold.get(&b.instance_id) else { continue };
        let counts = per_sense.entry(sense.as_str()).or_default();
        for (lemma, &c) in &b.terms {
            *counts.entry(lemma.as_str()).or_default() += c;
            *totals.entry(lemma.as_str()).or_default() += c;
        }
    }
    per_sense
        .into_iter()
        .map(|(sense, counts)| {
            let mut ranked: Vec<(String, f64)> = counts
                .into_iter()
                .map(|(lemma, c)| (lemma.to_string(), c / (totals[lemma] - c + 1.0)))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(top_n);
            (sense.to_string(), ranked)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SynsetRecord {
    synset: String,
    lemmas: Vec<String>,
    #[serde(default)]
    hypernyms: Vec<String>,
}

/// Synsets with lemma membership and hypernym edges (acyclic).
#[derive(Clone, Debug, Default)]
pub struct TaxonomyGraph {
    ids: Vec<String>,
    hypernyms: Vec<Vec<usize>>,
    by_lemma: HashMap<String, Vec<usize>>,
}

/// Relation classes in priority order: the first that holds wins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Synonym,
    DirectHyponym,
    DirectHypernym,
    CoHyponym,
    TransitiveHyponym,
    TransitiveHypernym,
    CoHyponym3,
    Unknown,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::Synonym,
        Relation::DirectHyponym,
        Relation::DirectHypernym,
        Relation::CoHyponym,
        Relation::TransitiveHyponym,
        Relation::TransitiveHypernym,
        Relation::CoHyponym3,
        Relation::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Synonym => "synonym",
            Relation::DirectHyponym => "direct_hyponym",
            Relation::DirectHypernym => "direct_hypernym",
            Relation::CoHyponym => "co_hyponym",
            Relation::TransitiveHyponym => "transitive_hyponym",
            Relation::TransitiveHypernym => "transitive_hypernym",
            Relation::CoHyponym3 => "co_hyponym_3",
            Relation::Unknown => "unknown",
        }
    }
}

impl TaxonomyGraph {
    /// Parses JSONL records `{"synset": id, "lemmas": [...], "hypernyms": [ids]}`.
    pub fn from_jsonl(text: &str) -> Result<Self, TaxonomyError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: SynsetRecord = serde_json::from_str(line).map_err(|e| TaxonomyError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        let mut index = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.synset.clone(), i).is_some() {
                return Err(TaxonomyError::Duplicate(r.synset.clone()));
            }
        }
        let mut g = TaxonomyGraph::default();
        for (i, r) in records.iter().enumerate() {
            g.ids.push(r.synset.clone());
            let mut hyps = Vec::new();
            for h in &r.hypernyms {
                let &j = index.get(h).ok_or_else(|| TaxonomyError::DanglingEdge {
                    from: r.synset.clone(),
                    to: h.clone(),
                })?;
                hyps.push(j);
            }
            g.hypernyms.push(hyps);
            for l in &r.lemmas {
                g.by_lemma.entry(l.clone()).or_default().push(i);
            }
        }
        g.check_acyclic()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_jsonl(&text)
    }

    fn check_acyclic(&self) -> Result<(), TaxonomyError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.ids.len()];
        for start in 0..self.ids.len() {
            if state[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            state[start] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&h) = self.hypernyms[node].get(*next) {
                    *next += 1;
                    match state[h] {
                        0 => {
                            state[h] = 1;
                            stack.push((h, 0));
                        }
                        1 => return Err(TaxonomyError::Cycle(self.ids[h].clone())),
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.by_lemma.contains_key(lemma)
    }

    fn synsets(&self, lemma: &str) -> &[usize] {
        self.by_lemma.get(lemma).map_or(&[], Vec::as_slice)
    }

    /// Ancestors of `s` at exactly `depth` hypernym steps.
    fn ancestors_at(&self, s: usize, depth: usize) -> HashSet<usize> {
        let mut frontier: HashSet<usize> = [s].into();
        for _ in 0..depth {
            frontier = frontier
                .iter()
                .flat_map(|&x| self.hypernyms[x].iter().copied())
                .collect();
        }
        frontier
    }

    /// Ancestors of `s` reachable in 2..=max_depth steps.
    fn transitive_ancestors(&self, s: usize, max_depth: usize) -> HashSet<usize> {
        let mut out = HashSet::new();
        let mut frontier: HashSet<usize> = [s].into();
        for depth in 1..=max_depth {
            frontier = frontier
                .iter()
                .flat_map(|&x| self.hypernyms[x].iter().copied())
                .collect();
            if depth >= 2 {
                out.extend(frontier.iter().copied());
            }
            if frontier.is_empty() {
                break;
            }
        }
        out
    }

    /// Relation of `substitute` to `target`, reading "target is a ... of
    /// substitute" (`onion`, `vegetable` is a direct hyponym).
    pub fn classify_relation(&self, target: &str, substitute: &str, max_depth: usize) -> Relation {
        let ts = self.synsets(target);
        let ss = self.synsets(substitute);
        if ts.is_empty() || ss.is_empty() {
            return Relation::Unknown;
        }
        let sset: HashSet<usize> = ss.iter().copied().collect();
        let tset: HashSet<usize> = ts.iter().copied().collect();
        if ts.iter().any(|t| sset.contains(t)) {
            return Relation::Synonym;
        }
        let parents = |xs: &[usize]| -> HashSet<usize> {
            xs.iter().flat_map(|&x| self.hypernyms[x].iter().copied()).collect()
        };
        let tp = parents(ts);
        let sp = parents(ss);
        if tp.iter().any(|p| sset.contains(p)) {
            return Relation::DirectHyponym;
        }
        if sp.iter().any(|p| tset.contains(p)) {
            return Relation::DirectHypernym;
        }
        if tp.intersection(&sp).next().is_some() {
            return Relation::CoHyponym;
        }
        if ts
            .iter()
            .any(|&t| self.transitive_ancestors(t, max_depth).iter().any(|a| sset.contains(a)))
        {
            return Relation::TransitiveHyponym;
        }
        if ss
            .iter()
            .any(|&s| self.transitive_ancestors(s, max_depth).iter().any(|a| tset.contains(a)))
        {
            return Relation::TransitiveHypernym;
        }
        let grand = |xs: &[usize]| -> HashSet<usize> {
            xs.iter().flat_map(|&x| self.ancestors_at(x, 2)).collect()
        };
        if grand(ts).intersection(&grand(ss)).next().is_some() {
            return Relation::CoHyponym3;
        }
        Relation::Unknown
    }
}

/// Counts and fractions of relation classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationHistogram {
    pub counts: BTreeMap<String, usize>,
    pub fractions: BTreeMap<String, f64>,
    pub total: usize,
}

/// Classifies `(target, substitute, in_top20)` pairs, counting only the
/// pairs flagged as top-20.
pub fn relation_distribution(
    pairs: &[(String, String, bool)],
    tax: &TaxonomyGraph,
    max_depth: usize,
) -> RelationHistogram {
    let mut counts: BTreeMap<String, usize> =
        Relation::ALL.iter().map(|r| (r.name().to_string(), 0)).collect();
    let mut total = 0;
    for (t, s, top) in pairs {
        if !top {
            continue;
        }
        *counts
            .get_mut(tax.classify_relation(t, s, max_depth).name())
            .expect("every class present") += 1;
        total += 1;
    }
    let fractions = counts
        .iter()
        .map(|(k, &c)| (k.clone(), if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect();
    RelationHistogram {
        counts,
        fractions,
        total,
    }
}

/// Builds the top-`n` flagged pairs from substitute sets.
pub fn top_n_pairs(target: &str, sets: &[SubstituteSet], n: usize) -> Vec<(String, String, bool)> {
    sets.iter()
        .flat_map(|s| {
            s.candidates
                .iter()
                .enumerate()
                .map(move |(i, c)| (target.to_string(), c.word.clone(), i < n))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    Latin,
    Cyrillic,
    Greek,
    Arabic,
    Hebrew,
    Devanagari,
}

impl Script {
    pub fn contains(self, c: char) -> bool {
        let u = c as u32;
        match self {
            Script::Latin => {
                c.is_ascii_alphabetic()
                    || matches!(u, 0x00C0..=0x00D6 | 0x00D8..=0x00F6 | 0x00F8..=0x024F)
                    || matches!(u, 0x1E00..=0x1EFF | 0x2C60..=0x2C7F | 0xA720..=0xA7FF)
            }
            Script::Cyrillic => matches!(u, 0x0400..=0x052F | 0x1C80..=0x1C8F | 0x2DE0..=0x2DFF | 0xA640..=0xA69F),
            Script::Greek => matches!(u, 0x0370..=0x03FF | 0x1F00..=0x1FFF),
            Script::Arabic => matches!(u, 0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF),
            Script::Hebrew => matches!(u, 0x0590..=0x05FF),
            Script::Devanagari => matches!(u, 0x0900..=0x097F),
        }
    }
}

/// Fraction of substitutes whose alphabetic characters all belong to
/// `script`. Words without letters count as matching.
pub fn substitute_language_share<'a>(
    words: impl IntoIterator<Item = &'a str>,
    script: Script,
) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for w in words {
        total += 1;
        if w.chars().filter(|c| c.is_alphabetic()).all(|c| script.contains(c)) {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Share of gold substitutes found among the top `k` candidates.
pub fn recall_at_k(candidates: &SubstituteSet, gold: &BTreeSet<String>, k: usize) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let found = candidates
        .words()
        .take(k)
        .filter(|w| gold.contains(*w))
        .count();
    found as f64 / gold.len() as f64
}
