//! Lemmatization of substitutes and per-word TF-IDF matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::substgen::SubstituteSet;

#[derive(Debug, thiserror::Error)]
pub enum VectorizeError {
    #[error("lemma table {path}: {message}")]
    Table { path: String, message: String },
    #[error("external lemmatizer: {0}")]
    External(String),
    #[error("word {0}: every instance has an empty substitute set")]
    AllEmpty(String),
}

/// Maps a surface form to its lemma. Unknown surfaces map to themselves.
pub trait LemmaProvider: Send + Sync {
    fn lemma(&self, surface: &str, language: &str) -> String;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityLemmatizer;

impl LemmaProvider for IdentityLemmatizer {
    fn lemma(&self, surface: &str, _language: &str) -> String {
        surface.to_string()
    }
}

/// Lookup table loaded from `language<TAB>surface<TAB>lemma` lines.
#[derive(Clone, Debug, Default)]
pub struct TableLemmatizer {
    table: HashMap<(String, String), String>,
}

impl TableLemmatizer {
    pub fn insert(&mut self, language: &str, surface: &str, lemma: &str) {
        self.table
            .insert((language.to_string(), surface.to_string()), lemma.to_string());
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, VectorizeError> {
        let mut t = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(VectorizeError::Table {
                    path: origin.into(),
                    message: format!("line {}: expected 3 tab-separated columns", i + 1),
                });
            }
            t.insert(cols[0], cols[1], cols[2]);
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, VectorizeError> {
        let text = std::fs::read_to_string(path).map_err(|e| VectorizeError::Table {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl LemmaProvider for TableLemmatizer {
    fn lemma(&self, surface: &str, language: &str) -> String {
        self.table
            .get(&(language.to_string(), surface.to_string()))
            .cloned()
            .unwrap_or_else(|| surface.to_string())
    }
}

/// Delegates to a child process speaking `lang<TAB>surface` → `lemma` lines.
/// Answers are memoized; a failed call falls back to the surface form.
pub struct ExternalLemmatizer {
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
    memo: Mutex<HashMap<(String, String), String>>,
    child: Mutex<Child>,
}

impl ExternalLemmatizer {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, VectorizeError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| VectorizeError::External(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            io: Mutex::new((stdin, stdout)),
            memo: Mutex::default(),
            child: Mutex::new(child),
        })
    }

    fn ask(&self, surface: &str, language: &str) -> std::io::Result<String> {
        let mut io = self.io.lock().expect("lemmatizer lock");
        writeln!(io.0, "{language}\t{surface}")?;
        io.0.flush()?;
        let mut reply = String::new();
        if io.1.read_line(&mut reply)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "lemmatizer exited",
            ));
        }
        Ok(reply.trim_end_matches(['\r', '\n']).to_string())
    }
}

impl LemmaProvider for ExternalLemmatizer {
    fn lemma(&self, surface: &str, language: &str) -> String {
        let key = (language.to_string(), surface.to_string());
        if let Some(l) = self.memo.lock().expect("memo lock").get(&key) {
            return l.clone();
        }
        let lemma = match self.ask(surface, language) {
            Ok(l) if !l.is_empty() => l,
            Ok(_) => surface.to_string(),
            Err(e) => {
                log::warn!("external lemmatizer failed on {surface:?}: {e}");
                surface.to_string()
            }
        };
        self.memo
            .lock()
            .expect("memo lock")
            .insert(key, lemma.clone());
        lemma
    }
}

impl Drop for ExternalLemmatizer {
    fn drop(&mut self) {
        let child = self.child.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = child.kill();
        let _ = child.wait();
    }
}

/// How each retained substitute contributes to its lemma's term frequency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermWeighting {
    /// Every substitute counts 1.
    #[default]
    Count,
    /// Every substitute counts its probability.
    Probability,
}

/// Lemma term frequencies for one instance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaBag {
    pub instance_id: String,
    pub terms: BTreeMap<String, f64>,
}

pub fn lemmatize_set(
    s: &SubstituteSet,
    language: &str,
    lp: &dyn LemmaProvider,
    weighting: TermWeighting,
) -> LemmaBag {
    let mut terms = BTreeMap::new();
    for c in &s.candidates {
        let w = match weighting {
            TermWeighting::Count => 1.0,
            TermWeighting::Probability => c.logprob.exp(),
        };
        *terms.entry(lp.lemma(&c.word, language)).or_insert(0.0) += w;
    }
    LemmaBag {
        instance_id: s.instance_id.clone(),
        terms,
    }
}

/// Sparse TF-IDF rows over one target word's lemma vocabulary. Non-empty
/// rows are L2-normalized; each row lists `(column, value)` by column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfMatrix {
    pub rows: Vec<String>,
    pub vocab: Vec<String>,
    pub values: Vec<Vec<(usize, f64)>>,
}

impl TfidfMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dot(&self, a: usize, b: usize) -> f64 {
        sparse_dot(&self.values[a], &self.values[b])
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        for &(j, x) in &self.values[i] {
            v[j] = x;
        }
        v
    }
}

pub(crate) fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// TF-IDF with smoothed idf `ln((1 + N) / (1 + df)) + 1`.
pub fn build_tfidf(word: &str, bags: &[LemmaBag]) -> Result<TfidfMatrix, VectorizeError> {
    let vocab: BTreeSet<&str> = bags
        .iter()
        .flat_map(|b| b.terms.iter().filter(|(_, &tf)| tf > 0.0).map(|(l, _)| l.as_str()))
        .collect();
    if vocab.is_empty() {
        return Err(VectorizeError::AllEmpty(word.to_string()));
    }
    let vocab: Vec<String> = vocab.into_iter().map(str::to_string).collect();
    let col: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let n = bags.len() as f64;
    let mut df = vec![0usize; vocab.len()];
    for b in bags {
        for (l, &tf) in &b.terms {
            if tf > 0.0 {
                df[col[l.as_str()]] += 1;
            }
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let values = bags
        .iter()
        .map(|b| {
            let mut row: Vec<(usize, f64)> = b
                .terms
                .iter()
                .filter(|(_, &tf)| tf > 0.0)
                .map(|(l, &tf)| {
                    let j = col[l.as_str()];
                    (j, tf * idf[j])
                })
                .collect();
            row.sort_by_key(|&(j, _)| j);
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, v) in &mut row {
                    *v /= norm;
                }
            }
            row
        })
        .collect();
    Ok(TfidfMatrix {
        rows: bags.iter().map(|b| b.instance_id.clone()).collect(),
        vocab,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substgen::SubstituteCandidate;

    fn set(id: &str, words: &[&str]) -> SubstituteSet {
        SubstituteSet {
            instance_id: id.into(),
            candidates: words
                .iter()
                .enumerate()
                .map(|(i, w)| SubstituteCandidate {
                    word: w.to_string(),
                    logprob: -(i as f64) - 1.0,
                    n_subwords: 1,
                })
                .collect(),
        }
    }

    fn bag(id: &str, terms: &[(&str, f64)]) -> LemmaBag {
        LemmaBag {
            instance_id: id.into(),
            terms: terms.iter().map(|(w, c)| (w.to_string(), *c)).collect(),
        }
    }

    #[test]
    fn table_merges_duplicates() {
        let mut t = TableLemmatizer::default();
        t.insert("en", "cats", "cat");
        let b = lemmatize_set(&set("i", &["cats", "cat", "dogs"]), "en", &t, TermWeighting::Count);
        assert_eq!(b.terms.get("cat"), Some(&2.0));
        assert_eq!(b.terms.get("dogs"), Some(&1.0));
    }

    #[test]
    fn empty_table_is_identity() {
        let s = set("i", &["a", "b"]);
        let t = TableLemmatizer::default();
        let b = lemmatize_set(&s, "en", &t, TermWeighting::Count);
        assert_eq!(b.terms.keys().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(
            lemmatize_set(&s, "en", &IdentityLemmatizer, TermWeighting::Count),
            b
        );
    }

    #[test]
    fn probability_weighting() {
        let b = lemmatize_set(&set("i", &["a"]), "en", &IdentityLemmatizer, TermWeighting::Probability);
        assert!((b.terms["a"] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn table_parse_errors() {
        assert!(TableLemmatizer::parse("en\tcats\tcat\nru\tкоты\tкот\n", "m").unwrap().len() == 2);
        assert!(TableLemmatizer::parse("en cats cat\n", "m").is_err());
    }

    #[test]
    fn shared_lemma_gets_unit_idf() {
        let m = build_tfidf("w", &[bag("a", &[("x", 1.0)]), bag("b", &[("x", 1.0)])]).unwrap();
        assert_eq!(m.values, vec![vec![(0, 1.0)], vec![(0, 1.0)]]);
    }

    #[test]
    fn single_row_unit_norm() {
        let m = build_tfidf("w", &[bag("a", &[("x", 2.0), ("y", 1.0)])]).unwrap();
        let norm: f64 = m.values[0].iter().map(|(_, v)| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_empty_is_an_error() {
        assert!(matches!(
            build_tfidf("w", &[bag("a", &[]), bag("b", &[])]),
            Err(VectorizeError::AllEmpty(_))
        ));
    }

    #[test]
    fn disjoint_rows_are_orthogonal() {
        let m = build_tfidf(
            "w",
            &[bag("a", &[("x", 1.0)]), bag("b", &[("y", 1.0)]), bag("c", &[])],
        )
        .unwrap();
        assert_eq!(m.dot(0, 1), 0.0);
        assert!(m.values[2].is_empty());
        assert_eq!(m.vocab, ["x", "y"]);
    }
}
