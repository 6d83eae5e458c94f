//! Instances, datasets and sense clusterings, plus ingestion of the canonical
//! JSONL format and of Senseval-style lexical-sample XML.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

/// Errors raised while loading or transforming datasets.
#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance {instance_id}: target span {start}..{end} out of bounds for context of {len} characters")]
    SpanOutOfBounds {
        instance_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("instance {0}: target span selects an empty string")]
    EmptyTarget(String),
    #[error("duplicate instance id {0}")]
    DuplicateId(String),
    #[error("instance {0} has no gold sense")]
    MissingGoldSense(String),
}

/// One occurrence of a target word in context.
///
/// `target_span` is a half-open pair of *character* offsets into `context`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub target_lemma: String,
    pub language: String,
    pub context: String,
    pub target_span: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sense: Option<String>,
}

impl Instance {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let len = self.context.chars().count();
        let (start, end) = self.target_span;
        if start > end || end > len {
            return Err(DatasetError::SpanOutOfBounds {
                instance_id: self.instance_id.clone(),
                start,
                end,
                len,
            });
        }
        if start == end {
            return Err(DatasetError::EmptyTarget(self.instance_id.clone()));
        }
        Ok(())
    }

    /// Text before the target, the target surface, and text after it.
    pub fn split_context(&self) -> (&str, &str, &str) {
        let (start, end) = self.target_span;
        let b0 = char_to_byte(&self.context, start);
        let b1 = char_to_byte(&self.context, end);
        (
            &self.context[..b0],
            &self.context[b0..b1],
            &self.context[b1..],
        )
    }

    pub fn target_surface(&self) -> &str {
        self.split_context().1
    }
}

pub(crate) fn char_to_byte(s: &str, char_idx: usize) -> usize {
    s.char_indices()
        .nth(char_idx)
        .map(|(b, _)| b)
        .unwrap_or(s.len())
}

/// A named, ordered collection of instances with a per-word index.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    instances: Vec<Instance>,
    words: BTreeMap<String, Vec<usize>>,
    /// Ids of instances whose context exceeds the configured length limit.
    pub over_length: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub instances: usize,
    pub words: usize,
    pub instances_per_word: f64,
    /// Mean number of distinct gold senses per word, over words with gold labels.
    pub senses_per_word: Option<f64>,
}

/// Input file formats understood by [`load_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    CanonicalJsonl,
    SensevalXmlAdapter,
}

impl Dataset {
    /// Builds a dataset, checking every instance invariant and id uniqueness.
    pub fn new(name: impl Into<String>, instances: Vec<Instance>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for inst in &instances {
            inst.validate()?;
            if !seen.insert(inst.instance_id.as_str()) {
                return Err(DatasetError::DuplicateId(inst.instance_id.clone()));
            }
        }
        let mut words: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, inst) in instances.iter().enumerate() {
            words.entry(inst.target_lemma.clone()).or_default().push(i);
        }
        Ok(Self {
            name: name.into(),
            instances,
            words,
            over_length: Vec::new(),
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Target lemmas in lexicographic order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.keys().map(String::as_str)
    }

    pub fn word_instances(&self, word: &str) -> Vec<&Instance> {
        self.words
            .get(word)
            .map(|ix| ix.iter().map(|&i| &self.instances[i]).collect())
            .unwrap_or_default()
    }

    pub fn get(&self, instance_id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }

    /// Flags instances whose context is longer than `max_chars` characters.
    pub fn flag_over_length(&mut self, max_chars: usize) {
        self.over_length = self
            .instances
            .iter()
            .filter(|i| i.context.chars().count() > max_chars)
            .map(|i| i.instance_id.clone())
            .collect();
    }

    pub fn summary(&self) -> DatasetSummary {
        let n_words = self.words.len();
        let mut sense_counts = Vec::new();
        for idx in self.words.values() {
            let senses: HashSet<&str> = idx
                .iter()
                .filter_map(|&i| self.instances[i].gold_sense.as_deref())
                .collect();
            if !senses.is_empty() {
                sense_counts.push(senses.len());
            }
        }
        DatasetSummary {
            instances: self.instances.len(),
            words: n_words,
            instances_per_word: if n_words == 0 {
                0.0
            } else {
                self.instances.len() as f64 / n_words as f64
            },
            senses_per_word: if sense_counts.is_empty() {
                None
            } else {
                Some(sense_counts.iter().sum::<usize>() as f64 / sense_counts.len() as f64)
            },
        }
    }

    /// Serializes as canonical JSONL, one instance per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| io_err(path, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a dataset from disk. The dataset name is the file stem.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match format {
        DatasetFormat::CanonicalJsonl => parse_jsonl(&name, &text),
        DatasetFormat::SensevalXmlAdapter => parse_senseval_xml(&name, &text),
    }
}

pub fn parse_jsonl(name: &str, text: &str) -> Result<Dataset, DatasetError> {
    let mut instances = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        instances.push(inst);
    }
    Dataset::new(name, instances)
}

/// Parses Senseval lexical-sample XML:
///
/// ```text
/// <corpus lang="en">
///   <lexelt item="bank.n">
///     <instance id="bank.n.1">
///       <answer instance="bank.n.1" senseid="bank%shore"/>
///       <context>He sat on the <head>bank</head> of the river</context>
///     </instance>
///   </lexelt>
/// </corpus>
/// ```
///
/// A POS suffix on the `item` attribute (`bank.n`) is stripped to form the
/// lemma. Only the first `<answer>` of an instance is kept.
pub fn parse_senseval_xml(name: &str, text: &str) -> Result<Dataset, DatasetError> {
    let mut reader = Reader::from_str(text);
    let mut language = String::from("en");
    let mut lemma = String::new();
    let mut current: Option<XmlInstance> = None;
    let mut in_context = false;
    let mut instances = Vec::new();

    let line_of = |pos: u64| text[..(pos as usize).min(text.len())].matches('\n').count() + 1;

    loop {
        let pos = reader.buffer_position();
        let event = reader.read_event().map_err(|e| DatasetError::Parse {
            line: line_of(pos),
            message: e.to_string(),
        })?;
        let attr = |e: &quick_xml::events::BytesStart, key: &[u8]| -> Option<String> {
            e.attributes()
                .flatten()
                .find(|a| a.key.as_ref() == key)
                .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
        };
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => match e.name().as_ref() {
                b"corpus" => {
                    if let Some(l) = attr(e, b"lang") {
                        language = l;
                    }
                }
                b"lexelt" => {
                    let item = attr(e, b"item").unwrap_or_default();
                    lemma = strip_pos(&item).to_string();
                }
                b"instance" => {
                    let id = attr(e, b"id").ok_or_else(|| DatasetError::Parse {
                        line: line_of(pos),
                        message: "instance without id".into(),
                    })?;
                    current = Some(XmlInstance {
                        id,
                        ..Default::default()
                    });
                }
                b"answer" => {
                    if let Some(cur) = current.as_mut() {
                        if cur.sense.is_none() {
                            cur.sense = attr(e, b"senseid");
                        }
                    }
                }
                b"context" => in_context = true,
                b"head" => {
                    if let Some(cur) = current.as_mut() {
                        cur.head_start = Some(cur.context.chars().count());
                    }
                }
                _ => {}
            },
            Event::Text(t) => {
                if in_context {
                    if let Some(cur) = current.as_mut() {
                        let s = t.unescape().map_err(|e| DatasetError::Parse {
                            line: line_of(pos),
                            message: e.to_string(),
                        })?;
                        cur.context.push_str(&s);
                    }
                }
            }
            Event::End(ref e) => match e.name().as_ref() {
                b"head" => {
                    if let Some(cur) = current.as_mut() {
                        cur.head_end = Some(cur.context.chars().count());
                    }
                }
                b"context" => in_context = false,
                b"instance" => {
                    let cur = current.take().unwrap_or_default();
                    let (start, end) = match (cur.head_start, cur.head_end) {
                        (Some(s), Some(e)) => (s, e),
                        _ => {
                            return Err(DatasetError::Parse {
                                line: line_of(pos),
                                message: format!("instance {} has no <head> element", cur.id),
                            })
                        }
                    };
                    // Collapse layout whitespace while keeping the span aligned.
                    let (context, span) = normalize_ws(&cur.context, (start, end));
                    instances.push(Instance {
                        instance_id: cur.id,
                        target_lemma: lemma.clone(),
                        language: language.clone(),
                        context,
                        target_span: span,
                        gold_sense: cur.sense,
                    });
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    Dataset::new(name, instances)
}

#[derive(Default)]
struct XmlInstance {
    id: String,
    sense: Option<String>,
    context: String,
    head_start: Option<usize>,
    head_end: Option<usize>,
}

fn strip_pos(item: &str) -> &str {
    match item.rsplit_once('.') {
        Some((head, pos)) if pos.len() == 1 && pos.chars().all(|c| c.is_ascii_alphabetic()) => head,
        _ => item,
    }
}

/// Collapses whitespace runs to single spaces and trims, remapping a char span.
fn normalize_ws(text: &str, span: (usize, usize)) -> (String, (usize, usize)) {
    let mut out = String::new();
    let mut map = Vec::with_capacity(text.chars().count() + 1);
    let mut out_len = 0usize;
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            map.push(out_len);
            pending_space = out_len > 0;
            continue;
        }
        if pending_space {
            out.push(' ');
            out_len += 1;
            pending_space = false;
        }
        map.push(out_len);
        out.push(c);
        out_len += 1;
    }
    map.push(out_len);
    let start = map[span.0];
    // End maps to one past the last character of the span.
    let end = if span.1 > span.0 { map[span.1 - 1] + 1 } else { start };
    (out, (start, end.min(out_len)))
}

/// Replaces gold sense labels with opaque per-word cluster labels `"0"`, `"1"`, ...
/// assigned in order of first occurrence.
pub fn convert_wsd_to_wsi(d: &Dataset) -> Result<Dataset, DatasetError> {
    let mut per_word: HashMap<&str, HashMap<&str, usize>> = HashMap::new();
    let mut out = Vec::with_capacity(d.len());
    for inst in d.instances() {
        let sense = inst
            .gold_sense
            .as_deref()
            .ok_or_else(|| DatasetError::MissingGoldSense(inst.instance_id.clone()))?;
        let table = per_word.entry(inst.target_lemma.as_str()).or_default();
        let next = table.len();
        let label = *table.entry(sense).or_insert(next);
        let mut converted = inst.clone();
        converted.gold_sense = Some(label.to_string());
        out.push(converted);
    }
    let mut ds = Dataset::new(d.name.clone(), out)?;
    ds.over_length = d.over_length.clone();
    Ok(ds)
}

/// Keeps only words with at least `min_senses` distinct gold senses and at
/// least `min_instances` instances. Instances without a gold sense do not
/// contribute a sense.
pub fn filter_dataset(d: &Dataset, min_senses: usize, min_instances: usize) -> Dataset {
    let keep: HashSet<&str> = d
        .words
        .iter()
        .filter(|(_, idx)| {
            let senses: HashSet<&str> = idx
                .iter()
                .filter_map(|&i| d.instances[i].gold_sense.as_deref())
                .collect();
            senses.len() >= min_senses && idx.len() >= min_instances
        })
        .map(|(w, _)| w.as_str())
        .collect();
    let instances: Vec<Instance> = d
        .instances
        .iter()
        .filter(|i| keep.contains(i.target_lemma.as_str()))
        .cloned()
        .collect();
    let over_length = d
        .over_length
        .iter()
        .filter(|id| instances.iter().any(|i| &i.instance_id == *id))
        .cloned()
        .collect();
    let mut out = Dataset::new(d.name.clone(), instances).expect("subset of a valid dataset");
    out.over_length = over_length;
    out
}

/// Per-word clustering of instances into senses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenseClustering {
    pub word: String,
    pub assignments: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft: Option<BTreeMap<String, BTreeMap<usize, f64>>>,
}

impl SenseClustering {
    pub fn hard(word: impl Into<String>, assignments: BTreeMap<String, usize>) -> Self {
        Self {
            word: word.into(),
            assignments,
            soft: None,
        }
    }

    /// Checks that soft weights sum to one and agree with the hard argmax.
    pub fn is_consistent(&self) -> bool {
        let Some(soft) = &self.soft else { return true };
        soft.iter().all(|(id, weights)| {
            let total: f64 = weights.values().sum();
            let argmax = weights
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(c, _)| *c);
            (total - 1.0).abs() <= 1e-9
                && weights.values().all(|w| (0.0..=1.0).contains(w))
                && self.assignments.get(id).copied() == argmax
        })
    }
}
