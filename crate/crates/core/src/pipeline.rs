//! Run configuration and stage orchestration.
//!
//! Stages: generate → inject → lemmatize → vectorize → cluster → evaluate.
//! Each stage reads and writes the JSONL dumps defined by the owning modules,
//! so running stages one at a time gives the same report as [`run_pipeline`].
//!
//! Run directory layout:
//!
//! ```text
//! <run>/substitutes.jsonl   one SubstituteRecord per instance
//! <run>/clusters.jsonl      one ClusterRecord per instance
//! <run>/report.json         per-word and aggregate metrics
//! <run>/report.txt          the same as a table
//! <run>/manifest.json       config hash, input hashes, crate version
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{hard_to_soft, select_clustering, ClusterError};
use crate::dataset::{
    convert_wsd_to_wsi, filter_dataset, load_dataset, Dataset, DatasetError, DatasetFormat,
    Instance,
};
use crate::gateway::{CacheBackend, GatewayError, MlmBackend, MockBackend, SidecarBackend};
use crate::inject::{
    embs_rerank, instantiate_pattern, sdp_combine, EmbeddingError, EmbeddingTable, PatternCatalog,
    PatternError, PatternSide,
};
use crate::metrics::{
    aggregate, ari, max_ari_over_cuts, paired_fscore, v_measure, Aggregate, MetricError,
    WordScores,
};
use crate::plot;
use crate::substgen::{
    baseline_generate, concat_generate, wcm_generate, ConcatParams, GenerateError,
    SubstituteRecord, SubstituteSet, Template, Truncation, WcmParams,
};
use crate::vectorize::{
    build_tfidf, lemmatize_set, ExternalLemmatizer, IdentityLemmatizer, LemmaProvider,
    TableLemmatizer, TermWeighting, VectorizeError,
};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Process exit code: 1 usage/configuration, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Gateway(_) | Error::Generate(GenerateError::Gateway(_)) => 3,
            _ => 2,
        }
    }
}

/// A stage failure, naming the stage.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

fn stage<T>(name: &'static str, r: Result<T, Error>) -> Result<T, StageError> {
    r.map_err(|source| StageError { stage: name, source })
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
    let context = context.into();
    move |source| Error::Io { context, source }
}

fn json_err(context: impl Into<String>) -> impl FnOnce(serde_json::Error) -> Error {
    let context = context.into();
    move |source| Error::Json { context, source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Concat,
    Wcm,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Symmetric pattern in the instance's own language.
    Sdp,
    /// Symmetric pattern always taken from `pattern_language`.
    SdpFixedLanguage,
    Embs,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Mock { config: PathBuf },
    /// Replay cache; with `inner` set, misses go to that backend.
    Cache {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inner: Option<Box<BackendSpec>>,
    },
    Sidecar { address: String },
    SidecarProcess { command: Vec<String> },
}

impl BackendSpec {
    pub fn build(&self) -> Result<Box<dyn MlmBackend>, GatewayError> {
        Ok(match self {
            BackendSpec::Mock { config } => Box::new(MockBackend::from_file(config)?),
            BackendSpec::Cache { path, inner } => {
                let inner = inner.as_ref().map(|s| s.build()).transpose()?;
                Box::new(CacheBackend::open(path, inner)?)
            }
            BackendSpec::Sidecar { address } => Box::new(SidecarBackend::connect_tcp(address.as_str())?),
            BackendSpec::SidecarProcess { command } => {
                let (prog, args) = command
                    .split_first()
                    .ok_or_else(|| GatewayError::Config("empty sidecar command".into()))?;
                Box::new(SidecarBackend::spawn(prog, args)?)
            }
        })
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            BackendSpec::Mock { config } => vec![config.as_path()],
            // The cache grows during a run; hash only what the run depends on.
            BackendSpec::Cache { inner, .. } => inner.as_ref().map(|i| i.files()).unwrap_or_default(),
            _ => vec![],
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            BackendSpec::Mock { config } => *config = base.join(&*config),
            BackendSpec::Cache { path, inner } => {
                *path = base.join(&*path);
                if let Some(i) = inner {
                    i.resolve(base);
                }
            }
            BackendSpec::SidecarProcess { .. } | BackendSpec::Sidecar { .. } => {}
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LemmaSpec {
    #[default]
    Identity,
    Table { path: PathBuf },
    External { command: Vec<String> },
}

impl LemmaSpec {
    pub fn build(&self) -> Result<Box<dyn LemmaProvider>, VectorizeError> {
        Ok(match self {
            LemmaSpec::Identity => Box::new(IdentityLemmatizer),
            LemmaSpec::Table { path } => Box::new(TableLemmatizer::load(path)?),
            LemmaSpec::External { command } => {
                let (prog, args) = command
                    .split_first()
                    .ok_or_else(|| VectorizeError::External("empty command".into()))?;
                Box::new(ExternalLemmatizer::spawn(prog, args)?)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseFilter {
    pub min_senses: usize,
    pub min_instances: usize,
}

fn default_pattern() -> String {
    "or even".into()
}
fn default_mask_counts() -> BTreeSet<usize> {
    [1, 2, 3].into()
}
fn default_max_subwords() -> usize {
    3
}
fn default_c_min() -> usize {
    2
}
fn default_c_max() -> usize {
    9
}
fn default_temperature() -> f64 {
    0.1
}
fn default_floor() -> f64 {
    crate::substgen::DEFAULT_FLOOR
}
fn default_workers() -> usize {
    1
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_format")]
    pub dataset_format: DatasetFormat,
    pub generator: GeneratorKind,
    pub injection: Injection,
    #[serde(default = "default_pattern")]
    pub pattern: String,
    /// Language of the pattern for `sdp_fixed_language`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_language: Option<String>,
    /// Pattern catalog file; the built-in English catalog when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patterns: Option<PathBuf>,
    /// Substitutes kept per instance; 150 for SDP-style runs, 20 for +embs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_mask_counts")]
    pub mask_counts: BTreeSet<usize>,
    #[serde(default = "default_max_subwords")]
    pub max_subwords: usize,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default = "default_c_min")]
    pub c_min: usize,
    #[serde(default = "default_c_max")]
    pub c_max: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    pub backend: BackendSpec,
    #[serde(default)]
    pub lemmas: LemmaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub term_weighting: TermWeighting,
    /// Replace gold senses with per-word cluster labels before evaluation.
    #[serde(default)]
    pub convert_senses: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<SenseFilter>,
    /// Contexts longer than this many characters are flagged at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context_chars: Option<usize>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_format() -> DatasetFormat {
    DatasetFormat::CanonicalJsonl
}

impl RunConfig {
    /// A config with defaults for everything but the inputs.
    pub fn new(dataset: impl Into<PathBuf>, generator: GeneratorKind, injection: Injection, backend: BackendSpec) -> Self {
        Self {
            dataset: dataset.into(),
            dataset_format: default_format(),
            generator,
            injection,
            pattern: default_pattern(),
            pattern_language: None,
            patterns: None,
            k: None,
            mask_counts: default_mask_counts(),
            max_subwords: default_max_subwords(),
            truncation: Truncation::default(),
            c_min: default_c_min(),
            c_max: default_c_max(),
            temperature: default_temperature(),
            floor: default_floor(),
            backend,
            lemmas: LemmaSpec::Identity,
            embeddings: None,
            term_weighting: TermWeighting::Count,
            convert_senses: false,
            filter: None,
            max_context_chars: None,
            workers: default_workers(),
        }
    }

    /// Loads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::load_with(path, &[])
    }

    /// Loads a config and applies `field=value` overrides first. Values are
    /// parsed as JSON, falling back to a plain string.
    pub fn load_with(path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{}: {e}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| bad(&e))?;
        let mut raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        let obj = raw
            .as_object_mut()
            .ok_or_else(|| bad(&"config must be a JSON object"))?;
        for o in overrides {
            let (field, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not FIELD=VALUE")))?;
            let value = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::from(value));
            obj.insert(field.trim().to_string(), value);
        }
        let mut cfg: RunConfig = serde_json::from_value(raw).map_err(|e| bad(&e))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.dataset = base.join(&self.dataset);
        if let Some(p) = &mut self.patterns {
            *p = base.join(&*p);
        }
        if let Some(p) = &mut self.embeddings {
            *p = base.join(&*p);
        }
        if let LemmaSpec::Table { path } = &mut self.lemmas {
            *path = base.join(&*path);
        }
        self.backend.resolve(base);
    }

    pub fn effective_k(&self) -> usize {
        self.k.unwrap_or(match self.injection {
            Injection::Embs => 20,
            _ => 150,
        })
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.injection == Injection::Embs && self.embeddings.is_none() {
            return bad("injection \"embs\" requires an embedding table");
        }
        if self.generator == GeneratorKind::Baseline && self.injection != Injection::None {
            return bad("the baseline generator takes a single pattern; set injection to \"none\"");
        }
        if self.injection == Injection::SdpFixedLanguage && self.pattern_language.is_none() {
            return bad("injection \"sdp_fixed_language\" requires pattern_language");
        }
        if self.effective_k() == 0 {
            return bad("k must be at least 1");
        }
        if self.c_min < 2 || self.c_max < self.c_min {
            return bad("cluster range must satisfy 2 <= c_min <= c_max");
        }
        if self.mask_counts.is_empty() || self.mask_counts.iter().any(|m| !(1..=3).contains(m)) {
            return bad("mask_counts must be a non-empty subset of {1, 2, 3}");
        }
        if self.max_subwords == 0 {
            return bad("max_subwords must be at least 1");
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return bad("temperature must be positive");
        }
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return bad("floor must be in (0, 1]");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn generator_name(&self) -> String {
        let g = match self.generator {
            GeneratorKind::Concat => "concat",
            GeneratorKind::Wcm => "wcm",
            GeneratorKind::Baseline => "baseline",
        };
        let i = match self.injection {
            Injection::Sdp => "+sdp",
            Injection::SdpFixedLanguage => "+sdp_fixed",
            Injection::Embs => "+embs",
            Injection::None => "",
        };
        format!("{g}{i}")
    }

    fn generator_params(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.effective_k(),
            "mask_counts": self.mask_counts,
            "max_subwords": self.max_subwords,
            "pattern": self.pattern,
            "pattern_language": self.pattern_language,
            "temperature": self.temperature,
            "floor": self.floor,
            "truncation": self.truncation,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loaded inputs shared by the stages.
pub struct Resources {
    pub dataset: Dataset,
    pub backend: Box<dyn MlmBackend>,
    pub catalog: PatternCatalog,
    pub embeddings: Option<EmbeddingTable>,
    pub lemmas: Box<dyn LemmaProvider>,
}

pub fn load_dataset_for(cfg: &RunConfig) -> Result<Dataset, Error> {
    let mut d = load_dataset(&cfg.dataset, cfg.dataset_format)?;
    if let Some(f) = cfg.filter {
        d = filter_dataset(&d, f.min_senses, f.min_instances);
    }
    if cfg.convert_senses {
        d = convert_wsd_to_wsi(&d)?;
    }
    if let Some(max) = cfg.max_context_chars {
        d.flag_over_length(max);
        if !d.over_length.is_empty() {
            log::warn!("{} instances exceed {max} characters: {:?}", d.over_length.len(), d.over_length);
        }
    }
    Ok(d)
}

impl Resources {
    pub fn load(cfg: &RunConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let dataset = load_dataset_for(cfg)?;
        let catalog = match &cfg.patterns {
            Some(p) => PatternCatalog::load(p)?,
            None => PatternCatalog::english(),
        };
        let embeddings = match &cfg.embeddings {
            Some(p) => {
                let lang = dataset.instances().first().map_or("en", |i| i.language.as_str());
                Some(EmbeddingTable::load(lang, p)?)
            }
            None => None,
        };
        Ok(Self {
            dataset,
            backend: cfg.backend.build()?,
            catalog,
            embeddings,
            lemmas: cfg.lemmas.build()?,
        })
    }
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// Substitutes for one instance under the configured generator and injection.
pub fn substitutes_for(
    cfg: &RunConfig,
    inst: &Instance,
    backend: &dyn MlmBackend,
    catalog: &PatternCatalog,
    embeddings: Option<&EmbeddingTable>,
) -> Result<SubstituteSet, Error> {
    let k = cfg.effective_k();
    let id = inst.instance_id.as_str();
    let generate = |template: &Template, k: usize, truncation: Truncation| -> Result<SubstituteSet, Error> {
        Ok(match cfg.generator {
            GeneratorKind::Concat => {
                let params = ConcatParams {
                    k,
                    mask_counts: cfg.mask_counts.clone(),
                    truncation,
                };
                concat_generate(id, template, &params, backend)?
            }
            GeneratorKind::Wcm => {
                // Without per-mask-count lists, the union pool is a wider beam.
                let k = match truncation {
                    Truncation::Union => k * cfg.mask_counts.len(),
                    Truncation::MergedTopK => k,
                };
                wcm_generate(
                    id,
                    template,
                    &WcmParams {
                        k,
                        max_subwords: cfg.max_subwords,
                    },
                    backend,
                )?
            }
            GeneratorKind::Baseline => unreachable!("baseline handled separately"),
        })
    };
    let pattern_lang = |inst: &Instance| -> String {
        match cfg.injection {
            Injection::SdpFixedLanguage => cfg.pattern_language.clone().expect("validated"),
            _ => inst.language.clone(),
        }
    };
    if cfg.generator == GeneratorKind::Baseline {
        let p = catalog.get(&cfg.pattern, &pattern_lang(inst))?;
        return Ok(baseline_generate(inst, p, k, cfg.floor, backend)?);
    }
    match cfg.injection {
        Injection::None => generate(&Template::from_instance(inst)?, k, cfg.truncation),
        Injection::Sdp | Injection::SdpFixedLanguage => {
            let p = catalog.get(&cfg.pattern, &pattern_lang(inst))?;
            let a = generate(&instantiate_pattern(p, inst, PatternSide::TargetFirst)?, k, cfg.truncation)?;
            let b = generate(&instantiate_pattern(p, inst, PatternSide::MaskFirst)?, k, cfg.truncation)?;
            Ok(sdp_combine(&a, &b, cfg.floor, k))
        }
        Injection::Embs => {
            let emb = embeddings.ok_or_else(|| Error::Config("missing embedding table".into()))?;
            let pool = generate(&Template::from_instance(inst)?, k, Truncation::Union)?;
            let surface = inst.target_surface().to_lowercase();
            let target = if emb.contains(&surface) {
                surface
            } else {
                inst.target_lemma.clone()
            };
            Ok(embs_rerank(&pool, &target, emb, cfg.temperature, k)?)
        }
    }
}

/// Stage 1: substitutes for every instance, in dataset order.
pub fn generate_stage(cfg: &RunConfig, res: &Resources) -> Result<Vec<SubstituteRecord>, Error> {
    let generator = cfg.generator_name();
    let params = cfg.generator_params();
    let backend: &dyn MlmBackend = res.backend.as_ref();
    thread_pool(cfg.workers).install(|| {
        res.dataset
            .instances()
            .par_iter()
            .map(|inst| {
                let set = substitutes_for(cfg, inst, backend, &res.catalog, res.embeddings.as_ref())?;
                Ok(SubstituteRecord {
                    instance_id: set.instance_id,
                    generator: generator.clone(),
                    params: params.clone(),
                    candidates: set.candidates,
                })
            })
            .collect()
    })
}

/// One line of the clustering dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub word: String,
    pub instance_id: String,
    pub cluster_id: usize,
    pub soft: BTreeMap<usize, f64>,
    pub selected_c: usize,
    #[serde(with = "nonfinite_map")]
    pub ch_scores: BTreeMap<usize, f64>,
    /// This instance's cluster at every feasible cut, for maxARI.
    pub cuts: BTreeMap<usize, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// JSON has no infinities; write them as the strings "inf" / "-inf" / "nan".
mod nonfinite_map {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::Value;
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<usize, f64>, s: S) -> Result<S::Ok, S::Error> {
        let out: BTreeMap<usize, Value> = m
            .iter()
            .map(|(k, &v)| {
                let val = if v.is_finite() {
                    Value::from(v)
                } else if v.is_nan() {
                    Value::from("nan")
                } else if v > 0.0 {
                    Value::from("inf")
                } else {
                    Value::from("-inf")
                };
                (*k, val)
            })
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, f64>, D::Error> {
        let raw = BTreeMap::<usize, Value>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let f = match &v {
                    Value::Number(n) => n.as_f64().ok_or_else(|| D::Error::custom("bad number"))?,
                    Value::String(s) if s == "inf" => f64::INFINITY,
                    Value::String(s) if s == "-inf" => f64::NEG_INFINITY,
                    Value::String(s) if s == "nan" => f64::NAN,
                    other => return Err(D::Error::custom(format!("bad score {other}"))),
                };
                Ok((k, f))
            })
            .collect()
    }
}

/// Stage 2: lemmatize, vectorize and cluster each word.
pub fn cluster_stage(
    cfg: &RunConfig,
    dataset: &Dataset,
    substitutes: &[SubstituteRecord],
    lemmas: &dyn LemmaProvider,
) -> Result<Vec<ClusterRecord>, Error> {
    let by_id: BTreeMap<&str, &SubstituteRecord> =
        substitutes.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let words: Vec<&str> = dataset.words().collect();
    let per_word: Vec<Result<Vec<ClusterRecord>, Error>> = thread_pool(cfg.workers).install(|| {
        words
            .par_iter()
            .map(|&word| {
                let insts = dataset.word_instances(word);
                let bags = insts
                    .iter()
                    .map(|inst| {
                        let rec = by_id.get(inst.instance_id.as_str()).ok_or_else(|| {
                            Error::Config(format!("no substitutes for instance {}", inst.instance_id))
                        })?;
                        let set = SubstituteSet {
                            instance_id: rec.instance_id.clone(),
                            candidates: rec.candidates.clone(),
                        };
                        Ok(lemmatize_set(&set, &inst.language, lemmas, cfg.term_weighting))
                    })
                    .collect::<Result<Vec<_>, Error>>()?;
                cluster_word(cfg, word, &bags)
            })
            .collect()
    });
    let mut out = Vec::new();
    for r in per_word {
        out.extend(r?);
    }
    Ok(out)
}

fn trivial_records(word: &str, ids: &[String], flag: &str) -> Vec<ClusterRecord> {
    ids.iter()
        .map(|id| ClusterRecord {
            word: word.to_string(),
            instance_id: id.clone(),
            cluster_id: 0,
            soft: BTreeMap::from([(0, 1.0)]),
            selected_c: 1,
            ch_scores: BTreeMap::new(),
            cuts: BTreeMap::new(),
            flags: vec![flag.to_string()],
        })
        .collect()
}

fn cluster_word(cfg: &RunConfig, word: &str, bags: &[crate::vectorize::LemmaBag]) -> Result<Vec<ClusterRecord>, Error> {
    let ids: Vec<String> = bags.iter().map(|b| b.instance_id.clone()).collect();
    if bags.len() < 2 {
        return Ok(trivial_records(word, &ids, "single_instance"));
    }
    let matrix = match build_tfidf(word, bags) {
        Ok(m) => m,
        Err(VectorizeError::AllEmpty(_)) => {
            log::warn!("{word}: no substitutes for any instance");
            return Ok(trivial_records(word, &ids, "no_substitutes"));
        }
        Err(e) => return Err(e.into()),
    };
    let sel = select_clustering(word, &matrix, cfg.c_min, cfg.c_max)?;
    let soft = hard_to_soft(&sel.clustering);
    let soft = soft.soft.expect("soft assignments");
    let mut flags = Vec::new();
    if sel.degenerate {
        flags.push("degenerate".to_string());
    }
    if sel.undersized {
        flags.push("undersized".to_string());
    }
    Ok(matrix
        .rows
        .iter()
        .enumerate()
        .map(|(i, id)| ClusterRecord {
            word: word.to_string(),
            instance_id: id.clone(),
            cluster_id: sel.clustering.assignments[id],
            soft: soft[id].clone(),
            selected_c: sel.selected_c,
            ch_scores: sel.ch_scores.clone(),
            cuts: sel.cuts.iter().map(|(&c, labels)| (c, labels[i])).collect(),
            flags: flags.clone(),
        })
        .collect())
}

/// Per-word selection details carried into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordSelection {
    pub selected_c: usize,
    pub max_ari_c: Option<usize>,
    pub gold_senses: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub config: serde_json::Value,
    pub per_word: Vec<WordScores>,
    pub weighted: BTreeMap<String, f64>,
    #[serde(rename = "macro")]
    pub macro_avg: BTreeMap<String, f64>,
    pub selection: BTreeMap<String, WordSelection>,
}

impl Report {
    pub fn to_table(&self) -> String {
        let agg = Aggregate {
            per_word: self.per_word.clone(),
            weighted: self.weighted.clone(),
            macro_avg: self.macro_avg.clone(),
        };
        format!("dataset: {}\n{}", self.dataset, agg.to_table())
    }
}

/// Stage 3: score clusterings against gold senses.
///
/// Words with fewer than two gold-labeled instances are skipped.
pub fn evaluate_stage(
    dataset: &Dataset,
    clusters: &[ClusterRecord],
    config: serde_json::Value,
) -> Result<Report, Error> {
    let mut by_word: BTreeMap<&str, Vec<&ClusterRecord>> = BTreeMap::new();
    for r in clusters {
        by_word.entry(r.word.as_str()).or_default().push(r);
    }
    let mut rows = Vec::new();
    let mut selection = BTreeMap::new();
    for (word, recs) in by_word {
        let mut gold: BTreeMap<String, String> = BTreeMap::new();
        let mut pred: BTreeMap<String, usize> = BTreeMap::new();
        let mut cuts: BTreeMap<usize, BTreeMap<String, usize>> = BTreeMap::new();
        for r in &recs {
            let inst = dataset.get(&r.instance_id).ok_or_else(|| {
                Error::Metric(MetricError::InstanceMismatch(format!(
                    "clustered instance {} is not in the dataset",
                    r.instance_id
                )))
            })?;
            let Some(sense) = inst.gold_sense.clone() else { continue };
            gold.insert(r.instance_id.clone(), sense);
            pred.insert(r.instance_id.clone(), r.cluster_id);
            for (&c, &label) in &r.cuts {
                cuts.entry(c).or_default().insert(r.instance_id.clone(), label);
            }
        }
        let n_gold_senses = gold.values().collect::<BTreeSet<_>>().len();
        if gold.len() < 2 {
            log::warn!("{word}: fewer than two gold-labeled instances, skipped");
            continue;
        }
        let (g, p) = crate::metrics::align(&gold, &pred)?;
        let mut scores = BTreeMap::new();
        scores.insert("ari".to_string(), ari(&g, &p)?);
        scores.insert("v_measure".to_string(), v_measure(&g, &p)?);
        scores.insert("paired_fscore".to_string(), paired_fscore(&g, &p)?);
        let mut max_ari_c = None;
        if !cuts.is_empty() {
            let aligned: Vec<(usize, Vec<usize>)> = cuts
                .into_iter()
                .map(|(c, m)| Ok((c, crate::metrics::align(&gold, &m)?.1)))
                .collect::<Result<_, MetricError>>()?;
            let (best, c) = max_ari_over_cuts(&g, aligned)?;
            scores.insert("max_ari".to_string(), best);
            max_ari_c = Some(c);
        } else {
            scores.insert("max_ari".to_string(), scores["ari"]);
        }
        selection.insert(
            word.to_string(),
            WordSelection {
                selected_c: recs[0].selected_c,
                max_ari_c,
                gold_senses: n_gold_senses,
                flags: recs[0].flags.clone(),
            },
        );
        rows.push(WordScores {
            word: word.to_string(),
            instances: gold.len(),
            scores,
        });
    }
    let agg = aggregate(&rows)?;
    Ok(Report {
        dataset: dataset.name.clone(),
        config,
        per_word: agg.per_word,
        weighted: agg.weighted,
        macro_avg: agg.macro_avg,
        selection,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub report_sha256: String,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), Error> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it).map_err(json_err(path.display().to_string()))?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path.display().to_string()))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, Error> {
    let text = fs::read_to_string(path).map_err(io_err(path.display().to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(json_err(format!("{} line {}", path.display(), i + 1))))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let mut f = fs::File::create(path).map_err(io_err(path.display().to_string()))?;
    f.write_all(bytes).map_err(io_err(path.display().to_string()))
}

fn report_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Runs every stage and writes all artifacts to `run_dir`.
pub fn run_pipeline(cfg: &RunConfig, run_dir: &Path) -> Result<Report, StageError> {
    stage("config", cfg.validate())?;
    let res = stage("load", Resources::load(cfg))?;
    stage(
        "load",
        fs::create_dir_all(run_dir).map_err(io_err(run_dir.display().to_string())),
    )?;
    let subs = stage("substitute", generate_stage(cfg, &res))?;
    stage("substitute", write_jsonl(&run_dir.join("substitutes.jsonl"), &subs))?;
    let clusters = stage("cluster", cluster_stage(cfg, &res.dataset, &subs, res.lemmas.as_ref()))?;
    stage("cluster", write_jsonl(&run_dir.join("clusters.jsonl"), &clusters))?;
    let report = stage("evaluate", evaluate_stage(&res.dataset, &clusters, config_json(cfg)))?;
    let rj = report_json(&report);
    stage("evaluate", write_file(&run_dir.join("report.json"), rj.as_bytes()))?;
    stage("evaluate", write_file(&run_dir.join("report.txt"), report.to_table().as_bytes()))?;
    let manifest = stage("manifest", build_manifest(cfg, &rj))?;
    let mj = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    stage("manifest", write_file(&run_dir.join("manifest.json"), mj.as_bytes()))?;
    Ok(report)
}

pub fn build_manifest(cfg: &RunConfig, report_json: &str) -> Result<Manifest, Error> {
    let mut files: Vec<&Path> = vec![cfg.dataset.as_path()];
    files.extend(cfg.patterns.as_deref());
    files.extend(cfg.embeddings.as_deref());
    if let LemmaSpec::Table { path } = &cfg.lemmas {
        files.push(path);
    }
    files.extend(cfg.backend.files());
    let mut inputs = BTreeMap::new();
    for f in files {
        let bytes = fs::read(f).map_err(io_err(f.display().to_string()))?;
        inputs.insert(f.display().to_string(), sha256_hex(&bytes));
    }
    Ok(Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.hash(),
        inputs,
        report_sha256: sha256_hex(report_json.as_bytes()),
    })
}

/// Stage-by-stage entry points used by the command-line tool.
pub fn substitute_command(cfg: &RunConfig, out: &Path) -> Result<usize, Error> {
    let res = Resources::load(cfg)?;
    let subs = generate_stage(cfg, &res)?;
    write_jsonl(out, &subs)?;
    Ok(subs.len())
}

pub fn cluster_command(cfg: &RunConfig, substitutes: &Path, out: &Path) -> Result<usize, Error> {
    cfg.validate()?;
    let dataset = load_dataset_for(cfg)?;
    let subs: Vec<SubstituteRecord> = read_jsonl(substitutes)?;
    let lemmas = cfg.lemmas.build()?;
    let clusters = cluster_stage(cfg, &dataset, &subs, lemmas.as_ref())?;
    write_jsonl(out, &clusters)?;
    Ok(clusters.len())
}

pub fn evaluate_command(cfg: &RunConfig, clusters: &Path) -> Result<Report, Error> {
    let dataset = load_dataset_for(cfg)?;
    let clusters: Vec<ClusterRecord> = read_jsonl(clusters)?;
    evaluate_stage(&dataset, &clusters, config_json(cfg))
}

/// One point of a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub x: f64,
    pub ari: f64,
    pub max_ari: f64,
}

/// Runs the pipeline once per config and writes `sweep.tsv` and `sweep.svg`.
pub fn sweep(
    title: &str,
    x_label: &str,
    runs: &[(String, f64, RunConfig)],
    out_dir: &Path,
) -> Result<Vec<SweepPoint>, StageError> {
    let mut points = Vec::new();
    for (label, x, cfg) in runs {
        let report = run_pipeline(cfg, &out_dir.join(label))?;
        points.push(SweepPoint {
            label: label.clone(),
            x: *x,
            ari: report.weighted.get("ari").copied().unwrap_or(f64::NAN),
            max_ari: report.weighted.get("max_ari").copied().unwrap_or(f64::NAN),
        });
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.label.clone(), p.x.to_string(), format!("{:.6}", p.ari), format!("{:.6}", p.max_ari)])
        .collect();
    let table = plot::tsv(&["label", x_label, "ari", "max_ari"], &rows);
    let svg = plot::line_chart_svg(
        title,
        x_label,
        "score (instance-weighted)",
        &[
            plot::Series {
                name: "ARI".into(),
                points: points.iter().map(|p| (p.x, p.ari)).collect(),
            },
            plot::Series {
                name: "maxARI".into(),
                points: points.iter().map(|p| (p.x, p.max_ari)).collect(),
            },
        ],
    );
    stage("sweep", write_file(&out_dir.join("sweep.tsv"), table.as_bytes()))?;
    stage("sweep", write_file(&out_dir.join("sweep.svg"), svg.as_bytes()))?;
    Ok(points)
}

/// Shared handle for serving a backend over the wire.
pub fn shared_backend(spec: &BackendSpec) -> Result<Arc<dyn MlmBackend>, GatewayError> {
    Ok(Arc::from(spec.build()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig::new(
            "d.jsonl",
            GeneratorKind::Concat,
            Injection::Sdp,
            BackendSpec::Mock { config: "m.json".into() },
        )
    }

    #[test]
    fn defaults_follow_the_method() {
        let c = cfg();
        assert_eq!(c.effective_k(), 150);
        assert_eq!(c.pattern, "or even");
        assert_eq!(c.mask_counts, BTreeSet::from([1, 2, 3]));
        assert_eq!((c.c_min, c.c_max), (2, 9));
        let mut e = c.clone();
        e.injection = Injection::Embs;
        assert_eq!(e.effective_k(), 20);
    }

    #[test]
    fn validation_rules() {
        let mut c = cfg();
        c.injection = Injection::Embs;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut b = cfg();
        b.generator = GeneratorKind::Baseline;
        assert!(b.validate().is_err());
        b.injection = Injection::None;
        assert!(b.validate().is_ok());
        let mut k = cfg();
        k.k = Some(0);
        assert!(k.validate().is_err());
        let mut f = cfg();
        f.injection = Injection::SdpFixedLanguage;
        assert!(f.validate().is_err());
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::Gateway(GatewayError::Transport("x".into())).exit_code(), 3);
    }

    #[test]
    fn config_json_defaults() {
        let c: RunConfig = serde_json::from_str(
            r#"{"dataset":"d.jsonl","generator":"wcm","injection":"none",
                "backend":{"kind":"cache","path":"c.jsonl"}}"#,
        )
        .unwrap();
        assert_eq!(c.generator, GeneratorKind::Wcm);
        assert_eq!(c.workers, 1);
        assert_eq!(c.floor, 1e-5);
    }

    #[test]
    fn nonfinite_scores_round_trip() {
        let r = ClusterRecord {
            word: "w".into(),
            instance_id: "i".into(),
            cluster_id: 0,
            soft: [(0, 1.0)].into(),
            selected_c: 2,
            ch_scores: [(2, f64::INFINITY), (3, 1.5)].into(),
            cuts: [(2, 0), (3, 1)].into(),
            flags: vec![],
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""));
        let back: ClusterRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
