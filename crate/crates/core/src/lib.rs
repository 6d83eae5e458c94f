//! Word sense induction from masked-language-model lexical substitutes.
//!
//! Occurrences of an ambiguous word are described by the substitutes a masked
//! language model proposes for them. Substitute lists are lemmatized, turned
//! into per-word TF-IDF vectors and clustered with average-linkage
//! agglomerative clustering; the number of senses is picked per word by the
//! Calinski–Harabasz score.
//!
//! | module | role |
//! |---|---|
//! | [`dataset`] | instances, JSONL / Senseval XML ingestion, sense relabeling, filtering |
//! | [`gateway`] | masked-LM scoring: mock, replay cache, sidecar client and server |
//! | [`substgen`] | Concat, WCM and single-token baseline substitute generators |
//! | [`inject`] | symmetric dynamic patterns and static-embedding reranking |
//! | [`wcm`] | word-continuation-masking example preparation |
//! | [`vectorize`] | lemma providers and TF-IDF |
//! | [`cluster`] | UPGMA, Calinski–Harabasz, cluster-count selection |
//! | [`metrics`] | ARI, maxARI, V-measure, paired F-score, aggregation |
//! | [`analysis`] | discriminative substitutes, taxonomy relations, script checks |
//! | [`pipeline`] | run configuration, stage orchestration, manifests, sweeps |
//! | [`synthetic`] | toy datasets with a matching mock backend |
//!
//! The `examples/` directory has one runnable program per capability.

pub mod analysis;
pub mod cluster;
pub mod dataset;
pub mod gateway;
pub mod inject;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod substgen;
pub mod synthetic;
pub mod vectorize;
pub mod wcm;

pub use dataset::{Dataset, Instance, SenseClustering};
pub use gateway::{MaskQuery, MlmBackend, MlmResponse, PredictedToken};
pub use pipeline::{run_pipeline, RunConfig};
pub use substgen::{SubstituteCandidate, SubstituteSet, Template};
