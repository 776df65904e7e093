//! End-to-end orchestration of URCA and its baseline and ablation variants.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{cluster_chunks, group_contiguous, Cluster, ClusterError};
use crate::config::{ConfigError, PipelineConfig, Templates};
use crate::corpus::{chunk_study, Chunk, CorpusError, EvidenceRecord, Study};
use crate::embedding::{embed_texts, EmbedError, Embedder, EmbeddingVector};
use crate::exec::{self, Execution};
use crate::generation::{
    extract_cluster_knowledge, fingerprint, order_clusters, render_answer_prompt, render_passage_answer_prompt,
    templates_hash, ChatError, ChatModel, Digest,
};
use crate::labels::{parse_model_answer, ConclusionLabel, Prediction};
use crate::retrieval::{build_index, distinct_sources, retrieve_global, retrieve_uniform, RetrievalError, ScoredChunk, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum VariantSpec {
    Urca,
    UrcaNoUniform,
    UrcaNoClustering,
    Rag,
    RagUniform,
    NoRag,
    Abstracts,
    Contiguous(usize),
}

impl VariantSpec {
    /// Named variants; `contiguous:N` is parameterised and not listed.
    pub const NAMED: [VariantSpec; 7] = [
        VariantSpec::Urca,
        VariantSpec::UrcaNoUniform,
        VariantSpec::UrcaNoClustering,
        VariantSpec::Rag,
        VariantSpec::RagUniform,
        VariantSpec::NoRag,
        VariantSpec::Abstracts,
    ];

    pub fn validate(&self) -> Result<(), String> {
        match self {
            VariantSpec::Contiguous(0) => Err("contiguous variant needs n_groups >= 1".into()),
            _ => Ok(()),
        }
    }

    fn uses_index(self) -> bool {
        !matches!(self, VariantSpec::NoRag | VariantSpec::Abstracts)
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantSpec::Urca => f.write_str("urca"),
            VariantSpec::UrcaNoUniform => f.write_str("urca_no_uniform"),
            VariantSpec::UrcaNoClustering => f.write_str("urca_no_clustering"),
            VariantSpec::Rag => f.write_str("rag"),
            VariantSpec::RagUniform => f.write_str("rag_uniform"),
            VariantSpec::NoRag => f.write_str("no_rag"),
            VariantSpec::Abstracts => f.write_str("abstracts"),
            VariantSpec::Contiguous(n) => write!(f, "contiguous:{n}"),
        }
    }
}

impl FromStr for VariantSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("contiguous:") {
            let n: usize = n
                .parse()
                .map_err(|_| format!("contiguous variant needs an integer group count, got {n:?}"))?;
            let v = VariantSpec::Contiguous(n);
            v.validate()?;
            return Ok(v);
        }
        VariantSpec::NAMED
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| {
                let names: Vec<String> = VariantSpec::NAMED.iter().map(|v| v.to_string()).collect();
                format!("unknown variant {s:?}; expected one of {}, contiguous:N", names.join(", "))
            })
    }
}

impl TryFrom<String> for VariantSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<VariantSpec> for String {
    fn from(v: VariantSpec) -> String {
        v.to_string()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("chunking failed: {0}")]
    Corpus(#[from] CorpusError),
    #[error("embedding failed: {0}")]
    Embed(#[from] EmbedError),
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("clustering failed: {0}")]
    Cluster(#[from] ClusterError),
    #[error("chat failed: {0}")]
    Chat(#[from] ChatError),
    #[error("index for study {0} is unavailable: {1}")]
    Index(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRef {
    pub chunk_id: String,
    pub paper_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    pub study_id: String,
    pub variant: VariantSpec,
    pub model: String,
    pub predicted: Prediction,
    pub gold: Option<ConclusionLabel>,
    pub retrieved: Vec<RetrievedRef>,
    pub n_clusters: usize,
    pub digests: Vec<Digest>,
    pub sources_covered: usize,
    pub total_sources: usize,
    pub extraction_calls: usize,
    /// Chunks dropped by the passage budget, summed over all prompts.
    pub dropped_chunks: usize,
    pub prompt_fingerprints: Vec<String>,
    pub answer_text: Option<String>,
    pub index_cache_hit: bool,
    pub error: Option<String>,
    /// Wall-clock time; recorded only on request so logs stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

impl PredictionRecord {
    fn start(record: &EvidenceRecord, variant: VariantSpec, model: &str) -> Self {
        Self {
            question_id: record.question.id.clone(),
            study_id: record.study.id.clone(),
            variant,
            model: model.to_string(),
            predicted: Prediction::Unparsed,
            gold: record.study.gold_conclusion,
            retrieved: Vec::new(),
            n_clusters: 0,
            digests: Vec::new(),
            sources_covered: 0,
            total_sources: record.study.papers.len(),
            extraction_calls: 0,
            dropped_chunks: 0,
            prompt_fingerprints: Vec::new(),
            answer_text: None,
            index_cache_hit: false,
            error: None,
            timing_ms: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    /// Fraction of the study's papers that contributed a retrieved chunk.
    pub fn coverage(&self) -> f64 {
        if self.total_sources == 0 {
            0.0
        } else {
            self.sources_covered as f64 / self.total_sources as f64
        }
    }
}

/// One configured pipeline: backends, templates, and settings.
pub struct Pipeline {
    config: PipelineConfig,
    templates: Templates,
    chat: Arc<dyn ChatModel>,
    embedder: Arc<dyn Embedder>,
    exec: Execution,
    record_timing: bool,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("model", &self.chat.name())
            .field("exec", &self.exec)
            .finish()
    }
}

impl Pipeline {
    /// Builds backends and loads templates from `config`.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let templates = config.templates()?;
        let chat = config.chat.build()?;
        let embedder = config.embedder.build()?;
        Ok(Self::with_backends(config, templates, chat, embedder))
    }

    pub fn with_backends(
        config: PipelineConfig,
        templates: Templates,
        chat: Arc<dyn ChatModel>,
        embedder: Arc<dyn Embedder>,
    ) -> Self {
        Self {
            config,
            templates,
            chat,
            embedder,
            exec: Execution::default(),
            record_timing: false,
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_timing(mut self, on: bool) -> Self {
        self.record_timing = on;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn model_name(&self) -> &str {
        self.chat.name()
    }

    /// Chunks and embeds every paper of `study`.
    pub fn build_index(&self, study: &Study) -> Result<VectorIndex, PipelineError> {
        let chunks = chunk_study(study, self.config.chunking)?;
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = embed_texts(&texts, self.embedder.as_ref())?;
        Ok(build_index(chunks, vectors)?)
    }

    pub fn run_urca(&self, record: &EvidenceRecord, index: &VectorIndex) -> PredictionRecord {
        self.run_variant(record, VariantSpec::Urca, Some(index))
    }

    /// Runs one record. Failures produce an error-state record carrying
    /// whatever was computed before the failure.
    pub fn run_variant(&self, record: &EvidenceRecord, variant: VariantSpec, index: Option<&VectorIndex>) -> PredictionRecord {
        let started = Instant::now();
        let mut out = PredictionRecord::start(record, variant, self.chat.name());
        if let Err(e) = self.execute(record, variant, index, &mut out) {
            log::warn!("{} / {}: {e}", record.question.id, record.study.id);
            out.predicted = Prediction::Unparsed;
            out.error = Some(e.to_string());
        }
        if self.record_timing {
            out.timing_ms = Some(started.elapsed().as_millis() as u64);
        }
        out
    }

    fn execute(
        &self,
        record: &EvidenceRecord,
        variant: VariantSpec,
        index: Option<&VectorIndex>,
        out: &mut PredictionRecord,
    ) -> Result<(), PipelineError> {
        let q = &record.question;
        let budget = self.config.prompts.passage_char_budget;

        let retrieved = match variant {
            VariantSpec::NoRag => Vec::new(),
            VariantSpec::Abstracts => abstract_chunks(&record.study, self.config.chunking.chunk_size),
            _ => {
                let index = index.ok_or_else(|| PipelineError::Index(record.study.id.clone(), "not built".into()))?;
                let query = self.embed_query(&q.text)?;
                match variant {
                    VariantSpec::UrcaNoUniform | VariantSpec::Rag => {
                        retrieve_global(index, &query, self.config.retrieval.k, self.exec)?
                    }
                    _ => retrieve_uniform(index, &query, &self.config.retrieval, self.exec)?,
                }
            }
        };
        out.retrieved = retrieved
            .iter()
            .map(|c| RetrievedRef {
                chunk_id: c.chunk.id.clone(),
                paper_id: c.chunk.paper_id.clone(),
                score: c.score,
            })
            .collect();
        out.sources_covered = distinct_sources(&retrieved);

        let answer_messages = match variant {
            VariantSpec::Rag | VariantSpec::RagUniform | VariantSpec::NoRag | VariantSpec::Abstracts => {
                let r = render_passage_answer_prompt(q, &retrieved, &self.templates.answer, budget);
                out.dropped_chunks += r.dropped;
                r.messages
            }
            _ => {
                let clusters = self.group(&retrieved, variant)?;
                out.n_clusters = clusters.len();
                let digests = self.extract_all(record, &clusters, out)?;
                let weighted: Vec<(Digest, f64)> = digests
                    .into_iter()
                    .zip(&clusters)
                    .map(|(d, c)| (d, c.mean_query_similarity))
                    .collect();
                let ordered: Vec<Digest> = order_clusters(&weighted, self.config.ordering)
                    .into_iter()
                    .map(|(d, _)| d)
                    .collect();
                let messages = render_answer_prompt(q, &ordered, &self.templates.answer);
                out.digests = ordered;
                messages
            }
        };

        out.prompt_fingerprints.push(fingerprint(&answer_messages));
        let answer = self.chat.complete(&answer_messages)?;
        out.predicted = parse_model_answer(&answer, q);
        out.answer_text = Some(answer);
        Ok(())
    }

    fn embed_query(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = embed_texts(&[text.to_string()], self.embedder.as_ref())?;
        v.pop().ok_or(EmbedError::EmptyInput)
    }

    fn group(&self, retrieved: &[ScoredChunk], variant: VariantSpec) -> Result<Vec<Cluster>, PipelineError> {
        if retrieved.is_empty() {
            return Err(ClusterError::Empty.into());
        }
        let seed = self.config.seed;
        Ok(match variant {
            VariantSpec::UrcaNoClustering => vec![Cluster::from_members(0, retrieved.to_vec())],
            VariantSpec::Contiguous(n) => group_contiguous(retrieved, n.min(retrieved.len()), seed)?,
            _ => {
                let n = retrieved.len();
                cluster_chunks(
                    retrieved,
                    &self.config.reducer.params_for(n, seed),
                    self.config.clustering.max_components_for(n),
                    self.config.clustering.assign_threshold,
                    seed,
                    self.exec,
                )?
            }
        })
    }

    fn extract_all(
        &self,
        record: &EvidenceRecord,
        clusters: &[Cluster],
        out: &mut PredictionRecord,
    ) -> Result<Vec<Digest>, PipelineError> {
        let budget = self.config.prompts.passage_char_budget;
        let results = exec::map_slice(self.exec, clusters, |c| {
            extract_cluster_knowledge(self.chat.as_ref(), &record.question, c, &self.templates.extraction, budget)
        });
        out.extraction_calls = clusters.len();
        let mut digests = Vec::with_capacity(clusters.len());
        for r in results {
            let (digest, prompt) = r?;
            out.prompt_fingerprints.push(fingerprint(&prompt.messages));
            out.dropped_chunks += prompt.dropped;
            digests.push(digest);
        }
        Ok(digests)
    }

    /// Runs `variant` over every record with at most `parallelism` records in
    /// flight. Each study is chunked and embedded once; output order matches
    /// input order.
    pub fn run_dataset(&self, records: &[EvidenceRecord], variant: VariantSpec, parallelism: usize) -> Vec<PredictionRecord> {
        let mut first_seen: HashMap<&str, usize> = HashMap::new();
        let mut studies: Vec<&Study> = Vec::new();
        let mut cache_hit = Vec::with_capacity(records.len());
        for r in records {
            let hit = first_seen.contains_key(r.study.id.as_str());
            if !hit {
                first_seen.insert(&r.study.id, studies.len());
                studies.push(&r.study);
            }
            cache_hit.push(hit);
        }

        let indexes: Vec<Result<VectorIndex, String>> = if variant.uses_index() {
            exec::map_bounded(parallelism, &studies, |s| self.build_index(s).map_err(|e| e.to_string()))
        } else {
            Vec::new()
        };

        let jobs: Vec<usize> = (0..records.len()).collect();
        exec::map_bounded(parallelism, &jobs, |&i| {
            let record = &records[i];
            let slot = first_seen[record.study.id.as_str()];
            let mut out = match indexes.get(slot) {
                Some(Err(e)) => {
                    let mut failed = PredictionRecord::start(record, variant, self.chat.name());
                    failed.error = Some(PipelineError::Index(record.study.id.clone(), e.clone()).to_string());
                    failed
                }
                Some(Ok(index)) => self.run_variant(record, variant, Some(index)),
                None => self.run_variant(record, variant, None),
            };
            out.index_cache_hit = variant.uses_index() && cache_hit[i];
            out
        })
    }
}

/// One pseudo-chunk per paper: the whole body for abstract-only papers,
/// the leading `prefix_chars` characters otherwise.
fn abstract_chunks(study: &Study, prefix_chars: usize) -> Vec<ScoredChunk> {
    study
        .papers
        .iter()
        .map(|p| {
            let text: String = if p.is_abstract_only {
                p.body.clone()
            } else {
                p.body.chars().take(prefix_chars).collect()
            };
            let len = text.chars().count();
            ScoredChunk {
                chunk: Chunk {
                    id: format!("{}#abstract", p.id),
                    paper_id: p.id.clone(),
                    study_id: study.id.clone(),
                    text,
                    char_span: (0, len),
                },
                vector: EmbeddingVector::new(Vec::new()),
                score: 0.0,
                rank_within_source: 0,
            }
        })
        .collect()
}

/// First line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub dataset_path: String,
    pub templates_hash: String,
    pub seed: u64,
    pub variant: VariantSpec,
    pub model: String,
    /// Unix seconds; omitted by default so logs are reproducible.
    pub timestamp: Option<u64>,
}

impl RunManifest {
    pub fn new(pipeline: &Pipeline, dataset_path: &Path, variant: VariantSpec, timestamp: Option<u64>) -> Self {
        let mut config = pipeline.config.clone();
        config.variant = variant;
        Self {
            seed: config.seed,
            config,
            dataset_path: dataset_path.display().to_string(),
            templates_hash: templates_hash(&[&pipeline.templates.extraction, &pipeline.templates.answer]),
            variant,
            model: pipeline.model_name().to_string(),
            timestamp,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
enum LogLine {
    Manifest(RunManifest),
    Prediction(PredictionRecord),
}

/// Writes a manifest line followed by one JSON line per record.
pub fn write_run_log(mut out: impl Write, manifest: &RunManifest, records: &[PredictionRecord]) -> io::Result<()> {
    let line = |v: &LogLine| serde_json::to_string(v).map_err(io::Error::other);
    writeln!(out, "{}", line(&LogLine::Manifest(manifest.clone()))?)?;
    for r in records {
        writeln!(out, "{}", line(&LogLine::Prediction(r.clone()))?)?;
    }
    out.flush()
}

pub fn read_run_log(text: &str) -> Result<(RunManifest, Vec<PredictionRecord>), String> {
    let mut manifest = None;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match serde_json::from_str::<LogLine>(line).map_err(|e| format!("line {}: {e}", i + 1))? {
            LogLine::Manifest(m) if manifest.is_none() => manifest = Some(m),
            LogLine::Manifest(_) => return Err(format!("line {}: second manifest", i + 1)),
            LogLine::Prediction(p) => records.push(p),
        }
    }
    Ok((manifest.ok_or("run log has no manifest")?, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in VariantSpec::NAMED.into_iter().chain([VariantSpec::Contiguous(4)]) {
            assert_eq!(v.to_string().parse::<VariantSpec>().unwrap(), v);
        }
        assert!("contiguous:0".parse::<VariantSpec>().is_err());
        assert!("contiguous:x".parse::<VariantSpec>().is_err());
        assert!("graph_rag".parse::<VariantSpec>().is_err());
        let json = serde_json::to_string(&VariantSpec::Contiguous(2)).unwrap();
        assert_eq!(json, "\"contiguous:2\"");
    }
}
