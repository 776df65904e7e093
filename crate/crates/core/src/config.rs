//! TOML pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{default_max_components, ReducerParams, DEFAULT_ASSIGN_THRESHOLD};
use crate::corpus::ChunkingConfig;
use crate::embedding::EmbedderConfig;
use crate::generation::{ChatConfig, OrderingStrategy, PromptTemplate, DEFAULT_PASSAGE_BUDGET};
use crate::pipeline::VariantSpec;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// UMAP settings; `n_neighbors` defaults to `max(2, floor(sqrt(n)))` per call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducerConfig {
    pub target_dim: usize,
    pub n_neighbors: Option<usize>,
    pub min_dist: f64,
    pub n_epochs: usize,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        let p = ReducerParams::for_points(0, 0);
        Self {
            target_dim: p.target_dim,
            n_neighbors: None,
            min_dist: p.min_dist,
            n_epochs: p.n_epochs,
        }
    }
}

impl ReducerConfig {
    pub fn params_for(&self, n_points: usize, seed: u64) -> ReducerParams {
        let base = ReducerParams::for_points(n_points, seed);
        ReducerParams {
            target_dim: self.target_dim,
            n_neighbors: self.n_neighbors.unwrap_or(base.n_neighbors),
            min_dist: self.min_dist,
            n_epochs: self.n_epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Upper bound for BIC selection; defaults to `min(8, floor(n/2))`.
    pub max_components: Option<usize>,
    pub assign_threshold: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            max_components: None,
            assign_threshold: DEFAULT_ASSIGN_THRESHOLD,
        }
    }
}

impl ClusteringConfig {
    pub fn max_components_for(&self, n_points: usize) -> usize {
        self.max_components.unwrap_or_else(|| default_max_components(n_points))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    /// TOML template files; built-in wording is used when absent.
    pub extraction: Option<PathBuf>,
    pub answer: Option<PathBuf>,
    pub passage_char_budget: usize,
}

impl Default for PromptsConfig {
    fn default() -> Self {
        Self {
            extraction: None,
            answer: None,
            passage_char_budget: DEFAULT_PASSAGE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub variant: VariantSpec,
    pub retrieval: RetrievalConfig,
    pub reducer: ReducerConfig,
    pub clustering: ClusteringConfig,
    pub ordering: OrderingStrategy,
    pub chat: ChatConfig,
    pub embedder: EmbedderConfig,
    pub chunking: ChunkingConfig,
    pub prompts: PromptsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            variant: VariantSpec::Urca,
            retrieval: RetrievalConfig::default(),
            reducer: ReducerConfig::default(),
            clustering: ClusteringConfig::default(),
            ordering: OrderingStrategy::default(),
            chat: ChatConfig::default(),
            embedder: EmbedderConfig::default(),
            chunking: ChunkingConfig::default(),
            prompts: PromptsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    pub extraction: PromptTemplate,
    pub answer: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            extraction: PromptTemplate::default_extraction(),
            answer: PromptTemplate::default_answer(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.chat.script_path,
            &mut config.prompts.extraction,
            &mut config.prompts.answer,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.retrieval.validate().map_err(|e| invalid(e.to_string()))?;
        self.reducer
            .params_for(4, self.seed)
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if !(self.clustering.assign_threshold > 0.0 && self.clustering.assign_threshold < 1.0) {
            return Err(invalid("clustering.assign_threshold must lie in (0, 1)".into()));
        }
        if self.clustering.max_components == Some(0) {
            return Err(invalid("clustering.max_components must be at least 1".into()));
        }
        self.chat.validate().map_err(|e| invalid(e.to_string()))?;
        self.embedder.validate().map_err(|e| invalid(e.to_string()))?;
        self.chunking.validate().map_err(|e| invalid(e.to_string()))?;
        if self.prompts.passage_char_budget == 0 {
            return Err(invalid("prompts.passage_char_budget must be positive".into()));
        }
        self.variant.validate().map_err(invalid)?;
        Ok(())
    }

    pub fn templates(&self) -> Result<Templates, ConfigError> {
        let load = |p: &Option<PathBuf>, fallback: PromptTemplate| match p {
            Some(path) => PromptTemplate::load(path).map_err(ConfigError::Invalid).and_then(|t| {
                if t.name == fallback.name {
                    Ok(t)
                } else {
                    Err(ConfigError::Invalid(format!("{} must hold a {} template", path.display(), fallback.name)))
                }
            }),
            None => Ok(fallback),
        };
        Ok(Templates {
            extraction: load(&self.prompts.extraction, PromptTemplate::default_extraction())?,
            answer: load(&self.prompts.answer, PromptTemplate::default_answer())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::OrderingKind;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), c);
        assert_eq!(c.retrieval.k, 10);
        assert_eq!(c.chat.max_tokens, 1024);
        assert_eq!(c.ordering.kind, OrderingKind::Ascending);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(PipelineConfig::from_toml("[retrieval]\nk = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(PipelineConfig::from_toml("variant = \"sideways\""), Err(ConfigError::Parse(_))));
        assert!(matches!(PipelineConfig::from_toml("[chat]\ntemperature = -1.0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(PipelineConfig::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(
            PipelineConfig::from_toml("[chunking]\nchunk_size = 100\noverlap = 100"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let answer = dir.path().join("answer.toml");
        std::fs::write(&answer, PromptTemplate::default_answer().to_toml()).unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "variant = \"contiguous:3\"\n[prompts]\nanswer = \"answer.toml\"\n").unwrap();
        let c = PipelineConfig::load(&cfg).unwrap();
        assert_eq!(c.prompts.answer.as_deref(), Some(answer.as_path()));
        assert_eq!(c.variant, VariantSpec::Contiguous(3));
        assert_eq!(c.templates().unwrap().answer, PromptTemplate::default_answer());
    }

    #[test]
    fn template_kind_must_match_slot() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.toml");
        std::fs::write(&p, PromptTemplate::default_answer().to_toml()).unwrap();
        let c = PipelineConfig {
            prompts: PromptsConfig { extraction: Some(p), ..PromptsConfig::default() },
            ..PipelineConfig::default()
        };
        assert!(c.templates().is_err());
    }
}
