//! Pipeline configuration: one JSON document plus command-line overrides
//! (flags win). Validation failures carry a JSON pointer to the offending
//! field so configs can be fixed without guesswork.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use techembed_core::corpus::ChunkParams;
use techembed_core::encoder::EncoderConfig;
use techembed_core::eval::JudgmentLevel;
use techembed_core::train::{DEFAULT_PRETRAIN_LR, DEFAULT_TUNE_LR};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config error at {pointer}: {reason}")]
    Invalid { pointer: String, reason: String },
}

impl ConfigError {
    fn at(pointer: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            pointer: pointer.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    corpus: Option<PathBuf>,
    queries: Option<PathBuf>,
    /// Training queries; `queries` doubles as both when absent.
    train_queries: Option<PathBuf>,
    qrels: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    index: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ChunkingSection {
    chunk_size: usize,
    overlap: usize,
}

impl Default for ChunkingSection {
    fn default() -> Self {
        let d = ChunkParams::default();
        ChunkingSection {
            chunk_size: d.chunk_size,
            overlap: d.overlap,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EncoderSection {
    dim: usize,
    vocab_size: u32,
    layers: usize,
    heads: usize,
    max_seq: usize,
    prompt_len: usize,
    temperature: f64,
    shared_base: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let d = EncoderConfig::default();
        EncoderSection {
            dim: d.dim,
            vocab_size: d.vocab_size,
            layers: d.layers,
            heads: d.heads,
            max_seq: d.max_seq,
            prompt_len: d.prompt_len,
            temperature: d.temperature,
            shared_base: d.shared_base,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SummarizerSection {
    /// Sentences kept per summary.
    sentences: usize,
    epochs: usize,
    lr: f64,
}

impl Default for SummarizerSection {
    fn default() -> Self {
        SummarizerSection {
            sentences: 3,
            epochs: 20,
            lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct QuerygenSection {
    n_per_chunk: usize,
    backend: String,
}

impl Default for QuerygenSection {
    fn default() -> Self {
        QuerygenSection {
            n_per_chunk: 2,
            backend: "template".to_string(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    pretrain_epochs: usize,
    tune_epochs: usize,
    batch_size: usize,
    pretrain_lr: f64,
    tune_lr: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            pretrain_epochs: 20,
            tune_epochs: 10,
            batch_size: 16,
            pretrain_lr: DEFAULT_PRETRAIN_LR,
            tune_lr: DEFAULT_TUNE_LR,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalSection {
    k: Vec<usize>,
    level: JudgmentLevel,
    use_summaries: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: vec![5, 10, 15, 20],
            level: JudgmentLevel::Chunk,
            use_summaries: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    seed: Option<u64>,
    paths: PathsSection,
    chunking: ChunkingSection,
    encoder: EncoderSection,
    summarizer: SummarizerSection,
    querygen: QuerygenSection,
    train: TrainSection,
    eval: EvalSection,
}

/// Command-line overrides; every field beats the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub k: Option<Vec<usize>>,
    pub use_summaries: Option<bool>,
    pub backend: Option<String>,
    pub allow_mismatch: bool,
}

/// A fully resolved configuration. `seed` is mandatory: there is no
/// entropy-based default anywhere in the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub train_queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out: PathBuf,
    pub chunking: ChunkParams,
    pub encoder: EncoderConfig,
    pub summary_sentences: usize,
    pub summarizer_epochs: usize,
    pub summarizer_lr: f64,
    pub n_per_chunk: usize,
    pub backend: String,
    pub pretrain_epochs: usize,
    pub tune_epochs: usize,
    pub batch_size: usize,
    pub pretrain_lr: f64,
    pub tune_lr: f64,
    pub k_values: Vec<usize>,
    pub level: JudgmentLevel,
    pub use_summaries: bool,
    pub allow_mismatch: bool,
}

impl PipelineConfig {
    /// Loads the optional config file and applies overrides.
    pub fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let file: FileConfig = match config_path {
            Some(path) => {
                let content = fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let de = &mut serde_json::Deserializer::from_str(&content);
                serde_path_to_error::deserialize(de).map_err(|e| {
                    let pointer = format!("/{}", e.path().to_string().replace('.', "/"));
                    ConfigError::at(&pointer, e.inner().to_string())
                })?
            }
            None => FileConfig::default(),
        };

        let seed = overrides
            .seed
            .or(file.seed)
            .ok_or_else(|| ConfigError::at("/seed", "a seed is required (set it in the config or pass --seed)"))?;

        let backend = overrides
            .backend
            .clone()
            .unwrap_or(file.querygen.backend.clone());
        if backend != "template" && backend != "remote" {
            return Err(ConfigError::at(
                "/querygen/backend",
                format!("unknown backend {backend:?}; expected \"template\" or \"remote\""),
            ));
        }

        let k_values = overrides.k.clone().unwrap_or(file.eval.k.clone());
        if k_values.is_empty() || k_values.iter().any(|&k| k == 0) {
            return Err(ConfigError::at("/eval/k", "cutoffs must be positive"));
        }
        if file.chunking.overlap >= file.chunking.chunk_size {
            return Err(ConfigError::at(
                "/chunking/overlap",
                format!(
                    "overlap {} must be smaller than chunk_size {}",
                    file.chunking.overlap, file.chunking.chunk_size
                ),
            ));
        }
        if file.train.batch_size < 2 {
            return Err(ConfigError::at("/train/batch_size", "must be at least 2"));
        }
        if file.summarizer.sentences == 0 {
            return Err(ConfigError::at("/summarizer/sentences", "must be at least 1"));
        }

        let encoder = EncoderConfig {
            dim: file.encoder.dim,
            vocab_size: file.encoder.vocab_size,
            layers: file.encoder.layers,
            heads: file.encoder.heads,
            max_seq: file.encoder.max_seq,
            prompt_len: file.encoder.prompt_len,
            temperature: file.encoder.temperature,
            seed,
            shared_base: file.encoder.shared_base,
        };
        encoder
            .validate()
            .map_err(|e| ConfigError::at("/encoder", e.to_string()))?;

        Ok(PipelineConfig {
            seed,
            corpus: file.paths.corpus,
            queries: file.paths.queries,
            train_queries: file.paths.train_queries,
            qrels: file.paths.qrels,
            checkpoint: file.paths.checkpoint,
            index: file.paths.index,
            out: overrides
                .out
                .clone()
                .or(file.paths.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            chunking: ChunkParams {
                chunk_size: file.chunking.chunk_size,
                overlap: file.chunking.overlap,
            },
            encoder,
            summary_sentences: file.summarizer.sentences,
            summarizer_epochs: file.summarizer.epochs,
            summarizer_lr: file.summarizer.lr,
            n_per_chunk: file.querygen.n_per_chunk,
            backend,
            pretrain_epochs: file.train.pretrain_epochs,
            tune_epochs: file.train.tune_epochs,
            batch_size: file.train.batch_size,
            pretrain_lr: file.train.pretrain_lr,
            tune_lr: file.train.tune_lr,
            k_values,
            level: file.eval.level,
            use_summaries: overrides.use_summaries.unwrap_or(file.eval.use_summaries),
            allow_mismatch: overrides.allow_mismatch,
        })
    }

    /// A required input path, named by its JSON pointer when missing.
    pub fn require<'a>(
        &self,
        field: &'a Option<PathBuf>,
        pointer: &str,
    ) -> Result<&'a Path, ConfigError> {
        field
            .as_deref()
            .ok_or_else(|| ConfigError::at(pointer, "required by this subcommand"))
    }

    /// Training queries fall back to the evaluation query set.
    pub fn train_query_path(&self) -> Option<&Path> {
        self.train_queries.as_deref().or(self.queries.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(json: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(json.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let f = write_config(r#"{"seed": 7, "paths": {"corpus": "c.jsonl"}}"#);
        let cfg = PipelineConfig::resolve(Some(f.path()), &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.chunking.chunk_size, 256);
        assert_eq!(cfg.k_values, vec![5, 10, 15, 20]);
        assert_eq!(cfg.encoder.dim, 64);
        assert_eq!(cfg.out, PathBuf::from("out"));
    }

    #[test]
    fn missing_seed_is_pointed_at() {
        let f = write_config(r#"{"paths": {"corpus": "c.jsonl"}}"#);
        let err = PipelineConfig::resolve(Some(f.path()), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("/seed"), "{err}");
    }

    #[test]
    fn type_errors_carry_json_pointers() {
        let f = write_config(r#"{"seed": 1, "chunking": {"chunk_size": "big"}}"#);
        let err = PipelineConfig::resolve(Some(f.path()), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("/chunking/chunk_size"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let f = write_config(r#"{"seed": 1, "chnking": {}}"#);
        assert!(PipelineConfig::resolve(Some(f.path()), &Overrides::default()).is_err());
    }

    #[test]
    fn overrides_beat_the_file() {
        let f = write_config(r#"{"seed": 7, "eval": {"k": [3], "use_summaries": true}}"#);
        let overrides = Overrides {
            seed: Some(11),
            k: Some(vec![5, 10]),
            use_summaries: Some(false),
            ..Default::default()
        };
        let cfg = PipelineConfig::resolve(Some(f.path()), &overrides).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.k_values, vec![5, 10]);
        assert!(!cfg.use_summaries);
    }

    #[test]
    fn require_names_the_pointer() {
        let f = write_config(r#"{"seed": 7}"#);
        let cfg = PipelineConfig::resolve(Some(f.path()), &Overrides::default()).unwrap();
        let err = cfg.require(&cfg.corpus, "/paths/corpus").unwrap_err();
        assert!(err.to_string().contains("/paths/corpus"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (json, needle) in [
            (r#"{"seed":1,"eval":{"k":[0]}}"#, "/eval/k"),
            (r#"{"seed":1,"chunking":{"chunk_size":16,"overlap":16}}"#, "/chunking/overlap"),
            (r#"{"seed":1,"train":{"batch_size":1}}"#, "/train/batch_size"),
            (r#"{"seed":1,"querygen":{"backend":"oracle"}}"#, "/querygen/backend"),
            (r#"{"seed":1,"encoder":{"dim":10,"heads":4}}"#, "/encoder"),
        ] {
            let f = write_config(json);
            let err = PipelineConfig::resolve(Some(f.path()), &Overrides::default()).unwrap_err();
            assert!(err.to_string().contains(needle), "{json} -> {err}");
        }
    }
}
