//! Run configuration (TOML).
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusFormat;
use crate::evalmetrics::TableMode;
use crate::llmgateway::HttpConfig;
use crate::promptkit::Strategy;
use crate::retrieval::{RetrievalConfig, ScorerKind};
use crate::tabletree::HeaderSource;

pub const MAX_SHOTS: usize = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("config key `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train, dev or test)")),
        }
    }
}

fn de_format<'de, D: serde::Deserializer<'de>>(d: D) -> Result<CorpusFormat, D::Error> {
    let s = String::deserialize(d)?;
    CorpusFormat::from_str(&s).map_err(serde::de::Error::custom)
}

fn ser_format<S: serde::Serializer>(f: &CorpusFormat, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match f {
        CorpusFormat::Canonical => "canonical",
        CorpusFormat::Multihiertt => "multihiertt",
    })
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Canonical
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    #[serde(
        default = "default_format",
        deserialize_with = "de_format",
        serialize_with = "ser_format"
    )]
    pub format: CorpusFormat,
    #[serde(default)]
    pub header_source: HeaderSourceName,
}

/// Config spelling of [`HeaderSource`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeaderSourceName {
    #[default]
    Markup,
    Infer,
}

impl From<HeaderSourceName> for HeaderSource {
    fn from(h: HeaderSourceName) -> Self {
        match h {
            HeaderSourceName::Markup => HeaderSource::Markup,
            HeaderSourceName::Infer => HeaderSource::Infer,
        }
    }
}

impl CorpusPaths {
    pub fn path(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => self.train.as_deref(),
            Split::Dev => self.dev.as_deref(),
            Split::Test => self.test.as_deref(),
        }
    }
}

/// Where question types come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    /// Bundled keyword rules.
    #[default]
    Rules,
    /// Gold labels from the corpus.
    Gold,
    /// A labels JSONL file.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub stop: Option<Vec<String>>,
    /// Scripted completions for the mock backend.
    pub mock_script: Option<PathBuf>,
    /// Response cache; in-memory only when absent.
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub http: HttpConfig,
}

fn default_model() -> String {
    "text-davinci-003".into()
}

fn default_max_tokens() -> u32 {
    512
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            model: default_model(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            stop: None,
            mock_script: None,
            cache: None,
            http: HttpConfig::default(),
        }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    /// Relevance scores JSONL for the external scorer.
    pub scores: Option<PathBuf>,
    #[serde(default)]
    pub classifier: ClassifierKind,
    /// Type labels JSONL for the external classifier.
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub table_mode: TableMode,
    #[serde(default)]
    pub shots: usize,
    pub demo_dir: Option<PathBuf>,
    /// Truncate demonstration contexts to this many characters.
    pub demo_context_chars: Option<usize>,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(src: &str, base: &Path, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(src).map_err(|source| ConfigError::Toml {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&src, base, path)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.corpus.train,
            &mut self.corpus.dev,
            &mut self.corpus.test,
            &mut self.scores,
            &mut self.labels,
            &mut self.demo_dir,
            &mut self.llm.mock_script,
            &mut self.llm.cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retrieval.validate().map_err(|r| invalid("retrieval", r))?;
        if self.corpus.path(self.split).is_none() {
            return Err(invalid("corpus", format!("no corpus path for split {:?}", self.split)));
        }
        if self.shots > MAX_SHOTS {
            return Err(invalid("shots", format!("must be 0..={MAX_SHOTS}, got {}", self.shots)));
        }
        if self.shots > 0 && self.demo_dir.is_none() {
            return Err(invalid("demo_dir", "required when shots >= 1"));
        }
        if self.retrieval.scorer == ScorerKind::External && self.scores.is_none() {
            return Err(invalid("scores", "required for the external scorer"));
        }
        if self.classifier == ClassifierKind::External && self.labels.is_none() {
            return Err(invalid("labels", "required for the external classifier"));
        }
        if self.llm.backend == BackendKind::Mock && self.llm.mock_script.is_none() && self.llm.cache.is_none() {
            return Err(invalid(
                "llm.mock_script",
                "the mock backend needs a script or a warm cache",
            ));
        }
        if self.llm.temperature.is_nan() || self.llm.temperature < 0.0 {
            return Err(invalid("llm.temperature", "must be >= 0"));
        }
        if self.concurrency == 0 {
            return Err(invalid("concurrency", "must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
output_dir = "out"
[corpus]
dev = "dev.jsonl"
[llm]
mock_script = "mock.jsonl"
"#;

    #[test]
    fn defaults_and_resolution() {
        let c = RunConfig::from_toml(MIN, Path::new("/base"), Path::new("run.toml")).unwrap();
        assert_eq!(c.retrieval.n, 5);
        assert_eq!(c.retrieval.m, 10);
        assert_eq!(c.llm.temperature, 0.0);
        assert_eq!(c.split, Split::Dev);
        assert_eq!(c.corpus.dev.as_deref(), Some(Path::new("/base/dev.jsonl")));
        assert_eq!(c.output_dir, Path::new("/base/out"));
    }

    #[test]
    fn rejects_bad_values() {
        let err = |extra: &str| {
            RunConfig::from_toml(&format!("{extra}\n{MIN}"), Path::new("."), Path::new("r"))
                .unwrap_err()
                .to_string()
        };
        assert!(err("shots = 5").contains("shots"));
        assert!(err("shots = 2").contains("demo_dir"));
        assert!(err("split = \"test\"").contains("corpus"));
        assert!(err("bogus = 1").contains("bogus"));
    }
}
