//! TOML configuration and construction of the runtime components.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::ingest::{ApiKind, HarvestFilter, TrackerSource};
use crate::llm::{
    Backend, BackendConfig, ChatTransport, FixtureTransport, HttpTransport, LlmError, MockRule, MockTransport,
    PromptTemplates, RecordingTransport, RECORD_ENV,
};
use crate::pipeline::{FixtureTranslator, HttpTranslator, Pipeline, PipelineError, SampleSpec, Translator};
use crate::preprocess::{MarkdownCleaner, Preprocessor, RemoteTriviaScorer, RuleTrivia, StopwordDetector, DEFAULT_DROP_SECTIONS};
use crate::review::ReviewConfig;
use crate::store::Store;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn default_store() -> PathBuf {
    PathBuf::from("cruise-store")
}
fn default_domain() -> String {
    "e-commerce web shop".to_string()
}
fn default_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_store")]
    pub store: PathBuf,
    #[serde(default = "default_domain")]
    pub domain_description: String,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Directory with `match.txt`, `generate.txt` and `assess.txt`; the
    /// bundled templates are used when absent.
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub review: ReviewSection,
    #[serde(default)]
    pub trackers: Vec<TrackerConfig>,
    #[serde(default)]
    pub filter: HarvestFilter,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub backends: Vec<BackendEntry>,
    /// Backends voting on matches; all backends when empty.
    #[serde(default)]
    pub matchers: Vec<String>,
    pub generator: Option<String>,
    pub assessor: Option<String>,
    #[serde(default)]
    pub translator: Option<TranslatorConfig>,
    /// Directory that receives fixtures when recording is enabled.
    #[serde(default)]
    pub record_dir: Option<PathBuf>,
    /// Directory the config was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stories: Option<usize>,
    #[serde(default)]
    pub issues: Option<usize>,
    #[serde(default = "default_cap")]
    pub criteria_per_story_cap: usize,
}

fn default_cap() -> usize {
    10
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            seed: 0,
            stories: None,
            issues: None,
            criteria_per_story_cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewSection {
    #[serde(default = "default_m")]
    pub threshold_m: usize,
    #[serde(default = "default_n")]
    pub panel_n: usize,
}

fn default_m() -> usize {
    3
}
fn default_n() -> usize {
    4
}

impl Default for ReviewSection {
    fn default() -> Self {
        ReviewSection {
            threshold_m: default_m(),
            panel_n: default_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    #[serde(flatten)]
    pub source: TrackerSource,
    /// Environment variable holding the API token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default = "default_drop_sections")]
    pub drop_sections: Vec<String>,
    #[serde(default)]
    pub trivia: TriviaConfig,
}

fn default_drop_sections() -> Vec<String> {
    DEFAULT_DROP_SECTIONS.iter().map(|s| s.to_string()).collect()
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            drop_sections: default_drop_sections(),
            trivia: TriviaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TriviaConfig {
    #[default]
    Rules,
    Remote {
        endpoint: String,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default = "default_trivia_timeout")]
        timeout_s: u64,
    },
}

fn default_threshold() -> f64 {
    RemoteTriviaScorer::DEFAULT_THRESHOLD
}
fn default_trivia_timeout() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportConfig {
    Http,
    Mock {
        #[serde(default)]
        rules: Vec<MockRule>,
        #[serde(default)]
        default_reply: String,
    },
    Fixture {
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEntry {
    #[serde(flatten)]
    pub config: BackendConfig,
    #[serde(flatten)]
    pub transport: TransportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TranslatorConfig {
    Http {
        endpoint: String,
        #[serde(default)]
        auth_key_env: Option<String>,
        #[serde(default = "default_trivia_timeout")]
        timeout_s: u64,
    },
    Fixture {
        path: PathBuf,
    },
}

/// Backends by name.
pub type BackendSet = BTreeMap<String, Arc<Backend>>;

impl Config {
    pub fn from_toml(src: &str, base_dir: impl Into<PathBuf>) -> Result<Config, ConfigError> {
        let mut config: Config = toml::from_str(src)?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&src, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.review.threshold_m == 0 || self.review.threshold_m > self.review.panel_n {
            return invalid(format!(
                "review threshold {} must be between 1 and the panel size {}",
                self.review.threshold_m, self.review.panel_n
            ));
        }
        let mut names = std::collections::BTreeSet::new();
        for b in &self.backends {
            b.config.validate()?;
            if !names.insert(b.config.name.as_str()) {
                return invalid(format!("duplicate backend {}", b.config.name));
            }
            if matches!(b.transport, TransportConfig::Http) && b.config.endpoint.is_empty() {
                return invalid(format!("backend {} needs an endpoint", b.config.name));
            }
        }
        for name in self.matchers.iter().chain(&self.generator).chain(&self.assessor) {
            if !names.contains(name.as_str()) {
                return invalid(format!("unknown backend {name}"));
            }
        }
        Ok(())
    }

    pub fn store_path(&self) -> PathBuf {
        self.resolve(&self.store)
    }

    pub fn sample_spec(&self) -> SampleSpec {
        SampleSpec {
            seed: self.sampling.seed,
            story_count: self.sampling.stories,
            issue_count: self.sampling.issues,
            criteria_per_story_cap: self.sampling.criteria_per_story_cap,
        }
    }

    pub fn review_config(&self) -> ReviewConfig {
        ReviewConfig {
            threshold_m: self.review.threshold_m,
            panel_n: self.review.panel_n,
            per_story_cap: self.sampling.criteria_per_story_cap,
            seed: self.sampling.seed,
        }
    }

    /// Tracker sources with tokens read from their environment variables.
    pub fn tracker_sources(&self) -> Vec<TrackerSource> {
        self.trackers
            .iter()
            .map(|t| {
                let mut s = t.source.clone();
                if s.auth_token.is_none() {
                    s.auth_token = t.auth_token_env.as_ref().and_then(|v| std::env::var(v).ok());
                }
                // fixture page directories are relative to the config file
                if s.api_kind == ApiKind::GenericRestFixture {
                    let dir = s.base_url.strip_prefix("file://").unwrap_or(&s.base_url);
                    s.base_url = self.resolve(Path::new(dir)).display().to_string();
                }
                s
            })
            .collect()
    }

    pub fn preprocessor(&self) -> Result<Preprocessor, ConfigError> {
        let trivia: Box<dyn crate::preprocess::TriviaScorer> = match &self.preprocess.trivia {
            TriviaConfig::Rules => Box::new(RuleTrivia),
            TriviaConfig::Remote {
                endpoint,
                threshold,
                timeout_s,
            } => Box::new(
                RemoteTriviaScorer::new(endpoint.clone(), *threshold, Duration::from_secs(*timeout_s))
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
        };
        Ok(Preprocessor {
            cleaner: MarkdownCleaner::new(&self.preprocess.drop_sections),
            detector: Box::new(StopwordDetector::default()),
            trivia,
        })
    }

    /// Instantiates every configured backend. With `CRUISE_LLM_RECORD=1`,
    /// HTTP backends also write fixtures into `record_dir`.
    pub fn backends(&self) -> Result<BackendSet, ConfigError> {
        let recording = std::env::var(RECORD_ENV).is_ok_and(|v| v == "1");
        let mut set = BackendSet::new();
        for entry in &self.backends {
            let transport: Arc<dyn ChatTransport> = match &entry.transport {
                TransportConfig::Http => {
                    let http: Arc<dyn ChatTransport> = Arc::new(
                        HttpTransport::new(Duration::from_secs(entry.config.timeout_s))
                            .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                    );
                    if recording {
                        let dir = self.record_dir.as_ref().ok_or_else(|| {
                            ConfigError::Invalid(format!("{RECORD_ENV}=1 requires record_dir"))
                        })?;
                        Arc::new(RecordingTransport::new(http, self.resolve(dir)))
                    } else {
                        http
                    }
                }
                TransportConfig::Mock { rules, default_reply } => {
                    Arc::new(MockTransport::new(rules.clone(), default_reply.clone()))
                }
                TransportConfig::Fixture { dir } => Arc::new(FixtureTransport::new(self.resolve(dir))),
            };
            set.insert(
                entry.config.name.clone(),
                Arc::new(Backend::new(entry.config.clone(), transport)?),
            );
        }
        Ok(set)
    }

    pub fn translator(&self) -> Result<Option<Arc<dyn Translator>>, ConfigError> {
        Ok(match &self.translator {
            None => None,
            Some(TranslatorConfig::Http {
                endpoint,
                auth_key_env,
                timeout_s,
            }) => Some(Arc::new(
                HttpTranslator::new(
                    endpoint.clone(),
                    auth_key_env.as_ref().and_then(|v| std::env::var(v).ok()),
                    Duration::from_secs(*timeout_s),
                )
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            )),
            Some(TranslatorConfig::Fixture { path }) => Some(Arc::new(
                FixtureTranslator::from_file(&self.resolve(path)).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            )),
        })
    }

    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        Ok(match &self.prompts_dir {
            Some(dir) => PromptTemplates::from_dir(&self.resolve(dir))?,
            None => PromptTemplates::default(),
        })
    }

    /// Wires the pipeline from the configured backends.
    pub fn pipeline(&self, store: Arc<Store>, clock: Arc<dyn Clock>) -> Result<Pipeline, ConfigError> {
        let set = self.backends()?;
        if set.is_empty() {
            return Err(ConfigError::Invalid("no backends configured".into()));
        }
        let pick = |name: &Option<String>, role: &str| -> Result<Arc<Backend>, ConfigError> {
            match name {
                Some(n) => Ok(set[n].clone()),
                None if set.len() == 1 => Ok(set.values().next().unwrap().clone()),
                None => Err(ConfigError::Invalid(format!("{role} backend not set"))),
            }
        };
        let matchers: Vec<Arc<Backend>> = if self.matchers.is_empty() {
            set.values().cloned().collect()
        } else {
            self.matchers.iter().map(|n| set[n].clone()).collect()
        };
        let mut pipeline = Pipeline::new(
            store,
            matchers,
            pick(&self.generator, "generator")?,
            pick(&self.assessor, "assessor")?,
            self.domain_description.clone(),
            clock,
        )
        .map_err(|e: PipelineError| ConfigError::Invalid(e.to_string()))?
        .with_templates(self.templates()?)
        .with_concurrency(self.concurrency);
        if let Some(t) = self.translator()? {
            pipeline = pipeline.with_translator(t);
        }
        Ok(pipeline)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
store = "store"
domain_description = "online shop for outdoor gear"
matchers = ["a", "b", "c"]
generator = "c"
assessor = "c"

[sampling]
seed = 7
stories = 2
issues = 5

[review]
threshold_m = 2
panel_n = 3

[[trackers]]
name = "shopware"
base_url = "https://api.github.com/repos/shopware/shopware"
api_kind = "github_rest"
auth_token_env = "GITHUB_TOKEN"

[filter]
required_state = "closed"
excluded_labels = ["duplicate"]

[preprocess]
drop_sections = ["environment"]
trivia = { kind = "remote", endpoint = "http://localhost:9000" }

[[backends]]
name = "a"
kind = "http"
endpoint = "http://localhost:11434"
model = "gemma2:7b"

[[backends]]
name = "b"
kind = "fixture"
dir = "fixtures"

[[backends]]
name = "c"
kind = "mock"
default_reply = "no"
rules = [{ kind = "match", field = "issue", contains = "coupon", reply = "yes" }]
"#;

    #[test]
    fn parses_full_config() {
        let c = Config::from_toml(SAMPLE, "/etc/cruise").unwrap();
        assert_eq!(c.store_path(), PathBuf::from("/etc/cruise/store"));
        assert_eq!(c.sample_spec().story_count, Some(2));
        assert_eq!(c.review_config().threshold_m, 2);
        assert_eq!(c.trackers[0].source.page_size, 100);
        assert_eq!(c.backends.len(), 3);
        assert_eq!(c.backends[0].config.model(), "gemma2:7b");
        assert!(matches!(c.backends[1].transport, TransportConfig::Fixture { .. }));
        match &c.backends[2].transport {
            TransportConfig::Mock { rules, default_reply } => {
                assert_eq!(default_reply, "no");
                assert_eq!(rules[0].contains.as_deref(), Some("coupon"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.preprocess.trivia, TriviaConfig::Remote { threshold, .. } if threshold == 0.5));
        assert_eq!(c.backends().unwrap().len(), 3);
    }

    #[test]
    fn defaults() {
        let c = Config::from_toml("", ".").unwrap();
        assert_eq!(c.review.threshold_m, 3);
        assert_eq!(c.review.panel_n, 4);
        assert_eq!(c.sampling.criteria_per_story_cap, 10);
        assert_eq!(c.preprocess.drop_sections.len(), 6);
        assert_eq!(c.filter, HarvestFilter::default());
    }

    #[test]
    fn rejects_unknown_backend_reference() {
        let err = Config::from_toml("generator = \"nope\"", ".").unwrap_err();
        assert!(err.to_string().contains("unknown backend nope"));
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(Config::from_toml("[review]\nthreshold_m = 5\npanel_n = 4", ".").is_err());
    }
}
