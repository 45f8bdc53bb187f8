use thiserror::Error;

use crate::config::ConfigError;
use crate::gherkin::GherkinError;
use crate::ingest::HarvestError;
use crate::llm::LlmError;
use crate::metrics::MetricsError;
use crate::pipeline::PipelineError;
use crate::preprocess::PreprocessError;
use crate::store::StoreError;

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Harvest(#[from] HarvestError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Gherkin(#[from] GherkinError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
