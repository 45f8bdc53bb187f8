//! Enriches user stories with acceptance criteria mined from closed issues
//! of related projects.
//!
//! The flow is: harvest issues ([`ingest`]), clean them ([`preprocess`]),
//! match them against stories with an LLM ensemble, generate Gherkin
//! criteria and assess their relevance ([`pipeline`], [`llm`]), then let
//! reviewers approve or decline them ([`review`]) and measure agreement
//! ([`metrics`]). Everything persists in a [`store::Store`].

pub mod clock;
pub mod config;
pub mod error;
pub mod gherkin;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod review;
pub mod store;

pub use error::{Error, Result};
