//! Metadata-based dataset exploration.
//!
//! The crate is organised around the retrieval-augmented recommendation loop:
//!
//! 1. [`catalog`] ingests line-delimited dataset metadata and validates it.
//! 2. [`embedding`] composes metadata text per [`CompositionMode`] and turns it
//!    into vectors through a pluggable [`EmbeddingProvider`].
//! 3. [`vector_store`] answers exact top-N cosine queries.
//! 4. [`pipeline`] renders the task question, builds the prompt, calls the
//!    [`LlmClient`] and resolves the answer against the catalog.
//! 5. [`evaluation`] runs the experiment grid and writes reports.

pub mod catalog;
pub mod embedding;
pub mod evaluation;
pub mod hdx;
pub mod http;
pub mod pipeline;
pub mod similarity;
#[cfg(feature = "testing")]
pub mod testing;
pub mod text;
pub mod vector_store;

pub use catalog::{Catalog, CatalogStats, DatasetMetadata};
pub use embedding::{CompositionMode, EmbeddingProvider, EmbeddingVector};
pub use pipeline::{LlmClient, TaskKind};
pub use similarity::{CategoryLabel, SourceClass, VariableSet};
pub use vector_store::{RetrievalHit, VectorIndex};
