//! Hybrid retrieval over biomedical literature: lexical search with phrase,
//! bigram and edge n-gram keyword mechanisms, dense multi-hop passage
//! retrieval, a triplet knowledge store with facets, spelling correction,
//! question answering and evaluation.

pub mod analysis;
pub mod config;
pub mod dense;
pub mod engine;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod kg;
pub mod lexical;
pub mod orchestrator;
pub mod plugins;
pub mod spell;

pub use config::EngineConfig;
pub use engine::Engine;
pub use error::{Error, Result};
