use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalyzerConfig;
use crate::dense::MdrConfig;
use crate::error::{Error, Result};
use crate::eval::Gain;
use crate::ingest::ChunkingConfig;
use crate::kg::TripletWeights;
use crate::lexical::Bm25Params;
use crate::orchestrator::RetrievalConfig;
use crate::spell::SpellConfig;

pub const ENV_LISTEN: &str = "BIOSEARCH_LISTEN";
pub const ENV_INDEX: &str = "BIOSEARCH_INDEX";

/// Remote service settings shared by the HTTP plugin adapters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpPluginConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub batch_size: usize,
}

impl Default for HttpPluginConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            timeout_ms: 10_000,
            retries: 2,
            batch_size: 32,
        }
    }
}

impl HttpPluginConfig {
    fn validate(&self, which: &str) -> Result<()> {
        if self.url.is_empty() {
            return Err(Error::Config(format!("plugins.{which}_http.url is required")));
        }
        if self.batch_size == 0 || self.timeout_ms == 0 {
            return Err(Error::Config(format!(
                "plugins.{which}_http needs a positive batch_size and timeout_ms"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PluginConfig {
    pub encoder: String,
    pub reranker: String,
    pub reader: String,
    pub encoder_dimension: usize,
    pub encoder_seed: u64,
    pub encoder_http: Option<HttpPluginConfig>,
    pub reranker_http: Option<HttpPluginConfig>,
    pub reader_http: Option<HttpPluginConfig>,
}

impl Default for PluginConfig {
    fn default() -> Self {
        Self {
            encoder: "reference".into(),
            reranker: "baseline".into(),
            reader: "baseline".into(),
            encoder_dimension: 256,
            encoder_seed: 42,
            encoder_http: None,
            reranker_http: None,
            reader_http: None,
        }
    }
}

fn http_section<'a>(id: &str, which: &str, section: &'a Option<HttpPluginConfig>) -> Result<Option<&'a HttpPluginConfig>> {
    if id != "http" {
        return Ok(None);
    }
    let cfg = section
        .as_ref()
        .ok_or_else(|| Error::Config(format!("plugin `http` for {which} needs a [plugins.{which}_http] section")))?;
    cfg.validate(which)?;
    Ok(Some(cfg))
}

impl PluginConfig {
    pub fn validate(&self) -> Result<()> {
        for (which, id, known) in [
            ("encoder", &self.encoder, crate::plugins::ENCODERS),
            ("reranker", &self.reranker, crate::plugins::RERANKERS),
            ("reader", &self.reader, crate::plugins::READERS),
        ] {
            if !known.contains(&id.as_str()) {
                return Err(Error::UnknownPlugin(format!("{which} `{id}` (known: {})", known.join(", "))));
            }
        }
        http_section(&self.encoder, "encoder", &self.encoder_http)?;
        http_section(&self.reranker, "reranker", &self.reranker_http)?;
        http_section(&self.reader, "reader", &self.reader_http)?;
        if self.encoder_dimension < 8 {
            return Err(Error::Config("plugins.encoder_dimension must be at least 8".into()));
        }
        Ok(())
    }

    pub(crate) fn encoder_http(&self) -> Result<Option<&HttpPluginConfig>> {
        http_section(&self.encoder, "encoder", &self.encoder_http)
    }

    pub(crate) fn reranker_http(&self) -> Result<Option<&HttpPluginConfig>> {
        http_section(&self.reranker, "reranker", &self.reranker_http)
    }

    pub(crate) fn reader_http(&self) -> Result<Option<&HttpPluginConfig>> {
        http_section(&self.reader, "reader", &self.reader_http)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Requests processed at once; the rest wait.
    pub max_concurrency: usize,
    /// Triplets returned when a request does not say.
    pub default_triplet_k: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            max_concurrency: 64,
            default_triplet_k: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub analyzer: AnalyzerConfig,
    pub bm25: Bm25Params,
    pub chunking: ChunkingConfig,
    pub retrieval: RetrievalConfig,
    pub mdr: MdrConfig,
    pub spell: SpellConfig,
    pub triplet_weights: TripletWeights,
    pub gain: Gain,
    pub plugins: PluginConfig,
    pub service: ServiceConfig,
    pub index_dir: Option<PathBuf>,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.analyzer.validate()?;
        self.bm25.validate()?;
        self.chunking.validate()?;
        self.retrieval.validate()?;
        self.mdr.validate()?;
        self.spell.validate()?;
        self.triplet_weights.validate()?;
        self.plugins.validate()?;
        if self.service.max_concurrency == 0 || self.service.default_triplet_k == 0 {
            return Err(Error::Config(
                "service.max_concurrency and service.default_triplet_k must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Listen address and index directory from the environment, if set.
    pub fn apply_env(&mut self) {
        self.apply_overrides(std::env::var(ENV_LISTEN).ok(), std::env::var(ENV_INDEX).ok());
    }

    pub fn apply_overrides(&mut self, listen: Option<String>, index_dir: Option<String>) {
        if let Some(l) = listen.filter(|s| !s.is_empty()) {
            self.service.listen = l;
        }
        if let Some(d) = index_dir.filter(|s| !s.is_empty()) {
            self.index_dir = Some(PathBuf::from(d));
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
