//! A complete searchable snapshot: paragraphs and passages, the lexical and
//! dense indexes, the spelling vocabulary and the triplet store, with
//! save/load to one directory and a content fingerprint.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{normalize, parse_query, tokenize, AnalyzerConfig};
use crate::config::EngineConfig;
use crate::dense::{read_dense, write_dense, DenseIndex, Encoder};
use crate::error::{Error, Result};
use crate::ingest::{chunk_passages, segment_paragraphs, ChunkingConfig, Paragraph, Passage, SourceDocument};
use crate::kg::{export_graph, facet_counts, FacetCounts, FacetFilter, GraphExport, KnowledgeSynthesizer, Triplet, TripletIndex};
use crate::lexical::{read_index, write_index, LexicalIndex};
use crate::orchestrator::{
    answer_question, classify_query, retrieve_paragraphs, Answer, QueryKind, RankedResult, Reader, Reranker,
    SemanticRetriever, UnitStore,
};
use crate::plugins::{build_encoder, build_reader, build_reranker};
use crate::spell::{correct_query, Correction, LanguageModel};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SNAPSHOT_FORMAT: &str = "biosearch-engine";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Files of a snapshot directory in fingerprint order.
pub const SNAPSHOT_FILES: [&str; 7] = [
    "engine.json",
    "paragraphs.ndjson",
    "passages.ndjson",
    "lexical.bin",
    "vocab.tsv",
    "dense.bin",
    "triplets.ndjson",
];

/// Settings fixed at build time and stored with the snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub format: String,
    pub format_version: u32,
    pub engine_version: String,
    pub analyzer: AnalyzerConfig,
    pub chunking: ChunkingConfig,
    pub encoder: String,
    pub stats: IndexStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub documents: usize,
    pub paragraphs: usize,
    pub passages: usize,
    pub vocabulary: usize,
    pub triplets: usize,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpellResponse {
    pub query: String,
    pub corrected: String,
    pub changed: bool,
    pub corrections: Vec<Correction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub kind: QueryKind,
    pub results: Vec<RankedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriplet {
    pub score: f64,
    pub triplet: Triplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletsResponse {
    pub query: String,
    pub facets: FacetFilter,
    pub results: Vec<ScoredTriplet>,
    pub facet_counts: FacetCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaResponse {
    pub question: String,
    pub kind: QueryKind,
    /// Absent when the query is not a question or QA is disabled.
    pub answer: Option<Answer>,
}

pub struct Engine {
    config: EngineConfig,
    manifest: SnapshotManifest,
    store: UnitStore,
    lexical: LexicalIndex,
    vocab: LanguageModel,
    dense: DenseIndex,
    triplets: TripletIndex,
    encoder: Arc<dyn Encoder>,
    reranker: Arc<dyn Reranker>,
    reader: Arc<dyn Reader>,
    fingerprint: String,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("stats", &self.manifest.stats)
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

fn vocabulary<'a>(paragraphs: impl Iterator<Item = &'a Paragraph>, analyzer: &AnalyzerConfig) -> LanguageModel {
    LanguageModel::from_terms(
        paragraphs
            .flat_map(|p| tokenize(&p.text))
            .map(|t| normalize(&t.term, analyzer)),
    )
}

fn ndjson<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn read_ndjson<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// SHA-256 over each snapshot file's name, length and contents, in order.
pub fn fingerprint_dir(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in SNAPSHOT_FILES {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

impl Engine {
    /// Builds every index from the documents. `extra_triplets` are added to
    /// the synthesized ones.
    pub fn build(
        docs: &[SourceDocument],
        config: EngineConfig,
        synthesizer: &KnowledgeSynthesizer,
        extra_triplets: Vec<Triplet>,
    ) -> Result<Self> {
        config.validate()?;
        let per_doc: Vec<(Vec<Paragraph>, Vec<Passage>, Vec<Triplet>)> = docs
            .par_iter()
            .map(|d| {
                Ok((
                    segment_paragraphs(d),
                    chunk_passages(d, &config.chunking)?,
                    synthesizer.synthesize(d),
                ))
            })
            .collect::<Result<_>>()?;
        let mut paragraphs = Vec::new();
        let mut passages = Vec::new();
        let mut triplets = Vec::new();
        for (p, q, t) in per_doc {
            paragraphs.extend(p);
            passages.extend(q);
            triplets.extend(t);
        }
        triplets.extend(extra_triplets);

        let store = UnitStore::from_parts(paragraphs, passages)?;
        let lexical = LexicalIndex::build(
            store.paragraphs().map(|p| (p.para_id.as_str(), p.text.as_str())),
            config.analyzer,
        )?;
        let vocab = vocabulary(store.paragraphs(), &config.analyzer);
        let encoder = build_encoder(&config.plugins)?;
        let passage_list: Vec<Passage> = store.passages().cloned().collect();
        let dense = DenseIndex::index_passages(&passage_list, encoder.as_ref())?;
        let triplets =
            TripletIndex::with_params(triplets, config.analyzer, config.triplet_weights, config.bm25)?;

        let manifest = SnapshotManifest {
            format: SNAPSHOT_FORMAT.into(),
            format_version: SNAPSHOT_VERSION,
            engine_version: ENGINE_VERSION.into(),
            analyzer: config.analyzer,
            chunking: config.chunking,
            encoder: encoder.identifier(),
            stats: IndexStats {
                documents: docs.len(),
                paragraphs: lexical.len(),
                passages: dense.len(),
                vocabulary: vocab.len(),
                triplets: triplets.len(),
                dimension: dense.dimension(),
            },
        };
        let mut engine = Self {
            reranker: build_reranker(&config.plugins, &config.analyzer)?,
            reader: build_reader(&config.plugins)?,
            config,
            manifest,
            store,
            lexical,
            vocab,
            dense,
            triplets,
            encoder,
            fingerprint: String::new(),
        };
        engine.fingerprint = engine.snapshot_fingerprint()?;
        Ok(engine)
    }

    fn snapshot_bytes(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let mut manifest = serde_json::to_vec_pretty(&self.manifest).expect("serializable");
        manifest.push(b'\n');
        let mut lexical = Vec::new();
        write_index(&self.lexical, &mut lexical).expect("in-memory write");
        let mut vocab = Vec::new();
        self.vocab.write_table(&mut vocab).expect("in-memory write");
        let mut dense = Vec::new();
        write_dense(&self.dense, &mut dense).expect("in-memory write");
        Ok(vec![
            ("engine.json", manifest),
            ("paragraphs.ndjson", ndjson(self.store.paragraphs())),
            ("passages.ndjson", ndjson(self.store.passages())),
            ("lexical.bin", lexical),
            ("vocab.tsv", vocab),
            ("dense.bin", dense),
            ("triplets.ndjson", ndjson(self.triplets.triplets())),
        ])
    }

    fn snapshot_fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, bytes) in self.snapshot_bytes()? {
            h.update(name.as_bytes());
            h.update([0]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in self.snapshot_bytes()? {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            w.write_all(&bytes)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Loads a snapshot. Build-time settings come from the snapshot; the
    /// configured encoder must produce the identifier the snapshot was
    /// built with.
    pub fn load(dir: &Path, mut config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let manifest_path = dir.join("engine.json");
        if !manifest_path.exists() {
            return Err(Error::NotFound {
                kind: "index",
                id: dir.display().to_string(),
            });
        }
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: SnapshotManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        if manifest.format != SNAPSHOT_FORMAT || manifest.format_version != SNAPSHOT_VERSION {
            return Err(Error::format(
                &manifest_path,
                format!(
                    "snapshot {} version {} is not supported (expected {SNAPSHOT_FORMAT} version {SNAPSHOT_VERSION})",
                    manifest.format, manifest.format_version
                ),
            ));
        }
        if config.analyzer != manifest.analyzer || config.chunking != manifest.chunking {
            log::warn!("analyzer/chunking settings differ from the snapshot; using the snapshot's");
        }
        config.analyzer = manifest.analyzer;
        config.chunking = manifest.chunking;

        let encoder = build_encoder(&config.plugins)?;
        if encoder.identifier() != manifest.encoder {
            return Err(Error::Config(format!(
                "snapshot was built with encoder `{}` but `{}` is configured",
                manifest.encoder,
                encoder.identifier()
            )));
        }

        let paragraphs: Vec<Paragraph> = read_ndjson(&dir.join("paragraphs.ndjson"))?;
        let passages: Vec<Passage> = read_ndjson(&dir.join("passages.ndjson"))?;
        let store = UnitStore::from_parts(paragraphs, passages)?;

        let open = |name: &str| -> Result<(PathBuf, BufReader<File>)> {
            let path = dir.join(name);
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            Ok((path, BufReader::new(f)))
        };
        let (path, r) = open("lexical.bin")?;
        let lexical = read_index(r, &path)?;
        let (_, r) = open("vocab.tsv")?;
        let vocab = LanguageModel::read_table(r)?;
        let (path, r) = open("dense.bin")?;
        let dense = read_dense(r, &path)?;
        if dense.encoder_id() != manifest.encoder {
            return Err(Error::format(&path, "encoder identifier differs from engine.json"));
        }
        let triplets: Vec<Triplet> = read_ndjson(&dir.join("triplets.ndjson"))?;
        let triplets = TripletIndex::with_params(triplets, config.analyzer, config.triplet_weights, config.bm25)?;
        if lexical.analyzer() != &manifest.analyzer {
            return Err(Error::format(&dir.join("lexical.bin"), "analyzer settings differ from engine.json"));
        }

        let fingerprint = fingerprint_dir(dir)?;
        Ok(Self {
            reranker: build_reranker(&config.plugins, &config.analyzer)?,
            reader: build_reader(&config.plugins)?,
            config,
            manifest,
            store,
            lexical,
            vocab,
            dense,
            triplets,
            encoder,
            fingerprint,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> IndexStats {
        self.manifest.stats
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn store(&self) -> &UnitStore {
        &self.store
    }

    pub fn lexical(&self) -> &LexicalIndex {
        &self.lexical
    }

    pub fn vocabulary(&self) -> &LanguageModel {
        &self.vocab
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    pub fn triplet_index(&self) -> &TripletIndex {
        &self.triplets
    }

    fn semantic(&self) -> SemanticRetriever<'_> {
        SemanticRetriever {
            encoder: self.encoder.as_ref(),
            index: &self.dense,
            mdr: &self.config.mdr,
        }
    }

    pub fn spell(&self, raw: &str) -> Result<SpellResponse> {
        let ast = parse_query(raw)?;
        let r = correct_query(&ast, &self.vocab, &self.config.spell, &self.config.analyzer);
        Ok(SpellResponse {
            query: raw.to_string(),
            corrected: r.query.to_query_string(),
            changed: r.changed,
            corrections: r.corrections,
        })
    }

    pub fn search(&self, raw: &str, r: Option<usize>) -> Result<SearchResponse> {
        let ast = parse_query(raw)?;
        let mut retrieval = self.config.retrieval;
        if let Some(r) = r {
            retrieval.r = r;
        }
        retrieval.validate()?;
        let sem = self.semantic();
        let results = retrieve_paragraphs(
            &ast,
            &retrieval,
            &self.config.bm25,
            &self.lexical,
            &self.store,
            Some(&sem),
            self.reranker.as_ref(),
        )?;
        Ok(SearchResponse {
            query: raw.to_string(),
            kind: classify_query(raw),
            results,
        })
    }

    pub fn search_triplets(&self, raw: &str, facets: &FacetFilter, k: Option<usize>) -> Result<TripletsResponse> {
        let ast = parse_query(raw)?;
        let k = k.unwrap_or(self.config.service.default_triplet_k);
        let hits = self.triplets.search(&ast, facets, k)?;
        let counts = facet_counts(hits.iter().map(|(t, _)| *t));
        Ok(TripletsResponse {
            query: raw.to_string(),
            facets: facets.clone(),
            results: hits
                .into_iter()
                .map(|(t, score)| ScoredTriplet {
                    score,
                    triplet: t.clone(),
                })
                .collect(),
            facet_counts: counts,
        })
    }

    pub fn qa(&self, question: &str) -> Result<QaResponse> {
        if question.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        let kind = classify_query(question);
        let answer = if kind == QueryKind::Question {
            answer_question(
                question,
                &self.semantic(),
                &self.store,
                &self.config.retrieval,
                self.reranker.as_ref(),
                self.reader.as_ref(),
            )?
        } else {
            None
        };
        Ok(QaResponse {
            question: question.to_string(),
            kind,
            answer,
        })
    }

    pub fn export_graph(&self) -> GraphExport {
        export_graph(self.triplets.triplets())
    }
}
