//! Flat dense passage index with exact maximum-inner-product search and an
//! iterative multi-hop retriever that builds scored passage chains.

mod codec;
mod encoder;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Passage;

pub use codec::{read_dense, write_dense, DENSE_FORMAT_VERSION};
pub use encoder::{Encoder, ReferenceEncoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// How per-hop inner products combine into a chain score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainScoring {
    #[default]
    Sum,
    Product,
}

impl ChainScoring {
    pub fn combine(self, hop_scores: &[f64]) -> f64 {
        match self {
            ChainScoring::Sum => hop_scores.iter().sum(),
            ChainScoring::Product => hop_scores.iter().product(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdrConfig {
    pub iterations: usize,
    pub beam_k: usize,
    pub chain_k: usize,
    pub scoring: ChainScoring,
}

impl Default for MdrConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            beam_k: 8,
            chain_k: 5,
            scoring: ChainScoring::Sum,
        }
    }
}

impl MdrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.beam_k == 0 || self.chain_k == 0 {
            return Err(Error::Config(format!(
                "mdr requires iterations, beam_k and chain_k >= 1 (got {}, {}, {})",
                self.iterations, self.beam_k, self.chain_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopChain {
    pub passages: Vec<String>,
    pub hop_scores: Vec<f64>,
    pub combined_score: f64,
}

/// Source of passage texts for query reformulation between hops.
pub trait PassageLookup {
    fn passage_text(&self, passage_id: &str) -> Option<&str>;
}

impl PassageLookup for HashMap<String, String> {
    fn passage_text(&self, passage_id: &str) -> Option<&str> {
        self.get(passage_id).map(String::as_str)
    }
}

impl PassageLookup for BTreeMap<String, String> {
    fn passage_text(&self, passage_id: &str) -> Option<&str> {
        self.get(passage_id).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dimension: usize,
    encoder_id: String,
    ids: Vec<String>,
    /// Row-major `ids.len() × dimension`.
    vectors: Vec<f32>,
}

const ENCODE_BATCH: usize = 64;

impl DenseIndex {
    /// Encodes every passage. Output order follows input order.
    pub fn index_passages(passages: &[Passage], enc: &dyn Encoder) -> Result<Self> {
        let mut seen = HashSet::with_capacity(passages.len());
        for p in passages {
            if !seen.insert(p.passage_id.as_str()) {
                return Err(Error::Duplicate {
                    kind: "passage",
                    id: p.passage_id.clone(),
                });
            }
        }
        let batches: Vec<Vec<Embedding>> = passages
            .par_chunks(ENCODE_BATCH)
            .map(|chunk| {
                let texts: Vec<&str> = chunk.iter().map(|p| p.text.as_str()).collect();
                enc.encode_passages(&texts)
            })
            .collect::<Result<_>>()?;
        let embeddings: Vec<Embedding> = batches.into_iter().flatten().collect();
        Self::from_embeddings(
            passages.iter().map(|p| p.passage_id.clone()).collect(),
            &embeddings,
            enc.dimension(),
            enc.identifier(),
        )
    }

    pub fn from_embeddings(
        ids: Vec<String>,
        embeddings: &[Embedding],
        dimension: usize,
        encoder_id: impl Into<String>,
    ) -> Result<Self> {
        if ids.len() != embeddings.len() {
            return Err(Error::Config(format!(
                "{} ids for {} embeddings",
                ids.len(),
                embeddings.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Duplicate {
                    kind: "passage",
                    id: id.clone(),
                });
            }
        }
        let mut vectors = Vec::with_capacity(ids.len() * dimension);
        for e in embeddings {
            if e.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: e.dimension(),
                });
            }
            if !e.is_finite() {
                return Err(Error::Config("embedding has non-finite entries".into()));
            }
            vectors.extend(e.0.iter().map(|&x| x as f32));
        }
        Ok(Self {
            dimension,
            encoder_id: encoder_id.into(),
            ids,
            vectors,
        })
    }

    pub(crate) fn from_raw(dimension: usize, encoder_id: String, ids: Vec<String>, vectors: Vec<f32>) -> Self {
        Self {
            dimension,
            encoder_id,
            ids,
            vectors,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub(crate) fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// The stored (single-precision) vector of entry `i`.
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    fn score(&self, q: &Embedding, i: usize) -> f64 {
        self.vector(i)
            .iter()
            .zip(&q.0)
            .map(|(&v, &x)| f64::from(v) * x)
            .sum()
    }

    fn check_dim(&self, q: &Embedding) -> Result<()> {
        if q.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: q.dimension(),
            });
        }
        Ok(())
    }

    fn top_k(&self, q: &Embedding, k: usize, exclude: &[usize]) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|i| !exclude.contains(i))
            .map(|i| (i, self.score(q, i)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        });
        scored.truncate(k);
        scored
    }

    /// Exhaustive top-k by inner product; ties go to the smaller passage id.
    pub fn mips_search(&self, q: &Embedding, k: usize) -> Result<Vec<(String, f64)>> {
        self.check_dim(q)?;
        Ok(self
            .top_k(q, k, &[])
            .into_iter()
            .map(|(i, s)| (self.ids[i].clone(), s))
            .collect())
    }
}

/// Iterative retrieval: each hop re-encodes the question together with the
/// passages already in the chain and extends the chain with the `beam_k` best
/// unseen passages. Chains are ranked by their combined hop score.
pub fn multi_hop_retrieve(
    question: &str,
    enc: &dyn Encoder,
    idx: &DenseIndex,
    texts: &dyn PassageLookup,
    cfg: &MdrConfig,
) -> Result<Vec<HopChain>> {
    cfg.validate()?;
    if idx.is_empty() {
        return Ok(Vec::new());
    }
    let mut partial: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new())];
    for _ in 0..cfg.iterations {
        let mut next = Vec::new();
        for (chain, scores) in &partial {
            let prior: Vec<&str> = chain
                .iter()
                .map(|&i| {
                    texts.passage_text(&idx.ids[i]).ok_or_else(|| Error::NotFound {
                        kind: "passage text",
                        id: idx.ids[i].clone(),
                    })
                })
                .collect::<Result<_>>()?;
            let q = enc.encode_query(question, &prior)?;
            idx.check_dim(&q)?;
            for (i, s) in idx.top_k(&q, cfg.beam_k, chain) {
                let mut c = chain.clone();
                c.push(i);
                let mut sc = scores.clone();
                sc.push(s);
                next.push((c, sc));
            }
        }
        if next.is_empty() {
            // fewer passages than hops: keep the chains we have
            break;
        }
        partial = next;
    }

    let mut chains: Vec<HopChain> = partial
        .into_iter()
        .map(|(chain, scores)| HopChain {
            passages: chain.iter().map(|&i| idx.ids[i].clone()).collect(),
            combined_score: cfg.scoring.combine(&scores),
            hop_scores: scores,
        })
        .collect();
    sort_chains(&mut chains);
    chains.truncate(cfg.chain_k);
    Ok(chains)
}

/// Combined score descending, then passage-id sequence ascending.
pub fn sort_chains(chains: &mut [HopChain]) {
    chains.sort_by(|a, b| {
        b.combined_score
            .partial_cmp(&a.combined_score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.passages.cmp(&b.passages))
    });
}
