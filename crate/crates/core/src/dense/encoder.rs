use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::Embedding;
use crate::analysis::{normalize, tokenize, AnalyzerConfig};
use crate::error::{Error, Result};

/// Maps passages and (question, prior passages) pairs into one vector space.
pub trait Encoder: Send + Sync {
    /// Stable identifier written into the dense index header.
    fn identifier(&self) -> String;

    fn dimension(&self) -> usize;

    fn encode_passage(&self, text: &str) -> Result<Embedding>;

    fn encode_query(&self, question: &str, prior_passages: &[&str]) -> Result<Embedding>;

    fn encode_passages(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.encode_passage(t)).collect()
    }
}

/// Deterministic hashing encoder.
///
/// Features are lowercased word unigrams plus character trigrams of each
/// word (padded with `^`/`$`). Each feature is projected onto `dimension`
/// axes by an implicit random sign matrix whose rows are derived from a
/// seeded 64-bit hash of the feature; the result is L2-normalized.
#[derive(Debug, Clone)]
pub struct ReferenceEncoder {
    dimension: usize,
    seed: u64,
    analyzer: AnalyzerConfig,
}

const TRIGRAM_WEIGHT: f64 = 0.5;

impl ReferenceEncoder {
    pub const MIN_DIMENSION: usize = 8;

    pub fn new(dimension: usize, seed: u64) -> Result<Self> {
        if dimension < Self::MIN_DIMENSION {
            return Err(Error::Config(format!(
                "reference encoder needs dimension >= {} (got {dimension})",
                Self::MIN_DIMENSION
            )));
        }
        Ok(Self {
            dimension,
            seed,
            analyzer: AnalyzerConfig::default(),
        })
    }

    fn add_feature(&self, acc: &mut [f64], feature: &[u8], weight: f64) {
        for (block, chunk) in acc.chunks_mut(64).enumerate() {
            let bits = xxh3_64_with_seed(feature, self.seed.wrapping_add(block as u64));
            for (j, slot) in chunk.iter_mut().enumerate() {
                if bits >> j & 1 == 1 {
                    *slot += weight;
                } else {
                    *slot -= weight;
                }
            }
        }
    }

    fn embed(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0; self.dimension];
        let mut buf = Vec::new();
        for tok in tokenize(text) {
            let term = normalize(&tok.term, &self.analyzer);
            buf.clear();
            buf.extend_from_slice(b"w:");
            buf.extend_from_slice(term.as_bytes());
            self.add_feature(&mut acc, &buf, 1.0);

            let padded: Vec<char> = std::iter::once('^')
                .chain(term.chars())
                .chain(std::iter::once('$'))
                .collect();
            for tri in padded.windows(3) {
                buf.clear();
                buf.extend_from_slice(b"c:");
                for c in tri {
                    let mut tmp = [0u8; 4];
                    buf.extend_from_slice(c.encode_utf8(&mut tmp).as_bytes());
                }
                self.add_feature(&mut acc, &buf, TRIGRAM_WEIGHT);
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        Embedding(acc)
    }
}

impl Encoder for ReferenceEncoder {
    fn identifier(&self) -> String {
        format!("reference-v1:d{}:s{}", self.dimension, self.seed)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode_passage(&self, text: &str) -> Result<Embedding> {
        Ok(self.embed(text))
    }

    fn encode_query(&self, question: &str, prior_passages: &[&str]) -> Result<Embedding> {
        let mut text = question.to_string();
        for p in prior_passages {
            text.push(' ');
            text.push_str(p);
        }
        Ok(self.embed(&text))
    }
}
