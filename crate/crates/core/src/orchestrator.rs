//! Merged paragraph retrieval across the four mechanisms, re-ranking, and the
//! multi-hop question answering flow.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::analysis::{extract_bigrams, normalize, tokenize, AnalyzerConfig, QueryAst};
use crate::dense::{multi_hop_retrieve, DenseIndex, Encoder, HopChain, MdrConfig, PassageLookup};
use crate::error::{Error, Result};
use crate::ingest::{chunk_passages, paragraph_for_token, segment_paragraphs, ChunkingConfig, Paragraph, Passage, SourceDocument};
use crate::lexical::{Bm25Params, LexicalIndex, Mechanism, ScoredHit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub r: usize,
    /// Hits fetched from each mechanism; `None` means `r`.
    pub per_mechanism_k: Option<usize>,
    pub qa_enabled: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            r: 20,
            per_mechanism_k: None,
            qa_enabled: true,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Config("retrieval.r must be at least 1".into()));
        }
        if self.per_mechanism_k == Some(0) {
            return Err(Error::Config("retrieval.per_mechanism_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn fetch_k(&self) -> usize {
        self.per_mechanism_k.unwrap_or(self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub unit_id: String,
    pub text: String,
    pub mechanism: Mechanism,
    pub retrieval_score: f64,
    pub rerank_score: Option<f64>,
}

/// Relevance of a passage to a query, in `[0, 1]`.
pub trait Reranker: Send + Sync {
    fn identifier(&self) -> String;

    fn score(&self, query: &str, passage: &str) -> Result<f64>;

    fn score_batch(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>> {
        passages.iter().map(|p| self.score(query, p)).collect()
    }
}

/// Fraction of distinct query terms present in the passage.
#[derive(Debug, Clone, Default)]
pub struct BaselineReranker {
    analyzer: AnalyzerConfig,
}

impl BaselineReranker {
    pub fn new(analyzer: AnalyzerConfig) -> Self {
        Self { analyzer }
    }
}

fn term_set(text: &str, analyzer: &AnalyzerConfig) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .map(|t| normalize(&t.term, analyzer))
        .filter(|t| !t.is_empty())
        .collect()
}

impl Reranker for BaselineReranker {
    fn identifier(&self) -> String {
        "baseline".into()
    }

    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        let q = term_set(query, &self.analyzer);
        if q.is_empty() {
            return Ok(0.0);
        }
        let p = term_set(passage, &self.analyzer);
        Ok(q.intersection(&p).count() as f64 / q.len() as f64)
    }
}

/// Character offsets (Unicode scalar values) of an answer inside one context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub context: usize,
    pub start: usize,
    pub end: usize,
}

impl AnswerSpan {
    pub fn text<'a>(&self, contexts: &[&'a str]) -> Option<&'a str> {
        let ctx = contexts.get(self.context)?;
        let mut idx = ctx.char_indices().map(|(i, _)| i).chain(std::iter::once(ctx.len()));
        let start = idx.nth(self.start)?;
        let end = if self.end == self.start {
            start
        } else {
            idx.nth(self.end - self.start - 1)?
        };
        ctx.get(start..end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderOutput {
    pub answer: String,
    pub span: Option<AnswerSpan>,
    pub confidence: f64,
}

impl ReaderOutput {
    pub fn empty() -> Self {
        Self {
            answer: String::new(),
            span: None,
            confidence: 0.0,
        }
    }
}

pub trait Reader: Send + Sync {
    fn identifier(&self) -> String;

    fn read(&self, question: &str, contexts: &[&str]) -> Result<ReaderOutput>;
}

const READER_STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "by", "for", "with", "from", "to", "into", "about", "and", "or", "but",
    "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "has", "have", "had", "can", "could",
    "will", "would", "should", "may", "might", "how", "many", "much", "what", "which", "where", "when", "who",
    "whom", "whose", "why", "that", "this", "these", "those", "there", "it", "its", "they", "them", "their", "as",
    "than", "then", "so", "such", "not", "no",
];

/// Extractive span picker. Every span of 1 to `max_span` tokens that neither
/// starts nor ends with a stopword is scored by the share of distinct
/// question terms found within `window` tokens on either side, minus the
/// share of the span's own tokens that are question terms. Ties go to the
/// shorter span, then the earlier context, then the earlier position.
#[derive(Debug, Clone)]
pub struct BaselineReader {
    pub max_span: usize,
    pub window: usize,
    analyzer: AnalyzerConfig,
}

impl Default for BaselineReader {
    fn default() -> Self {
        Self {
            max_span: 8,
            window: 2,
            analyzer: AnalyzerConfig::default(),
        }
    }
}

/// (normalized term, char start, char end)
fn located_tokens(text: &str, analyzer: &AnalyzerConfig) -> Vec<(String, usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && !chars[j].is_whitespace() {
            j += 1;
        }
        let (mut s, mut e) = (i, j);
        while s < e && !chars[s].is_alphanumeric() {
            s += 1;
        }
        while e > s && !chars[e - 1].is_alphanumeric() {
            e -= 1;
        }
        if s < e {
            let raw: String = chars[s..e].iter().collect();
            out.push((normalize(&raw, analyzer), s, e));
        }
        i = j;
    }
    out
}

impl BaselineReader {
    fn question_terms(&self, question: &str) -> BTreeSet<String> {
        term_set(question, &self.analyzer)
            .into_iter()
            .filter(|t| !READER_STOPWORDS.contains(&t.as_str()))
            .collect()
    }
}

impl Reader for BaselineReader {
    fn identifier(&self) -> String {
        "baseline".into()
    }

    fn read(&self, question: &str, contexts: &[&str]) -> Result<ReaderOutput> {
        let q = self.question_terms(question);
        if q.is_empty() {
            return Ok(ReaderOutput::empty());
        }
        let qn = q.len() as i64;
        // (score numerator, score denominator, span length, context, start token, end token)
        let mut best: Option<(i64, i64, usize, usize, usize, usize)> = None;
        let mut best_tokens = Vec::new();
        for (ci, ctx) in contexts.iter().enumerate() {
            let toks = located_tokens(ctx, &self.analyzer);
            let stop = |t: &(String, usize, usize)| READER_STOPWORDS.contains(&t.0.as_str()) || t.0.is_empty();
            for start in 0..toks.len() {
                if stop(&toks[start]) {
                    continue;
                }
                for end in start + 1..=(start + self.max_span).min(toks.len()) {
                    if stop(&toks[end - 1]) {
                        continue;
                    }
                    let len = (end - start) as i64;
                    let inside = toks[start..end].iter().filter(|t| q.contains(t.0.as_str())).count() as i64;
                    let left = start.saturating_sub(self.window);
                    let right = (end + self.window).min(toks.len());
                    let around: HashSet<&str> = toks[left..start]
                        .iter()
                        .chain(&toks[end..right])
                        .map(|t| t.0.as_str())
                        .filter(|t| q.contains(*t))
                        .collect();
                    let num = around.len() as i64 * len - inside * qn;
                    let den = qn * len;
                    let cand = (num, den, end - start, ci, start, end);
                    let better = match best {
                        None => true,
                        Some(b) => {
                            let (l, r) = (num * b.1, b.0 * den);
                            l > r || (l == r && (cand.2, cand.3, cand.4) < (b.2, b.3, b.4))
                        }
                    };
                    if better {
                        if best.map_or(true, |b| b.3 != ci) {
                            best_tokens = toks.clone();
                        }
                        best = Some(cand);
                    }
                }
            }
        }
        match best {
            Some((num, den, _, ci, start, end)) if num > 0 => {
                let span = AnswerSpan {
                    context: ci,
                    start: best_tokens[start].1,
                    end: best_tokens[end - 1].2,
                };
                let answer = span.text(contexts).unwrap_or_default().to_string();
                Ok(ReaderOutput {
                    answer,
                    span: Some(span),
                    confidence: (num as f64 / den as f64).clamp(0.0, 1.0),
                })
            }
            _ => Ok(ReaderOutput::empty()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Question,
    PhraseOrKeywords,
}

const INTERROGATIVES: &[&str] = &[
    "how", "what", "which", "where", "when", "who", "why", "is", "are", "can", "does", "do",
];

pub fn classify_query(raw: &str) -> QueryKind {
    let trimmed = raw.trim();
    let first = tokenize(trimmed)
        .into_iter()
        .next()
        .map(|t| t.term.to_lowercase())
        .unwrap_or_default();
    if trimmed.ends_with('?') || INTERROGATIVES.contains(&first.as_str()) {
        QueryKind::Question
    } else {
        QueryKind::PhraseOrKeywords
    }
}

/// Paragraph and passage texts plus the passage → paragraph mapping.
#[derive(Debug, Clone, Default)]
pub struct UnitStore {
    paragraphs: BTreeMap<String, Paragraph>,
    passages: BTreeMap<String, Passage>,
    parent: BTreeMap<String, String>,
}

impl UnitStore {
    pub fn from_documents(docs: &[SourceDocument], chunking: &ChunkingConfig) -> Result<Self> {
        let mut paragraphs = Vec::new();
        let mut passages = Vec::new();
        for d in docs {
            paragraphs.extend(segment_paragraphs(d));
            passages.extend(chunk_passages(d, chunking)?);
        }
        Self::from_parts(paragraphs, passages)
    }

        pub fn from_parts(paragraphs: Vec<Paragraph>, passages: Vec<Passage>) -> Result<Self> {
        let mut by_doc: BTreeMap<&str, Vec<&Paragraph>> = BTreeMap::new();
        for p in &paragraphs {
            by_doc.entry(p.doc_id.as_str()).or_default().push(p);
        }
        for v in by_doc.values_mut() {
            v.sort_by_key(|p| p.char_offset);
        }
        let mut parent = BTreeMap::new();
        for ps in &passages {
            let doc_paras: Vec<Paragraph> = by_doc
                .get(ps.doc_id.as_str())
                .map(|v| v.iter().map(|p| (*p).clone()).collect())
                .unwrap_or_default();
            let i = paragraph_for_token(&doc_paras, ps.token_start).ok_or_else(|| Error::NotFound {
                kind: "paragraph for passage",
                id: ps.passage_id.clone(),
            })?;
            parent.insert(ps.passage_id.clone(), doc_paras[i].para_id.clone());
        }
        let mut para_map = BTreeMap::new();
        for p in paragraphs {
            let id = p.para_id.clone();
            if para_map.insert(id.clone(), p).is_some() {
                return Err(Error::Duplicate { kind: "paragraph", id });
            }
        }
        let mut passage_map = BTreeMap::new();
        for p in passages {
            let id = p.passage_id.clone();
            if passage_map.insert(id.clone(), p).is_some() {
                return Err(Error::Duplicate { kind: "passage", id });
            }
        }
        Ok(Self {
            paragraphs: para_map,
            passages: passage_map,
            parent,
        })
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.paragraphs.values()
    }

    pub fn passages(&self) -> impl Iterator<Item = &Passage> {
        self.passages.values()
    }

    pub fn paragraph(&self, id: &str) -> Option<&Paragraph> {
        self.paragraphs.get(id)
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passages.get(id)
    }

    pub fn parent_paragraph(&self, passage_id: &str) -> Option<&str> {
        self.parent.get(passage_id).map(String::as_str)
    }
}

impl PassageLookup for UnitStore {
    fn passage_text(&self, passage_id: &str) -> Option<&str> {
        self.passages.get(passage_id).map(|p| p.text.as_str())
    }
}

/// Dense side of retrieval: encoder, passage index and hop settings.
#[derive(Clone, Copy)]
pub struct SemanticRetriever<'a> {
    pub encoder: &'a dyn Encoder,
    pub index: &'a DenseIndex,
    pub mdr: &'a MdrConfig,
}

impl SemanticRetriever<'_> {
    pub fn chains(&self, question: &str, store: &UnitStore) -> Result<Vec<HopChain>> {
        multi_hop_retrieve(question, self.encoder, self.index, store, self.mdr)
    }
}

/// Appends each mechanism's hits in turn, skipping units already present,
/// until `r` results are collected.
pub fn fill_results(r: usize, per_mechanism: Vec<Vec<ScoredHit>>) -> Vec<ScoredHit> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for hits in per_mechanism {
        for h in hits {
            if out.len() >= r {
                return out;
            }
            if seen.insert(h.unit_id.clone()) {
                out.push(h);
            }
        }
    }
    out
}

/// Hits of every mechanism in precedence order, before merging.
pub fn mechanism_hits(
    query: &QueryAst,
    cfg: &RetrievalConfig,
    bm25: &Bm25Params,
    lexical: &LexicalIndex,
    store: &UnitStore,
    semantic: Option<&SemanticRetriever<'_>>,
) -> Result<Vec<Vec<ScoredHit>>> {
    cfg.validate()?;
    let k = cfg.fetch_k();
    let sequence = query.sequence();
    let phrase = if query.has_phrases() {
        lexical.phrases_search(&query.phrases, k, bm25)
    } else {
        lexical.phrase_search(&sequence, k, bm25)
    };
    let bigram = lexical.bigram_search(&extract_bigrams(&sequence), k, bm25);
    let keyword = lexical.keyword_search(&sequence, k, bm25);
    let mut semantic_hits = Vec::new();
    if let Some(sem) = semantic {
        let mut seen = HashSet::new();
        for chain in sem.chains(&sequence.join(" "), store)? {
            for pid in &chain.passages {
                let para = store.parent_paragraph(pid).ok_or_else(|| Error::NotFound {
                    kind: "passage",
                    id: pid.clone(),
                })?;
                if semantic_hits.len() < k && seen.insert(para.to_string()) {
                    semantic_hits.push(ScoredHit {
                        unit_id: para.to_string(),
                        score: chain.combined_score,
                        mechanism: Mechanism::Semantic,
                    });
                }
            }
        }
    }
    Ok(vec![phrase, bigram, keyword, semantic_hits])
}

/// Stable sort by reranker score descending; equal scores keep their order.
pub fn rerank(query_text: &str, mut results: Vec<RankedResult>, reranker: &dyn Reranker) -> Result<Vec<RankedResult>> {
    let texts: Vec<&str> = results.iter().map(|r| r.text.as_str()).collect();
    let scores = reranker.score_batch(query_text, &texts)?;
    if scores.len() != results.len() {
        return Err(Error::Remote(format!(
            "reranker returned {} scores for {} passages",
            scores.len(),
            results.len()
        )));
    }
    for (r, s) in results.iter_mut().zip(scores) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Remote(format!("reranker score {s} outside [0, 1]")));
        }
        r.rerank_score = Some(s);
    }
    results.sort_by(|a, b| b.rerank_score.unwrap_or(0.0).total_cmp(&a.rerank_score.unwrap_or(0.0)));
    Ok(results)
}

pub fn retrieve_paragraphs(
    query: &QueryAst,
    cfg: &RetrievalConfig,
    bm25: &Bm25Params,
    lexical: &LexicalIndex,
    store: &UnitStore,
    semantic: Option<&SemanticRetriever<'_>>,
    reranker: &dyn Reranker,
) -> Result<Vec<RankedResult>> {
    let hits = fill_results(cfg.r, mechanism_hits(query, cfg, bm25, lexical, store, semantic)?);
    let results = hits
        .into_iter()
        .map(|h| {
            let text = store
                .paragraph(&h.unit_id)
                .map(|p| p.text.clone())
                .ok_or_else(|| Error::NotFound {
                    kind: "paragraph",
                    id: h.unit_id.clone(),
                })?;
            Ok(RankedResult {
                unit_id: h.unit_id,
                text,
                mechanism: h.mechanism,
                retrieval_score: h.score,
                rerank_score: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rerank(&query.sequence().join(" "), results, reranker)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub span: Option<AnswerSpan>,
    pub supporting_chain: Option<HopChain>,
    pub reader_confidence: f64,
    pub context_ids: Vec<String>,
    pub contexts: Vec<String>,
}

impl Answer {
    fn empty() -> Self {
        Self {
            text: String::new(),
            span: None,
            supporting_chain: None,
            reader_confidence: 0.0,
            context_ids: Vec::new(),
            contexts: Vec::new(),
        }
    }
}

/// Multi-hop retrieve, re-rank the union of chain passages, read. Returns
/// `None` when question answering is disabled.
pub fn answer_question(
    question: &str,
    semantic: &SemanticRetriever<'_>,
    store: &UnitStore,
    cfg: &RetrievalConfig,
    reranker: &dyn Reranker,
    reader: &dyn Reader,
) -> Result<Option<Answer>> {
    if !cfg.qa_enabled {
        return Ok(None);
    }
    let chains = semantic.chains(question, store)?;
    if chains.is_empty() {
        return Ok(Some(Answer::empty()));
    }
    let mut seen = HashSet::new();
    let mut union = Vec::new();
    for chain in &chains {
        for pid in &chain.passages {
            if seen.insert(pid.clone()) {
                let text = store.passage_text(pid).ok_or_else(|| Error::NotFound {
                    kind: "passage",
                    id: pid.clone(),
                })?;
                union.push(RankedResult {
                    unit_id: pid.clone(),
                    text: text.to_string(),
                    mechanism: Mechanism::Semantic,
                    retrieval_score: chain.combined_score,
                    rerank_score: None,
                });
            }
        }
    }
    let ranked = rerank(question, union, reranker)?;
    let context_ids: Vec<String> = ranked.iter().map(|r| r.unit_id.clone()).collect();
    let contexts: Vec<String> = ranked.into_iter().map(|r| r.text).collect();
    let refs: Vec<&str> = contexts.iter().map(String::as_str).collect();
    let out = reader.read(question, &refs)?;

    let supporting_chain = match out.span {
        Some(span) if !out.answer.is_empty() => {
            let pid = context_ids.get(span.context).ok_or_else(|| Error::Remote("reader cited a missing context".into()))?;
            chains.iter().find(|c| c.passages.contains(pid)).cloned()
        }
        _ if !out.answer.is_empty() => chains.first().cloned(),
        _ => None,
    };
    Ok(Some(Answer {
        text: out.answer,
        span: out.span,
        supporting_chain,
        reader_confidence: out.confidence,
        context_ids,
        contexts,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::parse_query;
    use crate::dense::ReferenceEncoder;
    use proptest::prelude::*;

    fn hit(id: &str, m: Mechanism) -> ScoredHit {
        ScoredHit {
            unit_id: id.into(),
            score: 1.0,
            mechanism: m,
        }
    }

    #[test]
    fn reranker_examples() {
        let r = BaselineReranker::default();
        assert_eq!(r.score("bats virus", "Virus found in bats").unwrap(), 1.0);
        assert_eq!(r.score("bats virus", "hospital staffing").unwrap(), 0.0);
        assert_eq!(r.score("bats virus caves china", "bats carry a virus").unwrap(), 0.5);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_query("virus found in rhinolophus bats"), QueryKind::PhraseOrKeywords);
        assert_eq!(
            classify_query("How many species exist of the mammals that are the main reservoir of coronaviruses?"),
            QueryKind::Question
        );
        assert_eq!(classify_query("bats?"), QueryKind::Question);
        assert_eq!(classify_query("Which hosts"), QueryKind::Question);
    }

    #[test]
    fn reader_examples() {
        let reader = BaselineReader::default();
        let ctx = ["There are 1200 species of bats"];
        let out = reader.read("How many species of bats exist?", &ctx).unwrap();
        assert_eq!(out.answer, "1200");
        assert_eq!(out.span.unwrap().text(&ctx), Some("1200"));
        assert!(out.confidence > 0.0 && out.confidence <= 1.0);

        assert_eq!(reader.read("How many species?", &[]).unwrap(), ReaderOutput::empty());

        let twice = ["There are 1200 species of bats", "There are 1200 species of bats"];
        let out = reader.read("How many species of bats exist?", &twice).unwrap();
        assert_eq!(out.span.unwrap().context, 0);
    }

    /// Independent scoring of every span of a short sentence.
    #[test]
    fn reader_matches_exhaustive_span_scoring() {
        let q: BTreeSet<&str> = ["species", "bats", "exist"].into();
        let words = ["there", "are", "1200", "species", "of", "bats"];
        let mut best = (f64::NEG_INFINITY, String::new());
        for i in 0..words.len() {
            for j in i + 1..=words.len() {
                if READER_STOPWORDS.contains(&words[i]) || READER_STOPWORDS.contains(&words[j - 1]) {
                    continue;
                }
                let inside = words[i..j].iter().filter(|w| q.contains(*w)).count() as f64;
                let around = words[i.saturating_sub(2)..i]
                    .iter()
                    .chain(&words[j..(j + 2).min(words.len())])
                    .filter(|w| q.contains(*w))
                    .collect::<BTreeSet<_>>()
                    .len() as f64;
                let score = around / q.len() as f64 - inside / (j - i) as f64;
                if score > best.0 {
                    best = (score, words[i..j].join(" "));
                }
            }
        }
        assert_eq!(best.1, "1200");
    }

    #[test]
    fn fill_precedence_and_dedup() {
        let lists = vec![
            vec![hit("a", Mechanism::Phrase)],
            vec![hit("a", Mechanism::Bigram), hit("b", Mechanism::Bigram)],
            vec![hit("c", Mechanism::Keyword), hit("b", Mechanism::Keyword)],
            vec![hit("d", Mechanism::Semantic), hit("e", Mechanism::Semantic)],
        ];
        let out = fill_results(4, lists);
        let ids: Vec<(&str, Mechanism)> = out.iter().map(|h| (h.unit_id.as_str(), h.mechanism)).collect();
        assert_eq!(
            ids,
            [
                ("a", Mechanism::Phrase),
                ("b", Mechanism::Bigram),
                ("c", Mechanism::Keyword),
                ("d", Mechanism::Semantic)
            ]
        );
    }

    fn doc(id: &str, paras: &[&str]) -> SourceDocument {
        SourceDocument {
            doc_id: id.into(),
            title: String::new(),
            abstract_text: paras[0].into(),
            body: paras[1..].iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn semantic_hits_map_to_parent_paragraphs() {
        let docs = vec![doc("d1", &["alpha beta gamma", "delta epsilon zeta eta"])];
        let chunking = ChunkingConfig {
            chunk_size: 3,
            stride: 2,
            passage_limit: 300,
        };
        let store = UnitStore::from_documents(&docs, &chunking).unwrap();
        let parents: Vec<(&str, &str)> = store
            .passages()
            .map(|p| (p.passage_id.as_str(), store.parent_paragraph(&p.passage_id).unwrap()))
            .collect();
        // window 3, overlap 2: starts 0..=4 over 3 + 4 tokens
        assert_eq!(
            parents,
            [("d1@0", "d1#0"), ("d1@1", "d1#0"), ("d1@2", "d1#0"), ("d1@3", "d1#1"), ("d1@4", "d1#1")]
        );
    }

    #[test]
    fn qa_gate_and_empty_answer() {
        let docs = vec![doc("d1", &["Bats are the main reservoir of coronaviruses."])];
        let store = UnitStore::from_documents(&docs, &ChunkingConfig::default()).unwrap();
        let enc = ReferenceEncoder::new(64, 3).unwrap();
        let passages: Vec<Passage> = store.passages().cloned().collect();
        let index = DenseIndex::index_passages(&passages, &enc).unwrap();
        let mdr = MdrConfig::default();
        let sem = SemanticRetriever {
            encoder: &enc,
            index: &index,
            mdr: &mdr,
        };
        let off = RetrievalConfig {
            qa_enabled: false,
            ..Default::default()
        };
        let rr = BaselineReranker::default();
        let reader = BaselineReader::default();
        assert!(answer_question("what?", &sem, &store, &off, &rr, &reader).unwrap().is_none());
        let a = answer_question("Which quasar emits xrays?", &sem, &store, &RetrievalConfig::default(), &rr, &reader)
            .unwrap()
            .unwrap();
        assert_eq!(a.text, "");
        assert_eq!(a.reader_confidence, 0.0);
        assert!(a.supporting_chain.is_none());
    }

    #[test]
    fn retrieval_respects_r_and_reranks_as_permutation() {
        let docs: Vec<SourceDocument> = (0..30)
            .map(|i| doc(&format!("d{i:02}"), &[&format!("virus found in bats sample {i}")]))
            .collect();
        let store = UnitStore::from_documents(&docs, &ChunkingConfig::default()).unwrap();
        let lexical = LexicalIndex::build(
            store.paragraphs().map(|p| (p.para_id.as_str(), p.text.as_str())),
            AnalyzerConfig::default(),
        )
        .unwrap();
        let q = parse_query("virus found in bats").unwrap();
        let cfg = RetrievalConfig::default();
        let out = retrieve_paragraphs(&q, &cfg, &Bm25Params::default(), &lexical, &store, None, &BaselineReranker::default())
            .unwrap();
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|r| r.mechanism == Mechanism::Phrase && r.rerank_score == Some(1.0)));
    }

    proptest! {
        #[test]
        fn reranker_is_bounded(q in "\\PC{0,40}", p in "\\PC{0,80}") {
            let s = BaselineReranker::default().score(&q, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn reader_span_is_exact_substring(
            q in "[a-e ]{1,20}\\??",
            ctxs in proptest::collection::vec("[a-eé1-3,. ]{0,40}", 0..4),
        ) {
            let refs: Vec<&str> = ctxs.iter().map(String::as_str).collect();
            let out = BaselineReader::default().read(&q, &refs).unwrap();
            if let Some(span) = out.span {
                prop_assert_eq!(span.text(&refs), Some(out.answer.as_str()));
            } else {
                prop_assert_eq!(out.answer, "");
            }
        }
    }
}
