//! Corpus records, paragraph segmentation and overlapping passage chunking.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub body: Vec<String>,
    pub authors: Vec<String>,
    pub institutions: Vec<String>,
    pub year: Option<i32>,
    pub references: Vec<String>,
}

/// Which part of the source document a paragraph came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Abstract,
    Body,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub doc_id: String,
    pub para_id: String,
    pub text: String,
    /// Start of this paragraph in the document text, counted in characters.
    pub char_offset: usize,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub passage_id: String,
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub stride: usize,
    pub passage_limit: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: 300,
            stride: 128,
            passage_limit: 300,
        }
    }
}

impl ChunkingConfig {
    pub const MAX_CHUNK: usize = 512;

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride >= self.chunk_size {
            return Err(Error::Config(format!(
                "chunking requires 0 < stride < chunk_size (stride {}, chunk_size {})",
                self.stride, self.chunk_size
            )));
        }
        if self.chunk_size >= Self::MAX_CHUNK {
            return Err(Error::Config(format!(
                "chunk_size must be below {} (got {})",
                Self::MAX_CHUNK,
                self.chunk_size
            )));
        }
        // A window longer than the passage limit would be truncated and lose tokens.
        if self.chunk_size > self.passage_limit {
            return Err(Error::Config(format!(
                "chunk_size {} exceeds passage_limit {}",
                self.chunk_size, self.passage_limit
            )));
        }
        Ok(())
    }
}

/// Input record layouts understood by [`ingest_document`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    /// One JSON object per line in this crate's own schema.
    Native,
    /// A CORD-19 full-text JSON object (`paper_id`, `metadata`, `body_text`, ...).
    Cord19,
}

impl std::str::FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(RecordFormat::Native),
            "cord19" => Ok(RecordFormat::Cord19),
            other => Err(Error::Config(format!("unknown record format `{other}`"))),
        }
    }
}

/// NFC-normalizes, drops control characters and collapses whitespace runs.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.nfc() {
        if c.is_whitespace() {
            pending_space = true;
        } else if c.is_control() || matches!(c, '\u{200b}' | '\u{feff}') {
            continue;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    out
}

fn opt_str(obj: &Value, field: &str) -> Result<Option<String>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(Error::parse(field, format!("expected string, found {}", kind(other)))),
    }
}

fn str_list(obj: &Value, field: &str) -> Result<Vec<String>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(Error::parse(
                    format!("{field}[{i}]"),
                    format!("expected string, found {}", kind(other)),
                )),
            })
            .collect(),
        Some(other) => Err(Error::parse(field, format!("expected array, found {}", kind(other)))),
    }
}

fn opt_year(obj: &Value, field: &str) -> Result<Option<i32>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n
            .as_i64()
            .and_then(|y| i32::try_from(y).ok())
            .map(Some)
            .ok_or_else(|| Error::parse(field, format!("`{n}` is not an integer year"))),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => s
            .trim()
            .get(..4)
            .and_then(|y| y.parse().ok())
            .map(Some)
            .ok_or_else(|| Error::parse(field, format!("`{s}` is not a year"))),
        Some(other) => Err(Error::parse(field, format!("expected integer, found {}", kind(other)))),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn finish(mut doc: SourceDocument) -> Result<SourceDocument> {
    doc.doc_id = doc.doc_id.trim().to_string();
    if doc.doc_id.is_empty() {
        return Err(Error::parse("doc_id", "must be a non-empty string"));
    }
    doc.title = clean_text(&doc.title);
    doc.abstract_text = clean_text(&doc.abstract_text);
    doc.body = doc.body.iter().map(|b| clean_text(b)).collect();
    doc.authors = doc.authors.iter().map(|a| clean_text(a)).filter(|a| !a.is_empty()).collect();
    doc.institutions = doc
        .institutions
        .iter()
        .map(|a| clean_text(a))
        .filter(|a| !a.is_empty())
        .collect();
    doc.references = doc
        .references
        .iter()
        .map(|r| r.trim().to_string())
        .filter(|r| !r.is_empty())
        .collect();
    Ok(doc)
}

fn parse_native(obj: &Value) -> Result<SourceDocument> {
    let doc_id = opt_str(obj, "doc_id")?.ok_or_else(|| Error::parse("doc_id", "missing"))?;
    finish(SourceDocument {
        doc_id,
        title: opt_str(obj, "title")?.unwrap_or_default(),
        abstract_text: opt_str(obj, "abstract")?.unwrap_or_default(),
        body: str_list(obj, "body")?,
        authors: str_list(obj, "authors")?,
        institutions: str_list(obj, "institutions")?,
        year: opt_year(obj, "year")?,
        references: str_list(obj, "references")?,
    })
}

fn text_blocks(obj: &Value, field: &str) -> Result<Vec<String>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.get("text")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| Error::parse(format!("{field}[{i}].text"), "missing text"))
            })
            .collect(),
        Some(other) => Err(Error::parse(field, format!("expected array, found {}", kind(other)))),
    }
}

fn parse_cord19(obj: &Value) -> Result<SourceDocument> {
    let doc_id = opt_str(obj, "paper_id")?.ok_or_else(|| Error::parse("paper_id", "missing"))?;
    let empty = Value::Null;
    let metadata = obj.get("metadata").unwrap_or(&empty);
    let title = opt_str(metadata, "title")
        .map_err(|_| Error::parse("metadata.title", "expected string"))?
        .unwrap_or_default();

    let mut authors = Vec::new();
    let mut institutions: Vec<String> = Vec::new();
    if let Some(list) = metadata.get("authors").and_then(Value::as_array) {
        for a in list {
            let mut parts: Vec<String> = Vec::new();
            if let Some(first) = a.get("first").and_then(Value::as_str) {
                parts.push(first.to_string());
            }
            if let Some(middle) = a.get("middle").and_then(Value::as_array) {
                parts.extend(middle.iter().filter_map(Value::as_str).map(str::to_string));
            }
            if let Some(last) = a.get("last").and_then(Value::as_str) {
                parts.push(last.to_string());
            }
            let name = clean_text(&parts.join(" "));
            if !name.is_empty() {
                authors.push(name);
            }
            if let Some(inst) = a
                .pointer("/affiliation/institution")
                .and_then(Value::as_str)
                .map(clean_text)
                .filter(|i| !i.is_empty())
            {
                if !institutions.contains(&inst) {
                    institutions.push(inst);
                }
            }
        }
    }

    let abstract_text = text_blocks(obj, "abstract")?.join(" ");
    let body = text_blocks(obj, "body_text")?;

    let mut references = Vec::new();
    if let Some(bib) = obj.get("bib_entries").and_then(Value::as_object) {
        let mut keys: Vec<&String> = bib.keys().collect();
        // BIBREF2 before BIBREF10
        keys.sort_by_key(|k| {
            let digits: String = k.chars().filter(char::is_ascii_digit).collect();
            (digits.parse::<u64>().unwrap_or(u64::MAX), (*k).clone())
        });
        for key in keys {
            let entry = &bib[key];
            let doi = entry
                .pointer("/other_ids/DOI/0")
                .and_then(Value::as_str)
                .map(|d| format!("doi:{d}"));
            let id = doi.or_else(|| {
                entry
                    .get("title")
                    .and_then(Value::as_str)
                    .map(clean_text)
                    .filter(|t| !t.is_empty())
            });
            if let Some(id) = id {
                references.push(id);
            }
        }
    }

    finish(SourceDocument {
        doc_id,
        title,
        abstract_text,
        body,
        authors,
        institutions,
        year: opt_year(obj, "year")?.or(opt_year(metadata, "year").unwrap_or(None)),
        references,
    })
}

/// Parses one raw record into a cleaned document.
pub fn ingest_document(record: &str, format: RecordFormat) -> Result<SourceDocument> {
    let value: Value = serde_json::from_str(record).map_err(|e| Error::parse("<record>", e.to_string()))?;
    if !value.is_object() {
        return Err(Error::parse("<record>", format!("expected object, found {}", kind(&value))));
    }
    match format {
        RecordFormat::Native => parse_native(&value),
        RecordFormat::Cord19 => parse_cord19(&value),
    }
}

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<SourceDocument>,
    seen: HashSet<String>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, doc: SourceDocument) -> Result<()> {
        if !self.seen.insert(doc.doc_id.clone()) {
            return Err(Error::Duplicate {
                kind: "document",
                id: doc.doc_id,
            });
        }
        self.docs.push(doc);
        Ok(())
    }

    pub fn ingest(&mut self, record: &str, format: RecordFormat) -> Result<&SourceDocument> {
        let doc = ingest_document(record, format)?;
        self.add(doc)?;
        Ok(self.docs.last().expect("just pushed"))
    }

    /// Reads newline-delimited records, skipping blank lines. Errors carry the line number.
    pub fn read_ndjson<R: BufRead>(reader: R, format: RecordFormat) -> Result<Self> {
        let mut corpus = Corpus::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<corpus>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            corpus.ingest(&line, format).map_err(|e| match e {
                Error::Parse { field, message } => Error::Parse {
                    field,
                    message: format!("line {}: {message}", lineno + 1),
                },
                other => other,
            })?;
        }
        Ok(corpus)
    }

    pub fn documents(&self) -> &[SourceDocument] {
        &self.docs
    }

    pub fn into_documents(self) -> Vec<SourceDocument> {
        self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Abstract (when present) followed by each non-empty body block, numbered
/// contiguously as `doc_id#ordinal`.
pub fn segment_paragraphs(doc: &SourceDocument) -> Vec<Paragraph> {
    let blocks = std::iter::once((Origin::Abstract, &doc.abstract_text))
        .chain(doc.body.iter().map(|b| (Origin::Body, b)));
    let mut out = Vec::new();
    let mut offset = 0;
    for (origin, block) in blocks {
        let text = clean_text(block);
        if text.is_empty() {
            continue;
        }
        if !out.is_empty() {
            offset += PARAGRAPH_SEPARATOR.len();
        }
        let len = text.chars().count();
        out.push(Paragraph {
            doc_id: doc.doc_id.clone(),
            para_id: format!("{}#{}", doc.doc_id, out.len()),
            text,
            char_offset: offset,
            origin,
        });
        offset += len;
    }
    out
}

const PARAGRAPH_SEPARATOR: &str = "\n\n";

/// The document's text as paragraphs joined by blank lines; `char_offset`
/// values index into this string.
pub fn document_text(paragraphs: &[Paragraph]) -> String {
    paragraphs
        .iter()
        .map(|p| p.text.as_str())
        .collect::<Vec<_>>()
        .join(PARAGRAPH_SEPARATOR)
}

/// Token spans `[start, end)` of a sliding window with the given size and overlap.
pub fn window_spans(n_tokens: usize, cfg: &ChunkingConfig) -> Vec<(usize, usize)> {
    let step = cfg.chunk_size - cfg.stride;
    let mut spans = Vec::new();
    if n_tokens == 0 {
        return spans;
    }
    let mut start = 0;
    loop {
        let end = (start + cfg.chunk_size).min(n_tokens);
        spans.push((start, end.min(start + cfg.passage_limit)));
        if end >= n_tokens {
            break;
        }
        start += step;
    }
    spans
}

/// Overlapping passages over the whitespace-token stream of the document's paragraphs.
pub fn chunk_passages(doc: &SourceDocument, cfg: &ChunkingConfig) -> Result<Vec<Passage>> {
    cfg.validate()?;
    let paragraphs = segment_paragraphs(doc);
    let tokens: Vec<&str> = paragraphs
        .iter()
        .flat_map(|p| p.text.split_whitespace())
        .collect();
    Ok(window_spans(tokens.len(), cfg)
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| Passage {
            doc_id: doc.doc_id.clone(),
            passage_id: format!("{}@{}", doc.doc_id, i),
            token_start: start,
            token_end: end,
            text: tokens[start..end].join(" "),
        })
        .collect())
}

/// Index into `paragraphs` (all from one document, in order) of the paragraph
/// holding the given document token offset.
pub fn paragraph_for_token(paragraphs: &[Paragraph], token: usize) -> Option<usize> {
    let mut cumulative = 0;
    for (i, p) in paragraphs.iter().enumerate() {
        cumulative += p.text.split_whitespace().count();
        if token < cumulative {
            return Some(i);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(abstract_text: &str, body: &[&str]) -> SourceDocument {
        SourceDocument {
            doc_id: "d1".into(),
            title: "T".into(),
            abstract_text: abstract_text.into(),
            body: body.iter().map(|s| s.to_string()).collect(),
            authors: vec![],
            institutions: vec![],
            year: None,
            references: vec![],
        }
    }

    #[test]
    fn ingest_maps_fields() {
        let rec = r#"{"doc_id":"d1","title":"T","body":["first block","second\tblock\u0007"],"authors":["A B"],"year":2020}"#;
        let d = ingest_document(rec, RecordFormat::Native).unwrap();
        assert_eq!(d.title, "T");
        assert_eq!(d.body, vec!["first block", "second block"]);
        assert_eq!(d.year, Some(2020));
    }

    #[test]
    fn ingest_missing_year_is_absent() {
        let d = ingest_document(r#"{"doc_id":"x","title":"T","body":[]}"#, RecordFormat::Native).unwrap();
        assert_eq!(d.year, None);
    }

    #[test]
    fn ingest_reports_offending_field() {
        let err = ingest_document(r#"{"doc_id":"x","body":"oops"}"#, RecordFormat::Native).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "body"), "{err}");
        let err = ingest_document(r#"{"doc_id":"x","authors":["a", 3]}"#, RecordFormat::Native).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "authors[1]"), "{err}");
        let err = ingest_document(r#"{"title":"no id"}"#, RecordFormat::Native).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "doc_id"));
        let err = ingest_document(r#"{"doc_id":"  "}"#, RecordFormat::Native).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "doc_id"));
    }

    #[test]
    fn duplicate_doc_rejected() {
        let mut corpus = Corpus::new();
        corpus.ingest(r#"{"doc_id":"a"}"#, RecordFormat::Native).unwrap();
        let err = corpus.ingest(r#"{"doc_id":"a"}"#, RecordFormat::Native).unwrap_err();
        assert!(matches!(err, Error::Duplicate { .. }));
    }

    #[test]
    fn cord19_record() {
        let rec = r#"{
            "paper_id": "abc123",
            "metadata": {"title": "Bats", "authors": [
                {"first": "Jane", "middle": ["Q"], "last": "Doe", "affiliation": {"institution": "Uni A"}},
                {"first": "Li", "middle": [], "last": "Wei", "affiliation": {"institution": "Uni A"}}
            ]},
            "abstract": [{"text": "Abs one."}, {"text": "Abs two."}],
            "body_text": [{"text": "Body.", "section": "Intro"}],
            "bib_entries": {"BIBREF10": {"title": "Late"}, "BIBREF2": {"title": "X", "other_ids": {"DOI": ["10.1/x"]}}}
        }"#;
        let d = ingest_document(rec, RecordFormat::Cord19).unwrap();
        assert_eq!(d.doc_id, "abc123");
        assert_eq!(d.authors, vec!["Jane Q Doe", "Li Wei"]);
        assert_eq!(d.institutions, vec!["Uni A"]);
        assert_eq!(d.abstract_text, "Abs one. Abs two.");
        assert_eq!(d.references, vec!["doi:10.1/x", "Late"]);
    }

    #[test]
    fn segment_examples() {
        let paras = segment_paragraphs(&doc("abs", &["a", "b", "c"]));
        assert_eq!(paras.len(), 4);
        assert_eq!(paras[0].origin, Origin::Abstract);
        assert_eq!(paras[3].para_id, "d1#3");

        assert_eq!(segment_paragraphs(&doc("", &["only"])).len(), 1);

        let paras = segment_paragraphs(&doc("", &["one", "  \t ", "two"]));
        let ids: Vec<_> = paras.iter().map(|p| p.para_id.as_str()).collect();
        assert_eq!(ids, vec!["d1#0", "d1#1"]);
        let text = document_text(&paras);
        assert_eq!(&text[paras[1].char_offset..], "two");
    }

    #[test]
    fn chunk_examples() {
        let ten: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        let d = doc("", &[&ten.join(" ")]);
        let cfg = ChunkingConfig {
            chunk_size: 4,
            stride: 2,
            passage_limit: 300,
        };
        let spans: Vec<_> = chunk_passages(&d, &cfg)
            .unwrap()
            .iter()
            .map(|p| (p.token_start, p.token_end))
            .collect();
        assert_eq!(spans, vec![(0, 4), (2, 6), (4, 8), (6, 10)]);

        let d3 = doc("", &["a b c"]);
        let ps = chunk_passages(&d3, &cfg).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!((ps[0].token_start, ps[0].token_end), (0, 3));
        assert_eq!(ps[0].text, "a b c");

        let bad = ChunkingConfig {
            chunk_size: 512,
            stride: 128,
            passage_limit: 600,
        };
        assert!(matches!(chunk_passages(&d3, &bad), Err(Error::Config(_))));
        let bad = ChunkingConfig {
            chunk_size: 4,
            stride: 4,
            passage_limit: 300,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn passage_maps_to_paragraph() {
        let paras = segment_paragraphs(&doc("a b", &["c d e", "f"]));
        assert_eq!(paragraph_for_token(&paras, 0), Some(0));
        assert_eq!(paragraph_for_token(&paras, 2), Some(1));
        assert_eq!(paragraph_for_token(&paras, 5), Some(2));
        assert_eq!(paragraph_for_token(&paras, 6), None);
    }

    proptest! {
        #[test]
        fn windows_cover_and_overlap(n in 0usize..400, c in 2usize..60, s_frac in 0.0f64..1.0) {
            let stride = 1 + ((c - 2) as f64 * s_frac) as usize;
            let cfg = ChunkingConfig { chunk_size: c, stride, passage_limit: 300 };
            prop_assume!(cfg.validate().is_ok());
            let spans = window_spans(n, &cfg);
            let mut covered = vec![false; n];
            for &(a, b) in &spans {
                prop_assert!(b - a <= c);
                covered[a..b].iter_mut().for_each(|x| *x = true);
            }
            prop_assert!(covered.iter().all(|x| *x));
            for w in spans.windows(2) {
                prop_assert_eq!(w[0].1.saturating_sub(w[1].0), stride);
            }
        }

        #[test]
        fn chunking_is_deterministic(words in proptest::collection::vec("[a-z]{1,5}", 0..50)) {
            let d = doc("", &[&words.join(" ")]);
            let cfg = ChunkingConfig { chunk_size: 8, stride: 3, passage_limit: 300 };
            prop_assert_eq!(chunk_passages(&d, &cfg).unwrap(), chunk_passages(&d, &cfg).unwrap());
        }
    }
}
