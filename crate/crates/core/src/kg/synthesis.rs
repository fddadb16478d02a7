use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::{Entity, Provenance, Triplet, TripletKind};
use crate::analysis::{normalize, tokenize, AnalyzerConfig};
use crate::error::{Error, Result};
use crate::ingest::{segment_paragraphs, SourceDocument};

/// Rewrites pronouns and other anaphora to their antecedents.
pub trait CorefResolver: Send + Sync {
    fn resolve(&self, text: &str) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityResolver;

impl CorefResolver for IdentityResolver {
    fn resolve(&self, text: &str) -> String {
        text.to_string()
    }
}

pub fn resolve_coreferences(text: &str, resolver: &dyn CorefResolver) -> String {
    resolver.resolve(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTriplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

pub trait TripletExtractor: Send + Sync {
    fn extract(&self, sentence: &str) -> Vec<RawTriplet>;
}

const DEFAULT_VERBS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "has", "have", "had", "cause", "causes", "caused", "infect",
    "infects", "infected", "bind", "binds", "bound", "inhibit", "inhibits", "inhibited", "encode", "encodes",
    "encoded", "induce", "induces", "induced", "activate", "activates", "activated", "block", "blocks",
    "blocked", "reduce", "reduces", "reduced", "increase", "increases", "increased", "transmit", "transmits",
    "transmitted", "harbor", "harbors", "harbored", "harbour", "harbours", "carry", "carries", "carried",
    "host", "hosts", "contain", "contains", "contained", "produce", "produces", "produced", "target",
    "targets", "targeted", "treat", "treats", "treated", "prevent", "prevents", "prevented", "regulate",
    "regulates", "regulated", "associated", "linked", "isolated", "found", "detected", "identified",
    "interact", "interacts", "expressed", "express", "expresses", "affect", "affects", "affected", "mediate",
    "mediates", "mediated", "exist", "exists", "comprise", "comprises", "include", "includes", "belong",
    "belongs", "originated", "emerged", "spread", "spreads", "leads", "led", "causing", "binding",
];

const DEFAULT_PREPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "by", "with", "from", "to", "for", "into", "through", "via", "between", "among",
    "against", "within", "during", "as", "across", "toward", "towards", "onto", "upon", "about",
];

/// Words trimmed from the edges of subject and object spans.
const SPAN_EDGE_WORDS: &[&str] = &["and", "or", "but", "that", "which", "who", "whom", "whose", "while"];

/// Pattern-based extractor. A run of verb-lexicon tokens is a pivot; the
/// subject is the span back to the previous pivot, the object the span up
/// to the next one. Prepositions after the pivot attach to the relation, so
/// the object is whatever follows the last preposition in that span.
#[derive(Debug, Clone)]
pub struct PatternExtractor {
    verbs: HashSet<String>,
    prepositions: HashSet<String>,
    analyzer: AnalyzerConfig,
}

impl Default for PatternExtractor {
    fn default() -> Self {
        Self::new(DEFAULT_VERBS.iter().copied(), DEFAULT_PREPOSITIONS.iter().copied())
    }
}

impl PatternExtractor {
    pub fn new<'a>(verbs: impl IntoIterator<Item = &'a str>, prepositions: impl IntoIterator<Item = &'a str>) -> Self {
        let analyzer = AnalyzerConfig::default();
        Self {
            verbs: verbs.into_iter().map(|v| normalize(v, &analyzer)).collect(),
            prepositions: prepositions.into_iter().map(|p| normalize(p, &analyzer)).collect(),
            analyzer,
        }
    }

    pub fn with_verbs<'a>(verbs: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(verbs, DEFAULT_PREPOSITIONS.iter().copied())
    }
}

fn trim_span<'a>(span: &'a [(String, String)]) -> &'a [(String, String)] {
    let edge = |t: &(String, String)| SPAN_EDGE_WORDS.contains(&t.1.as_str());
    let start = span.iter().position(|t| !edge(t)).unwrap_or(span.len());
    let end = span.iter().rposition(|t| !edge(t)).map_or(start, |i| i + 1);
    &span[start..end.max(start)]
}

fn join(span: &[(String, String)]) -> String {
    span.iter().map(|t| t.0.as_str()).collect::<Vec<_>>().join(" ")
}

impl TripletExtractor for PatternExtractor {
    fn extract(&self, sentence: &str) -> Vec<RawTriplet> {
        // (surface, normalized)
        let tokens: Vec<(String, String)> = tokenize(sentence)
            .into_iter()
            .map(|t| {
                let n = normalize(&t.term, &self.analyzer);
                (t.term, n)
            })
            .collect();
        let mut groups: Vec<(usize, usize)> = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            if self.verbs.contains(&tok.1) {
                match groups.last_mut() {
                    Some(g) if g.1 == i => g.1 = i + 1,
                    _ => groups.push((i, i + 1)),
                }
            }
        }

        let mut out = Vec::new();
        for (gi, &(start, end)) in groups.iter().enumerate() {
            let left = if gi == 0 { 0 } else { groups[gi - 1].1 };
            let right = groups.get(gi + 1).map_or(tokens.len(), |g| g.0);
            let subject = trim_span(&tokens[left..start]);
            let rhs = trim_span(&tokens[end..right]);
            if subject.is_empty() || rhs.is_empty() {
                continue;
            }
            let last_prep = rhs[..rhs.len() - 1]
                .iter()
                .rposition(|t| self.prepositions.contains(&t.1));
            let (relation_tail, object) = match last_prep {
                Some(j) => (&rhs[..=j], &rhs[j + 1..]),
                None => (&rhs[..0], rhs),
            };
            let mut relation = join(&tokens[start..end]);
            if !relation_tail.is_empty() {
                relation.push(' ');
                relation.push_str(&join(relation_tail));
            }
            out.push(RawTriplet {
                subject: join(subject),
                relation,
                object: join(object),
            });
        }
        out
    }
}

pub fn extract_triplets_baseline(sentence: &str) -> Vec<RawTriplet> {
    PatternExtractor::default().extract(sentence)
}

const AUXILIARIES: &[&str] = &["is", "are", "was", "were", "has", "have"];

fn canonicalize_once(relation: &str) -> String {
    let lowered = relation.to_lowercase();
    let mut words: Vec<&str> = lowered.split_whitespace().collect();
    while words.len() > 1 && AUXILIARIES.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

/// Lowercase, collapse whitespace, strip leading auxiliaries and map through
/// the synonym table until a fixed point. A synonym cycle resolves to its
/// lexicographically smallest member.
pub fn canonicalize_relation(relation: &str, synonym_table: &BTreeMap<String, String>) -> String {
    let mut seen: Vec<String> = Vec::new();
    let mut current = canonicalize_once(relation);
    loop {
        if let Some(pos) = seen.iter().position(|s| *s == current) {
            return seen[pos..].iter().min().expect("non-empty cycle").clone();
        }
        seen.push(current.clone());
        match synonym_table.get(&current) {
            Some(next) => current = canonicalize_once(next),
            None => return current,
        }
    }
}

/// Reads a `surface<TAB>canonical` synonym table.
pub fn read_synonyms<R: BufRead>(input: R) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<synonyms>", e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (from, to) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse("synonyms", format!("line {}: missing tab", i + 1)))?;
        out.insert(canonicalize_once(from), canonicalize_once(to));
    }
    Ok(out)
}

const ARTICLES: &[&str] = &["the", "a", "an"];

/// Lowercase, ASCII-fold, collapse whitespace and drop leading articles.
pub fn normalize_mention(mention: &str) -> String {
    let analyzer = AnalyzerConfig::default();
    let words: Vec<String> = tokenize(mention)
        .into_iter()
        .map(|t| normalize(&t.term, &analyzer))
        .collect();
    let skip = words.iter().take_while(|w| ARTICLES.contains(&w.as_str())).count();
    let skip = if skip == words.len() { 0 } else { skip };
    words[skip..].join(" ")
}

/// Alias dictionary over a set of entities.
#[derive(Debug, Clone, Default)]
pub struct Ontology {
    entities: Vec<Entity>,
    by_alias: HashMap<String, usize>,
}

fn ontology_rank(e: &Entity) -> (bool, &str, &str) {
    // entities with an id sort before those without
    (
        e.ontology_id.is_none(),
        e.ontology_id.as_deref().unwrap_or(""),
        e.canonical_name.as_str(),
    )
}

impl Ontology {
    pub fn new(entities: Vec<Entity>) -> Result<Self> {
        let mut ont = Ontology {
            entities: Vec::with_capacity(entities.len()),
            by_alias: HashMap::new(),
        };
        for mut e in entities {
            if e.canonical_name.trim().is_empty() {
                return Err(Error::parse("canonical_name", "must be non-empty"));
            }
            if e.entity_type.trim().is_empty() {
                return Err(Error::parse("type", format!("entity `{}` has no type", e.canonical_name)));
            }
            if !e.aliases.contains(&e.canonical_name) {
                e.aliases.insert(0, e.canonical_name.clone());
            }
            let idx = ont.entities.len();
            for alias in &e.aliases {
                let key = normalize_mention(alias);
                if key.is_empty() {
                    continue;
                }
                match ont.by_alias.get(&key) {
                    Some(&other) if other != idx => {
                        let incumbent = &ont.entities[other];
                        log::warn!(
                            "alias `{key}` shared by `{}` and `{}`",
                            incumbent.canonical_name,
                            e.canonical_name
                        );
                        if ontology_rank(&e) < ontology_rank(incumbent) {
                            ont.by_alias.insert(key, idx);
                        }
                    }
                    Some(_) => {}
                    None => {
                        ont.by_alias.insert(key, idx);
                    }
                }
            }
            ont.entities.push(e);
        }
        Ok(ont)
    }

    /// One JSON entity per line.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut entities = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<ontology>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            entities.push(
                serde_json::from_str(&line).map_err(|e| Error::parse("entity", format!("line {}: {e}", i + 1)))?,
            );
        }
        Self::new(entities)
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn lookup(&self, normalized_alias: &str) -> Option<&Entity> {
        self.by_alias.get(normalized_alias).map(|&i| &self.entities[i])
    }
}

/// Exact alias lookup of the normalized mention.
pub fn link_entity(mention: &str, ontology: &Ontology) -> Option<Entity> {
    ontology.lookup(&normalize_mention(mention)).cloned()
}

fn metadata_entity(name: &str, ty: &str, subtype: &str) -> Entity {
    Entity {
        canonical_name: name.to_string(),
        aliases: vec![name.to_string()],
        entity_type: ty.to_string(),
        entity_subtype: subtype.to_string(),
        description: String::new(),
        ontology_id: None,
    }
}

pub(crate) const DOCUMENT_TYPE: &str = "Document";

/// Document-level facts: authorship, affiliation, publication year and references.
pub fn metadata_triplets(doc: &SourceDocument) -> Vec<Triplet> {
    let doc_entity = metadata_entity(&doc.doc_id, DOCUMENT_TYPE, "paper");
    let make = |relation: &str, object: String, object_entity: Entity| Triplet {
        subject: doc.doc_id.clone(),
        relation: relation.to_string(),
        object,
        subject_entity: Some(doc_entity.clone()),
        object_entity: Some(object_entity),
        provenance: Provenance {
            doc_id: doc.doc_id.clone(),
            para_id: None,
            sentence: None,
        },
        kind: TripletKind::Metadata,
    };
    let mut out = Vec::new();
    for a in &doc.authors {
        out.push(make("authored_by", a.clone(), metadata_entity(a, "Author", "person")));
    }
    for i in &doc.institutions {
        out.push(make("affiliated_with", i.clone(), metadata_entity(i, "Institution", "organization")));
    }
    if let Some(y) = doc.year {
        let y = y.to_string();
        out.push(make("published_in", y.clone(), metadata_entity(&y, "Year", "year")));
    }
    for r in &doc.references {
        out.push(make("references", r.clone(), metadata_entity(r, DOCUMENT_TYPE, "paper")));
    }
    out
}

/// Sentence boundaries per Unicode segmentation, trimmed, empties dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.unicode_sentences().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// The full pipeline: coreference → extraction → relation canonicalization →
/// entity linking, plus metadata triplets.
#[derive(Clone)]
pub struct KnowledgeSynthesizer {
    pub resolver: Arc<dyn CorefResolver>,
    pub extractor: Arc<dyn TripletExtractor>,
    pub synonyms: BTreeMap<String, String>,
    pub ontology: Ontology,
}

impl Default for KnowledgeSynthesizer {
    fn default() -> Self {
        Self {
            resolver: Arc::new(IdentityResolver),
            extractor: Arc::new(PatternExtractor::default()),
            synonyms: BTreeMap::new(),
            ontology: Ontology::default(),
        }
    }
}

impl KnowledgeSynthesizer {
    pub fn synthesize(&self, doc: &SourceDocument) -> Vec<Triplet> {
        let mut out = Vec::new();
        for para in segment_paragraphs(doc) {
            let resolved = resolve_coreferences(&para.text, self.resolver.as_ref());
            for (ordinal, sentence) in split_sentences(&resolved).into_iter().enumerate() {
                for raw in self.extractor.extract(sentence) {
                    if raw.subject.trim().is_empty() || raw.relation.trim().is_empty() || raw.object.trim().is_empty() {
                        continue;
                    }
                    out.push(Triplet {
                        subject_entity: link_entity(&raw.subject, &self.ontology),
                        object_entity: link_entity(&raw.object, &self.ontology),
                        relation: canonicalize_relation(&raw.relation, &self.synonyms),
                        subject: raw.subject,
                        object: raw.object,
                        provenance: Provenance {
                            doc_id: doc.doc_id.clone(),
                            para_id: Some(para.para_id.clone()),
                            sentence: Some(ordinal),
                        },
                        kind: TripletKind::Extracted,
                    });
                }
            }
        }
        out.extend(metadata_triplets(doc));
        out
    }
}
