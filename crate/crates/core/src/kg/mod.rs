//! Triplet knowledge store: synthesis from documents, field-weighted search
//! with faceted refinement, and a portable graph export.

mod export;
mod index;
mod synthesis;

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::analysis::{normalize, AnalyzerConfig};
use crate::error::{Error, Result};

pub use export::{export_graph, import_graph, write_graph, GraphEdge, GraphExport, GraphFormat, GraphNode};
pub use index::{TripletIndex, TripletWeights};
pub use synthesis::{
    canonicalize_relation, extract_triplets_baseline, link_entity, metadata_triplets, normalize_mention, read_synonyms,
    resolve_coreferences, split_sentences, CorefResolver, IdentityResolver, KnowledgeSynthesizer, Ontology,
    PatternExtractor, RawTriplet, TripletExtractor,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub canonical_name: String,
    pub aliases: Vec<String>,
    #[serde(rename = "type")]
    pub entity_type: String,
    #[serde(rename = "subtype", default)]
    pub entity_subtype: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub ontology_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletKind {
    Extracted,
    Metadata,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    /// Absent for document-level metadata triplets.
    #[serde(default)]
    pub para_id: Option<String>,
    #[serde(default)]
    pub sentence: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default)]
    pub subject_entity: Option<Entity>,
    #[serde(default)]
    pub object_entity: Option<Entity>,
    pub provenance: Provenance,
    pub kind: TripletKind,
}

impl Triplet {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [("subject", &self.subject), ("relation", &self.relation), ("object", &self.object)] {
            if value.trim().is_empty() {
                return Err(Error::parse(field, "must be non-empty"));
            }
        }
        if self.provenance.doc_id.is_empty() {
            return Err(Error::parse("provenance.doc_id", "must be non-empty"));
        }
        Ok(())
    }

    pub fn facet_value(&self, field: FacetField) -> Option<&str> {
        let entity = match field {
            FacetField::SubjectType | FacetField::SubjectSubtype => self.subject_entity.as_ref(),
            FacetField::ObjectType | FacetField::ObjectSubtype => self.object_entity.as_ref(),
        }?;
        let value = match field {
            FacetField::SubjectType | FacetField::ObjectType => &entity.entity_type,
            FacetField::SubjectSubtype | FacetField::ObjectSubtype => &entity.entity_subtype,
        };
        (!value.is_empty()).then_some(value.as_str())
    }
}

/// Reads one JSON triplet per line, skipping blank lines.
pub fn read_triplets<R: BufRead>(reader: R) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<triplets>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Triplet = serde_json::from_str(&line)
            .map_err(|e| Error::parse("triplet", format!("line {}: {e}", i + 1)))?;
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetField {
    SubjectType,
    SubjectSubtype,
    ObjectType,
    ObjectSubtype,
}

impl FacetField {
    pub const ALL: [FacetField; 4] = [
        FacetField::SubjectType,
        FacetField::SubjectSubtype,
        FacetField::ObjectType,
        FacetField::ObjectSubtype,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FacetField::SubjectType => "subject_type",
            FacetField::SubjectSubtype => "subject_subtype",
            FacetField::ObjectType => "object_type",
            FacetField::ObjectSubtype => "object_subtype",
        }
    }
}

impl std::str::FromStr for FacetField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FacetField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::parse(s, "unknown facet field"))
    }
}

/// Value reported for triplets whose entity on that side is not linked.
pub const UNLINKED: &str = "(unlinked)";

/// Conjunction of `field = value` clauses, one value per field.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetFilter {
    pub clauses: BTreeMap<FacetField, String>,
}

fn facet_norm(value: &str) -> String {
    normalize(value.trim(), &AnalyzerConfig::default())
}

impl FacetFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, field: FacetField, value: impl Into<String>) -> Self {
        self.clauses.insert(field, value.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in &self.clauses {
            if value.trim().is_empty() {
                return Err(Error::parse(field.as_str(), "facet value must be non-empty"));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn matches(&self, t: &Triplet) -> bool {
        self.clauses.iter().all(|(field, want)| {
            let have = t.facet_value(*field).unwrap_or(UNLINKED);
            facet_norm(have) == facet_norm(want)
        })
    }
}

pub type FacetCounts = BTreeMap<FacetField, BTreeMap<String, usize>>;

/// Exact value counts for each facet field over a result list.
pub fn facet_counts<'a, I>(results: I) -> FacetCounts
where
    I: IntoIterator<Item = &'a Triplet>,
{
    let mut counts: FacetCounts = FacetField::ALL.iter().map(|f| (*f, BTreeMap::new())).collect();
    for t in results {
        for field in FacetField::ALL {
            let value = t.facet_value(field).unwrap_or(UNLINKED).to_string();
            *counts.get_mut(&field).expect("all fields present").entry(value).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn entity(name: &str, ty: &str, subtype: &str) -> Entity {
        Entity {
            canonical_name: name.into(),
            aliases: vec![name.into()],
            entity_type: ty.into(),
            entity_subtype: subtype.into(),
            description: String::new(),
            ontology_id: None,
        }
    }

    fn triplet(subject_type: Option<&str>) -> Triplet {
        Triplet {
            subject: "s".into(),
            relation: "r".into(),
            object: "o".into(),
            subject_entity: subject_type.map(|t| entity("s", t, "")),
            object_entity: None,
            provenance: Provenance {
                doc_id: "d".into(),
                para_id: None,
                sentence: None,
            },
            kind: TripletKind::Extracted,
        }
    }

    #[test]
    fn facet_count_examples() {
        let ts = vec![
            triplet(Some("Virus")),
            triplet(Some("Virus")),
            triplet(Some("Virus")),
            triplet(Some("Bacterium")),
        ];
        let counts = facet_counts(&ts);
        let st = &counts[&FacetField::SubjectType];
        assert_eq!(st["Virus"], 3);
        assert_eq!(st["Bacterium"], 1);
        assert_eq!(counts[&FacetField::ObjectType][UNLINKED], 4);

        let empty = facet_counts(&[]);
        assert!(empty.values().all(BTreeMap::is_empty));

        let counts = facet_counts(&[triplet(None)]);
        assert_eq!(counts[&FacetField::SubjectType][UNLINKED], 1);
    }

    #[test]
    fn filter_semantics() {
        let v = triplet(Some("Virus"));
        let u = triplet(None);
        assert!(FacetFilter::new().matches(&v));
        let f = FacetFilter::new().with(FacetField::SubjectType, "virus");
        assert!(f.matches(&v));
        assert!(!f.matches(&u));
        let f = FacetFilter::new().with(FacetField::SubjectType, UNLINKED);
        assert!(f.matches(&u));
        let f = FacetFilter::new()
            .with(FacetField::SubjectType, "Virus")
            .with(FacetField::ObjectType, "Mammal");
        assert!(!f.matches(&v));
        assert!(FacetFilter::new().with(FacetField::ObjectType, " ").validate().is_err());
        assert_eq!("object_subtype".parse::<FacetField>().unwrap(), FacetField::ObjectSubtype);
    }

    #[test]
    fn bulk_triplets_are_validated() {
        let line = r#"{"subject":"SARS-CoV","relation":"infects","object":"humans","provenance":{"doc_id":"d1","para_id":"d1#0","sentence":0},"kind":"extracted"}"#;
        let ts = read_triplets(line.as_bytes()).unwrap();
        assert_eq!(ts.len(), 1);
        let bad = r#"{"subject":"","relation":"r","object":"o","provenance":{"doc_id":"d"},"kind":"metadata"}"#;
        assert!(read_triplets(bad.as_bytes()).is_err());
    }
}
