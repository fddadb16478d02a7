//! Line-delimited graph export: a header record, then one record per node,
//! then one per edge. See `docs/FORMATS.md`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::synthesis::{normalize_mention, DOCUMENT_TYPE};
use super::{Entity, Provenance, Triplet, TripletKind};
use crate::error::{Error, Result};

pub const GRAPH_FORMAT: &str = "biosearch-graph";
pub const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GraphFormat {
    #[default]
    Ndjson,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ndjson" => Ok(GraphFormat::Ndjson),
            other => Err(Error::parse("format", format!("unknown graph format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub label: String,
    #[serde(rename = "type")]
    pub node_type: String,
    #[serde(default)]
    pub subtype: String,
    #[serde(default)]
    pub ontology_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub source: String,
    pub relation: String,
    pub target: String,
    pub kind: TripletKind,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphExport {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header { format: String, version: u32 },
    Node(GraphNode),
    Edge(GraphEdge),
}

fn node_for(mention: &str, entity: Option<&Entity>) -> GraphNode {
    match entity {
        Some(e) => {
            let id = match (&e.ontology_id, e.entity_type.as_str()) {
                (Some(oid), _) => format!("entity:{oid}"),
                (None, DOCUMENT_TYPE) => format!("doc:{}", e.canonical_name),
                (None, ty) => format!("{}:{}", ty.to_lowercase(), e.canonical_name),
            };
            GraphNode {
                id,
                label: e.canonical_name.clone(),
                node_type: e.entity_type.clone(),
                subtype: e.entity_subtype.clone(),
                ontology_id: e.ontology_id.clone(),
            }
        }
        None => {
            let key = normalize_mention(mention);
            GraphNode {
                id: format!("mention:{key}"),
                label: key,
                node_type: "Mention".into(),
                subtype: String::new(),
                ontology_id: None,
            }
        }
    }
}

/// Nodes deduplicated by id, edges deduplicated by (source, relation,
/// target) with provenance accumulated. Output is sorted.
pub fn export_graph(triplets: &[Triplet]) -> GraphExport {
    let mut nodes: BTreeMap<String, GraphNode> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String, String), GraphEdge> = BTreeMap::new();
    for t in triplets {
        let s = node_for(&t.subject, t.subject_entity.as_ref());
        let o = node_for(&t.object, t.object_entity.as_ref());
        let key = (s.id.clone(), t.relation.clone(), o.id.clone());
        let edge = edges.entry(key).or_insert_with(|| GraphEdge {
            source: s.id.clone(),
            relation: t.relation.clone(),
            target: o.id.clone(),
            kind: t.kind,
            provenance: Vec::new(),
        });
        edge.provenance.push(t.provenance.clone());
        nodes.entry(s.id.clone()).or_insert(s);
        nodes.entry(o.id.clone()).or_insert(o);
    }
    let mut edges: Vec<GraphEdge> = edges.into_values().collect();
    for e in &mut edges {
        e.provenance.sort();
    }
    GraphExport {
        nodes: nodes.into_values().collect(),
        edges,
    }
}

pub fn write_graph<W: Write>(graph: &GraphExport, format: GraphFormat, mut w: W) -> std::io::Result<()> {
    match format {
        GraphFormat::Ndjson => {
            let line = |w: &mut W, r: &Record| -> std::io::Result<()> {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")
            };
            line(
                &mut w,
                &Record::Header {
                    format: GRAPH_FORMAT.into(),
                    version: GRAPH_VERSION,
                },
            )?;
            for n in &graph.nodes {
                line(&mut w, &Record::Node(n.clone()))?;
            }
            for e in &graph.edges {
                line(&mut w, &Record::Edge(e.clone()))?;
            }
            w.flush()
        }
    }
}

pub fn import_graph<R: BufRead>(reader: R) -> Result<GraphExport> {
    let mut out = GraphExport::default();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<graph>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| Error::parse("graph", format!("line {}: {e}", i + 1)))?;
        match record {
            Record::Header { format, version } => {
                if format != GRAPH_FORMAT || version != GRAPH_VERSION {
                    return Err(Error::parse(
                        "graph",
                        format!("unsupported graph format {format} version {version}"),
                    ));
                }
                saw_header = true;
            }
            _ if !saw_header => return Err(Error::parse("graph", "missing header record")),
            Record::Node(n) => out.nodes.push(n),
            Record::Edge(e) => out.edges.push(e),
        }
    }
    if !saw_header {
        return Err(Error::parse("graph", "missing header record"));
    }
    Ok(out)
}
