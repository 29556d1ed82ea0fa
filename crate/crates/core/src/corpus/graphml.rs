//! GraphML serialization of ego-subgraphs in the summary-prompt dialect.
//!
//! ```text
//! <?xml version="1.0" encoding="UTF-8"?>
//! <graphml>
//! <key id="d0" for="node" attr.name="title" attr.type="string"/>
//! <key id="d1" for="node" attr.name="abstract" attr.type="string"/>
//! <key id="d2" for="edge" attr.name="type" attr.type="string"/>
//! <graph id="G" edgedefault="undirected">
//!     <node id="n0">
//!             <data key="d0">...</data>
//!             <data key="d1">...</data>
//!     </node>
//!     <edge id="e0" source="n0" target="n1">
//!             <data key="d2" >cited</data>
//!     </edge>
//! </graph>
//! </graphml>
//! ```

use std::collections::HashMap;

use ndarray::Array2;
use quick_xml::escape::{partial_escape, resolve_predefined_entity};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tag::{EgoSubgraph, TextAttributedGraph};

const NODE_INDENT: &str = "    ";
const DATA_INDENT: &str = "            ";

/// Attribute keys and the edge relation word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMlSchema {
    /// `(key id, attribute name)` for node attributes, in emission order.
    pub node_keys: Vec<(String, String)>,
    /// `(key id, attribute name)` of the edge-type attribute.
    pub edge_key: (String, String),
    pub relation: String,
}

impl GraphMlSchema {
    /// Node keys `d0..` for `attrs`, edge key `d{len}` named `type`.
    pub fn new(attrs: &[&str], relation: &str) -> Self {
        Self {
            node_keys: attrs.iter().enumerate().map(|(i, a)| (format!("d{i}"), a.to_string())).collect(),
            edge_key: (format!("d{}", attrs.len()), "type".into()),
            relation: relation.into(),
        }
    }

    /// Citation networks: title and abstract.
    pub fn academic() -> Self {
        Self::new(&["title", "abstract"], "cited")
    }

    /// Co-purchase networks: title and description.
    pub fn e_commerce() -> Self {
        Self::new(&["title", "description"], "co-purchased")
    }

    /// Reply networks: post content.
    pub fn social() -> Self {
        Self::new(&["content"], "replied")
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_keys.is_empty() {
            return Err(Error::Validation("GraphML schema needs at least one node attribute".into()));
        }
        let mut ids: Vec<&str> = self.node_keys.iter().map(|k| k.0.as_str()).collect();
        ids.push(&self.edge_key.0);
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n {
            return Err(Error::Validation("GraphML key ids must be unique".into()));
        }
        Ok(())
    }
}

/// Parsed document: node attribute values in key order, edges by node index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphMlDocument {
    pub schema: GraphMlSchema,
    pub node_attrs: Vec<Vec<String>>,
    pub edges: Vec<(usize, usize)>,
    pub relations: Vec<String>,
}

impl GraphMlDocument {
    pub fn num_nodes(&self) -> usize {
        self.node_attrs.len()
    }

    /// Topology as a featureless subgraph centered on `n0`, global ids `0..n`.
    pub fn skeleton(&self) -> EgoSubgraph {
        let n = self.num_nodes();
        let mut edges: Vec<_> = self.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        edges.sort_unstable();
        EgoSubgraph {
            center_local_id: 0,
            global_ids: (0..n).collect(),
            features: Array2::zeros((n, 0)),
            edges,
            positional: Array2::zeros((n, 0)),
        }
    }

    /// Attribute values of node `i` keyed by attribute name.
    pub fn attributes(&self, i: usize) -> Vec<(&str, &str)> {
        self.schema
            .node_keys
            .iter()
            .zip(&self.node_attrs[i])
            .map(|((_, name), v)| (name.as_str(), v.as_str()))
            .collect()
    }
}

/// Truncates to at most `budget` characters.
pub fn truncate_chars(s: &str, budget: usize) -> String {
    match s.char_indices().nth(budget) {
        Some((i, _)) => s[..i].to_string(),
        None => s.to_string(),
    }
}

/// Attribute values per subgraph node: tab-separated segments of the node's
/// raw text (surplus segments folded into the last attribute, missing ones
/// empty), each truncated to `char_budget` characters.
pub fn node_texts(
    graph: &TextAttributedGraph,
    sub: &EgoSubgraph,
    schema: &GraphMlSchema,
    char_budget: Option<usize>,
) -> Vec<Vec<String>> {
    let k = schema.node_keys.len();
    sub.global_ids
        .iter()
        .map(|&g| {
            let mut segs = graph.raw_text[g].splitn(k.max(1), '\t');
            schema
                .node_keys
                .iter()
                .map(|_| {
                    let s = segs.next().unwrap_or("").replace('\t', " ");
                    match char_budget {
                        Some(b) => truncate_chars(&s, b),
                        None => s,
                    }
                })
                .collect()
        })
        .collect()
}

/// Serializes a subgraph. `node_texts[i][k]` is node `i`'s value for key `k`.
pub fn emit_graphml(sub: &EgoSubgraph, schema: &GraphMlSchema, node_texts: &[Vec<String>]) -> Result<String> {
    schema.validate()?;
    for i in 0..sub.num_nodes() {
        let row = node_texts.get(i);
        for (k, (_, name)) in schema.node_keys.iter().enumerate() {
            if row.and_then(|r| r.get(k)).is_none() {
                return Err(Error::MissingAttribute {
                    node: i,
                    key: name.clone(),
                });
            }
        }
    }
    let doc = GraphMlDocument {
        schema: schema.clone(),
        node_attrs: node_texts[..sub.num_nodes()].to_vec(),
        edges: sub.edges.clone(),
        relations: vec![schema.relation.clone(); sub.edges.len()],
    };
    Ok(write_document(&doc))
}

pub fn write_document(doc: &GraphMlDocument) -> String {
    let s = &doc.schema;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<graphml>\n");
    for (id, name) in &s.node_keys {
        out.push_str(&format!(
            "<key id=\"{}\" for=\"node\" attr.name=\"{}\" attr.type=\"string\"/>\n",
            quick_xml::escape::escape(id.as_str()),
            quick_xml::escape::escape(name.as_str())
        ));
    }
    out.push_str(&format!(
        "<key id=\"{}\" for=\"edge\" attr.name=\"{}\" attr.type=\"string\"/>\n",
        quick_xml::escape::escape(s.edge_key.0.as_str()),
        quick_xml::escape::escape(s.edge_key.1.as_str())
    ));
    out.push_str("<graph id=\"G\" edgedefault=\"undirected\">\n");
    for (i, attrs) in doc.node_attrs.iter().enumerate() {
        out.push_str(&format!("{NODE_INDENT}<node id=\"n{i}\">\n"));
        for ((id, _), value) in s.node_keys.iter().zip(attrs) {
            out.push_str(&format!(
                "{DATA_INDENT}<data key=\"{}\">{}</data>\n",
                quick_xml::escape::escape(id.as_str()),
                partial_escape(value.as_str())
            ));
        }
        out.push_str(&format!("{NODE_INDENT}</node>\n"));
    }
    for (e, (&(u, v), rel)) in doc.edges.iter().zip(&doc.relations).enumerate() {
        out.push_str(&format!("{NODE_INDENT}<edge id=\"e{e}\" source=\"n{u}\" target=\"n{v}\">\n"));
        out.push_str(&format!(
            "{DATA_INDENT}<data key=\"{}\" >{}</data>\n",
            quick_xml::escape::escape(s.edge_key.0.as_str()),
            partial_escape(rel.as_str())
        ));
        out.push_str(&format!("{NODE_INDENT}</edge>\n"));
    }
    out.push_str("</graph>\n</graphml>\n");
    out
}

fn xml_err(e: impl std::fmt::Display) -> Error {
    Error::GraphMl(e.to_string())
}

fn attrs(e: &BytesStart) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        let key = std::str::from_utf8(a.key.as_ref()).map_err(xml_err)?.to_string();
        out.insert(key, a.unescape_value().map_err(xml_err)?.into_owned());
    }
    Ok(out)
}

fn required<'m>(map: &'m HashMap<String, String>, key: &str, element: &str) -> Result<&'m str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::GraphMl(format!("<{element}> lacks `{key}`")))
}

enum Owner {
    Node(usize),
    Edge(usize),
}

/// Parses a document of the dialect written by [`emit_graphml`].
pub fn parse_graphml(doc: &str) -> Result<GraphMlDocument> {
    let mut reader = Reader::from_str(doc);
    reader.config_mut().trim_text(false);

    let mut node_keys: Vec<(String, String)> = Vec::new();
    let mut edge_key: Option<(String, String)> = None;
    let mut node_index: HashMap<String, usize> = HashMap::new();
    let mut node_attrs: Vec<Vec<String>> = Vec::new();
    let mut edge_refs: Vec<(String, String)> = Vec::new();
    let mut relations: Vec<String> = Vec::new();
    let mut owner: Option<Owner> = None;
    let mut data: Option<(String, String)> = None;
    let mut saw_graph = false;

    loop {
        match reader.read_event().map_err(xml_err)? {
            Event::Eof => break,
            Event::Empty(e) | Event::Start(e) if e.name().as_ref() == b"key" => {
                let a = attrs(&e)?;
                let id = required(&a, "id", "key")?.to_string();
                let name = required(&a, "attr.name", "key")?.to_string();
                if node_keys.iter().any(|k| k.0 == id) || edge_key.as_ref().is_some_and(|k| k.0 == id) {
                    return Err(Error::GraphMl(format!("duplicate key id `{id}`")));
                }
                match required(&a, "for", "key")? {
                    "node" => node_keys.push((id, name)),
                    "edge" if edge_key.is_none() => edge_key = Some((id, name)),
                    "edge" => return Err(Error::GraphMl("more than one edge key".into())),
                    other => return Err(Error::GraphMl(format!("unsupported key domain `{other}`"))),
                }
            }
            Event::Start(e) => match e.name().as_ref() {
                b"graphml" => {}
                b"graph" => saw_graph = true,
                b"node" => {
                    let a = attrs(&e)?;
                    let id = required(&a, "id", "node")?.to_string();
                    if node_index.insert(id.clone(), node_attrs.len()).is_some() {
                        return Err(Error::GraphMl(format!("duplicate node id `{id}`")));
                    }
                    owner = Some(Owner::Node(node_attrs.len()));
                    node_attrs.push(vec![String::new(); node_keys.len()]);
                }
                b"edge" => {
                    let a = attrs(&e)?;
                    let s = required(&a, "source", "edge")?.to_string();
                    let t = required(&a, "target", "edge")?.to_string();
                    owner = Some(Owner::Edge(edge_refs.len()));
                    edge_refs.push((s, t));
                    relations.push(String::new());
                }
                b"data" => {
                    let a = attrs(&e)?;
                    data = Some((required(&a, "key", "data")?.to_string(), String::new()));
                }
                other => {
                    return Err(Error::GraphMl(format!(
                        "unexpected element <{}>",
                        String::from_utf8_lossy(other)
                    )))
                }
            },
            Event::Empty(e) if e.name().as_ref() == b"data" => {
                let a = attrs(&e)?;
                data = Some((required(&a, "key", "data")?.to_string(), String::new()));
                store_data(&mut data, &owner, &node_keys, &edge_key, &mut node_attrs, &mut relations)?;
            }
            Event::Empty(e) => {
                return Err(Error::GraphMl(format!(
                    "unexpected element <{}/>",
                    String::from_utf8_lossy(e.name().as_ref())
                )))
            }
            Event::Text(t) => {
                if let Some((_, buf)) = data.as_mut() {
                    buf.push_str(&t.decode().map_err(xml_err)?);
                }
            }
            Event::CData(t) => {
                if let Some((_, buf)) = data.as_mut() {
                    buf.push_str(&t.decode().map_err(xml_err)?);
                }
            }
            Event::GeneralRef(r) => {
                if let Some((_, buf)) = data.as_mut() {
                    if let Some(c) = r.resolve_char_ref().map_err(xml_err)? {
                        buf.push(c);
                    } else {
                        let name = r.decode().map_err(xml_err)?;
                        let value = resolve_predefined_entity(&name)
                            .ok_or_else(|| Error::GraphMl(format!("unknown entity `&{name};`")))?;
                        buf.push_str(value);
                    }
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"data" => store_data(&mut data, &owner, &node_keys, &edge_key, &mut node_attrs, &mut relations)?,
                b"node" | b"edge" => owner = None,
                _ => {}
            },
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
    if !saw_graph {
        return Err(Error::GraphMl("document has no <graph> element".into()));
    }
    let edge_key = edge_key.ok_or_else(|| Error::GraphMl("no edge key declared".into()))?;
    let mut edges = Vec::with_capacity(edge_refs.len());
    for (s, t) in edge_refs {
        let lookup = |id: &str| {
            node_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::GraphMl(format!("edge references undeclared node `{id}`")))
        };
        edges.push((lookup(&s)?, lookup(&t)?));
    }
    let relation = relations.first().cloned().unwrap_or_default();
    Ok(GraphMlDocument {
        schema: GraphMlSchema {
            node_keys,
            edge_key,
            relation,
        },
        node_attrs,
        edges,
        relations,
    })
}

fn store_data(
    data: &mut Option<(String, String)>,
    owner: &Option<Owner>,
    node_keys: &[(String, String)],
    edge_key: &Option<(String, String)>,
    node_attrs: &mut [Vec<String>],
    relations: &mut [String],
) -> Result<()> {
    let Some((key, value)) = data.take() else {
        return Ok(());
    };
    match owner {
        Some(Owner::Node(i)) => {
            let k = node_keys
                .iter()
                .position(|(id, _)| *id == key)
                .ok_or_else(|| Error::GraphMl(format!("unknown node key id `{key}`")))?;
            node_attrs[*i][k] = value;
        }
        Some(Owner::Edge(i)) => {
            if edge_key.as_ref().map(|k| &k.0) != Some(&key) {
                return Err(Error::GraphMl(format!("unknown edge key id `{key}`")));
            }
            relations[*i] = value;
        }
        None => return Err(Error::GraphMl("<data> outside node or edge".into())),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_sub(n: usize) -> (TextAttributedGraph, EgoSubgraph) {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        let raw = (0..n).map(|i| format!("title {i}\tabstract {i}")).collect();
        let g = TextAttributedGraph::new(n, edges, raw).unwrap();
        let sub = EgoSubgraph::induced(&g, (0..n).collect(), 0, None).unwrap();
        (g, sub)
    }

    #[test]
    fn single_node_has_no_edges() {
        let (g, sub) = path_sub(1);
        let schema = GraphMlSchema::academic();
        let doc = emit_graphml(&sub, &schema, &node_texts(&g, &sub, &schema, None)).unwrap();
        assert_eq!(doc.matches("<node ").count(), 1);
        assert!(!doc.contains("<edge"));
    }

    #[test]
    fn escapes_markup_in_text() {
        let (_, sub) = path_sub(1);
        let texts = vec![vec!["a < b & c".to_string(), String::new()]];
        let doc = emit_graphml(&sub, &GraphMlSchema::academic(), &texts).unwrap();
        assert!(doc.contains("a &lt; b &amp; c"));
        assert_eq!(parse_graphml(&doc).unwrap().node_attrs[0][0], "a < b & c");
    }

    #[test]
    fn missing_attribute_names_node_and_key() {
        let (_, sub) = path_sub(2);
        let texts = vec![vec!["t".into(), "a".into()], vec!["t".into()]];
        match emit_graphml(&sub, &GraphMlSchema::academic(), &texts) {
            Err(Error::MissingAttribute { node, key }) => {
                assert_eq!(node, 1);
                assert_eq!(key, "abstract");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let (g, sub) = path_sub(4);
        let schema = GraphMlSchema::e_commerce();
        let texts = node_texts(&g, &sub, &schema, None);
        let doc = parse_graphml(&emit_graphml(&sub, &schema, &texts).unwrap()).unwrap();
        assert_eq!(doc.node_attrs, texts);
        assert_eq!(doc.edges, sub.edges);
        assert_eq!(doc.schema, schema);
    }

    #[test]
    fn undeclared_edge_endpoint_rejected() {
        let (g, sub) = path_sub(3);
        let schema = GraphMlSchema::academic();
        let doc = emit_graphml(&sub, &schema, &node_texts(&g, &sub, &schema, None)).unwrap();
        let bad = doc.replace("target=\"n2\"", "target=\"n5\"");
        let err = parse_graphml(&bad).unwrap_err();
        assert!(err.to_string().contains("n5"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let (g, sub) = path_sub(2);
        let schema = GraphMlSchema::academic();
        let doc = emit_graphml(&sub, &schema, &node_texts(&g, &sub, &schema, None)).unwrap();
        assert!(parse_graphml(&doc.replacen("key=\"d1\"", "key=\"d7\"", 1)).is_err());
        assert!(parse_graphml("<graphml><graph").is_err());
    }

    #[test]
    fn truncation_counts_characters() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("ab", 5), "ab");
    }
}
