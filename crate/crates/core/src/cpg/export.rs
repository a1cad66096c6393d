use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{CodeGraph, Edge, GraphNode};
use crate::error::Result;

#[derive(Serialize, Deserialize)]
struct GraphJson {
    entry_id: usize,
    exit_id: usize,
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
}

/// Pretty JSON with nodes and edges sorted by id.
pub fn export_json(graph: &CodeGraph) -> String {
    let doc = GraphJson {
        entry_id: graph.entry_id,
        exit_id: graph.exit_id,
        nodes: graph.nodes.clone(),
        edges: graph.edges.iter().copied().collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
    s.push('\n');
    s
}

pub fn import_json(text: &str) -> Result<CodeGraph> {
    let doc: GraphJson = serde_json::from_str(text)?;
    let graph = CodeGraph {
        nodes: doc.nodes,
        edges: doc.edges.into_iter().collect::<BTreeSet<_>>(),
        entry_id: doc.entry_id,
        exit_id: doc.exit_id,
    };
    graph.validate()?;
    Ok(graph)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn export_dot(graph: &CodeGraph) -> String {
    let mut s = String::from("digraph cpg {\n  node [shape=box];\n");
    for n in &graph.nodes {
        let label = if n.subseq.is_empty() {
            n.node_type.to_string()
        } else {
            format!("{}: {}", n.node_type, n.subseq.join(" "))
        };
        let _ = writeln!(s, "  n{} [label=\"{}\"];", n.id, escape(&label));
    }
    for e in &graph.edges {
        let _ = writeln!(s, "  n{} -> n{} [label=\"{}\"];", e.src, e.dst, e.edge_type);
    }
    s.push_str("}\n");
    s
}
