//! Code property graph: AST, control flow, data and control dependence,
//! and define/use edges merged into one typed multigraph.

mod cfg;
mod control;
mod dataflow;
mod export;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{Ast, NodeType};

pub use cfg::{build_cfg, ControlFlow};
pub use control::control_dependence;
pub use dataflow::{def_use_of, reaching_definitions, statement_def_use, DefUse, ReachingDefs};
pub use export::{export_dot, export_json, import_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    #[serde(rename = "AST")]
    Ast,
    #[serde(rename = "FLOW_TO")]
    FlowTo,
    #[serde(rename = "REACH")]
    Reach,
    #[serde(rename = "CONTROL")]
    Control,
    #[serde(rename = "DEFINE")]
    Define,
    #[serde(rename = "USE")]
    Use,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] =
        [EdgeType::Ast, EdgeType::FlowTo, EdgeType::Reach, EdgeType::Control, EdgeType::Define, EdgeType::Use];

    /// Number of edge types.
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Ast => "AST",
            EdgeType::FlowTo => "FLOW_TO",
            EdgeType::Reach => "REACH",
            EdgeType::Control => "CONTROL",
            EdgeType::Define => "DEFINE",
            EdgeType::Use => "USE",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown edge type {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub subseq: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
}

/// Typed multigraph over the AST nodes of one function plus synthetic
/// `Entry`/`Exit` vertices. Edges are kept sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: BTreeSet<Edge>,
    pub entry_id: usize,
    pub exit_id: usize,
}

impl CodeGraph {
    /// Number of nodes, `m`.
    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn has_edge(&self, edge_type: EdgeType, src: usize, dst: usize) -> bool {
        self.edges.contains(&Edge { src, dst, edge_type })
    }

    pub fn edges_of(&self, edge_type: EdgeType) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().filter(move |e| e.edge_type == edge_type).map(|e| (e.src, e.dst))
    }

    /// Dense `k x m x m` adjacency, flattened as `[type][src][dst]`.
    pub fn adjacency(&self) -> Vec<bool> {
        let m = self.m();
        let mut a = vec![false; EdgeType::COUNT * m * m];
        for e in &self.edges {
            a[e.edge_type.index() * m * m + e.src * m + e.dst] = true;
        }
        a
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<CodeGraph> {
        let m = self.m();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Contract("not a permutation of the node ids".into()));
        }
        let mut nodes = self.nodes.clone();
        for n in &mut nodes {
            n.id = perm[n.id];
        }
        nodes.sort_by_key(|n| n.id);
        Ok(CodeGraph {
            nodes,
            edges: self
                .edges
                .iter()
                .map(|e| Edge { src: perm[e.src], dst: perm[e.dst], edge_type: e.edge_type })
                .collect(),
            entry_id: perm[self.entry_id],
            exit_id: perm[self.exit_id],
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let m = self.m();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Contract(format!("node ids must be dense, found {} at {i}", n.id)));
            }
        }
        for e in &self.edges {
            if e.src >= m || e.dst >= m {
                return Err(Error::Contract(format!("edge {}->{} outside {m} nodes", e.src, e.dst)));
            }
            if e.src == e.dst {
                return Err(Error::Contract(format!("self-loop on node {}", e.src)));
            }
        }
        if self.entry_id >= m || self.exit_id >= m {
            return Err(Error::Contract("entry/exit out of range".into()));
        }
        Ok(())
    }
}

/// Merges AST, control flow, reaching-definition, control-dependence and
/// define/use edges into a single graph.
pub fn build_cpg(ast: &Ast) -> Result<CodeGraph> {
    let cfg = build_cfg(ast)?;
    let stmts = statement_def_use(ast, &cfg);
    let reach = reaching_definitions(&cfg, &stmts);

    let mut nodes: Vec<GraphNode> = ast
        .nodes
        .iter()
        .map(|n| GraphNode {
            id: n.id,
            node_type: n.node_type,
            subseq: ast.subseq(n.id).iter().map(|t| t.text.clone()).collect(),
        })
        .collect();
    nodes.push(GraphNode { id: cfg.entry, node_type: NodeType::Entry, subseq: Vec::new() });
    nodes.push(GraphNode { id: cfg.exit, node_type: NodeType::Exit, subseq: Vec::new() });

    let mut edges = BTreeSet::new();
    let mut add = |src: usize, dst: usize, edge_type: EdgeType| {
        if src != dst {
            edges.insert(Edge { src, dst, edge_type });
        }
    };
    for n in &ast.nodes {
        for &c in &n.children {
            add(n.id, c, EdgeType::Ast);
        }
    }
    for &(s, d) in &cfg.edges {
        add(s, d, EdgeType::FlowTo);
    }
    for (d, u, _) in &reach.triples {
        add(*d, *u, EdgeType::Reach);
    }
    for (p, s) in control_dependence(ast) {
        add(p, s, EdgeType::Control);
    }
    for (&s, du) in &stmts {
        for (_, ident) in &du.defs {
            add(s, *ident, EdgeType::Define);
        }
        for (_, ident) in &du.uses {
            add(s, *ident, EdgeType::Use);
        }
    }
    Ok(CodeGraph { nodes, edges, entry_id: cfg.entry, exit_id: cfg.exit })
}

/// The define/use edge list of a graph as `(statement, identifier, type)`.
pub fn define_use_edges(graph: &CodeGraph) -> Vec<(usize, usize, EdgeType)> {
    graph
        .edges
        .iter()
        .filter(|e| matches!(e.edge_type, EdgeType::Define | EdgeType::Use))
        .map(|e| (e.src, e.dst, e.edge_type))
        .collect()
}
