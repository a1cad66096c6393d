//! Helpers shared by the integration tests: finite-difference gradient
//! checks, a random program generator and a brute-force reaching-definitions
//! oracle.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use cpgsum::config::RunConfig;
use cpgsum::corpus::synthetic;
use cpgsum::cpg::{CodeGraph, ControlFlow, DefUse, Edge, EdgeType, GraphNode};
use cpgsum::encoder::GraphInput;
use cpgsum::frontend::{tokenize, NodeType};
use cpgsum::model::{Model, Prepared};
use cpgsum::pipeline::{build_vocabs, graph_of, parse_records, prepare, Retriever};
use cpgsum::tensor::{no_grad, Tensor};
use cpgsum::vocab::{code_subtokens, Vocab};

pub const FD_STEP: f64 = 1e-5;

/// Worst relative disagreement between backprop and central differences
/// over every entry of every leaf. Gradients below `floor` in magnitude are
/// compared absolutely against `floor`.
pub fn grad_error(leaves: &[Tensor], floor: f64, loss: impl Fn() -> Tensor) -> f64 {
    for t in leaves {
        t.zero_grad();
    }
    loss().backward().unwrap();
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|t| t.grad().unwrap()).collect();
    let mut worst = 0.0f64;
    for (t, grad) in leaves.iter().zip(&analytic) {
        for i in 0..t.len() {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + FD_STEP;
            let up = no_grad(|| loss().item());
            t.data_mut()[i] = orig - FD_STEP;
            let down = no_grad(|| loss().item());
            t.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn rand_values(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn rand_leaf(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::parameter(rows, cols, rand_values(rng, rows * cols)).unwrap()
}

pub fn rand_const(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, rand_values(rng, rows * cols)).unwrap()
}

/// Weighted sum with fixed random weights, so every output entry gets a
/// distinct upstream gradient.
pub fn probe(t: &Tensor, weights: &Tensor) -> Tensor {
    t.mul(weights).unwrap().sum()
}

#[derive(Debug, Clone, Copy)]
pub struct GenOpts {
    pub max_stmts: usize,
    /// `while`/`for` loops, some ending in a conditional `break`/`continue`.
    pub loops: bool,
    /// Labels and backward `goto`s.
    pub gotos: bool,
}

impl GenOpts {
    pub fn acyclic(max_stmts: usize) -> Self {
        GenOpts { max_stmts, loops: false, gotos: false }
    }

    pub fn full(max_stmts: usize) -> Self {
        GenOpts { max_stmts, loops: true, gotos: true }
    }
}

const VARS: [&str; 4] = ["a", "b", "c", "d"];
const BINOPS: [&str; 13] = ["+", "-", "*", "/", "%", "==", "!=", "<", ">", "<=", ">=", "&&", "||"];

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    left: usize,
    opts: GenOpts,
    labels: Vec<String>,
}

impl<R: Rng> Gen<'_, R> {
    fn var(&mut self) -> &'static str {
        VARS[self.rng.gen_range(0..VARS.len())]
    }

    fn expr(&mut self, depth: usize) -> String {
        let choices = if depth >= 2 { 2 } else { 8 };
        match self.rng.gen_range(0..choices) {
            0 => self.var().to_string(),
            1 => self.rng.gen_range(0..10).to_string(),
            2 | 3 => {
                let op = BINOPS[self.rng.gen_range(0..BINOPS.len())];
                format!("{} {op} {}", self.expr(depth + 1), self.expr(depth + 1))
            }
            4 => {
                let v = self.var();
                ["++", "--"].map(|op| format!("{v}{op}"))[self.rng.gen_range(0..2)].clone()
            }
            5 => format!("{}{}", ["!", "-"][self.rng.gen_range(0..2)], self.var()),
            6 => format!("g({}, {})", self.expr(depth + 1), self.expr(depth + 1)),
            _ => {
                let v = self.var();
                if self.rng.gen_bool(0.5) {
                    format!("p->{v}")
                } else {
                    format!("arr[{}]", self.expr(depth + 1))
                }
            }
        }
    }

    fn simple(&mut self) -> String {
        let v = self.var();
        match self.rng.gen_range(0..6) {
            0 => format!("int {v} = {};", self.expr(0)),
            1 | 2 => format!("{v} = {};", self.expr(0)),
            3 => format!("{v} += {};", self.expr(1)),
            4 => format!("{v}++;"),
            _ => format!("call({}, {});", self.expr(1), self.expr(1)),
        }
    }

    fn block(&mut self, may_return: bool) -> String {
        let mut parts = Vec::new();
        let n = self.rng.gen_range(0..=3);
        for _ in 0..n {
            if self.left == 0 {
                break;
            }
            parts.push(self.stmt());
        }
        if may_return && self.left > 0 && self.rng.gen_bool(0.25) {
            self.left -= 1;
            parts.push(format!("return {};", self.expr(1)));
        }
        format!("{{ {} }}", parts.join(" "))
    }

    fn stmt(&mut self) -> String {
        self.left -= 1;
        let kinds = 4 + if self.opts.loops { 2 } else { 0 } + if self.opts.gotos { 2 } else { 0 };
        let pick = self.rng.gen_range(0..kinds);
        match pick {
            0 | 1 => self.simple(),
            2 => {
                let cond = self.expr(0);
                let then = self.block(true);
                format!("if ({cond}) {then}")
            }
            3 => {
                let cond = self.expr(0);
                let then = self.block(true);
                let other = self.block(false);
                format!("if ({cond}) {then} else {other}")
            }
            4 if self.opts.loops => {
                let cond = self.expr(0);
                format!("while ({cond}) {}", self.loop_body())
            }
            5 if self.opts.loops => {
                let v = self.var();
                if self.rng.gen_bool(0.8) {
                    let bound = self.expr(1);
                    format!("for ({v} = 0; {v} < {bound}; {v}++) {}", self.loop_body())
                } else {
                    // Without a condition only a break leaves the loop.
                    let body = self.block(false);
                    format!("for ({v} = 0; ; {v}++) {{ {body} if ({}) break; }}", self.expr(1))
                }
            }
            _ => {
                if !self.labels.is_empty() && self.rng.gen_bool(0.5) {
                    let l = self.labels[self.rng.gen_range(0..self.labels.len())].clone();
                    format!("goto {l};")
                } else {
                    let l = format!("L{}", self.labels.len());
                    self.labels.push(l.clone());
                    format!("{l}: {}", self.simple())
                }
            }
        }
    }

    fn loop_body(&mut self) -> String {
        let body = self.block(false);
        if self.rng.gen_bool(0.3) {
            let jump = ["break;", "continue;"][self.rng.gen_range(0..2)];
            format!("{{ {body} if ({}) {jump} }}", self.expr(1))
        } else {
            body
        }
    }
}

/// A random function in the accepted C subset. Without gotos every
/// statement is reachable; [`GenOpts::acyclic`] also rules out cycles.
pub fn random_program(rng: &mut impl Rng, opts: GenOpts) -> String {
    let mut g = Gen { rng, left: opts.max_stmts, opts, labels: Vec::new() };
    let mut body = Vec::new();
    while g.left > 0 && (body.is_empty() || g.rng.gen_bool(0.8)) {
        body.push(g.stmt());
    }
    let ret = if g.left > 0 && g.rng.gen_bool(0.5) { format!(" return {};", g.expr(1)) } else { String::new() };
    format!("int f(int a, struct s *p, int *arr) {{ {}{ret} }}", body.join(" "))
}

/// Every `(definition, use, variable)` triple witnessed along some
/// entry-to-exit path, found by enumerating the paths of an acyclic flow
/// graph.
pub fn brute_force_reaching(cfg: &ControlFlow, stmts: &BTreeMap<usize, DefUse>) -> BTreeSet<(usize, usize, String)> {
    fn walk(
        cfg: &ControlFlow,
        stmts: &BTreeMap<usize, DefUse>,
        node: usize,
        last: &BTreeMap<String, usize>,
        depth: usize,
        out: &mut BTreeSet<(usize, usize, String)>,
    ) {
        assert!(depth <= 4 * cfg.statements.len() + 4, "flow graph has a cycle");
        let mut next = last.clone();
        if let Some(du) = stmts.get(&node) {
            for v in du.used_vars() {
                if let Some(&d) = last.get(v) {
                    out.insert((d, node, v.to_string()));
                }
            }
            for v in du.defined_vars() {
                next.insert(v.to_string(), node);
            }
        }
        for s in cfg.successors(node) {
            walk(cfg, stmts, s, &next, depth + 1, out);
        }
    }
    let mut out = BTreeSet::new();
    walk(cfg, stmts, cfg.entry, &BTreeMap::new(), 0, &mut out);
    out
}

pub fn small_config() -> RunConfig {
    RunConfig { d: 6, d_e: 3, d_w: 4, d_t: 3, dropout: 0.0, ..RunConfig::default() }
}

pub fn toy_vocab() -> Vocab {
    Vocab::build(["a", "b", "lt", "call", "f", "x", "(", ")", "<"], 50).unwrap()
}

/// Five nodes with every edge type present and one pair joined by two types.
pub fn five_node_graph() -> CodeGraph {
    let node = |id, node_type, toks: &[&str]| GraphNode {
        id,
        node_type,
        subseq: toks.iter().map(|s| s.to_string()).collect(),
    };
    let nodes = vec![
        node(0, NodeType::Function, &["f", "(", ")"]),
        node(1, NodeType::Condition, &["a", "<", "b"]),
        node(2, NodeType::Identifier, &["a"]),
        node(3, NodeType::Entry, &[]),
        node(4, NodeType::Exit, &[]),
    ];
    let edges = [
        (0, 1, EdgeType::Ast),
        (1, 2, EdgeType::Ast),
        (1, 2, EdgeType::Use),
        (3, 1, EdgeType::FlowTo),
        (1, 4, EdgeType::FlowTo),
        (1, 4, EdgeType::Control),
        (0, 2, EdgeType::Define),
        (2, 4, EdgeType::Reach),
    ]
    .into_iter()
    .map(|(src, dst, edge_type)| Edge { src, dst, edge_type })
    .collect();
    CodeGraph { nodes, edges, entry_id: 3, exit_id: 4 }
}

/// Code vocabulary over the subtokens of `srcs`.
pub fn code_vocab(srcs: &[&str]) -> Vocab {
    let toks: Vec<String> = srcs
        .iter()
        .flat_map(|s| code_subtokens(&tokenize(s).unwrap().into_iter().map(|t| t.text).collect::<Vec<_>>()))
        .collect();
    Vocab::build(toks.iter().map(String::as_str), 1000).unwrap()
}

pub fn lower(graph: &CodeGraph, vocab: &Vocab) -> GraphInput {
    GraphInput::new(graph, vocab, Default::default()).unwrap()
}

pub fn shuffled(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// The same graph with node `v` renamed to `perm[v]`.
pub fn permuted(g: &CodeGraph, perm: &[usize]) -> CodeGraph {
    let mut nodes = g.nodes.clone();
    for n in &g.nodes {
        nodes[perm[n.id]] = GraphNode { id: perm[n.id], ..n.clone() };
    }
    let edges = g.edges.iter().map(|e| Edge { src: perm[e.src], dst: perm[e.dst], edge_type: e.edge_type }).collect();
    CodeGraph { nodes, edges, entry_id: perm[g.entry_id], exit_id: perm[g.exit_id] }
}

/// A fresh model over a synthetic corpus, with every function lowered the
/// way training sees it (retrieval excluding the function itself).
pub struct Kit {
    pub model: Model,
    pub retriever: Retriever,
    pub samples: Vec<Prepared>,
}

pub fn kit(cfg: RunConfig, n: usize) -> Kit {
    let (parsed, skipped) = parse_records(&synthetic(n, cfg.seed));
    assert!(skipped.is_empty());
    let (code, summary) = build_vocabs(&parsed, cfg.vocab_cap).unwrap();
    let index = Retriever::build_index(&parsed, &cfg).unwrap();
    let model = Model::new(cfg, code, summary).unwrap();
    let retriever = Retriever::new(index, &model).unwrap();
    let samples = parsed.iter().map(|p| prepare(&model, Some(&retriever), p, Some(p.record.id)).unwrap()).collect();
    Kit { model, retriever, samples }
}

pub fn random_graph(rng: &mut impl Rng, max_stmts: usize) -> CodeGraph {
    graph_of(&random_program(rng, GenOpts::full(max_stmts))).unwrap()
}

/// Bit patterns, for comparisons that must be exact.
pub fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|x| x.to_bits()).collect()
}
