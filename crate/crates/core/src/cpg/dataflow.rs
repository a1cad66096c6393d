use std::collections::{BTreeMap, BTreeSet};

use super::cfg::ControlFlow;
use crate::frontend::{Ast, NodeType};

/// Variables a statement writes and reads, with the identifier node of each
/// occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUse {
    pub defs: Vec<(String, usize)>,
    pub uses: Vec<(String, usize)>,
}

impl DefUse {
    pub fn defined_vars(&self) -> BTreeSet<&str> {
        self.defs.iter().map(|(v, _)| v.as_str()).collect()
    }

    pub fn used_vars(&self) -> BTreeSet<&str> {
        self.uses.iter().map(|(v, _)| v.as_str()).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Access {
    Read,
    Write,
    ReadWrite,
}

/// Def/use sets for every flow-graph statement.
///
/// Writes are declarators, assignment targets and `++`/`--` operands (the
/// latter and compound assignments also read). For indexed or member
/// targets the base variable counts as written; index expressions are
/// read. Callee names of direct calls are neither. Parameters are not
/// definitions inside the body.
pub fn statement_def_use(ast: &Ast, cfg: &ControlFlow) -> BTreeMap<usize, DefUse> {
    cfg.statements.iter().filter(|&&s| s < ast.len()).map(|&s| (s, def_use_of(ast, s))).collect()
}

pub fn def_use_of(ast: &Ast, stmt: usize) -> DefUse {
    let mut du = DefUse::default();
    let node = ast.node(stmt);
    match node.node_type {
        NodeType::DeclStmt => {
            for c in &node.children {
                match ast.node(*c).node_type {
                    NodeType::Identifier => du.defs.push((ast.text(*c), *c)),
                    _ => walk(ast, *c, Access::Read, &mut du),
                }
            }
        }
        NodeType::ExprStmt | NodeType::Return | NodeType::Condition => {
            for &c in &node.children {
                walk(ast, c, Access::Read, &mut du);
            }
        }
        _ => {}
    }
    du
}

fn walk(ast: &Ast, id: usize, access: Access, du: &mut DefUse) {
    let node = ast.node(id);
    let kids = &node.children;
    match node.node_type {
        NodeType::Identifier => {
            let name = ast.text(id);
            if matches!(access, Access::Write | Access::ReadWrite) {
                du.defs.push((name.clone(), id));
            }
            if matches!(access, Access::Read | Access::ReadWrite) {
                du.uses.push((name, id));
            }
        }
        NodeType::Assign => {
            let target = if node.op() == Some("=") { Access::Write } else { Access::ReadWrite };
            walk(ast, kids[0], target, du);
            walk(ast, kids[1], Access::Read, du);
        }
        NodeType::UnaryOp => match node.op() {
            Some("++" | "--" | "post++" | "post--") => walk(ast, kids[0], Access::ReadWrite, du),
            Some("cast") if access != Access::Read => walk(ast, kids[0], access, du),
            _ => kids.iter().for_each(|&c| walk(ast, c, Access::Read, du)),
        },
        NodeType::BinaryOp if access != Access::Read => match node.op() {
            Some("[]") => {
                walk(ast, kids[0], access, du);
                walk(ast, kids[1], Access::Read, du);
            }
            Some("." | "->") => walk(ast, kids[0], access, du),
            _ => kids.iter().for_each(|&c| walk(ast, c, Access::Read, du)),
        },
        NodeType::Call => {
            for (i, &c) in kids.iter().enumerate() {
                if i == 0 && ast.node(c).node_type == NodeType::Identifier {
                    continue;
                }
                walk(ast, c, Access::Read, du);
            }
        }
        _ => kids.iter().for_each(|&c| walk(ast, c, Access::Read, du)),
    }
}

/// Outcome of the reaching-definitions fixpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachingDefs {
    /// `(definition statement, using statement, variable)`, sorted.
    pub triples: Vec<(usize, usize, String)>,
    /// Sweeps over the statements until nothing changed.
    pub iterations: usize,
}

/// Forward may-analysis: a definition of `x` at `d` reaches `u` when some
/// flow path from `d` to `u` does not redefine `x`. Emits `(d, u, x)` for
/// every such definition whose variable `u` reads.
pub fn reaching_definitions(cfg: &ControlFlow, stmts: &BTreeMap<usize, DefUse>) -> ReachingDefs {
    type Def = (usize, String);
    let mut nodes: Vec<usize> = cfg.statements.clone();
    nodes.push(cfg.entry);
    nodes.push(cfg.exit);
    nodes.sort_unstable();

    let empty = DefUse::default();
    let info = |n: usize| stmts.get(&n).unwrap_or(&empty);
    let gen: BTreeMap<usize, BTreeSet<Def>> =
        nodes.iter().map(|&n| (n, info(n).defined_vars().into_iter().map(|v| (n, v.to_string())).collect())).collect();
    let preds: BTreeMap<usize, Vec<usize>> = nodes.iter().map(|&n| (n, cfg.predecessors(n).collect())).collect();

    let mut out: BTreeMap<usize, BTreeSet<Def>> = nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
    let mut input: BTreeMap<usize, BTreeSet<Def>> = out.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for &n in &nodes {
            let in_set: BTreeSet<Def> =
                preds[&n].iter().flat_map(|p| out.get(p).into_iter().flatten().cloned()).collect();
            let killed = info(n).defined_vars();
            let mut new_out: BTreeSet<Def> =
                in_set.iter().filter(|(_, v)| !killed.contains(v.as_str())).cloned().collect();
            new_out.extend(gen[&n].iter().cloned());
            if new_out != out[&n] {
                changed = true;
                out.insert(n, new_out);
            }
            input.insert(n, in_set);
        }
        if !changed {
            break;
        }
    }

    let mut triples = BTreeSet::new();
    for &n in &nodes {
        let used = info(n).used_vars();
        for (d, v) in &input[&n] {
            if used.contains(v.as_str()) {
                triples.insert((*d, n, v.clone()));
            }
        }
    }
    ReachingDefs { triples: triples.into_iter().collect(), iterations }
}
