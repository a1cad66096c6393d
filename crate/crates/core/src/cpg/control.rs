use std::collections::BTreeSet;

use crate::frontend::{Ast, Detail, NodeType};

/// Structural control dependence: each statement directly inside an `if`
/// branch or loop body depends on the innermost enclosing condition. Blocks
/// and labels are transparent. A condition-less `for` adds no dependence.
pub fn control_dependence(ast: &Ast) -> Vec<(usize, usize)> {
    let mut out = BTreeSet::new();
    visit(ast, ast.root().children[1], None, &mut out);
    out.into_iter().collect()
}

fn visit(ast: &Ast, id: usize, pred: Option<usize>, out: &mut BTreeSet<(usize, usize)>) {
    let node = ast.node(id);
    let kids = &node.children;
    let depend = |s: usize, out: &mut BTreeSet<(usize, usize)>| {
        if let Some(p) = pred {
            if p != s {
                out.insert((p, s));
            }
        }
    };
    match node.node_type {
        NodeType::Block => kids.iter().for_each(|&c| visit(ast, c, pred, out)),
        NodeType::Label => {
            depend(id, out);
            visit(ast, kids[0], pred, out);
        }
        NodeType::If => {
            let cond = kids[0];
            depend(cond, out);
            kids[1..].iter().for_each(|&c| visit(ast, c, Some(cond), out));
        }
        NodeType::While => {
            let cond = kids[0];
            depend(cond, out);
            visit(ast, kids[1], Some(cond), out);
        }
        NodeType::For => {
            let Detail::For { init, cond, update } = node.detail else { return };
            let mut parts = kids.iter().copied();
            if init {
                visit(ast, parts.next().expect("init"), pred, out);
            }
            let inner = if cond {
                let c = parts.next().expect("cond");
                depend(c, out);
                Some(c)
            } else {
                pred
            };
            if update {
                let u = parts.next().expect("update");
                if let Some(p) = inner {
                    if p != u {
                        out.insert((p, u));
                    }
                }
            }
            visit(ast, parts.next().expect("body"), inner, out);
        }
        t if t.is_statement() => depend(id, out),
        _ => {}
    }
}
