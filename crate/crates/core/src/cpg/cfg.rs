use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::frontend::{Ast, Detail, NodeType};

/// Statement-level control flow of one function.
///
/// `entry` and `exit` are synthetic vertices numbered past the AST ids. A
/// `for` loop without a condition uses its own `For` node as loop header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlFlow {
    pub entry: usize,
    pub exit: usize,
    pub edges: BTreeSet<(usize, usize)>,
    /// Every vertex placed in the flow graph, in AST order.
    pub statements: Vec<usize>,
}

impl ControlFlow {
    pub fn successors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((node, 0)..(node + 1, 0)).map(|&(_, d)| d)
    }

    pub fn predecessors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |&&(_, d)| d == node).map(|&(s, _)| s)
    }
}

#[derive(Default)]
struct LoopFrame {
    breaks: Vec<usize>,
    continues: Vec<usize>,
}

struct Builder<'a> {
    ast: &'a Ast,
    exit: usize,
    edges: BTreeSet<(usize, usize)>,
    statements: BTreeSet<usize>,
    loops: Vec<LoopFrame>,
    gotos: Vec<(usize, String)>,
    labels: BTreeMap<String, usize>,
}

/// Builds the flow graph: sequential fallthrough, both branches of `if`,
/// loop back-edges, `break`/`continue`/`goto` jumps and `return` to exit,
/// framed by synthetic entry and exit vertices.
pub fn build_cfg(ast: &Ast) -> Result<ControlFlow> {
    let entry = ast.len();
    let exit = ast.len() + 1;
    let mut b = Builder {
        ast,
        exit,
        edges: BTreeSet::new(),
        statements: BTreeSet::new(),
        loops: Vec::new(),
        gotos: Vec::new(),
        labels: BTreeMap::new(),
    };
    let body = ast.root().children[1];
    let tail = b.stmt(body, vec![entry])?;
    b.link(&tail, exit);
    for (goto, label) in std::mem::take(&mut b.gotos) {
        let target =
            *b.labels.get(&label).ok_or_else(|| Error::Analysis(format!("goto to undefined label `{label}`")))?;
        b.link(&[goto], target);
    }
    Ok(ControlFlow { entry, exit, edges: b.edges, statements: b.statements.into_iter().collect() })
}

impl Builder<'_> {
    fn link(&mut self, preds: &[usize], to: usize) {
        for &p in preds {
            if p != to {
                self.edges.insert((p, to));
            }
        }
    }

    fn vertex(&mut self, preds: &[usize], id: usize) {
        self.statements.insert(id);
        self.link(preds, id);
    }

    fn stmt(&mut self, id: usize, preds: Vec<usize>) -> Result<Vec<usize>> {
        let node = self.ast.node(id);
        let kids = node.children.clone();
        Ok(match node.node_type {
            NodeType::Block => {
                let mut frontier = preds;
                for c in kids {
                    frontier = self.stmt(c, frontier)?;
                }
                frontier
            }
            NodeType::DeclStmt | NodeType::ExprStmt => {
                self.vertex(&preds, id);
                vec![id]
            }
            NodeType::Return => {
                self.vertex(&preds, id);
                self.link(&[id], self.exit);
                Vec::new()
            }
            NodeType::Break | NodeType::Continue => {
                self.vertex(&preds, id);
                let is_break = node.node_type == NodeType::Break;
                let frame = self
                    .loops
                    .last_mut()
                    .ok_or_else(|| Error::Analysis(format!("`{}` outside of a loop", self.ast.text(id))))?;
                if is_break {
                    frame.breaks.push(id);
                } else {
                    frame.continues.push(id);
                }
                Vec::new()
            }
            NodeType::Goto => {
                self.vertex(&preds, id);
                if let Detail::Name(label) = &node.detail {
                    self.gotos.push((id, label.clone()));
                }
                Vec::new()
            }
            NodeType::Label => {
                self.vertex(&preds, id);
                if let Detail::Name(name) = &node.detail {
                    if self.labels.insert(name.clone(), id).is_some() {
                        return Err(Error::Analysis(format!("duplicate label `{name}`")));
                    }
                }
                self.stmt(kids[0], vec![id])?
            }
            NodeType::If => {
                let cond = kids[0];
                self.vertex(&preds, cond);
                let mut out = self.stmt(kids[1], vec![cond])?;
                match kids.get(2) {
                    Some(&e) => out.extend(self.stmt(e, vec![cond])?),
                    None => out.push(cond),
                }
                out
            }
            NodeType::While => {
                let cond = kids[0];
                self.vertex(&preds, cond);
                self.loops.push(LoopFrame::default());
                let body_out = self.stmt(kids[1], vec![cond])?;
                let frame = self.loops.pop().unwrap_or_default();
                self.link(&body_out, cond);
                self.link(&frame.continues, cond);
                let mut out = vec![cond];
                out.extend(frame.breaks);
                out
            }
            NodeType::For => {
                let Detail::For { init, cond, update } = node.detail else {
                    return Err(Error::Analysis("for loop without header".into()));
                };
                let mut parts = kids.into_iter();
                let mut frontier = preds;
                if init {
                    let i = parts.next().expect("init slot");
                    frontier = self.stmt(i, frontier)?;
                }
                let header = if cond { parts.next().expect("cond slot") } else { id };
                self.vertex(&frontier, header);
                let update_id = update.then(|| parts.next().expect("update slot"));
                let body = parts.next().expect("for body");
                self.loops.push(LoopFrame::default());
                let body_out = self.stmt(body, vec![header])?;
                let frame = self.loops.pop().unwrap_or_default();
                let mut back = body_out;
                back.extend(frame.continues);
                match update_id {
                    Some(u) => {
                        self.vertex(&back, u);
                        self.link(&[u], header);
                    }
                    None => self.link(&back, header),
                }
                let mut out = if cond { vec![header] } else { Vec::new() };
                out.extend(frame.breaks);
                out
            }
            other => {
                return Err(Error::Analysis(format!("unexpected {other} in statement position")));
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_function;

    fn cfg_of(src: &str) -> (Ast, ControlFlow) {
        let ast = parse_function(src).unwrap();
        let cfg = build_cfg(&ast).unwrap();
        (ast, cfg)
    }

    fn find(ast: &Ast, text: &str) -> usize {
        ast.nodes
            .iter()
            .find(|n| n.node_type.is_statement() && ast.text(n.id) == text)
            .unwrap_or_else(|| panic!("no statement {text}"))
            .id
    }

    #[test]
    fn straight_line_chain() {
        let (ast, cfg) = cfg_of("void f(){ a = 1; b = 2; c = 3; }");
        let (s1, s2, s3) = (find(&ast, "a = 1"), find(&ast, "b = 2"), find(&ast, "c = 3"));
        let expected: BTreeSet<_> = [(cfg.entry, s1), (s1, s2), (s2, s3), (s3, cfg.exit)].into_iter().collect();
        assert_eq!(cfg.edges, expected);
    }

    #[test]
    fn if_else_joins() {
        let (ast, cfg) = cfg_of("void f(){ if (c) x = 1; else y = 2; z = 3; }");
        let cond = find(&ast, "c");
        let (t, e, j) = (find(&ast, "x = 1"), find(&ast, "y = 2"), find(&ast, "z = 3"));
        for edge in [(cond, t), (cond, e), (t, j), (e, j)] {
            assert!(cfg.edges.contains(&edge), "{edge:?}");
        }
        assert!(!cfg.edges.contains(&(cond, j)));
    }

    #[test]
    fn while_with_break() {
        let (ast, cfg) = cfg_of("void f(){ while (c) { s = 1; break; } after = 2; }");
        let cond = find(&ast, "c");
        let (s, brk, after) = (find(&ast, "s = 1"), find(&ast, "break"), find(&ast, "after = 2"));
        for edge in [(cond, s), (s, brk), (brk, after), (cond, after)] {
            assert!(cfg.edges.contains(&edge), "{edge:?}");
        }
        assert!(!cfg.edges.contains(&(brk, cond)));
    }

    #[test]
    fn for_continue_goes_to_update() {
        let (ast, cfg) = cfg_of("void f(int n){ for (i = 0; i < n; i++) { if (i) continue; s = i; } }");
        let (init, cond, upd) = (find(&ast, "i = 0"), find(&ast, "i < n"), find(&ast, "i ++"));
        let cont = find(&ast, "continue");
        for edge in [(init, cond), (cont, upd), (upd, cond), (cond, cfg.exit)] {
            assert!(cfg.edges.contains(&edge), "{edge:?}");
        }
    }

    #[test]
    fn goto_and_labels() {
        let (ast, cfg) = cfg_of("void f(){ goto out; x = 1; out: return; }");
        let (g, l) = (find(&ast, "goto out"), find(&ast, "out : return"));
        assert!(cfg.edges.contains(&(g, l)));
        let err = build_cfg(&parse_function("void f(){ goto nowhere; }").unwrap()).unwrap_err();
        assert!(err.to_string().contains("nowhere"));
    }

    #[test]
    fn return_and_empty_body() {
        let (_, cfg) = cfg_of("int f(){}");
        assert_eq!(cfg.edges.iter().copied().collect::<Vec<_>>(), [(cfg.entry, cfg.exit)]);
        let (ast, cfg) = cfg_of("int f(){ return 1; }");
        let r = find(&ast, "return 1");
        assert_eq!(cfg.edges.len(), 2);
        assert!(cfg.edges.contains(&(r, cfg.exit)));
    }
}
