use super::ast::{Ast, Detail, NodeType};

/// Renders an AST back to C source. Expressions are fully parenthesized so
/// the printed text reparses to the same tree regardless of precedence.
pub fn pretty_print(ast: &Ast) -> String {
    let mut out = String::new();
    let root = ast.root();
    if let Detail::Function { ret, name } = &root.detail {
        out.push_str(&join(ast, ret.clone()));
        out.push(' ');
        out.push_str(&ast.tokens[*name].text);
    }
    let params: Vec<String> = ast.children(root.children[0]).map(|p| ast.text(p.id)).collect();
    out.push('(');
    out.push_str(&params.join(", "));
    out.push_str(") ");
    stmt(ast, root.children[1], 0, &mut out);
    out
}

fn join(ast: &Ast, range: std::ops::Range<usize>) -> String {
    ast.tokens[range].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
}

fn indent(depth: usize, out: &mut String) {
    out.push_str(&"    ".repeat(depth));
}

fn stmt(ast: &Ast, id: usize, depth: usize, out: &mut String) {
    let node = ast.node(id);
    match node.node_type {
        NodeType::Block => {
            out.push_str("{\n");
            for &c in &node.children {
                indent(depth + 1, out);
                stmt(ast, c, depth + 1, out);
            }
            indent(depth, out);
            out.push_str("}\n");
        }
        NodeType::If => {
            out.push_str(&format!("if ({}) ", expr(ast, node.children[0], true)));
            stmt(ast, node.children[1], depth, out);
            if let Some(&e) = node.children.get(2) {
                indent(depth, out);
                out.push_str("else ");
                stmt(ast, e, depth, out);
            }
        }
        NodeType::While => {
            out.push_str(&format!("while ({}) ", expr(ast, node.children[0], true)));
            stmt(ast, node.children[1], depth, out);
        }
        NodeType::For => {
            let Detail::For { init, cond, update } = node.detail else {
                unreachable!("for node without header detail")
            };
            let mut kids = node.children.iter().copied();
            let mut slot = |present: bool, f: &dyn Fn(usize) -> String| {
                if present {
                    f(kids.next().expect("for slot"))
                } else {
                    String::new()
                }
            };
            let init_s = slot(init, &|c| simple(ast, c));
            let cond_s = slot(cond, &|c| expr(ast, c, true));
            let update_s = slot(update, &|c| simple(ast, c));
            let body = kids.next().expect("for body");
            out.push_str(&format!("for ({init_s}; {cond_s}; {update_s}) "));
            stmt(ast, body, depth, out);
        }
        NodeType::Label => {
            if let Detail::Name(name) = &node.detail {
                out.push_str(&format!("{name}: "));
            }
            stmt(ast, node.children[0], depth, out);
        }
        _ => {
            out.push_str(&simple(ast, id));
            out.push_str(";\n");
        }
    }
}

/// A simple statement without its terminating semicolon.
fn simple(ast: &Ast, id: usize) -> String {
    let node = ast.node(id);
    match node.node_type {
        NodeType::DeclStmt => {
            let Detail::Decl { ty } = &node.detail else {
                return ast.text(id);
            };
            let decls: Vec<String> = ast
                .children(id)
                .map(|d| match d.node_type {
                    NodeType::Assign => {
                        format!("{} = {}", ast.text(d.children[0]), expr(ast, d.children[1], true))
                    }
                    _ => ast.text(d.id),
                })
                .collect();
            format!("{} {}", join(ast, ty.clone()), decls.join(", "))
        }
        NodeType::ExprStmt => node.children.first().map_or(String::new(), |&c| expr(ast, c, true)),
        NodeType::Return => match node.children.first() {
            Some(&c) => format!("return {}", expr(ast, c, true)),
            None => "return".into(),
        },
        NodeType::Break => "break".into(),
        NodeType::Continue => "continue".into(),
        NodeType::Goto => match &node.detail {
            Detail::Name(l) => format!("goto {l}"),
            _ => ast.text(id),
        },
        _ => ast.text(id),
    }
}

fn expr(ast: &Ast, id: usize, top: bool) -> String {
    let node = ast.node(id);
    let wrap = |s: String| if top { s } else { format!("({s})") };
    let kid = |i: usize| expr(ast, node.children[i], false);
    match node.node_type {
        NodeType::Identifier | NodeType::Literal => ast.text(id),
        NodeType::Condition => expr(ast, node.children[0], top),
        NodeType::Call => {
            let callee = match ast.node(node.children[0]).node_type {
                NodeType::Identifier => ast.text(node.children[0]),
                _ => kid(0),
            };
            let args: Vec<String> = (1..node.children.len()).map(|i| expr(ast, node.children[i], true)).collect();
            format!("{callee}({})", args.join(", "))
        }
        NodeType::Assign | NodeType::BinaryOp | NodeType::UnaryOp => {
            let (op, field) = match &node.detail {
                Detail::Op { op, field } => (op.as_str(), field.as_deref()),
                _ => ("?", None),
            };
            match (node.node_type, op) {
                (NodeType::BinaryOp, "[]") => format!("{}[{}]", kid(0), expr(ast, node.children[1], true)),
                (NodeType::BinaryOp, "." | "->") => format!("{}{op}{}", kid(0), field.unwrap_or("")),
                (NodeType::BinaryOp, "?:") => wrap(format!("{} ? {} : {}", kid(0), kid(1), kid(2))),
                (NodeType::UnaryOp, "post++" | "post--") => wrap(format!("{} {}", kid(0), &op[4..])),
                (NodeType::UnaryOp, "cast") => wrap(format!("({}) {}", field.unwrap_or(""), kid(0))),
                (NodeType::UnaryOp, "sizeof") if node.children.is_empty() => ast.text(id),
                (NodeType::UnaryOp, "sizeof") => format!("sizeof {}", kid(0)),
                (NodeType::UnaryOp, _) => wrap(format!("{op} {}", kid(0))),
                _ => wrap(format!("{} {op} {}", kid(0), kid(1))),
            }
        }
        _ => ast.text(id),
    }
}
