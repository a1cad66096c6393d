use super::ast::{Ast, AstNode, Detail, NodeType};
use super::lexer::{Token, TokenKind};
use crate::error::{Error, Result};

const TYPE_KEYWORDS: &[&str] = &[
    "int", "char", "short", "long", "unsigned", "signed", "float", "double", "void", "const", "static", "volatile",
    "register", "extern", "auto", "inline", "restrict", "_Bool", "bool", "struct", "union", "enum",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

/// Binary operators by precedence level, loosest first.
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["<<", ">>"],
    &["+", "-"],
    &["*", "/", "%"],
];

/// Tree built during parsing; flattened to a preorder arena afterwards.
struct PNode {
    ty: NodeType,
    start: usize,
    end: usize,
    children: Vec<PNode>,
    detail: Detail,
}

impl PNode {
    fn new(ty: NodeType, start: usize, end: usize, children: Vec<PNode>) -> Self {
        Self { ty, start, end, children, detail: Detail::None }
    }

    fn with(mut self, detail: Detail) -> Self {
        self.detail = detail;
        self
    }
}

fn op_detail(op: &str) -> Detail {
    Detail::Op { op: op.to_string(), field: None }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

/// Parses exactly one function definition.
pub fn parse(tokens: Vec<Token>) -> Result<Ast> {
    let root = {
        let mut p = Parser { tokens: &tokens, pos: 0 };
        let f = p.function()?;
        if p.pos < tokens.len() {
            return Err(p.error(&["end of input"]));
        }
        f
    };
    let mut nodes = Vec::new();
    flatten(root, None, &mut nodes);
    Ok(Ast { tokens, nodes })
}

fn flatten(node: PNode, parent: Option<usize>, out: &mut Vec<AstNode>) -> usize {
    let id = out.len();
    out.push(AstNode {
        id,
        node_type: node.ty,
        tokens: node.start..node.end,
        children: Vec::new(),
        parent,
        detail: node.detail,
    });
    let kids: Vec<usize> = node.children.into_iter().map(|c| flatten(c, Some(id), out)).collect();
    out[id].children = kids;
    id
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + offset)
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text && t.kind != TokenKind::String)
    }

    fn at_kind(&self, kind: TokenKind) -> bool {
        self.peek().is_some_and(|t| t.kind == kind)
    }

    fn error(&self, expected: &[&str]) -> Error {
        let (found, start, end) = match self.peek() {
            Some(t) => (format!("{:?}", t.text), t.span.0, t.span.1),
            None => {
                let end = self.tokens.last().map_or(0, |t| t.span.1);
                ("end of input".to_string(), end, end)
            }
        };
        Error::Syntax { expected: expected.iter().map(|s| s.to_string()).collect(), found, start, end }
    }

    fn expect(&mut self, text: &str) -> Result<usize> {
        if self.at(text) {
            self.pos += 1;
            Ok(self.pos - 1)
        } else {
            Err(self.error(&[text]))
        }
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn identifier(&mut self) -> Result<usize> {
        if self.at_kind(TokenKind::Identifier) {
            self.pos += 1;
            Ok(self.pos - 1)
        } else {
            Err(self.error(&["identifier"]))
        }
    }

    fn is_type_keyword(tok: Option<&Token>) -> bool {
        tok.is_some_and(|t| t.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&t.text.as_str()))
    }

    /// Consumes a type specifier sequence (without pointer stars).
    fn type_specifiers(&mut self) -> Result<()> {
        let mut seen_base = false;
        while let Some(tok) = self.peek() {
            if Self::is_type_keyword(Some(tok)) {
                self.pos += 1;
                if matches!(tok.text.as_str(), "struct" | "union" | "enum") {
                    self.identifier()?;
                    seen_base = true;
                } else if !matches!(
                    tok.text.as_str(),
                    "const" | "static" | "volatile" | "register" | "extern" | "auto" | "inline" | "restrict"
                ) {
                    seen_base = true;
                }
            } else if tok.kind == TokenKind::Identifier && !seen_base {
                // typedef name
                self.pos += 1;
                seen_base = true;
            } else {
                break;
            }
        }
        if seen_base {
            Ok(())
        } else {
            Err(self.error(&["type"]))
        }
    }

    fn stars(&mut self) {
        while self.at("*") || (self.at_kind(TokenKind::Keyword) && self.at("const")) {
            self.pos += 1;
        }
    }

    fn function(&mut self) -> Result<PNode> {
        let start = self.pos;
        self.type_specifiers()?;
        self.stars();
        let ret = start..self.pos;
        let name = self.identifier()?;
        let params = self.param_list()?;
        let body = self.block()?;
        let end = self.pos;
        Ok(PNode::new(NodeType::Function, start, end, vec![params, body]).with(Detail::Function { ret, name }))
    }

    fn param_list(&mut self) -> Result<PNode> {
        let start = self.expect("(")?;
        let mut params = Vec::new();
        if self.at("void") && self.peek_at(1).is_some_and(|t| t.text == ")") {
            self.pos += 1;
        } else if !self.at(")") {
            loop {
                let p_start = self.pos;
                if self.eat("...") {
                    params.push(PNode::new(NodeType::DeclStmt, p_start, self.pos, Vec::new()));
                } else {
                    self.type_specifiers()?;
                    self.stars();
                    let ty = p_start..self.pos;
                    let mut kids = Vec::new();
                    if self.at_kind(TokenKind::Identifier) {
                        let id = self.identifier()?;
                        kids.push(PNode::new(NodeType::Identifier, id, id + 1, Vec::new()));
                    }
                    while self.eat("[") {
                        while !self.at("]") && self.peek().is_some() {
                            self.pos += 1;
                        }
                        self.expect("]")?;
                    }
                    params.push(PNode::new(NodeType::DeclStmt, p_start, self.pos, kids).with(Detail::Decl { ty }));
                }
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(PNode::new(NodeType::ParamList, start, self.pos, params))
    }

    fn block(&mut self) -> Result<PNode> {
        let start = self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error(&["}"]));
            }
            stmts.push(self.statement()?);
        }
        self.pos += 1;
        Ok(PNode::new(NodeType::Block, start, self.pos, stmts))
    }

    fn looks_like_declaration(&self) -> bool {
        let Some(first) = self.peek() else { return false };
        if Self::is_type_keyword(Some(first)) {
            return true;
        }
        if first.kind != TokenKind::Identifier {
            return false;
        }
        let mut i = 1;
        while self.peek_at(i).is_some_and(|t| t.text == "*") {
            i += 1;
        }
        let Some(name) = self.peek_at(i) else { return false };
        if name.kind != TokenKind::Identifier {
            return false;
        }
        if i == 1 {
            return true;
        }
        self.peek_at(i + 1).is_some_and(|t| matches!(t.text.as_str(), "=" | ";" | "," | "["))
    }

    fn statement(&mut self) -> Result<PNode> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return Err(self.error(&["statement"]));
        };
        if tok.kind == TokenKind::Keyword {
            match tok.text.as_str() {
                "if" => return self.if_statement(),
                "while" => return self.while_statement(),
                "for" => return self.for_statement(),
                "return" => {
                    self.pos += 1;
                    let mut kids = Vec::new();
                    if !self.at(";") {
                        kids.push(self.expression()?);
                    }
                    let end = self.pos;
                    self.expect(";")?;
                    return Ok(PNode::new(NodeType::Return, start, end, kids));
                }
                "break" | "continue" => {
                    let ty = if tok.text == "break" { NodeType::Break } else { NodeType::Continue };
                    self.pos += 1;
                    let end = self.pos;
                    self.expect(";")?;
                    return Ok(PNode::new(ty, start, end, Vec::new()));
                }
                "goto" => {
                    self.pos += 1;
                    let label = self.identifier()?;
                    let end = self.pos;
                    self.expect(";")?;
                    return Ok(PNode::new(NodeType::Goto, start, end, Vec::new())
                        .with(Detail::Name(self.tokens[label].text.clone())));
                }
                _ => {}
            }
        }
        if self.at("{") {
            return self.block();
        }
        if self.at(";") {
            self.pos += 1;
            return Ok(PNode::new(NodeType::ExprStmt, start, self.pos, Vec::new()));
        }
        if tok.kind == TokenKind::Identifier && self.peek_at(1).is_some_and(|t| t.text == ":") {
            self.pos += 2;
            let inner = self.statement()?;
            return Ok(PNode::new(NodeType::Label, start, inner.end, vec![inner]).with(Detail::Name(tok.text.clone())));
        }
        if self.looks_like_declaration() {
            let decl = self.declaration()?;
            self.expect(";")?;
            return Ok(decl);
        }
        let expr = self.expression()?;
        let end = self.pos;
        self.expect(";")?;
        Ok(PNode::new(NodeType::ExprStmt, start, end, vec![expr]))
    }

    /// Declaration without the trailing `;`.
    fn declaration(&mut self) -> Result<PNode> {
        let start = self.pos;
        self.type_specifiers()?;
        let ty = start..self.pos;
        let mut kids = Vec::new();
        loop {
            self.stars();
            let name = self.identifier()?;
            let name_node = PNode::new(NodeType::Identifier, name, name + 1, Vec::new());
            while self.eat("[") {
                if !self.at("]") {
                    self.expression()?;
                }
                self.expect("]")?;
            }
            if self.eat("=") {
                let init = self.initializer()?;
                let end = init.end;
                kids.push(PNode::new(NodeType::Assign, name, end, vec![name_node, init]).with(op_detail("=")));
            } else {
                kids.push(name_node);
            }
            if !self.eat(",") {
                break;
            }
        }
        Ok(PNode::new(NodeType::DeclStmt, start, self.pos, kids).with(Detail::Decl { ty }))
    }

    fn initializer(&mut self) -> Result<PNode> {
        if !self.at("{") {
            return self.assignment();
        }
        let start = self.pos;
        let mut depth = 0usize;
        loop {
            match self.peek() {
                None => return Err(self.error(&["}"])),
                Some(t) if t.text == "{" => depth += 1,
                Some(t) if t.text == "}" => {
                    depth -= 1;
                    if depth == 0 {
                        self.pos += 1;
                        break;
                    }
                }
                Some(_) => {}
            }
            self.pos += 1;
        }
        Ok(PNode::new(NodeType::Literal, start, self.pos, Vec::new()))
    }

    fn condition(&mut self) -> Result<PNode> {
        let start = self.pos;
        let expr = self.expression()?;
        Ok(PNode::new(NodeType::Condition, start, self.pos, vec![expr]))
    }

    fn if_statement(&mut self) -> Result<PNode> {
        let start = self.pos;
        self.pos += 1;
        self.expect("(")?;
        let cond = self.condition()?;
        self.expect(")")?;
        let then = self.statement()?;
        let mut kids = vec![cond, then];
        if self.eat("else") {
            kids.push(self.statement()?);
        }
        let end = kids.last().map_or(self.pos, |k| k.end);
        Ok(PNode::new(NodeType::If, start, end, kids))
    }

    fn while_statement(&mut self) -> Result<PNode> {
        let start = self.pos;
        self.pos += 1;
        self.expect("(")?;
        let cond = self.condition()?;
        self.expect(")")?;
        let body = self.statement()?;
        let end = body.end;
        Ok(PNode::new(NodeType::While, start, end, vec![cond, body]))
    }

    fn for_statement(&mut self) -> Result<PNode> {
        let start = self.pos;
        self.pos += 1;
        self.expect("(")?;
        let mut kids = Vec::new();
        let init = !self.at(";");
        if init {
            let s = self.pos;
            if self.looks_like_declaration() {
                kids.push(self.declaration()?);
            } else {
                let e = self.expression()?;
                kids.push(PNode::new(NodeType::ExprStmt, s, self.pos, vec![e]));
            }
        }
        self.expect(";")?;
        let cond = !self.at(";");
        if cond {
            kids.push(self.condition()?);
        }
        self.expect(";")?;
        let update = !self.at(")");
        if update {
            let s = self.pos;
            let e = self.expression()?;
            kids.push(PNode::new(NodeType::ExprStmt, s, self.pos, vec![e]));
        }
        self.expect(")")?;
        let body = self.statement()?;
        let end = body.end;
        kids.push(body);
        Ok(PNode::new(NodeType::For, start, end, kids).with(Detail::For { init, cond, update }))
    }

    fn expression(&mut self) -> Result<PNode> {
        self.assignment()
    }

    fn assignment(&mut self) -> Result<PNode> {
        let lhs = self.ternary()?;
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Operator && ASSIGN_OPS.contains(&tok.text.as_str()) {
                self.pos += 1;
                let rhs = self.assignment()?;
                let (start, end) = (lhs.start, rhs.end);
                return Ok(PNode::new(NodeType::Assign, start, end, vec![lhs, rhs]).with(op_detail(&tok.text)));
            }
        }
        Ok(lhs)
    }

    fn ternary(&mut self) -> Result<PNode> {
        let cond = self.binary(0)?;
        if !self.eat("?") {
            return Ok(cond);
        }
        let then = self.expression()?;
        self.expect(":")?;
        let otherwise = self.ternary()?;
        let (start, end) = (cond.start, otherwise.end);
        Ok(PNode::new(NodeType::BinaryOp, start, end, vec![cond, then, otherwise]).with(op_detail("?:")))
    }

    fn binary(&mut self, level: usize) -> Result<PNode> {
        if level == BINARY_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(tok) = self.peek() {
            if tok.kind != TokenKind::Operator || !BINARY_LEVELS[level].contains(&tok.text.as_str()) {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            let (start, end) = (lhs.start, rhs.end);
            lhs = PNode::new(NodeType::BinaryOp, start, end, vec![lhs, rhs]).with(op_detail(&tok.text));
        }
        Ok(lhs)
    }

    fn is_cast(&self) -> bool {
        self.at("(") && Self::is_type_keyword(self.peek_at(1))
    }

    fn unary(&mut self) -> Result<PNode> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return Err(self.error(&["expression"]));
        };
        if tok.kind == TokenKind::Operator
            && matches!(tok.text.as_str(), "!" | "-" | "+" | "~" | "*" | "&" | "++" | "--")
        {
            self.pos += 1;
            let operand = self.unary()?;
            return Ok(PNode::new(NodeType::UnaryOp, start, self.pos, vec![operand]).with(op_detail(&tok.text)));
        }
        if tok.kind == TokenKind::Keyword && tok.text == "sizeof" {
            self.pos += 1;
            if self.is_cast() {
                self.pos += 1;
                self.type_specifiers()?;
                self.stars();
                self.expect(")")?;
                return Ok(PNode::new(NodeType::UnaryOp, start, self.pos, Vec::new()).with(op_detail("sizeof")));
            }
            let operand = self.unary()?;
            return Ok(PNode::new(NodeType::UnaryOp, start, self.pos, vec![operand]).with(op_detail("sizeof")));
        }
        if self.is_cast() {
            self.pos += 1;
            let ty_start = self.pos;
            self.type_specifiers()?;
            self.stars();
            let ty_end = self.pos;
            self.expect(")")?;
            let operand = self.unary()?;
            let ty = self.tokens[ty_start..ty_end].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
            return Ok(PNode::new(NodeType::UnaryOp, start, self.pos, vec![operand])
                .with(Detail::Op { op: "cast".into(), field: Some(ty) }));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<PNode> {
        let mut expr = self.primary()?;
        loop {
            let start = expr.start;
            if self.eat("(") {
                let mut kids = vec![expr];
                if !self.at(")") {
                    loop {
                        kids.push(self.assignment()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                expr = PNode::new(NodeType::Call, start, self.pos, kids).with(op_detail("call"));
            } else if self.eat("[") {
                let index = self.expression()?;
                self.expect("]")?;
                expr = PNode::new(NodeType::BinaryOp, start, self.pos, vec![expr, index]).with(op_detail("[]"));
            } else if self.at(".") || self.at("->") {
                let op = self.tokens[self.pos].text.clone();
                self.pos += 1;
                let field = self.identifier()?;
                expr = PNode::new(NodeType::BinaryOp, start, self.pos, vec![expr])
                    .with(Detail::Op { op, field: Some(self.tokens[field].text.clone()) });
            } else if self.at("++") || self.at("--") {
                let op = format!("post{}", self.tokens[self.pos].text);
                self.pos += 1;
                expr = PNode::new(NodeType::UnaryOp, start, self.pos, vec![expr]).with(op_detail(&op));
            } else {
                return Ok(expr);
            }
        }
    }

    fn primary(&mut self) -> Result<PNode> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return Err(self.error(&["expression"]));
        };
        match tok.kind {
            TokenKind::Identifier => {
                self.pos += 1;
                Ok(PNode::new(NodeType::Identifier, start, self.pos, Vec::new()))
            }
            TokenKind::Number => {
                self.pos += 1;
                Ok(PNode::new(NodeType::Literal, start, self.pos, Vec::new()))
            }
            TokenKind::String => {
                while self.at_kind(TokenKind::String) {
                    self.pos += 1;
                }
                Ok(PNode::new(NodeType::Literal, start, self.pos, Vec::new()))
            }
            _ if tok.text == "(" => {
                self.pos += 1;
                let inner = self.expression()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(self.error(&["identifier", "literal", "("])),
        }
    }
}
