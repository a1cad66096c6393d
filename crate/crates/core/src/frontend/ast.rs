use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lexer::Token;
use crate::error::Error;

/// Node labels of the code property graph. `Entry` and `Exit` only appear
/// on the synthetic control-flow endpoints added during graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Function,
    ParamList,
    Block,
    DeclStmt,
    ExprStmt,
    If,
    While,
    For,
    Return,
    Break,
    Continue,
    Goto,
    Label,
    Call,
    BinaryOp,
    UnaryOp,
    Assign,
    Identifier,
    Literal,
    Condition,
    Entry,
    Exit,
}

impl NodeType {
    pub const ALL: [NodeType; 22] = [
        NodeType::Function,
        NodeType::ParamList,
        NodeType::Block,
        NodeType::DeclStmt,
        NodeType::ExprStmt,
        NodeType::If,
        NodeType::While,
        NodeType::For,
        NodeType::Return,
        NodeType::Break,
        NodeType::Continue,
        NodeType::Goto,
        NodeType::Label,
        NodeType::Call,
        NodeType::BinaryOp,
        NodeType::UnaryOp,
        NodeType::Assign,
        NodeType::Identifier,
        NodeType::Literal,
        NodeType::Condition,
        NodeType::Entry,
        NodeType::Exit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Nodes that become control-flow vertices.
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeType::DeclStmt
                | NodeType::ExprStmt
                | NodeType::Return
                | NodeType::Break
                | NodeType::Continue
                | NodeType::Goto
                | NodeType::Label
                | NodeType::Condition
        )
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for NodeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeType::ALL
            .iter()
            .copied()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::Contract(format!("unknown node type {s}")))
    }
}

/// Extra structure a node's children alone do not carry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Detail {
    #[default]
    None,
    /// Operator text for `BinaryOp`, `UnaryOp` and `Assign`. Postfix
    /// increments are `post++` / `post--`; member access is `.` or `->`
    /// followed by the field in `field`; indexing is `[]`; calls are `call`.
    Op { op: String, field: Option<String> },
    /// Function header: return type tokens and name token.
    Function { ret: Range<usize>, name: usize },
    /// Declaration type prefix tokens.
    Decl { ty: Range<usize> },
    /// Which optional `for` header slots are present.
    For { init: bool, cond: bool, update: bool },
    /// Target label of a `goto`, or the name of a label.
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    /// Preorder position; ids are dense `0..n`.
    pub id: usize,
    pub node_type: NodeType,
    /// Token index range covered by this node.
    pub tokens: Range<usize>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    pub detail: Detail,
}

impl AstNode {
    pub fn op(&self) -> Option<&str> {
        match &self.detail {
            Detail::Op { op, .. } => Some(op),
            _ => None,
        }
    }
}

/// A parsed function: tokens plus a preorder node arena rooted at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub tokens: Vec<Token>,
    pub nodes: Vec<AstNode>,
}

impl Ast {
    pub fn root(&self) -> &AstNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn subseq(&self, id: usize) -> &[Token] {
        &self.tokens[self.nodes[id].tokens.clone()]
    }

    /// Node tokens joined by single spaces.
    pub fn text(&self, id: usize) -> String {
        self.subseq(id).iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &AstNode> {
        self.nodes[id].children.iter().map(|&c| &self.nodes[c])
    }

    /// All nodes in the subtree rooted at `id`, in preorder.
    pub fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    pub fn function_name(&self) -> Option<&str> {
        match &self.root().detail {
            Detail::Function { name, .. } => Some(&self.tokens[*name].text),
            _ => None,
        }
    }

    /// Shape-only comparison: node types, operators and leaf texts, ignoring
    /// token positions.
    pub fn isomorphic(&self, other: &Ast) -> bool {
        fn label(ast: &Ast, id: usize) -> (NodeType, Option<String>, Option<String>) {
            let n = ast.node(id);
            let op = n.op().map(str::to_string);
            let leaf = matches!(n.node_type, NodeType::Identifier | NodeType::Literal).then(|| ast.text(id));
            (n.node_type, op, leaf)
        }
        fn walk(a: &Ast, x: usize, b: &Ast, y: usize) -> bool {
            label(a, x) == label(b, y)
                && a.node(x).children.len() == b.node(y).children.len()
                && a.node(x).children.iter().zip(&b.node(y).children).all(|(&p, &q)| walk(a, p, b, q))
        }
        !self.is_empty() && !other.is_empty() && walk(self, 0, other, 0)
    }
}
