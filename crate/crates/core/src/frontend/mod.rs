//! C-subset front end: lexer, recursive-descent parser and AST.

mod ast;
mod lexer;
mod parser;
mod pretty;
mod subtoken;

pub use ast::{Ast, AstNode, Detail, NodeType};
pub use lexer::{is_keyword, tokenize, Token, TokenKind, KEYWORDS};
pub use parser::parse;
pub use pretty::pretty_print;
pub use subtoken::subtoken_split;

/// Tokenizes and parses one function.
pub fn parse_function(source: &str) -> crate::Result<Ast> {
    parse(tokenize(source)?)
}
