//! Lexing, parsing, and printing of module source text.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;

pub use ast::{strip_spans, SourceUnit};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_source, parse_tokens};
pub use pretty::print_unit;
