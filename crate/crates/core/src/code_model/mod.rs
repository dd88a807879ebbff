//! Java-like source model: tokens, methods, statements and token sets.

mod lexer;
mod parser;

use std::collections::BTreeSet;

use thiserror::Error;

pub use lexer::{is_keyword, tokenize, tokenize_from, tokenize_lenient, Token, TokenKind, KEYWORDS};
pub use parser::{
    extract_members, extract_methods, parse_method_snippet, split_body, split_statements,
    LineRange, Method, SourceFile, Statement,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("unbalanced braces at line {line} (byte {offset})")]
    UnbalancedBraces { line: usize, offset: usize },
    #[error("no class declaration found")]
    NoClassFound,
    #[error("no method declaration found")]
    NoMethodFound,
    #[error("unterminated string literal starting on line {line}")]
    UnterminatedString { line: usize },
    #[error("unterminated block comment starting on line {line}")]
    UnterminatedComment { line: usize },
}

/// Deduplicated identifier and keyword lexemes of `text`.
///
/// Comments, literals, operators and punctuation are excluded.
pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize_lenient(text)
        .into_iter()
        .filter(|t| matches!(t.kind, TokenKind::Identifier | TokenKind::Keyword))
        .map(|t| t.text)
        .collect()
}
