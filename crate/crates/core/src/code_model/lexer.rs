//! A small hand-written lexer for Java-like source.
//!
//! Lexing is lossless over non-whitespace: every non-whitespace byte of the
//! input belongs to exactly one token, and each token records the byte span it
//! came from.

use serde::{Deserialize, Serialize};

use super::CodeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    Operator,
    Punctuation,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 1-based line of the first byte of the lexeme.
    pub line: usize,
    /// Byte offset of the lexeme in the lexed text.
    pub start: usize,
}

impl Token {
    pub fn end(&self) -> usize {
        self.start + self.text.len()
    }

    /// Line of the last byte of the lexeme (block comments and text blocks
    /// may span several lines).
    pub fn end_line(&self) -> usize {
        self.line + self.text.matches('\n').count()
    }

    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.is(TokenKind::Punctuation, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }
}

pub const KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
];

const LITERAL_WORDS: &[&str] = &["true", "false", "null"];

// Longest first so that greedy matching picks `>>>=` over `>>`.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "->", "::", "<<", ">>", "+", "-", "*", "/", "%",
    "=", "<", ">", "!", "~", "?", ":", "&", "|", "^",
];

const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', '.', '@'];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

/// Tokenize `text`, numbering lines from 1.
pub fn tokenize(text: &str) -> Result<Vec<Token>, CodeError> {
    tokenize_from(text, 1)
}

/// Tokenize `text` whose first byte sits on line `first_line`.
pub fn tokenize_from(text: &str, first_line: usize) -> Result<Vec<Token>, CodeError> {
    Lexer {
        src: text,
        pos: 0,
        line: first_line,
        lenient: false,
    }
    .run()
}

/// Like [`tokenize`], but never fails: an unterminated string runs to the end
/// of its line and an unterminated comment to the end of the text.
pub fn tokenize_lenient(text: &str) -> Vec<Token> {
    Lexer {
        src: text,
        pos: 0,
        line: 1,
        lenient: true,
    }
    .run()
    .expect("lenient lexing is infallible")
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    lenient: bool,
}

impl<'a> Lexer<'a> {
    fn run(mut self) -> Result<Vec<Token>, CodeError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            if c == '\n' {
                self.line += 1;
                self.pos += 1;
                continue;
            }
            if c.is_whitespace() {
                self.pos += c.len_utf8();
                continue;
            }
            let start = self.pos;
            let line = self.line;
            let kind = self.lex_one(c)?;
            let text = &self.src[start..self.pos];
            self.line += text.matches('\n').count();
            let kind = match kind {
                TokenKind::Identifier if is_keyword(text) => TokenKind::Keyword,
                TokenKind::Identifier if LITERAL_WORDS.contains(&text) => TokenKind::Literal,
                k => k,
            };
            out.push(Token {
                text: text.to_string(),
                kind,
                line,
                start,
            });
        }
        Ok(out)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn lex_one(&mut self, c: char) -> Result<TokenKind, CodeError> {
        let rest = self.rest();
        if rest.starts_with("//") {
            let len = rest.find('\n').unwrap_or(rest.len());
            self.pos += len;
            return Ok(TokenKind::Comment);
        }
        if rest.starts_with("/*") {
            return match rest[2..].find("*/") {
                Some(i) => {
                    self.pos += i + 4;
                    Ok(TokenKind::Comment)
                }
                None if self.lenient => {
                    self.pos = self.src.len();
                    Ok(TokenKind::Comment)
                }
                None => Err(CodeError::UnterminatedComment { line: self.line }),
            };
        }
        if rest.starts_with("\"\"\"") {
            return match rest[3..].find("\"\"\"") {
                Some(i) => {
                    self.pos += i + 6;
                    Ok(TokenKind::Literal)
                }
                None if self.lenient => {
                    self.pos = self.src.len();
                    Ok(TokenKind::Literal)
                }
                None => Err(CodeError::UnterminatedString { line: self.line }),
            };
        }
        if c == '"' || c == '\'' {
            self.lex_quoted(c)?;
            return Ok(TokenKind::Literal);
        }
        if c.is_ascii_digit() || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) {
            self.lex_number();
            return Ok(TokenKind::Literal);
        }
        if c.is_alphabetic() || c == '_' || c == '$' {
            let len = rest
                .find(|ch: char| !(ch.is_alphanumeric() || ch == '_' || ch == '$'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok(TokenKind::Identifier);
        }
        if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
            self.pos += op.len();
            // `...` (varargs) is punctuation-like but lexed with the operators
            // so the greedy match sees it before `.`.
            return Ok(if *op == "..." {
                TokenKind::Punctuation
            } else {
                TokenKind::Operator
            });
        }
        self.pos += c.len_utf8();
        Ok(if PUNCTUATION.contains(&c) {
            TokenKind::Punctuation
        } else {
            // Unknown characters are kept so that lexing stays lossless.
            TokenKind::Operator
        })
    }

    fn lex_quoted(&mut self, quote: char) -> Result<(), CodeError> {
        let line = self.line;
        let mut chars = self.rest().char_indices().skip(1);
        while let Some((i, ch)) = chars.next() {
            match ch {
                '\\' => {
                    chars.next();
                }
                '\n' => break,
                ch if ch == quote => {
                    self.pos += i + 1;
                    return Ok(());
                }
                _ => {}
            }
        }
        if self.lenient {
            let rest = self.rest();
            self.pos += rest.find('\n').unwrap_or(rest.len());
            return Ok(());
        }
        Err(CodeError::UnterminatedString { line })
    }

    fn lex_number(&mut self) {
        let rest = self.rest();
        let bytes = rest.as_bytes();
        let mut i = 0;
        let mut prev = 0u8;
        while i < bytes.len() {
            let b = bytes[i];
            let ok = b.is_ascii_alphanumeric()
                || b == b'_'
                || b == b'.'
                || ((b == b'+' || b == b'-') && matches!(prev, b'e' | b'E' | b'p' | b'P'));
            // `1..2` does not occur in Java, but `x.foo` after a number
            // literal would; stop at a dot followed by a letter.
            if b == b'.' && bytes.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic()) {
                break;
            }
            if !ok {
                break;
            }
            prev = b;
            i += 1;
        }
        self.pos += i.max(1);
    }
}
