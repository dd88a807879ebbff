//! Brace/semicolon level parsing: classes, method declarations and
//! line-anchored statements.

use std::collections::HashMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, tokenize_from, Token, TokenKind};
use super::CodeError;

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineRange {
    pub start: usize,
    pub end: usize,
}

impl LineRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn contains_range(&self, other: &LineRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn lines(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone)]
pub struct SourceFile {
    pub path: PathBuf,
    pub text: String,
    /// Byte offsets of line starts; `line_index[0] == 0`.
    pub line_index: Vec<usize>,
}

impl SourceFile {
    pub fn new(path: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        let text = text.into();
        let line_index = std::iter::once(0)
            .chain(text.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        Self {
            path: path.into(),
            text,
            line_index,
        }
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(path, std::fs::read_to_string(path)?))
    }

    /// 1-based line containing byte `offset`.
    pub fn line_of(&self, offset: usize) -> usize {
        self.line_index.partition_point(|&start| start <= offset)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub index: usize,
    pub text: String,
    pub line_range: LineRange,
    /// Half-open span into the method body's token stream (comments included).
    pub token_span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub class_name: String,
    /// Equal to `class_name` for constructors.
    pub name: String,
    pub signature: String,
    /// Full declaration text, annotations through the closing brace.
    pub text: String,
    /// Text strictly between the body braces.
    pub body: String,
    pub line_range: LineRange,
    /// Line on which `body` begins (the line of the opening brace).
    pub body_line: usize,
    pub statements: Vec<Statement>,
}

impl Method {
    pub fn is_constructor(&self) -> bool {
        self.name == self.class_name
    }

    /// Tokens of the body, numbered with file lines. This is the stream that
    /// `Statement::token_span` indexes into.
    pub fn body_tokens(&self) -> Result<Vec<Token>, CodeError> {
        tokenize_from(&self.body, self.body_line)
    }

    /// Tokens of the whole declaration with comments removed.
    pub fn code_tokens(&self) -> Result<Vec<Token>, CodeError> {
        Ok(tokenize_from(&self.text, self.line_range.start)?
            .into_iter()
            .filter(|t| t.kind != TokenKind::Comment)
            .collect())
    }

    /// Indices of the statements that intersect any of `lines`.
    pub fn statements_on_lines(&self, lines: &[usize]) -> Vec<usize> {
        self.statements
            .iter()
            .filter(|s| lines.iter().any(|&l| s.line_range.contains(l)))
            .map(|s| s.index)
            .collect()
    }
}

/// Extract every method declaration of every (named) class in `file`, in
/// source order. Anonymous classes inside method bodies are not recursed into.
pub fn extract_methods(file: &SourceFile) -> Result<Vec<Method>, CodeError> {
    let tokens = code_only(tokenize(&file.text)?);
    let matching = match_braces(&tokens)?;
    let mut out = Vec::new();
    let mut found_class = false;
    let mut i = 0;
    while i < tokens.len() {
        if let Some(name) = class_name_at(&tokens, i) {
            found_class = true;
            let Some(open) = (i..tokens.len()).find(|&j| tokens[j].is_punct("{")) else {
                break;
            };
            let close = matching[&open];
            parse_class_body(&file.text, &tokens, &matching, open, close, &name, &mut out)?;
            i = close + 1;
        } else {
            i += 1;
        }
    }
    if !found_class {
        return Err(CodeError::NoClassFound);
    }
    Ok(out)
}

/// Parse `text` as a sequence of class members (no surrounding class), e.g. a
/// dataset snippet holding a single method or a generated test method.
pub fn extract_members(text: &str, class_name: &str) -> Result<Vec<Method>, CodeError> {
    let tokens = code_only(tokenize(text)?);
    let matching = match_braces(&tokens)?;
    let mut out = Vec::new();
    if tokens.is_empty() {
        return Ok(out);
    }
    parse_members(text, &tokens, &matching, 0, tokens.len(), class_name, &mut out)?;
    Ok(out)
}

/// Parse a snippet expected to contain exactly one method.
pub fn parse_method_snippet(text: &str, class_name: &str) -> Result<Method, CodeError> {
    extract_members(text, class_name)?
        .into_iter()
        .next()
        .ok_or(CodeError::NoMethodFound)
}

fn code_only(tokens: Vec<Token>) -> Vec<Token> {
    tokens
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .collect()
}

fn match_braces(tokens: &[Token]) -> Result<HashMap<usize, usize>, CodeError> {
    let mut stack = Vec::new();
    let mut matching = HashMap::new();
    let unbalanced = |t: &Token| CodeError::UnbalancedBraces {
        line: t.line,
        offset: t.start,
    };
    for (i, t) in tokens.iter().enumerate() {
        if t.is_punct("{") {
            stack.push(i);
        } else if t.is_punct("}") {
            let open = stack.pop().ok_or_else(|| unbalanced(t))?;
            matching.insert(open, i);
        }
    }
    if let Some(&open) = stack.last() {
        return Err(unbalanced(&tokens[open]));
    }
    Ok(matching)
}

fn class_name_at(tokens: &[Token], i: usize) -> Option<String> {
    let t = &tokens[i];
    let is_decl = t.is_keyword("class") || t.is_keyword("interface") || t.is_keyword("enum");
    if !is_decl || (i > 0 && tokens[i - 1].is_punct(".")) {
        return None;
    }
    match tokens.get(i + 1) {
        Some(n) if n.kind == TokenKind::Identifier => Some(n.text.clone()),
        _ => None,
    }
}

fn parse_class_body(
    text: &str,
    tokens: &[Token],
    matching: &HashMap<usize, usize>,
    open: usize,
    close: usize,
    class_name: &str,
    out: &mut Vec<Method>,
) -> Result<(), CodeError> {
    parse_members(text, tokens, matching, open + 1, close, class_name, out)
}

/// Walk member declarations in `tokens[from..to]`.
fn parse_members(
    text: &str,
    tokens: &[Token],
    matching: &HashMap<usize, usize>,
    from: usize,
    to: usize,
    class_name: &str,
    out: &mut Vec<Method>,
) -> Result<(), CodeError> {
    let mut header_start = from;
    let mut i = from;
    while i < to {
        let t = &tokens[i];
        if t.is_punct(";") {
            header_start = i + 1;
            i += 1;
        } else if t.is_punct("{") {
            let close = matching[&i];
            let header = &tokens[header_start..i];
            if let Some(k) = (0..header.len()).find(|&k| class_name_at(header, k).is_some()) {
                let name = header[k + 1].text.clone();
                parse_class_body(text, tokens, matching, i, close, &name, out)?;
                header_start = close + 1;
            } else if let Some(decl) = method_header(header, class_name) {
                out.push(build_method(
                    text,
                    tokens,
                    class_name,
                    header_start,
                    decl,
                    i,
                    close,
                )?);
                header_start = close + 1;
            } else if header.is_empty() || (header.len() == 1 && header[0].is_keyword("static")) {
                header_start = close + 1;
            }
            // Anything else (array or anonymous-class initializers of fields)
            // continues the current member until its `;`.
            i = close + 1;
        } else {
            i += 1;
        }
    }
    Ok(())
}

struct MethodHeader {
    /// Offset (within the header) of the first token after leading annotations.
    sig_start: usize,
    name: String,
}

/// Length of an annotation starting at `header[i]` (`@Name(.Name)*(args)?`).
fn annotation_len(header: &[Token], i: usize) -> usize {
    if !header[i].is_punct("@") || header.get(i + 1).is_some_and(|t| t.is_keyword("interface")) {
        return 0;
    }
    let mut j = i + 1;
    while j < header.len() && header[j].kind == TokenKind::Identifier {
        j += 1;
        if header.get(j).is_some_and(|t| t.is_punct(".")) {
            j += 1;
        } else {
            break;
        }
    }
    if header.get(j).is_some_and(|t| t.is_punct("(")) {
        let mut depth = 0usize;
        while j < header.len() {
            if header[j].is_punct("(") {
                depth += 1;
            } else if header[j].is_punct(")") {
                depth -= 1;
                if depth == 0 {
                    j += 1;
                    break;
                }
            }
            j += 1;
        }
    }
    j - i
}

fn method_header(header: &[Token], class_name: &str) -> Option<MethodHeader> {
    // Drop annotations wherever they occur among the modifiers.
    let mut kept: Vec<(usize, &Token)> = Vec::new();
    let mut i = 0;
    let mut sig_start = None;
    while i < header.len() {
        let len = annotation_len(header, i);
        if len > 0 {
            i += len;
            continue;
        }
        sig_start.get_or_insert(i);
        kept.push((i, &header[i]));
        i += 1;
    }
    let paren = kept.iter().position(|(_, t)| t.is_punct("("))?;
    if paren == 0 {
        return None;
    }
    if kept[..paren]
        .iter()
        .any(|(_, t)| t.kind == TokenKind::Operator && t.text == "=")
    {
        return None;
    }
    let name_tok = kept[paren - 1].1;
    if name_tok.kind != TokenKind::Identifier {
        return None;
    }
    let is_ctor = name_tok.text == class_name;
    let has_type = paren >= 2 && {
        let before = kept[paren - 2].1;
        matches!(before.kind, TokenKind::Identifier | TokenKind::Keyword)
            || before.text == ">"
            || before.text == ">>"
            || before.text == "]"
    };
    if !is_ctor && !has_type {
        return None;
    }
    // `new Foo() {` inside a field initializer is excluded by the `=` test;
    // a bare `new` here would still be an expression.
    if kept[..paren].iter().any(|(_, t)| t.is_keyword("new")) {
        return None;
    }
    Some(MethodHeader {
        sig_start: sig_start.unwrap_or(0),
        name: name_tok.text.clone(),
    })
}

fn build_method(
    text: &str,
    tokens: &[Token],
    class_name: &str,
    header_start: usize,
    decl: MethodHeader,
    open: usize,
    close: usize,
) -> Result<Method, CodeError> {
    let first = &tokens[header_start];
    let sig_first = &tokens[header_start + decl.sig_start];
    let open_tok = &tokens[open];
    let close_tok = &tokens[close];
    let signature = text[sig_first.start..open_tok.start]
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let body = text[open_tok.end()..close_tok.start].to_string();
    let mut method = Method {
        class_name: class_name.to_string(),
        name: decl.name,
        signature,
        text: text[first.start..close_tok.end()].to_string(),
        body,
        line_range: LineRange::new(first.line, close_tok.line),
        body_line: open_tok.line,
        statements: Vec::new(),
    };
    method.statements = split_statements(&method)?;
    Ok(method)
}

/// Split a method body into line-anchored statements.
///
/// Each top-level `;`-terminated unit and each block header (`if`, `for`,
/// `while`, `try`, `switch`, ... up to its opening brace) starts a statement.
/// Closing braces, comments and everything else attach to a neighbouring
/// statement, and statements sharing a line are merged, so the result
/// partitions the body's token stream and covers every non-blank line.
pub fn split_statements(method: &Method) -> Result<Vec<Statement>, CodeError> {
    split_body(&method.body, method.body_line)
}

/// [`split_statements`] over a raw body whose first byte is on `first_line`.
pub fn split_body(body: &str, first_line: usize) -> Result<Vec<Statement>, CodeError> {
    let tokens = tokenize_from(body, first_line)?;
    let spans = statement_spans(&tokens);
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, span)| {
            let first = &tokens[span.start];
            let last = &tokens[span.end - 1];
            Statement {
                index,
                text: body[first.start..last.end()].to_string(),
                line_range: LineRange::new(first.line, last.end_line()),
                token_span: span,
            }
        })
        .collect())
}

const BLOCK_HEADERS: &[&str] = &[
    "if",
    "else",
    "for",
    "while",
    "do",
    "try",
    "catch",
    "finally",
    "switch",
    "synchronized",
];

fn statement_spans(tokens: &[Token]) -> Vec<Range<usize>> {
    let mut spans: Vec<Range<usize>> = Vec::new();
    let mut cur: Option<usize> = None;
    let mut paren = 0usize;
    let mut inline = 0usize;

    let significant = |from: usize, to: usize| {
        tokens[from..to]
            .iter()
            .find(|t| t.kind != TokenKind::Comment && !t.is_punct("}"))
    };
    let only_comments = |span: &Range<usize>| {
        tokens[span.clone()]
            .iter()
            .all(|t| t.kind == TokenKind::Comment)
    };

    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        let Some(start) = cur else {
            if t.is_punct("}") && !spans.is_empty() && !opens_header(tokens, i) {
                spans.last_mut().unwrap().end = i + 1;
                i += 1;
                continue;
            }
            if t.kind == TokenKind::Comment
                && spans
                    .last()
                    .is_some_and(|prev| tokens[prev.end - 1].end_line() == t.line)
            {
                spans.last_mut().unwrap().end = i + 1;
                i += 1;
                continue;
            }
            cur = Some(i);
            paren = 0;
            inline = 0;
            continue;
        };
        let mut end_here = false;
        match (t.kind, t.text.as_str()) {
            (TokenKind::Punctuation, "(" | "[") => paren += 1,
            (TokenKind::Punctuation, ")" | "]") => paren = paren.saturating_sub(1),
            (TokenKind::Punctuation, "{") => {
                let lead = significant(start, i);
                let is_header = match lead {
                    None => true,
                    Some(l) => l.kind == TokenKind::Keyword && BLOCK_HEADERS.contains(&l.text.as_str()),
                };
                if paren == 0 && inline == 0 && is_header {
                    end_here = true;
                } else {
                    inline += 1;
                }
            }
            (TokenKind::Punctuation, "}") => {
                if inline > 0 {
                    inline -= 1;
                } else if i > start {
                    // Unterminated unit before a closing brace: close it and
                    // let the brace attach on the next iteration.
                    let span = start..i;
                    if only_comments(&span) && !spans.is_empty() {
                        spans.last_mut().unwrap().end = i;
                    } else {
                        spans.push(span);
                    }
                    cur = None;
                    continue;
                }
            }
            (TokenKind::Punctuation, ";") if paren == 0 && inline == 0 => end_here = true,
            (TokenKind::Operator, ":") if paren == 0 && inline == 0 => {
                let lead = significant(start, i);
                if lead.is_some_and(|l| l.is_keyword("case") || l.is_keyword("default")) {
                    end_here = true;
                }
            }
            _ => {}
        }
        if end_here {
            spans.push(start..i + 1);
            cur = None;
        }
        i += 1;
    }
    if let Some(start) = cur {
        let span = start..tokens.len();
        if only_comments(&span) && !spans.is_empty() {
            spans.last_mut().unwrap().end = tokens.len();
        } else {
            spans.push(span);
        }
    }

    // Line anchoring: a statement that starts on the line where the previous
    // one ends is folded into it.
    let mut merged: Vec<Range<usize>> = Vec::with_capacity(spans.len());
    for span in spans {
        match merged.last_mut() {
            Some(prev) if tokens[span.start].line <= tokens[prev.end - 1].end_line() => {
                prev.end = span.end;
            }
            _ => merged.push(span),
        }
    }
    merged
}

/// `}` that begins `} else`, `} catch`, `} finally` or `} while`.
fn opens_header(tokens: &[Token], i: usize) -> bool {
    tokens[i + 1..]
        .iter()
        .find(|t| t.kind != TokenKind::Comment)
        .is_some_and(|n| {
            n.is_keyword("else") || n.is_keyword("catch") || n.is_keyword("finally") || n.is_keyword("while")
        })
}
