//! Lexeme-level tokenization for the decoder.
//!
//! The decoder reads and writes whole lexemes (identifiers, literals,
//! operators, comments), so prompt token positions are indices into the
//! lenient lexer's output and generated text is rebuilt from lexemes.

use crate::code_model::{tokenize_lenient, Token};

/// Prompt or test text as decoder tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_lenient(text)
}

pub fn lexemes(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

fn is_comment(lexeme: &str) -> bool {
    lexeme.starts_with("//") || lexeme.starts_with("/*")
}

/// Rebuild readable source from lexemes: one statement per line, four-space
/// indentation per brace level, conventional spacing around punctuation.
pub fn render(lexemes: &[String]) -> String {
    let mut out = String::new();
    let mut depth = 0usize;
    let mut line_start = true;
    let mut paren = 0usize;
    let mut prev: Option<&str> = None;
    let generic = generic_angles(lexemes);
    for (i, lex) in lexemes.iter().enumerate() {
        let s = lex.as_str();
        if s == "}" {
            depth = depth.saturating_sub(1);
            if !line_start {
                out.push('\n');
                line_start = true;
            }
        }
        if line_start {
            out.push_str(&"    ".repeat(depth));
        } else if generic[i] || (i > 0 && generic[i - 1] && s != "[" && !s.starts_with('>')) {
            // Type arguments hug their type: `List<Integer>`, `Map<K, V>`.
            if generic[i - 1] && !lexemes[i - 1].starts_with('<') && needs_space(prev, s) {
                out.push(' ');
            }
        } else if needs_space(prev, s) {
            out.push(' ');
        }
        out.push_str(s);
        line_start = false;
        match s {
            "(" => paren += 1,
            ")" => paren = paren.saturating_sub(1),
            _ => {}
        }
        let breaks = match s {
            "{" => {
                depth += 1;
                true
            }
            "}" => true,
            ";" => paren == 0,
            // An annotation name ends its line.
            _ => is_comment(s) || prev == Some("@"),
        };
        if breaks {
            out.push('\n');
            line_start = true;
        }
        prev = Some(s);
    }
    if !line_start {
        out.push('\n');
    }
    out
}

/// Marks `<`, `>` and `>>` lexemes that delimit type arguments: an opening
/// `<` after a capitalized name whose contents are only names, `.`, `,`, `?`,
/// `[]`, `extends`/`super` and nested arguments.
fn generic_angles(lexemes: &[String]) -> Vec<bool> {
    let mut marks = vec![false; lexemes.len()];
    let capitalized = |s: &str| s.chars().next().is_some_and(|c| c.is_ascii_uppercase());
    let mut i = 1;
    while i < lexemes.len() {
        if lexemes[i] != "<" || !capitalized(&lexemes[i - 1]) || marks[i] {
            i += 1;
            continue;
        }
        let mut depth = 0usize;
        let mut seen = Vec::new();
        let mut closed = false;
        for (j, lex) in lexemes.iter().enumerate().skip(i) {
            let s = lex.as_str();
            match s {
                "<" => depth += 1,
                ">" | ">>" => {
                    let n = s.len();
                    if n > depth {
                        break;
                    }
                    depth -= n;
                }
                "," | "." | "?" | "[" | "]" | "extends" | "super" => {}
                _ if s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$')
                    && !s.chars().next().is_some_and(|c| c.is_ascii_digit()) => {}
                _ => break,
            }
            if matches!(s, "<" | ">" | ">>") {
                seen.push(j);
            }
            if depth == 0 {
                closed = true;
                break;
            }
        }
        if closed {
            for j in seen {
                marks[j] = true;
            }
        }
        i += 1;
    }
    marks
}

fn needs_space(prev: Option<&str>, cur: &str) -> bool {
    let Some(prev) = prev else { return false };
    if matches!(cur, ";" | "," | ")" | "]" | "." | "++" | "--") {
        return false;
    }
    if matches!(prev, "(" | "[" | "." | "@" | "!") {
        return false;
    }
    if cur == "(" || cur == "[" {
        // Calls and indexing hug their callee; keywords keep a space.
        return crate::code_model::is_keyword(prev) && !matches!(prev, "this" | "super");
    }
    true
}

/// Whether `render(x)` lexes back to exactly `x`.
pub fn relexes_to(lexemes_in: &[String]) -> bool {
    lexemes(&render(lexemes_in)) == lexemes_in
}
