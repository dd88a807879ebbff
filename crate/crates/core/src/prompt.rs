//! Prompt assembly (task description, class context, marked defective
//! method) and extraction of a test method from model output.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code_model::{tokenize_lenient, Method, TokenKind};
use crate::steer::tokenizer;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("method is empty")]
    EmptyMethod,
    #[error("defect line {line} lies outside the method (lines {start}..={end})")]
    DefectLineOutOfRange { line: usize, start: usize, end: usize },
    #[error("comment prefix must not be empty")]
    EmptyCommentPrefix,
    #[error("template is missing the {{{0}}} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("cannot read template {path}: {message}")]
    TemplateIo { path: String, message: String },
    #[error("no test method found in model output")]
    NoTestFound,
}

pub const DEFAULT_TASK: &str =
    "{comment} I will give you a {language} defective method, please generate a {language} unit test to trigger this error";
pub const DEFAULT_LAYOUT: &str = "{task}\n{class_context}\n{method}\n";

/// Layout with `{task}`, `{class_context}` and `{method}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub layout: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            layout: DEFAULT_LAYOUT.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn parse(layout: &str) -> Result<Self, PromptError> {
        const NAMES: [&str; 3] = ["task", "class_context", "method"];
        if let Some(name) = NAMES.into_iter().find(|n| !layout.contains(&format!("{{{n}}}"))) {
            return Err(PromptError::MissingPlaceholder(name));
        }
        Ok(Self {
            layout: layout.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::TemplateIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Substitute placeholders; returns the text and the byte range where
    /// the method section landed.
    fn fill(&self, task: &str, class_context: &str, method: &str) -> (String, Range<usize>) {
        let mut out = String::new();
        let mut method_range = 0..0;
        let mut rest = self.layout.as_str();
        while let Some(open) = rest.find('{') {
            let Some(close) = rest[open..].find('}').map(|c| open + c) else {
                break;
            };
            out.push_str(&rest[..open]);
            match &rest[open + 1..close] {
                "task" => out.push_str(task),
                "class_context" => out.push_str(class_context),
                "method" => {
                    let start = out.len();
                    out.push_str(method);
                    method_range = start..out.len();
                }
                _ => out.push_str(&rest[open..=close]),
            }
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        (out, method_range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub language_name: String,
    pub comment_prefix: String,
    /// Task line with `{comment}` and `{language}` placeholders.
    pub task_template: String,
    pub class_name: String,
    pub class_constructors: Vec<String>,
    pub method: Method,
    /// 1-based lines, numbered like `method.line_range`.
    pub defect_lines: BTreeSet<usize>,
    /// Comment text appended to each defective line (after the prefix).
    pub marker: String,
    /// Whether the marker's own tokens join the highlighted set.
    pub highlight_marker: bool,
    pub template: PromptTemplate,
}

impl PromptSpec {
    pub fn new(class_name: impl Into<String>, constructors: Vec<String>, method: Method) -> Self {
        Self {
            language_name: "Java".into(),
            comment_prefix: "//".into(),
            task_template: DEFAULT_TASK.into(),
            class_name: class_name.into(),
            class_constructors: constructors,
            method,
            defect_lines: BTreeSet::new(),
            marker: "<defective>".into(),
            highlight_marker: false,
            template: PromptTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    /// Indices into `steer::tokenizer::tokenize(text)` of the tokens on
    /// marked lines.
    pub token_positions_of_defect: BTreeSet<usize>,
    pub warnings: Vec<String>,
}

fn class_context(spec: &PromptSpec, warnings: &mut Vec<String>) -> String {
    let c = &spec.comment_prefix;
    if spec.class_constructors.is_empty() {
        warnings.push(format!(
            "class `{}` has no constructors; class context reduced to the class name",
            spec.class_name
        ));
        return format!("{c} Class Context\nclass {} {{\n}}", spec.class_name);
    }
    let ctors: String = spec
        .class_constructors
        .iter()
        .map(|s| format!("    {};\n", s.trim().trim_end_matches(';')))
        .collect();
    format!("{c} Class Context\nclass {} {{\n{ctors}}}", spec.class_name)
}

/// Lines of a method declaration with the indentation it had inside its
/// class removed. The first line starts at the declaration already.
fn dedented_lines(text: &str) -> Vec<&str> {
    let lines: Vec<&str> = text.trim_end_matches('\n').split('\n').collect();
    let indent = |l: &str| l.len() - l.trim_start_matches([' ', '\t']).len();
    let common = lines
        .iter()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| indent(l))
        .min()
        .unwrap_or(0);
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| if i == 0 { *l } else { &l[common.min(indent(l))..] })
        .collect()
}

pub fn build_prompt(spec: &PromptSpec) -> Result<AssembledPrompt, PromptError> {
    if spec.comment_prefix.is_empty() {
        return Err(PromptError::EmptyCommentPrefix);
    }
    if spec.method.text.trim().is_empty() {
        return Err(PromptError::EmptyMethod);
    }
    let range = spec.method.line_range;
    if let Some(&line) = spec.defect_lines.iter().find(|&&l| !range.contains(l)) {
        return Err(PromptError::DefectLineOutOfRange {
            line,
            start: range.start,
            end: range.end,
        });
    }
    let mut warnings = Vec::new();
    let c = &spec.comment_prefix;
    let task = spec
        .task_template
        .replace("{comment}", c)
        .replace("{language}", &spec.language_name);
    let context = class_context(spec, &mut warnings);

    // Method section: header comment, then the method with markers. Byte
    // ranges (relative to the section) of the highlighted part of each
    // marked line are collected on the way.
    let marker = format!("  {c} {}", spec.marker);
    let mut method = format!("{c} Defective Method\n");
    let mut marked: Vec<Range<usize>> = Vec::new();
    for (i, line) in dedented_lines(&spec.method.text).into_iter().enumerate() {
        let start = method.len();
        method.push_str(line);
        if spec.defect_lines.contains(&(range.start + i)) {
            let code_end = method.len();
            method.push_str(&marker);
            marked.push(start..if spec.highlight_marker { method.len() } else { code_end });
        }
        method.push('\n');
    }
    let method = method.trim_end_matches('\n').to_string();

    let (text, method_range) = spec.template.fill(&task, &context, &method);
    let offset = method_range.start;
    let positions = tokenizer::tokenize(&text)
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            marked
                .iter()
                .any(|r| (r.start + offset..r.end + offset).contains(&t.start))
        })
        .map(|(i, _)| i)
        .collect();
    Ok(AssembledPrompt {
        text,
        token_positions_of_defect: positions,
        warnings,
    })
}

/// Pull the first complete test method (annotation line through its closing
/// brace) out of free-form model output.
pub fn extract_candidate(output: &str) -> Result<String, PromptError> {
    let tokens = tokenize_lenient(output);
    let n = tokens.len();
    let mut i = 0;
    while i + 1 < n {
        let is_test_annotation = tokens[i].text == "@"
            && tokens[i + 1].kind == TokenKind::Identifier
            && tokens[i + 1].text == "Test";
        if !is_test_annotation {
            i += 1;
            continue;
        }
        // Find the body: first `{` after the declaration's parameter list.
        let mut j = i + 2;
        while j < n && tokens[j].text != "{" && tokens[j].text != ";" {
            j += 1;
        }
        if j >= n || tokens[j].text == ";" {
            i += 2;
            continue;
        }
        let mut depth = 0usize;
        let mut end = None;
        for (k, t) in tokens.iter().enumerate().skip(j) {
            match t.text.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(k);
                        break;
                    }
                }
                _ => {}
            }
        }
        let Some(end) = end else {
            return Err(PromptError::NoTestFound);
        };
        let start = output[..tokens[i].start].rfind('\n').map_or(0, |p| p + 1);
        let start = if output[start..tokens[i].start].trim().is_empty() {
            start
        } else {
            tokens[i].start
        };
        return Ok(output[start..tokens[end].end()].to_string());
    }
    Err(PromptError::NoTestFound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_model::parse_method_snippet;

    const METHOD: &str = "public int last(int[] xs) {\n    int n = xs.length;\n    return xs[n];\n}\n";

    fn spec() -> PromptSpec {
        let m = parse_method_snippet(METHOD, "Calc").unwrap();
        PromptSpec::new("Calc", vec!["public Calc()".into(), "public Calc(int base)".into()], m)
    }

    #[test]
    fn golden_java_prompt() {
        let mut s = spec();
        s.defect_lines.insert(3);
        let p = build_prompt(&s).unwrap();
        let expected = "// I will give you a Java defective method, please generate a Java unit test to trigger this error\n\
// Class Context\n\
class Calc {\n    public Calc();\n    public Calc(int base);\n}\n\
// Defective Method\n\
public int last(int[] xs) {\n    int n = xs.length;\n    return xs[n];  // <defective>\n}\n";
        assert_eq!(p.text, expected);
        assert!(p.warnings.is_empty());
        let toks = tokenizer::tokenize(&p.text);
        let picked: Vec<&str> = p.token_positions_of_defect.iter().map(|&i| toks[i].text.as_str()).collect();
        assert_eq!(picked, vec!["return", "xs", "[", "n", "]", ";"]);
    }

    #[test]
    fn class_indentation_is_removed() {
        let text = "public int last() {\n        return xs[n];\n    }";
        assert_eq!(dedented_lines(text), vec!["public int last() {", "    return xs[n];", "}"]);
        assert_eq!(dedented_lines("void f() { }"), vec!["void f() { }"]);
    }

    #[test]
    fn marker_can_be_highlighted() {
        let mut s = spec();
        s.defect_lines.insert(3);
        s.highlight_marker = true;
        let p = build_prompt(&s).unwrap();
        let toks = tokenizer::tokenize(&p.text);
        let last = *p.token_positions_of_defect.iter().last().unwrap();
        assert_eq!(toks[last].text, "// <defective>");
    }

    #[test]
    fn python_swaps_language_and_comment() {
        let mut s = spec();
        s.language_name = "Python".into();
        s.comment_prefix = "#".into();
        s.defect_lines.insert(2);
        let p = build_prompt(&s).unwrap();
        assert!(p.text.starts_with(
            "# I will give you a Python defective method, please generate a Python unit test to trigger this error\n# Class Context\n"
        ));
        assert!(p.text.contains("\n# Defective Method\n"));
        assert!(p.text.contains("int n = xs.length;  # <defective>\n"));
        let toks = tokenizer::tokenize(&p.text);
        let picked: Vec<&str> = p.token_positions_of_defect.iter().map(|&i| toks[i].text.as_str()).collect();
        assert_eq!(picked, vec!["int", "n", "=", "xs", ".", "length", ";"]);
    }

    #[test]
    fn unguided_prompt_and_missing_constructors() {
        let mut s = spec();
        s.class_constructors.clear();
        let p = build_prompt(&s).unwrap();
        assert!(p.token_positions_of_defect.is_empty());
        assert!(!p.text.contains("<defective>"));
        assert_eq!(p.warnings.len(), 1);
        assert!(p.text.contains("// Class Context\nclass Calc {\n}\n"));
    }

    #[test]
    fn defect_line_must_be_in_method() {
        let mut s = spec();
        s.defect_lines.insert(9);
        assert!(matches!(build_prompt(&s), Err(PromptError::DefectLineOutOfRange { line: 9, .. })));
    }

    #[test]
    fn custom_template() {
        assert_eq!(
            PromptTemplate::parse("{task}\n{method}").unwrap_err(),
            PromptError::MissingPlaceholder("class_context")
        );
        let mut s = spec();
        s.template = PromptTemplate::parse("{method}\n\n{class_context}\n{task}\n").unwrap();
        s.defect_lines.insert(2);
        let p = build_prompt(&s).unwrap();
        assert!(p.text.starts_with("// Defective Method\npublic int last"));
        let toks = tokenizer::tokenize(&p.text);
        assert_eq!(toks[*p.token_positions_of_defect.iter().next().unwrap()].text, "int");
        assert_eq!(toks[*p.token_positions_of_defect.iter().next().unwrap()].line, 3);
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_candidate("").unwrap_err(), PromptError::NoTestFound);
        assert_eq!(extract_candidate("no code here").unwrap_err(), PromptError::NoTestFound);
        let fenced = "Here you go:\n```java\n@Test\npublic void testLast() {\n    assertEquals(1, f(\"}\"));\n}\n```\n";
        assert_eq!(
            extract_candidate(fenced).unwrap(),
            "@Test\npublic void testLast() {\n    assertEquals(1, f(\"}\"));\n}"
        );
        let two = "Some prose.\n@Test\nvoid a() { x(); }\n\n@Test\nvoid b() { y(); }\n";
        assert_eq!(extract_candidate(two).unwrap(), "@Test\nvoid a() { x(); }");
        assert_eq!(
            extract_candidate("@Test\nvoid a() { x();").unwrap_err(),
            PromptError::NoTestFound
        );
    }
}
