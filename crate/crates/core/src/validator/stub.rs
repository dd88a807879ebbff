//! A deterministic stand-in for a build tool, used to exercise the runner
//! protocol without a JVM.
//!
//! It "compiles" a test method by checking that the class and method exist
//! and that every type the method names is visible, then "runs" it by
//! matching the method body against rules in `stub-oracle.toml` at the
//! project root:
//!
//! ```toml
//! [[fail]]
//! contains = ["calc.last(", "assertEquals"]
//!
//! [[hang]]
//! contains = ["while (true)"]
//! ```
//!
//! A rule fires when every fragment occurs in the body as a contiguous run of
//! code tokens. Hang rules are checked first.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::code_model::{extract_methods, tokenize_lenient, SourceFile, TokenKind};

use super::source::JavaFile;
use super::{is_implicit_type, referenced_types};

pub const ORACLE_FILE: &str = "stub-oracle.toml";

/// Import prefixes treated as available libraries.
pub const KNOWN_PREFIXES: &[&str] = &["java.", "javax.", "org.junit.", "org.hamcrest."];

/// Roots searched for project classes, relative to the project root.
pub const SOURCE_ROOTS: &[&str] = &["src/main/java", "src/test/java"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct OracleRule {
    pub contains: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default)]
pub struct Oracle {
    pub fail: Vec<OracleRule>,
    pub hang: Vec<OracleRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubOutcome {
    Pass,
    Fail(String),
    CompileError(String),
    Hang,
}

impl StubOutcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::Fail(_) => 1,
            Self::CompileError(_) => 2,
            Self::Hang => 3,
        }
    }
}

fn class_file(project: &Path, root: &str, qualified: &str) -> PathBuf {
    let mut p = project.join(root);
    p.extend(qualified.split('.'));
    p.set_extension("java");
    p
}

fn project_type_exists(project: &Path, qualified: &str) -> bool {
    SOURCE_ROOTS.iter().any(|r| class_file(project, r, qualified).is_file())
}

fn package_has_type(project: &Path, package: Option<&str>, name: &str) -> bool {
    let qualified = match package {
        Some(p) => format!("{p}.{name}"),
        None => name.to_string(),
    };
    project_type_exists(project, &qualified)
}

fn code_lexemes(text: &str) -> Vec<String> {
    tokenize_lenient(text)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .map(|t| t.text)
        .collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Parentheses, brackets and braces must nest properly, and a `;` may not
/// appear inside an open `(` or `[` other than a `for` header.
fn bracket_problem(body: &str) -> Option<String> {
    let tokens: Vec<_> = tokenize_lenient(body)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .collect();
    // (closer, opened a `for` header)
    let mut stack: Vec<(&str, bool)> = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        match t.text.as_str() {
            "(" => stack.push((")", i > 0 && tokens[i - 1].is_keyword("for"))),
            "[" => stack.push(("]", false)),
            "{" => stack.push(("}", false)),
            ")" | "]" | "}" => {
                if stack.pop().map(|f| f.0) != Some(t.text.as_str()) {
                    return Some(format!("unexpected `{}` on line {}", t.text, t.line));
                }
            }
            ";" => {
                if let Some(&(closer, is_for)) = stack.last() {
                    if closer != "}" && !is_for {
                        return Some(format!("`;` inside an open expression on line {}", t.line));
                    }
                }
            }
            _ => {}
        }
    }
    (!stack.is_empty()).then(|| "unclosed parenthesis or bracket".to_string())
}

impl OracleRule {
    fn matches(&self, body: &[String]) -> bool {
        !self.contains.is_empty() && self.contains.iter().all(|f| contains_run(body, &code_lexemes(f)))
    }
}

/// Judge `method` of `class` (fully qualified) in the project at `project`.
pub fn judge(project: &Path, class: &str, method: &str) -> StubOutcome {
    let Some(path) = SOURCE_ROOTS
        .iter()
        .map(|r| class_file(project, r, class))
        .find(|p| p.is_file())
    else {
        return StubOutcome::CompileError(format!("class {class} not found"));
    };
    let Ok(text) = std::fs::read_to_string(&path) else {
        return StubOutcome::CompileError(format!("cannot read {}", path.display()));
    };
    let file = match JavaFile::parse(&text) {
        Ok(f) => f,
        Err(e) => return StubOutcome::CompileError(e.to_string()),
    };
    let methods = match extract_methods(&SourceFile::new(&path, text.as_str())) {
        Ok(m) => m,
        Err(e) => return StubOutcome::CompileError(e.to_string()),
    };
    let Some(m) = methods.iter().find(|m| m.name == method) else {
        return StubOutcome::CompileError(format!("method {method} not found in {class}"));
    };

    if let Some(problem) = bracket_problem(&m.body) {
        return StubOutcome::CompileError(problem);
    }
    for import in &file.imports {
        let known = KNOWN_PREFIXES.iter().any(|p| import.path.starts_with(p));
        let project_path = if import.is_static {
            import.path.rsplit_once('.').map(|(owner, _)| owner).unwrap_or("")
        } else {
            &import.path
        };
        let resolves = match project_path.strip_suffix(".*") {
            Some(pkg) => SOURCE_ROOTS
                .iter()
                .any(|r| project.join(r).join(pkg.replace('.', "/")).is_dir()),
            None => project_type_exists(project, project_path),
        };
        if !known && !resolves {
            return StubOutcome::CompileError(format!("cannot resolve {}", import.statement));
        }
    }
    let wildcard = |name: &str| {
        file.imports.iter().any(|i| {
            !i.is_static
                && i.path.strip_suffix(".*").is_some_and(|pkg| {
                    KNOWN_PREFIXES.iter().any(|p| pkg.starts_with(p)) || package_has_type(project, Some(pkg), name)
                })
        })
    };
    for name in referenced_types(&m.text) {
        let visible = is_implicit_type(&name)
            || file.declared_types.contains(&name)
            || file.imports_simple_name(&name)
            || package_has_type(project, file.package.as_deref(), &name)
            || wildcard(&name);
        if !visible {
            return StubOutcome::CompileError(format!("cannot find symbol {name}"));
        }
    }

    let oracle: Oracle = match std::fs::read_to_string(project.join(ORACLE_FILE)) {
        Ok(t) => match toml::from_str(&t) {
            Ok(o) => o,
            Err(e) => return StubOutcome::CompileError(format!("bad {ORACLE_FILE}: {e}")),
        },
        Err(_) => Oracle::default(),
    };
    let body = code_lexemes(&m.body);
    if oracle.hang.iter().any(|r| r.matches(&body)) {
        return StubOutcome::Hang;
    }
    if let Some(rule) = oracle.fail.iter().find(|r| r.matches(&body)) {
        return StubOutcome::Fail(format!("assertion failed: matched {:?}", rule.contains));
    }
    StubOutcome::Pass
}
