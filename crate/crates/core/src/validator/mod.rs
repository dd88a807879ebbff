//! Placing a generated test into the project's suite and judging it against
//! the defective and fixed versions.
//!
//! A candidate goes into the existing test class whose token set covers most
//! of the candidate's tokens; missing imports are resolved from the project;
//! the patched project is copied twice (defective, fixed) and an external
//! runner executes the test in each copy.

mod imports;
mod index;
mod inject;
mod runner;
pub mod source;
pub mod stub;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code_model::{parse_method_snippet, token_set, tokenize_lenient, CodeError, TokenKind};

pub use imports::{resolve_imports, ImportResolution, ProjectImports};
pub use index::{match_test_class, similarity, TestClass, TestClassIndex};
pub use inject::{inject, plan_injection, InjectionPlan};
pub use runner::{
    run_and_classify, run_version, validate_candidates, RunnerConfig, ValidationConfig, ValidationOutcome, VersionRun,
    DEFAULT_RUNNER_TEMPLATE,
};

#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("candidate has no identifier or keyword tokens")]
    EmptyTokenSet,
    #[error("no test classes found")]
    NoTestClasses,
    #[error("best test-class similarity {similarity:.3} is below the minimum {minimum:.3}")]
    BelowMinimumSimilarity { similarity: f64, minimum: f64 },
    #[error("cannot parse injection target {path}: {source}")]
    UnparseableTarget {
        path: String,
        #[source]
        source: CodeError,
    },
    #[error("candidate is not a parseable test method: {0}")]
    InvalidCandidate(CodeError),
    #[error("runner `{0}` not found")]
    RunnerNotFound(String),
    #[error("runner exited with unexpected status {0:?}")]
    UnexpectedExitStatus(Option<i32>),
    #[error("workspace setup failed: {0}")]
    WorkspaceSetupFailed(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl ValidatorError {
    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| Self::Io { context, source }
    }
}

/// `java.lang` types, visible without an import.
pub const IMPLICIT_TYPES: &[&str] = &[
    "ArithmeticException", "ArrayIndexOutOfBoundsException", "AssertionError", "Boolean", "Byte",
    "CharSequence", "Character", "Class", "ClassCastException", "CloneNotSupportedException",
    "Comparable", "Deprecated", "Double", "Enum", "Error", "Exception", "Float",
    "FunctionalInterface", "IllegalArgumentException", "IllegalStateException",
    "IndexOutOfBoundsException", "Integer", "InterruptedException", "Iterable", "Long", "Math",
    "NegativeArraySizeException", "NullPointerException", "Number", "NumberFormatException",
    "Object", "Override", "Runnable", "RuntimeException", "SafeVarargs", "Short", "String",
    "StringBuffer", "StringBuilder", "StringIndexOutOfBoundsException", "SuppressWarnings",
    "System", "Thread", "Throwable", "UnsupportedOperationException", "Void",
];

pub fn is_implicit_type(name: &str) -> bool {
    IMPLICIT_TYPES.binary_search(&name).is_ok()
}

/// Capitalized identifiers used as types, constructors, exceptions,
/// annotations or static receivers. Member names after `.` and
/// upper-case constants are skipped.
pub fn referenced_types(source: &str) -> BTreeSet<String> {
    let tokens: Vec<_> = tokenize_lenient(source)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .collect();
    let mut out = BTreeSet::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.kind != TokenKind::Identifier || !t.text.starts_with(|c: char| c.is_ascii_uppercase()) {
            continue;
        }
        if i > 0 && tokens[i - 1].is_punct(".") {
            continue;
        }
        let constant = t.text.len() > 1
            && t.text.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_');
        if !constant {
            out.insert(t.text.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTest {
    pub id: String,
    pub source_text: String,
    pub token_set: BTreeSet<String>,
    pub referenced_types: BTreeSet<String>,
}

impl CandidateTest {
    /// Requires a single brace-balanced method declaration.
    pub fn new(id: impl Into<String>, source_text: impl Into<String>) -> Result<Self, ValidatorError> {
        let source_text = source_text.into();
        parse_method_snippet(&source_text, "").map_err(ValidatorError::InvalidCandidate)?;
        Ok(Self {
            id: id.into(),
            token_set: token_set(&source_text),
            referenced_types: referenced_types(&source_text),
            source_text,
        })
    }

    pub fn method_name(&self) -> String {
        parse_method_snippet(&self.source_text, "")
            .map(|m| m.name)
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunResult {
    Pass,
    Fail,
    CompileError,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    TP,
    FP,
    TN,
    FN,
    #[serde(rename = "invalid")]
    Invalid,
}

/// Outcome table: a trigger fails on the defective version and passes on
/// the fixed one. Compile errors and timeouts on either side are invalid.
pub fn classify(defective: RunResult, fixed: RunResult) -> Classification {
    use RunResult::*;
    match (defective, fixed) {
        (Fail, Pass) => Classification::TP,
        (Fail, Fail) => Classification::FP,
        (Pass, Pass) => Classification::TN,
        (Pass, Fail) => Classification::FN,
        _ => Classification::Invalid,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub candidate_id: String,
    /// Defect the candidate was generated for; groups verdicts per defect.
    #[serde(default)]
    pub defect_id: String,
    pub defective_result: RunResult,
    pub fixed_result: RunResult,
    pub classification: Classification,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implicit_types_are_sorted() {
        assert!(IMPLICIT_TYPES.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn classification_table_is_exhaustive() {
        use Classification::*;
        use RunResult::*;
        let all = [Pass, Fail, CompileError, Timeout];
        for d in all {
            for f in all {
                let expected = match (d, f) {
                    (Fail, Pass) => TP,
                    (Fail, Fail) => FP,
                    (Pass, Pass) => TN,
                    (Pass, Fail) => FN,
                    _ => Invalid,
                };
                assert_eq!(classify(d, f), expected, "{d:?} {f:?}");
            }
        }
    }

    #[test]
    fn referenced_types_examples() {
        let src = "@Test public void t() throws IOException { List<Foo> xs = new ArrayList<>(); Calc c = new Calc(MAX_SIZE); c.Other(); Assert.fail(); int X = 1; }";
        let got: Vec<String> = referenced_types(src).into_iter().collect();
        assert_eq!(got, vec!["ArrayList", "Assert", "Calc", "Foo", "IOException", "List", "Test", "X"]);
    }

    #[test]
    fn candidate_requires_a_method() {
        assert!(CandidateTest::new("c", "@Test void t() { f(); }").is_ok());
        assert!(matches!(CandidateTest::new("c", "void t() { f(); "), Err(ValidatorError::InvalidCandidate(_))));
        assert!(matches!(CandidateTest::new("c", "x = 1;"), Err(ValidatorError::InvalidCandidate(_))));
        assert_eq!(CandidateTest::new("c", "@Test void t() { f(); }").unwrap().method_name(), "t");
    }

    #[test]
    fn verdict_serializes_with_table_names() {
        let v = Verdict {
            candidate_id: "c1".into(),
            defect_id: "d".into(),
            defective_result: RunResult::CompileError,
            fixed_result: RunResult::Pass,
            classification: Classification::Invalid,
        };
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains(r#""defective_result":"compile_error""#) && s.contains(r#""classification":"invalid""#));
        assert!(serde_json::to_string(&Classification::TP).unwrap() == r#""TP""#);
    }
}
