//! Discovery of existing test classes and similarity matching.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::code_model::token_set;

use super::source::JavaFile;
use super::{CandidateTest, ValidatorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestClass {
    /// Path relative to the project root, `/`-separated.
    pub path: String,
    pub qualified_name: String,
    pub token_set: BTreeSet<String>,
    pub imports: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestClassIndex {
    /// Sorted by path.
    pub classes: Vec<TestClass>,
}

pub(crate) fn relative_slash_path(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

impl TestClassIndex {
    /// Index every file under `test_roots` (relative to `project_root`)
    /// whose name matches `pattern` (default `*Test*.java`).
    pub fn discover(project_root: &Path, test_roots: &[PathBuf], pattern: &str) -> Result<Self, ValidatorError> {
        let pattern = glob::Pattern::new(pattern)
            .map_err(|e| ValidatorError::WorkspaceSetupFailed(format!("bad test-class pattern: {e}")))?;
        let mut classes = Vec::new();
        for root in test_roots {
            let dir = project_root.join(root);
            if !dir.is_dir() {
                continue;
            }
            for entry in WalkDir::new(&dir).sort_by_file_name() {
                let entry = entry.map_err(|e| ValidatorError::WorkspaceSetupFailed(e.to_string()))?;
                let name = entry.file_name().to_string_lossy();
                if !entry.file_type().is_file() || !pattern.matches(&name) {
                    continue;
                }
                let text = std::fs::read_to_string(entry.path())
                    .map_err(ValidatorError::io(entry.path().display().to_string()))?;
                let path = relative_slash_path(project_root, entry.path());
                let file = JavaFile::parse(&text).map_err(|source| ValidatorError::UnparseableTarget {
                    path: path.clone(),
                    source,
                })?;
                classes.push(TestClass {
                    path,
                    qualified_name: file.qualified_name(),
                    token_set: token_set(&text),
                    imports: file.imports.iter().map(|i| i.statement.clone()).collect(),
                });
            }
        }
        classes.sort_by(|a, b| a.path.cmp(&b.path));
        classes.dedup_by(|a, b| a.path == b.path);
        Ok(Self { classes })
    }
}

/// `|T_t ∩ T_c| / |T_t|`.
pub fn similarity(test: &BTreeSet<String>, class: &BTreeSet<String>) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    test.intersection(class).count() as f64 / test.len() as f64
}

/// The class with the highest similarity; ties go to the smallest path.
pub fn match_test_class<'a>(
    test: &CandidateTest,
    index: &'a TestClassIndex,
) -> Result<(&'a TestClass, f64), ValidatorError> {
    if test.token_set.is_empty() {
        return Err(ValidatorError::EmptyTokenSet);
    }
    let mut best: Option<(&TestClass, f64)> = None;
    for class in &index.classes {
        let sim = similarity(&test.token_set, &class.token_set);
        let better = match best {
            None => true,
            Some((b, s)) => sim > s || (sim == s && class.path < b.path),
        };
        if better {
            best = Some((class, sim));
        }
    }
    best.ok_or(ValidatorError::NoTestClasses)
}
