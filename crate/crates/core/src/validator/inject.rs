//! Choosing where a candidate goes and patching it into the target class.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::code_model::{extract_methods, tokenize_lenient, SourceFile, TokenKind};

use super::imports::{resolve_with, ProjectImports};
use super::index::{match_test_class, TestClassIndex};
use super::source::JavaFile;
use super::{CandidateTest, ValidatorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    /// Target file relative to the project root.
    pub target_class_path: String,
    /// Fully qualified name of the target class.
    pub test_class: String,
    pub similarity: f64,
    /// Byte offset of the target class's closing brace.
    pub insert_position: usize,
    pub added_imports: Vec<String>,
    pub warnings: Vec<String>,
    /// Name the method has once injected (renamed on collision).
    pub method_name: String,
}

/// Pick the most similar test class, resolve imports and settle the
/// injected method's name.
pub fn plan_injection(
    test: &CandidateTest,
    index: &TestClassIndex,
    project_root: &Path,
    min_similarity: f64,
) -> Result<InjectionPlan, ValidatorError> {
    let project = ProjectImports::scan(project_root)?;
    plan_with(test, index, &project, project_root, min_similarity)
}

pub(crate) fn plan_with(
    test: &CandidateTest,
    index: &TestClassIndex,
    project: &ProjectImports,
    project_root: &Path,
    min_similarity: f64,
) -> Result<InjectionPlan, ValidatorError> {
    let (class, similarity) = match_test_class(test, index)?;
    if similarity < min_similarity {
        return Err(ValidatorError::BelowMinimumSimilarity {
            similarity,
            minimum: min_similarity,
        });
    }
    let path = project_root.join(&class.path);
    let text = std::fs::read_to_string(&path).map_err(ValidatorError::io(class.path.clone()))?;
    let unparseable = |source| ValidatorError::UnparseableTarget {
        path: class.path.clone(),
        source,
    };
    let target = JavaFile::parse(&text).map_err(unparseable)?;
    let existing: BTreeSet<String> = extract_methods(&SourceFile::new(&path, text.as_str()))
        .map_err(unparseable)?
        .into_iter()
        .map(|m| m.name)
        .collect();
    let resolution = resolve_with(test, project, &target);
    Ok(InjectionPlan {
        target_class_path: class.path.clone(),
        test_class: class.qualified_name.clone(),
        similarity,
        insert_position: target.body_close,
        added_imports: resolution.imports,
        warnings: resolution.warnings,
        method_name: free_name(&test.method_name(), &existing),
    })
}

/// `name`, or the first of `name_2`, `name_3`, ... not in `taken`.
fn free_name(name: &str, taken: &BTreeSet<String>) -> String {
    if !taken.contains(name) {
        return name.to_string();
    }
    (2..)
        .map(|k| format!("{name}_{k}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded suffixes")
}

/// Candidate source with its declared method name replaced.
fn renamed(source: &str, from: &str, to: &str) -> String {
    if from == to {
        return source.to_string();
    }
    let tokens: Vec<_> = tokenize_lenient(source)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .collect();
    let decl = tokens
        .windows(2)
        .find(|w| w[0].kind == TokenKind::Identifier && w[0].text == from && w[1].is_punct("("));
    match decl {
        Some(w) => format!("{}{to}{}", &source[..w[0].start], &source[w[0].end()..]),
        None => source.to_string(),
    }
}

/// Re-indent `source` to a class-member level of four spaces.
fn indent_member(source: &str) -> String {
    let lines: Vec<&str> = source.trim_matches('\n').lines().collect();
    let common = lines
        .iter()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let l = if i == 0 { l.trim_start() } else { l.get(common..).unwrap_or(l.trim_start()) };
            if l.trim().is_empty() {
                String::new()
            } else {
                format!("    {}", l.trim_end())
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Patch `target_text` with the candidate method and any missing imports.
pub fn inject(test: &CandidateTest, plan: &InjectionPlan, target_text: &str) -> Result<String, ValidatorError> {
    let unparseable = |source| ValidatorError::UnparseableTarget {
        path: plan.target_class_path.clone(),
        source,
    };
    let target = JavaFile::parse(target_text).map_err(unparseable)?;
    let method = indent_member(&renamed(&test.source_text, &test.method_name(), &plan.method_name));

    let close = target.body_close;
    let head = target_text[..close].trim_end();
    let mut out = format!("{head}\n\n{method}\n{}", &target_text[close..]);

    let present: BTreeSet<&str> = target.imports.iter().map(|i| i.statement.as_str()).collect();
    let added: BTreeSet<&str> = plan.added_imports.iter().map(String::as_str).collect();
    if !added.is_subset(&present) {
        // Rebuild the import block sorted and without duplicates.
        let block = present.union(&added).copied().collect::<Vec<_>>().join("\n");
        out = match (target.imports.first(), target.imports.last(), &target.package_span) {
            (Some(first), Some(last), _) => format!("{}{block}{}", &out[..first.span.start], &out[last.span.end..]),
            (_, _, Some(pkg)) => format!("{}\n\n{block}{}", &out[..pkg.end], &out[pkg.end..]),
            _ => format!("{block}\n\n{out}"),
        };
    }

    let check = JavaFile::parse(&out).map_err(unparseable)?;
    let names = extract_methods(&SourceFile::new(&plan.target_class_path, out.as_str())).map_err(unparseable)?;
    if check.type_name != target.type_name || !names.iter().any(|m| m.name == plan.method_name) {
        return Err(unparseable(crate::code_model::CodeError::NoMethodFound));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TARGET: &str = "package a;\n\nimport org.junit.Test;\n\npublic class CalcTest {\n    @Test\n    public void testLast() {\n        f();\n    }\n}\n";

    fn plan(name: &str, imports: &[&str]) -> InjectionPlan {
        InjectionPlan {
            target_class_path: "src/test/java/a/CalcTest.java".into(),
            test_class: "a.CalcTest".into(),
            similarity: 1.0,
            insert_position: TARGET.rfind('}').unwrap(),
            added_imports: imports.iter().map(|s| s.to_string()).collect(),
            warnings: Vec::new(),
            method_name: name.into(),
        }
    }

    #[test]
    fn names_get_numeric_suffixes() {
        let taken: BTreeSet<String> = ["t", "t_2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(free_name("t", &taken), "t_3");
        assert_eq!(free_name("u", &taken), "u");
        assert_eq!(renamed("@Test void t() { t(); }", "t", "t_2"), "@Test void t_2() { t(); }");
    }

    #[test]
    fn injects_method_and_imports() {
        let test = CandidateTest::new("c", "@Test\npublic void testLast() {\n    List<Integer> xs = null;\n}").unwrap();
        let out = inject(&test, &plan("testLast_2", &["import java.util.List;", "import org.junit.Test;"]), TARGET).unwrap();
        let expected = "package a;\n\nimport java.util.List;\nimport org.junit.Test;\n\npublic class CalcTest {\n    @Test\n    public void testLast() {\n        f();\n    }\n\n    @Test\n    public void testLast_2() {\n        List<Integer> xs = null;\n    }\n}\n";
        assert_eq!(out, expected);
    }

    #[test]
    fn imports_go_after_package_when_none_exist() {
        let target = "package a;\nclass T {\n}\n";
        let test = CandidateTest::new("c", "@Test void t() { }").unwrap();
        let mut p = plan("t", &["import org.junit.Test;"]);
        p.target_class_path = "T.java".into();
        let out = inject(&test, &p, target).unwrap();
        assert_eq!(out, "package a;\n\nimport org.junit.Test;\nclass T {\n\n    @Test void t() { }\n}\n");
        let out = inject(&test, &p, "class T { }").unwrap();
        assert_eq!(out, "import org.junit.Test;\n\nclass T {\n\n    @Test void t() { }\n}");
    }

    #[test]
    fn empty_import_plan_only_adds_the_method() {
        let test = CandidateTest::new("c", "@Test void extra() { }").unwrap();
        let out = inject(&test, &plan("extra", &["import org.junit.Test;"]), TARGET).unwrap();
        let close = TARGET.rfind('}').unwrap();
        assert_eq!(out, format!("{}\n\n    @Test void extra() {{ }}\n{}", TARGET[..close].trim_end(), &TARGET[close..]));
    }
}
