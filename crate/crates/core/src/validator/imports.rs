//! Import resolution for types a candidate uses but the target class does
//! not see yet.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::index::relative_slash_path;
use super::source::JavaFile;
use super::{is_implicit_type, CandidateTest, ValidatorError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportResolution {
    /// Import statements to add, sorted and distinct.
    pub imports: Vec<String>,
    pub warnings: Vec<String>,
}

/// Declarations and import usage across every `.java` file of a project.
#[derive(Debug, Clone, Default)]
pub struct ProjectImports {
    /// Simple type name → packages of files named `<name>.java` (one entry
    /// per file, `None` for the default package).
    files: BTreeMap<String, Vec<Option<String>>>,
    /// Simple name → import statement → number of files using it.
    usage: BTreeMap<String, BTreeMap<String, usize>>,
}

impl ProjectImports {
    pub fn scan(project_root: &Path) -> Result<Self, ValidatorError> {
        let mut out = Self::default();
        for entry in WalkDir::new(project_root).sort_by_file_name() {
            let entry = entry.map_err(|e| ValidatorError::WorkspaceSetupFailed(e.to_string()))?;
            let path = entry.path();
            if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "java") {
                continue;
            }
            let text = std::fs::read_to_string(path).map_err(ValidatorError::io(relative_slash_path(project_root, path)))?;
            // Files the structural parser cannot read contribute nothing.
            let Ok(file) = JavaFile::parse(&text) else { continue };
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.files.entry(stem).or_default().push(file.package.clone());
            let mut seen = BTreeSet::new();
            for import in file.imports.iter().filter(|i| !i.is_static) {
                if let Some(name) = import.simple_name() {
                    if seen.insert(import.statement.clone()) {
                        *out.usage
                            .entry(name.to_string())
                            .or_default()
                            .entry(import.statement.clone())
                            .or_default() += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Most common import of `name`; ties go to the smaller statement.
    pub fn most_prevalent(&self, name: &str) -> Option<(&str, usize)> {
        self.usage
            .get(name)?
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(s, &n)| (s.as_str(), n))
    }
}

/// Decide which imports `target` needs so that every type `test` references
/// is visible. A type needs nothing when it is implicit, already imported,
/// declared in the target, or declared in the target's package. Otherwise a
/// unique project file named after the type wins; failing that, the import
/// statement for the type used by the most project files.
pub fn resolve_imports(
    test: &CandidateTest,
    project_root: &Path,
    target: &JavaFile,
) -> Result<ImportResolution, ValidatorError> {
    let project = ProjectImports::scan(project_root)?;
    Ok(resolve_with(test, &project, target))
}

pub(crate) fn resolve_with(test: &CandidateTest, project: &ProjectImports, target: &JavaFile) -> ImportResolution {
    let mut imports = BTreeSet::new();
    let mut warnings = Vec::new();
    for name in &test.referenced_types {
        if is_implicit_type(name)
            || target.imports_simple_name(name)
            || target.declared_types.iter().any(|t| t == name)
        {
            continue;
        }
        let packages = project.files.get(name).map(Vec::as_slice).unwrap_or_default();
        if packages.contains(&target.package) {
            continue;
        }
        if let [package] = packages {
            match package {
                Some(p) => {
                    imports.insert(format!("import {p}.{name};"));
                }
                None => warnings.push(format!("type {name} is in the default package and cannot be imported")),
            }
            continue;
        }
        match project.most_prevalent(name) {
            Some((statement, _)) => {
                imports.insert(statement.to_string());
            }
            None => warnings.push(if packages.is_empty() {
                format!("no declaration or import of type {name} found in the project")
            } else {
                format!("type {name} is declared {} times and never imported in the project", packages.len())
            }),
        }
    }
    ImportResolution {
        imports: imports.into_iter().collect(),
        warnings,
    }
}
