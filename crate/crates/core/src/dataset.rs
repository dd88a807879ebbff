//! JSON-lines method datasets: `{id, code, label, defect_lines}` per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{read_jsonl, write_jsonl, ArtifactError};
use crate::code_model::{parse_method_snippet, CodeError, Method};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub id: String,
    /// A single method declaration.
    pub code: String,
    /// 1 = defective, 0 = clean.
    pub label: u8,
    /// 1-based lines of `code` holding the defect.
    #[serde(default)]
    pub defect_lines: Vec<usize>,
}

impl MethodRecord {
    pub fn is_defective(&self) -> bool {
        self.label != 0
    }

    pub fn parse(&self) -> Result<Method, CodeError> {
        parse_method_snippet(&self.code, "")
    }
}

pub fn load(path: &Path) -> Result<Vec<MethodRecord>, ArtifactError> {
    read_jsonl(path)
}

pub fn save(path: &Path, records: &[MethodRecord]) -> Result<(), ArtifactError> {
    write_jsonl(path, records)
}
