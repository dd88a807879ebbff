//! Self-describing stage artifacts and JSON-lines helpers.
//!
//! Every JSON document a stage writes is wrapped in an [`Envelope`] carrying a
//! schema id and the producing stage; JSONL files carry one bare record per
//! line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected schema `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub stage: String,
    pub payload: T,
}

pub fn write_json<T: Serialize>(path: &Path, schema: &str, stage: &str, payload: &T) -> Result<(), ArtifactError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let env = Envelope {
        schema: schema.to_string(),
        stage: stage.to_string(),
        payload,
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &env).map_err(|source| ArtifactError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Envelope<T>, ArtifactError> {
    let file = File::open(path).map_err(io_err(path))?;
    let env: Envelope<T> =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| ArtifactError::Json {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
    if env.schema != schema {
        return Err(ArtifactError::Schema {
            path: path.to_path_buf(),
            expected: schema.to_string(),
            found: env.schema,
        });
    }
    Ok(env)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), ArtifactError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (i, r) in records.iter().enumerate() {
        serde_json::to_writer(&mut w, r).map_err(|source| ArtifactError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Read a JSONL file; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArtifactError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ArtifactError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Schema ids of every artifact the pipeline writes.
pub mod schema {
    pub const DETECTOR_MODEL: &str = "steertest.detector-model/v1";
    pub const LOCATOR_MODEL: &str = "steertest.locator-model/v1";
    pub const DECODER_MODEL: &str = "steertest.decoder-model/v1";
    pub const PROFILE: &str = "steertest.profile/v1";
    pub const METRICS: &str = "steertest.metrics/v1";
    pub const MANIFEST: &str = "steertest.manifest/v1";
    pub const TRAINING_REPORT: &str = "steertest.training-report/v1";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_envelope_checks_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/a.json");
        write_json(&path, "x/v1", "test", &vec![1, 2, 3]).unwrap();
        let env: Envelope<Vec<i32>> = read_json(&path, "x/v1").unwrap();
        assert_eq!(env.payload, vec![1, 2, 3]);
        assert_eq!(env.stage, "test");
        assert!(matches!(
            read_json::<Vec<i32>>(&path, "y/v1"),
            Err(ArtifactError::Schema { .. })
        ));
    }

    #[test]
    fn jsonl_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        std::fs::write(&path, "1\n\n2\nnope\n").unwrap();
        match read_jsonl::<i32>(&path) {
            Err(ArtifactError::Json { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
