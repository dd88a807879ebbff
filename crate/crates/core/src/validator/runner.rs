//! Running an injected candidate against the defective and fixed versions.
//!
//! The runner is an external command built from a template. Its exit status
//! is the protocol: 0 pass, 1 fail, 2 compile error; exceeding the timeout
//! is a timeout. Anything else is an error.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;
use walkdir::WalkDir;

use super::index::TestClassIndex;
use super::imports::ProjectImports;
use super::inject::{inject, plan_with, InjectionPlan};
use super::{classify, CandidateTest, RunResult, ValidatorError, Verdict};

pub const DEFAULT_RUNNER_TEMPLATE: &str = "{runner} --project {dir} --class {test_class} --method {name}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    /// Executable substituted for `{runner}`.
    pub runner: String,
    /// Whitespace-separated argument template; placeholders are substituted
    /// per argument, no shell is involved.
    pub template: String,
    pub timeout_secs: f64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            runner: "steertest-stub-runner".into(),
            template: DEFAULT_RUNNER_TEMPLATE.into(),
            timeout_secs: 60.0,
        }
    }
}

impl RunnerConfig {
    fn command(&self, dir: &Path, test_class: &str, name: &str) -> Result<Command, ValidatorError> {
        let args: Vec<String> = self
            .template
            .split_whitespace()
            .map(|a| {
                a.replace("{runner}", &self.runner)
                    .replace("{dir}", &dir.to_string_lossy())
                    .replace("{test_class}", test_class)
                    .replace("{name}", name)
            })
            .collect();
        let (program, rest) = args
            .split_first()
            .ok_or_else(|| ValidatorError::WorkspaceSetupFailed("empty runner template".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(rest).current_dir(dir).stdin(Stdio::null());
        Ok(cmd)
    }
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), ValidatorError> {
    for entry in WalkDir::new(from) {
        let entry = entry.map_err(|e| ValidatorError::WorkspaceSetupFailed(e.to_string()))?;
        let rel = entry.path().strip_prefix(from).expect("walk stays under root");
        let dest = to.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&dest).map_err(ValidatorError::io(dest.display().to_string()))?;
        } else if entry.file_type().is_file() {
            std::fs::copy(entry.path(), &dest).map_err(ValidatorError::io(dest.display().to_string()))?;
        }
    }
    Ok(())
}

/// Outcome of one version: the run result, the patched file and the
/// runner's combined output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionRun {
    pub result: RunResult,
    pub injected_source: String,
    pub log: String,
}

/// Copy `project_dir` to a scratch directory, inject the candidate and run it.
pub fn run_version(
    test: &CandidateTest,
    plan: &InjectionPlan,
    project_dir: &Path,
    config: &RunnerConfig,
) -> Result<VersionRun, ValidatorError> {
    if !project_dir.is_dir() {
        return Err(ValidatorError::WorkspaceSetupFailed(format!(
            "{} is not a directory",
            project_dir.display()
        )));
    }
    let scratch = tempfile::tempdir().map_err(ValidatorError::io("creating scratch directory"))?;
    let work = scratch.path().join("project");
    copy_tree(project_dir, &work)?;
    let target_path = work.join(&plan.target_class_path);
    let original = std::fs::read_to_string(&target_path).map_err(ValidatorError::io(plan.target_class_path.clone()))?;
    let injected_source = inject(test, plan, &original)?;
    std::fs::write(&target_path, &injected_source).map_err(ValidatorError::io(plan.target_class_path.clone()))?;

    let log_path = scratch.path().join("runner.log");
    let log = File::create(&log_path).map_err(ValidatorError::io("creating runner log"))?;
    let log_err = log.try_clone().map_err(ValidatorError::io("creating runner log"))?;
    let mut cmd = config.command(&work, &plan.test_class, &plan.method_name)?;
    let mut child = cmd.stdout(log).stderr(log_err).spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
            ValidatorError::RunnerNotFound(config.runner.clone())
        }
        _ => ValidatorError::Io {
            context: format!("spawning {}", config.runner),
            source: e,
        },
    })?;
    let timeout = Duration::from_secs_f64(config.timeout_secs.max(0.0));
    let status = child.wait_timeout(timeout).map_err(ValidatorError::io("waiting for runner"))?;
    let result = match status {
        None => {
            // Already-exited races are harmless here.
            let _ = child.kill();
            child.wait().map_err(ValidatorError::io("reaping runner"))?;
            RunResult::Timeout
        }
        Some(status) => match status.code() {
            Some(0) => RunResult::Pass,
            Some(1) => RunResult::Fail,
            Some(2) => RunResult::CompileError,
            other => return Err(ValidatorError::UnexpectedExitStatus(other)),
        },
    };
    let log = std::fs::read_to_string(&log_path).unwrap_or_default();
    Ok(VersionRun {
        result,
        injected_source,
        log,
    })
}

fn save_artifacts(dir: &Path, plan: &InjectionPlan, version: &str, run: &VersionRun) -> Result<(), ValidatorError> {
    let dir = dir.join(version);
    std::fs::create_dir_all(&dir).map_err(ValidatorError::io(dir.display().to_string()))?;
    let file_name = Path::new(&plan.target_class_path)
        .file_name()
        .map(|n| n.to_owned())
        .unwrap_or_else(|| "Injected.java".into());
    let write = |path: PathBuf, text: &str| std::fs::write(&path, text).map_err(ValidatorError::io(path.display().to_string()));
    write(dir.join(file_name), &run.injected_source)?;
    write(dir.join("runner.log"), &run.log)
}

/// Run the candidate on both versions and classify the pair of results.
/// With `artifacts_dir`, the injected files and runner logs are kept under
/// `<artifacts_dir>/{defective,fixed}/`.
pub fn run_and_classify(
    test: &CandidateTest,
    plan: &InjectionPlan,
    defective_dir: &Path,
    fixed_dir: &Path,
    config: &RunnerConfig,
    artifacts_dir: Option<&Path>,
) -> Result<Verdict, ValidatorError> {
    let defective = run_version(test, plan, defective_dir, config)?;
    let fixed = run_version(test, plan, fixed_dir, config)?;
    if let Some(dir) = artifacts_dir {
        save_artifacts(dir, plan, "defective", &defective)?;
        save_artifacts(dir, plan, "fixed", &fixed)?;
    }
    Ok(Verdict {
        candidate_id: test.id.clone(),
        defect_id: String::new(),
        defective_result: defective.result,
        fixed_result: fixed.result,
        classification: classify(defective.result, fixed.result),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub runner: RunnerConfig,
    /// Test source roots, relative to the project root.
    pub test_roots: Vec<PathBuf>,
    /// File-name glob selecting test classes.
    pub test_class_pattern: String,
    pub min_similarity: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            runner: RunnerConfig::default(),
            test_roots: vec![PathBuf::from("src/test/java")],
            test_class_pattern: "*Test*.java".into(),
            min_similarity: 0.0,
        }
    }
}

/// Plan and verdict for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub plan: InjectionPlan,
    pub verdict: Verdict,
}

/// Validate many candidates for one defect in parallel. Placement is decided
/// on the defective version. Results keep the input order; each candidate
/// fails or succeeds on its own.
pub fn validate_candidates(
    candidates: &[CandidateTest],
    defect_id: &str,
    defective_dir: &Path,
    fixed_dir: &Path,
    config: &ValidationConfig,
    artifacts_dir: Option<&Path>,
) -> Result<Vec<Result<ValidationOutcome, ValidatorError>>, ValidatorError> {
    let index = TestClassIndex::discover(defective_dir, &config.test_roots, &config.test_class_pattern)?;
    let project = ProjectImports::scan(defective_dir)?;
    Ok(candidates
        .par_iter()
        .map(|test| {
            let plan = plan_with(test, &index, &project, defective_dir, config.min_similarity)?;
            let artifacts = artifacts_dir.map(|d| d.join(&test.id));
            let mut verdict = run_and_classify(test, &plan, defective_dir, fixed_dir, &config.runner, artifacts.as_deref())?;
            verdict.defect_id = defect_id.to_string();
            Ok(ValidationOutcome { plan, verdict })
        })
        .collect())
}
