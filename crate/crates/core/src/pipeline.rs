//! Stage orchestration: detect → locate → train-decoder → profile →
//! generate → validate → metrics.
//!
//! Every stage reads the artifacts earlier stages left in the output
//! directory and writes its own, so running the stages one by one gives the
//! same files as [`run_pipeline`]. Each stage also records itself in
//! `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::artifact::{read_json, read_jsonl, schema, write_json, write_jsonl};
use crate::code_model::{extract_methods, Method, SourceFile};
use crate::config::{ConfigError, PipelineConfig, ScorerKind, Stage};
use crate::dataset::{self, MethodRecord};
use crate::detector::{predict_defect, train_detector, DetectorModel};
use crate::locator::{locate_defects, train_locator, LocationRecord, LocatorModel, LocatorSample};
use crate::metrics::{build_report, PredictionRecord};
use crate::nn::derive_seed;
use crate::profiler::{profile_heads, HeadScorer, LikelihoodScorer, ProfilingItem, ProfilingReport, ProfilingSet};
use crate::prompt::{build_prompt, extract_candidate, PromptSpec, PromptTemplate};
use crate::steer::{
    generate_candidates, train_decoder, DecoderExample, HeadId, HeadSet, SteeringSpec, ToyDecoder,
};
use crate::validator::source::JavaFile;
use crate::validator::{
    classify, validate_candidates, CandidateTest, InjectionPlan, RunResult, ValidationConfig, ValidatorError, Verdict,
};

/// File names inside the output directory.
pub mod files {
    pub const DETECTOR_MODEL: &str = "detector-model.json";
    pub const DETECTOR_REPORT: &str = "detector-report.json";
    pub const PREDICTIONS: &str = "predictions.jsonl";
    pub const LOCATOR_MODEL: &str = "locator-model.json";
    pub const LOCATOR_REPORT: &str = "locator-report.json";
    pub const LOCATIONS: &str = "locations.jsonl";
    pub const DECODER_MODEL: &str = "decoder-model.json";
    pub const DECODER_REPORT: &str = "decoder-report.json";
    pub const PROFILE: &str = "profile.json";
    pub const PROMPTS: &str = "prompts.jsonl";
    pub const CANDIDATES: &str = "candidates.jsonl";
    pub const VERDICTS: &str = "verdicts.jsonl";
    pub const INJECTIONS: &str = "injections.jsonl";
    pub const VALIDATION_DIR: &str = "validation";
    pub const METRICS: &str = "metrics.json";
    pub const MANIFEST: &str = "manifest.json";
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing artifact {} (run `{stage}` first)", path.display())]
    MissingArtifact { stage: &'static str, path: PathBuf },
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 3 for stage failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::MissingArtifact { .. } | Self::Stage { .. } => 3,
        }
    }
}

fn failed<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// What a stage produced, for the manifest and the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub root_seed: u64,
    pub stage_seed: Option<u64>,
    /// Artifact name → SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn sha256_tree(dir: &Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(std::fs::read(entry.path())?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn record_stage(cfg: &PipelineConfig, summary: &StageSummary, stage_seed: Option<u64>) -> Result<(), PipelineError> {
    let stage = "manifest";
    let path = cfg.output_dir.join(files::MANIFEST);
    let mut manifest = read_json::<Manifest>(&path, schema::MANIFEST)
        .map(|e| e.payload)
        .unwrap_or_default();
    manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
    let mut artifacts = BTreeMap::new();
    for a in &summary.artifacts {
        let name = a
            .strip_prefix(&cfg.output_dir)
            .unwrap_or(a)
            .to_string_lossy()
            .into_owned();
        let digest = if a.is_dir() { sha256_tree(a) } else { sha256_file(a) }.map_err(failed(stage))?;
        artifacts.insert(name, digest);
    }
    manifest.stages.insert(
        summary.stage.clone(),
        StageRecord {
            config_hash: cfg.hash(),
            root_seed: cfg.seed,
            stage_seed,
            artifacts,
            notes: summary.notes.clone(),
        },
    );
    write_json(&path, schema::MANIFEST, stage, &manifest).map_err(failed(stage))
}

fn output(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

/// An artifact an earlier stage must have written.
fn required(cfg: &PipelineConfig, name: &str, producer: &'static str) -> Result<PathBuf, PipelineError> {
    let path = output(cfg, name);
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact { stage: producer, path })
    }
}

fn required_input<'a>(value: &'a Option<PathBuf>, field: &str) -> Result<&'a Path, ConfigError> {
    let path = value
        .as_deref()
        .ok_or_else(|| ConfigError::new(field, "required by this stage"))?;
    if !path.exists() {
        return Err(ConfigError::new(field, format!("{} does not exist", path.display())));
    }
    Ok(path)
}

// ----- project methods ------------------------------------------------

/// A method of the project under test.
#[derive(Debug, Clone)]
pub struct ProjectMethod {
    /// `package.Class#name:line`.
    pub id: String,
    pub path: PathBuf,
    pub qualified_class: String,
    pub method: Method,
    /// Signatures of the declaring class's constructors.
    pub constructors: Vec<String>,
}

fn normalized(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Every non-constructor method under the configured source roots, in path
/// then source order.
pub fn project_methods(root: &Path, source_roots: &[PathBuf]) -> Result<Vec<ProjectMethod>, PipelineError> {
    let stage = "detect";
    let mut paths = Vec::new();
    for r in source_roots {
        let dir = root.join(r);
        if !dir.is_dir() {
            continue;
        }
        for entry in WalkDir::new(&dir).sort_by_file_name() {
            let entry = entry.map_err(failed(stage))?;
            if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "java") {
                paths.push(entry.into_path());
            }
        }
    }
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(failed(stage))?;
        let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
        let package = JavaFile::parse(&text).ok().and_then(|f| f.package);
        let methods = extract_methods(&SourceFile::new(&rel, text.as_str()))
            .map_err(|e| failed(stage)(format!("{}: {e}", rel.display())))?;
        for m in methods.iter().filter(|m| !m.is_constructor()) {
            let qualified_class = match &package {
                Some(p) => format!("{p}.{}", m.class_name),
                None => m.class_name.clone(),
            };
            let constructors = methods
                .iter()
                .filter(|c| c.is_constructor() && c.class_name == m.class_name)
                .map(|c| c.signature.clone())
                .collect();
            out.push(ProjectMethod {
                id: format!("{qualified_class}#{}:{}", m.name, m.line_range.start),
                path: rel.clone(),
                qualified_class,
                method: m.clone(),
                constructors,
            });
        }
    }
    Ok(out)
}

/// Gold labels from the version pair: a method is defective when its text
/// differs in the fixed version. Methods are matched by class, name and
/// position among same-named methods.
fn gold_labels(defective: &[ProjectMethod], fixed: &[ProjectMethod]) -> Vec<Option<u8>> {
    let key = |methods: &[ProjectMethod]| -> Vec<(String, String, usize)> {
        let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
        methods
            .iter()
            .map(|m| {
                let k = (m.qualified_class.clone(), m.method.name.clone());
                let n = seen.entry(k.clone()).or_default();
                *n += 1;
                (k.0, k.1, *n)
            })
            .collect()
    };
    let fixed_keys: BTreeMap<(String, String, usize), &ProjectMethod> = key(fixed).into_iter().zip(fixed).collect();
    key(defective)
        .into_iter()
        .zip(defective)
        .map(|(k, m)| {
            fixed_keys
                .get(&k)
                .map(|f| u8::from(normalized(&f.method.text) != normalized(&m.method.text)))
        })
        .collect()
}

fn defective_project(cfg: &PipelineConfig) -> Result<&Path, ConfigError> {
    required_input(&cfg.project.defective, "project.defective")
}

fn fixed_project(cfg: &PipelineConfig) -> Result<&Path, ConfigError> {
    required_input(&cfg.project.fixed, "project.fixed")
}

// ----- detect -----------------------------------------------------------

fn load_records(path: &Path, field: &str, stage: &'static str) -> Result<Vec<(MethodRecord, Method)>, PipelineError> {
    let records = dataset::load(path).map_err(failed(stage))?;
    if records.is_empty() {
        return Err(ConfigError::new(field, format!("{} holds no records", path.display())).into());
    }
    records
        .into_iter()
        .map(|r| {
            let m = r.parse().map_err(|e| failed(stage)(format!("record {}: {e}", r.id)))?;
            Ok((r, m))
        })
        .collect()
}

fn detector_model(cfg: &PipelineConfig, summary: &mut StageSummary) -> Result<DetectorModel, PipelineError> {
    let stage = "detect";
    if let Some(path) = &cfg.models.detector {
        return Ok(read_json(path, schema::DETECTOR_MODEL).map_err(failed(stage))?.payload);
    }
    let data = required_input(&cfg.data.detector_train, "data.detector_train")?;
    let pairs: Vec<(Method, bool)> = load_records(data, "data.detector_train", stage)?
        .into_iter()
        .map(|(r, m)| (m, r.is_defective()))
        .collect();
    let mut tc = cfg.detector.clone();
    tc.seed = cfg.stage_seed(Stage::Detect);
    let (model, report) = train_detector(&pairs, &tc).map_err(failed(stage))?;
    let model_path = output(cfg, files::DETECTOR_MODEL);
    let report_path = output(cfg, files::DETECTOR_REPORT);
    write_json(&model_path, schema::DETECTOR_MODEL, stage, &model).map_err(failed(stage))?;
    write_json(&report_path, schema::TRAINING_REPORT, stage, &report).map_err(failed(stage))?;
    summary.notes.push(format!(
        "detector trained: best validation accuracy {:.3} at epoch {}",
        report.best_val_accuracy, report.best_epoch
    ));
    summary.artifacts.extend([model_path, report_path]);
    Ok(model)
}

/// Train (or load) the detector and classify every project method.
pub fn detect(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    let stage = "detect";
    cfg.validate()?;
    let defective = defective_project(cfg)?;
    let mut summary = StageSummary {
        stage: stage.into(),
        artifacts: Vec::new(),
        notes: Vec::new(),
    };
    let model = detector_model(cfg, &mut summary)?;
    let methods = project_methods(defective, &cfg.project.source_roots)?;
    let labels = match &cfg.project.fixed {
        Some(fixed) if fixed.is_dir() => gold_labels(&methods, &project_methods(fixed, &cfg.project.source_roots)?),
        _ => vec![None; methods.len()],
    };
    let mut records = Vec::with_capacity(methods.len());
    for (m, label) in methods.iter().zip(labels) {
        let p = predict_defect(&model, &m.method).map_err(|e| failed(stage)(format!("{}: {e}", m.id)))?;
        records.push(PredictionRecord {
            method_id: m.id.clone(),
            prob_defective: p.prob_defective,
            predicted_defective: p.is_defective(),
            label,
        });
    }
    let flagged = records.iter().filter(|r| r.predicted_defective).count();
    summary.notes.push(format!("{flagged} of {} methods predicted defective", records.len()));
    let path = output(cfg, files::PREDICTIONS);
    write_jsonl(&path, &records).map_err(failed(stage))?;
    summary.artifacts.push(path);
    record_stage(cfg, &summary, Some(cfg.stage_seed(Stage::Detect)))?;
    Ok(summary)
}

// ----- locate -------------------------------------------------------------

fn locator_model(cfg: &PipelineConfig, summary: &mut StageSummary) -> Result<LocatorModel, PipelineError> {
    let stage = "locate";
    if let Some(path) = &cfg.models.locator {
        return Ok(read_json(path, schema::LOCATOR_MODEL).map_err(failed(stage))?.payload);
    }
    let (value, field) = match &cfg.data.locator_train {
        Some(_) => (&cfg.data.locator_train, "data.locator_train"),
        None => (&cfg.data.detector_train, "data.detector_train"),
    };
    let data = required_input(value, field)?;
    let samples: Vec<LocatorSample> = load_records(data, field, stage)?
        .into_iter()
        .filter(|(r, _)| r.is_defective() && !r.defect_lines.is_empty())
        .map(|(r, method)| LocatorSample {
            id: r.id,
            method,
            defect_lines: r.defect_lines,
        })
        .collect();
    if samples.is_empty() {
        return Err(ConfigError::new(field, "no defective records with defect lines").into());
    }
    let mut tc = cfg.locator.clone();
    tc.seed = cfg.stage_seed(Stage::Locate);
    let (model, report) = train_locator(&samples, &tc).map_err(failed(stage))?;
    let model_path = output(cfg, files::LOCATOR_MODEL);
    let report_path = output(cfg, files::LOCATOR_REPORT);
    write_json(&model_path, schema::LOCATOR_MODEL, stage, &model).map_err(failed(stage))?;
    write_json(&report_path, schema::TRAINING_REPORT, stage, &report).map_err(failed(stage))?;
    summary.notes.push(format!(
        "locator trained: best validation top-1 {:.3} at epoch {}",
        report.best_val_top1, report.best_epoch
    ));
    summary.artifacts.extend([model_path, report_path]);
    Ok(model)
}

/// Rank the statements of every method the detector flagged.
pub fn locate(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    let stage = "locate";
    cfg.validate()?;
    let defective = defective_project(cfg)?;
    let predictions: Vec<PredictionRecord> =
        read_jsonl(&required(cfg, files::PREDICTIONS, "detect")?).map_err(failed(stage))?;
    let mut summary = StageSummary {
        stage: stage.into(),
        artifacts: Vec::new(),
        notes: Vec::new(),
    };
    let model = locator_model(cfg, &mut summary)?;
    let methods: BTreeMap<String, ProjectMethod> = project_methods(defective, &cfg.project.source_roots)?
        .into_iter()
        .map(|m| (m.id.clone(), m))
        .collect();
    let mut records = Vec::new();
    for p in predictions.iter().filter(|p| p.predicted_defective) {
        let m = methods
            .get(&p.method_id)
            .ok_or_else(|| failed(stage)(format!("method {} is not in the project", p.method_id)))?;
        let loc = locate_defects(&model, &m.method, cfg.locate.top_statements)
            .map_err(|e| failed(stage)(format!("{}: {e}", m.id)))?;
        records.push(LocationRecord {
            method_id: m.id.clone(),
            indices: loc.statement_indices,
            scores: loc.scores,
        });
    }
    let path = output(cfg, files::LOCATIONS);
    write_jsonl(&path, &records).map_err(failed(stage))?;
    summary.artifacts.push(path);
    record_stage(cfg, &summary, Some(cfg.stage_seed(Stage::Locate)))?;
    Ok(summary)
}

// ----- decoder ----------------------------------------------------------

/// Fit the toy decoder on the prompt/target corpus.
pub fn train_decoder_stage(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    let stage = "train-decoder";
    cfg.validate()?;
    let corpus_path = required_input(&cfg.data.decoder_corpus, "data.decoder_corpus")?;
    let corpus: Vec<DecoderExample> = read_jsonl(corpus_path).map_err(failed(stage))?;
    if corpus.is_empty() {
        return Err(ConfigError::new("data.decoder_corpus", "corpus is empty").into());
    }
    let texts: Vec<&str> = corpus
        .iter()
        .flat_map(|e| [e.prompt.as_str(), e.target.as_str()])
        .collect();
    let vocab = ToyDecoder::build_vocab(&texts, cfg.decoder.max_vocab);
    let seed = cfg.stage_seed(Stage::TrainDecoder);
    let mut model = ToyDecoder::new(cfg.decoder.clone(), vocab, seed).map_err(failed(stage))?;
    let mut tc = cfg.decoder_training.clone();
    tc.seed = seed;
    let report = train_decoder(&mut model, &corpus, &tc).map_err(failed(stage))?;
    let model_path = output(cfg, files::DECODER_MODEL);
    let report_path = output(cfg, files::DECODER_REPORT);
    write_json(&model_path, schema::DECODER_MODEL, stage, &model).map_err(failed(stage))?;
    write_json(&report_path, schema::TRAINING_REPORT, stage, &report).map_err(failed(stage))?;
    let summary = StageSummary {
        stage: stage.into(),
        artifacts: vec![model_path, report_path],
        notes: vec![format!(
            "final epoch loss {:.4}",
            report.epoch_losses.last().copied().unwrap_or(f64::NAN)
        )],
    };
    record_stage(cfg, &summary, Some(seed))?;
    Ok(summary)
}

fn load_decoder(cfg: &PipelineConfig, stage: &'static str) -> Result<ToyDecoder, PipelineError> {
    let path = match &cfg.models.decoder {
        Some(p) => p.clone(),
        None => required(cfg, files::DECODER_MODEL, "train-decoder")?,
    };
    Ok(read_json(&path, schema::DECODER_MODEL).map_err(failed(stage))?.payload)
}

// ----- profile -------------------------------------------------------------

/// Scores a head by how many profiling prompts yield at least one candidate
/// that triggers the configured project's defect when only that head is
/// steered.
pub struct TriggerScorer<'a> {
    pub cfg: &'a PipelineConfig,
    pub defective: &'a Path,
    pub fixed: &'a Path,
    pub seed: u64,
}

impl TriggerScorer<'_> {
    /// Steered candidates for one prompt that parse as test methods.
    fn candidates(&self, model: &ToyDecoder, head: HeadId, item: &ProfilingItem, index: usize, alpha: f64) -> Result<Vec<CandidateTest>, String> {
        let ids = model.encode(&item.prompt);
        let spec = SteeringSpec::new(item.highlighted.iter().copied(), alpha).map_err(|e| e.to_string())?;
        let seed = derive_seed(self.seed, &[head.layer as u64, head.head as u64, index as u64]);
        let generated = generate_candidates(
            model,
            &ids,
            &HeadSet::single(head),
            &spec,
            self.cfg.profile.candidates_per_item,
            seed,
            &self.cfg.steering.generation,
        )
        .map_err(|e| e.to_string())?;
        Ok(generated
            .iter()
            .filter_map(|g| extract_candidate(&g.text).ok())
            .enumerate()
            .filter_map(|(i, t)| CandidateTest::new(format!("{}-{i}", item.id), t).ok())
            .collect())
    }
}

impl HeadScorer for TriggerScorer<'_> {
    fn score(&self, model: &ToyDecoder, head: HeadId, set: &ProfilingSet, alpha: f64) -> Result<f64, String> {
        let mut triggered = 0usize;
        for (index, item) in set.items.iter().enumerate() {
            let tests = self.candidates(model, head, item, index, alpha)?;
            if tests.is_empty() {
                continue;
            }
            let outcomes = validate_candidates(&tests, &item.id, self.defective, self.fixed, &self.cfg.validation, None)
                .map_err(|e| e.to_string())?;
            let mut hit = false;
            for o in outcomes {
                match o {
                    Ok(o) => hit |= o.verdict.classification == crate::validator::Classification::TP,
                    Err(e) if candidate_level(&e) => {}
                    Err(e) => return Err(e.to_string()),
                }
            }
            triggered += usize::from(hit);
        }
        Ok(triggered as f64)
    }
}

/// Errors that only disqualify one candidate (as opposed to the whole run).
fn candidate_level(e: &ValidatorError) -> bool {
    matches!(
        e,
        ValidatorError::EmptyTokenSet
            | ValidatorError::InvalidCandidate(_)
            | ValidatorError::UnparseableTarget { .. }
            | ValidatorError::BelowMinimumSimilarity { .. }
    )
}

fn profiling_set(cfg: &PipelineConfig) -> Result<ProfilingSet, PipelineError> {
    let path = required_input(&cfg.data.profiling_set, "data.profiling_set")?;
    let items: Vec<ProfilingItem> = read_jsonl(path).map_err(failed("profile"))?;
    if items.is_empty() {
        return Err(ConfigError::new("data.profiling_set", "profiling set is empty").into());
    }
    Ok(ProfilingSet { items }.truncated(cfg.profile.set_size))
}

/// Score every head steered alone and keep the best `top_k`.
pub fn profile(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    let stage = "profile";
    cfg.validate()?;
    let set = profiling_set(cfg)?;
    let model = load_decoder(cfg, stage)?;
    let before = model.checksum();
    let seed = cfg.stage_seed(Stage::Profile);
    let report = match cfg.profile.scorer {
        ScorerKind::Likelihood => profile_heads(&model, &set, cfg.steering.alpha, &LikelihoodScorer, cfg.steering.top_k),
        ScorerKind::Trigger => {
            let scorer = TriggerScorer {
                cfg,
                defective: defective_project(cfg)?,
                fixed: fixed_project(cfg)?,
                seed,
            };
            profile_heads(&model, &set, cfg.steering.alpha, &scorer, cfg.steering.top_k)
        }
    }
    .map_err(failed(stage))?;
    if model.checksum() != before {
        return Err(failed(stage)("decoder parameters changed during profiling"));
    }
    let path = output(cfg, files::PROFILE);
    write_json(&path, schema::PROFILE, stage, &report).map_err(failed(stage))?;
    let heads: Vec<String> = report.selected.heads().iter().map(HeadId::to_string).collect();
    let summary = StageSummary {
        stage: stage.into(),
        artifacts: vec![path],
        notes: vec![format!("selected heads {}", heads.join(" ")), format!("decoder checksum {before}")],
    };
    record_stage(cfg, &summary, Some(seed))?;
    Ok(summary)
}

// ----- generate ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub method_id: String,
    pub text: String,
    pub highlighted: BTreeSet<usize>,
    pub defect_lines: BTreeSet<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    /// Method the candidate targets.
    pub defect_id: String,
    /// Raw decoded output.
    pub text: String,
    /// The extracted test method, when the output contains one.
    pub test: Option<String>,
    pub steered_heads: Vec<HeadId>,
    pub steering_disabled: bool,
    pub finished: bool,
}

/// File-system-safe form of a method id.
fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn prompt_spec(cfg: &PipelineConfig, m: &ProjectMethod, defect_lines: BTreeSet<usize>) -> Result<PromptSpec, PipelineError> {
    let p = &cfg.prompt;
    let mut spec = PromptSpec::new(m.method.class_name.clone(), m.constructors.clone(), m.method.clone());
    spec.language_name = p.language.clone();
    spec.comment_prefix = p.comment_prefix.clone();
    spec.task_template = p.task_template.clone();
    spec.marker = p.marker.clone();
    spec.highlight_marker = p.highlight_marker;
    spec.defect_lines = defect_lines;
    if let Some(path) = &p.template {
        spec.template = PromptTemplate::load(path).map_err(|e| ConfigError::new("prompt.template", e.to_string()))?;
    }
    Ok(spec)
}

/// The prompt the generate stage builds for `method` with `statements`
/// marked defective. Exposed so training corpora can be built the same way.
pub fn method_prompt(cfg: &PipelineConfig, method: &ProjectMethod, statements: &[usize]) -> Result<PromptRecord, PipelineError> {
    let defect_lines: BTreeSet<usize> = statements
        .iter()
        .filter_map(|&i| method.method.statements.get(i))
        .flat_map(|s| s.line_range.lines())
        .collect();
    let spec = prompt_spec(cfg, method, defect_lines.clone())?;
    let prompt = build_prompt(&spec).map_err(|e| failed("generate")(format!("{}: {e}", method.id)))?;
    Ok(PromptRecord {
        method_id: method.id.clone(),
        text: prompt.text,
        highlighted: prompt.token_positions_of_defect,
        defect_lines,
        warnings: prompt.warnings,
    })
}

/// Build a steered prompt for every located method and sample candidates.
pub fn generate(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    let stage = "generate";
    cfg.validate()?;
    let defective = defective_project(cfg)?;
    let locations: Vec<LocationRecord> =
        read_jsonl(&required(cfg, files::LOCATIONS, "locate")?).map_err(failed(stage))?;
    let profile: ProfilingReport = read_json(&required(cfg, files::PROFILE, "profile")?, schema::PROFILE)
        .map_err(failed(stage))?
        .payload;
    let model = load_decoder(cfg, stage)?;
    let before = model.checksum();
    let methods: BTreeMap<String, ProjectMethod> = project_methods(defective, &cfg.project.source_roots)?
        .into_iter()
        .map(|m| (m.id.clone(), m))
        .collect();
    let alpha = cfg.steering.alpha;
    let disabled = alpha == 1.0;
    let seed = cfg.stage_seed(Stage::Generate);
    let mut notes = Vec::new();
    if disabled {
        notes.push("steering disabled (alpha = 1)".to_string());
    }
    let mut prompts = Vec::new();
    let mut candidates = Vec::new();
    for (k, loc) in locations.iter().enumerate() {
        let m = methods
            .get(&loc.method_id)
            .ok_or_else(|| failed(stage)(format!("method {} is not in the project", loc.method_id)))?;
        let prompt = method_prompt(cfg, m, &loc.indices)?;
        let ids = model.encode(&prompt.text);
        let mut heads = profile.selected.clone();
        if prompt.highlighted.is_empty() && !disabled {
            notes.push(format!("{}: nothing to highlight, generated unsteered", m.id));
            heads = HeadSet::empty();
        }
        let spec = SteeringSpec::new(prompt.highlighted.iter().copied(), alpha).map_err(failed(stage))?;
        let generated = generate_candidates(
            &model,
            &ids,
            &heads,
            &spec,
            cfg.steering.candidates,
            derive_seed(seed, &[k as u64]),
            &cfg.steering.generation,
        )
        .map_err(|e| failed(stage)(format!("{}: {e}", m.id)))?;
        let base = slug(&m.id);
        for g in generated {
            candidates.push(CandidateRecord {
                id: format!("{base}-{:03}", g.index),
                defect_id: m.id.clone(),
                test: extract_candidate(&g.text).ok(),
                text: g.text,
                steered_heads: g.steered_heads,
                steering_disabled: disabled,
                finished: g.finished,
            });
        }
        prompts.push(prompt);
    }
    if model.checksum() != before {
        return Err(failed(stage)("decoder parameters changed during generation"));
    }
    let extracted = candidates.iter().filter(|c| c.test.is_some()).count();
    notes.push(format!("{extracted} of {} candidates contain a test method", candidates.len()));
    notes.push(format!("decoder checksum {before}"));
    let prompts_path = output(cfg, files::PROMPTS);
    let candidates_path = output(cfg, files::CANDIDATES);
    write_jsonl(&prompts_path, &prompts).map_err(failed(stage))?;
    write_jsonl(&candidates_path, &candidates).map_err(failed(stage))?;
    let summary = StageSummary {
        stage: stage.into(),
        artifacts: vec![prompts_path, candidates_path],
        notes,
    };
    record_stage(cfg, &summary, Some(seed))?;
    Ok(summary)
}

// ----- validate ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub candidate_id: String,
    pub plan: Option<InjectionPlan>,
    /// Why the candidate was not executed.
    pub error: Option<String>,
}

fn not_executed(c: &CandidateRecord) -> Verdict {
    Verdict {
        candidate_id: c.id.clone(),
        defect_id: c.defect_id.clone(),
        defective_result: RunResult::CompileError,
        fixed_result: RunResult::CompileError,
        classification: classify(RunResult::CompileError, RunResult::CompileError),
    }
}

/// Inject and run every candidate against both versions.
pub fn validate(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    let stage = "validate";
    cfg.validate()?;
    let defective = defective_project(cfg)?;
    let fixed = fixed_project(cfg)?;
    let candidates: Vec<CandidateRecord> =
        read_jsonl(&required(cfg, files::CANDIDATES, "generate")?).map_err(failed(stage))?;
    let artifacts_dir = output(cfg, files::VALIDATION_DIR);
    if artifacts_dir.exists() {
        std::fs::remove_dir_all(&artifacts_dir).map_err(failed(stage))?;
    }
    std::fs::create_dir_all(&artifacts_dir).map_err(failed(stage))?;

    let mut by_defect: BTreeMap<&str, Vec<&CandidateRecord>> = BTreeMap::new();
    for c in &candidates {
        by_defect.entry(&c.defect_id).or_default().push(c);
    }
    let mut verdicts: BTreeMap<String, Verdict> = BTreeMap::new();
    let mut injections: BTreeMap<String, InjectionRecord> = BTreeMap::new();
    let vcfg: &ValidationConfig = &cfg.validation;
    for (defect, group) in by_defect {
        let mut tests = Vec::new();
        for c in group {
            let parsed = match &c.test {
                Some(t) => CandidateTest::new(c.id.clone(), t.clone()).map_err(|e| e.to_string()),
                None => Err("no test method in the output".to_string()),
            };
            match parsed {
                Ok(t) => tests.push(t),
                Err(error) => {
                    verdicts.insert(c.id.clone(), not_executed(c));
                    injections.insert(c.id.clone(), InjectionRecord {
                        candidate_id: c.id.clone(),
                        plan: None,
                        error: Some(error),
                    });
                }
            }
        }
        let dir = artifacts_dir.join(slug(defect));
        let outcomes = validate_candidates(&tests, defect, defective, fixed, vcfg, Some(&dir)).map_err(failed(stage))?;
        for (t, outcome) in tests.iter().zip(outcomes) {
            let c = candidates.iter().find(|c| c.id == t.id).expect("candidate ids are unique");
            match outcome {
                Ok(o) => {
                    verdicts.insert(t.id.clone(), o.verdict);
                    injections.insert(t.id.clone(), InjectionRecord {
                        candidate_id: t.id.clone(),
                        plan: Some(o.plan),
                        error: None,
                    });
                }
                Err(e) if candidate_level(&e) => {
                    verdicts.insert(t.id.clone(), not_executed(c));
                    injections.insert(t.id.clone(), InjectionRecord {
                        candidate_id: t.id.clone(),
                        plan: None,
                        error: Some(e.to_string()),
                    });
                }
                Err(e) => return Err(failed(stage)(format!("{}: {e}", t.id))),
            }
        }
    }
    // Keep the candidates' order.
    let verdicts: Vec<Verdict> = candidates.iter().filter_map(|c| verdicts.remove(&c.id)).collect();
    let injections: Vec<InjectionRecord> = candidates.iter().filter_map(|c| injections.remove(&c.id)).collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for v in &verdicts {
        *counts.entry(format!("{:?}", v.classification)).or_default() += 1;
    }
    let verdicts_path = output(cfg, files::VERDICTS);
    let injections_path = output(cfg, files::INJECTIONS);
    write_jsonl(&verdicts_path, &verdicts).map_err(failed(stage))?;
    write_jsonl(&injections_path, &injections).map_err(failed(stage))?;
    let summary = StageSummary {
        stage: stage.into(),
        artifacts: vec![verdicts_path, injections_path, artifacts_dir],
        notes: vec![format!("verdicts {counts:?}")],
    };
    record_stage(cfg, &summary, None)?;
    Ok(summary)
}

// ----- metrics ---------------------------------------------------------------

/// Detection metrics from the predictions and trigger statistics from the
/// verdicts.
pub fn metrics(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    let stage = "metrics";
    let predictions: Vec<PredictionRecord> =
        read_jsonl(&required(cfg, files::PREDICTIONS, "detect")?).map_err(failed(stage))?;
    let verdicts: Vec<Verdict> = read_jsonl(&required(cfg, files::VERDICTS, "validate")?).map_err(failed(stage))?;
    let report = build_report(&predictions, &verdicts).map_err(failed(stage))?;
    let path = output(cfg, files::METRICS);
    write_json(&path, schema::METRICS, stage, &report).map_err(failed(stage))?;
    let summary = StageSummary {
        stage: stage.into(),
        artifacts: vec![path],
        notes: vec![format!(
            "trigger count {}, trigger precision {}",
            report.trigger_count,
            report.trigger_precision.map_or("n/a".into(), |p| format!("{p:.3}"))
        )],
    };
    record_stage(cfg, &summary, None)?;
    Ok(summary)
}

/// Every stage in order; the decoder is trained only when no checkpoint is
/// configured.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<StageSummary>, PipelineError> {
    cfg.validate()?;
    let mut out = vec![detect(cfg)?, locate(cfg)?];
    if cfg.models.decoder.is_none() {
        out.push(train_decoder_stage(cfg)?);
    }
    out.push(profile(cfg)?);
    out.push(generate(cfg)?);
    out.push(validate(cfg)?);
    out.push(metrics(cfg)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::from(ConfigError::new("x", "y")).exit_code(), 2);
        let missing = PipelineError::MissingArtifact {
            stage: "detect",
            path: PathBuf::from("p"),
        };
        assert_eq!(missing.exit_code(), 3);
    }

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("com.x.Calc#last:17"), "com.x.Calc_last_17");
    }

    #[test]
    fn detect_on_an_empty_dataset_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("empty.jsonl");
        std::fs::write(&data, "").unwrap();
        std::fs::create_dir_all(dir.path().join("p")).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.output_dir = dir.path().join("out");
        cfg.project.defective = Some(dir.path().join("p"));
        cfg.data.detector_train = Some(data);
        match detect(&cfg) {
            Err(PipelineError::Config(e)) => assert_eq!(e.field, "data.detector_train"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn later_stages_report_missing_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.output_dir = dir.path().to_path_buf();
        cfg.project.defective = Some(dir.path().to_path_buf());
        assert!(matches!(locate(&cfg), Err(PipelineError::MissingArtifact { stage: "detect", .. })));
        assert!(matches!(metrics(&cfg), Err(PipelineError::MissingArtifact { stage: "detect", .. })));
    }

    #[test]
    fn gold_labels_follow_text_changes() {
        let dir = tempfile::tempdir().unwrap();
        let write = |v: &str, body: &str| {
            let p = dir.path().join(v).join("src/main/java/a/C.java");
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, format!("package a;\nclass C {{\n  C() {{ }}\n  int f() {{ return 1; }}\n  int g() {{ {body} }}\n}}\n")).unwrap();
        };
        write("d", "return x[n];");
        write("f", "return x[n - 1];");
        let roots = [PathBuf::from("src/main/java")];
        let d = project_methods(&dir.path().join("d"), &roots).unwrap();
        let f = project_methods(&dir.path().join("f"), &roots).unwrap();
        assert_eq!(d.iter().map(|m| m.id.as_str()).collect::<Vec<_>>(), vec!["a.C#f:4", "a.C#g:5"]);
        assert_eq!(d[0].constructors, vec!["C()"]);
        assert_eq!(gold_labels(&d, &f), vec![Some(0), Some(1)]);
    }
}
