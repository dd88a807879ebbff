//! Command-line driver for the detect → locate → profile → generate →
//! validate → metrics pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use steertest::config::{ConfigError, PipelineConfig};
use steertest::pipeline::{self, PipelineError, StageSummary};

#[derive(Debug, Parser)]
#[command(name = "steertest", version, about = "Defect detection, localization and steered unit-test generation")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train or load the detector and classify every project method.
    Detect,
    /// Rank the statements of methods predicted defective.
    Locate,
    /// Fit the decoder on the prompt/target corpus.
    TrainDecoder,
    /// Score each attention head and select the top k.
    Profile,
    /// Build steered prompts and sample candidate tests.
    Generate,
    /// Inject candidates and run them on both versions.
    Validate,
    /// Compute detection and trigger metrics.
    Metrics,
    /// Run every stage in order.
    Pipeline,
}

/// Configuration file and overrides; every flag can also be set through
/// the environment variable shown in `--help`.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true, env = "STEERTEST_CONFIG")]
    config: Option<PathBuf>,
    /// Directory for stage artifacts.
    #[arg(long, global = true, env = "STEERTEST_OUTPUT")]
    output: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true, env = "STEERTEST_SEED")]
    seed: Option<u64>,
    /// Defective project version.
    #[arg(long, global = true, env = "STEERTEST_DEFECTIVE")]
    defective: Option<PathBuf>,
    /// Fixed project version.
    #[arg(long, global = true, env = "STEERTEST_FIXED")]
    fixed: Option<PathBuf>,
    /// Steering strength; 1 disables steering.
    #[arg(long, global = true, env = "STEERTEST_ALPHA")]
    alpha: Option<f64>,
    /// Number of heads kept by profiling.
    #[arg(long, global = true, env = "STEERTEST_TOP_K")]
    top_k: Option<usize>,
    /// Candidates generated per located method.
    #[arg(long, global = true, env = "STEERTEST_CANDIDATES")]
    candidates: Option<usize>,
    /// Weight of the detector's consistency term.
    #[arg(long, global = true, env = "STEERTEST_BETA")]
    beta: Option<f64>,
    /// Detector perturbation size.
    #[arg(long, global = true, env = "STEERTEST_EPSILON")]
    epsilon: Option<f64>,
    /// Test runner executable.
    #[arg(long, global = true, env = "STEERTEST_RUNNER")]
    runner: Option<String>,
    /// Runner argument template.
    #[arg(long, global = true, env = "STEERTEST_RUNNER_TEMPLATE")]
    runner_template: Option<String>,
    /// Runner timeout in seconds.
    #[arg(long, global = true, env = "STEERTEST_TIMEOUT")]
    timeout: Option<f64>,
}

impl Overrides {
    fn resolve(self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        // Flags are relative to the working directory, like any CLI path.
        if let Some(v) = self.output {
            cfg.output_dir = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.defective {
            cfg.project.defective = Some(v);
        }
        if let Some(v) = self.fixed {
            cfg.project.fixed = Some(v);
        }
        if let Some(v) = self.alpha {
            cfg.steering.alpha = v;
        }
        if let Some(v) = self.top_k {
            cfg.steering.top_k = v;
        }
        if let Some(v) = self.candidates {
            cfg.steering.candidates = v;
        }
        if let Some(v) = self.beta {
            cfg.detector.beta = v;
        }
        if let Some(v) = self.epsilon {
            cfg.detector.epsilon = v;
        }
        if let Some(v) = self.runner {
            cfg.validation.runner.runner = v;
        }
        if let Some(v) = self.runner_template {
            cfg.validation.runner.template = v;
        }
        if let Some(v) = self.timeout {
            cfg.validation.runner.timeout_secs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report(summary: &StageSummary) {
    println!("[{}]", summary.stage);
    for note in &summary.notes {
        println!("  {note}");
    }
    for a in &summary.artifacts {
        println!("  wrote {}", a.display());
    }
}

fn run(command: Command, cfg: &PipelineConfig) -> Result<Vec<StageSummary>, PipelineError> {
    Ok(match command {
        Command::Detect => vec![pipeline::detect(cfg)?],
        Command::Locate => vec![pipeline::locate(cfg)?],
        Command::TrainDecoder => vec![pipeline::train_decoder_stage(cfg)?],
        Command::Profile => vec![pipeline::profile(cfg)?],
        Command::Generate => vec![pipeline::generate(cfg)?],
        Command::Validate => vec![pipeline::validate(cfg)?],
        Command::Metrics => vec![pipeline::metrics(cfg)?],
        Command::Pipeline => pipeline::run_pipeline(cfg)?,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.overrides.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(PipelineError::from(e).exit_code());
        }
    };
    match run(cli.command, &cfg) {
        Ok(summaries) => {
            summaries.iter().for_each(report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
