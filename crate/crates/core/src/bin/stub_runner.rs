//! Stand-in test runner: exit 0 pass, 1 fail, 2 compile error; hangs on
//! request so callers can exercise their timeout handling.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use steertest::validator::stub::{judge, StubOutcome};

#[derive(Debug, Parser)]
#[command(version, about = "Deterministic stand-in for a JUnit runner")]
struct Args {
    /// Project root holding src/main/java, src/test/java and stub-oracle.toml.
    #[arg(long)]
    project: PathBuf,
    /// Fully qualified test class.
    #[arg(long)]
    class: String,
    /// Test method to run.
    #[arg(long)]
    method: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let outcome = judge(&args.project, &args.class, &args.method);
    match &outcome {
        StubOutcome::Pass => println!("PASS {}#{}", args.class, args.method),
        StubOutcome::Fail(why) => println!("FAIL {}#{}: {why}", args.class, args.method),
        StubOutcome::CompileError(why) => eprintln!("error: {why}"),
        StubOutcome::Hang => loop {
            std::thread::sleep(Duration::from_secs(3600));
        },
    }
    ExitCode::from(outcome.exit_code() as u8)
}
