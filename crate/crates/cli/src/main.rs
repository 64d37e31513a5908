use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdae_lq::parallel::Execution;
use pdae_lq_cli::config::{self, Setup};
use pdae_lq_cli::run::{self, Diagnostics};
use pdae_lq_cli::{output, verify, CliError, CliResult};

#[derive(Parser)]
#[command(name = "pdae-lq", version, about = "LQ-optimal feedback for index-0 descriptor systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the feedback, simulate and write artifacts.
    Run(Source),
    /// Run the invariant checks and report measured values against tolerances.
    Verify(Source),
}

#[derive(Args)]
struct Source {
    /// Built-in scenario (paper-example, scalar, scalar-dynamic-weight, lqr-reduction).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run per-node work on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Source {
    fn label(&self) -> Option<String> {
        self.scenario
            .clone()
            .or_else(|| self.config.as_ref().map(|p| p.display().to_string()))
    }

    fn setup(&self) -> CliResult<Setup> {
        let mut setup = match (&self.scenario, &self.config) {
            (Some(name), _) => config::scenario(name)?,
            (None, Some(path)) => {
                let base = path.parent().unwrap_or(Path::new("."));
                config::load(path)?.resolve(base)?
            }
            (None, None) => return Err(CliError::Config("either --scenario or --config is required".into())),
        };
        if self.sequential {
            setup.options.exec = Execution::Sequential;
        }
        if let Some(dir) = &self.output {
            setup.output_dir = dir.clone();
        }
        Ok(setup)
    }

    fn fallback_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn run_command(src: &Source) -> (PathBuf, CliResult<Diagnostics>) {
    let setup = match src.setup() {
        Ok(s) => s,
        Err(e) => return (src.fallback_dir(), Err(e)),
    };
    let dir = setup.output_dir.clone();
    let result = run::execute(&setup).and_then(|res| {
        run::write_artifacts(&dir, &setup, &res)?;
        println!("{}", serde_json::to_string_pretty(&res.summary)?);
        println!("artifacts written to {}", dir.display());
        Ok(Diagnostics::success(&res.pipeline, &setup.problem.name))
    });
    (dir, result)
}

fn verify_command(src: &Source) -> (PathBuf, CliResult<Diagnostics>) {
    let setup = match src.setup() {
        Ok(s) => s,
        Err(e) => return (src.fallback_dir(), Err(e)),
    };
    let dir = setup.output_dir.clone();
    let result = verify::verify(&setup).and_then(|(res, report)| {
        std::fs::create_dir_all(&dir)?;
        output::write_json(&dir.join("verify.json"), &report)?;
        for line in report.lines() {
            println!("{line}");
        }
        println!("verify: {} of {} checks passed", report.passed, report.checks.len());
        if report.failed > 0 {
            return Err(CliError::ChecksFailed { failed: report.failed });
        }
        Ok(Diagnostics::success(&res.pipeline, &setup.problem.name))
    });
    (dir, result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (src, (dir, result)) = match &cli.command {
        Command::Run(src) => (src, run_command(src)),
        Command::Verify(src) => (src, verify_command(src)),
    };
    let (diagnostics, code) = match &result {
        Ok(d) => (d.clone(), 0),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            (Diagnostics::failure(e, src.label().as_deref()), e.exit_code())
        }
    };
    let written = std::fs::create_dir_all(&dir)
        .map_err(CliError::from)
        .and_then(|_| output::write_json(&dir.join("diagnostics.json"), &diagnostics));
    if let Err(e) = written {
        eprintln!("error [{}]: could not write diagnostics: {e}", e.kind());
    }
    ExitCode::from(code)
}
