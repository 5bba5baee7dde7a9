use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use longsurf::pipeline::{
    cmd_lme, cmd_metrics, cmd_phantom, cmd_template, cmd_validate, Manifest, PipelineError,
    PipelineResult, RunConfig,
};

/// Longitudinal cortical surface analysis.
///
/// Exit status: 0 success, 1 invalid input, 2 failure while running.
#[derive(Debug, Parser)]
#[command(name = "longsurf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a phantom cohort and its manifest.
    Phantom {
        /// Cohort spec JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the cohort seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-scan distance/intersection metrics and per-subject consistency.
    Metrics(RunArgs),
    /// Within-subject templates and re-deformed visit surfaces.
    Template(RunArgs),
    /// Vertex-wise mixed-model analysis of cortical thickness.
    Lme {
        #[command(flatten)]
        run: RunArgs,
        /// Directory of `<subject>/visit-XX_thickness.csv` maps.
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// Check a manifest and configuration without running anything.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Run configuration JSON; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config, else `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores); overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Sampling seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> PipelineResult<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

impl RunArgs {
    fn resolve(&self) -> PipelineResult<(Manifest, RunConfig, PathBuf)> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let manifest = Manifest::load(&self.manifest)?;
        Ok((manifest, cfg, out))
    }
}

fn run(cmd: Command) -> PipelineResult<()> {
    match cmd {
        Command::Phantom { config, out, seed } => {
            let manifest = cmd_phantom(config.as_deref(), &out, seed)?;
            println!("{}", manifest.display());
        }
        Command::Metrics(args) => {
            let (m, cfg, out) = args.resolve()?;
            let report = cmd_metrics(&m, &cfg, &out)?;
            let failed = report
                .subjects
                .iter()
                .filter(|s| !s.errors.is_empty())
                .count();
            println!(
                "{} scans, {} subjects ({failed} with errors) -> {}",
                report.scans.len(),
                report.subjects.len(),
                out.display()
            );
        }
        Command::Template(args) => {
            let (m, cfg, out) = args.resolve()?;
            let report = cmd_template(&m, &cfg, &out)?;
            let failed = report.subjects.iter().filter(|s| s.error.is_some()).count();
            println!(
                "{} templates ({failed} failed) -> {}",
                report.subjects.len(),
                out.display()
            );
        }
        Command::Lme { run, fields } => {
            let (m, cfg, out) = run.resolve()?;
            let s = cmd_lme(&m, fields.as_deref(), &cfg, &out)?;
            println!(
                "{} vertices, {} scans, {} not converged, {} failed -> {}",
                s.vertices,
                s.scans,
                s.not_converged.len(),
                s.failures.len(),
                out.display()
            );
        }
        Command::Validate { manifest, config } => {
            let cfg = load_config(config.as_deref())?;
            let m = Manifest::load(&manifest)?;
            let s = cmd_validate(&m, &cfg)?;
            for g in &s.metadata_gaps {
                eprintln!("note (blocks lme): {g}");
            }
            println!("ok: {} subjects, {} scans", s.subjects, s.scans);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("{e}");
            if matches!(e, PipelineError::Runtime(_)) {
                eprintln!();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
