//! Batch orchestration behind the command-line tool: manifest ingestion,
//! configuration, and the `phantom`, `metrics`, `template`, `lme` and
//! `validate` commands. Every report is a pure function of the manifest bytes
//! and the effective configuration.

mod config;
mod lme_cmd;
mod manifest;
mod metrics_cmd;
mod phantom_cmd;
mod report;
mod template_cmd;

pub use config::{LmeConfig, RunConfig};
pub use lme_cmd::{cmd_lme, LmeSummary};
pub use manifest::{LabelPaths, Manifest, ManifestSubject, ManifestVisit, SurfacePair};
pub use metrics_cmd::{cmd_metrics, MetricsReport, ScanRow, SubjectRow, SummaryRow};
pub use phantom_cmd::cmd_phantom;
pub use template_cmd::{cmd_template, TemplateReport, TemplateRow};

use std::fmt;
use std::path::Path;

use crate::error::Error;

/// Failure of a command, split by the exit code it maps to.
#[derive(Debug)]
pub enum PipelineError {
    /// Bad input: every problem found, in discovery order. Exit code 1.
    Validation(Vec<String>),
    /// Failure while running. Exit code 2.
    Runtime(Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Runtime(_) => 2,
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        PipelineError::Validation(vec![message.into()])
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Validation(problems) => {
                writeln!(f, "validation failed with {} problem(s):", problems.len())?;
                for p in problems {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
            PipelineError::Runtime(e) => write!(f, "runtime failure: {e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<Error> for PipelineError {
    fn from(e: Error) -> Self {
        PipelineError::Runtime(e)
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

/// What `validate` found besides hard failures.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub subjects: usize,
    pub scans: usize,
    /// Gaps that only block the `lme` command.
    pub metadata_gaps: Vec<String>,
}

/// Checks configuration, manifest, referenced files and every surface,
/// collecting all problems before failing.
pub fn cmd_validate(manifest: &Manifest, cfg: &RunConfig) -> PipelineResult<ValidationSummary> {
    let mut problems = match cfg.validate() {
        Err(PipelineError::Validation(p)) => p,
        _ => Vec::new(),
    };
    let missing = manifest.problems();
    let files_ok = missing.is_empty();
    problems.extend(missing);
    if files_ok {
        problems.extend(manifest.surface_problems());
    }
    if !problems.is_empty() {
        return Err(PipelineError::Validation(problems));
    }
    Ok(ValidationSummary {
        subjects: manifest.subjects.len(),
        scans: manifest.subjects.iter().map(|s| s.visits.len()).sum(),
        metadata_gaps: match manifest.visit_metadata() {
            Err(PipelineError::Validation(g)) => g,
            _ => Vec::new(),
        },
    })
}

fn create_dir(path: &Path) -> PipelineResult<()> {
    std::fs::create_dir_all(path).map_err(|e| PipelineError::Runtime(Error::io(path, e)))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> PipelineResult<()> {
    std::fs::write(path, contents).map_err(|e| PipelineError::Runtime(Error::io(path, e)))
}

/// Runs `f` on a pool with `workers` threads (0 = rayon's default).
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> PipelineResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Runtime(Error::InvalidInput(format!("worker pool: {e}"))))?;
    Ok(pool.install(f))
}
