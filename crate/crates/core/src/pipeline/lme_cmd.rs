use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::manifest::Manifest;
use super::report::{error_text, provenance, to_json};
use super::{create_dir, with_pool, write_file, PipelineError, PipelineResult, RunConfig};
use crate::error::{Error, Result};
use crate::mesh::io::load;
use crate::morphometry::{cortical_thickness, Unit, VertexScalarField};
use crate::stats::{group_by_subject, lme_vertexwise, VertexFailure};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmeSummary {
    pub config: Value,
    pub manifest_sha256: String,
    pub subjects: usize,
    pub scans: usize,
    pub vertices: usize,
    /// Where each scan's thickness came from: `"file"` or `"surfaces"`.
    pub thickness_source: Vec<&'static str>,
    pub not_converged: Vec<usize>,
    pub failures: Vec<VertexFailure>,
    pub max_neglog10p: f64,
}

fn thickness_of(
    m: &Manifest,
    subject: &str,
    visit: usize,
    fields_dir: Option<&Path>,
) -> Result<(VertexScalarField, &'static str)> {
    let s = m
        .subjects
        .iter()
        .find(|s| s.id == subject)
        .expect("metadata from manifest");
    let v = &s.visits[visit];
    let wm = load(m.resolve(&v.wm))?;
    let file: Option<PathBuf> = match fields_dir {
        Some(dir) => Some(
            dir.join(subject)
                .join(format!("visit-{visit:02}_thickness.csv")),
        ),
        None => v.thickness.as_ref().map(|p| m.resolve(p)),
    };
    match file {
        Some(p) => Ok((
            VertexScalarField::load_csv(p, wm.tag(), Unit::Millimeter)?,
            "file",
        )),
        None => Ok((
            cortical_thickness(&wm, &load(m.resolve(&v.pial))?)?,
            "surfaces",
        )),
    }
}

/// Fits the longitudinal mixed model at every vertex of the cohort's thickness
/// maps and writes `beta3.csv`, `neglog10p.csv` (both `vertex_id,value`) and
/// `lme_summary.json` into `out`.
///
/// Thickness per scan comes from `fields_dir/<id>/visit-XX_thickness.csv` when
/// a directory is given, else from the manifest's `thickness` entry, else
/// from the surfaces. Missing covariates are all reported before anything runs.
pub fn cmd_lme(
    manifest: &Manifest,
    fields_dir: Option<&Path>,
    cfg: &RunConfig,
    out: &Path,
) -> PipelineResult<LmeSummary> {
    cfg.validate()?;
    manifest.validate()?;
    let meta = manifest.visit_metadata()?;
    group_by_subject(&meta).map_err(|e| PipelineError::invalid(error_text(&e)))?;

    let loaded: Vec<Result<(VertexScalarField, &'static str)>> = with_pool(cfg.workers, || {
        meta.par_iter()
            .map(|r| thickness_of(manifest, &r.subject, r.visit as usize, fields_dir))
            .collect()
    })?;
    let mut fields = Vec::with_capacity(meta.len());
    let mut sources = Vec::with_capacity(meta.len());
    let mut problems = Vec::new();
    for (r, f) in meta.iter().zip(loaded) {
        match f {
            Ok((f, src)) => {
                fields.push(f);
                sources.push(src);
            }
            Err(e) => problems.push(format!(
                "subject {} visit {}: {}",
                r.subject,
                r.visit,
                error_text(&e)
            )),
        }
    }
    if !problems.is_empty() {
        return Err(PipelineError::Runtime(Error::InvalidDataset(
            problems.join("; "),
        )));
    }

    let settings = cfg.lme.settings();
    let result = with_pool(cfg.workers, || lme_vertexwise(&meta, &fields, &settings))??;
    let summary = LmeSummary {
        config: provenance(cfg),
        manifest_sha256: manifest.sha256().to_string(),
        subjects: manifest.subjects.len(),
        scans: meta.len(),
        vertices: result.beta3.len(),
        thickness_source: sources,
        not_converged: result.not_converged,
        failures: result.failures,
        max_neglog10p: result
            .neglog10p
            .values
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(f64::NAN, f64::max),
    };
    create_dir(out)?;
    write_file(&out.join("beta3.csv"), result.beta3.to_csv_string())?;
    write_file(&out.join("neglog10p.csv"), result.neglog10p.to_csv_string())?;
    write_file(&out.join("lme_summary.json"), to_json(&summary))?;
    Ok(summary)
}
