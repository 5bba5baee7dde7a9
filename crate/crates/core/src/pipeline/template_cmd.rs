use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::manifest::{Manifest, ManifestSubject, ManifestVisit};
use super::report::{cell, csv_text, error_text, provenance, to_json};
use super::{create_dir, with_pool, write_file, PipelineResult, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{
    two_stage_pipeline, DeformationField, DisplacementField, FieldSpec, GeneralizedVertexSet,
};
use crate::mesh::io::{format_off, load};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateRow {
    pub subject: String,
    pub surface: &'static str,
    pub visits: usize,
    /// Largest vertex distance between a stage-2 output and its input visit.
    pub max_residual_mm: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateReport {
    pub config: Value,
    pub manifest_sha256: String,
    pub subjects: Vec<TemplateRow>,
}

/// Files of one subject and surface, kept until the orchestrator writes them.
struct Outputs {
    template: String,
    visits: Vec<String>,
}

/// Velocity that carries `from` onto `to` over the configured trajectory.
fn toward(
    from: &[crate::mesh::Vec3],
    to: &[crate::mesh::Vec3],
    end_time: f64,
) -> Result<Arc<dyn DeformationField>> {
    let mut f = DisplacementField::between(from, to)?;
    f.displacement.iter_mut().for_each(|d| *d /= end_time);
    Ok(Arc::new(f))
}

fn field_for(
    m: &Manifest,
    spec: Option<&PathBuf>,
    from: &[crate::mesh::Vec3],
    to: &TriangleMesh,
    end_time: f64,
) -> Result<Arc<dyn DeformationField>> {
    match spec {
        Some(p) => Ok(Arc::new(FieldSpec::load(m.resolve(p))?)),
        None => toward(from, to.vertices(), end_time),
    }
}

fn run_surface(
    m: &Manifest,
    s: &ManifestSubject,
    surface: &'static str,
    cfg: &RunConfig,
) -> Result<(Outputs, f64)> {
    let pick = |v: &ManifestVisit| -> PathBuf {
        match surface {
            "wm" => v.wm.clone(),
            _ => v.pial.clone(),
        }
    };
    let visits: Vec<TriangleMesh> = s
        .visits
        .iter()
        .map(|v| load(m.resolve(&pick(v))))
        .collect::<Result<_>>()?;
    let population = match &m.template {
        Some(t) => load(m.resolve(if surface == "wm" { &t.wm } else { &t.pial }))?,
        None => visits[0].clone(),
    };
    if let Some(v) = visits.iter().position(|v| v.tag() != population.tag()) {
        return Err(Error::ConnectivityMismatch(format!(
            "visit {v} is {} but the template is {}",
            visits[v].tag(),
            population.tag()
        )));
    }
    let start = GeneralizedVertexSet::from_mesh(&population);
    let t_end = cfg.trajectory.end_time();
    let clock = Instant::now();
    let out = two_stage_pipeline(
        &start,
        visits.len(),
        |j| {
            field_for(
                m,
                s.visits[j].stage1_field.as_ref(),
                &start.coords,
                &visits[j],
                t_end,
            )
        },
        |j, template| {
            field_for(
                m,
                s.visits[j].stage2_field.as_ref(),
                &template.coords,
                &visits[j],
                t_end,
            )
        },
        &cfg.trajectory,
    )?;
    eprintln!(
        "template {} {surface}: {} visits in {:.3} s",
        s.id,
        visits.len(),
        clock.elapsed().as_secs_f64()
    );
    let residual = out
        .visits
        .iter()
        .zip(&visits)
        .flat_map(|(o, v)| {
            o.coords
                .iter()
                .zip(v.vertices())
                .map(|(a, b)| (a - b).norm())
        })
        .fold(0.0, f64::max);
    let outputs = Outputs {
        template: format_off(&out.template.to_mesh(&population)?),
        visits: out
            .visits
            .iter()
            .map(|v| v.to_mesh(&population).map(|mesh| format_off(&mesh)))
            .collect::<Result<_>>()?,
    };
    Ok((outputs, residual))
}

/// Builds each subject's within-subject template by the two-stage flow and
/// writes `out/<id>/template_{wm,pial}.off` and
/// `out/<id>/visit-XX_{wm,pial}_stage2.off`, plus `template_report.{json,csv}`.
/// Visits without a field spec use the field that carries the current state
/// onto the visit surface. Wall time per subject goes to stderr.
pub fn cmd_template(
    manifest: &Manifest,
    cfg: &RunConfig,
    out: &Path,
) -> PipelineResult<TemplateReport> {
    cfg.validate()?;
    manifest.validate()?;
    let jobs: Vec<(&ManifestSubject, &'static str)> = manifest
        .subjects
        .iter()
        .flat_map(|s| [(s, "wm"), (s, "pial")])
        .collect();
    let results: Vec<Result<(Outputs, f64)>> = with_pool(cfg.workers, || {
        jobs.par_iter()
            .map(|(s, surface)| run_surface(manifest, s, surface, cfg))
            .collect()
    })?;

    create_dir(out)?;
    let mut rows = Vec::with_capacity(jobs.len());
    for ((s, surface), result) in jobs.iter().zip(results) {
        let (residual, error) = match result {
            Ok((files, residual)) => {
                let dir = out.join(&s.id);
                create_dir(&dir)?;
                write_file(&dir.join(format!("template_{surface}.off")), files.template)?;
                for (j, text) in files.visits.into_iter().enumerate() {
                    write_file(
                        &dir.join(format!("visit-{j:02}_{surface}_stage2.off")),
                        text,
                    )?;
                }
                (residual, None)
            }
            Err(e) => {
                let msg = format!("subject {}: {}", s.id, error_text(&e));
                eprintln!("{msg}");
                (f64::NAN, Some(msg))
            }
        };
        rows.push(TemplateRow {
            subject: s.id.clone(),
            surface,
            visits: s.visits.len(),
            max_residual_mm: residual,
            error,
        });
    }
    let report = TemplateReport {
        config: provenance(cfg),
        manifest_sha256: manifest.sha256().to_string(),
        subjects: rows,
    };
    let table: Vec<Vec<String>> = report
        .subjects
        .iter()
        .map(|r| {
            vec![
                r.subject.clone(),
                r.surface.to_string(),
                r.visits.to_string(),
                cell(r.max_residual_mm),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let header = ["subject", "surface", "visits", "max_residual_mm", "error"].map(String::from);
    write_file(&out.join("template_report.csv"), csv_text(&header, &table))?;
    write_file(&out.join("template_report.json"), to_json(&report))?;
    Ok(report)
}
