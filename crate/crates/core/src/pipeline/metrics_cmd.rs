use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::manifest::{Manifest, ManifestSubject};
use super::report::{cell, csv_text, error_text, mean_sd, provenance, to_json};
use super::{create_dir, with_pool, write_file, PipelineResult, RunConfig};
use crate::error::{Error, Result};
use crate::mesh::io::load;
use crate::mesh::{LongitudinalSubject, TriangleMesh};
use crate::metrics::{percentile_key, scan_metrics, splitmix64, SampleSeeds, ScanMetrics};
use crate::morphometry::{
    cortical_thickness, longitudinal_variance, mean_curvature, parc_f1, RegionLabeling,
};

const SURFACES: [&str; 2] = ["wm", "pial"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub subject: String,
    pub visit: usize,
    pub surface: &'static str,
    pub metrics: Option<ScanMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectRow {
    pub subject: String,
    pub visits: usize,
    pub mcvar_wm: f64,
    pub mcvar_pial: f64,
    pub cthvar: f64,
    pub parc_f1: f64,
    /// Problems met while scoring this subject; the run continues regardless.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub config: Value,
    pub manifest_sha256: String,
    pub scans: Vec<ScanRow>,
    pub subjects: Vec<SubjectRow>,
    pub summary: Vec<SummaryRow>,
}

struct Loaded {
    wm: Vec<TriangleMesh>,
    pial: Vec<TriangleMesh>,
}

fn load_subject(m: &Manifest, s: &ManifestSubject) -> Result<Loaded> {
    let mut wm = Vec::with_capacity(s.visits.len());
    let mut pial = Vec::with_capacity(s.visits.len());
    for v in &s.visits {
        wm.push(load(m.resolve(&v.wm))?);
        pial.push(load(m.resolve(&v.pial))?);
    }
    Ok(Loaded { wm, pial })
}

fn nan_subject(s: &ManifestSubject, errors: Vec<String>) -> SubjectRow {
    SubjectRow {
        subject: s.id.clone(),
        visits: s.visits.len(),
        mcvar_wm: f64::NAN,
        mcvar_pial: f64::NAN,
        cthvar: f64::NAN,
        parc_f1: f64::NAN,
        errors,
    }
}

/// Runs `f`, recording its error and returning NaN on failure.
fn scored(errors: &mut Vec<String>, what: &str, f: impl FnOnce() -> Result<f64>) -> f64 {
    match f() {
        Ok(x) => x,
        Err(e) => {
            errors.push(format!("{what}: {}", error_text(&e)));
            f64::NAN
        }
    }
}

fn variance_of(
    surfaces: &[TriangleMesh],
    field: impl Fn(&TriangleMesh) -> Result<crate::morphometry::VertexScalarField>,
) -> Result<f64> {
    if surfaces.len() < 2 {
        return Ok(f64::NAN);
    }
    let fields = surfaces.iter().map(field).collect::<Result<Vec<_>>>()?;
    Ok(longitudinal_variance(&fields)?.score)
}

fn score_subject(
    m: &Manifest,
    s: &ManifestSubject,
    first_scan: u64,
    labels: Option<&std::result::Result<RegionLabeling, String>>,
    cfg: &RunConfig,
) -> (Vec<ScanRow>, SubjectRow) {
    let loaded = match load_subject(m, s) {
        Ok(l) => l,
        Err(e) => {
            let msg = error_text(&e);
            let scans = scan_slots(s)
                .map(|(visit, surface)| ScanRow {
                    subject: s.id.clone(),
                    visit,
                    surface,
                    metrics: None,
                    error: Some(msg.clone()),
                })
                .collect();
            return (scans, nan_subject(s, vec![msg]));
        }
    };

    let scans = scan_slots(s)
        .enumerate()
        .map(|(k, (visit, surface))| {
            let v = &s.visits[visit];
            let (pred, reference) = match surface {
                "wm" => (&loaded.wm[visit], &v.ref_wm),
                _ => (&loaded.pial[visit], &v.ref_pial),
            };
            let outcome = match reference {
                None => Err(format!("no reference {surface} surface")),
                Some(r) => load(m.resolve(r))
                    .and_then(|reference| {
                        let seeds = SampleSeeds::from_seed(splitmix64(
                            cfg.seed.wrapping_add(first_scan + k as u64),
                        ));
                        scan_metrics(pred, &reference, &cfg.percentiles, cfg.sample_count, seeds)
                    })
                    .map_err(|e| error_text(&e)),
            };
            let (metrics, error) = match outcome {
                Ok(x) => (Some(x), None),
                Err(e) => (None, Some(e)),
            };
            ScanRow {
                subject: s.id.clone(),
                visit,
                surface,
                metrics,
                error,
            }
        })
        .collect();

    let mut errors = Vec::new();
    let mcvar_wm = scored(&mut errors, "mcvar_wm", || {
        variance_of(&loaded.wm, mean_curvature)
    });
    let mcvar_pial = scored(&mut errors, "mcvar_pial", || {
        variance_of(&loaded.pial, mean_curvature)
    });
    let cthvar = scored(&mut errors, "cthvar", || {
        let pairs: Vec<_> = loaded.wm.iter().zip(&loaded.pial).collect();
        if pairs.len() < 2 {
            return Ok(f64::NAN);
        }
        let fields = pairs
            .into_iter()
            .map(|(w, p)| cortical_thickness(w, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(longitudinal_variance(&fields)?.score)
    });
    let parc = scored(&mut errors, "parc_f1", || match labels {
        None => Ok(f64::NAN),
        Some(Err(e)) => Err(Error::InvalidInput(format!("labels: {e}"))),
        Some(Ok(l)) if loaded.wm.len() >= 2 => {
            let series = LongitudinalSubject::new(s.id.clone(), loaded.wm.clone())?;
            Ok(parc_f1(&series, l, cfg.pair_mode)?.weighted)
        }
        Some(Ok(_)) => Ok(f64::NAN),
    });
    (
        scans,
        SubjectRow {
            subject: s.id.clone(),
            visits: s.visits.len(),
            mcvar_wm,
            mcvar_pial,
            cthvar,
            parc_f1: parc,
            errors,
        },
    )
}

fn scan_slots(s: &ManifestSubject) -> impl Iterator<Item = (usize, &'static str)> {
    (0..s.visits.len()).flat_map(|j| SURFACES.iter().map(move |&surface| (j, surface)))
}

fn load_labels(m: &Manifest) -> Option<std::result::Result<RegionLabeling, String>> {
    let paths = m.labels.as_ref()?;
    let first = m.subjects.first()?.visits.first()?;
    Some(
        load(m.resolve(&first.wm))
            .and_then(|mesh| {
                RegionLabeling::load(m.resolve(&paths.csv), m.resolve(&paths.names), mesh.tag())
            })
            .map_err(|e| error_text(&e)),
    )
}

fn summarize(scans: &[ScanRow], subjects: &[SubjectRow], percentiles: &[f64]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let mut push = |metric: String, values: Vec<f64>| {
        let (mean, sd, n) = mean_sd(&values);
        rows.push(SummaryRow {
            metric,
            mean,
            sd,
            n,
        });
    };
    for surface in SURFACES {
        let of = |f: &dyn Fn(&ScanMetrics) -> f64| -> Vec<f64> {
            scans
                .iter()
                .filter(|r| r.surface == surface)
                .filter_map(|r| r.metrics.as_ref().map(f))
                .collect()
        };
        push(format!("{surface}_assd_mm"), of(&|m| m.assd_mm));
        for (i, p) in percentiles.iter().enumerate() {
            push(
                format!("{surface}_hd{}", percentile_key(*p)),
                of(&|m| m.hd[i].1),
            );
        }
        push(format!("{surface}_sif_ratio"), of(&|m| m.sif_ratio));
    }
    push(
        "mcvar_wm".into(),
        subjects.iter().map(|s| s.mcvar_wm).collect(),
    );
    push(
        "mcvar_pial".into(),
        subjects.iter().map(|s| s.mcvar_pial).collect(),
    );
    push("cthvar".into(), subjects.iter().map(|s| s.cthvar).collect());
    push(
        "parc_f1".into(),
        subjects.iter().map(|s| s.parc_f1).collect(),
    );
    rows
}

impl MetricsReport {
    pub fn scans_csv(&self, percentiles: &[f64]) -> String {
        let mut header: Vec<String> = ["subject", "visit", "surface", "assd_mm"]
            .map(String::from)
            .to_vec();
        header.extend(
            percentiles
                .iter()
                .map(|p| format!("hd{}", percentile_key(*p))),
        );
        header.extend(["sif_count", "sif_ratio", "error"].map(String::from));
        let rows: Vec<Vec<String>> = self
            .scans
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.subject.clone(),
                    r.visit.to_string(),
                    r.surface.to_string(),
                ];
                match &r.metrics {
                    Some(m) => {
                        row.push(cell(m.assd_mm));
                        row.extend(m.hd.iter().map(|(_, d)| cell(*d)));
                        row.push(m.sif_count.to_string());
                        row.push(cell(m.sif_ratio));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 3 + percentiles.len())),
                }
                row.push(r.error.clone().unwrap_or_default());
                row
            })
            .collect();
        csv_text(&header, &rows)
    }

    pub fn subjects_csv(&self) -> String {
        let header = [
            "subject",
            "visits",
            "mcvar_wm",
            "mcvar_pial",
            "cthvar",
            "parc_f1",
            "error",
        ]
        .map(String::from);
        let rows: Vec<Vec<String>> = self
            .subjects
            .iter()
            .map(|s| {
                vec![
                    s.subject.clone(),
                    s.visits.to_string(),
                    cell(s.mcvar_wm),
                    cell(s.mcvar_pial),
                    cell(s.cthvar),
                    cell(s.parc_f1),
                    s.errors.join("; "),
                ]
            })
            .collect();
        csv_text(&header, &rows)
    }

    /// `metric,mean,sd,n,mean_pm_sd`, the last as `mean{±SD}` text.
    pub fn summary_csv(&self) -> String {
        let header = ["metric", "mean", "sd", "n", "mean_pm_sd"].map(String::from);
        let rows: Vec<Vec<String>> = self
            .summary
            .iter()
            .map(|r| {
                vec![
                    r.metric.clone(),
                    cell(r.mean),
                    cell(r.sd),
                    r.n.to_string(),
                    format!("{:.4}{{±{:.4}}}", r.mean, r.sd),
                ]
            })
            .collect();
        csv_text(&header, &rows)
    }
}

/// Scores every scan against its reference and every subject's consistency,
/// then writes `metrics_scans.csv`, `metrics_subjects.csv`,
/// `metrics_summary.csv` and `metrics.json` into `out`. A failing subject is
/// reported in its rows and does not stop the run.
pub fn cmd_metrics(
    manifest: &Manifest,
    cfg: &RunConfig,
    out: &Path,
) -> PipelineResult<MetricsReport> {
    cfg.validate()?;
    manifest.validate()?;
    let labels = load_labels(manifest);
    let mut first_scan = Vec::with_capacity(manifest.subjects.len());
    let mut next = 0u64;
    for s in &manifest.subjects {
        first_scan.push(next);
        next += (2 * s.visits.len()) as u64;
    }
    let results: Vec<(Vec<ScanRow>, SubjectRow)> = with_pool(cfg.workers, || {
        manifest
            .subjects
            .par_iter()
            .zip(first_scan.par_iter())
            .map(|(s, &k)| score_subject(manifest, s, k, labels.as_ref(), cfg))
            .collect()
    })?;
    let (scans, subjects): (Vec<Vec<ScanRow>>, Vec<SubjectRow>) = results.into_iter().unzip();
    let scans: Vec<ScanRow> = scans.into_iter().flatten().collect();
    let summary = summarize(&scans, &subjects, &cfg.percentiles);
    let report = MetricsReport {
        config: provenance(cfg),
        manifest_sha256: manifest.sha256().to_string(),
        scans,
        subjects,
        summary,
    };

    create_dir(out)?;
    write_file(
        &out.join("metrics_scans.csv"),
        report.scans_csv(&cfg.percentiles),
    )?;
    write_file(&out.join("metrics_subjects.csv"), report.subjects_csv())?;
    write_file(&out.join("metrics_summary.csv"), report.summary_csv())?;
    write_file(&out.join("metrics.json"), to_json(&report))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::CohortSpec;

    fn small_cohort(dir: &Path) -> Manifest {
        let mut c = CohortSpec {
            subjects_per_group: 2,
            ..Default::default()
        };
        c.phantom.level = 2;
        c.phantom.visits = 3;
        Manifest::load(super::super::phantom_cmd::write_cohort(&c, &dir.join("data")).unwrap())
            .unwrap()
    }

    fn cfg() -> RunConfig {
        RunConfig {
            sample_count: 2000,
            ..Default::default()
        }
    }

    #[test]
    fn self_reference_scores_zero_distance_and_full_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_cohort(dir.path());
        let r = cmd_metrics(&m, &cfg(), &dir.path().join("out")).unwrap();
        assert_eq!(r.scans.len(), 4 * 3 * 2);
        for s in &r.scans {
            let x = s.metrics.as_ref().unwrap();
            assert!(x.assd_mm < 1e-12, "{}", x.assd_mm);
        }
        for s in &r.subjects {
            assert_eq!(s.parc_f1, 1.0);
            assert!(s.errors.is_empty());
        }
    }

    #[test]
    fn summary_matches_hand_aggregation() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_cohort(dir.path());
        let r = cmd_metrics(&m, &cfg(), &dir.path().join("out")).unwrap();
        let cth: Vec<f64> = r.subjects.iter().map(|s| s.cthvar).collect();
        let mean = cth.iter().sum::<f64>() / 4.0;
        let sd = (cth.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        let row = r.summary.iter().find(|s| s.metric == "cthvar").unwrap();
        assert!((row.mean - mean).abs() < 1e-15 && (row.sd - sd).abs() < 1e-15);
        assert_eq!(row.n, 4);
    }

    #[test]
    fn bad_subject_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_cohort(dir.path());
        std::fs::write(
            m.resolve(&m.subjects[1].visits[2].pial),
            "OFF\n3 1 0\n0 0 0\n",
        )
        .unwrap();
        let r = cmd_metrics(&m, &cfg(), &dir.path().join("out")).unwrap();
        assert!(!r.subjects[1].errors.is_empty());
        assert!(r.subjects[1].cthvar.is_nan());
        assert!(r.subjects[0].errors.is_empty() && r.subjects[2].errors.is_empty());
        let text = std::fs::read_to_string(dir.path().join("out/metrics_subjects.csv")).unwrap();
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn missing_reference_is_reported_per_scan() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = small_cohort(dir.path());
        m.subjects[0].visits[1].ref_pial = None;
        let r = cmd_metrics(&m, &cfg(), &dir.path().join("out")).unwrap();
        let row = r
            .scans
            .iter()
            .find(|s| s.subject == "sub-000" && s.visit == 1 && s.surface == "pial")
            .unwrap();
        assert!(row.metrics.is_none());
        assert!(row.error.as_ref().unwrap().contains("no reference"));
    }

    #[test]
    fn reruns_are_byte_identical_across_worker_counts() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_cohort(dir.path());
        let read = |d: &str| {
            [
                "metrics_scans.csv",
                "metrics_subjects.csv",
                "metrics_summary.csv",
                "metrics.json",
            ]
            .map(|f| std::fs::read(dir.path().join(d).join(f)).unwrap())
        };
        for (d, w) in [("a", 1), ("b", 8), ("c", 8)] {
            cmd_metrics(
                &m,
                &RunConfig {
                    workers: w,
                    ..cfg()
                },
                &dir.path().join(d),
            )
            .unwrap();
        }
        assert_eq!(read("a"), read("b"));
        assert_eq!(read("b"), read("c"));
    }
}
