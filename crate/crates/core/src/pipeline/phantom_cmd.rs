use std::path::{Path, PathBuf};

use super::manifest::{LabelPaths, Manifest, ManifestSubject, ManifestVisit};
use super::{create_dir, write_file, PipelineError, PipelineResult};
use crate::mesh::io::format_off;
use crate::phantom::{synth_cohort, CohortSpec};

fn load_spec(path: &Path) -> PipelineResult<CohortSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::invalid(format!("spec {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::invalid(format!("spec {}: {e}", path.display())))
}

/// Synthesizes a phantom cohort into `out`:
///
/// ```text
/// out/manifest.json  out/cohort.json  out/labels.csv  out/labels.json
/// out/sub-000/visit-00_wm.off  visit-00_pial.off  visit-00_thickness_gt.csv ...
/// ```
///
/// Each visit is its own reference surface. `spec` is a cohort JSON (every key
/// optional); `seed` overrides its seed. Returns the manifest path.
pub fn cmd_phantom(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> PipelineResult<PathBuf> {
    let mut cohort = match spec {
        Some(p) => load_spec(p)?,
        None => CohortSpec::default(),
    };
    if let Some(s) = seed {
        cohort.seed = s;
    }
    if cohort.subjects_per_group == 0 {
        return Err(PipelineError::invalid(
            "subjects_per_group must be positive",
        ));
    }
    cohort
        .phantom
        .validate()
        .map_err(|e| PipelineError::invalid(format!("phantom: {e}")))?;
    write_cohort(&cohort, out)
}

pub(crate) fn write_cohort(cohort: &CohortSpec, out: &Path) -> PipelineResult<PathBuf> {
    let subjects = synth_cohort(cohort)?;
    create_dir(out)?;
    write_file(
        &out.join("cohort.json"),
        serde_json::to_string_pretty(cohort).expect("cohort serializes"),
    )?;
    subjects[0]
        .labels
        .save(out.join("labels.csv"), out.join("labels.json"))?;

    let mut entries = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let dir = out.join(&s.id);
        create_dir(&dir)?;
        let mut visits = Vec::with_capacity(s.visits.len());
        for (j, v) in s.visits.iter().enumerate() {
            let rel = |suffix: &str| PathBuf::from(&s.id).join(format!("visit-{j:02}_{suffix}"));
            let (wm, pial, th) = (rel("wm.off"), rel("pial.off"), rel("thickness_gt.csv"));
            write_file(&out.join(&wm), format_off(&v.wm))?;
            write_file(&out.join(&pial), format_off(&v.pial))?;
            write_file(&out.join(&th), v.thickness.to_csv_string())?;
            visits.push(ManifestVisit {
                time_years: Some(v.time_years),
                ref_wm: Some(wm.clone()),
                ref_pial: Some(pial.clone()),
                wm,
                pial,
                thickness: Some(th),
                stage1_field: None,
                stage2_field: None,
            });
        }
        entries.push(ManifestSubject {
            id: s.id.clone(),
            age_baseline: Some(s.spec.age_baseline),
            diagnosis: Some(s.spec.diagnosis),
            visits,
        });
    }

    let mut manifest = Manifest::in_memory(entries, out);
    manifest.labels = Some(LabelPaths {
        csv: "labels.csv".into(),
        names: "labels.json".into(),
    });
    let path = out.join("manifest.json");
    write_file(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trips_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("spec.json");
        std::fs::write(
            &spec,
            r#"{"subjects_per_group": 1, "phantom": {"level": 1, "visits": 2}}"#,
        )
        .unwrap();
        let path = cmd_phantom(Some(&spec), &dir.path().join("data"), Some(4)).unwrap();
        let m = Manifest::load(&path).unwrap();
        m.validate().unwrap();
        assert_eq!(m.subjects.len(), 2);
        assert_eq!(m.subjects[1].diagnosis, Some(1));
        assert_eq!(m.visit_metadata().unwrap().len(), 4);
        let wm = crate::mesh::io::load(m.resolve(&m.subjects[0].visits[1].wm)).unwrap();
        assert_eq!(wm.vertex_count(), 42);
    }

    #[test]
    fn bad_spec_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("spec.json");
        std::fs::write(&spec, r#"{"phantom": {"level": 99}}"#).unwrap();
        let e = cmd_phantom(Some(&spec), dir.path(), None).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        std::fs::write(&spec, "not json").unwrap();
        assert_eq!(
            cmd_phantom(Some(&spec), dir.path(), None)
                .unwrap_err()
                .exit_code(),
            1
        );
    }
}
