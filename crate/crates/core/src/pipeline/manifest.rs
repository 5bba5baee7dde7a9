use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, PipelineResult};
use crate::mesh::io::load;
use crate::stats::VisitMeta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfacePair {
    pub wm: PathBuf,
    pub pial: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelPaths {
    /// `vertex_id,label_id` rows.
    pub csv: PathBuf,
    /// JSON array of label names.
    pub names: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVisit {
    pub time_years: Option<f64>,
    pub wm: PathBuf,
    pub pial: PathBuf,
    /// Reference surfaces the metrics compare against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_wm: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_pial: Option<PathBuf>,
    /// Precomputed thickness (`vertex_id,value`); measured from the surfaces when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<PathBuf>,
    /// Field specs (JSON) for the two template stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_field: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_field: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSubject {
    pub id: String,
    pub age_baseline: Option<f64>,
    pub diagnosis: Option<u8>,
    pub visits: Vec<ManifestVisit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Dataset root; relative paths resolve against it. Itself relative to the manifest file.
    #[serde(default = "default_root")]
    pub root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelPaths>,
    /// Population template for the template command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<SurfacePair>,
    pub subjects: Vec<ManifestSubject>,
    #[serde(skip)]
    base: PathBuf,
    #[serde(skip)]
    sha256: String,
}

fn default_root() -> PathBuf {
    PathBuf::from(".")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    /// Parses the manifest. Structural problems are reported; file existence
    /// is checked by [`Manifest::validate`].
    pub fn load(path: impl AsRef<Path>) -> PipelineResult<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| PipelineError::invalid(format!("manifest {}: {e}", path.display())))?;
        let mut m: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| PipelineError::invalid(format!("manifest {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        m.base = dir.join(&m.root);
        m.sha256 = hex(&Sha256::digest(&bytes));
        Ok(m)
    }

    /// A manifest built in memory; paths resolve against `base`.
    pub fn in_memory(subjects: Vec<ManifestSubject>, base: impl Into<PathBuf>) -> Self {
        let mut m = Manifest {
            root: default_root(),
            labels: None,
            template: None,
            subjects,
            base: base.into(),
            sha256: String::new(),
        };
        let bytes = serde_json::to_vec(&m).expect("manifest serializes");
        m.sha256 = hex(&Sha256::digest(&bytes));
        m
    }

    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    /// Every problem with the manifest: missing files, duplicate ids, visit
    /// times out of order.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut check = |what: String, p: &Path| {
            if !self.resolve(p).is_file() {
                problems.push(format!(
                    "{what}: file not found: {}",
                    self.resolve(p).display()
                ));
            }
        };
        if let Some(l) = &self.labels {
            check("labels csv".into(), &l.csv);
            check("labels names".into(), &l.names);
        }
        if let Some(t) = &self.template {
            check("template wm".into(), &t.wm);
            check("template pial".into(), &t.pial);
        }
        for s in &self.subjects {
            for (j, v) in s.visits.iter().enumerate() {
                let at = |k: &str| format!("subject {} visit {j} {k}", s.id);
                check(at("wm"), &v.wm);
                check(at("pial"), &v.pial);
                for (k, p) in [
                    ("ref_wm", &v.ref_wm),
                    ("ref_pial", &v.ref_pial),
                    ("thickness", &v.thickness),
                    ("stage1_field", &v.stage1_field),
                    ("stage2_field", &v.stage2_field),
                ] {
                    if let Some(p) = p {
                        check(at(k), p);
                    }
                }
            }
        }

        if self.subjects.is_empty() {
            problems.push("manifest lists no subjects".into());
        }
        let mut seen = BTreeSet::new();
        for s in &self.subjects {
            if !seen.insert(&s.id) {
                problems.push(format!("subject id {} appears more than once", s.id));
            }
            if s.visits.is_empty() {
                problems.push(format!("subject {} has no visits", s.id));
            }
            let times: Vec<(usize, f64)> = s
                .visits
                .iter()
                .enumerate()
                .filter_map(|(j, v)| v.time_years.map(|t| (j, t)))
                .collect();
            for (j, t) in &times {
                if !t.is_finite() {
                    problems.push(format!(
                        "subject {} visit {j}: time_years is not finite",
                        s.id
                    ));
                }
            }
            for w in times.windows(2) {
                if !(w[1].1 > w[0].1) {
                    problems.push(format!(
                        "subject {}: visit times not strictly increasing at visit {} ({} after {})",
                        s.id, w[1].0, w[1].1, w[0].1
                    ));
                }
            }
            if let Some(d) = s.diagnosis {
                if d > 1 {
                    problems.push(format!(
                        "subject {}: diagnosis must be 0 or 1, got {d}",
                        s.id
                    ));
                }
            }
        }
        problems
    }

    /// Parses every surface and reports unreadable meshes and visits whose
    /// connectivity differs from the subject's first visit.
    pub fn surface_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for s in &self.subjects {
            let mut first = None;
            for (j, v) in s.visits.iter().enumerate() {
                let surfaces = [
                    ("wm", Some(&v.wm)),
                    ("pial", Some(&v.pial)),
                    ("ref_wm", v.ref_wm.as_ref()),
                    ("ref_pial", v.ref_pial.as_ref()),
                ];
                for (k, p) in surfaces {
                    let Some(p) = p else { continue };
                    match load(self.resolve(p)) {
                        Err(e) => problems.push(format!("subject {} visit {j} {k}: {e}", s.id)),
                        Ok(mesh) => {
                            let tag = mesh.tag();
                            match first {
                                None => first = Some(tag),
                                Some(t) if t != tag => problems.push(format!(
                                    "subject {} visit {j} {k}: connectivity {tag} differs from {t}",
                                    s.id
                                )),
                                Some(_) => {}
                            }
                        }
                    }
                }
            }
        }
        problems
    }

    pub fn validate(&self) -> PipelineResult<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Validation(problems))
        }
    }

    /// Model covariates for every visit, in manifest order, or every gap.
    pub fn visit_metadata(&self) -> PipelineResult<Vec<VisitMeta>> {
        let mut gaps = Vec::new();
        let mut meta = Vec::new();
        for s in &self.subjects {
            if s.age_baseline.is_none() {
                gaps.push(format!("subject {}: missing age_baseline", s.id));
            }
            if s.diagnosis.is_none() {
                gaps.push(format!("subject {}: missing diagnosis", s.id));
            }
            for (j, v) in s.visits.iter().enumerate() {
                match v.time_years {
                    None => gaps.push(format!("subject {} visit {j}: missing time_years", s.id)),
                    Some(t) => {
                        if j == 0 && t != 0.0 {
                            gaps.push(format!(
                                "subject {} visit 0: time_years is {t}, expected 0",
                                s.id
                            ));
                        }
                        if let (Some(age), Some(d)) = (s.age_baseline, s.diagnosis) {
                            meta.push(VisitMeta {
                                subject: s.id.clone(),
                                visit: j as u32,
                                age_baseline: age,
                                time_years: t,
                                diagnosis: d,
                            });
                        }
                    }
                }
            }
        }
        if gaps.is_empty() {
            Ok(meta)
        } else {
            Err(PipelineError::Validation(gaps))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn visit(t: Option<f64>) -> ManifestVisit {
        ManifestVisit {
            time_years: t,
            wm: "wm.off".into(),
            pial: "pial.off".into(),
            ref_wm: None,
            ref_pial: None,
            thickness: None,
            stage1_field: None,
            stage2_field: None,
        }
    }

    #[test]
    fn every_problem_is_listed() {
        let m = Manifest::in_memory(
            vec![
                ManifestSubject {
                    id: "a".into(),
                    age_baseline: Some(70.0),
                    diagnosis: Some(3),
                    visits: vec![visit(Some(0.0)), visit(Some(0.0))],
                },
                ManifestSubject {
                    id: "a".into(),
                    age_baseline: None,
                    diagnosis: Some(0),
                    visits: vec![],
                },
            ],
            "/nonexistent",
        );
        let p = m.problems();
        assert!(p.iter().any(|s| s.contains("file not found")));
        assert!(p.iter().any(|s| s.contains("more than once")));
        assert!(p.iter().any(|s| s.contains("no visits")));
        assert!(p.iter().any(|s| s.contains("strictly increasing")));
        assert!(p.iter().any(|s| s.contains("diagnosis must be")));
    }

    #[test]
    fn metadata_gaps_name_subject_and_visit() {
        let m = Manifest::in_memory(
            vec![ManifestSubject {
                id: "s7".into(),
                age_baseline: None,
                diagnosis: Some(1),
                visits: vec![visit(Some(0.0)), visit(None)],
            }],
            ".",
        );
        match m.visit_metadata() {
            Err(PipelineError::Validation(g)) => {
                assert_eq!(
                    g,
                    vec![
                        "subject s7: missing age_baseline",
                        "subject s7 visit 1: missing time_years"
                    ]
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(
            &p,
            r#"{"subjects":[{"id":"x","age_baseline":70,"diagnosis":0,"visits":[{"time_years":0,"wm":"a.off","pial":"b.off"}]}]}"#,
        )
        .unwrap();
        let m = Manifest::load(&p).unwrap();
        assert_eq!(m.sha256().len(), 64);
        assert_eq!(
            m.resolve(Path::new("a.off")),
            dir.path().join(".").join("a.off")
        );
        std::fs::write(&p, r#"{"subjects":[], "bogus": 1}"#).unwrap();
        assert!(matches!(
            Manifest::load(&p),
            Err(PipelineError::Validation(_))
        ));
    }
}
