use std::path::Path;
use std::process::{Command, Output};

fn longsurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longsurf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn phantom(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        r#"{"subjects_per_group": 3, "phantom": {"level": 2, "visits": 3}}"#,
    )
    .unwrap();
    let data = dir.join("data");
    let out = longsurf(&[
        "phantom",
        "--config",
        s(&spec),
        "--out",
        s(&data),
        "--seed",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    data.join("manifest.json")
}

#[test]
fn phantom_then_validate_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let v = longsurf(&["validate", "--manifest", s(&manifest)]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).starts_with("ok: 6 subjects, 18 scans"));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sample_count": 1000}"#).unwrap();
    let read = |d: &str| std::fs::read(dir.path().join(d).join("metrics_scans.csv")).unwrap();
    for (d, w) in [("m1", "1"), ("m8", "8")] {
        let out = dir.path().join(d);
        let r = longsurf(&[
            "metrics",
            "--manifest",
            s(&manifest),
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--workers",
            w,
        ]);
        assert_eq!(
            r.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&r.stderr)
        );
    }
    assert_eq!(read("m1"), read("m8"));
    let text = String::from_utf8(read("m1")).unwrap();
    assert!(text.starts_with("subject,visit,surface,assd_mm,hd90,hd99,sif_count,sif_ratio,error\n"));
    for line in text.lines().skip(1) {
        let assd: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(assd < 1e-12);
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m1/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["sample_count"], 1000);
    assert_eq!(json["manifest_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn template_and_lme_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let t = dir.path().join("t");
    let r = longsurf(&[
        "template",
        "--manifest",
        s(&manifest),
        "--out",
        s(&t),
        "--workers",
        "2",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(t.join("sub-002/template_wm.off").is_file());
    assert!(String::from_utf8_lossy(&r.stderr).contains("template sub-002 wm"));

    let l = dir.path().join("l");
    let r = longsurf(&["lme", "--manifest", s(&manifest), "--out", s(&l)]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let beta = std::fs::read_to_string(l.join("beta3.csv")).unwrap();
    assert_eq!(beta.lines().count(), 163);
}

#[test]
fn validation_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    std::fs::write(
        &m,
        r#"{"subjects":[{"id":"a","age_baseline":70,"diagnosis":0,"visits":[
            {"time_years":0,"wm":"nope.off","pial":"nope.off"},
            {"time_years":0,"wm":"nope.off","pial":"nope.off"}]}]}"#,
    )
    .unwrap();
    let r = longsurf(&["validate", "--manifest", s(&m)]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(
        err.contains("file not found") && err.contains("strictly increasing"),
        "{err}"
    );

    assert_eq!(longsurf(&["metrics"]).status.code(), Some(1));
    assert_eq!(longsurf(&["bogus"]).status.code(), Some(1));
    assert_eq!(longsurf(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_metadata_is_listed_before_lme_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let mut json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    json["subjects"][1]["visits"][2]["time_years"] = serde_json::Value::Null;
    json["subjects"][4]["diagnosis"] = serde_json::Value::Null;
    std::fs::write(&manifest, serde_json::to_vec(&json).unwrap()).unwrap();
    let r = longsurf(&[
        "lme",
        "--manifest",
        s(&manifest),
        "--out",
        s(&dir.path().join("l")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(
        err.contains("subject sub-001 visit 2: missing time_years"),
        "{err}"
    );
    assert!(err.contains("subject sub-004: missing diagnosis"), "{err}");
}

#[test]
fn runtime_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let th = dir.path().join("data/sub-000/visit-01_thickness_gt.csv");
    std::fs::write(&th, "vertex_id,value\n0,1.0\n").unwrap();
    let r = longsurf(&[
        "lme",
        "--manifest",
        s(&manifest),
        "--out",
        s(&dir.path().join("l")),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("subject sub-000 visit 1"));
}
