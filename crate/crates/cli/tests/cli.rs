use std::path::Path;
use std::process::{Command, Output};

use refpose::io::Report;

const BOX_PAIR: &str = r#"{
    "shape": {"kind": "box", "size": [0.1, 0.08, 0.06]},
    "placement": {"kind": "viewpoint", "azimuth_deg": 40, "elevation_deg": 30, "distance": 0.6},
    "relative": {"kind": "yaw", "degrees": 30},
    "noise": 0.002,
    "seed": 9
}"#;

fn refpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refpose")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the box pair spec and generates its bundles under `dir/scene`.
fn scene(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("pair.json");
    std::fs::write(&spec, BOX_PAIR).unwrap();
    let out = dir.join("scene");
    let run = refpose(&["gen-scene", s(&spec), s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    out
}

fn read_report(path: &Path) -> Report {
    Report::from_json(&std::fs::read_to_string(path).unwrap(), "report").unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["reference", "query"] {
        for f in ["rgb.ppm", "depth.pgm", "mask.pgm", "meta.json"] {
            out.push((format!("{sub}/{f}"), std::fs::read(dir.join(sub).join(f)).unwrap()));
        }
    }
    out.push(("truth.json".into(), std::fs::read(dir.join("truth.json")).unwrap()));
    out
}

#[test]
fn gen_scene_writes_two_bundles_and_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = scene(tmp.path());
    assert_eq!(files(&out).len(), 9);
    let meta = std::fs::read_to_string(out.join("query/meta.json")).unwrap();
    assert!(!meta.contains("\"pose\""), "query bundles carry no pose");
    assert!(std::fs::read_to_string(out.join("reference/meta.json")).unwrap().contains("\"pose\""));
}

#[test]
fn gen_scene_is_byte_identical_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(files(&scene(a.path())), files(&scene(b.path())));

    let spec = a.path().join("pair.json");
    let other = a.path().join("other");
    assert!(refpose(&["gen-scene", s(&spec), s(&other), "--seed", "10"]).status.success());
    let depth = |d: &Path| std::fs::read(d.join("query/depth.pgm")).unwrap();
    assert_ne!(depth(&other), depth(&a.path().join("scene")));
}

#[test]
fn invalid_spec_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.json");
    std::fs::write(&spec, BOX_PAIR.replace("0.1, 0.08", "-0.1, 0.08")).unwrap();
    let run = refpose(&["gen-scene", s(&spec), s(&tmp.path().join("o"))]);
    assert_eq!(run.status.code(), Some(2));
    std::fs::write(&spec, "{\"shape\": 3}").unwrap();
    let run = refpose(&["gen-scene", s(&spec), s(&tmp.path().join("o"))]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("bad.json"));
    assert_eq!(refpose(&["estimate"]).status.code(), Some(2));
}

#[test]
fn estimate_recovers_a_yawed_box() {
    let tmp = tempfile::tempdir().unwrap();
    let out = scene(tmp.path());
    let report = tmp.path().join("report.json");
    let run = refpose(&[
        "estimate",
        s(&out.join("reference")),
        s(&out.join("query")),
        "--truth",
        s(&out.join("truth.json")),
        "--out",
        s(&report),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = read_report(&report);
    let r = report.trials[0].result.as_ref().unwrap();
    assert_eq!(r.hypotheses, 78);
    let t = r.truth.as_ref().unwrap();
    assert!(t.add < 0.1 * t.diameter, "ADD {} vs D {}", t.add, t.diameter);
    assert_eq!(r.timings, None);
    assert_eq!(report.aggregate.add_01, Some(100.0));
}

#[test]
fn fewer_hypotheses_run_faster() {
    let tmp = tempfile::tempdir().unwrap();
    let out = scene(tmp.path());
    let cfg = tmp.path().join("n12.json");
    std::fs::write(&cfg, r#"{"tau": {"hypotheses": 12}}"#).unwrap();
    let (r, q) = (out.join("reference"), out.join("query"));
    let total = |extra: &[&str]| {
        let mut args = vec!["estimate", s(&r), s(&q), "--timings", "--parallel", "1"];
        args.extend_from_slice(extra);
        let run = refpose(&args);
        assert!(run.status.success());
        let report = Report::from_json(&String::from_utf8(run.stdout).unwrap(), "stdout").unwrap();
        let r = report.trials[0].result.clone().unwrap();
        (r.hypotheses, r.timings.unwrap().total())
    };
    let (n12, t12) = total(&["--config", s(&cfg)]);
    let (n78, t78) = total(&[]);
    assert_eq!((n12, n78), (12, 78));
    assert!(t12 < t78, "N=12 took {t12} ms, N=78 {t78} ms");
}

#[test]
fn full_pruning_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = scene(tmp.path());
    let cfg = tmp.path().join("tau1.json");
    std::fs::write(&cfg, r#"{"tau": 1.0}"#).unwrap();
    let report = tmp.path().join("r.json");
    let (r, q) = (out.join("reference"), out.join("query"));
    let run = refpose(&["estimate", s(&r), s(&q), "--config", s(&cfg), "--out", s(&report)]);
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).contains("no pose hypotheses"));
    let report = read_report(&report);
    assert_eq!(report.trials[0].error.as_ref().unwrap().stage, "estimate");
}

#[test]
fn bad_inputs_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = scene(tmp.path());
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"iterations": 0}"#).unwrap();
    let r = s(&out).to_string() + "/reference";
    let q = s(&out).to_string() + "/query";
    assert_eq!(refpose(&["estimate", &r, &q, "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(refpose(&["estimate", &r, "/nonexistent"]).status.code(), Some(2));
    // The query has no pose, so it cannot serve as the reference.
    assert_eq!(refpose(&["estimate", &q, &q]).status.code(), Some(1));
}

fn write_manifest(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("manifest.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn single_trial_aggregate_matches_trial() {
    let tmp = tempfile::tempdir().unwrap();
    scene(tmp.path());
    let manifest = write_manifest(
        tmp.path(),
        r#"{"trials": [{"name": "box", "reference": "scene/reference", "query": "scene/query", "truth": "scene/truth.json"}]}"#,
    );
    let run = refpose(&["eval", s(&manifest), "--timings"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = Report::from_json(&String::from_utf8(run.stdout).unwrap(), "stdout").unwrap();
    let r = report.trials[0].result.as_ref().unwrap();
    let t = r.truth.as_ref().unwrap();
    let agg = &report.aggregate;
    assert_eq!(agg.add_01, Some(if t.error < 0.1 * t.diameter { 100.0 } else { 0.0 }));
    assert_eq!(agg.mean_error_by_iteration.as_ref(), Some(&t.error_by_iteration));
    assert_eq!(agg.mean_stage_ms, r.timings);
    assert_eq!(agg.total_ms.unwrap().p50, r.timings.unwrap().total());
}

#[test]
fn eval_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(
        tmp.path(),
        &format!(r#"{{"trials": [{{"synthetic": {BOX_PAIR}}}, {{"reference": "missing", "query": "missing"}}]}}"#),
    );
    let run = |extra: &[&str]| {
        let mut args = vec!["eval", s(&manifest)];
        args.extend_from_slice(extra);
        let out = refpose(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run(&["--parallel", "1"]);
    assert_eq!(a, run(&["--parallel", "0"]));
    assert_eq!(a, run(&["--parallel", "3"]));
    let report = Report::from_json(std::str::from_utf8(&a).unwrap(), "stdout").unwrap();
    assert_eq!((report.aggregate.succeeded, report.aggregate.failed), (1, 1));
    assert_eq!(report.trials[1].error.as_ref().unwrap().stage, "load");
    assert_ne!(a, run(&["--seed", "4"]));
}
