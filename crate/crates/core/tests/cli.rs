use std::path::Path;
use std::process::{Command, Output};

fn rigpose(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigpose"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = rigpose(&["simulate", "--runs", "1", "--seed", "7", "--out", name], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method,tx,ty,tz,alpha,beta,gamma\n"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn simulate_writes_json_metadata_and_honours_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigpose(
        &["simulate", "--runs", "1", "--frames", "10", "--methods", "cam1,RC", "--out", "r.csv", "--json", "r.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["metadata"]["runs"], 1);
    assert_eq!(json["metadata"]["frames"], 10);
    assert_eq!(json["metadata"]["config_hash"].as_str().unwrap().len(), 64);
    let methods: Vec<&str> = json["rows"].as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["cam1", "RC"]);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigpose(&["simulate", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = rigpose(&["simulate", "--methods", "cam9"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(dir.path().join("cfg.json"), r#"{"sim": {"n_frames": 1}}"#).unwrap();
    let out = rigpose(&["simulate", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tracks_without_header_are_rejected_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigpose(
        &["export", "--layout", "stereo", "--frames", "5", "--rig-out", "rig.json", "--tracks-out", "t.csv", "--truth-out", "truth.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(dir.path().join("nohdr.csv"), body).unwrap();

    let out = rigpose(
        &["run-tracks", "--layout", "stereo", "--rig", "rig.json", "--tracks", "nohdr.csv", "--out", "p.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("nohdr.csv") && msg.contains("line 1"), "{msg}");
}

#[test]
fn run_tracks_on_exported_runs() {
    let dir = tempfile::tempdir().unwrap();
    for (layout, methods) in [("stereo", vec!["4cameras"]), ("nonoverlap", vec!["cam1", "cam2", "cam3", "cam4", "RC"])] {
        let out = rigpose(
            &["export", "--layout", layout, "--run", "1", "--frames", "30", "--rig-out", "rig.json", "--tracks-out", "t.csv", "--truth-out", "truth.csv"],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let out = rigpose(
            &["run-tracks", "--layout", layout, "--rig", "rig.json", "--tracks", "t.csv", "--out", "p.csv", "--truth", "truth.csv", "--diag", "d.jsonl"],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

        let poses = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
        assert!(poses.starts_with("frame,tx,ty,tz,alpha,beta,gamma,method\n"));
        assert_eq!(poses.lines().count(), 1 + 30 * methods.len());
        let report = String::from_utf8(out.stdout).unwrap();
        for m in &methods {
            assert!(report.lines().any(|l| l.starts_with(&format!("{m},"))), "{report}");
        }
        let diag = std::fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
        assert_eq!(diag.lines().count(), 30 * methods.len());
        for line in diag.lines() {
            let _: serde_json::Value = serde_json::from_str(line).unwrap();
        }
    }
}

#[test]
fn layout_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    rigpose(
        &["export", "--layout", "stereo", "--frames", "5", "--rig-out", "rig.json", "--tracks-out", "t.csv", "--truth-out", "truth.csv"],
        dir.path(),
    );
    let out = rigpose(
        &["run-tracks", "--layout", "nonoverlap", "--rig", "rig.json", "--tracks", "t.csv", "--out", "p.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn selftest_reports_every_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = rigpose(&["selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["jacobian", "triangulation", "scale-system", "change-of-basis", "lowe", "stereo-tracking"] {
        assert!(text.contains(name), "{text}");
    }
    assert!(text.contains("residual"));
}
