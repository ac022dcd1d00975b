//! End-to-end command line checks driving the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hpt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hpt"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn gen_micro(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("micro{seed}.json"));
    let out = run(hpt()
        .args(["gen", "--kind", "micro", "--seed"])
        .arg(seed.to_string())
        .arg("--out")
        .arg(&path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn gen_net_prep_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_micro(dir.path(), 21);
    let out = run(hpt().args(["net", "stats", "--instance"]).arg(&inst));
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("section"));
    assert!(text.contains("capacity arcs"));

    let out = run(hpt()
        .args(["prep", "--instance"])
        .arg(&inst)
        .args(["--prep", "trains,pax,bounds"]));
    assert!(out.status.success());
    assert!(stdout(&out).contains("inventory bounds"));
}

#[test]
fn solve_report_validate_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_micro(dir.path(), 12);
    let report = dir.path().join("report.json");
    let trace = dir.path().join("trace.csv");
    let svg = dir.path().join("diagram.svg");
    let out = run(hpt()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--formulation", "benders", "--gap", "0"])
        .arg("--out")
        .arg(&report)
        .arg("--trace")
        .arg(&trace)
        .arg("--diagram")
        .arg(&svg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(report.exists() && trace.exists() && svg.exists());
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));

    let out = run(hpt()
        .args(["validate", "--instance"])
        .arg(&inst)
        .arg("--report")
        .arg(&report));
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("PASS"));

    // Corrupt one departure: the validator must reject.
    let text = std::fs::read_to_string(&report).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let trains = doc["trains"].as_array_mut().unwrap();
    let operated = trains
        .iter_mut()
        .find(|t| t["operated"].as_bool() == Some(true))
        .expect("an operated train");
    let ev = &mut operated["events"][0];
    ev["dep"] = serde_json::Value::from(ev["dep"].as_i64().unwrap() + 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = run(hpt()
        .args(["validate", "--instance"])
        .arg(&inst)
        .arg("--report")
        .arg(&bad));
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));

    // Artifact re-emission from the stored report.
    let svg2 = dir.path().join("diagram2.svg");
    let out = run(hpt()
        .args(["report", "--report"])
        .arg(&report)
        .arg("--instance")
        .arg(&inst)
        .arg("--diagram")
        .arg(&svg2));
    assert!(out.status.success());
    assert_eq!(svg_text, std::fs::read_to_string(&svg2).unwrap());
}

#[test]
fn formulations_agree_on_micro() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_micro(dir.path(), 3);
    let mut objectives = Vec::new();
    for formulation in ["benders", "arc", "path"] {
        let report = dir.path().join(format!("{formulation}.json"));
        let out = run(hpt()
            .args(["solve", "--instance"])
            .arg(&inst)
            .args(["--formulation", formulation, "--gap", "0"])
            .arg("--out")
            .arg(&report));
        assert_eq!(
            out.status.code(),
            Some(0),
            "{formulation}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        objectives.push(doc["objective"].as_f64().unwrap());
    }
    for &o in &objectives[1..] {
        assert!(
            (o - objectives[0]).abs() <= 1e-6 * objectives[0].abs().max(1.0),
            "{objectives:?}"
        );
    }
}

#[test]
fn psr_and_delete_baselines_run() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_micro(dir.path(), 12);
    let out = run(hpt()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--formulation", "psr", "--psr-fix", "1", "--gap", "0"]));
    assert!(
        matches!(out.status.code(), Some(0) | Some(2)),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = run(hpt()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--psr-delete", "1", "--gap", "0"]));
    assert!(
        matches!(out.status.code(), Some(0) | Some(2)),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = run(hpt()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--none-routed", "--gap", "0"]));
    assert!(
        matches!(out.status.code(), Some(0) | Some(2)),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn external_solver_backend_reproduces_the_objective() {
    let tool = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tools/lp_solve.py");
    assert!(tool.exists());
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_micro(dir.path(), 3);

    let report_a = dir.path().join("in-process.json");
    let out = run(hpt()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--formulation", "benders", "--gap", "0"])
        .arg("--out")
        .arg(&report_a));
    assert_eq!(out.status.code(), Some(0));

    let report_b = dir.path().join("external.json");
    let out = run(hpt()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--formulation", "benders", "--gap", "0", "--solver"])
        .arg(format!("python3 {}", tool.display()))
        .arg("--out")
        .arg(&report_b));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_a).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_b).unwrap()).unwrap();
    let (oa, ob) = (a["objective"].as_f64().unwrap(), b["objective"].as_f64().unwrap());
    assert!((oa - ob).abs() <= 1e-6 * oa.abs().max(1.0), "{oa} vs {ob}");
}

#[test]
fn lp_file_is_written_and_stable() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_micro(dir.path(), 7);
    let lp1 = dir.path().join("a.lp");
    let lp2 = dir.path().join("b.lp");
    for lp in [&lp1, &lp2] {
        let out = run(hpt()
            .args(["solve", "--instance"])
            .arg(&inst)
            .args(["--formulation", "arc", "--gap", "0", "--write-lp"])
            .arg(lp));
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read_to_string(&lp1).unwrap();
    assert_eq!(a, std::fs::read_to_string(&lp2).unwrap());
    assert!(a.starts_with("\\ Problem:"));
    assert!(a.contains("Subject To"));
}
