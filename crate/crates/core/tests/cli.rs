use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

use swbound::catalog;
use swbound::report::ReportDocument;
use swbound::system::SwitchingSystem;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swbound"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn analyze(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("--out")
        .arg(out)
        .arg("analyze")
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn scalar_config(bound: serde_json::Value, pipeline: &str) -> serde_json::Value {
    json!({
        "system": {"n": 1, "modes": [{"A": [[-1.0]], "H": [[1.0]], "bound": bound}]},
        "pipeline": pipeline,
        "v_source": {"inline": [[1.0]]}
    })
}

#[test]
fn example_configs_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["nonlinear.json", "affine.json", "lyapunov.json"] {
        let out = dir.path().join(name);
        let o = analyze(&configs().join(name), &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let doc = ReportDocument::load(&out.join("report.json")).unwrap();
        assert_eq!(doc.exit_code, 0);
        assert!(doc.combined_box.is_some());
        assert!(doc.timings.is_none());
    }
}

#[test]
fn no_feasible_transform_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = analyze(&configs().join("counterexample.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("search_log.jsonl").exists());
    let doc = ReportDocument::load(&dir.path().join("report.json")).unwrap();
    assert_eq!(doc.search.unwrap().log.len(), 100);
}

#[test]
fn spectral_radius_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rho.json",
        scalar_config(json!({"type": "affine", "F": [[2.0]], "w": [0.1]}), "affine"),
    );
    let o = analyze(&cfg, &dir.path().join("out"), &[]);
    let doc = ReportDocument::load(&dir.path().join("out/report.json")).unwrap();
    assert_eq!(o.status.code(), Some(3), "{:?}", doc.diagnostics);
    assert!(doc.affine.unwrap().rho_r >= 1.0);
}

#[test]
fn divergent_beta_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "beta.json",
        scalar_config(json!({"type": "expr", "components": ["t1^2"]}), "nonlinear"),
    );
    let o = analyze(&cfg, &dir.path().join("out"), &[]);
    let doc = ReportDocument::load(&dir.path().join("out/report.json")).unwrap();
    assert_eq!(o.status.code(), Some(4), "{:?}", doc.diagnostics);
    assert!(doc.nonlinear.is_none());
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.json");
    std::fs::write(&cfg, "{\"system\": ").unwrap();
    let o = analyze(&cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn repeated_analyze_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["nonlinear.json", "lyapunov.json"] {
        let a = dir.path().join(format!("{name}.a"));
        let b = dir.path().join(format!("{name}.b"));
        analyze(&configs().join(name), &a, &["--seed", "11"]);
        analyze(&configs().join(name), &b, &["--seed", "11"]);
        let ra = std::fs::read(a.join("report.json")).unwrap();
        let rb = std::fs::read(b.join("report.json")).unwrap();
        assert_eq!(ra, rb, "{name}");
    }
}

#[test]
fn search_override_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "search.json",
        json!({
            "system": "SYSTEM",
            "pipeline": "nonlinear",
            "v_source": {"search": {"restarts": 6, "max_evals": 600}}
        })
        .to_string()
        .replace("SYSTEM", configs().join("example_system.json").to_str().unwrap())
        .parse()
        .unwrap(),
    );
    let run = |tag: &str, seed: &str| {
        let out = dir.path().join(tag);
        analyze(&cfg, &out, &["--seed", seed]);
        std::fs::read(out.join("search_log.jsonl")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("c", "5"), run("d", "6"));
}

#[test]
fn timings_flag_adds_timings() {
    let dir = tempfile::tempdir().unwrap();
    analyze(&configs().join("nonlinear.json"), dir.path(), &["--timings"]);
    let doc = ReportDocument::load(&dir.path().join("report.json")).unwrap();
    assert!(doc.timings.unwrap().contains_key("nonlinear"));
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["affine.json", "lyapunov.json", "counterexample.json"] {
        let out = dir.path().join(name);
        analyze(&configs().join(name), &out, &[]);
        let text = std::fs::read_to_string(out.join("report.json")).unwrap();
        let doc = ReportDocument::from_json(&text).unwrap();
        assert_eq!(doc.to_json().unwrap(), text, "{name}");
    }
}

#[test]
fn simulate_against_affine_report() {
    let dir = tempfile::tempdir().unwrap();
    analyze(&configs().join("affine.json"), dir.path(), &[]);
    let o = bin()
        .arg("--out")
        .arg(dir.path())
        .args(["simulate", "--trials", "12", "--tf", "30", "--report"])
        .arg(dir.path().join("report.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("falsify.json")).unwrap()).unwrap();
    assert_eq!(summary["trials"], 12);
    assert_eq!(summary["violations"], 0);
}

#[test]
fn simulate_rejects_corrupted_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    std::fs::write(&report, "{\"tool\": {\"name\": \"swbound\"}}").unwrap();
    let o = bin()
        .arg("--out")
        .arg(dir.path())
        .arg("simulate")
        .arg("--report")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reproduce_example_prints_table() {
    let o = bin().args(["reproduce-example", "sec4_nonlinear"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Lambda[1,1]"));
    assert!(text.trim_end().ends_with("=> PASS"));
    let o = bin().args(["reproduce-example", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_system_matches_catalog() {
    let text = std::fs::read_to_string(configs().join("example_system.json")).unwrap();
    let cfg = serde_json::from_str(&text).unwrap();
    let sys = SwitchingSystem::from_config(&cfg).unwrap();
    let want = catalog::example_system(catalog::TAU_BAR);
    assert_eq!(sys.tau_bar, want.tau_bar);
    assert_eq!(sys.a_matrices(), want.a_matrices());
    for (a, b) in sys.modes.iter().zip(&want.modes) {
        assert_eq!(a.h, b.h);
        assert_eq!(a.bound.outputs(), b.bound.outputs());
    }
}
