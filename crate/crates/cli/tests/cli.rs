use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn wmest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmest"))
        .args(args)
        .env_remove("WM_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = wmest(args);
    assert!(
        out.status.success(),
        "wmest {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs catalog, plan, graphs and train once on the default configuration.
fn workspace() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = s(dir.path()).to_string();
        for cmd in ["catalog", "plan", "graphs", "train"] {
            ok(&[cmd, "--out", &out]);
        }
        dir
    })
    .path()
}

/// Flags that point a command at the shared artifacts while writing to `out`.
fn inputs(out: &Path) -> Vec<String> {
    let ws = workspace();
    let mut v = vec!["--out".to_string(), s(out).to_string()];
    for (flag, file) in [("--catalog", "catalog.json"), ("--policies", "policies.json"), ("--space", "space.json")] {
        v.push(flag.into());
        v.push(s(&ws.join(file)).to_string());
    }
    v
}

fn run_with(cmd: &[&str], out: &Path) -> String {
    let extra = inputs(out);
    let mut args: Vec<&str> = cmd.to_vec();
    args.extend(extra.iter().map(String::as_str));
    ok(&args)
}

#[test]
fn pipeline_writes_experiment_two_summary() {
    let ws = workspace();
    for f in ["catalog.json", "policies.json", "graphs.json", "bags.json", "space.json"] {
        assert!(ws.join(f).exists(), "{f} missing");
    }
    let stdout = ok(&["exp", "2", "--out", s(ws)]);
    assert!(stdout.contains("Experiment 2"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.join("exp2_summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn experiment_three_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_with(&["exp", "3", "--seed", "11"], &a);
    run_with(&["exp", "3", "--seed", "11"], &b);
    let read = |d: &PathBuf| std::fs::read(d.join("exp3_results.csv")).unwrap();
    assert!(!read(&a).is_empty());
    assert_eq!(read(&a), read(&b));
}

#[test]
fn plot_is_well_formed_with_one_point_per_environment() {
    let tmp = tempfile::tempdir().unwrap();
    run_with(&["plot", "--exp", "1"], tmp.path());
    let text = std::fs::read_to_string(tmp.path().join("exp1_projection.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("SVG parses as XML");
    let points = doc
        .descendants()
        .filter(|n| n.has_tag_name("circle") && n.attribute("class") == Some("point"))
        .count();
    let catalog: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(workspace().join("catalog.json")).unwrap()).unwrap();
    assert_eq!(points, catalog["environments"].as_array().unwrap().len());
}

#[test]
fn estimate_prints_a_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let queries = tmp.path().join("q.json");
    std::fs::write(
        &queries,
        r#"[{"state": {"x": 3, "y": 3, "orientation": "E", "has_key": true, "door_open": false}, "action": "open_door"}]"#,
    )
    .unwrap();
    let stdout = run_with(&["estimate", "--obs", "0", "--queries", s(&queries), "--exclude", "5,6"], tmp.path());
    let result: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let ranking = result["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), 106);
    assert!(ranking.iter().all(|r| r[0] != 5 && r[0] != 6));
    // The door must be at row 3 for that query to hold.
    let best = result["env_est"].as_u64().unwrap();
    let catalog: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(workspace().join("catalog.json")).unwrap()).unwrap();
    let env = &catalog["environments"][best as usize];
    assert_eq!(env["door"][1], 3);
}

#[test]
fn missing_artifact_names_its_producer() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wmest(&["plan", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("wmest catalog"));

    ok(&["catalog", "--out", s(tmp.path())]);
    let out = wmest(&["exp", "2", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("wmest plan"));
}

#[test]
fn bad_flags_fail_with_a_diagnostic() {
    let out = wmest(&["exp", "8"]);
    assert!(!out.status.success());
    let out = wmest(&["exp", "2", "--prior", "prior1", "--out", "/nonexistent"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--prior"));
}

#[test]
fn catalog_accepts_a_layout_file() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = tmp.path().join("layout.json");
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(workspace().join("catalog.json")).unwrap()).unwrap();
    value["layout"]["door_rows"] = serde_json::json!([2, 5]);
    std::fs::write(&layout, value["layout"].to_string()).unwrap();
    let file = tmp.path().join("small.json");
    ok(&["catalog", "--layout", s(&layout), "--out", s(&file)]);
    let small: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(small["environments"].as_array().unwrap().len(), 36);
}
