use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_qnlchain");

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(task: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg(task)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn potential_check_passes_for_lennard_jones() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("potential-check", &scenario("potential_check.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{o:?}");
    let v = json(&dir.path().join("potential_check.json"));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["task"], "potential-check");
    assert_eq!(v["all_pass"], true);
    let gamma = v["constants"]["gamma"].as_f64().unwrap();
    assert!((gamma - 1.1196108663112256).abs() < 1e-12);
}

#[test]
fn minimize_writes_both_deformations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("minimize", &scenario("minimize.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).lines().count(), 2);
    for f in ["deformation_atomistic.csv", "deformation_qnl.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "i,x,u,strain");
        assert_eq!(text.lines().count(), 1 + 65);
    }
    let v = json(&dir.path().join("minimize.json"));
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
}

#[test]
fn converge_rows_match_requested_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("converge", &scenario("converge.toml"), dir.path(), &["--threads", "2"]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,minAtomistic,minQNL,gap,gapOverLambda,firstOrderAtomistic,firstOrderQNL,crackLocationAtomistic,crackLocationQNL"
    );
    let ns: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["32", "64", "128", "256"]);
}

#[test]
fn boundary_layer_table_has_converged_entries() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("boundary-layer", &scenario("boundary_layer.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("limit_table.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "name,value,N_used,truncation_estimate");
    let b_gamma: f64 = csv
        .lines()
        .find(|l| l.starts_with("B_gamma,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((b_gamma + 0.12498515568).abs() < 1e-9);
}

#[test]
fn fracture_map_regions_follow_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("fracture-map", &scenario("fracture_map.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("fracture_map.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let expected = if r[0] == "1" { "continuum" } else { "left-atomistic" };
        assert_eq!(r[2], expected, "{r:?}");
    }
}

#[test]
fn limit_compare_reports_both_minima() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("limit-compare", &scenario("limit_compare.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{o:?}");
    let v = json(&dir.path().join("limit_compare.json"));
    let a = v["atomistic"]["value"].as_f64().unwrap();
    let q = v["qc"]["value"].as_f64().unwrap();
    assert!((a - v["atomistic_formula"].as_f64().unwrap()).abs() < 1e-12);
    assert!(q < a);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = scenario("converge.toml");
    assert!(run("converge", &cfg, a.path(), &["--threads", "1"]).status.success());
    assert!(run("converge", &cfg, b.path(), &["--threads", "3"]).status.success());
    for f in ["convergence.csv", "convergence.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("boundary_layer.toml");
    assert!(run("boundary-layer", &cfg, dir.path(), &[]).status.success());
    let again = run("boundary-layer", &cfg, dir.path(), &[]);
    assert_eq!(again.status.code(), Some(3));
    assert!(run("boundary-layer", &cfg, dir.path(), &["--force"]).status.success());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run("minimize", &dir.path().join("nope.toml"), dir.path(), &[]);
    assert_eq!(missing.status.code(), Some(2));

    let wrong_task = run("converge", &scenario("minimize.toml"), dir.path(), &[]);
    assert_eq!(wrong_task.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\n[potential]\nkind = \"lennard-jones\"\nk1 = 1.0\nk2 = 1.0\nbogus = 3\n").unwrap();
    let o = run("potential-check", &bad, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("potential_check.json").exists());
}

#[test]
fn json_scenarios_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(
        &cfg,
        r#"{"name": "lj", "potential": {"kind": "lennard-jones", "k1": 1.0, "k2": 1.0},
            "chain": {"n": 16, "ell": "gamma", "u0_1": "delta1", "u1_1": "gamma"}}"#,
    )
    .unwrap();
    let o = run("minimize", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{o:?}");
    assert!(dir.path().join("deformation_atomistic.csv").exists());
    assert!(!dir.path().join("deformation_qnl.csv").exists());
}
