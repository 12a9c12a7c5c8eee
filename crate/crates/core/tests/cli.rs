use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use search_duopoly::cli::{load_config, EXIT_VALIDATION};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_search-duopoly"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn uniform_config() -> String {
    manifest("configs/uniform.json").display().to_string()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn shipped_configs_load() {
    for f in ["configs/uniform.json", "configs/step-unknown.json"] {
        load_config(&manifest(f)).unwrap();
    }
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(manifest("schema/run-config.schema.json")).unwrap()).unwrap();
    let run_keys: Vec<&str> = schema["$defs"]["run"]["properties"]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(run_keys, ["grid_n", "market", "n", "seed"]);
}

#[test]
fn solve_emits_equilibrium_with_metadata() {
    let cfg = uniform_config();
    let out = run(&["solve", "--config", &cfg, "--s", "0.1"]);
    let v = json(&out);
    let eq = &v["equilibria"][0];
    assert!((eq["px"].as_f64().unwrap() - 0.591268).abs() < 1e-5);
    assert_eq!(v["meta"]["quadrature_nodes_per_interval"], 64);
    assert_eq!(v["meta"]["market"]["s"], 0.1);
    // byte-identical on rerun
    assert_eq!(out.stdout, run(&["solve", "--config", &cfg, "--s", "0.1"]).stdout);
}

#[test]
fn sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let p = path.to_str().unwrap();
    let cfg = uniform_config();
    let args = ["sweep", "--param", "s", "--from", "0.02", "--to", "0.6", "--steps", "30", "--config", &cfg, "--out", p];
    assert!(run(&args).status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "param,pX,pY,piX,piY,CS,TS,exit,search,switchX,switchY");
    assert_eq!(lines.len(), 31);
    assert!(lines[30].starts_with("0.6,0.5,0.5,"));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["steps"], 30);
    assert!(run(&args).status.success());
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());

    let mut det = args.to_vec();
    det.insert(0, "--deterministic");
    assert!(run(&det).status.success());
    let seq = std::fs::read_to_string(&path).unwrap();
    assert_eq!(seq.lines().count(), 31);
}

#[test]
fn regions_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fig1X.csv");
    let svg = dir.path().join("fig1X.svg");
    let out = run(&[
        "regions", "--px", "0.6", "--py", "0.45", "--s", "0.1", "--grid", "64", "--home", "X",
        "--out", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("vx,vy,outcome\n"));
    assert_eq!(text.lines().count(), 64 * 64 + 1);
    assert!(text.contains("search-switch"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn unknown_config_key_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"firms":[{"cost":0,"mu":0.5,"dist":{"type":"uniform"}},{"cost":0,"mu":0.5,"dist":{"type":"uniform","x":1}}],"s":0.1}"#,
    )
    .unwrap();
    let out = run(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("firms[1].dist"), "{err}");
}

#[test]
fn invalid_arguments_exit_2() {
    assert_eq!(run(&["solve", "--s=-1"]).status.code(), Some(EXIT_VALIDATION));
    assert_eq!(run(&["oligopoly", "--firms", "1"]).status.code(), Some(EXIT_VALIDATION));
    assert_eq!(run(&["bogus"]).status.code(), Some(EXIT_VALIDATION));
    assert_eq!(run(&["calc", "--px", "1.5", "--py", "0.5"]).status.code(), Some(EXIT_VALIDATION));
}

#[test]
fn simulate_is_reproducible_and_agrees() {
    let args = ["simulate", "--px", "0.6", "--py", "0.45", "--n", "100000", "--seed", "5"];
    let a = run(&args);
    let v = json(&a);
    assert_eq!(v["comparison"]["pass"], true);
    assert_eq!(v["simulation"]["n"], 100000);
    assert_eq!(a.stdout, run(&args).stdout);
}

#[test]
fn closed_forms_and_monopoly() {
    let v = json(&run(&["hotelling", "--mu-x", "0.75", "--cx", "0.2", "--cy", "0.2", "--s", "0.1"]));
    assert!((v["hotelling"]["weighted_avg"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    let v = json(&run(&["monopoly"]));
    assert_eq!(v["monopoly_prices"][0], 0.5);
    let v = json(&run(&["oligopoly", "--firms", "2", "--s", "0.7"]));
    assert_eq!(v["oligopoly"]["price"], 0.5);
    let v = json(&run(&["check"]));
    assert!(v["price_conditions"][0]["holds"].as_bool().unwrap());
    let v = json(&run(&["calc", "--px", "0.6", "--py", "0.45"]));
    assert!((v["firms"][0]["profit"].as_f64().unwrap() - 0.144).abs() < 1e-9);
}

#[test]
fn unknown_variant_reports_reference_comparison() {
    let cfg = manifest("configs/step-unknown.json").display().to_string();
    let v = json(&run(&["solve", "--config", &cfg]));
    let p = v["equilibria"][0]["px"].as_f64().unwrap();
    assert!((0.30..=0.32).contains(&p), "{p}");
    assert!(v["references"].as_array().unwrap().iter().any(|r| r["reference"] == 0.31));
}
