use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spectral-shift"));
    cmd.env_remove("SPECTRAL_SHIFT_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, schemes: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
            "problem": {{ "beta": 0.5, "r": 1.0, "m": 32, "noise": 0.5, "seed": 3 }},
            "shift": {{ "family": "bounded", "a": 0.5 }},
            "filter": {{ "kind": "tikhonov" }},
            "schemes": {schemes},
            "theorem": "thm4",
            "n_grid": [64, 128, 256, 512],
            "trials": 3,
            "output": {{ "results": "{}" }}
        }}"#,
            dir.join("results.csv").display()
        ),
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn fit_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, "x,y,w\n0.5,2.0,1.0\n").unwrap();
    let model = dir.path().join("model.json");
    let m = model.to_str().unwrap();
    let out = run(&[
        "fit", "--data", data.to_str().unwrap(), "--out", m, "--kernel", "rbf", "--bandwidth", "0.3",
        "--lambda", "1", "--scheme", "exact",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["predict", "--model", m, "--x", "0.5"]);
    assert_eq!(code(&out), 0);
    // Single point, K = 1, w = 1, y = 2, λ = 1: f(x₁) = 2 / (1 + 1).
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "x,prediction\n0.5,1\n");
}

#[test]
fn fit_derives_weights_from_shift() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, "x,y\n0.2,1.0\n0.4,0.5\n0.9,-0.3\n").unwrap();
    let model = dir.path().join("model.json");
    let args = [
        "fit", "--data", data.to_str().unwrap(), "--out", model.to_str().unwrap(), "--kernel", "basis", "--m",
        "8", "--filter", "landweber", "--t", "20", "--shift", "log", "--scheme", "clipped", "--d-n", "1.5",
    ];
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&model).unwrap();
    assert!(text.contains("\"sqrt_weights\""));
    let out = run(&args[..args.len() - 2]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_is_reproducible_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"["unweighted", "exact"]"#);
    let results = dir.path().join("results.csv");
    assert_eq!(code(&run(&["simulate", "--config", &cfg, "--jobs", "2"])), 0);
    let first = std::fs::read(&results).unwrap();
    assert_eq!(code(&run(&["simulate", "--config", &cfg])), 0);
    assert_eq!(first, std::fs::read(&results).unwrap());

    let out = bin().args(["simulate", "--config", &cfg]).env("SPECTRAL_SHIFT_SEED", "99").output().unwrap();
    assert_eq!(code(&out), 0);
    assert_ne!(first, std::fs::read(&results).unwrap());
    let out = bin().args(["simulate", "--config", &cfg]).env("SPECTRAL_SHIFT_SEED", "x").output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn rates_report_theory_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#""unweighted""#);
    assert_eq!(code(&run(&["simulate", "--config", &cfg])), 0);
    let results = dir.path().join("results.csv");
    let r = results.to_str().unwrap();
    let out = run(&["rates", "--in", r, "--theorem", "thm4", "--r", "1", "--beta", "0.5"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("-0.4000"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("unweighted,")));
    let out = run(&["rates", "--in", r, "--theorem", "thm4", "--r", "1", "--beta", "0.5", "--tolerance", "0"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn plot_emits_one_polyline_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"["unweighted", "exact", "normalized"]"#);
    assert_eq!(code(&run(&["simulate", "--config", &cfg])), 0);
    let svg_path = dir.path().join("plot.svg");
    let results = dir.path().join("results.csv");
    let out = run(&["plot", "--in", results.to_str().unwrap(), "--out", svg_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), 3);
    for line in lines {
        assert_eq!(line.attribute("points").unwrap().split(' ').count(), 4);
    }
}

#[test]
fn diagnose_and_filter_checks_pass() {
    let out = run(&["diagnose"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("suite,cases,failures,worst_ratio,status\n"));
    assert_eq!(table.matches(",PASS").count(), 4);
    let out = run(&["filters-check", "--grid", "200"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().matches(",PASS").count(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["simulate", "--bogus"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"problem": {}}"#).unwrap();
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap()])), 1);

    // A zero median risk has no logarithm: numeric failure.
    let csv = dir.path().join("zero.csv");
    let mut text = String::from("n,trial,scheme,filter,lambda,D_n,risk,status,wall_ms\n");
    for n in [10, 20, 40] {
        text.push_str(&format!("{n},0,exact,tikhonov,0.1,,0,ok,\n"));
    }
    std::fs::write(&csv, text).unwrap();
    let out = run(&["rates", "--in", csv.to_str().unwrap(), "--theorem", "thm4", "--r", "1", "--beta", "1"]);
    assert_eq!(code(&out), 2);
}
