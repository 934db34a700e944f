use std::path::{Path, PathBuf};
use std::process::Command;

use pilotwave::scenarios::run_scenario;
use pilotwave_cli::{
    parse_config, parse_config_str, run, Registry, EXIT_CONFIG, EXIT_GATE, EXIT_PASS,
};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pilotwave"))
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn shipped_configs_validate() {
    let registry = Registry::builtin();
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            parse_config(&path, &registry).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 7);
    let c = parse_config(&configs().join("two_slit.toml"), &registry).unwrap();
    assert_eq!(c.scenario, "two_slit");
}

#[test]
fn validate_reports_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(
        &path,
        "scenario = \"two_slit\"\n[ensemble]\nn = 0\nspeed = 2\n",
    )
    .unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("seed"));
    assert!(stderr.contains("ensemble size must be ≥ 1"));
    assert!(stderr.contains("ensemble.speed"));

    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn list_shows_builtins() {
    let out = bin().arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    for id in [
        "two_slit",
        "stationary_universe",
        "branching_universe",
        "pointer_measurement",
        "free_gaussian",
        "plane_wave",
    ] {
        assert!(text.contains(id), "{id}");
    }
}

#[test]
fn registry_sizes() {
    let mut r = Registry::builtin();
    r.register("shifted_plane_wave", "plane wave with another seed", |p| {
        run_scenario("plane_wave", &p.clone())
    })
    .unwrap();
    assert_eq!(r.len(), 7);
    assert_eq!(r.table().lines().count(), 8);

    let empty = Registry::empty();
    assert_eq!(empty.table().lines().count(), 1);

    // a registered scenario runs through the same pipeline
    let tmp = tempfile::tempdir().unwrap();
    let mut c = parse_config_str(
        "scenario = \"shifted_plane_wave\"\nseed = 1\n[output]\nplots = false\n",
        &r,
    )
    .unwrap();
    c.output_dir = tmp.path().to_path_buf();
    assert_eq!(run(&c, &r).unwrap().exit_code, EXIT_PASS);
    assert!(parse_config_str(
        "scenario = \"shifted_plane_wave\"\nseed = 1\n",
        &Registry::builtin()
    )
    .is_err());
}

#[test]
fn stationary_universe_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("run")
        .arg(configs().join("stationary_universe.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    let r = report(tmp.path());
    assert_eq!(r["passed"], true);
    assert!(check(&r, "eigen_residual")["value"].as_f64().unwrap() < 1e-8);
    assert!(
        check(&r, "max_projective_distance")["value"]
            .as_f64()
            .unwrap()
            < 1e-6
    );
    assert_eq!(r["diagnostics"]["clamp_events"], 0);
    for f in [
        "trajectories.csv",
        "results.csv",
        "density_t0.csv",
        "trajectories.svg",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn unstable_dt_is_a_gate_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("run")
        .arg(configs().join("unstable.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_GATE));
    let r = report(tmp.path());
    assert_eq!(r["passed"], false);
    let failures = r["failures"].as_array().unwrap();
    assert!(failures.iter().any(|f| f
        .as_str()
        .unwrap()
        .contains("dt exceeds spectral stability bound")));
}

#[test]
fn two_slit_fan() {
    let registry = Registry::builtin();
    let tmp = tempfile::tempdir().unwrap();
    let mut c = parse_config(&configs().join("two_slit.toml"), &registry).unwrap();
    c.output_dir = tmp.path().to_path_buf();
    let status = run(&c, &registry).unwrap();
    assert_eq!(status.exit_code, EXIT_PASS, "{:?}", status.failures);
    let r = report(tmp.path());
    assert_eq!(check(&r, "slit_passage_failures")["value"], 0.0);
    assert_eq!(check(&r, "axis_crossings")["value"], 0.0);

    let svg = std::fs::read_to_string(tmp.path().join("trajectories.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 200);
    assert!(!svg.contains("href"));
    assert!(tmp.path().join("histogram.svg").exists());

    let csv = std::fs::read_to_string(tmp.path().join("trajectories.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,q0,q1,trajectory,u0,u1"));
    let ids: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(ids.len(), 200);
}

#[test]
fn reports_are_reproducible() {
    let registry = Registry::builtin();
    let tmp = tempfile::tempdir().unwrap();
    let base = parse_config(&configs().join("plane_wave.toml"), &registry).unwrap();
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let mut c = base.clone();
        c.output_dir = tmp.path().join(name);
        assert_eq!(run(&c, &registry).unwrap().exit_code, EXIT_PASS);
        texts.push((
            std::fs::read(c.output_dir.join("report.json")).unwrap(),
            std::fs::read(c.output_dir.join("trajectories.csv")).unwrap(),
        ));
    }
    assert_eq!(texts[0], texts[1]);
    assert!(!String::from_utf8_lossy(&texts[0].0).contains("timestamp"));

    // a different seed changes the ensemble
    let mut c = base.clone();
    c.params.seed += 1;
    c.output_dir = tmp.path().join("c");
    run(&c, &registry).unwrap();
    assert_ne!(
        std::fs::read(c.output_dir.join("trajectories.csv")).unwrap(),
        texts[0].1
    );
}

#[test]
fn seed_override_on_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            configs().join("plane_wave.toml").to_str().unwrap(),
            "--seed",
            "77",
            "--workers",
            "2",
            "--out",
        ])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    let r = report(tmp.path());
    assert_eq!(r["seed"], 77);
    assert_eq!(r["config"]["workers"], 2);
}
