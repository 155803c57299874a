use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kirchhoff_cli::config::{parse_config, parse_config_for, Scenario};

const BIN: &str = env!("CARGO_BIN_EXE_kirchhoff");

fn golden(name: &str) -> String {
    format!("{}/golden/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn kirchhoff(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn zero_duration_gives_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[integrator]\nt_final = 0.0\n");
    let out = tmp.path().join("out");
    let res = kirchhoff(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t,hamiltonian,norm_h1,norm_l2,e_total_s0"));
    assert!(lines[1].starts_with("0.0,"));
    assert!(out.join("final_state.json").exists());
    assert!(!out.join("trajectory.json").exists());
}

#[test]
fn obstruction_primary_case_is_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let res = kirchhoff(&["obstruction", "--config", &golden("obstruction"), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let verdict: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("verdict.json")).unwrap()).unwrap();
    let cert = &verdict["worst_case"]["certificate"];
    assert_eq!(cert["feasible"], false);
    assert_eq!(cert["residual"], 1.0);
    assert!(cert["derived_identity"].as_str().unwrap().starts_with("0 = "));
    assert_eq!(verdict["suite"], "obstruction");
    assert!(verdict["artifacts"].as_array().unwrap().iter().any(|a| a == "certificate.json"));
}

#[test]
fn golden_verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let res = kirchhoff(&["verify", "--config", &golden("verify"), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    let verdict: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["pass"], true);
    assert_eq!(verdict["checks"].as_array().unwrap().len(), 7);
}

#[test]
fn every_golden_config_parses_for_its_scenario() {
    for s in Scenario::ALL {
        let path = golden(s.name());
        let Ok(text) = fs::read_to_string(&path) else { continue };
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{path}: {e}"));
        assert_eq!(cfg.scenario, s);
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn invalid_config_exits_one_and_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[integrator]\ndt = -1.0\n[grid]\nmodes = 1\n");
    let res = kirchhoff(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("integrator.dt") && err.contains("grid.modes"), "{err}");
}

#[test]
fn scenario_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let res = kirchhoff(&["sweep", "--config", &golden("verify"), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn gate_violation_needs_explicit_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "[data]\nsize = 10.0\n[integrator]\nt_final = 0.01\n");
    let res = kirchhoff(&["energies", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("gate"));

    let cfg = write_config(tmp.path(), "allow_gate_violation = true\n[data]\nsize = 10.0\n[integrator]\nt_final = 0.01\n");
    let res = kirchhoff(&["energies", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let verdict: serde_json::Value = serde_json::from_slice(&fs::read(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (k, threads) in ["1", "4", "8", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let res = kirchhoff(&[
            "sweep",
            "--config",
            &golden("sweep"),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--plots",
        ]);
        assert_eq!(res.status.code(), Some(0));
        let files = read_dir(&out);
        assert!(files.contains_key("scaling.svg"));
        runs.push(files);
    }
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn print_config_echoes_a_parsable_document() {
    let res = kirchhoff(&["resonance", "--print-config", "--seed", "9"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let cfg = parse_config_for(&text, Some(Scenario::Resonance)).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.to_toml(), text);
}
