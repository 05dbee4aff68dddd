use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("elastosurf-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn elastosurf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elastosurf")).arg("--out").arg(out).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.in.json");
    fs::write(&p, text).unwrap();
    p
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

const FLAT: &str = r#"{"grid":{"nx":16,"ny":16,"nz":17},"time":{"t_final":0.05,"fixed_dt":0.01},
    "initial":{"psi":[],"potential":[],"columns":[{"mean":[1,0]},{"mean":[0,1]},{"mean":[0,0]}]}}"#;

#[test]
fn flat_equilibrium_stays_put() {
    let dir = scratch("flat");
    let cfg = write_config(&dir, FLAT);
    let o = elastosurf(&dir, &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let diag = fs::read_to_string(dir.join("diag.csv")).unwrap();
    let mut lines = diag.lines();
    assert_eq!(lines.next(), Some("t,E0,E4,r_divv,r_divF,r_FN,min_d3phi,dt"));
    let e0: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(e0.len(), 6);
    assert!(e0.iter().all(|e| (e - e0[0]).abs() <= 1e-12 * e0[0]));
    assert!(dir.join("final/manifest.json").exists());
    assert!(dir.join("config.json").exists());
    let summary = stdout_json(&o);
    assert_eq!(summary["steps"], 5);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn runs_are_byte_reproducible() {
    let text = r#"{"grid":{"nx":16,"ny":16,"nz":17},"time":{"t_final":0.02,"snapshot_every":1},
        "initial":{"psi":[{"amp":0.01,"k":[1,0]}],"potential":[{"component":1,"amp":0.02,"k":[1,1],"power":1}]}}"#;
    let read = |name: &str| {
        let dir = scratch(name);
        let cfg = write_config(&dir, text);
        let o = elastosurf(&dir, &["run", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let diag = fs::read(dir.join("diag.csv")).unwrap();
        let psi = fs::read(dir.join("final/psi.bin")).unwrap();
        assert!(dir.join("snapshots/step_000000/v.bin").exists());
        fs::remove_dir_all(&dir).unwrap();
        (diag, psi)
    };
    assert_eq!(read("rep-a"), read("rep-b"));
}

#[test]
fn agu_suite_passes() {
    let dir = scratch("agu");
    let o = elastosurf(&dir, &["--seed", "3", "verify", "agu", "--cases", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert!(s["max_single"].as_f64().unwrap() <= 1e-9);
    assert_eq!(s["seed"], 3);
    let rows = fs::read_to_string(dir.join("agu.csv")).unwrap();
    assert_eq!(rows.lines().count(), 21);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn impossible_tolerance_is_a_verification_failure() {
    let dir = scratch("agu-tight");
    let o = elastosurf(&dir, &["verify", "agu", "--cases", "2", "--points", "1", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(3));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn picard_reports_loss_of_contraction_on_long_intervals() {
    let dir = scratch("picard");
    let cfg = write_config(
        &dir,
        r#"{"grid":{"nx":16,"ny":16,"nz":17},
            "initial":{"psi":[{"amp":0.01,"k":[1,0]}],"potential":[{"component":1,"amp":1.0,"k":[1,1],"power":1}]}}"#,
    );
    let o = elastosurf(&dir, &["picard", "--config", cfg.to_str().unwrap(), "--n-max", "4", "--T", "1.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("picard.csv")).unwrap();
    assert!(csv.starts_with("n,E3_diff,rho,flag"));
    assert!(csv.contains("no contraction"), "{csv}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn picard_contracts_on_defaults() {
    let dir = scratch("picard-small");
    let o = elastosurf(&dir, &["picard", "--n-max", "4", "--T", "0.05"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert_eq!(s["contracting"], true);
    assert!(s["max_rho_from_3"].as_f64().unwrap() <= 0.5);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_errors_exit_with_four() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, r#"{"grid":{"nx":16,"ny":16,"nz":17},"params":{"sigma":-1}}"#);
    let o = elastosurf(&dir, &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["path"], "params.sigma");
    assert_eq!(err["exit_code"], 4);

    let missing = elastosurf(&dir, &["run", "--config", dir.join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(4));
    let usage = elastosurf(&dir, &["galerkin", "--m", "0"]);
    assert_eq!(usage.status.code(), Some(4));
    let unknown = elastosurf(&dir, &["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(4));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn norms_of_a_written_snapshot() {
    let dir = scratch("norms");
    let cfg = write_config(&dir, FLAT);
    assert_eq!(elastosurf(&dir, &["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    let snap = dir.join("final");
    let o = elastosurf(&dir, &["norms", "--config", cfg.to_str().unwrap(), "--snapshot", snap.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert_eq!(s["v_H"].as_array().unwrap().len(), 5);
    assert!(s["constraints"]["r_FN"].as_f64().unwrap() < 1e-12);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn violent_flow_is_a_breakdown() {
    let dir = scratch("breakdown");
    let cfg = write_config(
        &dir,
        r#"{"grid":{"nx":16,"ny":16,"nz":17},"time":{"t_final":1.0},
            "initial":{"psi":[{"amp":0.01,"k":[1,0]}],"potential":[{"component":1,"amp":3.0,"k":[1,1],"power":1}]}}"#,
    );
    let o = elastosurf(&dir, &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "breakdown");
    // rows up to the breakdown are still written
    assert!(fs::read_to_string(dir.join("diag.csv")).unwrap().lines().count() > 2);
    fs::remove_dir_all(&dir).unwrap();
}
