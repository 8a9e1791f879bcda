use std::fs;
use std::process::Command;

fn pogorelov() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pogorelov"))
}

#[test]
fn solve_writes_tables_and_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        format!(
            r#"{{"problem": "two_dirac", "sizes": [17, 33], "output": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let status = pogorelov().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 3);
    let raster = fs::read_to_string(out.join("cells_33.csv")).unwrap();
    assert_eq!(raster.lines().count(), 33);
    assert!(out.join("potential_17.csv").exists());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"].as_array().unwrap().len(), 2);

    // Identical reruns give identical tables.
    let again = pogorelov().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("table.csv")).unwrap(), table);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"problem": "one_dirac", "sizes": [34]}"#).unwrap();
    let out = pogorelov().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let missing = pogorelov().args(["solve", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let unknown = pogorelov().args(["convergence", "--problem", "seven_dirac", "--sizes", "17"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn failed_rows_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tight.json");
    // One Newton iteration cannot converge from the default guess.
    fs::write(
        &config,
        r#"{"problem": "two_dirac", "sizes": [17, 33], "solver": {"max_iterations": 1}}"#,
    )
    .unwrap();
    let out = pogorelov().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("FAILED").count(), 2, "{text}");
}

#[test]
fn oracle_prints_heights() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("five.json");
    fs::write(&config, r#"{"problem": "five_dirac", "sizes": [33]}"#).unwrap();
    let out = pogorelov().args(["oracle", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let h: Vec<f64> = r["heights"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (a, b) in h.iter().zip([0.2, 0.2, 0.2, 0.0, 0.0]) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn compare_runs_both_modes() {
    let out = pogorelov().args(["compare", "--problem", "one_dirac", "--size", "17"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("(aleksandrov)") && text.contains("(viscosity_baseline)"), "{text}");
}

#[test]
fn custom_measures_load_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let measure = dir.path().join("pair.json");
    fs::write(
        &measure,
        r#"{"locations": [{"x": 0.0, "y": 0.5}, {"x": 0.0, "y": -0.5}], "weights": [1.5707963267948966, 1.5707963267948966]}"#,
    )
    .unwrap();
    let problem = format!("custom:{}", measure.display());
    let out = pogorelov().args(["convergence", "--problem", &problem, "--sizes", "17"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // Weights not balancing the disk are rejected as a config error.
    fs::write(&measure, r#"{"locations": [{"x": 0.0, "y": 0.0}], "weights": [1.0]}"#).unwrap();
    let out = pogorelov().args(["convergence", "--problem", &problem, "--sizes", "17"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
