use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn relaystab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaystab")).args(args).output().expect("binary runs")
}

const CHANNEL: &str = r#""channel": {"power": 10, "rate": 1, "variances": {
    "s1-d": 0.75, "s2-d": 0.8, "s1-r": 0.63, "s2-r": 0.73, "r-d": 0.85}}"#;

fn write_scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.json");
    fs::write(&path, format!("{{\"name\": \"t\", {CHANNEL}, {body}}}")).unwrap();
    path.display().to_string()
}

#[test]
fn fixed_policy_run_writes_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        r#""scheme": "SBC", "policy": {"w": [0.5, 0.5], "action": [[0.3, 0.1], [0.2, 0.3]]}, "demand": [0.1, 0.1]"#,
    );
    let out = dir.path().join("out");
    let o = relaystab(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(eval["stability"]["sources"].as_array().unwrap().len(), 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["solver_failures"], 0);
    assert_eq!(summary["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn optimize_run_reports_oracle_column() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#""scheme": "DBC", "optimize": {"w": [0.5, 0.5], "weights": [1, 1], "oracle": true}"#);
    let out = dir.path().join("out");
    let o = relaystab(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("optimizer.csv")).unwrap();
    let head = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let col = |name: &str| row[head.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    assert!(col("objective") >= 0.99 * col("oracle_objective"));
}

#[test]
fn sim_run_writes_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        r#""scheme": "CCMA", "policy": {"w": [0.5, 0.5]}, "demand": [0.1, 0.1],
           "sim": {"horizon": 20000, "warmup": 2000, "seed": 4}"#,
    );
    let out = dir.path().join("out");
    let o = relaystab(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sim_stats.json", "delay_histogram_s1.csv", "delay_histogram_s2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn misspelled_variance_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = format!(
        "{{\"name\": \"t\", {}, \"scheme\": \"SBC\", \"policy\": {{\"w\": [0.5, 0.5]}}}}",
        CHANNEL.replace("\"s2-r\"", "\"s2-relay\"")
    );
    fs::write(&path, text).unwrap();
    let o = relaystab(&["run", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s2-relay"));
}

#[test]
fn unknown_field_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#""scheme": "SBC", "polcy": {"w": [0.5, 0.5]}"#);
    let o = relaystab(&["oracle-check", &sc]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("polcy") && err.contains("scenario.json:"), "{err}");
}

#[test]
fn unknown_preset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = relaystab(&["preset", "case9-region", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn preset_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = relaystab(&["preset", "single-user-fig10", "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut csvs = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            csvs += 1;
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
        }
    }
    assert_eq!(csvs, 3);
}

#[test]
fn oracle_check_passes_on_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        r#""scheme": "SBC", "optimize": {"w": [0.5, 0.5], "weights": [1, 0]},
           "sweeps": {"region": {"w_grid": [[0.3, 0.7]], "weights": [[0, 1], [0.5, 0.5]]}}"#,
    );
    let o = relaystab(&["oracle-check", &sc]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 4);
}
