use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpv-active"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
format_version = "1.0"
seed = 11
budget = 4
experiment_length = 400
volume_resolution = [20, 20]
output_dir = "out"

[operating_box]
lower = [0.0, 0.0]
upper = [1.0, 1.0]

[plant.random]
seed = 5
state_dim = 2
input_dim = 2

[initial]
grid = [2, 2]

[model]
length_scales = [0.05, 0.05]

[selection]
grid_resolution = [21, 21]
"#;

#[test]
fn single_step_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["plant-dump", "--seed", "2", "--state-dim", "2", "--input-dim", "1", "--out", "plant.json"]);
    let mut estimates = Vec::new();
    for (i, theta) in ["0.2,0.2", "0.8,0.3", "0.5,0.9"].iter().enumerate() {
        let data = format!("d{i}.csv");
        let est = format!("e{i}.json");
        let seed = i.to_string();
        ok(d, &["simulate", "--plant", "plant.json", "--theta", theta, "--length", "300", "--seed", &seed, "--out", &data]);
        let report: serde_json::Value = serde_json::from_str(&ok(d, &["identify", "--data", &data, "--out", &est])).unwrap();
        assert!(report["smallest_singular_value"].as_f64().unwrap() > 1e-8);
        estimates.push(est);
    }
    let mut args = vec!["build-model", "--length-scales", "0.05,0.05", "--out", "model.json", "--estimates"];
    args.extend(estimates.iter().map(String::as_str));
    ok(d, &args);

    let sel: serde_json::Value = serde_json::from_str(&ok(d, &["select-next", "--model", "model.json"])).unwrap();
    let theta: Vec<f64> = serde_json::from_value(sel["theta"].clone()).unwrap();
    assert_eq!(theta.len(), 2);
    assert!(theta.iter().all(|t| (0.0..=1.0).contains(t)));
    let vol: serde_json::Value = serde_json::from_str(&ok(d, &["volume", "--model", "model.json", "--resolution", "10"])).unwrap();
    assert!(vol["volume"].as_f64().unwrap() > 0.0);

    ok(d, &["export-surface", "--model", "model.json", "--resolution", "7", "--out", "g.csv"]);
    let surface = std::fs::read_to_string(d.join("g.csv")).unwrap();
    assert_eq!(surface.lines().count(), 2 + 49);
    ok(d, &["export-surface", "--model", "model.json", "--element", "b21", "--resolution", "3", "--out", "b21.csv"]);
    assert!(std::fs::read_to_string(d.join("b21.csv")).unwrap().contains("mean,variance"));
}

#[test]
fn campaign_writes_artifacts_and_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), CONFIG).unwrap();
    ok(d, &["campaign", "--config", "c.toml", "--threads", "1", "--output-dir", "one"]);
    ok(d, &["--threads", "4", "campaign", "--config", "c.toml", "--output-dir", "four"]);
    let csvs = std::fs::read_dir(d.join("one/datasets"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 4 + 4);
    for f in ["record.csv", "model.json"] {
        assert_eq!(
            std::fs::read(d.join("one").join(f)).unwrap(),
            std::fs::read(d.join("four").join(f)).unwrap(),
            "{f} differs between thread counts"
        );
    }
    let record = std::fs::read_to_string(d.join("one/record.csv")).unwrap();
    assert_eq!(record.lines().count(), 2 + 5);

    // a different seed gives a different campaign
    ok(d, &["campaign", "--config", "c.toml", "--seed", "12", "--output-dir", "other"]);
    assert_ne!(std::fs::read(d.join("one/record.csv")).unwrap(), std::fs::read(d.join("other/record.csv")).unwrap());
}

#[test]
fn bad_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), CONFIG.replace("budget = 4", "budget = = 4")).unwrap();
    let out = run(d, &["campaign", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("column"), "{err}");

    std::fs::write(d.join("c.toml"), CONFIG.replace("budget = 4", "budget = 4\nbudgett = 3")).unwrap();
    let out = run(d, &["campaign", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budgett"));
}

#[test]
fn unexcited_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("# format_version=1.0 kind=dataset\nk,x1,u1\n");
    for k in 0..20 {
        csv.push_str(&format!("{k},{},0\n", 0.9f64.powi(k)));
    }
    std::fs::write(d.join("flat.csv"), csv).unwrap();
    let out = run(d, &["identify", "--data", "flat.csv", "--theta", "0.5", "--out", "e.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("persistently exciting"));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["plant-dump", "--state-dim", "2", "--input-dim", "1", "--out", "p.json"]);
    let out = run(d, &["simulate", "--plant", "p.json", "--theta", "1.5,0.5", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(d, &["identify", "--data", "missing.csv", "--theta", "0.5,0.5", "--out", "e.json"]);
    assert_eq!(out.status.code(), Some(2));

    // a one-dimensional model cannot be exported as a surface
    ok(d, &["plant-dump", "--state-dim", "1", "--input-dim", "1", "--lower", "0", "--upper", "1", "--out", "p1.json"]);
    ok(d, &["simulate", "--plant", "p1.json", "--theta", "0.5", "--length", "100", "--out", "d.csv"]);
    ok(d, &["identify", "--data", "d.csv", "--out", "e.json"]);
    ok(d, &["build-model", "--estimates", "e.json", "--length-scales", "0.1", "--out", "m.json"]);
    let out = run(d, &["export-surface", "--model", "m.json", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2-dimensional"));
}
