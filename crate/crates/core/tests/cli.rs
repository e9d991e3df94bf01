use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn darkpath(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darkpath"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn design_writes_schedule_and_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let out = darkpath(&["design", "--out", "d"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("d");
    let mut names: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["design.json", "schedule.csv"]);

    let csv = fs::read_to_string(dir.join("schedule.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2001);
    for row in [rows.first().unwrap(), rows.last().unwrap()] {
        assert!(row[1..].iter().all(|g| g.abs() < 1e-12));
    }
    let meta = read_json(&dir.join("design.json"));
    assert_eq!(meta["config"]["protocol"]["amplitude"], 0.7365);
    assert!(meta["config"]["protocol"]["duration"].as_f64().unwrap() > 0.0);
    assert!(meta["pathway"]["max_norm_error"].as_f64().unwrap() < 1e-12);
}

#[test]
fn bad_key_exits_2_without_files() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[protocol]\nkind = \"qst\"\nspeed = 3\n").unwrap();
    for command in ["design", "simulate", "scan"] {
        let out = darkpath(&[command, "--config", "bad.toml", "--out", "o"], tmp.path());
        assert_eq!(out.status.code(), Some(2));
        assert!(!tmp.path().join("o").exists());
    }
}

#[test]
fn infeasible_transmon_design_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("fast.toml"), "mode = \"transmon\"\n[protocol]\nduration = 20.0\n").unwrap();
    let out = darkpath(&["design", "--config", "fast.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn transmon_design_keeps_eta_feasible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = darkpath(&["design", "--mode", "transmon", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("o/eta.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t_ns,eta_1,eta_2,eta_3,phase_flag_1,phase_flag_2,phase_flag_3");
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1..4].iter().all(|&e| (0.0..=1.8412).contains(&e)));
        assert!(v[4..].iter().all(|&f| f == 0.0 || f == 1.0));
    }
}

#[test]
fn simulate_summary_and_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = darkpath(&["simulate", "--out", "s", "--steps", "2001"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let meta = read_json(&tmp.path().join("s/simulate.json"));
    assert!(meta["final_fidelity"].as_f64().unwrap() > 0.9999);
    assert_eq!(meta["config"]["integration"]["steps"], 2001);
    assert_eq!(meta["within_contract"], true);
    let csv = fs::read_to_string(tmp.path().join("s/trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,pop_G,pop_1,pop_2,pop_3,pop_a,fidelity\n"));
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1..6].iter().all(|&p| p <= 1.0 + 1e-12));
    }
}

#[test]
fn single_protocol_optimize_has_one_duration_column() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("o.toml"), "[optimize]\nprotocols = [\"pair-esg\"]\n").unwrap();
    let out = darkpath(&["optimize", "--config", "o.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("o/optimize.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "A,T_pair-esg");
    let meta = read_json(&tmp.path().join("o/optimize.json"));
    assert!(meta["optima"]["pair-esg"]["amplitude"].as_f64().is_some());
}

#[test]
fn scan_heatmap_layout() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("s.toml"),
        "[scan]\nkind = \"z-error\"\na_points = 4\ny_points = 3\n",
    )
    .unwrap();
    let out = darkpath(&["scan", "--config", "s.toml", "--out", "s", "--jobs", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("s/scan.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("delta\\A,2.9999999999999999e-1,"));
    assert!(lines[1].starts_with("-1.0000000000000001e-1,"));
    let meta = read_json(&tmp.path().join("s/scan.json"));
    assert_eq!(meta["y"]["values"].as_array().unwrap().len(), 3);
    assert_eq!(meta["config"]["jobs"], 2);
}

#[test]
fn scan_rejects_transmon_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let out = darkpath(&["scan", "--mode", "transmon", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resolved_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.toml"), "[noise]\ngamma = 0.001\n").unwrap();
    assert_eq!(darkpath(&["simulate", "--config", "a.toml", "--out", "x"], tmp.path()).status.code(), Some(0));
    let meta = read_json(&tmp.path().join("x/simulate.json"));
    let resolved: darkpath::config::RunConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    fs::write(tmp.path().join("b.toml"), resolved.to_toml()).unwrap();
    assert_eq!(darkpath(&["simulate", "--config", "b.toml", "--out", "x"], tmp.path()).status.code(), Some(0));
    let again = read_json(&tmp.path().join("x/simulate.json"));
    assert_eq!(meta, again);
}
