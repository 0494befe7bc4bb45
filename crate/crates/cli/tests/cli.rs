use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use metric_forge::asymmetry::tightness_model;
use metric_forge::population::PopulationModel;
use metric_forge::ranking::AgentProfile;
use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metric-forge"))
        .args(args)
        .env_remove("METRIC_FORGE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

/// A small horse-colic style file with a deterministic pattern of codes,
/// missing cells and excluded records.
fn write_horse_file(dir: &Path) -> String {
    let mut text = String::new();
    for i in 0..160u32 {
        let h = i.wrapping_mul(2654435761) >> 7;
        let code = |k: u32, levels: u32| (((h >> k) % levels) + 1).to_string();
        let mut f: Vec<String> = vec![String::new(); 28];
        f[0] = if i % 3 == 0 { "1".into() } else { "2".into() };
        f[1] = if i % 5 == 0 { "9".into() } else { "1".into() };
        f[2] = (530000 + i).to_string();
        f[3] = format!("{:.1}", 37.0 + (h % 30) as f64 / 10.0);
        f[4] = if i % 11 == 0 {
            "?".into()
        } else {
            (40 + h % 80).to_string()
        };
        f[5] = (12 + h % 40).to_string();
        for j in 6..=14 {
            f[j] = if (i + j as u32).is_multiple_of(13) {
                "?".into()
            } else {
                code(j as u32, 3)
            };
        }
        f[15] = format!("{:.1}", 3.0 + (h % 40) as f64 / 10.0);
        f[16] = code(3, 4);
        f[17] = code(5, 5);
        f[18] = (30 + h % 40).to_string();
        f[19] = format!("{:.1}", 5.0 + (h % 70) as f64 / 10.0);
        f[20] = code(8, 3);
        f[21] = if i % 4 == 0 {
            "?".into()
        } else {
            format!("{:.1}", (h % 50) as f64 / 10.0)
        };
        let score = (h % 7) as i64 - 3 + if f[0] == "1" { 1 } else { -1 } * ((h >> 4) % 3) as i64;
        f[22] = if i % 17 == 0 {
            "3".into()
        } else if score >= 0 {
            "1".into()
        } else {
            "2".into()
        };
        f[23] = "1".into();
        for j in 24..=26 {
            f[j] = "0".into();
        }
        f[27] = "2".into();
        text.push_str(&f.join(" "));
        text.push('\n');
    }
    let path = dir.join("horse-colic.data");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn check_passes_on_small_config() {
    let out = run(&[
        "check",
        "--models",
        "60",
        "--joint-models",
        "60",
        "--agent-pairs",
        "20",
    ]);
    let results = stdout_json(&out);
    assert!(results
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
    assert!(String::from_utf8_lossy(&out.stderr)
        .lines()
        .all(|l| l.starts_with("PASS ")));
}

#[test]
fn rank_flags_size_violation_for_total_effect() {
    let dir = tempfile::tempdir().unwrap();
    // Identical effects, different caseloads: the plain total rewards size.
    let model = |n| {
        PopulationModel::from_x_table(vec![0.5, 0.5], vec![0.0, 0.0], vec![1.0, -1.0], n).unwrap()
    };
    let input = json!({
        "agents": [AgentProfile::new("small", model(10)), AgentProfile::new("large", model(100))],
        "reference": [0.5, 0.5],
    });
    let path = dir.path().join("agents.json");
    fs::write(&path, input.to_string()).unwrap();
    let p = path.to_str().unwrap();

    let plain = stdout_json(&run(&["rank", "--dataset", p]));
    assert_eq!(plain["ordering"][0], "large");
    let reweighted = stdout_json(&run(&["rank", "--dataset", p, "--reweight"]));
    let scores: Vec<f64> = reweighted["scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["score"].as_f64().unwrap())
        .collect();
    assert!((scores[0] - scores[1]).abs() < 1e-12);
    assert!((scores[0] - 0.5).abs() < 1e-12);
}

#[test]
fn asym_reports_tightness_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("joint.json");
    fs::write(
        &path,
        serde_json::to_string(&tightness_model(1.0, 0.5).unwrap()).unwrap(),
    )
    .unwrap();
    let rep = stdout_json(&run(&["asym", "--dataset", path.to_str().unwrap()]));
    assert!((rep["regret"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!(rep["regret"].as_f64().unwrap() <= rep["bound_marg"].as_f64().unwrap());

    let csv = run(&[
        "asym",
        "--dataset",
        path.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("estimator,gamma_marg,gamma_max,regret,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn evaluate_from_artifact_matches_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_horse_file(dir.path());
    let art = dir.path().join("model.json");
    let fit = run(&[
        "fit",
        "--dataset",
        "horse-colic",
        "--data",
        &data,
        "--out",
        art.to_str().unwrap(),
    ]);
    assert!(
        fit.status.success(),
        "{}",
        String::from_utf8_lossy(&fit.stderr)
    );

    let direct = stdout_json(&run(&[
        "evaluate",
        "--dataset",
        "horse-colic",
        "--data",
        &data,
    ]));
    let cached = stdout_json(&run(&["evaluate", "--dataset", art.to_str().unwrap()]));
    assert_eq!(direct, cached);

    let table = direct["table"].as_array().unwrap();
    assert_eq!(table.len(), 6);
    let tt = table.iter().find(|r| r["reward"] == "TT").unwrap();
    assert_eq!(tt["regret"].as_f64().unwrap(), 0.0);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_horse_file(dir.path());
    for args in [
        vec![
            "evaluate",
            "--dataset",
            "horse-colic",
            "--data",
            &data,
            "--format",
            "csv",
        ],
        vec!["curve", "--dataset", "horse-colic", "--data", &data],
        vec![
            "check",
            "--models",
            "30",
            "--joint-models",
            "30",
            "--agent-pairs",
            "10",
            "--seed",
            "7",
        ],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn missing_input_exits_with_code_two() {
    let out = run(&[
        "evaluate",
        "--dataset",
        "ist",
        "--data",
        "/nonexistent/IST_corrected.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = run(&["rank", "--dataset", "/nonexistent/agents.json"]);
    assert_eq!(out.status.code(), Some(2));
}
