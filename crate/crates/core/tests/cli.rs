use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn patchnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchnet"))
        .args(args)
        .env_remove("PATCHNET_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value printed after `key` on the first line starting with it.
fn field(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.trim_start().starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in\n{text}"));
    line[line.find(key).unwrap() + key.len()..]
        .split_whitespace()
        .find_map(|t| t.trim_start_matches('=').parse::<f64>().ok())
        .unwrap_or_else(|| panic!("no number in `{line}`"))
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn oracle_prints_reference_dimensions() {
    let o = patchnet(&["oracle", "--f-ghz", "5", "--eps", "2.2", "--h-mm", "1.5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(field(&text, "W"), 23.717);
    let l = field(&text, "L ");
    assert!((l - 19.398).abs() / 19.398 < 0.005, "L = {l}");
    for key in ["eps_eff", "L_eff", "dL"] {
        assert!(field(&text, key) > 0.0);
    }
}

#[test]
fn oracle_vacuum_width() {
    let o = patchnet(&["oracle", "--f-ghz", "1", "--eps", "1", "--h-mm", "1.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("W       = 150.000 mm"));
}

#[test]
fn invalid_input_exits_2() {
    assert_eq!(patchnet(&["oracle", "--f-ghz", "-1", "--eps", "2.2"]).status.code(), Some(2));
    assert_eq!(patchnet(&["oracle", "--f-ghz", "1", "--eps", "0.5"]).status.code(), Some(2));
    assert_eq!(patchnet(&["oracle", "--f-ghz", "1"]).status.code(), Some(2));
    assert_eq!(patchnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(patchnet(&["bench", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(patchnet(&["bench", "--combos", "XX+LM"]).status.code(), Some(2));
    assert_eq!(patchnet(&["bench", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(patchnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_data_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let s = |path: &Path| path.to_str().unwrap().to_string();

    assert_eq!(patchnet(&["gen-data", "--out", &s(&p("a.csv"))]).status.code(), Some(0));
    assert_eq!(data_rows(&p("a.csv")), 1000);
    assert_eq!(patchnet(&["gen-data", "--full-grid", "--out", &s(&p("full.csv"))]).status.code(), Some(0));
    assert_eq!(data_rows(&p("full.csv")), 10_000);

    for name in ["s1.csv", "s2.csv"] {
        assert_eq!(patchnet(&["gen-data", "--seed", "7", "--out", &s(&p(name))]).status.code(), Some(0));
    }
    assert_eq!(fs::read(p("s1.csv")).unwrap(), fs::read(p("s2.csv")).unwrap());
    assert_ne!(fs::read(p("s1.csv")).unwrap(), fs::read(p("a.csv")).unwrap());

    // the environment supplies the default seed
    let o = Command::new(env!("CARGO_BIN_EXE_patchnet"))
        .args(["gen-data", "--out", &s(&p("env.csv"))])
        .env("PATCHNET_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(p("env.csv")).unwrap(), fs::read(p("s1.csv")).unwrap());
}

#[test]
fn io_failures_exit_3() {
    let o = patchnet(&["gen-data", "--out", "/nonexistent-dir/sub/x.csv"]);
    assert_eq!(o.status.code(), Some(3));
    let o = patchnet(&["predict", "--model", "/nonexistent-dir/model.json", "--f-ghz", "5", "--eps", "2.2"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_and_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ff");
    let o = patchnet(&[
        "train", "--net", "ff", "--algo", "lm", "--max-epochs", "200", "--seed", "3", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(field(&text, "train MSE") >= 0.0);
    assert!(text.contains("stop reason"));
    assert!(field(&text, "wall time") >= 0.0);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,train_mse,val_mse,grad_norm,internal\n0,"));

    let model = out.join("model.json");
    let o = patchnet(&["predict", "--model", model.to_str().unwrap(), "--f-ghz", "5", "--eps", "2.2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("predicted") && text.contains("oracle") && text.contains("accuracy"));
    let w = text.lines().find(|l| l.starts_with('W')).unwrap();
    let nums: Vec<f64> = w.split_whitespace().filter_map(|t| t.trim_end_matches('%').parse().ok()).collect();
    assert_eq!(nums.len(), 3);
    assert_eq!(nums[1], 23.717);
    assert!(nums[2] >= 99.0, "W accuracy {}", nums[2]);
}

#[test]
fn corrupt_or_foreign_models_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let o = patchnet(&["predict", "--model", bad.to_str().unwrap(), "--f-ghz", "5", "--eps", "2.2"]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&bad, r#"{"format":"something-else","version":1}"#).unwrap();
    let o = patchnet(&["predict", "--model", bad.to_str().unwrap(), "--f-ghz", "5", "--eps", "2.2"]);
    assert_eq!(o.status.code(), Some(2));

    // a model whose stored scaler no longer matches its fingerprint
    let out = dir.path().join("gr");
    let o = patchnet(&["train", "--net", "gr", "--samples", "100", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let path = out.join("model.json");
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let min = &mut doc["scaler"]["input_min"][0];
    *min = serde_json::json!(min.as_f64().unwrap() * 0.5);
    fs::write(&path, doc.to_string()).unwrap();
    let o = patchnet(&["predict", "--model", path.to_str().unwrap(), "--f-ghz", "5", "--eps", "2.2"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_rejects_invalid_combinations() {
    for args in [
        &["train", "--net", "rbr", "--algo", "lm"][..],
        &["train", "--net", "rbr"],
        &["train", "--net", "gr", "--algo", "scg"],
        &["train", "--net", "ff"],
        &["train", "--net", "ff", "--algo", "xyz"],
        &["train", "--net", "zz", "--algo", "lm"],
        &["train", "--net", "ff", "--algo", "lm", "--spread", "0.3"],
    ] {
        assert_eq!(patchnet(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn rbr_meets_its_goal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rbr");
    let o = patchnet(&["train", "--net", "rbr", "--goal", "0.001", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(field(&text, "corpus MSE") <= 0.001, "{text}");
    assert!(text.contains("goal_met"));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mse: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(mse.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn bench_single_combo_and_serial_parallel_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let gr = dir.path().join("gr");
    let o = patchnet(&["bench", "--combos", "GR", "--trials", "1", "--out", gr.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report = fs::read_to_string(gr.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(report.lines().nth(1).unwrap().starts_with("GR,"));
    assert!(gr.join("report.md").exists());
    assert!(gr.join("traces/gr/trial1.csv").exists());

    let run = |name: &str, mode: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec![
            "bench", "--combos", "FF+SCG,LR+RP,GR", "--trials", "2", "--samples", "200", "--max-epochs", "30", "--seed", "5",
            "--out", out.to_str().unwrap(),
        ];
        args.extend_from_slice(mode);
        assert_eq!(patchnet(&args).status.code(), Some(0));
        out
    };
    let drop_col = |text: String, col: usize| -> Vec<String> {
        text.lines()
            .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != col).map(|(_, c)| c).collect::<Vec<_>>().join(","))
            .collect()
    };
    let a = run("serial", &["--serial"]);
    let b = run("parallel", &["--jobs", "3"]);
    let read = |p: &Path, f: &str| fs::read_to_string(p.join(f)).unwrap();
    assert_eq!(drop_col(read(&a, "report.csv"), 2), drop_col(read(&b, "report.csv"), 2));
    assert_eq!(drop_col(read(&a, "trials.csv"), 7), drop_col(read(&b, "trials.csv"), 7));
    assert_eq!(read(&a, "traces/ff_scg/trial2.csv"), read(&b, "traces/ff_scg/trial2.csv"));
}
