use std::path::Path;
use std::process::{Command, Output};

fn ucast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucast"))
        .args(args)
        .env("UCAST_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn json(p: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_slice(&read(p)).unwrap()
}

const SMALL: &[&str] = &[
    "--data",
    "var:anti_self:8:240",
    "--d",
    "8",
    "--ratio",
    "2",
    "--lookback",
    "8",
    "--horizon",
    "4",
    "--epochs",
    "2",
];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

#[test]
fn usage_errors_exit_64_and_help_exits_0() {
    assert_eq!(code(&ucast(&["synth", "--no-such-flag"])), 64);
    assert_eq!(code(&ucast(&["frobnicate"])), 64);
    assert_eq!(code(&ucast(&[])), 64);
    assert_eq!(code(&ucast(&["--help"])), 0);
    assert_eq!(code(&ucast(&["--version"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = ucast(&["synth", "--structure", "anti_self", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 64, "structure without channels");
    let o = ucast(&["train", "--out", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(code(&o), 64, "train without --data");
}

#[test]
fn missing_inputs_exit_66() {
    let dir = tempfile::tempdir().unwrap();
    let o = ucast(&["eval", "--checkpoint", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(code(&o), 66);
    let out = dir.path().join("t");
    let o = ucast(&["train", "--data", "no/such/file.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 66);
    let o = ucast(&[
        "risk",
        "--spec",
        "no/such/spec.json",
        "--out",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 66);
}

#[test]
fn malformed_data_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "a,b\n1,2\n3,oops\n").unwrap();
    let out = dir.path().join("t");
    let o = ucast(&["train", "--data", csv.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 65, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn divergence_exits_70() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = ucast(&with(
        &["train"],
        &with(SMALL, &["--lr", "1e300", "--out", out.to_str().unwrap()]),
    ));
    assert_eq!(code(&o), 70, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("divergence"));
}

#[test]
fn run_dir_refuses_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let args = [
        "synth",
        "--structure",
        "independent",
        "--channels",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(code(&ucast(&args)), 0);
    for f in ["config.json", "seed", "inputs.json", "synth.csv", "synth.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(code(&ucast(&args)), 73);
    assert_eq!(code(&ucast(&with(&args, &["--force"]))), 0);
    std::fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let o = ucast(&[
        "synth",
        "--structure",
        "independent",
        "--channels",
        "3",
        "--force",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 73, "a non-run directory is never cleared");
    assert!(dir.path().join("keep.txt").exists());
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = ucast(&[
            "synth",
            "--structure",
            "anti_self",
            "--channels",
            "8",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["synth.csv", "synth.json", "config.json", "inputs.json", "seed"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    let text = String::from_utf8(read(a.join("synth.csv"))).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "structure,C,model,test_mse");
    assert_eq!(lines.len(), 3);
}

#[test]
fn risk_on_diagonal_spec_prints_zero_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"a": [[0.5, 0.0, 0.0], [0.0, -0.3, 0.0], [0.0, 0.0, 0.7]], "noise_cov": [[2, 0, 0], [0, 1, 0], [0, 0, 1]]}"#).unwrap();
    let out = dir.path().join("r");
    let o = ucast(&[
        "risk",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--assert-paper",
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = &json(out.join("risk.json"))["report"];
    for g in report["gaps"].as_array().unwrap() {
        assert_eq!(g.as_f64().unwrap(), 0.0);
    }
    let seq = report["sequence"].as_array().unwrap();
    assert!(
        (seq[2].as_f64().unwrap() - 2.0).abs() < 1e-9,
        "terminal risk is the target noise variance"
    );
    let inputs = json(out.join("inputs.json"));
    assert_eq!(inputs["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn risk_monte_carlo_deltas_are_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = ucast(&[
        "risk",
        "--structure",
        "anti_self",
        "--channels",
        "2",
        "--mc",
        "200000",
        "--assert-paper",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let mc = &json(out.join("risk.json"))["mc"];
    for d in mc["rel_delta"].as_array().unwrap() {
        assert!(d.as_f64().unwrap() < 0.01);
    }
    assert!(stdout(&o).contains("R_CI ="));
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"data": "var:independent:4:200", "d": 12, "heads": 2, "epochs": 1, "lookback": 8}"#,
    )
    .unwrap();
    let out = dir.path().join("t");
    let o = ucast(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--d",
        "16",
        "--ratio",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(out.join("config.json"));
    assert_eq!(c["model"]["d_model"], 16);
    assert_eq!(c["model"]["heads"], 2);
    assert_eq!(c["model"]["lookback"], 8);
    assert_eq!(c["train"]["max_epochs"], 1);
    assert!(c.get("out").is_none());

    std::fs::write(&cfg, r#"{"data": "var:independent:4:200", "unknown_key": 1}"#).unwrap();
    let o = ucast(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("u").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 64);
}

#[test]
fn dataset_defaults_follow_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("measles.csv");
    let mut text = String::from("a,b,c\n");
    for t in 0..400 {
        let x = t as f64 * 0.1;
        text.push_str(&format!("{},{},{}\n", x.sin(), x.cos(), (2.0 * x).sin()));
    }
    std::fs::write(&csv, text).unwrap();
    let out = dir.path().join("t");
    let o = ucast(&[
        "train",
        "--data",
        csv.to_str().unwrap(),
        "--d",
        "8",
        "--ratio",
        "2",
        "--epochs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(out.join("config.json"));
    assert_eq!(c["model"]["horizon"], 7);
    assert_eq!(c["model"]["lookback"], 21);
    assert_eq!(c["model"]["alpha"], 0.001);
    assert_eq!(c["train"]["lr"], 0.0005);
    assert_eq!(c["dataset_name"], "measles");
    assert_eq!(json(out.join("inputs.json"))["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn train_then_eval_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = ucast(&with(
            &["train"],
            &with(SMALL, &["--snapshot-epochs", "0,2", "--out", out.to_str().unwrap()]),
        ));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut compared = 0;
    for rel in [
        "train_log.jsonl",
        "summary.json",
        "config.json",
        "checkpoint/manifest.json",
        "checkpoint/w_out.csv",
        "checkpoint/prep.json",
        "snapshots/index.json",
        "snapshots/cov_epoch2_layer1.csv",
        "snapshots/attn_down_epoch0_layer2.csv",
    ] {
        assert_eq!(read(a.join(rel)), read(b.join(rel)), "{rel}");
        compared += 1;
    }
    assert_eq!(compared, 9);
    let log = String::from_utf8(read(a.join("train_log.jsonl"))).unwrap();
    assert_eq!(log.lines().count(), 2);

    let summary = json(a.join("summary.json"));
    let mse = summary["test"]["mse"].as_f64().unwrap();
    let o = ucast(&[
        "eval",
        "--checkpoint",
        a.join("checkpoint").to_str().unwrap(),
        "--out",
        dir.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("MSE"));
    let e = json(dir.path().join("e").join("eval.json"));
    assert_eq!(e["metrics"]["mse"].as_f64().unwrap(), mse);
}

#[test]
fn ablate_and_sweep_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = ucast(&with(&["ablate"], &with(SMALL, &["--out", out.to_str().unwrap()])));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(out.join("ablation.csv"))).unwrap();
    let names: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        ["full", "no_cov", "no_hierarchical", "frozen_query", "no_upsampling"]
    );

    let out = dir.path().join("s");
    let o = ucast(&with(
        &["sweep"],
        &with(
            SMALL,
            &[
                "--alphas",
                "0.01,1",
                "--depths",
                "1",
                "--ratios",
                "2,4",
                "--out",
                out.to_str().unwrap(),
            ],
        ),
    ));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(out.join("sweep.csv"))).unwrap();
    assert_eq!(text.lines().count(), 1 + 5);
    assert!(text.starts_with("param,value,test_mse,test_mae,best_epoch"));
}

#[test]
fn bench_reports_analytic_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = ucast(&[
        "bench",
        "--channels",
        "64,128",
        "--ratio",
        "16",
        "--d",
        "8",
        "--repeats",
        "1",
        "--warmup",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("bench.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    for row in rows.iter().filter(|row| &row[4] == "HLQN") {
        assert_eq!(row[7].parse::<f64>().unwrap(), 1.0 / 16.0);
    }
}
