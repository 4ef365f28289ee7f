//! End-to-end runs of the `flap` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flap_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flap"))
}

fn run(args: &[&str]) -> Output {
    flap_bin().args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn simulate_writes_deterministic_csv_and_sidecars() {
    let dir = tmp("cli-simulate");
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");
    for out in [&out1, &out2] {
        let res = run(&[
            "simulate",
            "--example",
            "ex1",
            "--n",
            "200",
            "--seed",
            "5",
            "--out",
            &path_str(out),
            "--exo",
            &path_str(&out.with_extension("exo.csv")),
            "--schema-out",
            &path_str(&out.with_extension("schema")),
            "--set",
            "sigma_a=1.5",
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap(),
        "same seed must produce identical bytes"
    );
    assert!(out1.with_extension("exo.csv").is_file());
    assert!(out1.with_extension("schema").is_file());
}

#[test]
fn fit_score_metrics_pipeline() {
    let dir = tmp("cli-fit");
    let train = dir.join("train.csv");
    let test = dir.join("test.csv");
    let schema = dir.join("data.schema");
    for (path, seed) in [(&train, "1"), (&test, "2")] {
        let res = run(&[
            "simulate",
            "--example",
            "ex1",
            "--n",
            "500",
            "--seed",
            seed,
            "--out",
            &path_str(path),
            "--schema-out",
            &path_str(&schema),
        ]);
        assert!(res.status.success());
    }

    // plain predictor file
    let model = dir.join("ml.json");
    let res = run(&[
        "fit",
        "--data",
        &path_str(&train),
        "--schema",
        &path_str(&schema),
        "--method",
        "ml",
        "--out",
        &path_str(&model),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let scores = dir.join("scores.csv");
    let res = run(&[
        "score",
        "--model",
        &path_str(&model),
        "--data",
        &path_str(&test),
        "--schema",
        &path_str(&schema),
        "--out",
        &path_str(&scores),
    ]);
    assert!(res.status.success());
    let content = std::fs::read_to_string(&scores).unwrap();
    assert_eq!(content.lines().count(), 501); // header + rows
    for line in content.lines().skip(1) {
        let score: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
    }

    // pipeline model directory
    let flap_dir = dir.join("flap-model");
    let res = run(&[
        "fit",
        "--data",
        &path_str(&train),
        "--schema",
        &path_str(&schema),
        "--method",
        "flap-1-m",
        "--out",
        &path_str(&flap_dir),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(flap_dir.join("preprocessor.json").is_file());
    assert!(flap_dir.join("model.json").is_file());
    assert!(flap_dir.join("manifest.json").is_file());

    let report = dir.join("report.json");
    let res = run(&[
        "metrics",
        "--model",
        &path_str(&flap_dir),
        "--train",
        &path_str(&train),
        "--test",
        &path_str(&test),
        "--schema",
        &path_str(&schema),
        "--out",
        &path_str(&report),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["method"], "FLAP-1(M)");
    assert!(json["cf_metric"].as_f64().unwrap() >= 0.0);
}

#[test]
fn preprocess_fit_and_apply() {
    let dir = tmp("cli-preprocess");
    let data = dir.join("data.csv");
    let schema = dir.join("data.schema");
    run(&[
        "simulate",
        "--example",
        "ex2",
        "--n",
        "400",
        "--seed",
        "3",
        "--out",
        &path_str(&data),
        "--schema-out",
        &path_str(&schema),
    ]);
    let prep = dir.join("prep.json");
    let res = run(&[
        "preprocess",
        "fit",
        "--data",
        &path_str(&data),
        "--schema",
        &path_str(&schema),
        "--kind",
        "marginal-mapping",
        "--prep",
        &path_str(&prep),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let out = dir.join("processed.csv");
    let res = run(&[
        "preprocess",
        "apply",
        "--data",
        &path_str(&data),
        "--schema",
        &path_str(&schema),
        "--prep",
        &path_str(&prep),
        "--out",
        &path_str(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 401);
}

#[test]
fn test_subcommand_emits_result_json() {
    let dir = tmp("cli-test");
    let data = dir.join("data.csv");
    let schema = dir.join("data.schema");
    run(&[
        "simulate",
        "--example",
        "ex1",
        "--n",
        "800",
        "--seed",
        "4",
        "--out",
        &path_str(&data),
        "--schema-out",
        &path_str(&schema),
        "--set",
        "beta_s=0",
        "--set",
        "lambda_a=0",
    ]);
    let res = run(&[
        "test",
        "--data",
        &path_str(&data),
        "--schema",
        &path_str(&schema),
        "--method",
        "lr",
    ]);
    assert!(res.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&res.stdout)).unwrap();
    let p = json["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(json["df"], 1);
}

#[test]
fn audit_reports_biased_decisions_and_exit_codes() {
    let dir = tmp("cli-audit");
    let data = dir.join("data.csv");
    let schema = dir.join("data.schema");
    run(&[
        "simulate",
        "--example",
        "ex1",
        "--n",
        "5000",
        "--seed",
        "6",
        "--out",
        &path_str(&data),
        "--schema-out",
        &path_str(&schema),
        "--set",
        "sigma_a=1",
        "--set",
        "lambda_a=0",
    ]);
    let report = dir.join("audit.json");
    let res = run(&[
        "audit",
        "--data",
        &path_str(&data),
        "--schema",
        &path_str(&schema),
        "--with-flap",
        "--out",
        &path_str(&report),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    // beta_s = 1 in the generator: the original decisions are biased
    assert_eq!(json["reject_fairness"], true);
    assert!(json["test"]["p_value"].as_f64().unwrap() < 0.001);
    assert!(json["flap"]["cf_metric"].as_f64().unwrap() < 0.05);

    // missing schema file -> exit code 2 with a diagnostic on stderr
    let res = run(&[
        "audit",
        "--data",
        &path_str(&data),
        "--schema",
        &path_str(&dir.join("nope.schema")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!res.stderr.is_empty());
}

#[test]
fn reproduce_and_manifest_rerun_are_byte_identical() {
    let dir = tmp("cli-reproduce");
    let out1 = dir.join("run1");
    let res = run(&[
        "reproduce",
        "--experiment",
        "fig2b",
        "--outdir",
        &path_str(&out1),
        "--n",
        "200",
        "--reps",
        "2",
        "--seed",
        "9",
        "--methods",
        "ftu,flap-2-m",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let out2 = dir.join("run2");
    let res = run(&[
        "reproduce",
        "--manifest",
        &path_str(&out1.join("manifest.json")),
        "--outdir",
        &path_str(&out2),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["tidy.csv", "summary.csv", "plot-accuracy.svg"] {
        assert_eq!(
            std::fs::read(out1.join(name)).unwrap(),
            std::fs::read(out2.join(name)).unwrap(),
            "{name} differs after manifest rerun"
        );
    }

    // unknown experiment id -> usage error
    let res = run(&["reproduce", "--experiment", "fig9x", "--outdir", &path_str(&dir)]);
    assert_eq!(res.status.code(), Some(2));
}
