use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn glrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glrl"))
        .args(args)
        .output()
        .expect("run glrl")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Ratings 1..=5 from a smooth rank-two pattern on 30 users × 20 items,
/// roughly 60% observed.
fn ratings_file(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for u in 0..30 {
        for i in 0..20 {
            if (u * 7 + i * 3) % 5 < 3 {
                let x = 3.0
                    + 1.5 * ((u as f64) * 0.3).sin() * ((i as f64) * 0.2).cos()
                    + 0.5 * ((u + i) as f64 * 0.1).cos();
                let r = x.round().clamp(1.0, 5.0);
                text.push_str(&format!("{}\t{}\t{}\t88{u}{i}\n", u + 100, i + 500, r));
            }
        }
    }
    let p = dir.join("ratings.tsv");
    fs::write(&p, text).unwrap();
    p
}

fn signed_file(dir: &Path) -> PathBuf {
    let mut text = String::from("# src dst sign\n");
    for a in 0..25 {
        for b in 0..25 {
            if a != b && (a * 5 + b * 11) % 4 == 0 {
                let s = if (a % 3 == 0) == (b % 2 == 0) { 1 } else { -1 };
                text.push_str(&format!("{a} {b} {s}\n"));
            }
        }
    }
    let p = dir.join("edges.txt");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn selftest_passes() {
    let out = glrl(&["selftest"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn train_writes_outputs_and_trace_checks() {
    let dir = TempDir::new().unwrap();
    let data = ratings_file(dir.path());
    let (model, trace, metrics) = (
        dir.path().join("m.bin"),
        dir.path().join("t.csv"),
        dir.path().join("m.json"),
    );
    let out = glrl(&[
        "train",
        "--data",
        s(&data),
        "--solver",
        "eglrl",
        "--rank",
        "4",
        "--train-frac",
        "0.7",
        "--seed",
        "3",
        "--out-model",
        s(&model),
        "--out-trace",
        s(&trace),
        "--out-metrics",
        s(&metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t,objective,s_t,gamma_t,rank,inner_iters,elapsed_s\n"));
    assert_eq!(text.lines().count(), 1 + 1 + 4);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(m["test_mabs_mean"].as_f64().unwrap() < 1.5);
    assert!(m["train_square_sum_mean"].as_f64().unwrap() > 0.0);

    let out = glrl(&[
        "trace-check",
        "--trace",
        s(&trace),
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--train-frac",
        "0.7",
        "--seed",
        "3",
        "--all",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn nonsmooth_trace_check_and_eval() {
    let dir = TempDir::new().unwrap();
    let data = ratings_file(dir.path());
    let (model, trace) = (dir.path().join("m.bin"), dir.path().join("t.csv"));
    let out = glrl(&[
        "train",
        "--data",
        s(&data),
        "--loss",
        "l1",
        "--solver",
        "nonsmooth",
        "--iters",
        "30",
        "--c2",
        "0.5",
        "--train-frac",
        "0.5",
        "--out-model",
        s(&model),
        "--out-trace",
        s(&trace),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = glrl(&[
        "trace-check",
        "--trace",
        s(&trace),
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--loss",
        "l1",
        "--train-frac",
        "0.5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);

    // wrong loss: recomputed objectives disagree
    let out = glrl(&[
        "trace-check",
        "--trace",
        s(&trace),
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--train-frac",
        "0.5",
    ]);
    assert_eq!(code(&out), 4);

    let out = glrl(&["eval", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(m["mabs"].as_f64().unwrap().is_finite());
}

#[test]
fn identical_runs_give_identical_traces() {
    let dir = TempDir::new().unwrap();
    let data = ratings_file(dir.path());
    let run = |name: &str| {
        let t = dir.path().join(name);
        let out = glrl(&[
            "train",
            "--data",
            s(&data),
            "--loss",
            "l1",
            "--solver",
            "nonsmooth",
            "--iters",
            "15",
            "--train-frac",
            "0.5",
            "--seed",
            "9",
            "--out-trace",
            s(&t),
            "--no-timing",
        ]);
        assert_eq!(code(&out), 0);
        fs::read(t).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn folds_write_one_trace_per_fold() {
    let dir = TempDir::new().unwrap();
    let data = signed_file(dir.path());
    let trace = dir.path().join("t.csv");
    let out = glrl(&[
        "train",
        "--data",
        s(&data),
        "--format",
        "signed",
        "--loss",
        "logistic",
        "--rank",
        "3",
        "--folds",
        "3",
        "--out-trace",
        s(&trace),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["test_sign_accuracy_runs"].as_array().unwrap().len(), 3);
    for f in 0..3 {
        assert!(dir.path().join(format!("t.fold{f}.csv")).exists());
    }
}

#[test]
fn split_files_partition_the_data() {
    let dir = TempDir::new().unwrap();
    let data = ratings_file(dir.path());
    let prefix = dir.path().join("part");
    let out = glrl(&[
        "split",
        "--data",
        s(&data),
        "--train-frac",
        "0.5",
        "--seed",
        "1",
        "--out",
        s(&prefix),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let count = |p: &str| {
        fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .count()
    };
    let total = fs::read_to_string(&data).unwrap().lines().count();
    assert_eq!(count("part.train") + count("part.test"), total);
    assert!(count("part.train").abs_diff(count("part.test")) <= 1);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = ratings_file(dir.path());

    // smooth solver with a nonsmooth loss
    let out = glrl(&["train", "--data", s(&data), "--loss", "l1"]);
    assert_eq!(code(&out), 2);
    // bad flag value
    assert_eq!(
        code(&glrl(&["train", "--data", s(&data), "--solver", "admm"])),
        2
    );
    // missing file
    assert_eq!(
        code(&glrl(&["train", "--data", s(&dir.path().join("nope"))])),
        3
    );
    // malformed line
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "1\t2\t3\n1\t2\n").unwrap();
    let out = glrl(&["train", "--data", s(&bad)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    // unknown user at evaluation time
    let model = dir.path().join("m.bin");
    assert_eq!(
        code(&glrl(&[
            "train",
            "--data",
            s(&data),
            "--rank",
            "2",
            "--out-model",
            s(&model)
        ])),
        0
    );
    let cold = dir.path().join("cold.tsv");
    fs::write(&cold, "100\t500\t3\n99999\t500\t4\n").unwrap();
    let out = glrl(&["eval", "--model", s(&model), "--data", s(&cold)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("99999"));
}
