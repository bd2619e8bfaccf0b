use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use marnn::langs::Dataset;
use marnn::models::{Architecture, Checkpoint, Model, ModelConfig, ModelParams};

fn marnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = marnn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    marnn(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate_small(dir: &Path) {
    ok(&[
        "generate",
        "--task",
        "dyck2",
        "--train-count",
        "50",
        "--test-count",
        "20",
        "--out",
        s(dir),
    ]);
}

#[test]
fn generate_writes_parseable_corpora_and_histograms() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    generate_small(&dir);
    let train = Dataset::from_text(&fs::read_to_string(dir.join("train.txt")).unwrap()).unwrap();
    let test = Dataset::from_text(&fs::read_to_string(dir.join("test.txt")).unwrap()).unwrap();
    assert_eq!((train.len(), test.len()), (50, 20));
    assert_eq!(
        train.to_text(),
        fs::read_to_string(dir.join("train.txt")).unwrap()
    );

    let hist = fs::read_to_string(dir.join("histogram.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("split,kind,value,count"));
    let train_lengths: usize = hist
        .lines()
        .filter(|l| l.starts_with("train,length,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(train_lengths, 50);
    assert!(fs::read_to_string(dir.join("spec.toml"))
        .unwrap()
        .starts_with("# fingerprint"));

    let again = tmp.path().join("again");
    generate_small(&again);
    for f in ["train.txt", "test.txt", "histogram.csv", "spec.toml"] {
        assert_eq!(
            fs::read(dir.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn train_smoke_run_emits_all_artifacts_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate_small(&data);
    let run = |out: &Path| {
        ok(&[
            "train",
            "--task",
            "dyck2",
            "--model",
            "stack_rnn+softmax",
            "--seeds",
            "0",
            "--epochs",
            "1",
            "--train-data",
            s(&data.join("train.txt")),
            "--test-data",
            s(&data.join("test.txt")),
            "--out",
            s(out),
        ])
    };
    let first = tmp.path().join("run1");
    let table = run(&first);
    let header: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(
        header,
        ["Models", "|", "Min", "Max", "Med", "Mean", "|", "Min", "Max", "Med", "Mean"]
    );
    for f in [
        "spec.toml",
        "report.csv",
        "report.txt",
        "report.json",
        "seed-0.json",
    ] {
        assert!(first.join(f).exists(), "{f}");
    }
    let ck = Checkpoint::load(&first.join("seed-0.json")).unwrap();
    let csv = fs::read_to_string(first.join("report.csv")).unwrap();
    assert!(csv.contains(&ck.fingerprint));

    let second = tmp.path().join("run2");
    run(&second);
    for f in [
        "spec.toml",
        "report.csv",
        "report.txt",
        "report.json",
        "seed-0.json",
    ] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }

    // Evaluating the training set reproduces the report's training column.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("report.json")).unwrap()).unwrap();
    let train_acc = report["seeds"][0]["train_accuracy"].as_f64().unwrap();
    let printed = ok(&[
        "eval",
        "--checkpoint",
        s(&first.join("seed-0.json")),
        "--data",
        s(&data.join("train.txt")),
    ]);
    assert_eq!(printed.trim(), format!("{train_acc:.2}"));

    let table = ok(&["report", s(&first), s(&second.join("report.json"))]);
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        "task = \"reversal\"\n[train]\ncount = 30\n[test]\ncount = 10\n",
    )
    .unwrap();
    let out = tmp.path().join("gen");
    ok(&[
        "generate",
        "--config",
        s(&cfg),
        "--test-count",
        "12",
        "--out",
        s(&out),
    ]);
    let test = Dataset::from_text(&fs::read_to_string(out.join("test.txt")).unwrap()).unwrap();
    assert_eq!(test.len(), 12);
    let echoed = fs::read_to_string(out.join("spec.toml")).unwrap();
    assert!(echoed.contains("task = \"reversal\"") && echoed.contains("count = 30"));

    fs::write(&cfg, "task = \"reversal\"\nbogus = 1\n").unwrap();
    assert_eq!(
        code(&["generate", "--config", s(&cfg), "--out", s(&out)]),
        1
    );
}

fn oracle_checkpoint(dir: &Path, arch: Architecture) -> std::path::PathBuf {
    let config = ModelConfig::new(arch, 4, 4);
    let model = Model::new(config.clone(), ModelParams::zeros(&config)).unwrap();
    let path = dir.join(format!("{arch}.json"));
    Checkpoint::new("dyck2", 0, "fixture", model)
        .save(&path)
        .unwrap();
    path
}

#[test]
fn trace_rows_match_input_and_actions_sum_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    for (arch, ops) in [(Architecture::BabyNtm, 5), (Architecture::StackRnn, 2)] {
        let ck = oracle_checkpoint(tmp.path(), arch);
        let csv = ok(&["trace", "--checkpoint", s(&ck), "--input", "([()])[]"]);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# fingerprint=fixture"));
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 2 + ops + 1 + 8 + 1);
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 8);
        for r in rows {
            let cells: Vec<&str> = r.split(',').collect();
            let sum: f64 = cells[2..2 + ops]
                .iter()
                .map(|c| c.parse::<f64>().unwrap())
                .sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
    let ntm = tmp.path().join("baby_ntm.json");
    let full = ok(&["trace", "--checkpoint", s(&ntm), "--input", "()", "--full"]);
    assert_eq!(
        full.lines().nth(1).unwrap().split(',').count(),
        2 + 5 + 1 + 104 + 1
    );
}

#[test]
fn error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let vanilla = oracle_checkpoint(tmp.path(), Architecture::VanillaRnn);
    let stack = oracle_checkpoint(tmp.path(), Architecture::StackRnn);
    assert_eq!(
        code(&["trace", "--checkpoint", s(&vanilla), "--input", "()"]),
        1
    );
    assert_eq!(
        code(&["trace", "--checkpoint", s(&stack), "--input", "(a)"]),
        2
    );
    assert_eq!(
        code(&[
            "eval",
            "--checkpoint",
            s(&tmp.path().join("none.json")),
            "--data",
            "x"
        ]),
        2
    );
    assert_eq!(code(&["train", "--task", "dyck2"]), 1);
    assert_eq!(
        code(&[
            "train",
            "--task",
            "dyck2",
            "--model",
            "baby_ntm+gumbel_softmax"
        ]),
        1
    );
    assert_eq!(code(&["nonsense"]), 1);
    assert_eq!(code(&["--help"]), 0);

    // Vocabulary mismatch between checkpoint and dataset.
    let out = tmp.path().join("rev");
    ok(&[
        "generate",
        "--task",
        "reversal",
        "--train-count",
        "5",
        "--test-count",
        "5",
        "--out",
        s(&out),
    ]);
    let res = marnn(&[
        "eval",
        "--checkpoint",
        s(&stack),
        "--data",
        s(&out.join("test.txt")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("dyck2") && err.contains("reversal"), "{err}");

    let empty = tmp.path().join("empty.txt");
    fs::write(
        &empty,
        "#marnn-dataset v1\ttask=dyck2\tsplit=test\tfingerprint=0\tcount=0\n",
    )
    .unwrap();
    assert_eq!(
        code(&["eval", "--checkpoint", s(&stack), "--data", s(&empty)]),
        2
    );
}

#[test]
fn all_seeds_diverging_exits_with_numeric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate_small(&data);
    let res = marnn(&[
        "train",
        "--task",
        "dyck2",
        "--model",
        "stack_rnn+softmax",
        "--seeds",
        "0,1",
        "--epochs",
        "1",
        "--lr",
        "1e308",
        "--no-clip",
        "--train-data",
        s(&data.join("train.txt")),
        "--test-data",
        s(&data.join("test.txt")),
        "--out",
        s(&tmp.path().join("run")),
    ]);
    assert_eq!(
        res.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}
