//! End-to-end checks of the command-line surface through the built binary.

use std::path::Path;
use std::process::Command;

fn sparsepos() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsepos"))
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

#[test]
fn stats_reports_counts_and_ambiguity() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    write(&corpus, "The\tDT\ncat\tNN\n\nThe\tDT\ndog\tNN\n");
    let output = sparsepos()
        .args(["stats", corpus.to_str().unwrap(), "--lowercase", "--unk"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("tokens\t4"));
    assert!(stdout.contains("types\t2")); // the + <unk>
    assert!(stdout.contains("ambiguity-avg-per-type\t1"));
}

#[test]
fn features_dump_has_expected_format() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    let mut text = String::new();
    for _ in 0..25 {
        text.push_str("Running\n");
    }
    text.push('\n');
    write(&corpus, &text);
    let dump = dir.path().join("table.txt");
    let output = sparsepos()
        .args([
            "features",
            corpus.to_str().unwrap(),
            "--variant",
            "reduced",
            "--dump",
            dump.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let dumped = std::fs::read_to_string(&dump).unwrap();
    let line = dumped.lines().next().unwrap();
    let (word, feats) = line.split_once('\t').unwrap();
    assert_eq!(word, "Running");
    let names: Vec<&str> = feats.split(',').collect();
    assert!(names.contains(&"bias"));
    assert!(names.contains(&"id=running"));
    assert!(names.contains(&"suf=ing"));
    assert!(names.contains(&"cap"));
}

#[test]
fn synth_train_tag_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    let status = sparsepos()
        .args([
            "synth",
            "--states",
            "2",
            "--vocab",
            "25",
            "--tokens",
            "1200",
            "--seed",
            "4",
            "--out",
            corpus.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let model = dir.path().join("model.txt");
    let trace = dir.path().join("trace.tsv");
    let status = sparsepos()
        .args([
            "train",
            corpus.to_str().unwrap(),
            "--algo",
            "em",
            "--states",
            "2",
            "--iters",
            "10",
            "--seed",
            "3",
            "--out",
            model.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("iter\tloglik\tbound\tseconds"));
    assert!(trace_text.lines().count() >= 2);

    let tags = dir.path().join("tags.txt");
    let status = sparsepos()
        .args([
            "tag",
            "--model",
            model.to_str().unwrap(),
            "--corpus",
            corpus.to_str().unwrap(),
            "--decode",
            "posterior",
            "--out",
            tags.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let report = dir.path().join("report.tsv");
    let output = sparsepos()
        .args([
            "eval",
            "--pred",
            tags.to_str().unwrap(),
            "--gold",
            corpus.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert!(report_text.starts_with("metric\tvalue\tper-seed"));
    for metric in ["1-many", "1-1", "vi", "v"] {
        assert!(report_text.lines().any(|l| l.starts_with(metric)));
    }
}

#[test]
fn model_save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    sparsepos()
        .args([
            "synth", "--states", "2", "--vocab", "20", "--tokens", "500", "--seed", "8",
            "--out", corpus.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let model = dir.path().join("model.txt");
    sparsepos()
        .args([
            "train", corpus.to_str().unwrap(), "--states", "2", "--iters", "5",
            "--out", model.to_str().unwrap(),
        ])
        .status()
        .unwrap();

    // Round trip through the library: load and re-save.
    let saved = sparsepos::model_io::load_model(&model).unwrap();
    let second = dir.path().join("model2.txt");
    sparsepos::model_io::save_model(&saved, &second).unwrap();
    let a = std::fs::read(&model).unwrap();
    let b = std::fs::read(&second).unwrap();
    assert_eq!(a, b);
}

#[test]
fn experiment_runs_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    sparsepos()
        .args([
            "synth", "--states", "2", "--vocab", "20", "--tokens", "600", "--seed", "2",
            "--out", corpus.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let config = dir.path().join("exp.conf");
    write(
        &config,
        &format!(
            "train = {}\nout = {}\nstates = 2\niters = 6\nseeds = 1,2\n",
            corpus.display(),
            dir.path().join("run").display()
        ),
    );
    let output = sparsepos()
        .args(["experiment", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{:?}", output);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("mean: 1-many"));
    assert!(dir.path().join("run/manifest.txt").exists());
    assert!(dir.path().join("run/seed1/model.txt").exists());
    assert!(dir.path().join("run/seed2/trace.tsv").exists());
    assert!(dir.path().join("run/report.tsv").exists());
}

#[test]
fn semisup_writes_curve_table() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    sparsepos()
        .args([
            "synth", "--states", "2", "--vocab", "30", "--tokens", "1500", "--seed", "6",
            "--out", corpus.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    // Use a trained tagging as the cluster source.
    let model = dir.path().join("model.txt");
    sparsepos()
        .args([
            "train", corpus.to_str().unwrap(), "--states", "2", "--iters", "5",
            "--out", model.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let tags = dir.path().join("hmm.tags");
    sparsepos()
        .args([
            "tag", "--model", model.to_str().unwrap(), "--corpus", corpus.to_str().unwrap(),
            "--out", tags.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let curve = dir.path().join("curve.tsv");
    let status = sparsepos()
        .args([
            "semisup",
            "--corpus",
            corpus.to_str().unwrap(),
            "--clusters",
            tags.to_str().unwrap(),
            "--sizes",
            "5,10",
            "--samples",
            "2",
            "--test-size",
            "20",
            "--seed",
            "1",
            "--out",
            curve.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&curve).unwrap();
    assert!(text.starts_with("size\tsource\tmean-accuracy"));
    // baseline + one source, two sizes
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn exit_codes_match_error_classes() {
    // Usage: unknown subcommand.
    let output = sparsepos().arg("bogus").output().unwrap();
    assert_eq!(output.status.code(), Some(1));

    // Usage: help exits 0.
    let output = sparsepos().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));

    // Data error: missing file.
    let output = sparsepos().args(["stats", "/nonexistent/corpus.txt"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Data error: malformed line.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    write(&bad, "a\tX\tY\tZ\n");
    let output = sparsepos().args(["stats", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn eval_accepts_external_clusterings() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.txt");
    write(&gold, "a\tX\nb\tY\n\nc\tX\n");
    // An external system's cluster file with the same token shape.
    let pred = dir.path().join("brown.tags");
    write(&pred, "0\n1\n\n0\n");
    let output = sparsepos()
        .args([
            "eval",
            "--pred",
            pred.to_str().unwrap(),
            "--gold",
            gold.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let one_many = stdout
        .lines()
        .find(|l| l.starts_with("1-many"))
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap();
    let value: f64 = one_many.parse().unwrap();
    assert_eq!(value, 1.0);
}
