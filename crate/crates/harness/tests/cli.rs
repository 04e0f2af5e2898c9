use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hamlearn_harness::datasets::{self, read_sequences_jsonl, read_table_csv};
use hamlearn_harness::experiment::{compare_rows, read_log, write_log};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hamlearn"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"
name = "small"
scenario = "Mom-b"
mode = "ff_output"
epochs = 2
seed = 4

[model]
kind = "mlp"
hidden = [4]

[dataset]
kind = "iris"

[tolerance]
value = 1e-8
metric = "mean"
"#;

#[test]
fn run_writes_logs_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small", SMALL);
    let out = bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path().join("runs")).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("PASS small"));
    let run = tmp.path().join("runs/small");
    let hl = read_log(&run.join("hl.csv")).unwrap();
    let oracle = read_log(&run.join("oracle.csv")).unwrap();
    assert_eq!(hl.len(), 300);
    assert_eq!(oracle.len(), 300);
    assert!(hl.iter().all(|r| r.loss.is_some() && r.accuracy.is_some()));
    assert!(hl.windows(2).all(|w| w[1].time > w[0].time));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["scenario"], "Mom-b");
    assert_eq!(summary["conventions"].as_array().unwrap().len(), 3);
}

#[test]
fn identical_seeds_give_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small", SMALL);
    for dir in ["a", "b"] {
        let out = bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path().join(dir)).output().unwrap();
        assert_eq!(code(&out), 0);
    }
    for file in ["hl.csv", "oracle.csv", "summary.json"] {
        let a = fs::read(tmp.path().join("a/small").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b/small").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let out =
        bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path().join("c")).args(["--seed", "5"]).output().unwrap();
    assert_eq!(code(&out), 0);
    assert_ne!(
        fs::read(tmp.path().join("a/small/hl.csv")).unwrap(),
        fs::read(tmp.path().join("c/small/hl.csv")).unwrap()
    );
}

#[test]
fn tolerance_breach_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    // The unaligned buffer convention does not match the Hamiltonian run.
    let body = SMALL.replace("seed = 4", "seed = 4\nbuffer_init = \"first_gradient\"");
    let cfg = write_config(tmp.path(), "small", &body);
    let out = bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 0, "first-step alignment should keep parity: {}", stdout(&out));
    let out =
        bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path()).args(["--tolerance", "0"]).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).starts_with("FAIL"));
}

#[test]
fn config_errors_exit_with_two_and_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad", &SMALL.replace("epochs = 2", "epochs = \"two\""));
    let out = bin().args(["run", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains("line 5"), "{err}");

    let cfg = write_config(tmp.path(), "unknown", &SMALL.replace("seed = 4", "seed = 4\nlearning_rate = 0.1"));
    assert_eq!(code(&bin().args(["run", "-c"]).arg(&cfg).output().unwrap()), 2);

    let out = bin().args(["run", "-c"]).arg(tmp.path().join("missing.toml")).output().unwrap();
    assert_eq!(code(&out), 2);

    let mismatch = SMALL.replace("kind = \"iris\"", "kind = \"sequences\"");
    let cfg = write_config(tmp.path(), "mismatch", &mismatch);
    assert_eq!(code(&bin().args(["run", "-c"]).arg(&cfg).output().unwrap()), 2);
}

#[test]
fn zero_epochs_writes_header_only_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small", &SMALL.replace("epochs = 2", "epochs = 0"));
    let out = bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("small/hl.csv")).unwrap();
    assert_eq!(text.trim(), "step,time,loss,accuracy,max_abs_dtheta,mean_abs_dtheta");
}

#[test]
fn compare_reports_the_first_offending_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small", SMALL);
    assert_eq!(code(&bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path()).output().unwrap()), 0);
    let hl = tmp.path().join("small/hl.csv");
    let oracle = tmp.path().join("small/oracle.csv");

    let out = bin().arg("compare").arg(&hl).arg(&hl).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("max_gap=0"));
    assert_eq!(code(&bin().arg("compare").arg(&hl).arg(&oracle).output().unwrap()), 0);

    let mut rows = read_log(&hl).unwrap();
    rows[17].loss = rows[17].loss.map(|l| l + 1e-6);
    rows[40].loss = rows[40].loss.map(|l| l - 1e-3);
    let perturbed = tmp.path().join("perturbed.csv");
    write_log(&rows, &perturbed).unwrap();
    let out = bin().arg("compare").arg(&hl).arg(&perturbed).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("first_offending_row=17"), "{}", stdout(&out));
    let loose = bin().arg("compare").arg(&hl).arg(&perturbed).args(["--tolerance", "1e-5"]).output().unwrap();
    assert!(stdout(&loose).contains("first_offending_row=40"));

    write_log(&rows[..10], &perturbed).unwrap();
    let out = bin().arg("compare").arg(&hl).arg(&perturbed).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row counts differ"));

    let original = read_log(&hl).unwrap();
    let report = compare_rows(&original, &original, 0.0).unwrap();
    assert!(report.pass && report.max_gap == 0.0);
}

#[test]
fn sweep_runs_every_shipped_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("sweep").arg(configs()).arg("-o").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}\n{}", stdout(&out), String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let shipped = fs::read_dir(configs()).unwrap().count();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), shipped);
}

#[test]
fn sweep_reports_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "small", SMALL);
    let bad = write_config(tmp.path(), "bad", "name = ");
    let out = bin().arg("sweep").arg(&good).arg(&bad).arg("-o").arg(tmp.path().join("runs")).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(tmp.path().join("runs/small/summary.json").exists());
}

#[test]
fn export_round_trips_through_the_loaders() {
    let tmp = tempfile::tempdir().unwrap();
    let iris = tmp.path().join("iris.csv");
    assert_eq!(code(&bin().args(["export", "iris"]).arg(&iris).args(["--seed", "3"]).output().unwrap()), 0);
    assert_eq!(read_table_csv(&iris).unwrap(), datasets::iris_like(3));

    let digits = tmp.path().join("digits.csv");
    assert_eq!(code(&bin().args(["export", "digits"]).arg(&digits).output().unwrap()), 0);
    assert_eq!(read_table_csv(&digits).unwrap(), datasets::digits_like(0));

    let seqs = tmp.path().join("seqs.jsonl");
    assert_eq!(code(&bin().args(["export", "sequences"]).arg(&seqs).output().unwrap()), 0);
    let expected = datasets::token_sequences(0, datasets::SequenceTask::default()).unwrap();
    assert_eq!(read_sequences_jsonl(&seqs).unwrap(), expected);
}

#[test]
fn file_datasets_resolve_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    datasets::write_table_csv(&datasets::iris_like(1), &tmp.path().join("table.csv")).unwrap();
    let body = SMALL.replace("kind = \"iris\"", "kind = \"csv\"\npath = \"table.csv\"");
    let cfg = write_config(tmp.path(), "small", &body);
    let out = bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path().join("runs")).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let seqs =
        datasets::token_sequences(2, datasets::SequenceTask { count: 3, length: 4, input_dim: 2, target_dim: 2 })
            .unwrap();
    datasets::write_sequences_jsonl(&seqs, &tmp.path().join("seqs.jsonl")).unwrap();
    let body = r#"
name = "jsonl"
scenario = "custom"
mode = "rnn_hl_bptt"
epochs = 2

[sgd]
gamma = 0.05
tau = 0.5

[model]
kind = "rnn"

[dataset]
kind = "jsonl"
path = "seqs.jsonl"
"#;
    let cfg = write_config(tmp.path(), "jsonl", body);
    let out = bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(tmp.path().join("runs")).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_log(&tmp.path().join("runs/jsonl/hl.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 3 * (2 * 4 - 1));
    assert!(rows.iter().all(|r| r.accuracy.is_none()));
}

#[test]
fn malformed_data_files_are_rejected_with_a_location() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    fs::write(&csv, "x0,x1,label\n1.0,2.0,0\n1.0,oops,1\n").unwrap();
    let err = read_table_csv(&csv).unwrap_err().to_string();
    assert!(err.contains(":3:"), "{err}");
    let jsonl = tmp.path().join("bad.jsonl");
    fs::write(&jsonl, "{\"tokens\": [[1.0]]}\n{\"tokens\": [[1.0], [1.0, 2.0]]}\n").unwrap();
    let err = read_sequences_jsonl(&jsonl).unwrap_err().to_string();
    assert!(err.contains(":2:"), "{err}");
}
