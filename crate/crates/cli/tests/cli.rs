use std::path::Path;
use std::process::{Command, Output};

const SMOKE: &str = r#"
preset = "tiny"
seed = 4
[dataset.synthetic]
class_count = 6
feature_dim = 16
samples_per_class = 20
cluster_separation = 8.0
seed = 3
[tasks]
initial_classes = 2
increment = 2
task_count = 3
[classifier]
epochs = 2
[gan]
epochs = 1
batch_size = 16
[selection]
k = 3
"#;

fn replaycl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_replaycl"))
        .args(args)
        .env_remove("REPLAYCL_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_reports_and_seed_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("out");
    let o = replaycl(&["run", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "summary.csv", "curves.csv", "coverage.csv", "manifest.json", "config.json", "tasks.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(out.join("replay/replay_task_01.rcl.json").exists());
    assert!(out.join("losses/gan_loss_task_01.csv").exists());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["run"]["seed"], 7);
    assert_eq!(report["runs"][0]["seed"], 7);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["dataset_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMOKE}\n[slection]\nscheme = \"l2_labels\"\n"));
    let o = replaycl(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("slection.scheme"), "{}", stderr(&o));
}

#[test]
fn bad_override_and_missing_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let o = replaycl(&["run", "--config", &cfg, "--set", "gan.batch_size=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = replaycl(&["run", "--config", &cfg, "--scenario", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = replaycl(&["run", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = replaycl(&["run", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn bad_thread_count_exits_2() {
    let o = Command::new(env!("CARGO_BIN_EXE_replaycl"))
        .args(["dataset", "inspect", "whatever.rcl"])
        .env("REPLAYCL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("REPLAYCL_THREADS"));
}

#[test]
fn sweep_aggregates_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("sweep");
    let args = [
        "sweep", "--config", &cfg, "--seeds", "1,2", "--scenarios", "none,malcl", "--out", out.to_str().unwrap(),
    ];
    let o = replaycl(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let runs: Vec<_> = ["none/seed_1", "none/seed_2", "malcl_l1_cmean_fml/seed_1", "malcl_l1_cmean_fml/seed_2"]
        .iter()
        .map(|d| out.join(d))
        .collect();
    assert!(runs.iter().all(|d| d.join("manifest.json").exists()));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);

    let mut resume_args = args.to_vec();
    resume_args.push("--resume");
    let o = replaycl(&resume_args);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("skipped").count(), 4, "{stdout}");
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap(), summary);

    // A changed config no longer matches and is rerun.
    let mut changed = resume_args.clone();
    changed.extend(["--set", "classifier.epochs=1"]);
    let o = replaycl(&changed);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("skipped").count(), 0);
}

#[test]
fn sweep_rows_cover_both_losses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("sweep");
    let o = replaycl(&[
        "sweep", "--config", &cfg, "--seeds", "1", "--scenarios", "malcl/l1_cmean/fml,malcl/l1_cmean/bce",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("MalCL,l1_cmean,fml,"));
    assert!(summary.contains("MalCL,l1_cmean,bce,"));
}

#[test]
fn dataset_round_trips_and_inspects() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("d.rcl");
    let csv = dir.path().join("d.csv");
    let back = dir.path().join("back.rcl");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let o = replaycl(&[
        "dataset", "make-synthetic", "--classes", "3", "--dim", "5", "--per-class", "4", "--seed", "1", "--out", &s(&bin),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = replaycl(&["dataset", "inspect", &s(&bin)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("feature_dim: 5") && text.contains("classes: 3") && text.contains("samples: 12"), "{text}");

    assert!(replaycl(&["dataset", "convert-csv", &s(&bin), &s(&csv)]).status.success());
    assert!(replaycl(&["dataset", "convert-csv", &s(&csv), &s(&back)]).status.success());
    let o = replaycl(&["dataset", "inspect", &s(&back)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("samples: 12"));
    assert_eq!(std::fs::read(&bin).unwrap().len(), std::fs::read(&back).unwrap().len());
}

#[test]
fn truncated_binary_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("d.rcl");
    let o = replaycl(&[
        "dataset", "make-synthetic", "--classes", "2", "--dim", "3", "--per-class", "3", "--out", bin.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let bytes = std::fs::read(&bin).unwrap();
    std::fs::write(&bin, &bytes[..bytes.len() - 5]).unwrap();
    let o = replaycl(&["dataset", "inspect", bin.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("byte offset"), "{}", stderr(&o));
}
