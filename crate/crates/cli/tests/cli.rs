use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[dataset]
generator = "gaussian-mixture"
n_per_class = 40
k_components = 2
num_classes = 2

[network]
hidden = [16]

[train]
epochs = 2
batch_size = 32
"#;

fn symmflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symmflow"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = symmflow(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr_of(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A run directory with data and a trained small model.
fn trained_run() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap().to_owned();
    ok(dir.path(), &["--config", &cfg, "gen-data"]);
    ok(dir.path(), &["train"]);
    dir
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn default_gen_data_writes_the_split_and_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data"]);
    let train = read(dir.path(), "train.csv");
    let test = read(dir.path(), "test.csv");
    assert_eq!(train.lines().count(), 1501);
    assert_eq!(test.lines().count(), 501);
    assert!(train.starts_with("x0,x1,label\n"));
    assert!(read(dir.path(), "config.toml").contains("generator = \"two-spirals\""));
    let first = train.clone();
    ok(dir.path(), &["gen-data"]);
    assert_eq!(read(dir.path(), "train.csv"), first);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[train]\nepochs = 0\n", "train.epochs"),
        ("[train]\nbatchsize = 8\n", "batchsize"),
        ("[dataset]\ngenerator = \"moons\"\n", "dataset.generator"),
        ("[network]\nactivation = \"gelu\"\n", "network.activation"),
    ];
    for (text, field) in cases {
        let cfg = dir.path().join("bad.toml");
        fs::write(&cfg, text).unwrap();
        let o = symmflow(&dir.path().join("out"), &["--config", cfg.to_str().unwrap(), "gen-data"]);
        assert!(!o.status.success());
        assert!(stderr_of(&o).contains(field), "{field}: {}", stderr_of(&o));
        assert!(!dir.path().join("out").exists());
    }
}

#[test]
fn train_writes_checkpoint_and_loss_history() {
    let dir = trained_run();
    let loss = read(dir.path(), "loss.csv");
    assert_eq!(loss.lines().next(), Some("epoch,mean_loss"));
    assert_eq!(loss.lines().count(), 3);
    assert!(read(dir.path(), "checkpoint.txt").starts_with("symmflow-checkpoint"));
}

#[test]
fn resume_with_zero_epochs_keeps_the_checkpoint() {
    let dir = trained_run();
    let before = read(dir.path(), "checkpoint.txt");
    ok(dir.path(), &["train", "--resume", "--epochs", "0"]);
    assert_eq!(read(dir.path(), "checkpoint.txt"), before);
    ok(dir.path(), &["train", "--resume", "--epochs", "1"]);
    assert_ne!(read(dir.path(), "checkpoint.txt"), before);
    assert_eq!(read(dir.path(), "loss.csv").lines().last().unwrap().split(',').next(), Some("3"));
}

#[test]
fn objective_flag_switches_the_loss() {
    let dir = trained_run();
    let symmetric = read(dir.path(), "loss.csv");
    ok(dir.path(), &["train", "--objective", "conditional-baseline"]);
    assert_ne!(read(dir.path(), "loss.csv"), symmetric);
    assert!(read(dir.path(), "config.toml").contains("objective = \"conditional-baseline\""));
    let o = symmflow(dir.path(), &["train", "--objective", "reverse-only"]);
    assert!(!o.status.success());
    assert!(stderr_of(&o).contains("train.objective"));
}

#[test]
fn sample_outputs() {
    let dir = trained_run();
    ok(dir.path(), &["sample", "--class", "1", "--n", "0"]);
    assert_eq!(read(dir.path(), "samples.csv"), "x0,x1,class\n");
    ok(dir.path(), &["sample", "--class", "1", "--n", "30", "--svg"]);
    let first = read(dir.path(), "samples.csv");
    assert_eq!(first.lines().count(), 31);
    assert!(first.lines().skip(1).all(|l| l.ends_with(",1")));
    assert!(read(dir.path(), "samples.svg").starts_with("<svg"));
    assert!(read(dir.path(), "mmd.csv").starts_with("pair,mmd2,bandwidth\n"));
    ok(dir.path(), &["sample", "--class", "1", "--n", "30"]);
    assert_eq!(read(dir.path(), "samples.csv"), first);
    let o = symmflow(dir.path(), &["sample", "--class", "2", "--n", "5"]);
    assert!(!o.status.success());
}

#[test]
fn classify_labelled_and_unlabelled_input() {
    let dir = trained_run();
    ok(dir.path(), &["classify", "--steps", "1"]);
    let preds = read(dir.path(), "predictions.csv");
    assert!(preds.starts_with("index,predicted,y0_0\n"));
    assert_eq!(preds.lines().count(), 1 + 20 + 1);
    assert!(preds.lines().last().unwrap().starts_with("# accuracy,"));

    let unlabelled = dir.path().join("points.csv");
    fs::write(&unlabelled, "x0,x1\n0.5,0.5\n-1.0,0.25\n").unwrap();
    ok(dir.path(), &["classify", "--input", unlabelled.to_str().unwrap()]);
    let preds = read(dir.path(), "predictions.csv");
    assert_eq!(preds.lines().count(), 3);
    assert!(!preds.contains('#'));

    ok(dir.path(), &["classify", "--method", "bayes", "--n-mc", "8"]);
    assert!(read(dir.path(), "predictions.csv").starts_with("index,predicted,p0,p1\n"));
}

#[test]
fn classify_reports_the_bad_line() {
    let dir = trained_run();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x0,x1\n0.5,0.5\n0.1,oops\n").unwrap();
    let o = symmflow(dir.path(), &["classify", "--input", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr_of(&o).contains("line 3"), "{}", stderr_of(&o));
    assert!(!dir.path().join("predictions.csv").exists());
}

#[test]
fn sweep_rows_and_reproducibility() {
    let dir = trained_run();
    ok(dir.path(), &["sweep", "--steps", "1,2,5,10,20,50", "--svg"]);
    let csv = read(dir.path(), "sweep.csv");
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "steps,accuracy");
    let steps: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["1", "2", "5", "10", "20", "50"]);
    assert!(read(dir.path(), "sweep.svg").contains("<polyline"));
    ok(dir.path(), &["sweep", "--steps", "1,2,5,10,20,50"]);
    assert_eq!(read(dir.path(), "sweep.csv"), csv);
    ok(dir.path(), &["sweep", "--steps", "5"]);
    assert_eq!(read(dir.path(), "sweep.csv").lines().count(), 2);
    assert!(!symmflow(dir.path(), &["sweep", "--steps", "5,2"]).status.success());
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(dir.path(), &["gradcheck"]);
    assert!(report.contains("layer 0 Weight"));
    assert!(report.contains("max relative error"));
    let o = symmflow(dir.path(), &["gradcheck", "--corrupt", "1e-2"]);
    assert!(!o.status.success());
    assert!(stderr_of(&o).contains("gradient check failed"));
}

#[test]
fn missing_inputs_fail_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = symmflow(dir.path(), &["train"]);
    assert!(!o.status.success());
    assert!(stderr_of(&o).contains("gen-data"));
    ok(dir.path(), &["gen-data"]);
    let o = symmflow(dir.path(), &["sweep"]);
    assert!(!o.status.success());
    assert!(stderr_of(&o).contains("train"));
    assert!(!dir.path().join("sweep.csv").exists());
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.contains(".tmp-"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}
