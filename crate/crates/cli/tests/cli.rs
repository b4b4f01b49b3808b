use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 3
n_seeds = 2

[data]
task = "SL22"
samples_per_subclass = [20, 20, 40, 40]
difficulty = [0.2, 0.8, 0.2, 0.8]
feature_dim = 2
sigma = 1.0
train_fraction = 0.5

[teacher]
hidden = [16]
epochs = 3
batch_size = 16
lr = 1e-3
weight_decay = 5e-4
lr_decay = 1.0

[student]
hidden = [4]
epochs = 3
batch_size = 16
lr = 1e-3
weight_decay = 5e-4
lr_decay = 1.0

[kd]
tau = 128.0
lambda = 0.45

[skd]
tau = 5.0
lambda = 0.75
"#;

fn skdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skdlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(&o));
    stdout(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn generate(&self) -> PathBuf {
        let data = self.path("data");
        ok(skdlab(&["generate", "-c", s(&self.path("small.toml")), "-o", s(&data)]));
        data
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let data = self.path("data");
        let config = self.path("small.toml");
        let out = self.path(out);
        let mut args = vec!["train", "-c", s(&config), "-d", s(&data), "-o", s(&out)];
        args.extend_from_slice(extra);
        skdlab(&args)
    }
}

#[test]
fn generate_writes_three_files_deterministically() {
    let ws = Workspace::new();
    let data = ws.generate();
    let names = ["train.csv", "test.csv", "hierarchy.json"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(data.join(n)).unwrap()).collect();
    ws.generate();
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(&fs::read(data.join(n)).unwrap(), bytes, "{n} changed on rerun");
    }
    let train = String::from_utf8(first[0].clone()).unwrap();
    assert_eq!(train.lines().count() - 1, 60);
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let ws = Workspace::new();
    let missing = ws.path("nope.toml");
    let o = skdlab(&["generate", "-c", s(&missing), "-o", s(&ws.path("d"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
}

#[test]
fn subclass_teacher_has_subclass_width() {
    let ws = Workspace::new();
    ws.generate();
    ok(ws.train("t", &["--role", "teacher", "--labels", "subclass"]));
    let ckpt: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path("t/checkpoint.json")).unwrap()).unwrap();
    let dims = ckpt["layer_dims"].as_array().unwrap();
    assert_eq!(dims.last().unwrap().as_u64(), Some(4));
    assert!(ws.path("t/confusion_class.csv").exists());
    assert!(ws.path("t/confusion_subclass.csv").exists());
    assert!(ws.path("t/metrics.json").exists());
}

#[test]
fn student_modes_validate_their_teacher() {
    let ws = Workspace::new();
    ws.generate();
    let o = ws.train("s", &["--role", "student", "--mode", "skd"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    ok(ws.train("t", &["--role", "teacher", "--labels", "subclass"]));
    let ckpt = ws.path("t/checkpoint.json");
    let o = ws.train("s", &["--role", "student", "--mode", "kd", "--teacher", s(&ckpt)]);
    assert!(!o.status.success());
    assert!(stderr(&o).to_lowercase().contains("level"), "{}", stderr(&o));

    let out = ok(ws.train("s", &["--role", "student", "--mode", "skd", "--teacher", s(&ckpt)]));
    assert!(!out.is_empty());
    let eval = ok(skdlab(&[
        "evaluate",
        "--checkpoint",
        s(&ws.path("s/checkpoint.json")),
        "-d",
        s(&ws.path("data")),
    ]));
    assert!(eval.contains("F1"), "{eval}");
}

#[test]
fn bits_detection_bound() {
    let out = ok(skdlab(&[
        "bits", "--p-h0", "0.9", "--p-h1", "0.9", "--n-s", "2", "--p-s", "0.85", "--n-h0", "2162", "--n-h1", "990",
    ]));
    assert!(out.contains("class_bits 0.531004"), "{out}");
    assert!(out.contains("total_bits 0.653548"), "{out}");
}

#[test]
fn bits_from_confusion() {
    let ws = Workspace::new();
    let class = ws.path("class.csv");
    fs::write(&class, "90,10\n20,80\n").unwrap();
    let out = ok(skdlab(&["bits", "--from-confusion", s(&class), "-o", s(&ws.path("b"))]));
    assert!(out.contains("0.850000"), "{out}");
    let csv = fs::read_to_string(ws.path("b/bits.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "", "class-level row must leave the subclass term empty: {csv}");

    let sub = ws.path("sub.csv");
    fs::write(&sub, "40,5,5,0\n5,40,0,5\n10,0,70,10\n0,10,10,70\n").unwrap();
    fs::write(&class, "90,10\n20,180\n").unwrap();
    let h = ws.path("h.json");
    fs::write(&h, r#"{"subclasses_per_class":[2,2]}"#).unwrap();
    let out = ok(skdlab(&[
        "bits", "--from-confusion", s(&class), "--subclass-confusion", s(&sub), "--hierarchy", s(&h), "--task", "SL22",
    ]));
    assert!(out.contains("SL22") && out.contains("fitted"), "{out}");
}

#[test]
fn capacity_variants() {
    assert!(ok(skdlab(&["capacity", "--qsc", "4", "0.7"])).contains("capacity 0.643220"));
    let bac = ok(skdlab(&["capacity", "--bac", "0.9", "0.8"]));
    assert!(bac.contains("capacity 0.397754") && bac.contains("alpha_star 0.482445"), "{bac}");
    assert!(ok(skdlab(&["capacity", "--z", "0.5"])).contains("capacity 0.321928"));

    let ws = Workspace::new();
    let m = ws.path("w.csv");
    fs::write(&m, "0.9,0.1\n0.2,0.8\n").unwrap();
    assert!(ok(skdlab(&["capacity", "--matrix", s(&m)])).contains("capacity 0.397754"));

    let o = skdlab(&["capacity", "--z", "0.5", "--qsc", "2", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_writes_report() {
    let ws = Workspace::new();
    let out = ws.path("exp");
    let table = ok(skdlab(&["experiment", "-c", s(&ws.path("small.toml")), "-o", s(&out)]));
    assert!(table.contains("Student + SKD"), "{table}");
    for f in ["report.json", "summary.csv", "timing.json", "runs/run_000.json", "runs/run_001.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let first = fs::read(out.join("report.json")).unwrap();
    ok(skdlab(&["experiment", "-c", s(&ws.path("small.toml")), "-o", s(&out), "--jobs", "2"]));
    assert_eq!(fs::read(out.join("report.json")).unwrap(), first);
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 7);
}
