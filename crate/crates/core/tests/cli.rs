use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
manifest = "data/manifest.json"

[synth]
image_size = 32
num_images = 12
num_test_images = 4
min_size = 5
max_size = 9
seed = 3

[proposer]
scale_multipliers = [1.0, 4.0, 16.0]
pyramid = [1.0]

[train]
epochs = 3
batch_size = 4
base_lr = 0.01
overlap_only_epochs = 1

[eval]
trimap_widths = [1, 3]
"#;

fn boxsup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxsup"))
        .args(args)
        .output()
        .expect("spawn boxsup")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes the small config and its synthetic dataset under `dir`.
fn setup(dir: &Path) -> std::path::PathBuf {
    let config = dir.join("run.toml");
    fs::write(&config, SMALL).unwrap();
    ok(&boxsup(&[
        "synth",
        "--config",
        p(&config),
        "--out",
        p(&dir.join("data")),
    ]));
    config
}

#[test]
fn unknown_flag_exits_2() {
    let out = boxsup(&["train", "--out", "x", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[train]\nk = 0\n").unwrap();
    let out = boxsup(&[
        "train",
        "--config",
        p(&config),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&config, "[train]\nnot_a_field = 1\n").unwrap();
    let out = boxsup(&[
        "train",
        "--config",
        p(&config),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_manifest_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "manifest = \"nowhere/manifest.json\"\n").unwrap();
    let out = boxsup(&[
        "train",
        "--config",
        p(&config),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere/manifest.json"), "{stderr}");
}

#[test]
fn gradcheck_passes() {
    let out = boxsup(&["gradcheck", "--trials", "2"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
}

#[test]
fn pipeline_snapshot_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = setup(d);

    ok(&boxsup(&[
        "propose",
        "--config",
        p(&config),
        "--out",
        p(&d.join("pools")),
    ]));
    assert_eq!(fs::read_dir(d.join("pools")).unwrap().count(), 16);

    let run = d.join("run");
    ok(&boxsup(&[
        "train",
        "--config",
        p(&config),
        "--out",
        p(&run),
    ]));
    let history = fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 3);
    for (i, line) in history.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["epoch"], i);
        assert!(v["supervision_miou"].is_f64());
    }
    for f in ["config.json", "model.json", "checkpoints/epoch_003.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    // the snapshot alone reproduces the run
    let again = d.join("again");
    ok(&boxsup(&[
        "train",
        "--config",
        p(&run.join("config.json")),
        "--out",
        p(&again),
    ]));
    assert_eq!(
        fs::read(again.join("history.jsonl")).unwrap(),
        history.as_bytes()
    );
    assert_eq!(
        fs::read(again.join("model.json")).unwrap(),
        fs::read(run.join("model.json")).unwrap()
    );

    let resumed = d.join("resumed");
    ok(&boxsup(&[
        "train",
        "--config",
        p(&config),
        "--out",
        p(&resumed),
        "--resume",
        p(&run.join("checkpoints/epoch_001.json")),
    ]));
    assert_eq!(
        fs::read(resumed.join("history.jsonl")).unwrap(),
        history.as_bytes()
    );
    assert_eq!(
        fs::read(resumed.join("model.json")).unwrap(),
        fs::read(run.join("model.json")).unwrap()
    );

    let pred = d.join("pred");
    ok(&boxsup(&[
        "infer",
        "--config",
        p(&config),
        "--model",
        p(&run.join("model.json")),
        "--out",
        p(&pred),
    ]));
    assert_eq!(fs::read_dir(&pred).unwrap().count(), 4);

    let eval = boxsup(&[
        "eval",
        "--config",
        p(&config),
        "--pred",
        p(&pred),
        "--out",
        p(&d.join("eval")),
    ]);
    ok(&eval);
    assert!(String::from_utf8_lossy(&eval.stdout).starts_with("mean IoU"));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("eval/report.json")).unwrap()).unwrap();
    let mean = report["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));

    ok(&boxsup(&[
        "trimap",
        "--config",
        p(&config),
        "--pred",
        p(&pred),
        "--out",
        p(&d.join("tri")),
    ]));
    for f in ["trimap.json", "trimap.csv", "trimap.svg"] {
        assert!(d.join("tri").join(f).exists(), "{f}");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let mask_only = d.join("mask.toml");
    fs::write(
        &mask_only,
        SMALL.replace("[train]\n", "[train]\nsupervision_mode = \"mask\"\n"),
    )
    .unwrap();
    let a = d.join("a");
    let b = d.join("b");
    ok(&boxsup(&[
        "train",
        "--config",
        p(&mask_only),
        "--out",
        p(&a),
    ]));
    ok(&boxsup(&[
        "train",
        "--config",
        p(&mask_only),
        "--seed",
        "9",
        "--out",
        p(&b),
    ]));
    assert_ne!(
        fs::read(a.join("history.jsonl")).unwrap(),
        fs::read(b.join("history.jsonl")).unwrap()
    );
    let snap: serde_json::Value =
        serde_json::from_slice(&fs::read(b.join("config.json")).unwrap()).unwrap();
    assert_eq!(snap["train"]["seed"], 9);
}

#[test]
fn shipped_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    let config = boxsup::cli::RunConfig::load(&path).unwrap();
    assert_eq!(config.train.batch_size, 5);
    assert!(config.manifest.unwrap().ends_with("data/synth/manifest.json"));
}
