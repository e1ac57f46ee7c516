use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use manifold_nerf::field::NeuralField;
use manifold_nerf::training::Checkpoint;

fn cli(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manifold-nerf"))
        .args(args)
        .env("MANIFOLD_NERF_RUNS", root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn manifold-nerf")
}

fn ok(args: &[&str], root: &Path) -> Output {
    let out = cli(args, root);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A blobs3 dataset of `n` views at 16 px.
fn dataset(root: &Path, name: &str, pattern: &str, n: usize) -> PathBuf {
    let scene = root.join("scene.toml");
    if !scene.exists() {
        ok(&["scene-gen", "--preset", "blobs3", "--out", s(&scene)], root);
    }
    let dir = root.join(name);
    ok(
        &["dataset", "--scene", s(&scene), "--pattern", pattern, "-n", &n.to_string(), "--size", "16", "--samples", "64", "--out", s(&dir)],
        root,
    );
    dir
}

const TINY: [&str; 8] = [
    "--set",
    "batch_rays=32",
    "--set",
    "samples_per_ray=8",
    "--set",
    "hidden_layers=1",
    "--set",
    "hidden_width=16",
];

fn train(root: &Path, data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--dataset", s(data), "--out", s(out)];
    args.extend(TINY);
    args.extend(extra);
    cli(&args, root)
}

#[test]
fn scene_gen_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.toml"), dir.path().join("b.toml"), dir.path().join("c.toml"));
    ok(&["scene-gen", "--preset", "asym", "--seed", "4", "--out", s(&a)], dir.path());
    ok(&["scene-gen", "--preset", "asym", "--seed", "4", "--out", s(&b)], dir.path());
    ok(&["scene-gen", "--preset", "asym", "--seed", "5", "--out", s(&c)], dir.path());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    ok(&["scene-gen", "--preset", "blobs3", "--out", s(&a)], dir.path());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.matches("[[primitive]]").count(), 3);
}

#[test]
fn dataset_writes_images_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let alt = dataset(dir.path(), "alt", "alternating", 8);
    let pngs = std::fs::read_dir(&alt)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 8);
    assert_eq!(manifold_nerf::data::load_dataset(&alt).unwrap().len(), 8);

    let single = dataset(dir.path(), "one", "uniform_hemisphere", 1);
    assert_eq!(manifold_nerf::data::load_dataset(&single).unwrap().len(), 1);
}

#[test]
fn zero_iterations_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "data", "uniform_hemisphere", 8);
    let run = dir.path().join("run");
    let out = train(dir.path(), &data, &run, &["--iters", "0", "--seed", "7", "--method", "nerf"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = Checkpoint::load(&run.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.iteration, 0);
    assert_eq!(ckpt.field, NeuralField::new(ckpt.config.field, 7));
    assert!(run.join("config.toml").exists());
    assert!(run.join("run.log").exists());
}

#[test]
fn fixed_seed_gives_identical_loss_logs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "data", "uniform_hemisphere", 8);
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let out = train(dir.path(), &data, &run, &["--iters", "12", "--seed", "3", "--method", "manifoldnerf", "--set", "manifold_interval=4"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        logs.push((
            std::fs::read(run.join("loss.csv")).unwrap(),
            std::fs::read(run.join("checkpoint.json")).unwrap(),
            std::fs::read(run.join("config.toml")).unwrap(),
        ));
    }
    assert_eq!(logs[0], logs[1]);
    let rows = String::from_utf8(logs[0].0.clone()).unwrap().lines().count();
    assert_eq!(rows, 13);
}

#[test]
fn eval_writes_one_row_per_view_plus_mean() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "data", "horizontal_ring", 3);
    let run = dir.path().join("run");
    assert!(train(dir.path(), &data, &run, &["--iters", "2", "--method", "nerf"]).status.success());
    let csv = dir.path().join("metrics/eval.csv");
    let renders = dir.path().join("renders");
    ok(
        &["eval", "--checkpoint", s(&run.join("checkpoint.json")), "--dataset", s(&data), "--out", s(&csv), "--renders", s(&renders)],
        dir.path(),
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 1, "{text}");
    assert_eq!(std::fs::read_dir(&renders).unwrap().count(), 3);
}

#[test]
fn analyze_writes_study_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "data", "horizontal_ring", 6);
    ok(&["analyze", "--dataset", s(&data)], dir.path());
    for f in ["similarity.csv", "histogram.csv", "interpolation.csv", "projection.csv"] {
        assert!(dir.path().join("analyze").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = train(dir.path(), &missing, &dir.path().join("r0"), &["--iters", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let data = dataset(dir.path(), "data", "horizontal_ring", 4);
    let out = train(dir.path(), &data, &dir.path().join("r1"), &["--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1));

    let out = train(dir.path(), &data, &dir.path().join("r2"), &["--method", "manifoldnerf", "--set", "pair_threshold=0.125"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.125"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{}").unwrap();
    let out = cli(&["eval", "--checkpoint", s(&bad), "--dataset", s(&data), "--out", s(&dir.path().join("m.csv"))], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
