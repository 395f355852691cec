use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semedit::mesh::io;
use semedit_cli::data::{read_manifest, LabelFile};
use tempfile::TempDir;

fn semedit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semedit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semedit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = semedit(dir, args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "one-line error expected: {err}");
    assert!(err.starts_with("semedit: error["), "{err}");
    err
}

#[test]
fn gen_data_splits_four_to_one_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--class", "chair", "--synthetic", "1000", "--realistic", "10", "--seed", "7", "--out", "a"]);
    let m = read_manifest(&d.join("a")).unwrap();
    assert_eq!((m.train.synthetic.len(), m.test.synthetic.len()), (800, 200));
    assert_eq!((m.train.realistic.len(), m.test.realistic.len()), (8, 2));
    ok(d, &["gen-data", "--class", "chair", "--synthetic", "1000", "--realistic", "10", "--seed", "7", "--out", "b"]);
    let a = fs::read(d.join("a/manifest.json")).unwrap();
    assert_eq!(a, fs::read(d.join("b/manifest.json")).unwrap());
    let first = &m.test.synthetic[0];
    assert_eq!(
        fs::read(d.join("a").join(&first.mesh)).unwrap(),
        fs::read(d.join("b").join(&first.mesh)).unwrap()
    );
}

#[test]
fn humanoid_labels_have_thirty_values() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--class", "humanoid", "--synthetic", "5", "--realistic", "5", "--out", "h"]);
    let m = read_manifest(&d.join("h")).unwrap();
    let entry = &m.train.synthetic[0];
    let labels: LabelFile =
        serde_json::from_str(&fs::read_to_string(d.join("h").join(entry.labels.as_ref().unwrap())).unwrap()).unwrap();
    assert_eq!(labels.params.len(), 30);
    assert_eq!(labels.names.len(), 30);
    assert!(m.train.realistic.iter().all(|e| e.labels.is_none()));
}

#[test]
fn train_encode_deform_round_trip() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--class", "chair", "--synthetic", "20", "--realistic", "10", "--out", "data"]);
    fs::write(d.join("chair.cfg"), "class = \"chair\"\nsteps = 3\neval_every = 0\n").unwrap();
    let table = ok(d, &["train", "--config", "chair.cfg", "--data", "data", "--out", "run", "points=128"]);
    assert!(table.contains("<0.02"));
    let config = fs::read_to_string(d.join("run/config.toml")).unwrap();
    let parsed: toml::Table = config.parse().unwrap();
    assert_eq!(parsed["alpha"].as_float(), Some(0.3));
    assert_eq!(parsed["beta"].as_float(), Some(30.0));
    assert_eq!(parsed["gamma"].as_float(), Some(50.0));
    assert_eq!(parsed["points"].as_integer(), Some(128));
    let losses = fs::read_to_string(d.join("run/losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 4);

    let input = d.join("data/meshes/realistic_00003.obj");
    let input = input.to_str().unwrap();
    ok(d, &["encode", "--in", input, "--ckpt", "run/checkpoint.bin", "--out", "params.json"]);
    fs::write(d.join("none.json"), "").unwrap();
    ok(d, &["deform", "--in", input, "--params", "params.json", "--edits", "none.json", "--out", "same.obj"]);
    let a = io::load_mesh(input).unwrap();
    let b = io::load_mesh(d.join("same.obj")).unwrap();
    assert_eq!(a.faces, b.faces);
    for (x, y) in a.vertices.iter().zip(&b.vertices) {
        for k in 0..3 {
            assert!((x[k] - y[k]).abs() <= 1e-6);
        }
    }

    fs::write(
        d.join("edit.json"),
        r#"[{"name": "back_height", "op": "delta", "value": 0.1}]"#,
    )
    .unwrap();
    ok(d, &["deform", "--in", input, "--ckpt", "run/checkpoint.bin", "--edits", "edit.json", "--out", "edited.ply"]);
    let c = io::load_mesh(d.join("edited.ply")).unwrap();
    assert_eq!(c.faces, a.faces);
    assert!(c.vertices.iter().zip(&a.vertices).any(|(x, y)| x != y));

    ok(d, &["edit", "--params", "params.json", "--edits", "edit.json", "--out", "edited.json"]);
    let p: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("params.json")).unwrap()).unwrap();
    let q: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("edited.json")).unwrap()).unwrap();
    assert_eq!(p["params"].as_array().unwrap().len(), 11);
    assert_ne!(p["params"][0], q["params"][0]);
    assert_eq!(p["params"][1], q["params"][1]);

    let other = d.join("data/meshes/realistic_00004.obj");
    let err = fails(d, &["deform", "--in", other.to_str().unwrap(), "--params", "params.json", "--out", "x.obj"]);
    assert!(err.contains("not encoded from"));
}

#[test]
fn eval_of_oracle_predictions_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--class", "airplane", "--synthetic", "10", "--realistic", "5", "--out", "data"]);
    let m = read_manifest(&d.join("data")).unwrap();
    let mut oracle = serde_json::Map::new();
    for e in &m.test.synthetic {
        let labels: LabelFile =
            serde_json::from_str(&fs::read_to_string(d.join("data").join(e.labels.as_ref().unwrap())).unwrap()).unwrap();
        oracle.insert(e.id.clone(), serde_json::json!(labels.params));
    }
    fs::write(d.join("oracle.json"), serde_json::Value::Object(oracle).to_string()).unwrap();
    let table = ok(d, &["eval", "--data", "data", "--predictions", "oracle.json", "--out", "mve.csv"]);
    assert!(table.contains("100.0%"));
    assert_eq!(
        fs::read_to_string(d.join("mve.csv")).unwrap(),
        "threshold,fraction\n0.01,1\n0.02,1\n0.03,1\n"
    );
}

#[test]
fn errors_are_one_line() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let err = fails(d, &["encode", "--in", "missing.obj", "--ckpt", "missing.bin", "--out", "p.json"]);
    assert!(err.contains("error[io]"));
    fs::write(d.join("bad.cfg"), "class = \"chair\"\nlearning_rat = 0.1\n").unwrap();
    let err = fails(d, &["train", "--config", "bad.cfg", "--out", "run"]);
    assert!(err.contains("error[config]") && err.contains("learning_rate"));
    let err = fails(d, &["train", "--out", "run", "class=chair", "batch_size=3"]);
    assert!(err.contains("error[config]"));
    fs::write(d.join("junk.bin"), b"not a checkpoint").unwrap();
    let err = fails(d, &["encode", "--in", "x.obj", "--ckpt", "junk.bin", "--out", "p.json"]);
    assert!(err.contains("error[checkpoint]"));
}

#[test]
fn annotated_config_matches_chair_defaults() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/chair.toml")).unwrap();
    let config = semedit::training::TrainConfig::load(Some(&text), &[]).unwrap();
    assert_eq!(config, semedit::training::TrainConfig::for_class(semedit::templates::ClassId::Chair));
}
