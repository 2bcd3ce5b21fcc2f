use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use trajmine::io::frames::encode_png;
use trajmine_core::Image;

fn trajmine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajmine"))
        .args(args)
        .env("TRAJMINE_LOG", "off")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = trajmine(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

/// Emits a simulated scene with the given TOML config, mines it and returns the report.
fn emit_and_mine(dir: &Path, config: &str) -> Value {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let scene = dir.join("scene");
    let out = dir.join("out");
    ok(&["simulate", "--config", s(&cfg), "--seeds", "1", "--emit", s(&scene)]);
    ok(&[
        "mine",
        "--config",
        s(&cfg),
        "--detections",
        s(&scene.join("detections.jsonl")),
        "--frames",
        s(&scene.join("frames")),
        "--out",
        s(&out),
    ]);
    read_json(&out.join("report.json"))["report"].clone()
}

fn textured_png(dir: &Path) -> PathBuf {
    let mut img = Image::filled(96, 80, 1, 0);
    for y in 0..80u32 {
        for x in 0..96u32 {
            let v = x.wrapping_mul(2654435761).wrapping_add(y.wrapping_mul(40503)).rotate_left(7) ^ (x * y);
            img.pixel_mut(x, y)[0] = (v >> 8) as u8;
        }
    }
    let p = dir.join("still.png");
    fs::write(&p, encode_png(&img).unwrap()).unwrap();
    p
}

#[test]
fn noiseless_scene_mines_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let r = emit_and_mine(dir.path(), "seed = 3\n");
    assert_eq!(r["trajectories"], 4);
    assert_eq!(r["hard_positives"], 0);
    assert_eq!(r["hard_negatives"], 0);
    assert_eq!(r["admitted_frames"], 0);
}

#[test]
fn flanked_dropout_becomes_hard_positive() {
    let dir = tempfile::tempdir().unwrap();
    let r = emit_and_mine(dir.path(), "seed = 3\n[sim.noise]\nforced_dropouts = [[1, 12]]\n");
    assert_eq!(r["hard_positives"], 1);
    assert_eq!(r["admitted_frames"], 1);
    let ds = read_json(&dir.path().join("out/dataset.json"));
    let frames = ds["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0]["frame_index"], 12);
}

#[test]
fn rerun_from_embedded_config_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    emit_and_mine(dir.path(), "seed = 5\n[sim.noise]\nforced_dropouts = [[0, 7], [2, 20]]\n");
    let ds_path = dir.path().join("out/dataset.json");
    let first = fs::read(&ds_path).unwrap();
    let embedded = dir.path().join("embedded.json");
    fs::write(&embedded, read_json(&ds_path)["meta"]["config"].to_string()).unwrap();
    fs::remove_dir_all(dir.path().join("out")).unwrap();
    ok(&["mine", "--config", s(&embedded), "--jobs", "1"]);
    assert_eq!(fs::read(&ds_path).unwrap(), first);
}

#[test]
fn missing_detections_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let r = trajmine(&[
        "mine",
        "--detections",
        s(&dir.path().join("nope.jsonl")),
        "--frames",
        s(dir.path()),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn invalid_threshold_is_a_config_error() {
    let r = trajmine(&["simulate", "--theta-iou", "1.5"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("config"));
}

#[test]
fn malformed_detections_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("d.jsonl");
    fs::write(&det, "{\"video_id\":\"v\",\"frame_index\":0,\"detections\":[]}\n{oops\n").unwrap();
    let r = trajmine(&["mine", "--detections", s(&det), "--frames", s(dir.path()), "--out", s(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"));
}

#[test]
fn genvideo_loop_and_base() {
    let dir = tempfile::tempdir().unwrap();
    let img = textured_png(dir.path());
    let out = dir.path().join("videos");
    ok(&["genvideo", "--images", s(&img), "--out", s(&out), "--seed", "9"]);
    let video = out.join("still");
    let manifest = read_json(&video.join("manifest.json"));
    assert_eq!(manifest["schedule"].as_array().unwrap().len(), 49);
    let pngs = fs::read_dir(&video)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 17);

    let first = fs::read(video.join("manifest.json")).unwrap();
    ok(&["genvideo", "--images", s(&img), "--out", s(&out), "--seed", "9", "--jobs", "3"]);
    assert_eq!(fs::read(video.join("manifest.json")).unwrap(), first);

    let base = dir.path().join("base");
    ok(&["genvideo", "--images", s(&img), "--out", s(&base), "--mode", "base"]);
    let m = read_json(&base.join("still/manifest.json"));
    assert_eq!(m["schedule"], serde_json::json!([0]));
}

fn simulate(dir: &Path, config: &str, seeds: u64) -> Value {
    let cfg = dir.join("sim.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("sim.json");
    ok(&["simulate", "--config", s(&cfg), "--seeds", &seeds.to_string(), "--out", s(&out)]);
    read_json(&out)["strategies"].clone()
}

#[test]
fn zero_noise_simulation_is_pure() {
    let dir = tempfile::tempdir().unwrap();
    let st = simulate(dir.path(), "[sim.scene]\ncrossing = true\n", 10);
    assert_eq!(st["mutual-best"]["mean"]["purity"], 1.0);
    assert_eq!(st["greedy"]["mean"]["purity"], 1.0);
}

#[test]
fn single_instance_strategies_agree() {
    let dir = tempfile::tempdir().unwrap();
    let st = simulate(dir.path(), "[sim.scene]\nn_instances = 1\n[sim.noise]\np_miss = 0.3\njitter_sigma = 1.0\n", 20);
    assert_eq!(st["mutual-best"]["per_seed"], st["greedy"]["per_seed"]);
    assert_eq!(st["mutual-best"]["report"], st["greedy"]["report"]);
}

#[test]
fn mutual_best_beats_greedy_on_crossings() {
    let dir = tempfile::tempdir().unwrap();
    let st = simulate(dir.path(), "[sim.scene]\ncrossing = true\n[sim.noise]\np_miss = 0.2\n", 100);
    let purity = |k: &str| -> Vec<f64> {
        st[k]["per_seed"].as_array().unwrap().iter().map(|m| m["purity"].as_f64().unwrap()).collect()
    };
    let (mb, gr) = (purity("mutual-best"), purity("greedy"));
    assert!(mb.iter().zip(&gr).all(|(a, b)| a >= b));
    assert!(mb.iter().sum::<f64>() > gr.iter().sum::<f64>());
}

#[test]
fn render_draws_admitted_frames() {
    let dir = tempfile::tempdir().unwrap();
    emit_and_mine(dir.path(), "seed = 1\n[sim.noise]\nforced_dropouts = [[0, 4]]\n");
    let shots = dir.path().join("shots");
    ok(&[
        "render",
        "--dataset",
        s(&dir.path().join("out/dataset.json")),
        "--frames",
        s(&dir.path().join("scene/frames")),
        "--out",
        s(&shots),
    ]);
    assert!(shots.join("sim/000004.png").exists());
}
