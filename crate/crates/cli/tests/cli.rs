use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sarcd::pgm::{load_pgm, save_pgm};
use sarcd::Raster;

const SMALL_SCENE: &str = "width = 64\nheight = 64\nchanged_fraction = 0.03\nblob_count = 6\nseed = 2\n";
const SMALL_CONFIG: &str = "lambda = 8\ncwnn_epochs = 2\ngan_epochs = 3\ngan_batch = 16\nnoise_dim = 8\nn_t_max = 300\n";

fn sarcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sarcd")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scene(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let spec = dir.join("scene.txt");
    fs::write(&spec, SMALL_SCENE).unwrap();
    let o = sarcd(&["generate", "--out", s(dir), "--spec", s(&spec)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_writes_a_reproducible_scene() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    small_scene(&a);
    small_scene(&b);
    for f in ["i1.pgm", "i2.pgm", "mask.pgm", "scene.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let scene: serde_json::Value = serde_json::from_slice(&fs::read(a.join("scene.json")).unwrap()).unwrap();
    assert_eq!(scene["spec"]["width"], 64);
    let mask = load_pgm(a.join("mask.pgm")).unwrap();
    let changed = mask.as_slice().iter().filter(|&&v| v != 0.0).count();
    assert_eq!(scene["changed_pixels"], changed);
    assert!(mask.as_slice().iter().all(|&v| v == 0.0 || v == 255.0));
}

#[test]
fn seed_flag_overrides_the_spec() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(code(&sarcd(&["generate", "--out", s(&a), "--seed", "1"])), 0);
    assert_eq!(code(&sarcd(&["generate", "--out", s(&b), "--seed", "2"])), 0);
    assert_ne!(fs::read(a.join("i1.pgm")).unwrap(), fs::read(b.join("i1.pgm")).unwrap());
}

#[test]
fn bad_scene_spec_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let spec = t.path().join("bad.txt");
    fs::write(&spec, "width = wide\n").unwrap();
    let o = sarcd(&["generate", "--out", s(t.path()), "--spec", s(&spec)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn eval_counts_mode_reproduces_the_reference_figures() {
    let o = sarcd(&["eval", "--counts", "4468,279,217,60572"]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["pcc"], 99.24);
    assert_eq!(m["p_fa"], 5.88);
    assert_eq!(m["p_md"], 4.63);
    assert_eq!(m["f1"], 94.74);
    assert_eq!(m["kc"], 94.33);
}

#[test]
fn eval_of_identical_maps_is_perfect_and_written() {
    let t = tempfile::tempdir().unwrap();
    let map = Raster::from_fn(16, 16, |i, j| if (i + j) % 5 == 0 { 255.0 } else { 0.0 });
    let p = t.path().join("m.pgm");
    save_pgm(&map, &p, 255).unwrap();
    let out = t.path().join("r.json");
    let o = sarcd(&["eval", s(&p), s(&p), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out).unwrap()).unwrap();
    assert_eq!(m["pcc"], 100.0);
    assert_eq!(m["f1"], 100.0);
}

#[test]
fn eval_rejects_mismatched_sizes_and_bad_counts() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a.pgm"), t.path().join("b.pgm"));
    save_pgm(&Raster::zeros(8, 8), &a, 255).unwrap();
    save_pgm(&Raster::zeros(9, 8), &b, 255).unwrap();
    assert_eq!(code(&sarcd(&["eval", s(&a), s(&b)])), 2);
    assert_eq!(code(&sarcd(&["eval", "--counts", "1,2,3"])), 2);
    assert_eq!(code(&sarcd(&["eval", "--counts", "0,0,0,0"])), 2);
    assert_eq!(code(&sarcd(&["eval"])), 2);
}

#[test]
fn di_methods_and_errors() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let (i1, i2, mask) = (scene.join("i1.pgm"), scene.join("i2.pgm"), scene.join("mask.pgm"));
    for method in ["lr", "slr", "msrdi"] {
        let out = t.path().join(method);
        let o = sarcd(&["di", s(&i1), s(&i2), "--method", method, "--out", s(&out), "--reference", s(&mask)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("di.json")).unwrap()).unwrap();
        assert_eq!(report["method"], method);
        assert!(report["metrics"]["pcc"].as_f64().unwrap() > 50.0);
        let otsu = load_pgm(out.join("otsu.pgm")).unwrap();
        assert_eq!(report["changed_pixels"], otsu.as_slice().iter().filter(|&&v| v != 0.0).count());
    }
    assert_eq!(code(&sarcd(&["di", s(&i1), s(&i2), "--method", "ratio", "--out", s(t.path())])), 2);
    assert_eq!(code(&sarcd(&["di", s(&i1), "missing.pgm", "--out", s(t.path())])), 2);
}

#[test]
fn lr_of_an_identical_pair_is_all_zero() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let i1 = scene.join("i1.pgm");
    let out = t.path().join("lr");
    assert_eq!(code(&sarcd(&["di", s(&i1), s(&i1), "--method", "lr", "--out", s(&out)])), 0);
    let di = load_pgm(out.join("di.pgm")).unwrap();
    assert!(di.as_slice().iter().all(|&v| v == 0.0));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("di.json")).unwrap()).unwrap();
    assert_eq!(report["changed_pixels"], 0);
}

#[test]
fn detect_on_an_identical_pair_is_degenerate() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let i1 = scene.join("i1.pgm");
    let o = sarcd(&["detect", s(&i1), s(&i1), "--out", s(&t.path().join("d"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

fn run_detect(scene: &Path, out: &Path, extra: &[&str]) -> serde_json::Value {
    let cfg = scene.join("cfg.txt");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let (i1, i2, mask) = (scene.join("i1.pgm"), scene.join("i2.pgm"), scene.join("mask.pgm"));
    let mut args = vec!["detect", s(&i1), s(&i2), "--out", s(out), "--config", s(&cfg), "--reference", s(&mask)];
    args.extend_from_slice(extra);
    let o = sarcd(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn detect_writes_all_artifacts_and_echoes_the_config() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let out = t.path().join("d");
    let r = run_detect(&scene, &out, &["--seed", "5"]);
    for f in ["msrdi.pgm", "ternary.pgm", "changemap.pgm", "report.json", "cwnn_loss.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(r["config"]["lambda"], 8);
    assert_eq!(r["config"]["seed"], 5);
    assert_eq!(r["config"]["eta"], 3);
    assert_eq!(r["width"], 64);
    assert!(r["metrics"]["pcc"].is_number());
    let ternary = load_pgm(out.join("ternary.pgm")).unwrap();
    assert!(ternary.as_slice().iter().all(|&v| v == 0.0 || v == 128.0 || v == 255.0));
    let map = load_pgm(out.join("changemap.pgm")).unwrap();
    assert_eq!(r["changed_pixels"], map.as_slice().iter().filter(|&&v| v != 0.0).count());
    let csv = fs::read_to_string(out.join("cwnn_loss.csv")).unwrap();
    if r["cwnn_trained"] == true {
        assert_eq!(csv.lines().count(), 3);
    }
    if r["gan"].is_object() {
        let gan = fs::read_to_string(out.join("gan_loss.csv")).unwrap();
        assert_eq!(gan.lines().next(), Some("epoch,d_loss,g_loss,minimax"));
    }
}

#[test]
fn skip_gan_trains_on_real_patches_only() {
    let t = tempfile::tempdir().unwrap();
    let scene = t.path().join("scene");
    small_scene(&scene);
    let out = t.path().join("d");
    let r = run_detect(&scene, &out, &["--skip-gan"]);
    assert_eq!(r["skip_gan"], true);
    assert_eq!(r["config"]["skip_gan"], true);
    assert_eq!(r["generated"], 0);
    assert!(r["gan"].is_null());
    assert!(!out.join("gan_loss.csv").exists());
    if r["n_h"].as_u64().unwrap() > 0 {
        assert_eq!(r["n_t"], r["n1"].as_u64().unwrap().min(r["n2"].as_u64().unwrap()).min(300));
    }
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.txt");
    fs::write(&cfg, "colour = red\n").unwrap();
    let o = sarcd(&["detect", "a.pgm", "b.pgm", "--out", s(t.path()), "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gradcheck_passes_and_lists_layers() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("g.json");
    let o = sarcd(&["gradcheck", "--lambda", "8", "--per-tensor", "16", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    for net in ["cwnn", "discriminator", "generator"] {
        let entries = r[net]["entries"].as_array().unwrap();
        assert!(entries.len() >= 4, "{net}");
        assert!(entries.iter().all(|e| e["max_rel_error"].as_f64().unwrap() < 1e-5));
    }
}
