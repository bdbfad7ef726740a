use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gcmvs::config::{PipelineConfig, RigSettings};

fn gcmvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcmvs")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut c = PipelineConfig::default();
    c.scene.as_mut().unwrap().rig = RigSettings {
        width: 96,
        height: 80,
        focal: 144.0,
        ..RigSettings::default()
    };
    c.references = Some(vec![0, 1]);
    let p = dir.join("small.json");
    std::fs::write(&p, c.to_json()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&gcmvs(&["--help"])), 0);
    assert_eq!(code(&gcmvs(&["--version"])), 0);
    assert_eq!(code(&gcmvs(&["run", "--help"])), 0);
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(code(&gcmvs(&[])), 1);
    assert_eq!(code(&gcmvs(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&gcmvs(&["run", "--aggregation", "median"])), 1);
    assert_eq!(code(&gcmvs(&["run", "--samples", "48,32"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"format":"gcmvs-config/1","stagez":[]}"#).unwrap();
    let o = gcmvs(&["run", "-c", s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stagez"));
    let cfg = small_config(dir.path());
    assert_eq!(code(&gcmvs(&["run", "-c", s(&cfg), "--gcp-window", "4"])), 1);
    assert_eq!(code(&gcmvs(&["ablate", "-c", s(&cfg), "--modes", "gcp"])), 1);
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pfm");
    let o = gcmvs(&["eval", "--pred", s(&a), "--gt", s(&a)]);
    assert_eq!(code(&o), 2);
    let junk = dir.path().join("junk.pfm");
    std::fs::write(&junk, b"P5\n1 1\n").unwrap();
    assert_eq!(code(&gcmvs(&["eval", "--pred", s(&junk), "--gt", s(&junk)])), 2);
}

#[test]
fn synth_run_fuse_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let scene = dir.path().join("scene");
    let o = gcmvs(&["synth", "-c", s(&cfg), "-o", s(&scene)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(scene.join("scene.json").is_file());

    let run = dir.path().join("run");
    let o = gcmvs(&["run", "-c", s(&scene.join("scene.json")), "-o", s(&run), "--references", "0,1,2", "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(metrics["within_final_interval"].as_f64().unwrap() > 0.8);
    assert!(run.join("manifest.json").is_file() && run.join("config.json").is_file());

    let views = ["00", "01", "02"];
    let depths: Vec<String> = views.iter().map(|v| s(&run.join(format!("depth/view{v}_stage2.pfm"))).into()).collect();
    let cams: Vec<String> = views.iter().map(|v| s(&scene.join(format!("view{v}.cam.txt"))).into()).collect();
    let ply = dir.path().join("fused.ply");
    let o = gcmvs(&["fuse", "--depths", &depths.join(","), "--cameras", &cams.join(","), "-o", s(&ply)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cloud = gcmvs::ply::read_ply(&ply).unwrap();
    assert!(!cloud.points.is_empty());
    let o = gcmvs(&["fuse", "--depths", &depths.join(","), "--cameras", &cams[..2].join(","), "-o", s(&ply)]);
    assert_eq!(code(&o), 1);

    let gt = scene.join("view00_depth.pfm");
    let o = gcmvs(&["eval", "--pred", &depths[0], "--gt", s(&gt), "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(m["mae"].as_f64().unwrap() < 0.1);
    assert_eq!(m["within"].as_array().unwrap().len(), 3);
}

#[test]
fn ablate_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("abl");
    let table = dir.path().join("table.json");
    let o = gcmvs(&[
        "ablate", "-c", s(&cfg), "-o", s(&out), "--references", "0", "--no-fusion",
        "--modes", "gcp,standard-k3", "--json-out", s(&table),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("gcp/gt") && text.contains("standard-k3"), "{text}");
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&table).unwrap()).unwrap();
    assert_eq!(t["rows"].as_array().unwrap().len(), 2);
}
