use std::path::Path;
use std::process::{Command, Output};

fn flexmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexmesh")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifests(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let m = e.unwrap().path().join("manifest.json");
            m.exists().then(|| std::fs::read_to_string(m).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn unknown_command_is_usage_error() {
    let o = flexmesh(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(flexmesh(&[]).status.code(), Some(1));
    assert_eq!(flexmesh(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_files_are_data_errors() {
    let o = flexmesh(&["stiffness", "--csv", "/nonexistent/hooke.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/hooke.csv"));
    let o = flexmesh(&["eval", "--checkpoint", "/nonexistent/m.ckpt", "--data", "/tmp", "--report", "/tmp/r.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = flexmesh(&["synth", "--objects", "1", "--out", "/tmp/x", "--config", "/nonexistent/c.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_override_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = flexmesh(&["synth", "--objects", "1", "--out", p(dir.path()), "--set", "synth.bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stiffness_of_exact_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("hooke.csv");
    let mut s = String::from("displacement,force\n");
    for i in 1..=20 {
        let x = i as f64 * 1e-3;
        s += &format!("{x},{}\n", 500.0 * x);
    }
    std::fs::write(&csv, s).unwrap();
    let o = flexmesh(&["stiffness", "--csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "500.0");
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = flexmesh(&["synth", "--objects", "3", "--protocol", "poke", "--seed", "7", "--sequences", "1", "--out", p(d.path())]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ma = manifests(a.path());
    assert_eq!(ma.len(), 3);
    assert_eq!(ma, manifests(b.path()));
    let echo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 7);
    assert_eq!(std::fs::read(a.path().join("config.json")).unwrap(), std::fs::read(b.path().join("config.json")).unwrap());
}

#[test]
fn train_eval_infer_bench_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let o = flexmesh(&[
        "synth", "--objects", "2", "--seed", "3", "--sequences", "2", "--out", p(&data),
        "--set", "synth.poke_duration=2.0", "--set", "synth.pokes_per_sequence=1", "--set", "synth.depth_images=false",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = root.path().join("train.toml");
    std::fs::write(
        &cfg,
        "[train]\nepochs = 2\nbatch = 4\nframes_per_epoch = 8\nval_frames = 4\nloss_samples = 300\n\
         [train.model]\nmodality = \"pc_sensor_robot\"\n[train.model.flow]\nhidden = 16\n\
         [eval]\nsamples = 500\nmax_frames_per_sequence = 3\n",
    )
    .unwrap();
    let o = flexmesh(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["best.ckpt", "train_log.jsonl", "config.json", "split.json", "train_config.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let report = root.path().join("out/report.json");
    let ckpt = run.join("best.ckpt");
    let o = flexmesh(&["eval", "--config", p(&cfg), "--checkpoint", p(&ckpt), "--data", p(&data), "--report", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["rows"].as_array().unwrap().len(), 2);
    for key in ["l_pfd_e3", "l_roi_e3", "cd_ul1_mm", "jaccard"] {
        assert!(rep["mean"][key].is_number(), "{key}");
    }
    assert!(rep["inference_hz"].as_f64().unwrap() > 0.0);
    assert!(rep["config"]["checkpoint"]["train"].is_object());
    let csv = std::fs::read_to_string(root.path().join("out/report.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("CD_UL1 [mm]"));
    let scatter = std::fs::read_to_string(root.path().join("out/report_scatter.csv")).unwrap();
    assert_eq!(scatter.lines().next().unwrap(), "object,d_J,J");

    let seq_dir = std::fs::read_dir(&data).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).min().unwrap();
    let meshes = root.path().join("meshes");
    let o = flexmesh(&["infer", "--checkpoint", p(&ckpt), "--frames", p(&seq_dir), "--out", p(&meshes)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(meshes.join("0000.obj").exists() && meshes.join("config.json").exists());

    let o = flexmesh(&["bench", "--checkpoint", p(&ckpt), "--set", "bench.timed=100", "--set", "bench.warmup=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stdout).trim()).unwrap();
    assert_eq!(r["modality"], "pc_sensor_robot");
    let o = flexmesh(&["bench", "--checkpoint", p(&ckpt), "--modality", "robot"]);
    assert_eq!(o.status.code(), Some(2));
}
