use std::path::Path;
use std::process::{Command, Output};

use probseg::format::{load_run, save_run, Run};
use probseg::{BBox, BinaryMask, ClassDist, Detection, ProbMask, SampleSet};
use serde_json::Value;

fn probseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probseg"))
        .args(args)
        .env_remove("PROBSEG_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = probseg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn zero_noise_pipeline_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let d = run.to_str().unwrap();
    let text = ok(&["simulate", "--objects", "3", "--passes", "24", "--seed", "7", "-o", d]);
    assert!(text.contains("3 objects") && text.contains("M = 24"), "{text}");

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passes"], 24);
    assert_eq!(manifest["pass_files"].as_array().unwrap().len(), 24);

    ok(&["fuse", d]);
    let obs: Value = serde_json::from_str(&std::fs::read_to_string(run.join("observations.json")).unwrap()).unwrap();
    assert_eq!(obs["observations"].as_array().unwrap().len(), 3);
    assert_eq!(obs["fusion"]["min_detections"], 2);
    assert_eq!(obs["fusion"]["iou_threshold"], 0.5);
    assert_eq!(obs["fusion"]["score_threshold"], 0.5);

    ok(&["eval", d]);
    let r = report(&run);
    assert!((r["pmq"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(r["metrics"]["ace_bins"], 10);
    assert_eq!(r["ace"], 0.0);
    assert_eq!(r["ause"], 0.0);
    let csv = std::fs::read_to_string(run.join("sparsification.csv")).unwrap();
    assert!(csv.starts_with("fraction,brier,oracle_brier\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn zero_passes_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = probseg(&["simulate", "--passes", "0", "-o", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("M must be ≥ 1"));
}

#[test]
fn unwritable_output_is_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    std::fs::write(&file, b"x").unwrap();
    let out = probseg(&["simulate", "-o", file.join("run").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_without_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    ok(&["simulate", "--passes", "4", "-o", d]);
    ok(&["fuse", d]);
    std::fs::remove_file(tmp.path().join("ground_truth.json")).unwrap();
    let out = probseg(&["eval", d]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ground truth required"));
}

#[test]
fn eval_before_fuse_is_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    ok(&["simulate", "--passes", "4", "-o", d]);
    assert_eq!(code(&probseg(&["eval", d])), 2);
}

#[test]
fn render_without_observations_is_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    ok(&["simulate", "--passes", "4", "-o", d]);
    assert_eq!(code(&probseg(&["render", d, "--which", "aleatoric"])), 2);
    ok(&["fuse", d]);
    std::fs::remove_file(tmp.path().join("variance_0.bin")).unwrap();
    assert_eq!(code(&probseg(&["render", d, "--which", "aleatoric"])), 2);
}

#[test]
fn low_scores_give_empty_observations_and_a_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let mask = ProbMask::new(4, 4, vec![1.0; 16]).unwrap();
    let det = Detection::new(
        BBox::new(0.0, 0.0, 4.0, 4.0).unwrap(),
        ClassDist::new(vec![0.7, 0.3]).unwrap(),
        mask,
    );
    let samples = (0..3)
        .map(|k| SampleSet {
            pass_index: k,
            detections: vec![det.clone()],
        })
        .collect();
    let run = Run::new("low", 4, 4, vec!["background".into(), "grasp".into()], samples, None);
    save_run(&run, tmp.path()).unwrap();
    let out = probseg(&["fuse", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no observations"));
    let obs: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("observations.json")).unwrap()).unwrap();
    assert!(obs["observations"].as_array().unwrap().is_empty());
}

fn read_pgm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let header_end = bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .nth(2)
        .unwrap()
        .0;
    let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
    let mut parts = header.split_whitespace();
    assert_eq!(parts.next(), Some("P5"));
    let w: usize = parts.next().unwrap().parse().unwrap();
    let h: usize = parts.next().unwrap().parse().unwrap();
    assert_eq!(parts.next(), Some("255"));
    (w, h, bytes[header_end + 1..].to_vec())
}

/// Some 8-neighbour lies on the other side of the mask boundary; pixels past
/// the frame count as outside.
fn on_contour(mask: &BinaryMask, x: usize, y: usize) -> bool {
    let (w, h) = mask.dims();
    let inside = mask.get(x, y);
    (-1i64..=1).any(|dy| {
        (-1i64..=1).any(|dx| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            let other = nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && mask.get(nx as usize, ny as usize);
            other != inside
        })
    })
}

#[test]
fn soft_edge_aleatoric_render_lights_only_boundaries() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    ok(&["simulate", "--objects", "2", "--passes", "6", "--soft-edge", "2", "--seed", "3", "-o", d]);
    ok(&["fuse", d]);
    ok(&["render", d, "--which", "aleatoric"]);
    ok(&["render", d, "--which", "epistemic"]);
    let run = load_run(tmp.path()).unwrap();
    let scene = run.scene.unwrap();
    for i in 0..2 {
        let (w, h, gray) = read_pgm(&tmp.path().join(format!("render/aleatoric_{i}.pgm")));
        assert_eq!((w, h), (64, 64));
        let lit: Vec<usize> = (0..w * h).filter(|&p| gray[p] > 0).collect();
        assert!(!lit.is_empty());
        for p in lit {
            let (x, y) = (p % w, p / w);
            // a lit pixel sits on the contour of some instance
            let on_edge = scene.instances.iter().any(|g| on_contour(&g.mask, x, y));
            assert!(on_edge, "aleatoric at interior pixel ({x}, {y})");
        }
        let (_, _, epi) = read_pgm(&tmp.path().join(format!("render/epistemic_{i}.pgm")));
        assert!(epi.iter().all(|&g| g == 0));
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    let run = tmp.path().join("run");
    std::fs::write(
        &cfg,
        format!("[simulator]\npasses = 5\nobjects = 1\n\n[paths]\nrun_dir = {:?}\n", run.to_str().unwrap()),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    ok(&["--config", c, "simulate", "--passes", "3"]);
    let loaded = load_run(&run).unwrap();
    assert_eq!(loaded.passes(), 3);
    assert_eq!(loaded.scene.unwrap().instances.len(), 1);

    // the environment variable only supplies the default config path
    let out = Command::new(env!("CARGO_BIN_EXE_probseg"))
        .args(["fuse"])
        .env("PROBSEG_CONFIG", c)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("observations.json").exists());

    std::fs::write(&cfg, "[simulator]\npass = 5\n").unwrap();
    assert_eq!(code(&probseg(&["--config", c, "simulate", "-o", run.to_str().unwrap()])), 2);
}

#[test]
fn sweep_writes_one_report_per_m() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    ok(&["simulate", "--passes", "10", "--boundary-sigma", "1", "--existence", "0.8", "-o", d]);
    ok(&["fuse", d]);
    let text = ok(&["eval", d, "--sweep"]);
    for m in [1, 2, 4, 8] {
        assert!(tmp.path().join(format!("sweep/report_m{m}.json")).exists());
    }
    assert!(!tmp.path().join("sweep/report_m16.json").exists());
    let summary = std::fs::read_to_string(tmp.path().join("sweep/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(text.contains("passes,pmq"));
}

#[test]
fn help_documents_flags() {
    let text = ok(&["fuse", "--help"]);
    for flag in ["--min-detections", "--iou", "--score", "--heatmap-denominator"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    let text = ok(&["eval", "--help"]);
    assert!(text.contains("--ace-bins") && text.contains("--sweep"));
}
