use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use catheter_biplane::cli::exit;
use catheter_biplane::studies::simulate_log;
use catheter_biplane::{CatheterModel, ImagingSetup, JointRates, JointState, MarkerSpec, SegmentIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catheter-biplane")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn numbers(line: &str) -> Vec<f64> {
    line.split_whitespace().filter_map(|t| t.parse().ok()).collect()
}

#[test]
fn fk_of_straight_catheter() {
    let model = fixture("catheter.toml");
    let o = run(&["fk", "--model", model.to_str().unwrap(), "--joints", "45,0,0,-10"]);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let p = numbers(text.lines().next().unwrap());
    assert!(p[0].abs() < 1e-9 && p[1].abs() < 1e-9 && (p[2] - 29.0).abs() < 1e-9, "{text}");
}

#[test]
fn fk_single_quarter_bend_matches_arc() {
    let model = fixture("catheter.toml");
    // distal straight, proximal bent by π/2: κL = π/2 with κ = 0.02 q_p
    let q_p = std::f64::consts::FRAC_PI_2 / (0.02 * 13.0);
    let joints = format!("0,{q_p},0");
    let o = run(&["fk", "--model", model.to_str().unwrap(), "--joints", &joints]);
    let text = stdout(&o);
    let p = numbers(text.lines().next().unwrap());
    // tip of the arc at (13/κ', 0, 13/κ') then 16 mm straight along +x
    let r = 13.0 / std::f64::consts::FRAC_PI_2;
    assert!((p[0] - (r + 16.0)).abs() < 1e-8 && p[1].abs() < 1e-8 && (p[2] - r).abs() < 1e-8, "{text}");
}

#[test]
fn jacobian_prints_six_by_four() {
    let model = fixture("catheter.toml");
    let o = run(&["jacobian", "--model", model.to_str().unwrap(), "--joints", "10,2.5,2.5"]);
    assert_eq!(o.status.code(), Some(exit::OK));
    let rows: Vec<Vec<f64>> = stdout(&o).lines().filter(|l| !l.starts_with('#')).map(numbers).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.len() == 4));
}

#[test]
fn malformed_model_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "delta2 = 0.6\n[proximal]\nlength = 13.0\nfixture = \"constant-curvature\"\ncurvature_gain = 0.02\n\
         [distal]\nlength = 16.0\nbasis = [2, 2]\nshape_matrix = [1.0]\n",
    )
    .unwrap();
    let o = run(&["fk", "--model", path.to_str().unwrap(), "--joints", "0,1,1"]);
    assert_eq!(o.status.code(), Some(exit::PARSE));
    assert!(String::from_utf8_lossy(&o.stderr).contains("distal.shape_matrix"));
}

#[test]
fn bad_joint_flag_is_a_usage_error() {
    let model = fixture("catheter.toml");
    let o = run(&["fk", "--model", model.to_str().unwrap(), "--joints", "1,2"]);
    assert_eq!(o.status.code(), Some(exit::USAGE));
}

fn write_log(dir: &Path, joints: JointState, rates: JointRates) -> PathBuf {
    let model = CatheterModel::load(fixture("catheter.toml")).unwrap();
    let setup = ImagingSetup::load(fixture("biplane.toml")).unwrap();
    let markers = [MarkerSpec::new(SegmentIndex::Proximal, 13.0), MarkerSpec::new(SegmentIndex::Distal, 8.0)];
    let log = simulate_log(
        &model,
        &setup,
        &joints,
        &rates,
        &[0.0, 0.001, 0.002],
        &markers,
        0.0,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    let path = dir.join("obs.csv");
    log.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn estimate_recovers_injected_loss() {
    let dir = tempfile::tempdir().unwrap();
    let loss_deg: f64 = -35.0;
    let start = JointState::new(20f64.to_radians(), 3.0, 2.0, loss_deg.to_radians());
    let rates = JointRates::new(0.6, 0.5, 0.5);
    let log = write_log(dir.path(), start, rates);
    let now = start.advanced(&rates, 0.002);
    let joints = format!("{},{},{}", now.q_r.to_degrees(), now.q_p, now.q_d);
    let rates_flag = format!("{},0.5,0.5", 0.6f64.to_degrees());
    let o = run(&[
        "estimate",
        "--model",
        fixture("catheter.toml").to_str().unwrap(),
        "--setup",
        fixture("biplane.toml").to_str().unwrap(),
        "--obs",
        log.to_str().unwrap(),
        "--joints",
        &joints,
        "--rates",
        &rates_flag,
    ]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(exit::OK), "{text}{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    for line in lines {
        let value: f64 = line.split("delta_L = ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
        assert!((value - loss_deg).abs() < 0.006, "{line}");
    }
}

#[test]
fn straight_log_exits_with_advisory() {
    let dir = tempfile::tempdir().unwrap();
    let start = JointState::new(0.0, 0.0, 0.0, 0.5);
    let log = write_log(dir.path(), start, JointRates::new(0.0, 0.0, 0.0));
    let o = run(&[
        "estimate",
        "--model",
        fixture("catheter.toml").to_str().unwrap(),
        "--setup",
        fixture("biplane.toml").to_str().unwrap(),
        "--obs",
        log.to_str().unwrap(),
        "--joints",
        "0,0,0",
        "--which",
        "tip-position",
    ]);
    assert_eq!(o.status.code(), Some(exit::ADVISORY));
    assert!(stdout(&o).contains("near-straight"));
}

#[test]
fn identical_planes_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let setup = dir.path().join("same.toml");
    std::fs::write(
        &setup,
        "[front]\nnormal = [0.0, 1.0, 0.0]\nrotation = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]\n\
         [side]\nnormal = [0.0, 1.0, 0.0]\nrotation = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]\n",
    )
    .unwrap();
    let log = write_log(dir.path(), JointState::new(0.0, 2.0, 2.0, 0.3), JointRates::new(1.0, 0.0, 0.0));
    for args in [
        vec!["reconstruct", "--setup", setup.to_str().unwrap(), "--obs", log.to_str().unwrap()],
        vec![
            "estimate",
            "--model",
            fixture("catheter.toml").to_str().unwrap(),
            "--setup",
            setup.to_str().unwrap(),
            "--obs",
            log.to_str().unwrap(),
            "--joints",
            "0,2,2",
        ],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(exit::DEGENERATE));
        assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
    }
}

#[test]
fn reconstruct_lists_every_marker() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path(), JointState::new(0.0, 2.0, 2.0, 0.3), JointRates::new(1.0, 0.0, 0.0));
    let o = run(&["reconstruct", "--setup", fixture("biplane.toml").to_str().unwrap(), "--obs", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::OK));
    // three frames of tip plus two body markers, after the header
    assert_eq!(stdout(&o).lines().count(), 1 + 3 * 3);
}

fn small_descriptor(dir: &Path, trials: usize) -> PathBuf {
    let text = std::fs::read_to_string(fixture("noise_sweep.toml"))
        .unwrap()
        .replace("trials = 500", &format!("trials = {trials}"))
        .replace("\"catheter.toml\"", &format!("{:?}", fixture("catheter.toml")))
        .replace("\"biplane.toml\"", &format!("{:?}", fixture("biplane.toml")));
    let path = dir.join("study.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn study_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let desc = small_descriptor(dir.path(), 30);
    let outs = ["a", "b"].map(|n| dir.path().join(n));
    for out in &outs {
        let o = run(&["study", "--descriptor", desc.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["summary.csv", "trials.csv", "summary.json"] {
        let a = std::fs::read(outs[0].join(name)).unwrap();
        let b = std::fs::read(outs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }

    let o = run(&[
        "study",
        "--descriptor",
        desc.to_str().unwrap(),
        "--out",
        dir.path().join("c").to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_eq!(o.status.code(), Some(exit::OK));
    assert_ne!(
        std::fs::read(outs[0].join("trials.csv")).unwrap(),
        std::fs::read(dir.path().join("c/trials.csv")).unwrap()
    );
}

#[test]
fn study_with_zero_trials_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let desc = small_descriptor(dir.path(), 0);
    let o = run(&["study", "--descriptor", desc.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::VALIDATION));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = run(&["fk", "--model", "/nonexistent/model.toml", "--joints", "0,1,1"]);
    assert_eq!(o.status.code(), Some(exit::IO));
}
