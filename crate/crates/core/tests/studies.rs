use std::path::Path;

use catheter_biplane::kinematics::rot_z;
use catheter_biplane::studies::{
    run_deflection_sweep, run_noise_sweep, run_study, DeflectionMode, StudyDescriptor, StudyKind, StudyResult,
};
use catheter_biplane::{CatheterModel, Error, Estimator, ImagingSetup, JointState};

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))
}

fn descriptor(kind: StudyKind, trials: usize) -> StudyDescriptor {
    let model = CatheterModel::load(fixtures().join("catheter.toml")).unwrap();
    let setup = ImagingSetup::load(fixtures().join("biplane.toml")).unwrap();
    let mut d = StudyDescriptor::new(kind, model, setup, JointState::new(0.0, 2.5, 2.5, 0.7));
    d.trials = trials;
    d.seed = 11;
    d
}

fn mean(result: &StudyResult, which: Estimator) -> Vec<f64> {
    result.cells_for(which).iter().map(|c| c.mean_deg).collect()
}

#[test]
fn same_seed_gives_identical_bytes() {
    let mut d = descriptor(StudyKind::NoiseSweep, 40);
    d.sigmas = vec![0.5, 1.0];
    let a = run_study(&d).unwrap();
    let b = run_study(&d).unwrap();
    assert_eq!(a.summary_csv().unwrap(), b.summary_csv().unwrap());
    assert_eq!(a.trials_csv().unwrap(), b.trials_csv().unwrap());
    assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());

    d.seed = 12;
    let c = run_study(&d).unwrap();
    assert_ne!(a.trials_csv().unwrap(), c.trials_csv().unwrap());
}

#[test]
fn zero_deflection_reproduces_the_noise_sweep() {
    let mut noise = descriptor(StudyKind::NoiseSweep, 60);
    noise.sigmas = vec![1.0];
    let mut defl = descriptor(StudyKind::DeflectionSweep, 60);
    defl.deflections = vec![0.0, 4.0];
    let a = run_noise_sweep(&noise).unwrap();
    let b = run_deflection_sweep(&defl).unwrap();
    for which in Estimator::ALL {
        assert_eq!(mean(&a, which)[0].to_bits(), mean(&b, which)[0].to_bits(), "{which}");
    }
}

#[test]
fn joint_noise_mode_starts_from_the_same_baseline() {
    let mut tip = descriptor(StudyKind::DeflectionSweep, 40);
    tip.deflections = vec![0.0, 5.0];
    let mut joint = tip.clone();
    joint.deflection_mode = DeflectionMode::JointNoise;
    let a = run_study(&tip).unwrap();
    let b = run_study(&joint).unwrap();
    for which in Estimator::ALL {
        assert_eq!(mean(&a, which)[0], mean(&b, which)[0]);
        assert!(mean(&b, which)[1].is_finite());
    }
}

#[test]
fn trial_errors_are_uncorrelated() {
    let mut d = descriptor(StudyKind::NoiseSweep, 400);
    d.estimators = vec![Estimator::TipPosition];
    let r = run_study(&d).unwrap();
    let e: Vec<f64> = r.trials.iter().map(|t| t.error_deg).collect();
    let m = e.iter().sum::<f64>() / e.len() as f64;
    let var: f64 = e.iter().map(|x| (x - m).powi(2)).sum();
    let lag1: f64 = e.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    assert!((lag1 / var).abs() < 0.1, "lag-1 autocorrelation {}", lag1 / var);
}

#[test]
fn aggregates_agree_with_the_trial_log() {
    let mut d = descriptor(StudyKind::NoiseSweep, 50);
    d.sigmas = vec![0.25, 2.0];
    let r = run_study(&d).unwrap();
    let text = r.trials_csv().unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<(usize, String, f64)> = reader
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[2].to_string(), rec[5].parse().unwrap())
        })
        .collect();
    for cell in &r.cells {
        let errors: Vec<f64> = rows
            .iter()
            .filter(|(c, e, _)| *c == cell.coords.index && e == cell.estimator.as_str())
            .map(|(_, _, x)| *x)
            .collect();
        assert_eq!(errors.len(), 50);
        let rms = (errors.iter().map(|x| x * x).sum::<f64>() / errors.len() as f64).sqrt();
        assert!((rms - cell.rms_deg).abs() < 1e-9 * (1.0 + rms));
        assert!(cell.max_deg >= cell.rms_deg && cell.rms_deg >= cell.mean_deg);
    }
}

#[test]
fn rotating_scene_and_roll_together_changes_nothing() {
    let mut d = descriptor(StudyKind::NoiseSweep, 60);
    d.sigmas = vec![1.0];
    let base = run_study(&d).unwrap();
    let alpha = 0.8;
    d.joints.q_r += alpha;
    d.setup = d.setup.rotated(&rot_z(alpha)).unwrap();
    let turned = run_study(&d).unwrap();
    for which in Estimator::ALL {
        let (a, b) = (mean(&base, which)[0], mean(&turned, which)[0]);
        assert!((a - b).abs() < 1e-6, "{which}: {a} vs {b}");
    }
}

#[test]
fn zero_trials_is_a_validation_error() {
    let d = descriptor(StudyKind::NoiseSweep, 0);
    assert!(matches!(run_study(&d), Err(Error::Validation(_))));
}

#[test]
fn straight_fixed_configuration_is_rejected() {
    let mut d = descriptor(StudyKind::NoiseSweep, 10);
    d.joints = JointState::new(0.0, 0.0, 0.0, 0.7);
    assert!(matches!(run_study(&d), Err(Error::Validation(_))));
}

#[test]
fn runner_checks_the_study_kind() {
    let d = descriptor(StudyKind::NoiseSweep, 10);
    assert!(matches!(run_deflection_sweep(&d), Err(Error::Validation(_))));
}

#[test]
fn workspace_grid_flags_straight_cells() {
    let mut d = descriptor(StudyKind::WorkspaceSweep, 20);
    d.workspace = Some(catheter_biplane::studies::WorkspaceGrid::Joints {
        q_p: vec![0.0, 3.0],
        q_d: vec![0.0, 3.0],
    });
    let r = run_study(&d).unwrap();
    for c in &r.cells {
        let straight = c.coords.q_p == 0.0 && c.coords.q_d == 0.0;
        assert_eq!(c.near_straight_count, if straight { 20 } else { 0 });
    }
}

#[test]
fn bundled_descriptors_load() {
    for (name, kind) in [
        ("noise_sweep.toml", StudyKind::NoiseSweep),
        ("workspace_sweep.toml", StudyKind::WorkspaceSweep),
        ("deflection_sweep.toml", StudyKind::DeflectionSweep),
    ] {
        let d = StudyDescriptor::load(fixtures().join(name)).unwrap();
        assert_eq!(d.kind, kind);
        d.validate().unwrap();
    }
}

#[test]
fn descriptor_errors_are_parse_errors() {
    let base = r#"
kind = "noise-sweep"
model = "catheter.toml"
setup = "biplane.toml"
[joints]
q_r = 0.0
q_p = 2.5
q_d = 2.5
delta_L = 0.7
"#;
    StudyDescriptor::from_toml_str(base, "ok", fixtures()).unwrap();
    let both = base.replace("[joints]", "sigma = 1.0\nsigmas = [1.0]\n[joints]");
    let unknown = base.replace("[joints]", "sigmaa = 1.0\n[joints]");
    let missing = base.replace("model = \"catheter.toml\"", "model = \"nope.toml\"");
    for (text, io) in [(both, false), (unknown, false), (missing, true)] {
        match StudyDescriptor::from_toml_str(&text, "bad", fixtures()) {
            Err(Error::Parse { .. }) if !io => {}
            Err(Error::Io { .. }) if io => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
