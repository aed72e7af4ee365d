use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::descriptor::{DeflectionMode, StudyDescriptor, StudyKind};
use super::report::{CellCoords, CellRecord, Provenance, StudyResult, TrialRecord};
use crate::angle::angular_error;
use crate::biplane::{
    observe, velocity_from_observations, ImagingSetup, MarkerId, ObservationFrame, ObservationLog, ObservationPair,
    PlaneLabel, TimedPoint,
};
use crate::error::{Error, Result};
use crate::estimation::{estimate_prepared, ConditionFlag, EstimatorInput, PreparedObjective};
use crate::kinematics::{CatheterShape, MarkerShapes, MarkerSpec};
use crate::model::{CatheterModel, JointRates, JointState, SegmentIndex};
use crate::quadrature::Quadrature;

/// Random stream of one trial.
///
/// Streams depend on the master seed and the trial index only, so every
/// cell of a study sees the same standard-normal draws (common random
/// numbers) and results do not depend on execution order.
pub fn trial_rng(master_seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64);
    rng
}

/// Ground truth of one cell, shared by all its trials.
struct CellPlan {
    coords: CellCoords,
    truth: JointState,
    sigma: f64,
    deflection: f64,
    tip: Vector3<f64>,
    markers: Vec<Vector3<f64>>,
    tip_before: Vector3<f64>,
    tip_after: Vector3<f64>,
    model_shape: CatheterShape,
}

/// Reconstructed observations of one trial.
struct TrialObservation {
    tip: Vector3<f64>,
    markers: Vec<Vector3<f64>>,
    velocity: Vector3<f64>,
}

/// Unit direction in which increasing distal bending moves the tip.
fn bending_direction(shape: &CatheterShape, delta1: f64) -> Vector3<f64> {
    let j = shape.jacobian(delta1);
    for column in [2, 0] {
        let v = j.fixed_view::<3, 1>(0, column).into_owned();
        if let Some(u) = v.try_normalize(1e-12) {
            return u;
        }
    }
    crate::kinematics::rot_z(delta1) * Vector3::x()
}

fn is_distal_tip(desc: &StudyDescriptor, marker: &MarkerSpec) -> bool {
    marker.segment == SegmentIndex::Distal && marker.arc_length >= desc.model.distal.length()
}

fn plan_cell(desc: &StudyDescriptor, index: usize, config: JointState, sigma: f64, deflection: f64) -> Result<CellPlan> {
    let quad = &desc.quadrature;
    let truth_shape = CatheterShape::compute(&desc.model, &config, quad);
    let delta1 = config.delta1();
    let offset = match desc.deflection_mode {
        DeflectionMode::TipOffset if deflection > 0.0 => bending_direction(&truth_shape, delta1) * deflection,
        _ => Vector3::zeros(),
    };
    let tip = truth_shape.tip_position(delta1) + offset;
    let markers = MarkerShapes::compute(&desc.model, &config, &desc.markers, quad)?
        .positions(&truth_shape, delta1)
        .into_iter()
        .zip(&desc.markers)
        .map(|(p, m)| if is_distal_tip(desc, m) { p + offset } else { p })
        .collect();
    let half = 0.5 * desc.velocity_dt;
    // a static offset cancels in the differenced velocity, so the window
    // frames are taken on the undeflected tip
    let moved_tip = |dt: f64| {
        let joints = config.advanced(&desc.rates, dt);
        CatheterShape::compute(&desc.model, &joints, quad).tip_position(joints.delta1())
    };
    Ok(CellPlan {
        coords: CellCoords {
            index,
            sigma_mm: sigma,
            deflection_mm: deflection,
            q_p: config.q_p,
            q_d: config.q_d,
            theta_l1: truth_shape.proximal.tip_angle,
            theta_l2: truth_shape.distal.tip_angle,
        },
        truth: config,
        sigma,
        deflection,
        tip,
        markers,
        tip_before: moved_tip(-half),
        tip_after: moved_tip(half),
        model_shape: truth_shape,
    })
}

/// Segments base and points in both planes at one instant and reconstructs
/// every point relative to the base.
fn frame<R: Rng>(desc: &StudyDescriptor, points: &[Vector3<f64>], sigma: f64, t: f64, rng: &mut R) -> Result<Vec<Vector3<f64>>> {
    let base = Vector3::zeros();
    let front_base = observe(&desc.setup.front, &base, sigma, t, rng)?;
    let side_base = observe(&desc.setup.side, &base, sigma, t, rng)?;
    points
        .iter()
        .map(|p| {
            let f = observe(&desc.setup.front, p, sigma, t, rng)?;
            let s = observe(&desc.setup.side, p, sigma, t, rng)?;
            desc.setup.reconstruct(&ObservationPair::new(front_base, f), &ObservationPair::new(side_base, s))
        })
        .collect()
}

fn synthesize<R: Rng>(desc: &StudyDescriptor, plan: &CellPlan, rng: &mut R) -> Result<TrialObservation> {
    let mut points = Vec::with_capacity(1 + plan.markers.len());
    points.push(plan.tip);
    points.extend_from_slice(&plan.markers);
    let now = frame(desc, &points, plan.sigma, 0.0, rng)?;
    let half = 0.5 * desc.velocity_dt;
    let before = frame(desc, &[plan.tip_before], plan.sigma, -half, rng)?[0];
    let after = frame(desc, &[plan.tip_after], plan.sigma, half, rng)?[0];
    let velocity = velocity_from_observations(&[TimedPoint::new(-half, before), TimedPoint::new(half, after)])?;
    Ok(TrialObservation {
        tip: now[0],
        markers: now[1..].to_vec(),
        velocity,
    })
}

/// Joint values whose modeled tip sits `deflection` mm from the true one,
/// moving along a random direction in `(q_p, q_d)`.
fn perturbed_joints<R: Rng>(desc: &StudyDescriptor, truth: &JointState, deflection: f64, rng: &mut R) -> Result<JointState> {
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    if deflection == 0.0 {
        return Ok(*truth);
    }
    let quad = &desc.quadrature;
    let tip = |t: f64| {
        let j = JointState { q_p: truth.q_p + t * phi.cos(), q_d: truth.q_d + t * phi.sin(), ..*truth };
        (j, CatheterShape::compute(&desc.model, &j, quad).tip_position(j.delta1()))
    };
    let origin = tip(0.0).1;
    let distance = |t: f64| (tip(t).1 - origin).norm() - deflection;
    let mut hi = 0.5;
    while distance(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numerical(format!("cannot deflect the modeled tip by {deflection} mm")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if distance(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(tip(0.5 * (lo + hi)).0)
}

fn run_trial(desc: &StudyDescriptor, plan: &CellPlan, trial: usize) -> Result<Vec<TrialRecord>> {
    let mut rng = trial_rng(desc.seed, trial);
    let obs = synthesize(desc, plan, &mut rng)?;

    let model_joints = match desc.deflection_mode {
        DeflectionMode::JointNoise => perturbed_joints(desc, &plan.truth, plan.deflection, &mut rng)?,
        DeflectionMode::TipOffset => plan.truth,
    };
    let shape = if model_joints == plan.truth {
        plan.model_shape
    } else {
        CatheterShape::compute(&desc.model, &model_joints, &desc.quadrature)
    };

    let input = EstimatorInput::new(desc.model.clone(), model_joints)
        .with_quadrature(desc.quadrature.clone())
        .with_tip(obs.tip)
        .with_body_points(desc.markers.clone(), obs.markers)?
        .with_tip_velocity(obs.velocity, desc.rates);

    let truth = plan.truth.delta_l;
    let records = desc
        .estimators
        .iter()
        .map(|&which| {
            let objective = PreparedObjective::with_shape(&input, which, shape)?;
            let result = estimate_prepared(&objective, &desc.settings)?;
            Ok(TrialRecord {
                cell: plan.coords.index,
                trial,
                estimator: which,
                true_delta_l: truth,
                estimated_delta_l: result.delta_l_star,
                error_deg: angular_error(result.delta_l_star, truth).to_degrees(),
                near_straight: result.condition_flag == ConditionFlag::NearStraight,
                ambiguous: result.condition_flag == ConditionFlag::Ambiguous,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(records)
}

/// Runs every cell of `desc` (sigma × configuration × deflection) and
/// aggregates per cell and estimator.
pub fn run_study(desc: &StudyDescriptor) -> Result<StudyResult> {
    desc.validate()?;
    let configs = desc.configurations()?;
    let mut plans = Vec::new();
    for &sigma in &desc.sigmas {
        for config in &configs {
            for &deflection in &desc.deflections {
                plans.push(plan_cell(desc, plans.len(), *config, sigma, deflection)?);
            }
        }
    }

    let mut cells = Vec::new();
    let mut trials = Vec::new();
    for plan in &plans {
        let outcomes = (0..desc.trials)
            .into_par_iter()
            .map(|t| run_trial(desc, plan, t))
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<TrialRecord> = outcomes.into_iter().flatten().collect();
        for &which in &desc.estimators {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.estimator == which).collect();
            cells.push(CellRecord::aggregate(plan.coords, which, &mine));
        }
        trials.extend(records);
    }
    Ok(StudyResult {
        kind: desc.kind,
        cells,
        trials,
        provenance: Provenance::from_descriptor(desc)?,
    })
}

fn expect_kind(desc: &StudyDescriptor, kind: StudyKind) -> Result<()> {
    if desc.kind != kind {
        return Err(Error::Validation(format!(
            "descriptor is a {} but a {} was requested",
            desc.kind.as_str(),
            kind.as_str()
        )));
    }
    Ok(())
}

pub fn run_noise_sweep(desc: &StudyDescriptor) -> Result<StudyResult> {
    expect_kind(desc, StudyKind::NoiseSweep)?;
    run_study(desc)
}

pub fn run_workspace_sweep(desc: &StudyDescriptor) -> Result<StudyResult> {
    expect_kind(desc, StudyKind::WorkspaceSweep)?;
    run_study(desc)
}

pub fn run_deflection_sweep(desc: &StudyDescriptor) -> Result<StudyResult> {
    expect_kind(desc, StudyKind::DeflectionSweep)?;
    run_study(desc)
}

/// Observation log of a catheter moving at constant `rates` from `joints`
/// (the state at `times[0]`), with base, tip and the given body markers
/// seen in both planes. The base sits at the world origin.
#[allow(clippy::too_many_arguments)]
pub fn simulate_log<R: Rng + ?Sized>(
    model: &CatheterModel,
    setup: &ImagingSetup,
    joints: &JointState,
    rates: &JointRates,
    times: &[f64],
    markers: &[MarkerSpec],
    sigma: f64,
    rng: &mut R,
) -> Result<ObservationLog> {
    let quad = Quadrature::default();
    let t0 = times.first().copied().unwrap_or(0.0);
    let mut frames = Vec::with_capacity(times.len());
    for &t in times {
        let state = joints.advanced(rates, t - t0);
        let shape = CatheterShape::compute(model, &state, &quad);
        let delta1 = state.delta1();
        let mut points = vec![(MarkerId::Base, Vector3::zeros()), (MarkerId::Tip, shape.tip_position(delta1))];
        let body = MarkerShapes::compute(model, &state, markers, &quad)?.positions(&shape, delta1);
        for (spec, p) in markers.iter().zip(body) {
            points.push((MarkerId::body(spec.segment, spec.arc_length), p));
        }
        let mut frame = ObservationFrame { time: t, points: Default::default() };
        for (id, p) in points {
            for label in [PlaneLabel::Front, PlaneLabel::Side] {
                frame.points.insert((id, label), observe(setup.plane(label), &p, sigma, t, rng)?);
            }
        }
        frames.push(frame);
    }
    Ok(ObservationLog { frames })
}
