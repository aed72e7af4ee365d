//! Torsional-loss estimation from bi-plane reconstructions.
//!
//! The proximal bending plane is `δ₁ = q_r + δ_L`, where `q_r` is the
//! commanded base rotation and `δ_L` the unknown torsional loss. Three
//! least-squares objectives compare the model against the reconstruction:
//!
//! * **tip position**: `‖DirKin(q, δ_L) − õ₄‖²`
//! * **body positions**: `Σᵢ ‖DirKinᵢ(q, δ_L) − õᵢ‖²` over backbone markers
//! * **tip velocity**: `‖InstKin(q̇, δ_L) − ȯ̃₄‖²` on the tip linear velocity
//!
//! Since `δ_L` is a single periodic variable, [`estimate`] samples the whole
//! circle and refines every local minimum of the samples with Brent's
//! method, instead of descending from one initial guess.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::angle::{angular_error, wrap_angle};
use crate::error::{Error, Result};
use crate::kinematics::{CatheterShape, MarkerShapes, MarkerSpec};
use crate::model::{CatheterModel, JointRates, JointState};
use crate::quadrature::Quadrature;

const AMBIGUITY_RELATIVE_RESIDUAL: f64 = 0.01;
const AMBIGUITY_MIN_SEPARATION: f64 = 10.0 * PI / 180.0;
const FLAT_OBJECTIVE_TOLERANCE: f64 = 1e-12;
const CANDIDATE_MERGE_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    TipPosition,
    BodyPositions,
    TipVelocity,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [
        Estimator::TipPosition,
        Estimator::BodyPositions,
        Estimator::TipVelocity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::TipPosition => "tip-position",
            Estimator::BodyPositions => "body-positions",
            Estimator::TipVelocity => "tip-velocity",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown estimator '{s}' (expected tip-position, body-positions or tip-velocity)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyObservation {
    pub markers: Vec<MarkerSpec>,
    pub positions: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityObservation {
    pub velocity: Vector3<f64>,
    pub rates: JointRates,
}

/// Model, joint values (`delta_l` ignored) and whatever was reconstructed.
#[derive(Debug, Clone)]
pub struct EstimatorInput {
    pub model: CatheterModel,
    pub joints: JointState,
    pub quadrature: Quadrature,
    pub reconstructed_tip: Option<Vector3<f64>>,
    pub body_points: Option<BodyObservation>,
    pub tip_velocity: Option<VelocityObservation>,
}

impl EstimatorInput {
    pub fn new(model: CatheterModel, joints: JointState) -> Self {
        Self {
            model,
            joints,
            quadrature: Quadrature::default(),
            reconstructed_tip: None,
            body_points: None,
            tip_velocity: None,
        }
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn with_tip(mut self, tip: Vector3<f64>) -> Self {
        self.reconstructed_tip = Some(tip);
        self
    }

    pub fn with_body_points(mut self, markers: Vec<MarkerSpec>, positions: Vec<Vector3<f64>>) -> Result<Self> {
        if markers.len() != positions.len() || markers.is_empty() {
            return Err(Error::Validation(format!(
                "{} markers but {} body positions",
                markers.len(),
                positions.len()
            )));
        }
        self.body_points = Some(BodyObservation { markers, positions });
        Ok(self)
    }

    pub fn with_tip_velocity(mut self, velocity: Vector3<f64>, rates: JointRates) -> Self {
        self.tip_velocity = Some(VelocityObservation { velocity, rates });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.reconstructed_tip.is_none() && self.body_points.is_none() && self.tip_velocity.is_none() {
            return Err(Error::MissingObservation("estimator input carries no observation".into()));
        }
        if let Some(body) = &self.body_points {
            if body.markers.len() != body.positions.len() || body.markers.is_empty() {
                return Err(Error::Validation("marker list and body positions disagree".into()));
            }
        }
        Ok(())
    }

    pub fn supports(&self, which: Estimator) -> bool {
        match which {
            Estimator::TipPosition => self.reconstructed_tip.is_some(),
            Estimator::BodyPositions => self.body_points.is_some(),
            Estimator::TipVelocity => self.tip_velocity.is_some(),
        }
    }
}

/// An objective with all `δ_L`-independent integrals precomputed.
#[derive(Debug, Clone)]
pub struct PreparedObjective {
    shape: CatheterShape,
    q_r: f64,
    kind: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    Tip(Vector3<f64>),
    Body(MarkerShapes, Vec<Vector3<f64>>),
    Velocity(VelocityObservation),
}

impl PreparedObjective {
    pub fn new(input: &EstimatorInput, which: Estimator) -> Result<Self> {
        let shape = CatheterShape::compute(&input.model, &input.joints, &input.quadrature);
        Self::with_shape(input, which, shape)
    }

    pub fn with_shape(input: &EstimatorInput, which: Estimator, shape: CatheterShape) -> Result<Self> {
        let missing = || Error::MissingObservation(format!("{which} estimator needs its observation"));
        let kind = match which {
            Estimator::TipPosition => Prepared::Tip(input.reconstructed_tip.ok_or_else(missing)?),
            Estimator::BodyPositions => {
                let body = input.body_points.as_ref().ok_or_else(missing)?;
                if body.markers.len() != body.positions.len() || body.markers.is_empty() {
                    return Err(Error::Validation("marker list and body positions disagree".into()));
                }
                let markers = MarkerShapes::compute(&input.model, &input.joints, &body.markers, &input.quadrature)?;
                Prepared::Body(markers, body.positions.clone())
            }
            Estimator::TipVelocity => Prepared::Velocity(input.tip_velocity.ok_or_else(missing)?),
        };
        Ok(Self {
            shape,
            q_r: input.joints.q_r,
            kind,
        })
    }

    pub fn shape(&self) -> &CatheterShape {
        &self.shape
    }

    /// Objective value at torsional loss `delta_l`.
    pub fn evaluate(&self, delta_l: f64) -> f64 {
        let delta1 = wrap_angle(self.q_r + delta_l);
        match &self.kind {
            Prepared::Tip(observed) => (self.shape.tip_position(delta1) - observed).norm_squared(),
            Prepared::Body(markers, observed) => markers
                .positions(&self.shape, delta1)
                .iter()
                .zip(observed)
                .fold(0.0, |acc, (model, obs)| acc + (model - obs).norm_squared()),
            Prepared::Velocity(obs) => {
                (self.shape.twist(delta1, &obs.rates).linear - obs.velocity).norm_squared()
            }
        }
    }
}

pub fn objective_tip_position(delta_l: f64, input: &EstimatorInput) -> Result<f64> {
    Ok(PreparedObjective::new(input, Estimator::TipPosition)?.evaluate(delta_l))
}

pub fn objective_body_positions(delta_l: f64, input: &EstimatorInput) -> Result<f64> {
    Ok(PreparedObjective::new(input, Estimator::BodyPositions)?.evaluate(delta_l))
}

pub fn objective_tip_velocity(delta_l: f64, input: &EstimatorInput) -> Result<f64> {
    Ok(PreparedObjective::new(input, Estimator::TipVelocity)?.evaluate(delta_l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionFlag {
    WellPosed,
    /// Both segments are close to straight; the bending plane is undefined.
    NearStraight,
    /// The objective is flat or has near-tied distinct minima.
    Ambiguous,
}

impl fmt::Display for ConditionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionFlag::WellPosed => "well-posed",
            ConditionFlag::NearStraight => "near-straight",
            ConditionFlag::Ambiguous => "ambiguous",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub angle: f64,
    pub residual: f64,
}

/// `residual` is the objective value at `delta_l_star` (mm² or (mm/s)²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    #[serde(rename = "delta_L_star")]
    pub delta_l_star: f64,
    pub residual: f64,
    pub condition_flag: ConditionFlag,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SearchStrategy {
    /// Uniform grid over the circle, every local minimum refined.
    GridRefine,
    /// One downhill search from `initial_guess`, as a generic local
    /// least-squares routine would do. Can stop in a local minimum.
    SingleStart { initial_guess: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub grid_count: usize,
    pub refine_tolerance: f64,
    pub max_refine_iters: usize,
    pub straightness_threshold: f64,
    pub strategy: SearchStrategy,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            grid_count: 72,
            refine_tolerance: 1e-8,
            max_refine_iters: 100,
            straightness_threshold: 0.05,
            strategy: SearchStrategy::GridRefine,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.grid_count < 8 {
            return Err(Error::Validation(format!("grid_count must be >= 8, got {}", self.grid_count)));
        }
        if !(self.refine_tolerance > 0.0) || self.max_refine_iters == 0 {
            return Err(Error::Validation("refinement tolerance and iterations must be positive".into()));
        }
        if !(self.straightness_threshold >= 0.0) {
            return Err(Error::Validation("straightness threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// Brent's derivative-free minimization on `[lo, hi]` starting from `x0`.
/// Returns `(x, f(x))`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    x0: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let mut x = x0.clamp(a, b);
    let mut fx = f(x);
    let (mut w, mut v) = (x, x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol + f64::EPSILON * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            // parabola through x, w, v
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn grid_refine(objective: &impl Fn(f64) -> f64, settings: &SolverSettings) -> Result<(Vec<Candidate>, bool)> {
    let n = settings.grid_count;
    let step = TAU / n as f64;
    let angles: Vec<f64> = (0..n).map(|k| -PI + step * k as f64).collect();
    let values: Vec<f64> = angles.iter().map(|&a| finite_or_inf(objective(a))).collect();
    if values.iter().all(|v| v.is_infinite()) {
        return Err(Error::Numerical("objective is non-finite everywhere".into()));
    }
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let flat = hi - lo <= FLAT_OBJECTIVE_TOLERANCE * hi.abs().max(1.0);

    let mut candidates = Vec::new();
    if !flat {
        for k in 0..n {
            let prev = values[(k + n - 1) % n];
            let next = values[(k + 1) % n];
            if values[k] < prev && values[k] <= next {
                let (x, fx) = brent_minimize(
                    |a| finite_or_inf(objective(a)),
                    angles[k] - step,
                    angles[k] + step,
                    angles[k],
                    settings.refine_tolerance,
                    settings.max_refine_iters,
                );
                let refined = if fx <= values[k] {
                    Candidate { angle: wrap_angle(x), residual: fx }
                } else {
                    Candidate { angle: angles[k], residual: values[k] }
                };
                candidates.push(refined);
            }
        }
    }
    if candidates.is_empty() {
        let best = (0..n)
            .min_by(|&i, &j| {
                values[i]
                    .total_cmp(&values[j])
                    .then(angles[i].abs().total_cmp(&angles[j].abs()))
            })
            .expect("grid is non-empty");
        candidates.push(Candidate { angle: angles[best], residual: values[best] });
    }
    Ok((candidates, flat))
}

fn single_start(objective: &impl Fn(f64) -> f64, initial_guess: f64, settings: &SolverSettings) -> Result<(Vec<Candidate>, bool)> {
    let f = |a: f64| finite_or_inf(objective(a));
    let x0 = initial_guess;
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Numerical("objective is non-finite at the initial guess".into()));
    }
    let mut step = 0.05;
    let (fp, fm) = (f(x0 + step), f(x0 - step));
    let (lo, hi, mid) = if fp >= f0 && fm >= f0 {
        (x0 - step, x0 + step, x0)
    } else {
        let dir = if fp < fm { 1.0 } else { -1.0 };
        let (mut a, mut b, mut fb) = (x0, x0 + dir * step, fp.min(fm));
        let mut travelled = step;
        loop {
            step *= 1.618;
            let c = b + dir * step;
            travelled += step;
            let fc = f(c);
            if fc > fb || travelled > TAU {
                break (a.min(c), a.max(c), b);
            }
            (a, b, fb) = (b, c, fc);
        }
    };
    let (x, fx) = brent_minimize(f, lo, hi, mid, settings.refine_tolerance, settings.max_refine_iters);
    let flat = (fx - f0).abs() <= FLAT_OBJECTIVE_TOLERANCE * f0.abs().max(1.0) && (fp - f0).abs() <= FLAT_OBJECTIVE_TOLERANCE * f0.abs().max(1.0);
    Ok((vec![Candidate { angle: wrap_angle(x), residual: fx }], flat))
}

fn merge_and_rank(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.sort_by(|a, b| {
        a.residual
            .total_cmp(&b.residual)
            .then(a.angle.abs().total_cmp(&b.angle.abs()))
    });
    let mut merged: Vec<Candidate> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if merged.iter().all(|m| angular_error(m.angle, c.angle) > CANDIDATE_MERGE_DISTANCE) {
            merged.push(c);
        }
    }
    merged
}

/// `true` when both segments bend less than `threshold` rad.
pub fn is_near_straight(shape: &CatheterShape, threshold: f64) -> bool {
    shape.proximal.complementary_tip_angle().abs() < threshold
        && shape.distal.complementary_tip_angle().abs() < threshold
}

/// Minimizes a prepared objective and classifies the result.
pub fn estimate_prepared(objective: &PreparedObjective, settings: &SolverSettings) -> Result<EstimateResult> {
    settings.validate()?;
    let eval = |a: f64| objective.evaluate(a);
    let (candidates, flat) = match settings.strategy {
        SearchStrategy::GridRefine => grid_refine(&eval, settings)?,
        SearchStrategy::SingleStart { initial_guess } => single_start(&eval, initial_guess, settings)?,
    };
    let candidates = merge_and_rank(candidates);
    let best = candidates[0];
    if !best.residual.is_finite() {
        return Err(Error::Numerical("no finite candidate".into()));
    }

    let near_tie = candidates[1..].iter().any(|c| {
        let scale = c.residual.max(best.residual);
        (c.residual - best.residual).abs() <= AMBIGUITY_RELATIVE_RESIDUAL * scale
            && angular_error(c.angle, best.angle) > AMBIGUITY_MIN_SEPARATION
    });
    let condition_flag = if is_near_straight(objective.shape(), settings.straightness_threshold) {
        ConditionFlag::NearStraight
    } else if flat || near_tie {
        ConditionFlag::Ambiguous
    } else {
        ConditionFlag::WellPosed
    };
    Ok(EstimateResult {
        delta_l_star: best.angle,
        residual: best.residual,
        condition_flag,
        candidates,
    })
}

/// Estimates `δ_L` with the selected objective.
pub fn estimate(input: &EstimatorInput, which: Estimator, settings: &SolverSettings) -> Result<EstimateResult> {
    input.validate()?;
    let objective = PreparedObjective::new(input, which)?;
    estimate_prepared(&objective, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::full_direct_kinematics;
    use crate::model::SegmentModel;
    use approx::assert_abs_diff_eq;

    fn model() -> CatheterModel {
        CatheterModel::new(
            SegmentModel::constant_curvature(13.0, 0.02).unwrap(),
            SegmentModel::constant_curvature(16.0, 0.02).unwrap(),
            0.6,
        )
        .unwrap()
    }

    fn tip_input(joints: JointState, truth: f64) -> EstimatorInput {
        let m = model();
        let (tip, _) = full_direct_kinematics(&m, &joints.with_delta_l(truth), &Quadrature::default());
        EstimatorInput::new(m, joints).with_tip(tip.position)
    }

    #[test]
    fn brent_finds_parabola_minimum() {
        let (x, fx) = brent_minimize(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 0.0, 1e-10, 100);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(fx, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn brent_on_cosine() {
        let (x, _) = brent_minimize(|x| -(x - 1.0).cos(), 0.5, 1.7, 1.6, 1e-10, 100);
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn self_consistent_tip_objective_vanishes() {
        let input = tip_input(JointState::new(0.2, 3.0, 2.0, 0.0), 0.7);
        assert!(objective_tip_position(0.7, &input).unwrap() < 1e-24);
    }

    #[test]
    fn noiseless_tip_estimate() {
        let input = tip_input(JointState::new(0.2, 3.0, 2.0, 0.0), 0.7);
        let r = estimate(&input, Estimator::TipPosition, &SolverSettings::default()).unwrap();
        assert!(angular_error(r.delta_l_star, 0.7) < 1e-6);
        assert_eq!(r.condition_flag, ConditionFlag::WellPosed);
        assert!(r.residual >= 0.0);
    }

    #[test]
    fn straight_config_is_flagged() {
        let input = tip_input(JointState::new(0.2, 0.0, 0.0, 0.0), 0.7);
        let r = estimate(&input, Estimator::TipPosition, &SolverSettings::default()).unwrap();
        assert_eq!(r.condition_flag, ConditionFlag::NearStraight);
    }

    #[test]
    fn missing_observation_is_an_input_error() {
        let input = tip_input(JointState::new(0.0, 3.0, 2.0, 0.0), 0.0);
        assert!(matches!(
            estimate(&input, Estimator::TipVelocity, &SolverSettings::default()),
            Err(Error::MissingObservation(_))
        ));
        let empty = EstimatorInput::new(model(), JointState::default());
        assert!(matches!(
            estimate(&empty, Estimator::TipPosition, &SolverSettings::default()),
            Err(Error::MissingObservation(_))
        ));
    }

    #[test]
    fn non_finite_objective_is_numerical_error() {
        let input = tip_input(JointState::new(0.0, 3.0, 2.0, 0.0), 0.0).with_tip(Vector3::new(f64::NAN, 0.0, 0.0));
        assert!(matches!(
            estimate(&input, Estimator::TipPosition, &SolverSettings::default()),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn small_grid_is_rejected() {
        let input = tip_input(JointState::new(0.0, 3.0, 2.0, 0.0), 0.0);
        let settings = SolverSettings { grid_count: 4, ..Default::default() };
        assert!(matches!(estimate(&input, Estimator::TipPosition, &settings), Err(Error::Validation(_))));
    }

    #[test]
    fn single_start_from_zero_recovers_nearby_plane() {
        let input = tip_input(JointState::new(0.0, 3.0, 2.0, 0.0), 0.4);
        let settings = SolverSettings {
            strategy: SearchStrategy::SingleStart { initial_guess: 0.0 },
            ..Default::default()
        };
        let r = estimate(&input, Estimator::TipPosition, &settings).unwrap();
        assert!(angular_error(r.delta_l_star, 0.4) < 1e-6, "{r:?}");
        assert_eq!(r.candidates.len(), 1);
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.as_str().parse::<Estimator>().unwrap(), e);
        }
        assert!("tip".parse::<Estimator>().is_err());
    }
}
