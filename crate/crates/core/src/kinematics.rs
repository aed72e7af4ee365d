//! Direct and instantaneous kinematics of the two-segment catheter.
//!
//! A segment bent by actuation `q` in the plane at angle `δ` about the base
//! `z` axis has tip position `Rz(δ) ∫₀ᴸ [cos θ, 0, sin θ]ᵀ ds` and tip
//! orientation `Rz(δ) Ry(π/2 − θ(L))`. The distal segment is expressed in the
//! tip frame of the proximal one and composed serially.
//!
//! All backbone integrals depend on `q` only, never on the plane angle, so
//! they are evaluated once into a [`SegmentShape`] / [`CatheterShape`] and the
//! plane angle is applied afterwards. The estimators rely on this to sweep
//! `δ_L` without re-integrating.

use nalgebra::{Matrix3, Matrix6, Matrix6x2, Matrix6x4, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{CatheterModel, JointRates, JointState, SegmentIndex, SegmentModel};
use crate::quadrature::Quadrature;

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Cross-product matrix: `skew(a) * b == a × b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Position (mm) and orientation of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            rotation: Matrix3::identity(),
        }
    }

    /// `self ∘ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation * other.position,
            rotation: self.rotation * other.rotation,
        }
    }
}

/// Linear (mm/s) and angular (rad/s) velocity of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn from_vector(xi: &Vector6<f64>) -> Self {
        Self {
            linear: xi.fixed_rows::<3>(0).into_owned(),
            angular: xi.fixed_rows::<3>(3).into_owned(),
        }
    }
}

/// A backbone point identified by segment and arc length from that
/// segment's base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub segment: SegmentIndex,
    pub arc_length: f64,
}

impl MarkerSpec {
    pub fn new(segment: SegmentIndex, arc_length: f64) -> Self {
        Self {
            segment,
            arc_length,
        }
    }
}

/// `∫₀ˢ [cos θ, 0, sin θ]ᵀ ds` for the coefficients `A η(q)`.
fn planar_integral(
    model: &SegmentModel,
    coefficients: &nalgebra::DVector<f64>,
    s_end: f64,
    quad: &Quadrature,
) -> Vector3<f64> {
    let mut x = 0.0;
    let mut z = 0.0;
    for (s, w) in quad.points(0.0, s_end) {
        let (sin_t, cos_t) = model.arc_dot(s, coefficients).sin_cos();
        x += w * cos_t;
        z += w * sin_t;
    }
    Vector3::new(x, 0.0, z)
}

/// Plane-independent integrals of one segment at a fixed actuation value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentShape {
    /// Tip position in the bending plane, `[ν, 0, ∫ sin θ ds]`.
    pub planar_tip: Vector3<f64>,
    /// `θ(L, q)`.
    pub tip_angle: f64,
    /// `∂θ(L, q)/∂q`.
    pub tip_angle_partial: f64,
    /// `∫ sin θ ∂θ/∂q ds`.
    pub sin_weighted_partial: f64,
    /// `∫ cos θ ∂θ/∂q ds`.
    pub cos_weighted_partial: f64,
}

impl SegmentShape {
    pub fn compute(model: &SegmentModel, q: f64, quad: &Quadrature) -> Self {
        let coefficients = model.shape_coefficients(q);
        let rate_coefficients = model.shape_rate_coefficients(q);
        let length = model.length();
        let planar_tip = planar_integral(model, &coefficients, length, quad);
        let mut sin_weighted = 0.0;
        let mut cos_weighted = 0.0;
        for (s, w) in quad.points(0.0, length) {
            let (sin_t, cos_t) = model.arc_dot(s, &coefficients).sin_cos();
            let partial = model.arc_dot(s, &rate_coefficients);
            sin_weighted += w * sin_t * partial;
            cos_weighted += w * cos_t * partial;
        }
        Self {
            planar_tip,
            tip_angle: model.arc_dot(length, &coefficients),
            tip_angle_partial: model.arc_dot(length, &rate_coefficients),
            sin_weighted_partial: sin_weighted,
            cos_weighted_partial: cos_weighted,
        }
    }

    /// Horizontal coordinate `ν = ∫ cos θ ds`.
    pub fn horizontal(&self) -> f64 {
        self.planar_tip.x
    }

    /// Net bend `π/2 − θ(L)`.
    pub fn complementary_tip_angle(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 - self.tip_angle
    }

    pub fn pose(&self, delta: f64) -> Pose {
        let rz = rot_z(delta);
        Pose {
            position: rz * self.planar_tip,
            rotation: rz * rot_y(self.complementary_tip_angle()),
        }
    }

    /// Geometric Jacobian mapping `[q̇, δ̇]` to the tip twist.
    pub fn jacobian(&self, delta: f64) -> Matrix6x2<f64> {
        let (sd, cd) = delta.sin_cos();
        let nu = self.horizontal();
        let dtheta = self.tip_angle_partial;
        Matrix6x2::new(
            -cd * self.sin_weighted_partial, -sd * nu,
            -sd * self.sin_weighted_partial, cd * nu,
            self.cos_weighted_partial, 0.0,
            dtheta * sd, 0.0,
            -dtheta * cd, 0.0,
            0.0, 1.0,
        )
    }
}

/// Both segments' shapes at fixed `(q_p, q_d)`; the proximal plane `δ₁` is
/// supplied per query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatheterShape {
    pub proximal: SegmentShape,
    pub distal: SegmentShape,
    pub delta2: f64,
}

/// Frames `{2}` (proximal tip) and `{4}` (distal tip) in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatheterFrames {
    pub proximal_tip: Pose,
    pub tip: Pose,
}

impl CatheterShape {
    pub fn compute(model: &CatheterModel, joints: &JointState, quad: &Quadrature) -> Self {
        Self {
            proximal: SegmentShape::compute(&model.proximal, joints.q_p, quad),
            distal: SegmentShape::compute(&model.distal, joints.q_d, quad),
            delta2: model.delta2(),
        }
    }

    pub fn frames(&self, delta1: f64) -> CatheterFrames {
        let proximal_tip = self.proximal.pose(delta1);
        let tip = proximal_tip.compose(&self.distal.pose(self.delta2));
        CatheterFrames { proximal_tip, tip }
    }

    pub fn tip_position(&self, delta1: f64) -> Vector3<f64> {
        self.frames(delta1).tip.position
    }

    /// Combined 6×4 Jacobian with columns `[q_p, δ₁ (= q_r), q_d, δ₂]`.
    pub fn jacobian(&self, delta1: f64) -> Matrix6x4<f64> {
        let proximal_tip = self.proximal.pose(delta1);
        let distal = self.distal.pose(self.delta2);
        let r2 = proximal_tip.rotation;
        let offset = -(r2 * distal.position);

        let mut s1 = Matrix6::identity();
        s1.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&offset));
        let mut s2 = Matrix6::zeros();
        s2.fixed_view_mut::<3, 3>(0, 0).copy_from(&r2);
        s2.fixed_view_mut::<3, 3>(3, 3).copy_from(&r2);

        let mut j = Matrix6x4::zeros();
        j.fixed_view_mut::<6, 2>(0, 0)
            .copy_from(&(s1 * self.proximal.jacobian(delta1)));
        j.fixed_view_mut::<6, 2>(0, 2)
            .copy_from(&(s2 * self.distal.jacobian(self.delta2)));
        j
    }

    pub fn twist(&self, delta1: f64, rates: &JointRates) -> Twist {
        let qdot = Vector4::new(rates.qdot_p, rates.qdot_r, rates.qdot_d, 0.0);
        Twist::from_vector(&(self.jacobian(delta1) * qdot))
    }
}

/// Plane-independent partial integrals for a set of backbone markers.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerShapes {
    markers: Vec<(SegmentIndex, Vector3<f64>)>,
}

impl MarkerShapes {
    pub fn compute(
        model: &CatheterModel,
        joints: &JointState,
        markers: &[MarkerSpec],
        quad: &Quadrature,
    ) -> Result<Self> {
        let markers = markers
            .iter()
            .map(|m| {
                let segment = model.segment(m.segment);
                let s = segment.check_arc_length(m.arc_length)?;
                let q = match m.segment {
                    SegmentIndex::Proximal => joints.q_p,
                    SegmentIndex::Distal => joints.q_d,
                };
                let planar = planar_integral(segment, &segment.shape_coefficients(q), s, quad);
                Ok((m.segment, planar))
            })
            .collect::<Result<_>>()?;
        Ok(Self { markers })
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    /// Marker positions in the base frame for proximal plane `δ₁`.
    pub fn positions(&self, shape: &CatheterShape, delta1: f64) -> Vec<Vector3<f64>> {
        let rz1 = rot_z(delta1);
        let proximal_tip = shape.proximal.pose(delta1);
        let rz2 = rot_z(shape.delta2);
        self.markers
            .iter()
            .map(|(segment, planar)| match segment {
                SegmentIndex::Proximal => rz1 * planar,
                SegmentIndex::Distal => {
                    proximal_tip.position + proximal_tip.rotation * (rz2 * planar)
                }
            })
            .collect()
    }
}

/// Tip pose of a single segment bent by `q` in plane `delta`.
pub fn segment_direct_kinematics(
    model: &SegmentModel,
    q: f64,
    delta: f64,
    quad: &Quadrature,
) -> Pose {
    SegmentShape::compute(model, q, quad).pose(delta)
}

/// Returns `(frame {4}, frame {2})` in the base frame, using `δ₁ = q_r + δ_L`.
pub fn full_direct_kinematics(
    model: &CatheterModel,
    joints: &JointState,
    quad: &Quadrature,
) -> (Pose, Pose) {
    let frames = CatheterShape::compute(model, joints, quad).frames(joints.delta1());
    (frames.tip, frames.proximal_tip)
}

pub fn horizontal_coordinate(model: &SegmentModel, q: f64, quad: &Quadrature) -> f64 {
    planar_integral(model, &model.shape_coefficients(q), model.length(), quad).x
}

pub fn segment_jacobian(
    model: &SegmentModel,
    q: f64,
    delta: f64,
    quad: &Quadrature,
) -> Matrix6x2<f64> {
    SegmentShape::compute(model, q, quad).jacobian(delta)
}

/// Combined Jacobian at `joints`, columns `[q_p, q_r, q_d, δ₂]`.
pub fn full_jacobian(model: &CatheterModel, joints: &JointState, quad: &Quadrature) -> Matrix6x4<f64> {
    CatheterShape::compute(model, joints, quad).jacobian(joints.delta1())
}

/// Twist of the tip frame, with `δ̇₁ = q̇_r` and `δ̇₂ = 0`.
pub fn full_instantaneous_kinematics(
    model: &CatheterModel,
    joints: &JointState,
    rates: &JointRates,
    quad: &Quadrature,
) -> Twist {
    CatheterShape::compute(model, joints, quad).twist(joints.delta1(), rates)
}

pub fn body_point_kinematics(
    model: &CatheterModel,
    joints: &JointState,
    markers: &[MarkerSpec],
    quad: &Quadrature,
) -> Result<Vec<Vector3<f64>>> {
    let shape = CatheterShape::compute(model, joints, quad);
    Ok(MarkerShapes::compute(model, joints, markers, quad)?.positions(&shape, joints.delta1()))
}
