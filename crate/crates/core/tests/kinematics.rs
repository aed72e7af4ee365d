use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use catheter_biplane::kinematics::{rot_z, segment_direct_kinematics, CatheterShape};
use catheter_biplane::{
    body_point_kinematics, full_direct_kinematics, full_instantaneous_kinematics, full_jacobian, segment_jacobian,
    CatheterModel, JointRates, JointState, MarkerSpec, Quadrature, SegmentIndex, SegmentModel,
};
use nalgebra::{Matrix3, Matrix6x2, Matrix6x4, Vector3};
use proptest::prelude::*;

fn model() -> CatheterModel {
    CatheterModel::new(
        SegmentModel::constant_curvature(13.0, 0.02).unwrap(),
        SegmentModel::constant_curvature(16.0, 0.02).unwrap(),
        0.6,
    )
    .unwrap()
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// Closed-form circular arc of bend `kl` over length `l` in plane `delta`.
fn arc(l: f64, kl: f64, delta: f64) -> Vector3<f64> {
    let k = kl / l;
    rot_z(delta) * Vector3::new((1.0 - kl.cos()) / k, 0.0, kl.sin() / k)
}

#[test]
fn constant_curvature_matches_closed_form_arc() {
    let quad = Quadrature::default();
    for l in [13.0, 16.0] {
        let seg = SegmentModel::constant_curvature(l, 0.02).unwrap();
        for kl in [0.1, FRAC_PI_4, FRAC_PI_2, PI] {
            let q = kl / (0.02 * l);
            for delta in [0.0, 1.0, -2.5] {
                let pose = segment_direct_kinematics(&seg, q, delta, &quad);
                assert!((pose.position - arc(l, kl, delta)).norm() < 1e-8, "l={l} kl={kl}");
            }
        }
    }
}

#[test]
fn fk_error_shrinks_with_node_count() {
    let seg = SegmentModel::constant_curvature(16.0, 0.02).unwrap();
    let q = PI / (0.02 * 16.0);
    let err = |n| {
        let quad = Quadrature::gauss_legendre(n).unwrap();
        (segment_direct_kinematics(&seg, q, 0.0, &quad).position - arc(16.0, PI, 0.0)).norm()
    };
    assert!(err(3) > err(5));
    assert!(err(5) > err(8));
    assert!(err(8) < 1e-6);
}

fn segment_fd(seg: &SegmentModel, q: f64, delta: f64, h: f64) -> Matrix6x2<f64> {
    let quad = Quadrature::default();
    let pose = |q, d| segment_direct_kinematics(seg, q, d, &quad);
    let r = pose(q, delta).rotation;
    let mut j = Matrix6x2::zeros();
    for (col, (qp, dp, qm, dm)) in [(q + h, delta, q - h, delta), (q, delta + h, q, delta - h)]
        .into_iter()
        .enumerate()
    {
        let (p, m) = (pose(qp, dp), pose(qm, dm));
        let v = (p.position - m.position) / (2.0 * h);
        let w = vee(&((p.rotation - m.rotation) / (2.0 * h) * r.transpose()));
        j.fixed_view_mut::<3, 1>(0, col).copy_from(&v);
        j.fixed_view_mut::<3, 1>(3, col).copy_from(&w);
    }
    j
}

#[test]
fn segment_jacobian_matches_finite_differences() {
    let seg = SegmentModel::constant_curvature(13.0, 0.02).unwrap();
    for (q, delta) in [(0.5, 0.0), (2.0, 1.2), (5.0, -2.0), (-3.0, 3.0), (8.0, 0.4)] {
        let j = segment_jacobian(&seg, q, delta, &Quadrature::default());
        let fd = segment_fd(&seg, q, delta, 1e-6);
        assert!((j - fd).norm() / j.norm() < 1e-5, "q={q} delta={delta}");
    }
}

fn full_fd(model: &CatheterModel, joints: &JointState, h: f64) -> Matrix6x4<f64> {
    let quad = Quadrature::default();
    let with_delta2 = |d2: f64| CatheterModel::new(model.proximal.clone(), model.distal.clone(), d2).unwrap();
    let (now, _) = full_direct_kinematics(model, joints, &quad);
    let mut j = Matrix6x4::zeros();
    for col in 0..4 {
        let (p, m) = match col {
            0 => (
                full_direct_kinematics(model, &JointState { q_p: joints.q_p + h, ..*joints }, &quad).0,
                full_direct_kinematics(model, &JointState { q_p: joints.q_p - h, ..*joints }, &quad).0,
            ),
            1 => (
                full_direct_kinematics(model, &JointState { q_r: joints.q_r + h, ..*joints }, &quad).0,
                full_direct_kinematics(model, &JointState { q_r: joints.q_r - h, ..*joints }, &quad).0,
            ),
            2 => (
                full_direct_kinematics(model, &JointState { q_d: joints.q_d + h, ..*joints }, &quad).0,
                full_direct_kinematics(model, &JointState { q_d: joints.q_d - h, ..*joints }, &quad).0,
            ),
            _ => (
                full_direct_kinematics(&with_delta2(model.delta2() + h), joints, &quad).0,
                full_direct_kinematics(&with_delta2(model.delta2() - h), joints, &quad).0,
            ),
        };
        let v = (p.position - m.position) / (2.0 * h);
        let w = vee(&((p.rotation - m.rotation) / (2.0 * h) * now.rotation.transpose()));
        j.fixed_view_mut::<3, 1>(0, col).copy_from(&v);
        j.fixed_view_mut::<3, 1>(3, col).copy_from(&w);
    }
    j
}

#[test]
fn combined_jacobian_matches_finite_differences() {
    let m = model();
    for joints in [
        JointState::new(0.0, 2.5, 2.5, 0.7),
        JointState::new(-2.0, 0.3, 6.0, 1.0),
        JointState::new(1.0, -4.0, 1.0, -0.5),
        JointState::new(3.0, 6.0, -6.0, 0.0),
    ] {
        let j = full_jacobian(&m, &joints, &Quadrature::default());
        let fd = full_fd(&m, &joints, 1e-6);
        assert!((j - fd).norm() / j.norm() < 1e-5, "{joints:?}");
    }
}

#[test]
fn twist_matches_finite_difference_of_motion() {
    let m = model();
    let quad = Quadrature::default();
    let joints = JointState::new(0.4, 2.0, 3.5, 0.2);
    let rates = JointRates::new(0.7, -1.1, 0.9);
    let twist = full_instantaneous_kinematics(&m, &joints, &rates, &quad);
    let h = 1e-5;
    let (p, _) = full_direct_kinematics(&m, &joints.advanced(&rates, h), &quad);
    let (n, _) = full_direct_kinematics(&m, &joints.advanced(&rates, -h), &quad);
    let (now, _) = full_direct_kinematics(&m, &joints, &quad);
    let v = (p.position - n.position) / (2.0 * h);
    let w = vee(&((p.rotation - n.rotation) / (2.0 * h) * now.rotation.transpose()));
    let rel = ((twist.linear - v).norm() + (twist.angular - w).norm()) / (twist.linear.norm() + twist.angular.norm());
    assert!(rel < 1e-4, "relative error {rel}");
}

#[test]
fn straight_catheter_points_along_z() {
    let m = model();
    let (tip, proximal) = full_direct_kinematics(&m, &JointState::new(1.3, 0.0, 0.0, -0.4), &Quadrature::default());
    assert!((tip.position - Vector3::new(0.0, 0.0, 29.0)).norm() < 1e-12);
    assert!((proximal.position - Vector3::new(0.0, 0.0, 13.0)).norm() < 1e-12);
}

#[test]
fn tip_marker_is_bitwise_the_tip() {
    let m = model();
    let quad = Quadrature::default();
    let joints = JointState::new(0.3, 2.1, -3.7, 1.1);
    let markers = [MarkerSpec::new(SegmentIndex::Distal, 16.0), MarkerSpec::new(SegmentIndex::Proximal, 13.0)];
    let points = body_point_kinematics(&m, &joints, &markers, &quad).unwrap();
    let (tip, proximal) = full_direct_kinematics(&m, &joints, &quad);
    assert_eq!(points[0], tip.position);
    assert_eq!(points[1], proximal.position);
}

fn joints() -> impl Strategy<Value = JointState> {
    (-PI..PI, -8.0..8.0f64, -8.0..8.0f64, -PI..PI).prop_map(|(r, p, d, l)| JointState::new(r, p, d, l))
}

proptest! {
    #[test]
    fn rotations_are_orthonormal(j in joints()) {
        let (tip, proximal) = full_direct_kinematics(&model(), &j, &Quadrature::default());
        for r in [tip.rotation, proximal.rotation] {
            prop_assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn roll_rotates_the_whole_catheter(j in joints(), shift in -PI..PI) {
        let quad = Quadrature::default();
        let (a, _) = full_direct_kinematics(&model(), &j, &quad);
        let (b, _) = full_direct_kinematics(&model(), &JointState { q_r: j.q_r + shift, ..j }, &quad);
        prop_assert!((b.position - rot_z(shift) * a.position).norm() < 1e-10);
    }

    #[test]
    fn twist_is_linear_in_rates(j in joints(), a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64) {
        let shape = CatheterShape::compute(&model(), &j, &Quadrature::default());
        let r1 = JointRates::new(a, b, c);
        let r2 = JointRates::new(2.0 * a, 2.0 * b, 2.0 * c);
        let t1 = shape.twist(j.delta1(), &r1);
        let t2 = shape.twist(j.delta1(), &r2);
        prop_assert!((t2.linear - 2.0 * t1.linear).norm() < 1e-9);
        prop_assert!((t2.angular - 2.0 * t1.angular).norm() < 1e-9);
    }

    #[test]
    fn tip_stays_within_catheter_length(j in joints()) {
        let (tip, _) = full_direct_kinematics(&model(), &j, &Quadrature::default());
        prop_assert!(tip.position.norm() <= 29.0 + 1e-9);
    }
}
