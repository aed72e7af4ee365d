//! Combined 6x4 Jacobian and tip twist, compared with central differences
//! of the direct kinematics.
//!
//! cargo run --example jacobian_check

use catheter_biplane::{
    full_direct_kinematics, full_instantaneous_kinematics, full_jacobian, CatheterModel, JointRates, JointState,
    Quadrature,
};
use nalgebra::{Matrix3, Vector3};

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

fn fmt(v: &Vector3<f64>) -> String {
    format!("{:>11.6} {:>11.6} {:>11.6}", v.x, v.y, v.z)
}

fn main() -> catheter_biplane::Result<()> {
    let model = CatheterModel::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/catheter.toml"))?;
    let quad = Quadrature::default();
    let joints = JointState::new(0.3, 2.0, 3.0, 0.5);
    let rates = JointRates::new(0.8, -0.5, 1.2);

    let j = full_jacobian(&model, &joints, &quad);
    println!("combined Jacobian, columns q_p q_r q_d delta2");
    for row in j.row_iter() {
        println!("  {:>11.6} {:>11.6} {:>11.6} {:>11.6}", row[0], row[1], row[2], row[3]);
    }

    let twist = full_instantaneous_kinematics(&model, &joints, &rates, &quad);
    let h = 1e-5;
    let (plus, _) = full_direct_kinematics(&model, &joints.advanced(&rates, h), &quad);
    let (minus, _) = full_direct_kinematics(&model, &joints.advanced(&rates, -h), &quad);
    let (now, _) = full_direct_kinematics(&model, &joints, &quad);
    let v_fd = (plus.position - minus.position) / (2.0 * h);
    let w_fd = vee(&((plus.rotation - minus.rotation) / (2.0 * h) * now.rotation.transpose()));

    println!("linear  analytic {}", fmt(&twist.linear));
    println!("linear  finite   {}", fmt(&v_fd));
    println!("angular analytic {}", fmt(&twist.angular));
    println!("angular finite   {}", fmt(&w_fd));
    let rel = ((twist.linear - v_fd).norm() + (twist.angular - w_fd).norm())
        / (twist.linear.norm() + twist.angular.norm());
    println!("relative error {rel:.2e}");
    Ok(())
}
