//! Tip pose of the bundled catheter, checked against the closed-form arc.
//!
//! cargo run --example forward_kinematics

use catheter_biplane::kinematics::segment_direct_kinematics;
use catheter_biplane::{full_direct_kinematics, CatheterModel, JointState, Quadrature};
use nalgebra::Vector3;

fn fmt(v: &Vector3<f64>) -> String {
    format!("{:>11.6} {:>11.6} {:>11.6}", v.x, v.y, v.z)
}

fn main() -> catheter_biplane::Result<()> {
    let model = CatheterModel::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/catheter.toml"))?;
    let quad = Quadrature::default();

    let joints = JointState::new(30f64.to_radians(), 2.5, 2.5, 0.0);
    let (tip, proximal_tip) = full_direct_kinematics(&model, &joints, &quad);
    println!("joints: q_r = 30 deg, q_p = 2.5 mm, q_d = 2.5 mm");
    println!("proximal tip  {}", fmt(&proximal_tip.position));
    println!("distal tip    {}", fmt(&tip.position));
    for (i, label) in ["tip rotation", "", ""].iter().enumerate() {
        println!("{label:<13} {}", fmt(&tip.rotation.row(i).transpose()));
    }

    // a single constant-curvature segment traces a circular arc
    let seg = &model.distal;
    let length = seg.length();
    println!("{:>8} {:>14}", "kappa*L", "|fk - arc| mm");
    for bend in [0.1, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2, std::f64::consts::PI] {
        let q = seg.actuation_for_tip_angle(std::f64::consts::FRAC_PI_2 - bend)?;
        let kappa = bend / length;
        let arc = Vector3::new((1.0 - bend.cos()) / kappa, 0.0, bend.sin() / kappa);
        let fk = segment_direct_kinematics(seg, q, 0.0, &quad).position;
        println!("{bend:>8.4} {:>14.3e}", (fk - arc).norm());
    }
    Ok(())
}
