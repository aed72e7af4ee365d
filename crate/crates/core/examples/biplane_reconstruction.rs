//! Projects backbone points into the front and side views, adds
//! segmentation noise and reconstructs them by least squares.
//!
//! cargo run --example biplane_reconstruction

use catheter_biplane::biplane::ObservationPair;
use catheter_biplane::{observe, ImagingPlane, ImagingSetup, PlaneLabel};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rms_error(setup: &ImagingSetup, points: &[Vector3<f64>], sigma: f64, rng: &mut ChaCha8Rng) -> catheter_biplane::Result<f64> {
    let base = Vector3::zeros();
    let mut sum = 0.0;
    for p in points {
        let front = ObservationPair::new(
            observe(&setup.front, &base, sigma, 0.0, rng)?,
            observe(&setup.front, p, sigma, 0.0, rng)?,
        );
        let side = ObservationPair::new(
            observe(&setup.side, &base, sigma, 0.0, rng)?,
            observe(&setup.side, p, sigma, 0.0, rng)?,
        );
        sum += (setup.reconstruct(&front, &side)? - p).norm_squared();
    }
    Ok((sum / points.len() as f64).sqrt())
}

fn main() -> catheter_biplane::Result<()> {
    let setup = ImagingSetup::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/biplane.toml"))?;
    println!("plane separation |n_f x n_s| = {:.4}", setup.plane_separation());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<Vector3<f64>> = (0..200)
        .map(|i| {
            let t = i as f64 / 200.0;
            Vector3::new(10.0 * (6.0 * t).sin(), 8.0 * (4.0 * t).cos(), 29.0 * t)
        })
        .collect();
    println!("{:>8} {:>12}", "sigma", "rms error");
    for sigma in [0.0, 0.25, 0.5, 1.0, 2.0] {
        println!("{sigma:>8.2} {:>12.4e}", rms_error(&setup, &points, sigma, &mut rng)?);
    }

    // both views along the same axis cannot recover depth
    let same = ImagingSetup::new(setup.front, ImagingPlane::from_normal(setup.front.normal(), PlaneLabel::Side)?);
    match rms_error(&same, &points[..1], 0.0, &mut rng) {
        Err(e) => println!("identical planes: {e}"),
        Ok(_) => println!("identical planes unexpectedly reconstructed"),
    }
    Ok(())
}
