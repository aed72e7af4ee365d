//! Simulates a short bi-plane observation log, writes it as CSV, reads it
//! back and estimates the torsional loss with all three estimators.
//!
//! cargo run --example estimate_bending_plane

use catheter_biplane::cli::estimator_input_from_log;
use catheter_biplane::studies::simulate_log;
use catheter_biplane::{
    estimate, CatheterModel, Estimator, ImagingSetup, JointRates, JointState, MarkerSpec, ObservationLog,
    Quadrature, SegmentIndex, SolverSettings,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> catheter_biplane::Result<()> {
    let dir = env!("CARGO_MANIFEST_DIR");
    let model = CatheterModel::load(format!("{dir}/fixtures/catheter.toml"))?;
    let setup = ImagingSetup::load(format!("{dir}/fixtures/biplane.toml"))?;

    let true_loss = 40f64.to_radians();
    let start = JointState::new(10f64.to_radians(), 2.5, 2.0, true_loss);
    let rates = JointRates::new(0.5, 0.4, -0.3);
    let markers = [
        MarkerSpec::new(SegmentIndex::Proximal, 6.5),
        MarkerSpec::new(SegmentIndex::Proximal, 13.0),
        MarkerSpec::new(SegmentIndex::Distal, 8.0),
    ];
    let times = [0.0, 0.01, 0.02];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let log = simulate_log(&model, &setup, &start, &rates, &times, &markers, 0.0, &mut rng)?;

    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    println!("{} observation rows", log.to_records().len());
    let log = ObservationLog::from_csv_reader(csv.as_slice(), "simulated")?;

    // the estimator sees the joint readings at the latest frame, without δ_L
    let now = start.advanced(&rates, times[2]).with_delta_l(0.0);
    let input = estimator_input_from_log(model, &setup, &log, now, Some(rates), Quadrature::default())?;
    println!("true delta_L = {:.4} deg", true_loss.to_degrees());
    for which in Estimator::ALL {
        let r = estimate(&input, which, &SolverSettings::default())?;
        println!(
            "{:>15}: {:8.4} deg  residual {:.2e}  {}",
            which.as_str(),
            r.delta_l_star.to_degrees(),
            r.residual,
            r.condition_flag
        );
    }
    Ok(())
}
