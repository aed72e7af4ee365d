//! Runs the bundled noise-sweep descriptor and prints the mean error table.
//!
//! cargo run --release --example noise_sweep

use catheter_biplane::studies::{run_study, StudyDescriptor};
use catheter_biplane::Estimator;

fn main() -> catheter_biplane::Result<()> {
    let desc = StudyDescriptor::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/noise_sweep.toml"))?;
    let result = run_study(&desc)?;
    println!("{:>8} {:>15} {:>15} {:>15}", "sigma", "tip-position", "body-positions", "tip-velocity");
    let per: Vec<_> = Estimator::ALL.iter().map(|e| result.cells_for(*e)).collect();
    for (i, cell) in per[0].iter().enumerate() {
        println!(
            "{:>8.2} {:>15.3} {:>15.3} {:>15.3}",
            cell.coords.sigma_mm, per[0][i].mean_deg, per[1][i].mean_deg, per[2][i].mean_deg
        );
    }
    Ok(())
}
