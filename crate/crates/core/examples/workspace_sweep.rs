//! Runs the bundled workspace-sweep descriptor and prints the mean error table.
//!
//! cargo run --release --example workspace_sweep

use catheter_biplane::studies::{run_study, StudyDescriptor};
use catheter_biplane::Estimator;

fn main() -> catheter_biplane::Result<()> {
    let desc = StudyDescriptor::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/workspace_sweep.toml"))?;
    let result = run_study(&desc)?;
    // rows: proximal bend, columns: distal bend, both degrees from straight
    for which in Estimator::ALL {
        println!("{which} mean error (deg)");
        let cells = result.cells_for(which);
        let bend = |theta: f64| (std::f64::consts::FRAC_PI_2 - theta).to_degrees();
        let width = cells.iter().take_while(|c| c.coords.q_p == cells[0].coords.q_p).count();
        print!("{:>10}", "prox\\dist");
        for c in &cells[..width] {
            print!("{:>8.0}", bend(c.coords.theta_l2));
        }
        println!();
        for row in cells.chunks(width) {
            print!("{:>10.0}", bend(row[0].coords.theta_l1));
            for c in row {
                let mark = if c.near_straight_count > 0 { "*" } else { " " };
                print!("{:>7.2}{mark}", c.mean_deg);
            }
            println!();
        }
    }
    println!("* near-straight flag raised");
    Ok(())
}
