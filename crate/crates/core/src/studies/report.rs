use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::descriptor::{StudyDescriptor, StudyKind};
use crate::error::{Error, Result};
use crate::estimation::{Estimator, SolverSettings};

/// Coordinates of one study cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellCoords {
    pub index: usize,
    pub sigma_mm: f64,
    pub deflection_mm: f64,
    pub q_p: f64,
    pub q_d: f64,
    /// Tip angles of the true configuration, radians.
    pub theta_l1: f64,
    pub theta_l2: f64,
}

impl CellCoords {
    /// Bending offsets from straight, `|π/2 − θ(L)|` summed over segments.
    pub fn total_bend(&self) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        (FRAC_PI_2 - self.theta_l1).abs() + (FRAC_PI_2 - self.theta_l2).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub estimator: Estimator,
    pub true_delta_l: f64,
    pub estimated_delta_l: f64,
    pub error_deg: f64,
    pub near_straight: bool,
    pub ambiguous: bool,
}

/// Error statistics of one estimator over the trials of one cell, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellRecord {
    #[serde(flatten)]
    pub coords: CellCoords,
    pub estimator: Estimator,
    pub trials: usize,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub rms_deg: f64,
    pub max_deg: f64,
    pub near_straight_count: usize,
    pub ambiguous_count: usize,
}

impl CellRecord {
    pub fn aggregate(coords: CellCoords, estimator: Estimator, trials: &[&TrialRecord]) -> Self {
        let mut errors: Vec<f64> = trials.iter().map(|t| t.error_deg).collect();
        errors.sort_by(f64::total_cmp);
        let n = errors.len();
        let (mean, median, rms, max) = if n == 0 {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        } else {
            let nf = n as f64;
            let median = if n % 2 == 1 { errors[n / 2] } else { 0.5 * (errors[n / 2 - 1] + errors[n / 2]) };
            (
                errors.iter().sum::<f64>() / nf,
                median,
                (errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt(),
                errors[n - 1],
            )
        };
        Self {
            coords,
            estimator,
            trials: n,
            mean_deg: mean,
            median_deg: median,
            rms_deg: rms,
            max_deg: max,
            near_straight_count: trials.iter().filter(|t| t.near_straight).count(),
            ambiguous_count: trials.iter().filter(|t| t.ambiguous).count(),
        }
    }
}

/// Inputs that determine a study's output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub crate_version: String,
    pub kind: StudyKind,
    pub seed: u64,
    pub trials: usize,
    pub quadrature_nodes: usize,
    pub velocity_dt: f64,
    pub settings: SolverSettings,
    /// SHA-256 of the canonical model TOML.
    pub model_sha256: String,
    pub setup_sha256: String,
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest.iter() {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

impl Provenance {
    pub fn from_descriptor(desc: &StudyDescriptor) -> Result<Self> {
        Ok(Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            kind: desc.kind,
            seed: desc.seed,
            trials: desc.trials,
            quadrature_nodes: desc.quadrature.node_count(),
            velocity_dt: desc.velocity_dt,
            settings: desc.settings,
            model_sha256: sha256_hex(&desc.model.to_toml_string()?),
            setup_sha256: sha256_hex(&desc.setup.to_toml_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub kind: StudyKind,
    pub cells: Vec<CellRecord>,
    pub trials: Vec<TrialRecord>,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    provenance: &'a Provenance,
    cells: &'a [CellRecord],
}

#[derive(Serialize)]
struct SummaryRow {
    cell: usize,
    sigma_mm: f64,
    deflection_mm: f64,
    q_p: f64,
    q_d: f64,
    theta_l1: f64,
    theta_l2: f64,
    estimator: Estimator,
    trials: usize,
    mean_deg: f64,
    median_deg: f64,
    rms_deg: f64,
    max_deg: f64,
    near_straight_count: usize,
    ambiguous_count: usize,
}

impl From<&CellRecord> for SummaryRow {
    fn from(c: &CellRecord) -> Self {
        Self {
            cell: c.coords.index,
            sigma_mm: c.coords.sigma_mm,
            deflection_mm: c.coords.deflection_mm,
            q_p: c.coords.q_p,
            q_d: c.coords.q_d,
            theta_l1: c.coords.theta_l1,
            theta_l2: c.coords.theta_l2,
            estimator: c.estimator,
            trials: c.trials,
            mean_deg: c.mean_deg,
            median_deg: c.median_deg,
            rms_deg: c.rms_deg,
            max_deg: c.max_deg,
            near_straight_count: c.near_straight_count,
            ambiguous_count: c.ambiguous_count,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Numerical(format!("csv encoding failed: {e}"))
}

impl StudyResult {
    /// Cells for one estimator, in cell order.
    pub fn cells_for(&self, estimator: Estimator) -> Vec<&CellRecord> {
        self.cells.iter().filter(|c| c.estimator == estimator).collect()
    }

    /// Per-cell summary CSV, one row per (cell, estimator).
    pub fn summary_csv(&self) -> Result<String> {
        let mut rows: Vec<&CellRecord> = self.cells.iter().collect();
        rows.sort_by_key(|c| (c.coords.index, c.estimator));
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(SummaryRow::from(row)).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Every trial's estimate, ordered by cell, trial and estimator.
    pub fn trials_csv(&self) -> Result<String> {
        let mut rows: Vec<&TrialRecord> = self.trials.iter().collect();
        rows.sort_by_key(|t| (t.cell, t.trial, t.estimator));
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> Result<String> {
        let doc = SummaryJson {
            provenance: &self.provenance,
            cells: &self.cells,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(format!("json encoding failed: {e}")))
    }

    /// Writes `summary.csv`, `trials.csv` and `summary.json` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("summary.csv", self.summary_csv()?),
            ("trials.csv", self.trials_csv()?),
            ("summary.json", self.summary_json()?),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords() -> CellCoords {
        CellCoords {
            index: 0,
            sigma_mm: 1.0,
            deflection_mm: 0.0,
            q_p: 1.0,
            q_d: 1.0,
            theta_l1: 1.0,
            theta_l2: 1.2,
        }
    }

    fn trial(i: usize, e: f64) -> TrialRecord {
        TrialRecord {
            cell: 0,
            trial: i,
            estimator: Estimator::TipPosition,
            true_delta_l: 0.0,
            estimated_delta_l: e.to_radians(),
            error_deg: e,
            near_straight: false,
            ambiguous: i == 0,
        }
    }

    #[test]
    fn aggregate_statistics() {
        let t: Vec<TrialRecord> = [3.0, 1.0, 2.0, 4.0].iter().enumerate().map(|(i, &e)| trial(i, e)).collect();
        let refs: Vec<&TrialRecord> = t.iter().collect();
        let c = CellRecord::aggregate(coords(), Estimator::TipPosition, &refs);
        assert_eq!(c.trials, 4);
        assert_eq!(c.mean_deg, 2.5);
        assert_eq!(c.median_deg, 2.5);
        assert!((c.rms_deg - 7.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.max_deg, 4.0);
        assert_eq!(c.ambiguous_count, 1);
        assert!(c.max_deg >= c.rms_deg && c.rms_deg >= c.mean_deg);
    }

    #[test]
    fn hex_digest() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
