//! Catheter model: modal shape bases, segment shape matrices and joint values.
//!
//! The backbone tangent angle of a segment is the separable expansion
//! `θ(s, q) = ψ(s)ᵀ A η(q)`, where `ψ` is an arc-length basis, `η` an
//! actuation basis and `A` the segment's characteristic shape matrix. A
//! tangent angle of `π/2` points straight along the base `z` axis, so every
//! segment must satisfy `θ(s, 0) = π/2` over its whole length.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::error::{Error, Result};

const REST_SHAPE_TOLERANCE: f64 = 1e-9;
const REST_SHAPE_SAMPLES: usize = 33;

/// One scalar basis function together with its exact derivative.
#[derive(Clone, Copy)]
pub enum BasisFn {
    /// `x^k`
    Monomial(u32),
    Custom {
        value: fn(f64) -> f64,
        derivative: fn(f64) -> f64,
    },
}

impl BasisFn {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            BasisFn::Monomial(0) => 1.0,
            BasisFn::Monomial(k) => x.powi(k as i32),
            BasisFn::Custom { value, .. } => value(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            BasisFn::Monomial(0) => 0.0,
            BasisFn::Monomial(k) => k as f64 * x.powi(k as i32 - 1),
            BasisFn::Custom { derivative, .. } => derivative(x),
        }
    }
}

impl fmt::Debug for BasisFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFn::Monomial(k) => write!(f, "x^{k}"),
            BasisFn::Custom { .. } => f.write_str("custom"),
        }
    }
}

/// Arc-length basis `ψ(s)` and actuation basis `η(q)` of a segment.
///
/// Each actuation entry carries its analytic derivative, so `∂η/∂q` always
/// has exactly as many entries as `η`.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    arc_basis: Vec<BasisFn>,
    actuation_basis: Vec<BasisFn>,
}

impl ModalBasis {
    pub fn new(arc_basis: Vec<BasisFn>, actuation_basis: Vec<BasisFn>) -> Result<Self> {
        if arc_basis.is_empty() || actuation_basis.is_empty() {
            return Err(Error::Validation(
                "modal bases need at least one arc and one actuation function".into(),
            ));
        }
        Ok(Self {
            arc_basis,
            actuation_basis,
        })
    }

    /// `ψ(s) = [1, s, …, s^(n-1)]`, `η(q) = [1, q, …, q^(m-1)]`.
    pub fn polynomial(n: usize, m: usize) -> Result<Self> {
        Self::new(
            (0..n as u32).map(BasisFn::Monomial).collect(),
            (0..m as u32).map(BasisFn::Monomial).collect(),
        )
    }

    pub fn arc_len(&self) -> usize {
        self.arc_basis.len()
    }

    pub fn actuation_len(&self) -> usize {
        self.actuation_basis.len()
    }

    pub fn arc_basis(&self) -> &[BasisFn] {
        &self.arc_basis
    }

    pub fn actuation_basis(&self) -> &[BasisFn] {
        &self.actuation_basis
    }

    pub fn psi(&self, s: f64) -> DVector<f64> {
        DVector::from_iterator(self.arc_len(), self.arc_basis.iter().map(|b| b.value(s)))
    }

    pub fn eta(&self, q: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.actuation_len(),
            self.actuation_basis.iter().map(|b| b.value(q)),
        )
    }

    pub fn eta_derivative(&self, q: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.actuation_len(),
            self.actuation_basis.iter().map(|b| b.derivative(q)),
        )
    }

    fn is_polynomial(&self) -> bool {
        let monomial_run = |fns: &[BasisFn]| {
            fns.iter()
                .enumerate()
                .all(|(i, b)| matches!(b, BasisFn::Monomial(k) if *k as usize == i))
        };
        monomial_run(&self.arc_basis) && monomial_run(&self.actuation_basis)
    }
}

/// A bending segment of arc length `length` (mm).
#[derive(Debug, Clone)]
pub struct SegmentModel {
    length: f64,
    shape_matrix: DMatrix<f64>,
    basis: ModalBasis,
}

impl SegmentModel {
    pub fn new(length: f64, shape_matrix: DMatrix<f64>, basis: ModalBasis) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Validation(format!(
                "segment length must be positive, got {length}"
            )));
        }
        if shape_matrix.nrows() != basis.arc_len() || shape_matrix.ncols() != basis.actuation_len()
        {
            return Err(Error::Validation(format!(
                "shape matrix is {}x{} but basis is ({}, {})",
                shape_matrix.nrows(),
                shape_matrix.ncols(),
                basis.arc_len(),
                basis.actuation_len()
            )));
        }
        if shape_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("shape matrix has non-finite entries".into()));
        }
        let segment = Self {
            length,
            shape_matrix,
            basis,
        };
        for i in 0..REST_SHAPE_SAMPLES {
            let s = length * i as f64 / (REST_SHAPE_SAMPLES - 1) as f64;
            let theta = segment.theta_unchecked(s, 0.0);
            if (theta - FRAC_PI_2).abs() > REST_SHAPE_TOLERANCE {
                return Err(Error::Validation(format!(
                    "rest shape is not straight: θ({s:.4}, 0) = {theta:.12} instead of π/2"
                )));
            }
        }
        Ok(segment)
    }

    /// The linear constant-curvature segment `ψ = [1, s]`, `η = [1, q]`,
    /// `A = [[π/2, 0], [0, -c]]`, i.e. `θ = π/2 - c·s·q` with curvature `c·q`.
    pub fn constant_curvature(length: f64, curvature_gain: f64) -> Result<Self> {
        let a = DMatrix::from_row_slice(2, 2, &[FRAC_PI_2, 0.0, 0.0, -curvature_gain]);
        Self::new(length, a, ModalBasis::polynomial(2, 2)?)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn shape_matrix(&self) -> &DMatrix<f64> {
        &self.shape_matrix
    }

    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }

    pub(crate) fn check_arc_length(&self, s: f64) -> Result<f64> {
        let slack = 1e-12 * self.length;
        if !(s >= -slack && s <= self.length + slack) {
            return Err(Error::Domain(format!(
                "arc length {s} outside [0, {}]",
                self.length
            )));
        }
        Ok(s.clamp(0.0, self.length))
    }

    /// `A η(q)`; the tangent angle at `s` is `ψ(s) · A η(q)`.
    pub(crate) fn shape_coefficients(&self, q: f64) -> DVector<f64> {
        &self.shape_matrix * self.basis.eta(q)
    }

    /// `A η'(q)`.
    pub(crate) fn shape_rate_coefficients(&self, q: f64) -> DVector<f64> {
        &self.shape_matrix * self.basis.eta_derivative(q)
    }

    pub(crate) fn arc_dot(&self, s: f64, coefficients: &DVector<f64>) -> f64 {
        self.basis
            .arc_basis
            .iter()
            .zip(coefficients.iter())
            .map(|(psi, c)| psi.value(s) * c)
            .sum()
    }

    fn theta_unchecked(&self, s: f64, q: f64) -> f64 {
        self.arc_dot(s, &self.shape_coefficients(q))
    }

    /// Tangent angle `θ(s, q)` in rad.
    pub fn tangent_angle(&self, s: f64, q: f64) -> Result<f64> {
        let s = self.check_arc_length(s)?;
        Ok(self.theta_unchecked(s, q))
    }

    /// `∂θ/∂q` at `(s, q)` from the analytic actuation-basis derivative.
    pub fn tangent_angle_partial(&self, s: f64, q: f64) -> Result<f64> {
        let s = self.check_arc_length(s)?;
        Ok(self.arc_dot(s, &self.shape_rate_coefficients(q)))
    }

    /// Actuation value whose tip angle `θ(L, q)` equals `tip_angle`.
    ///
    /// Searches outward from `q = 0` for a sign change and bisects it.
    pub fn actuation_for_tip_angle(&self, tip_angle: f64) -> Result<f64> {
        let residual = |q: f64| self.theta_unchecked(self.length, q) - tip_angle;
        let r0 = residual(0.0);
        if r0 == 0.0 {
            return Ok(0.0);
        }
        let mut span = 1e-3;
        for _ in 0..80 {
            for (lo, hi) in [(0.0, span), (-span, 0.0)] {
                let (rlo, rhi) = (residual(lo), residual(hi));
                if rlo.signum() != rhi.signum() {
                    return Ok(bisect(residual, lo, hi, rlo));
                }
            }
            span *= 1.6;
        }
        Err(Error::Numerical(format!(
            "no actuation value reaches tip angle {tip_angle} rad"
        )))
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two serial segments plus the fixed distal bending-plane offset `δ₂`.
#[derive(Debug, Clone)]
pub struct CatheterModel {
    pub proximal: SegmentModel,
    pub distal: SegmentModel,
    delta2: f64,
}

impl CatheterModel {
    pub fn new(proximal: SegmentModel, distal: SegmentModel, delta2: f64) -> Result<Self> {
        if !delta2.is_finite() {
            return Err(Error::Validation("delta2 must be finite".into()));
        }
        Ok(Self {
            proximal,
            distal,
            delta2: wrap_angle(delta2),
        })
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn total_length(&self) -> f64 {
        self.proximal.length + self.distal.length
    }

    pub fn segment(&self, index: SegmentIndex) -> &SegmentModel {
        match index {
            SegmentIndex::Proximal => &self.proximal,
            SegmentIndex::Distal => &self.distal,
        }
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::parse(source_name, e.to_string()))?;
        file.into_model(source_name)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Canonical file form. Only polynomial bases can be written out.
    pub fn to_file(&self) -> Result<ModelFile> {
        Ok(ModelFile {
            delta2: self.delta2,
            proximal: SegmentFile::from_segment(&self.proximal)?,
            distal: SegmentFile::from_segment(&self.distal)?,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.to_file()?)
            .map_err(|e| Error::Numerical(format!("model serialization failed: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentIndex {
    Proximal,
    Distal,
}

impl SegmentIndex {
    pub fn as_str(&self) -> &'static str {
        match self {
            SegmentIndex::Proximal => "proximal",
            SegmentIndex::Distal => "distal",
        }
    }
}

/// Actuation values. `q_r` and `delta_l` in rad, `q_p` and `q_d` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub q_r: f64,
    pub q_p: f64,
    pub q_d: f64,
    /// Torsional loss between commanded and actual proximal bending plane.
    #[serde(default, rename = "delta_L")]
    pub delta_l: f64,
}

impl JointState {
    pub fn new(q_r: f64, q_p: f64, q_d: f64, delta_l: f64) -> Self {
        Self {
            q_r,
            q_p,
            q_d,
            delta_l: wrap_angle(delta_l),
        }
    }

    /// Proximal bending-plane angle `δ₁ = q_r + δ_L`, wrapped.
    pub fn delta1(&self) -> f64 {
        wrap_angle(self.q_r + self.delta_l)
    }

    pub fn with_delta_l(self, delta_l: f64) -> Self {
        Self::new(self.q_r, self.q_p, self.q_d, delta_l)
    }

    /// Joints after moving at constant `rates` for `dt` seconds.
    pub fn advanced(&self, rates: &JointRates, dt: f64) -> Self {
        Self {
            q_r: self.q_r + rates.qdot_r * dt,
            q_p: self.q_p + rates.qdot_p * dt,
            q_d: self.q_d + rates.qdot_d * dt,
            delta_l: self.delta_l,
        }
    }
}

/// Joint velocities. The distal plane rate and the torsional-loss rate are
/// zero by construction and therefore not stored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointRates {
    pub qdot_r: f64,
    pub qdot_p: f64,
    pub qdot_d: f64,
}

impl JointRates {
    pub fn new(qdot_r: f64, qdot_p: f64, qdot_d: f64) -> Self {
        Self {
            qdot_r,
            qdot_p,
            qdot_d,
        }
    }
}

/// TOML schema of a catheter model file.
///
/// ```toml
/// delta2 = 0.6                  # rad
///
/// [proximal]
/// length = 13.0                 # mm
/// fixture = "constant-curvature"
/// curvature_gain = 0.02         # rad / mm²
///
/// [distal]
/// length = 16.0
/// basis = [2, 2]                # n arc terms, m actuation terms
/// shape_matrix = [1.5707963267948966, 0.0, 0.0, -0.02]   # row-major n×m
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub delta2: f64,
    pub proximal: SegmentFile,
    pub distal: SegmentFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_matrix: Option<Vec<f64>>,
}

impl SegmentFile {
    fn from_segment(segment: &SegmentModel) -> Result<Self> {
        if !segment.basis.is_polynomial() {
            return Err(Error::Validation(
                "only polynomial bases have a file representation".into(),
            ));
        }
        let a = &segment.shape_matrix;
        let row_major = (0..a.nrows())
            .flat_map(|i| (0..a.ncols()).map(move |j| a[(i, j)]))
            .collect();
        Ok(Self {
            length: segment.length,
            fixture: None,
            curvature_gain: None,
            basis: Some([a.nrows(), a.ncols()]),
            shape_matrix: Some(row_major),
        })
    }

    fn into_segment(self, source: &str, name: &str) -> Result<SegmentModel> {
        let field_err = |field: &str, msg: String| Error::parse(source, format!("{name}.{field}: {msg}"));
        match self.fixture.as_deref() {
            Some("constant-curvature") => {
                if self.basis.is_some() || self.shape_matrix.is_some() {
                    return Err(field_err(
                        "fixture",
                        "constant-curvature fixture excludes basis/shape_matrix".into(),
                    ));
                }
                let c = self.curvature_gain.ok_or_else(|| {
                    field_err("curvature_gain", "required by the constant-curvature fixture".into())
                })?;
                SegmentModel::constant_curvature(self.length, c)
                    .map_err(|e| field_err("length", e.to_string()))
            }
            Some(other) => Err(field_err("fixture", format!("unknown fixture '{other}'"))),
            None => {
                let [n, m] = self
                    .basis
                    .ok_or_else(|| field_err("basis", "missing (expected [n, m])".into()))?;
                let values = self
                    .shape_matrix
                    .ok_or_else(|| field_err("shape_matrix", "missing".into()))?;
                if n == 0 || m == 0 || values.len() != n * m {
                    return Err(field_err(
                        "shape_matrix",
                        format!("expected {} values for a {n}x{m} matrix, got {}", n * m, values.len()),
                    ));
                }
                let basis = ModalBasis::polynomial(n, m)?;
                SegmentModel::new(self.length, DMatrix::from_row_slice(n, m, &values), basis)
                    .map_err(|e| field_err("shape_matrix", e.to_string()))
            }
        }
    }
}

impl ModelFile {
    pub fn into_model(self, source: &str) -> Result<CatheterModel> {
        let proximal = self.proximal.into_segment(source, "proximal")?;
        let distal = self.distal.into_segment(source, "distal")?;
        if !self.delta2.is_finite() {
            return Err(Error::parse(source, "delta2: must be finite"));
        }
        CatheterModel::new(proximal, distal, self.delta2)
    }
}
