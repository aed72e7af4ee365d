//! Orthographic bi-plane imaging: projection, noisy observation and 3D
//! reconstruction of base-relative positions from the front and side planes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SegmentIndex;

pub const DEFAULT_RANK_EPSILON: f64 = 1e-3;
const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneLabel {
    Front,
    Side,
}

impl fmt::Display for PlaneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlaneLabel::Front => "front",
            PlaneLabel::Side => "side",
        })
    }
}

impl FromStr for PlaneLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "front" => Ok(PlaneLabel::Front),
            "side" => Ok(PlaneLabel::Side),
            other => Err(format!("unknown plane label '{other}'")),
        }
    }
}

/// An image plane: unit normal and plane-to-world rotation whose third
/// column is the normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingPlane {
    normal: Vector3<f64>,
    rotation_to_world: Matrix3<f64>,
    label: PlaneLabel,
}

impl ImagingPlane {
    pub fn new(normal: Vector3<f64>, rotation_to_world: Matrix3<f64>, label: PlaneLabel) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "{label} plane normal is not unit length (norm {})",
                normal.norm()
            )));
        }
        let r = rotation_to_world;
        if (r.transpose() * r - Matrix3::identity()).norm() > 1e-9 || r.determinant() <= 0.0 {
            return Err(Error::Validation(format!("{label} plane rotation is not a rotation")));
        }
        if (r.column(2) - normal).norm() > 1e-9 {
            return Err(Error::Validation(format!(
                "{label} plane rotation third column does not match its normal"
            )));
        }
        Ok(Self {
            normal,
            rotation_to_world,
            label,
        })
    }

    /// Builds a right-handed plane frame around `normal` (normalized here).
    pub fn from_normal(normal: Vector3<f64>, label: PlaneLabel) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Validation(format!("{label} plane normal is zero")))?;
        // in-plane u axis: world z projected into the plane when possible
        let seed = if n.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        let u = (seed - n * n.dot(&seed)).normalize();
        let v = n.cross(&u);
        Self::new(n, Matrix3::from_columns(&[u, v, n]), label)
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn rotation_to_world(&self) -> Matrix3<f64> {
        self.rotation_to_world
    }

    pub fn label(&self) -> PlaneLabel {
        self.label
    }

    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Result<Self> {
        Self::new(rotation * self.normal, rotation * self.rotation_to_world, self.label)
    }
}

/// `P = I − n̂ n̂ᵀ`.
pub fn projection_matrix(plane: &ImagingPlane) -> Matrix3<f64> {
    Matrix3::identity() - plane.normal * plane.normal.transpose()
}

/// A segmented point in a plane's local frame (third component zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneObservation {
    pub point_in_plane: Vector3<f64>,
    pub timestamp: f64,
}

impl PlaneObservation {
    pub fn new(u: f64, v: f64, timestamp: f64) -> Self {
        Self {
            point_in_plane: Vector3::new(u, v, 0.0),
            timestamp,
        }
    }
}

/// Orthographic view of `world_point` with isotropic Gaussian noise of
/// `noise_sigma` (mm) on both in-plane axes.
pub fn observe<R: Rng + ?Sized>(
    plane: &ImagingPlane,
    world_point: &Vector3<f64>,
    noise_sigma: f64,
    timestamp: f64,
    rng: &mut R,
) -> Result<PlaneObservation> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Domain(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut local = plane.rotation_to_world.transpose() * (projection_matrix(plane) * world_point);
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma validated above");
        local.x += normal.sample(rng);
        local.y += normal.sample(rng);
    }
    local.z = 0.0;
    Ok(PlaneObservation {
        point_in_plane: local,
        timestamp,
    })
}

/// Base and tracked-point observations in one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationPair {
    pub base: PlaneObservation,
    pub point: PlaneObservation,
}

impl ObservationPair {
    pub fn new(base: PlaneObservation, point: PlaneObservation) -> Self {
        Self { base, point }
    }
}

/// The front (AP) and side (lateral) imaging planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingSetup {
    pub front: ImagingPlane,
    pub side: ImagingPlane,
    pub rank_epsilon: f64,
}

/// Outcome of a reconstruction, with the pseudo-inverse diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub position: Vector3<f64>,
    pub smallest_singular_value: f64,
    /// Norm of the stacked-system residual `A x − b`.
    pub residual: f64,
}

impl ImagingSetup {
    pub fn new(front: ImagingPlane, side: ImagingPlane) -> Self {
        Self {
            front,
            side,
            rank_epsilon: DEFAULT_RANK_EPSILON,
        }
    }

    pub fn with_rank_epsilon(mut self, rank_epsilon: f64) -> Self {
        self.rank_epsilon = rank_epsilon;
        self
    }

    /// `‖n̂_f × n̂_s‖`
    pub fn plane_separation(&self) -> f64 {
        self.front.normal.cross(&self.side.normal).norm()
    }

    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Result<Self> {
        Ok(Self {
            front: self.front.rotated(rotation)?,
            side: self.side.rotated(rotation)?,
            rank_epsilon: self.rank_epsilon,
        })
    }

    pub fn plane(&self, label: PlaneLabel) -> &ImagingPlane {
        match label {
            PlaneLabel::Front => &self.front,
            PlaneLabel::Side => &self.side,
        }
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let file: SetupFile =
            toml::from_str(text).map_err(|e| Error::parse(source_name, e.to_string()))?;
        let plane = |entry: PlaneEntry, label: PlaneLabel| {
            let normal = Vector3::from(entry.normal);
            let rotation = Matrix3::from_row_slice(&entry.rotation);
            ImagingPlane::new(normal, rotation, label)
                .map_err(|e| Error::parse(source_name, format!("{label}: {e}")))
        };
        let setup = Self::new(plane(file.front, PlaneLabel::Front)?, plane(file.side, PlaneLabel::Side)?);
        Ok(match file.rank_epsilon {
            Some(eps) if eps > 0.0 => setup.with_rank_epsilon(eps),
            Some(eps) => return Err(Error::parse(source_name, format!("rank_epsilon: must be > 0, got {eps}"))),
            None => setup,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        let entry = |p: &ImagingPlane| PlaneEntry {
            normal: p.normal.into(),
            rotation: {
                let r = p.rotation_to_world;
                [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]]
            },
        };
        let file = SetupFile {
            front: entry(&self.front),
            side: entry(&self.side),
            rank_epsilon: Some(self.rank_epsilon),
        };
        toml::to_string(&file).expect("setup file serializes")
    }

    /// Least-squares base-relative position from one observation pair per
    /// plane, via the SVD pseudo-inverse of the stacked projectors.
    pub fn reconstruct_detailed(
        &self,
        front: &ObservationPair,
        side: &ObservationPair,
    ) -> Result<Reconstruction> {
        let p_f = projection_matrix(&self.front);
        let p_s = projection_matrix(&self.side);
        let mut stacked = SMatrix::<f64, 6, 3>::zeros();
        stacked.fixed_view_mut::<3, 3>(0, 0).copy_from(&p_f);
        stacked.fixed_view_mut::<3, 3>(3, 0).copy_from(&p_s);

        let svd = stacked.svd(true, true);
        let smallest = svd.singular_values.min();
        if self.plane_separation() < self.rank_epsilon {
            return Err(Error::DegenerateGeometry {
                smallest_singular_value: smallest,
            });
        }

        let front_rel = front.point.point_in_plane - front.base.point_in_plane;
        let side_rel = side.point.point_in_plane - side.base.point_in_plane;
        let mut rhs = SVector::<f64, 6>::zeros();
        rhs.fixed_rows_mut::<3>(0)
            .copy_from(&(self.front.rotation_to_world * front_rel));
        rhs.fixed_rows_mut::<3>(3)
            .copy_from(&(self.side.rotation_to_world * side_rel));

        let cutoff = PSEUDO_INVERSE_CUTOFF * svd.singular_values.max();
        let position = svd
            .solve(&rhs, cutoff)
            .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
        let residual = (stacked * position - rhs).norm();
        Ok(Reconstruction {
            position,
            smallest_singular_value: smallest,
            residual,
        })
    }

    pub fn reconstruct(&self, front: &ObservationPair, side: &ObservationPair) -> Result<Vector3<f64>> {
        Ok(self.reconstruct_detailed(front, side)?.position)
    }
}

/// Free-function form of [`ImagingSetup::reconstruct`].
pub fn reconstruct(
    setup: &ImagingSetup,
    front: &ObservationPair,
    side: &ObservationPair,
) -> Result<Vector3<f64>> {
    setup.reconstruct(front, side)
}

/// TOML schema of an imaging setup file. Rotations are row-major
/// plane-to-world matrices.
///
/// ```toml
/// rank_epsilon = 1e-3
///
/// [front]
/// normal = [0.0, 1.0, 0.0]
/// rotation = [0.0, 1.0, 0.0,  0.0, 0.0, 1.0,  1.0, 0.0, 0.0]
///
/// [side]
/// normal = [1.0, 0.0, 0.0]
/// rotation = [0.0, 0.0, 1.0,  1.0, 0.0, 0.0,  0.0, 1.0, 0.0]
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupFile {
    pub front: PlaneEntry,
    pub side: PlaneEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneEntry {
    pub normal: [f64; 3],
    pub rotation: [f64; 9],
}

/// A point with the time it was reconstructed at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub time: f64,
    pub position: Vector3<f64>,
}

impl TimedPoint {
    pub fn new(time: f64, position: Vector3<f64>) -> Self {
        Self { time, position }
    }
}

fn check_history(history: &[TimedPoint]) -> Result<()> {
    if history.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "velocity needs at least 2 samples, got {}",
            history.len()
        )));
    }
    if history.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::Domain("timestamps must be strictly increasing".into()));
    }
    Ok(())
}

/// Three-point derivative at `history[at]` using samples `i0 < i1 < i2`,
/// exact for quadratics on non-uniform spacing.
fn three_point(history: &[TimedPoint], [i0, i1, i2]: [usize; 3], at: usize) -> Vector3<f64> {
    let (t0, t1, t2) = (history[i0].time, history[i1].time, history[i2].time);
    let t = history[at].time;
    let c0 = (2.0 * t - t1 - t2) / ((t0 - t1) * (t0 - t2));
    let c1 = (2.0 * t - t0 - t2) / ((t1 - t0) * (t1 - t2));
    let c2 = (2.0 * t - t0 - t1) / ((t2 - t0) * (t2 - t1));
    history[i0].position * c0 + history[i1].position * c1 + history[i2].position * c2
}

/// Finite-difference velocity at every sample: central in the interior,
/// one-sided at the ends (second order once three samples exist).
pub fn velocity_series(history: &[TimedPoint]) -> Result<Vec<Vector3<f64>>> {
    check_history(history)?;
    let n = history.len();
    if n == 2 {
        let v = (history[1].position - history[0].position) / (history[1].time - history[0].time);
        return Ok(vec![v, v]);
    }
    Ok((0..n)
        .map(|k| match k {
            0 => three_point(history, [0, 1, 2], 0),
            k if k == n - 1 => three_point(history, [n - 3, n - 2, n - 1], k),
            k => three_point(history, [k - 1, k, k + 1], k),
        })
        .collect())
}

/// Most recent velocity estimate (mm/s) from time-ordered reconstructions.
///
/// With exactly two samples this is the chord slope, i.e. the central
/// difference at their midpoint time.
pub fn velocity_from_observations(history: &[TimedPoint]) -> Result<Vector3<f64>> {
    Ok(*velocity_series(history)?.last().expect("non-empty"))
}

/// Which point a logged observation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MarkerId {
    Base,
    Tip,
    /// A backbone marker, arc length stored in micrometres to stay hashable.
    Body { segment: SegmentIndex, arc_length_um: i64 },
}

impl MarkerId {
    pub fn body(segment: SegmentIndex, arc_length_mm: f64) -> Self {
        MarkerId::Body {
            segment,
            arc_length_um: (arc_length_mm * 1000.0).round() as i64,
        }
    }

    pub fn arc_length_mm(&self) -> Option<f64> {
        match self {
            MarkerId::Body { arc_length_um, .. } => Some(*arc_length_um as f64 / 1000.0),
            _ => None,
        }
    }
}

impl fmt::Display for MarkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkerId::Base => f.write_str("base"),
            MarkerId::Tip => f.write_str("tip"),
            MarkerId::Body { segment, .. } => {
                write!(f, "{}:{}", segment.as_str(), self.arc_length_mm().unwrap())
            }
        }
    }
}

impl FromStr for MarkerId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "base" => Ok(MarkerId::Base),
            "tip" => Ok(MarkerId::Tip),
            other => {
                let (segment, arc) = other
                    .split_once(':')
                    .ok_or_else(|| format!("unknown marker id '{other}'"))?;
                let segment = match segment {
                    "proximal" => SegmentIndex::Proximal,
                    "distal" => SegmentIndex::Distal,
                    seg => return Err(format!("unknown segment '{seg}' in marker id")),
                };
                let arc: f64 = arc
                    .parse()
                    .map_err(|_| format!("bad arc length '{arc}' in marker id"))?;
                if !arc.is_finite() {
                    return Err(format!("bad arc length '{arc}' in marker id"));
                }
                Ok(MarkerId::body(segment, arc))
            }
        }
    }
}

/// One row of an observation log CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub time_s: f64,
    pub plane_label: String,
    pub u_mm: f64,
    pub v_mm: f64,
    pub marker_id: String,
}

/// All observations at a single timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationFrame {
    pub time: f64,
    pub points: BTreeMap<(MarkerId, PlaneLabel), PlaneObservation>,
}

impl ObservationFrame {
    fn pair(&self, marker: MarkerId, plane: PlaneLabel) -> Result<ObservationPair> {
        let get = |m: MarkerId| {
            self.points.get(&(m, plane)).copied().ok_or_else(|| {
                Error::MissingObservation(format!("no {plane} observation of '{m}' at t = {}", self.time))
            })
        };
        Ok(ObservationPair::new(get(MarkerId::Base)?, get(marker)?))
    }

    pub fn reconstruct(&self, setup: &ImagingSetup, marker: MarkerId) -> Result<Vector3<f64>> {
        setup.reconstruct(&self.pair(marker, PlaneLabel::Front)?, &self.pair(marker, PlaneLabel::Side)?)
    }

    /// Distinct body markers present in both planes.
    pub fn body_markers(&self) -> Vec<MarkerId> {
        let mut markers: Vec<MarkerId> = self
            .points
            .keys()
            .filter(|(m, p)| matches!(m, MarkerId::Body { .. }) && *p == PlaneLabel::Front)
            .map(|(m, _)| *m)
            .filter(|m| self.points.contains_key(&(*m, PlaneLabel::Side)))
            .collect();
        markers.dedup();
        markers
    }
}

/// A time-ordered observation log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationLog {
    pub frames: Vec<ObservationFrame>,
}

impl ObservationLog {
    pub fn from_records(records: impl IntoIterator<Item = ObservationRecord>, source: &str) -> Result<Self> {
        let mut rows: Vec<(f64, MarkerId, PlaneLabel, PlaneObservation)> = Vec::new();
        for (line, r) in records.into_iter().enumerate() {
            let at = |msg: String| Error::parse(source, format!("record {}: {msg}", line + 1));
            if !(r.time_s.is_finite() && r.u_mm.is_finite() && r.v_mm.is_finite()) {
                return Err(at("non-finite value".into()));
            }
            let plane: PlaneLabel = r.plane_label.parse().map_err(at)?;
            let marker: MarkerId = r.marker_id.parse().map_err(at)?;
            rows.push((r.time_s, marker, plane, PlaneObservation::new(r.u_mm, r.v_mm, r.time_s)));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut frames: Vec<ObservationFrame> = Vec::new();
        for (time, marker, plane, obs) in rows {
            if frames.last().is_none_or(|f| f.time != time) {
                frames.push(ObservationFrame {
                    time,
                    points: BTreeMap::new(),
                });
            }
            let frame = frames.last_mut().expect("pushed above");
            if frame.points.insert((marker, plane), obs).is_some() {
                return Err(Error::parse(
                    source,
                    format!("duplicate {plane} observation of '{marker}' at t = {time}"),
                ));
            }
        }
        Ok(Self { frames })
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let records = csv
            .deserialize::<ObservationRecord>()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| Error::parse(source, format!("row {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(records, source)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn to_records(&self) -> Vec<ObservationRecord> {
        self.frames
            .iter()
            .flat_map(|f| {
                f.points.iter().map(move |((marker, plane), obs)| ObservationRecord {
                    time_s: f.time,
                    plane_label: plane.to_string(),
                    u_mm: obs.point_in_plane.x,
                    v_mm: obs.point_in_plane.y,
                    marker_id: marker.to_string(),
                })
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        for record in self.to_records() {
            csv.serialize(record)
                .map_err(|e| Error::Numerical(format!("csv write failed: {e}")))?;
        }
        csv.flush().map_err(|e| Error::io("<observation log>", e))
    }

    pub fn latest(&self) -> Result<&ObservationFrame> {
        self.frames
            .last()
            .ok_or_else(|| Error::InsufficientData("observation log is empty".into()))
    }

    /// Reconstructed base-relative position of `marker` at every frame
    /// where it appears in both planes.
    pub fn track(&self, setup: &ImagingSetup, marker: MarkerId) -> Result<Vec<TimedPoint>> {
        self.frames
            .iter()
            .filter(|f| {
                f.points.contains_key(&(marker, PlaneLabel::Front))
                    && f.points.contains_key(&(marker, PlaneLabel::Side))
            })
            .map(|f| Ok(TimedPoint::new(f.time, f.reconstruct(setup, marker)?)))
            .collect()
    }
}
