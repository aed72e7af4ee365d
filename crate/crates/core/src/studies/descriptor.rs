use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biplane::ImagingSetup;
use crate::error::{Error, Result};
use crate::estimation::{is_near_straight, Estimator, SearchStrategy, SolverSettings};
use crate::kinematics::{CatheterShape, MarkerSpec};
use crate::model::{CatheterModel, JointRates, JointState, SegmentIndex};
use crate::quadrature::{Quadrature, DEFAULT_NODE_COUNT};

pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_VELOCITY_DT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    NoiseSweep,
    WorkspaceSweep,
    DeflectionSweep,
}

impl StudyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyKind::NoiseSweep => "noise-sweep",
            StudyKind::WorkspaceSweep => "workspace-sweep",
            StudyKind::DeflectionSweep => "deflection-sweep",
        }
    }
}

/// How a tip deflection of a given magnitude enters a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeflectionMode {
    /// The observed tip is displaced along the distal bending direction;
    /// the estimator's model is unperturbed. The offset is static, so the
    /// tip velocity is unaffected.
    TipOffset,
    /// The estimator's `(q_p, q_d)` are perturbed in a random direction
    /// until its modeled tip moves by the magnitude.
    JointNoise,
}

/// Configuration grid of a workspace sweep, radians or millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "parametrization")]
pub enum WorkspaceGrid {
    /// Tip angles `θ(L)` per segment; `π/2` is straight.
    TipAngles { proximal: Vec<f64>, distal: Vec<f64> },
    Joints { q_p: Vec<f64>, q_d: Vec<f64> },
}

/// Everything needed to run one study.
#[derive(Debug, Clone)]
pub struct StudyDescriptor {
    pub kind: StudyKind,
    pub model: CatheterModel,
    pub setup: ImagingSetup,
    /// Fixed configuration, and source of `q_r` / true `δ_L` in all studies.
    pub joints: JointState,
    /// Constant joint rates during the velocity observation window.
    pub rates: JointRates,
    pub workspace: Option<WorkspaceGrid>,
    pub sigmas: Vec<f64>,
    pub deflections: Vec<f64>,
    pub deflection_mode: DeflectionMode,
    pub trials: usize,
    pub estimators: Vec<Estimator>,
    pub markers: Vec<MarkerSpec>,
    /// Time between the two frames differenced for the velocity estimate.
    pub velocity_dt: f64,
    pub seed: u64,
    pub settings: SolverSettings,
    pub quadrature: Quadrature,
}

impl StudyDescriptor {
    /// Descriptor with default trials, estimators, markers (both segment
    /// tips), sigma 1 mm and zero deflection.
    pub fn new(kind: StudyKind, model: CatheterModel, setup: ImagingSetup, joints: JointState) -> Self {
        let markers = default_markers(&model);
        Self {
            kind,
            model,
            setup,
            joints,
            rates: JointRates::new(1.0, 1.0, 1.0),
            workspace: None,
            sigmas: vec![1.0],
            deflections: vec![0.0],
            deflection_mode: DeflectionMode::TipOffset,
            trials: DEFAULT_TRIALS,
            estimators: Estimator::ALL.to_vec(),
            markers,
            velocity_dt: DEFAULT_VELOCITY_DT,
            seed: 0,
            settings: SolverSettings::default(),
            quadrature: Quadrature::default(),
        }
    }

    /// Configurations the study visits, as joint states sharing `q_r` and `δ_L`.
    pub fn configurations(&self) -> Result<Vec<JointState>> {
        match (self.kind, &self.workspace) {
            (StudyKind::WorkspaceSweep, Some(WorkspaceGrid::TipAngles { proximal, distal })) => {
                let q_p = proximal
                    .iter()
                    .map(|&a| self.model.proximal.actuation_for_tip_angle(a))
                    .collect::<Result<Vec<_>>>()?;
                let q_d = distal
                    .iter()
                    .map(|&a| self.model.distal.actuation_for_tip_angle(a))
                    .collect::<Result<Vec<_>>>()?;
                Ok(self.joint_grid(&q_p, &q_d))
            }
            (StudyKind::WorkspaceSweep, Some(WorkspaceGrid::Joints { q_p, q_d })) => Ok(self.joint_grid(q_p, q_d)),
            (StudyKind::WorkspaceSweep, None) => {
                Err(Error::Validation("workspace sweep needs a [workspace] grid".into()))
            }
            _ => Ok(vec![self.joints]),
        }
    }

    fn joint_grid(&self, q_p: &[f64], q_d: &[f64]) -> Vec<JointState> {
        q_p.iter()
            .flat_map(|&p| q_d.iter().map(move |&d| (p, d)))
            .map(|(p, d)| JointState { q_p: p, q_d: d, ..self.joints })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.trials < 1 {
            return fail("trials must be >= 1".into());
        }
        if self.estimators.is_empty() {
            return fail("no estimator selected".into());
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return fail(format!("sigma grid must be non-empty, finite and >= 0: {:?}", self.sigmas));
        }
        if self.deflections.is_empty() || self.deflections.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return fail(format!("deflection grid must be non-empty, finite and >= 0: {:?}", self.deflections));
        }
        if let Some(d) = self.deflections.iter().find(|&&d| d > self.model.total_length()) {
            return fail(format!(
                "deflection {d} mm exceeds the catheter length {} mm",
                self.model.total_length()
            ));
        }
        if !(self.velocity_dt.is_finite() && self.velocity_dt > 0.0) {
            return fail(format!("velocity_dt must be > 0, got {}", self.velocity_dt));
        }
        if self.estimators.contains(&Estimator::BodyPositions) && self.markers.is_empty() {
            return fail("body-positions estimator needs at least one marker".into());
        }
        for m in &self.markers {
            self.model.segment(m.segment).check_arc_length(m.arc_length)?;
        }
        self.settings.validate()?;
        if let Some(grid) = &self.workspace {
            let (a, b) = match grid {
                WorkspaceGrid::TipAngles { proximal, distal } => (proximal, distal),
                WorkspaceGrid::Joints { q_p, q_d } => (q_p, q_d),
            };
            if a.is_empty() || b.is_empty() || a.iter().chain(b).any(|v| !v.is_finite()) {
                return fail("workspace grid must be non-empty and finite".into());
            }
        }
        if matches!(self.kind, StudyKind::NoiseSweep | StudyKind::DeflectionSweep) {
            let shape = CatheterShape::compute(&self.model, &self.joints, &self.quadrature);
            if is_near_straight(&shape, self.settings.straightness_threshold) {
                return fail(format!(
                    "{} needs a bent configuration; both segments are within {} rad of straight",
                    self.kind.as_str(),
                    self.settings.straightness_threshold
                ));
            }
        }
        Ok(())
    }

    /// Loads a descriptor; model and setup paths resolve relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &path.display().to_string(), &base)
    }

    pub fn from_toml_str(text: &str, source_name: &str, base_dir: &Path) -> Result<Self> {
        let file: DescriptorFile =
            toml::from_str(text).map_err(|e| Error::parse(source_name, e.to_string()))?;
        file.resolve(source_name, base_dir)
    }
}

pub fn default_markers(model: &CatheterModel) -> Vec<MarkerSpec> {
    vec![
        MarkerSpec::new(SegmentIndex::Proximal, model.proximal.length()),
        MarkerSpec::new(SegmentIndex::Distal, model.distal.length()),
    ]
}

/// TOML schema of a study descriptor.
///
/// ```toml
/// kind = "noise-sweep"          # noise-sweep | workspace-sweep | deflection-sweep
/// model = "catheter.toml"       # relative to this file
/// setup = "biplane.toml"
/// seed = 7
/// trials = 500
/// estimators = ["tip-position", "body-positions", "tip-velocity"]
/// sigmas = [0.25, 0.5, 1.0, 2.0]   # mm, or `sigma = 1.0`
/// deflections = [0.0, 2.0]         # mm, deflection sweep only
/// deflection_mode = "tip-offset"   # or "joint-noise"
/// velocity_dt = 0.5                # s
///
/// [joints]                         # rad / mm
/// q_r = 0.0
/// q_p = 2.5
/// q_d = 2.5
/// delta_L = 0.7
///
/// [rates]                          # rad/s, mm/s
/// qdot_r = 1.0
/// qdot_p = 1.0
/// qdot_d = 1.0
///
/// [[markers]]
/// segment = "proximal"
/// arc_length = 13.0
///
/// [workspace]                      # workspace sweep only
/// parametrization = "tip-angles"   # or "joints" with q_p / q_d lists
/// proximal = [1.5707963267948966, 1.0]
/// distal = [1.5707963267948966, 1.0]
///
/// [solver]
/// grid_count = 72
/// quad_nodes = 32
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorFile {
    pub kind: StudyKind,
    pub model: PathBuf,
    pub setup: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub estimators: Option<Vec<Estimator>>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default)]
    pub deflections: Option<Vec<f64>>,
    #[serde(default)]
    pub deflection_mode: Option<DeflectionMode>,
    #[serde(default)]
    pub velocity_dt: Option<f64>,
    pub joints: JointState,
    #[serde(default)]
    pub rates: Option<JointRates>,
    #[serde(default)]
    pub markers: Option<Vec<MarkerSpec>>,
    #[serde(default)]
    pub workspace: Option<WorkspaceGrid>,
    #[serde(default)]
    pub solver: Option<SolverSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub grid_count: Option<usize>,
    pub refine_tolerance: Option<f64>,
    pub max_refine_iters: Option<usize>,
    pub straightness_threshold: Option<f64>,
    /// Start a single local descent from this angle instead of the grid search.
    pub single_start: Option<f64>,
    pub quad_nodes: Option<usize>,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

impl DescriptorFile {
    fn resolve(self, source: &str, base_dir: &Path) -> Result<StudyDescriptor> {
        let model = CatheterModel::load(base_dir.join(&self.model))?;
        let setup = ImagingSetup::load(base_dir.join(&self.setup))?;
        let mut desc = StudyDescriptor::new(self.kind, model, setup, JointState::new(
            self.joints.q_r,
            self.joints.q_p,
            self.joints.q_d,
            self.joints.delta_l,
        ));
        desc.seed = self.seed;
        desc.trials = self.trials;
        if let Some(e) = self.estimators {
            desc.estimators = e;
        }
        desc.sigmas = match (self.sigma, self.sigmas) {
            (Some(_), Some(_)) => return Err(Error::parse(source, "give either sigma or sigmas, not both")),
            (Some(s), None) => vec![s],
            (None, Some(s)) => s,
            (None, None) => vec![1.0],
        };
        if let Some(d) = self.deflections {
            desc.deflections = d;
        }
        if let Some(mode) = self.deflection_mode {
            desc.deflection_mode = mode;
        }
        if let Some(dt) = self.velocity_dt {
            desc.velocity_dt = dt;
        }
        if let Some(r) = self.rates {
            desc.rates = r;
        }
        if let Some(m) = self.markers {
            desc.markers = m;
        }
        desc.workspace = self.workspace;
        if let Some(solver) = self.solver {
            let s = &mut desc.settings;
            s.grid_count = solver.grid_count.unwrap_or(s.grid_count);
            s.refine_tolerance = solver.refine_tolerance.unwrap_or(s.refine_tolerance);
            s.max_refine_iters = solver.max_refine_iters.unwrap_or(s.max_refine_iters);
            s.straightness_threshold = solver.straightness_threshold.unwrap_or(s.straightness_threshold);
            if let Some(guess) = solver.single_start {
                s.strategy = SearchStrategy::SingleStart { initial_guess: guess };
            }
            desc.quadrature = Quadrature::gauss_legendre(solver.quad_nodes.unwrap_or(DEFAULT_NODE_COUNT))?;
        }
        Ok(desc)
    }
}
