//! Command implementations behind the `catheter-biplane` binary.
//!
//! Angles given on the command line (`--joints`, `--rates`) and printed in
//! reports are degrees; every file format stores radians.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::biplane::{velocity_from_observations, ImagingSetup, MarkerId, ObservationLog};
use crate::error::{Error, Result};
use crate::estimation::{estimate, ConditionFlag, Estimator, EstimatorInput, SolverSettings};
use crate::kinematics::{full_jacobian, CatheterShape, MarkerSpec};
use crate::model::{CatheterModel, JointRates, JointState};
use crate::quadrature::Quadrature;
use crate::studies::{run_study, StudyDescriptor};

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const VALIDATION: i32 = 4;
    pub const DEGENERATE: i32 = 5;
    pub const NUMERICAL: i32 = 6;
    pub const IO: i32 = 7;
    /// The estimate succeeded but is near-straight or ambiguous.
    pub const ADVISORY: i32 = 8;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } => exit::PARSE,
        Error::Validation(_) | Error::Domain(_) | Error::InsufficientData(_) | Error::MissingObservation(_) => {
            exit::VALIDATION
        }
        Error::DegenerateGeometry { .. } => exit::DEGENERATE,
        Error::Numerical(_) => exit::NUMERICAL,
        Error::Io { .. } => exit::IO,
    }
}

#[derive(Debug, Parser)]
#[command(name = "catheter-biplane", version, about = "Catheter kinematics and bi-plane bending-plane estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tip pose of the full catheter.
    Fk(KinematicsArgs),
    /// Combined 6x4 Jacobian, columns q_p, q_r, q_d, δ2.
    Jacobian(KinematicsArgs),
    /// Base-relative 3D positions of every logged marker.
    Reconstruct(ReconstructArgs),
    /// Estimate the torsional loss δ_L from an observation log.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study descriptor.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct KinematicsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// q_r[deg],q_p,q_d[,δ_L[deg]]
    #[arg(long, allow_hyphen_values = true, value_parser = parse_joints)]
    pub joints: JointState,
    #[arg(long)]
    pub quad_nodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub setup: PathBuf,
    #[arg(long)]
    pub obs: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub setup: PathBuf,
    #[arg(long)]
    pub obs: PathBuf,
    /// Joint readings at the latest frame: q_r[deg],q_p,q_d
    #[arg(long, allow_hyphen_values = true, value_parser = parse_joints)]
    pub joints: JointState,
    /// qdot_r[deg/s],qdot_p,qdot_d; enables the tip-velocity estimator
    #[arg(long, allow_hyphen_values = true, value_parser = parse_rates)]
    pub rates: Option<JointRates>,
    /// tip-position, body-positions, tip-velocity or all
    #[arg(long, default_value = "all")]
    pub which: String,
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    #[arg(long)]
    pub grid_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub descriptor: PathBuf,
    /// Output directory for summary.csv, trials.csv and summary.json
    #[arg(long, default_value = "study-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    #[arg(long)]
    pub grid_count: Option<usize>,
}

fn parse_numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect()
}

fn parse_joints(s: &str) -> std::result::Result<JointState, String> {
    match *parse_numbers(s)?.as_slice() {
        [r, p, d] => Ok(JointState::new(r.to_radians(), p, d, 0.0)),
        [r, p, d, l] => Ok(JointState::new(r.to_radians(), p, d, l.to_radians())),
        _ => Err("expected q_r,q_p,q_d[,delta_L]".into()),
    }
}

fn parse_rates(s: &str) -> std::result::Result<JointRates, String> {
    match parse_numbers(s)?.as_slice() {
        &[r, p, d] => Ok(JointRates::new(r.to_radians(), p, d)),
        _ => Err("expected qdot_r,qdot_p,qdot_d".into()),
    }
}

fn quadrature(nodes: Option<usize>) -> Result<Quadrature> {
    match nodes {
        Some(n) => Quadrature::gauss_legendre(n),
        None => Ok(Quadrature::default()),
    }
}

fn cmd_fk(args: &KinematicsArgs, out: &mut dyn Write) -> Result<i32> {
    let model = CatheterModel::load(&args.model)?;
    let quad = quadrature(args.quad_nodes)?;
    let shape = CatheterShape::compute(&model, &args.joints, &quad);
    let frames = shape.frames(args.joints.delta1());
    let p = frames.tip.position;
    let r = frames.tip.rotation;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "position_mm {:.9} {:.9} {:.9}", p.x, p.y, p.z).map_err(io)?;
    for i in 0..3 {
        writeln!(out, "rotation    {:.9} {:.9} {:.9}", r[(i, 0)], r[(i, 1)], r[(i, 2)]).map_err(io)?;
    }
    Ok(exit::OK)
}

fn cmd_jacobian(args: &KinematicsArgs, out: &mut dyn Write) -> Result<i32> {
    let model = CatheterModel::load(&args.model)?;
    let quad = quadrature(args.quad_nodes)?;
    let j = full_jacobian(&model, &args.joints, &quad);
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "# columns: q_p q_r q_d delta2; rows: vx vy vz wx wy wz").map_err(io)?;
    for i in 0..6 {
        let row: Vec<String> = (0..4).map(|k| format!("{:.9}", j[(i, k)])).collect();
        writeln!(out, "{}", row.join(" ")).map_err(io)?;
    }
    Ok(exit::OK)
}

fn cmd_reconstruct(args: &ReconstructArgs, out: &mut dyn Write) -> Result<i32> {
    let setup = ImagingSetup::load(&args.setup)?;
    let log = ObservationLog::load(&args.obs)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "time_s,marker_id,x_mm,y_mm,z_mm").map_err(io)?;
    for frame in &log.frames {
        let markers = frame
            .points
            .keys()
            .map(|(m, _)| *m)
            .filter(|m| *m != MarkerId::Base)
            .collect::<std::collections::BTreeSet<_>>();
        for marker in markers {
            let x = frame.reconstruct(&setup, marker)?;
            writeln!(out, "{},{},{:.9},{:.9},{:.9}", frame.time, marker, x.x, x.y, x.z).map_err(io)?;
        }
    }
    Ok(exit::OK)
}

fn marker_spec(id: MarkerId) -> Option<MarkerSpec> {
    match id {
        MarkerId::Body { segment, .. } => Some(MarkerSpec::new(segment, id.arc_length_mm()?)),
        _ => None,
    }
}

/// Builds the estimator input from the latest frame of `log`, plus the tip
/// velocity differenced over the whole tip track when rates are given.
pub fn estimator_input_from_log(
    model: CatheterModel,
    setup: &ImagingSetup,
    log: &ObservationLog,
    joints: JointState,
    rates: Option<JointRates>,
    quad: Quadrature,
) -> Result<EstimatorInput> {
    let frame = log.latest()?;
    let mut input = EstimatorInput::new(model, joints).with_quadrature(quad);
    let has_tip = frame.points.keys().any(|(m, _)| *m == MarkerId::Tip);
    if has_tip {
        input = input.with_tip(frame.reconstruct(setup, MarkerId::Tip)?);
    }
    let body = frame.body_markers();
    if !body.is_empty() {
        let specs = body.iter().filter_map(|m| marker_spec(*m)).collect();
        let positions = body.iter().map(|m| frame.reconstruct(setup, *m)).collect::<Result<Vec<_>>>()?;
        input = input.with_body_points(specs, positions)?;
    }
    if let (Some(rates), true) = (rates, has_tip) {
        let track = log.track(setup, MarkerId::Tip)?;
        if track.len() >= 2 {
            input = input.with_tip_velocity(velocity_from_observations(&track)?, rates);
        }
    }
    Ok(input)
}

fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<i32> {
    let model = CatheterModel::load(&args.model)?;
    let setup = ImagingSetup::load(&args.setup)?;
    let log = ObservationLog::load(&args.obs)?;
    let mut settings = SolverSettings::default();
    if let Some(n) = args.grid_count {
        settings.grid_count = n;
    }
    let input = estimator_input_from_log(model, &setup, &log, args.joints, args.rates, quadrature(args.quad_nodes)?)?;

    let selected: Vec<Estimator> = if args.which == "all" {
        Estimator::ALL.iter().copied().filter(|e| input.supports(*e)).collect()
    } else {
        vec![args.which.parse().map_err(Error::Validation)?]
    };
    if selected.is_empty() {
        return Err(Error::MissingObservation("the log supports no estimator".into()));
    }

    let io = |e| Error::io("<stdout>", e);
    let mut code = exit::OK;
    for which in selected {
        let result = estimate(&input, which, &settings)?;
        let candidates: Vec<String> = result
            .candidates
            .iter()
            .map(|c| format!("{:.6}:{:.6e}", c.angle.to_degrees(), c.residual))
            .collect();
        writeln!(
            out,
            "{which}: delta_L = {:.6} deg, residual = {:.6e}, flag = {}, candidates = [{}]",
            result.delta_l_star.to_degrees(),
            result.residual,
            result.condition_flag,
            candidates.join(", ")
        )
        .map_err(io)?;
        if result.condition_flag != ConditionFlag::WellPosed {
            code = exit::ADVISORY;
        }
    }
    Ok(code)
}

fn cmd_study(args: &StudyArgs, out: &mut dyn Write) -> Result<i32> {
    let mut desc = StudyDescriptor::load(&args.descriptor)?;
    if let Some(seed) = args.seed {
        desc.seed = seed;
    }
    if let Some(n) = args.quad_nodes {
        desc.quadrature = Quadrature::gauss_legendre(n)?;
    }
    if let Some(n) = args.grid_count {
        desc.settings.grid_count = n;
    }
    let result = run_study(&desc)?;
    result.write_to_dir(&args.out)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "{:>5} {:>8} {:>8} {:>8} {:>8} {:<15} {:>9} {:>9} {:>9}", "cell", "sigma", "defl", "q_p", "q_d", "estimator", "mean_deg", "rms_deg", "max_deg").map_err(io)?;
    for c in &result.cells {
        writeln!(
            out,
            "{:>5} {:>8.3} {:>8.3} {:>8.4} {:>8.4} {:<15} {:>9.4} {:>9.4} {:>9.4}",
            c.coords.index,
            c.coords.sigma_mm,
            c.coords.deflection_mm,
            c.coords.q_p,
            c.coords.q_d,
            c.estimator.as_str(),
            c.mean_deg,
            c.rms_deg,
            c.max_deg
        )
        .map_err(io)?;
    }
    writeln!(out, "wrote {}", args.out.display()).map_err(io)?;
    Ok(exit::OK)
}

pub fn run_command(command: &Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Fk(a) => cmd_fk(a, out),
        Command::Jacobian(a) => cmd_jacobian(a, out),
        Command::Reconstruct(a) => cmd_reconstruct(a, out),
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Study(a) => cmd_study(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run_command(&cli.command, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
