//! Bending-plane estimation for a two-segment steerable catheter under
//! bi-plane imaging.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] and [`quadrature`]: modal shape representation `θ(s, q) = ψ(s)ᵀ A η(q)`
//!   and the Gauss–Legendre rules used for every backbone integral.
//! * [`kinematics`]: segment and full direct kinematics, segment and combined
//!   Jacobians, twists and backbone marker positions.
//! * [`biplane`]: orthographic front/side projection, noisy segmentation and
//!   pseudo-inverse reconstruction of base-relative positions and velocities.
//! * [`estimation`]: tip-position, body-positions and tip-velocity
//!   least-squares estimators of the torsional loss `δ_L`.
//! * [`studies`]: seeded Monte Carlo noise, workspace and tip-deflection
//!   sweeps with CSV/JSON reporting.
//! * [`cli`]: the command implementations behind the `catheter-biplane` binary.
//!
//! Angles are radians and lengths millimetres throughout; human-facing
//! reports print degrees.

pub mod angle;
pub mod biplane;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod kinematics;
pub mod model;
pub mod quadrature;
pub mod studies;

pub use angle::{angular_error, wrap_angle};
pub use biplane::{
    observe, projection_matrix, reconstruct, velocity_from_observations, ImagingPlane, ImagingSetup,
    ObservationLog, ObservationPair, PlaneLabel, PlaneObservation, TimedPoint,
};
pub use error::{Error, Result};
pub use estimation::{
    estimate, objective_body_positions, objective_tip_position, objective_tip_velocity,
    ConditionFlag, EstimateResult, Estimator, EstimatorInput, SearchStrategy, SolverSettings,
};
pub use kinematics::{
    body_point_kinematics, full_direct_kinematics, full_instantaneous_kinematics, full_jacobian,
    horizontal_coordinate, segment_direct_kinematics, segment_jacobian, CatheterShape, MarkerSpec,
    Pose, Twist,
};
pub use model::{CatheterModel, JointRates, JointState, ModalBasis, SegmentIndex, SegmentModel};
pub use quadrature::{Quadrature, QuadratureScheme};
