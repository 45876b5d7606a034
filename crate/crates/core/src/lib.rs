//! Planning, estimation, and control toolkit for a thruster-actuated
//! 6-DOF free-flyer operating in microgravity, plus a deterministic
//! simulator for a three-segment payload-transport scenario.
//!
//! The stack is layered the way it runs on a robot:
//!
//! - [`dynamics`]: rigid-body model, RK4 discretization, LTV linearization,
//!   quadratic costs, quaternion utilities.
//! - [`world`]: keep-in volume, ellipsoidal obstacles, collision checking.
//! - [`global_planner`]: LQR-RRT* and guided kinodynamic RRT with LQR
//!   shortcut smoothing.
//! - [`estimator`]: recursive least-squares inertial parameter estimation
//!   with stream synchronization, chi-squared outlier gating, and per-axis
//!   acceleration scale calibration.
//! - [`info_planner`]: receding-horizon local planner blending tracking
//!   cost with a Fisher-information reward, with covariance-driven decay
//!   of the information weights.
//! - [`tube_control`]: robust tube MPC for the translational subsystem
//!   (disturbance sets, RPI tube, constraint tightening, ancillary
//!   feedback) and an attitude LQR loop.
//! - [`scenario_sim`]: tick-driven deterministic simulation of the
//!   assembly sequence, with telemetry output.

pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod global_planner;
pub mod info_planner;
pub mod scenario_sim;
pub mod trajectory;
pub mod tube_control;
pub mod world;

pub use dynamics::{InertialParams, QuadraticCost, State, Wrench, WrenchLimits};
pub use error::Error;
pub use trajectory::Trajectory;
pub use world::{Ellipsoid, WorldModel};
