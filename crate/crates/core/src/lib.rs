//! # slungload
//!
//! Planning and closed-loop simulation of a quadrotor carrying a cable-suspended
//! payload through fields of static and moving obstacles.
//!
//! The cable is modelled as a chain of rigid massive links with the payload as
//! the last link mass. A virtual leader driven by an improved artificial
//! potential field plans the path, a sliding-mode position loop tracks the
//! leader, and a PID loop stabilises attitude. The six potential-field gains
//! are tuned offline with particle swarm optimization (classic, time-varying
//! inertia weight, or self-adaptive coefficients) against a time-weighted
//! tracking-error integral.
//!
//! ## Modules
//!
//! - [`world`]: obstacles, scenarios, the scenario file format and disturbances
//! - [`dynamics`]: Euler-Lagrange quadrotor and multi-link payload model, RK4 stepping
//! - [`apf`]: attractive/repulsive fields and the virtual leader
//! - [`control`]: sliding-mode position law, thrust/attitude extraction, attitude PID
//! - [`pso`]: particle swarm engine with the three coefficient schedules
//! - [`sim`]: rollout engine, fitness functional and gain tuning
//! - [`presets`]: the bundled reference mission

pub mod apf;
pub mod control;
pub mod dynamics;
pub mod presets;
pub mod pso;
pub mod sim;
pub mod world;

use nalgebra::{Matrix3, Vector3};

/// 3D vector type.
pub type Vec3 = Vector3<f64>;

/// 3x3 matrix type.
pub type Mat3 = Matrix3<f64>;

/// Gravitational acceleration [m/s²].
pub const GRAVITY: f64 = 9.81;

/// Unit vector along gravity. Axes are NED-style: altitude grows towards -z.
pub fn e3() -> Vec3 {
    Vec3::z()
}

pub use apf::{ApfGains, LeaderState};
pub use control::{PidGains, SmcGains};
pub use dynamics::{Fault, ModelParams, SystemState, WrenchInput};
pub use pso::{OptimizationResult, SwarmConfig, Variant};
pub use sim::{FitnessReport, RolloutLog, Termination};
pub use world::{DisturbanceSpec, Mission, Obstacle, Scenario, Shape};

/// Errors surfaced by configuration and input handling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The scenario text could not be parsed.
    #[error("scenario parse error: {0}")]
    Parse(String),
    /// A value parsed but violates an invariant.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    /// The simulation hit a numerical or physical fault.
    #[error("simulation fault: {0}")]
    Fault(#[from] Fault),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
