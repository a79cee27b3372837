//! Hierarchical controller: sliding-mode position loop, thrust and attitude
//! extraction, PID attitude loop.
//!
//! # Position law
//!
//! With tracking errors `e = r_p - r_q`, `e_v = v_p - v_q` and surface
//! `S = Λ e + e_v`, the closed loop `M_T r̈_q = U + Δ - F_p` gives
//!
//! ```text
//! Ṡ = Λ e_v + a_p - (U + Δ - F_p) / M_T
//! ```
//!
//! Imposing the reaching law `Ṡ = -μ ∘ sgn(S)` and moving the bounded
//! disturbance `Δ` and load effect `F_p` into the switching gain yields
//!
//! ```text
//! U = M_T (a_p + Λ ∘ e_v + μ ∘ sgn(S))
//! ```
//!
//! which reaches the surface whenever `μ > f_d + f_p` per axis, with both
//! bounds expressed per unit total mass. The
//! printed form of this law, `U = M{ḟ_p − Λe_v − f_d + r̈_p − M sgn(s)}`,
//! does not survive a sign check against the surface definition and is not
//! used. `sgn` is replaced by `sat(S / φ)` inside a boundary layer of width
//! `φ`; `φ = 0` restores the discontinuous switch.

use crate::apf::LeaderState;
use crate::dynamics::Fault;
use crate::{Error, Result, Vec3};

/// Maximum commanded roll/pitch.
pub const TILT_LIMIT: f64 = std::f64::consts::FRAC_PI_3;

/// Smallest force magnitude that still defines a thrust direction [N].
pub const MIN_FORCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcGains {
    /// `Λ`, surface slopes [1/s].
    pub slope: Vec3,
    /// `μ`, reaching gains [m/s²].
    pub reaching: Vec3,
    /// Boundary-layer width `φ`.
    pub boundary_layer: f64,
    /// `f_d`, bound on the force disturbance per unit total mass [m/s²].
    pub disturbance_bound: Vec3,
    /// `f_p`, bound on the unmodelled load force per unit total mass [m/s²].
    pub load_bound: Vec3,
}

impl SmcGains {
    /// `Λ = diag(0.04, 0.04, 0.8)`, `μ = diag(0.06, 0.06, 0.08)`.
    pub fn reference() -> Self {
        Self {
            slope: Vec3::new(0.04, 0.04, 0.8),
            reaching: Vec3::new(0.06, 0.06, 0.08),
            boundary_layer: 0.05,
            disturbance_bound: Vec3::zeros(),
            load_bound: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slope.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::invalid("smc.lambda", "slopes > 0"));
        }
        if self.reaching.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::invalid("smc.mu", "reaching gains > 0"));
        }
        if !(self.boundary_layer >= 0.0) {
            return Err(Error::invalid("smc.boundary_layer", "width >= 0"));
        }
        if self
            .disturbance_bound
            .iter()
            .chain(self.load_bound.iter())
            .any(|x| !(*x >= 0.0))
        {
            return Err(Error::invalid("smc.bounds", "bounds >= 0"));
        }
        Ok(())
    }

    /// Per-axis margin `η = μ - f_d - f_p`; reaching the surface needs `η > 0`.
    pub fn margin(&self) -> MarginReport {
        let margin = self.reaching - self.disturbance_bound - self.load_bound;
        let violated = [margin.x <= 0.0, margin.y <= 0.0, margin.z <= 0.0];
        MarginReport { margin, violated }
    }

    /// Evaluate [`Self::margin`] and log a warning for every failing axis.
    pub fn check_margin(&self) -> MarginReport {
        let report = self.margin();
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            if report.violated[axis] {
                log::warn!(
                    "sliding-mode reaching gain on {name} does not dominate the disturbance and load bounds (margin {:.4})",
                    report.margin[axis]
                );
            }
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    pub margin: Vec3,
    pub violated: [bool; 3],
}

impl MarginReport {
    pub fn is_valid(&self) -> bool {
        !self.violated.iter().any(|v| *v)
    }
}

/// `sgn` with `sgn(0) = 0`, or its saturation when `width > 0`.
pub fn switching(s: f64, width: f64) -> f64 {
    if width > 0.0 {
        (s / width).clamp(-1.0, 1.0)
    } else if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcOutput {
    /// Commanded world-frame force on top of gravity compensation [N].
    pub force: Vec3,
    /// Sliding variable `S`.
    pub surface: Vec3,
}

pub fn smc_force(
    leader: &LeaderState,
    position: &Vec3,
    velocity: &Vec3,
    gains: &SmcGains,
    total_mass: f64,
) -> SmcOutput {
    let e = leader.position - position;
    let ev = leader.velocity - velocity;
    let surface = gains.slope.component_mul(&e) + ev;
    let switch = surface.map(|s| switching(s, gains.boundary_layer));
    let force = (leader.acceleration + gains.slope.component_mul(&ev) + gains.reaching.component_mul(&switch))
        * total_mass;
    SmcOutput { force, surface }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    pub thrust: f64,
    /// Desired (roll, pitch, yaw).
    pub euler: Vec3,
    /// True when roll or pitch hit [`TILT_LIMIT`].
    pub saturated: bool,
}

/// Thrust magnitude and desired roll/pitch realising `force` on top of
/// gravity compensation: `-f R(φ, θ, ψ) e3 = force - M_T g e3`.
pub fn extract_thrust_attitude(force: &Vec3, total_mass: f64, gravity: f64, yaw: f64) -> Result<AttitudeCommand, Fault> {
    let desired = force - Vec3::new(0.0, 0.0, total_mass * gravity);
    let thrust = desired.norm();
    if !(thrust > MIN_FORCE) {
        return Err(Fault::DegenerateThrust);
    }
    let axis = -desired / thrust;
    // Undo the yaw: R(φ, θ, 0) e3 = (sθ cφ, -sφ, cθ cφ).
    let (sy, cy) = yaw.sin_cos();
    let bx = cy * axis.x + sy * axis.y;
    let by = -sy * axis.x + cy * axis.y;
    let roll = (-by).clamp(-1.0, 1.0).asin();
    let pitch = bx.atan2(axis.z);
    let clamp = |a: f64| a.clamp(-TILT_LIMIT, TILT_LIMIT);
    let saturated = roll.abs() > TILT_LIMIT || pitch.abs() > TILT_LIMIT;
    Ok(AttitudeCommand {
        thrust,
        euler: Vec3::new(clamp(roll), clamp(pitch), yaw),
        saturated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: Vec3,
    pub kd: Vec3,
    pub ki: Vec3,
    /// Anti-windup clamp on each integral.
    pub integral_limit: f64,
}

impl PidGains {
    /// `k_p = diag(0.6, 0.6, 0.8)`, `k_d = diag(0.05, 0.05, 0.08)`,
    /// `k_i = diag(0.15, 0.15, 0.1)`.
    ///
    /// The published table lists the proportional and derivative columns the
    /// other way round. Read literally that gives a twelve-second attitude
    /// time constant and the quadrotor never stops orbiting its leader.
    pub fn reference() -> Self {
        Self {
            kp: Vec3::new(0.6, 0.6, 0.8),
            kd: Vec3::new(0.05, 0.05, 0.08),
            ki: Vec3::new(0.15, 0.15, 0.1),
            integral_limit: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kp.iter().chain(self.kd.iter()).chain(self.ki.iter()).any(|x| !(*x >= 0.0)) {
            return Err(Error::invalid("pid", "gains >= 0"));
        }
        if !(self.integral_limit >= 0.0) {
            return Err(Error::invalid("pid.integral_limit", "limit >= 0"));
        }
        Ok(())
    }
}

/// `τ = k_p (η_d - η) - k_d η̇ + k_i ∫(η_d - η)` per Euler axis.
///
/// The output uses the integral accumulated so far; the returned integral
/// includes the current error (rectangle rule) and is clamped.
pub fn pid_attitude(
    euler: &Vec3,
    euler_rates: &Vec3,
    desired: &Vec3,
    gains: &PidGains,
    integral: &Vec3,
    dt: f64,
) -> (Vec3, Vec3) {
    let error = desired - euler;
    let torque = gains.kp.component_mul(&error) - gains.kd.component_mul(euler_rates)
        + gains.ki.component_mul(integral);
    let lim = gains.integral_limit;
    let next = (integral + error * dt).map(|x| x.clamp(-lim, lim));
    (torque, next)
}
