//! Improved artificial potential field and the virtual leader it drives.
//!
//! The attractive field pulls the load-reference point towards the target.
//! Each obstacle within the influence radius `ρ0` adds a repulsive field
//! weighted by the goal distance `ρ_t^n`, which keeps the target itself a
//! minimum of the total field even when it lies close to an obstacle.
//!
//! Gains are per axis. Component `a` of every force is the negative partial
//! derivative along `a` of the matching component of [`FieldTerm::potential`].

use crate::world::{obstacle_clearance, Obstacle};
use crate::{Error, Result, Vec3};

/// Floor for the goal distance inside the `ρ_t^(n-1)` factor.
pub const GOAL_DISTANCE_FLOOR: f64 = 1e-6;

/// Allowed goal-distance exponents.
pub const EXPONENTS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApfGains {
    /// `k_m`, repulsive gains per axis.
    pub repulsive: Vec3,
    /// `k_t`, attractive gains per axis [1/s²].
    pub attractive: Vec3,
    /// `ρ0`, distance beyond which an obstacle has no effect [m].
    pub influence_radius: f64,
    /// Goal-distance exponent `n`.
    pub exponent: f64,
}

impl ApfGains {
    /// Gains reported for the self-adaptive swarm on the reference mission.
    pub fn reference() -> Self {
        Self {
            repulsive: Vec3::new(0.0649, 0.0646, 0.065),
            attractive: Vec3::new(0.0122, 0.0121, 0.0123),
            influence_radius: 5.0,
            exponent: 1.0,
        }
    }

    /// `[k_xm, k_ym, k_zm, k_xt, k_yt, k_zt]`
    pub fn to_vector(&self) -> [f64; 6] {
        let (m, t) = (self.repulsive, self.attractive);
        [m.x, m.y, m.z, t.x, t.y, t.z]
    }

    /// Replace the six tuned gains, keeping `ρ0` and `n`.
    pub fn with_vector(&self, v: &[f64]) -> Self {
        assert_eq!(v.len(), 6, "gain vector has six entries");
        Self {
            repulsive: Vec3::new(v[0], v[1], v[2]),
            attractive: Vec3::new(v[3], v[4], v[5]),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.to_vector().iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::invalid(format!("apf.gains[{name}]"), "gain > 0"));
            }
        }
        if !(self.influence_radius > 0.0 && self.influence_radius.is_finite()) {
            return Err(Error::invalid("apf.influence_radius", "influence radius > 0"));
        }
        if !EXPONENTS.contains(&self.exponent) {
            return Err(Error::invalid("apf.exponent", "must be one of 0, 0.5, 1, 2"));
        }
        Ok(())
    }
}

/// Per-axis potentials and the resulting force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldTerm {
    pub potential: Vec3,
    pub force: Vec3,
}

impl FieldTerm {
    fn zero() -> Self {
        Self {
            potential: Vec3::zeros(),
            force: Vec3::zeros(),
        }
    }
}

/// Quadratic attraction: `U_a = ½ k_t,a (r_l,a - r_t,a)²`, `F = -k_t ∘ (r_l - r_t)`.
pub fn attractive(load: &Vec3, target: &Vec3, gains: &ApfGains) -> FieldTerm {
    let delta = load - target;
    FieldTerm {
        potential: gains.attractive.component_mul(&delta.component_mul(&delta)) * 0.5,
        force: -gains.attractive.component_mul(&delta),
    }
}

/// Repulsion of a single obstacle; zero outside the influence radius.
pub fn repulsive_single(load: &Vec3, target: &Vec3, obstacle: &Obstacle, gains: &ApfGains) -> FieldTerm {
    let clearance = obstacle_clearance(load, obstacle);
    let rho = clearance.distance;
    let rho0 = gains.influence_radius;
    if rho > rho0 {
        return FieldTerm::zero();
    }
    let n = gains.exponent;
    let goal = load - target;
    let goal_dist = goal.norm();
    let excess = 1.0 / rho - 1.0 / rho0;
    let weight = goal_dist.powf(n);

    let shape = 0.5 * excess * excess * weight;
    // Pushes along +∇ρ, away from the obstacle surface.
    let away = clearance.gradient * (excess / (rho * rho) * weight);
    // Pulls along -∇ρ_t, towards the goal.
    let towards = if n == 0.0 || goal_dist == 0.0 {
        Vec3::zeros()
    } else {
        let scale = 0.5 * n * excess * excess * goal_dist.max(GOAL_DISTANCE_FLOOR).powf(n - 1.0);
        -goal / goal_dist * scale
    };
    FieldTerm {
        potential: gains.repulsive * shape,
        force: gains.repulsive.component_mul(&(away + towards)),
    }
}

/// Superposition of [`repulsive_single`] over every obstacle.
pub fn repulsive(load: &Vec3, target: &Vec3, obstacles: &[Obstacle], gains: &ApfGains) -> FieldTerm {
    obstacles.iter().fold(FieldTerm::zero(), |acc, o| {
        let t = repulsive_single(load, target, o, gains);
        FieldTerm {
            potential: acc.potential + t.potential,
            force: acc.force + t.force,
        }
    })
}

/// Attractive plus repulsive force at `load`.
pub fn total_force(load: &Vec3, target: &Vec3, obstacles: &[Obstacle], gains: &ApfGains) -> Vec3 {
    attractive(load, target, gains).force + repulsive(load, target, obstacles, gains).force
}

/// Kinematic state of the virtual leader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl LeaderState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        }
    }
}

/// How the leader integrates the field force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderConfig {
    /// Speed clamp [m/s].
    pub max_speed: f64,
    /// Damping ratio `ζ` of the velocity term `-2ζ√k_t ∘ (v_p - v_t)`.
    /// Zero leaves the leader purely conservative.
    pub damping_ratio: f64,
    /// Offset from the leader position to the point where the field is
    /// evaluated. The rollout sets it to the hanging cable so that the leader
    /// is a quadrotor reference whose load sits on the planned point.
    pub load_offset: Vec3,
    /// Desired velocity at the target.
    pub target_velocity: Vec3,
}

impl Default for LeaderConfig {
    fn default() -> Self {
        Self {
            max_speed: 2.0,
            damping_ratio: 1.0,
            load_offset: Vec3::zeros(),
            target_velocity: Vec3::zeros(),
        }
    }
}

impl LeaderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_speed > 0.0) {
            return Err(Error::invalid("leader.max_speed", "max speed > 0"));
        }
        if !(self.damping_ratio >= 0.0) {
            return Err(Error::invalid("leader.damping_ratio", "damping ratio >= 0"));
        }
        Ok(())
    }
}

/// Acceleration commanded to the leader at its current state.
pub fn leader_acceleration(
    leader: &LeaderState,
    target: &Vec3,
    obstacles: &[Obstacle],
    gains: &ApfGains,
    cfg: &LeaderConfig,
) -> Vec3 {
    let point = leader.position + cfg.load_offset;
    let damping = gains.attractive.map(f64::sqrt) * (2.0 * cfg.damping_ratio);
    total_force(&point, target, obstacles, gains) - damping.component_mul(&(leader.velocity - cfg.target_velocity))
}

/// Semi-implicit Euler step: velocity first (then clamped), then position.
/// The returned acceleration is the one actually realised over the step, so
/// it stays consistent with the clamped velocity.
pub fn leader_step(
    leader: &LeaderState,
    target: &Vec3,
    obstacles: &[Obstacle],
    gains: &ApfGains,
    cfg: &LeaderConfig,
    dt: f64,
) -> LeaderState {
    let acceleration = leader_acceleration(leader, target, obstacles, gains, cfg);
    let mut velocity = leader.velocity + acceleration * dt;
    let speed = velocity.norm();
    if speed > cfg.max_speed {
        velocity *= cfg.max_speed / speed;
    }
    LeaderState {
        position: leader.position + velocity * dt,
        velocity,
        acceleration: (velocity - leader.velocity) / dt,
    }
}
