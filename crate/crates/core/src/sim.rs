//! Closed-loop rollouts, the tracking-cost functional and gain tuning.
//!
//! One control step runs the loops outside-in: the potential field advances
//! the leader, the sliding-mode law turns the leader error into a force, the
//! force becomes thrust plus desired roll/pitch, the PID loop produces torque,
//! and the dynamics integrate one step with those inputs held.

use crate::apf::{leader_step, ApfGains, LeaderConfig, LeaderState};
use crate::control::{extract_thrust_attitude, pid_attitude, smc_force, PidGains, SmcGains};
use crate::dynamics::{self, load_position, Fault, LoadPoint, ModelParams, Stepper, SystemState, WrenchInput};
use crate::pso::{optimize, OptimizationResult, SwarmConfig};
use crate::world::{advance_obstacles_in_place, min_clearance, Disturbance, Mission, Scenario};
use crate::{e3, Error, Result, Vec3};

/// Timestep used for validation rollouts [s].
pub const VALIDATION_DT: f64 = 1e-3;
/// Timestep used for fitness rollouts during tuning [s].
pub const TUNING_DT: f64 = 1e-2;
/// Bounds of every tuned gain.
pub const GAIN_BOUNDS: (f64, f64) = (0.001, 1.0);

/// Termination and cost settings of a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSettings {
    /// Load error below which the mission counts as settled [m].
    pub settle_tolerance: f64,
    /// How long the error must stay inside the tolerance [s].
    pub settle_hold: f64,
    /// Weight `P` of the early-termination penalty `P (T_max - t_end) T_max`.
    pub collision_penalty: f64,
    /// Leader speed regarded as stalled short of the goal [m/s].
    pub stall_speed: f64,
    /// Stall duration that ends the rollout with a local-minimum fault [s].
    pub stall_time: f64,
    pub leader: LeaderConfig,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            settle_tolerance: 0.25,
            settle_hold: 2.0,
            collision_penalty: 10.0,
            stall_speed: 1e-3,
            stall_time: 5.0,
            leader: LeaderConfig::default(),
        }
    }
}

impl RolloutSettings {
    pub fn validate(&self) -> Result<()> {
        self.leader.validate()?;
        if !(self.settle_tolerance > 0.0) {
            return Err(Error::invalid("rollout.settle_tolerance", "tolerance > 0"));
        }
        if !(self.settle_hold >= 0.0) {
            return Err(Error::invalid("rollout.settle_hold", "hold >= 0"));
        }
        if !(self.collision_penalty >= 0.0) {
            return Err(Error::invalid("rollout.collision_penalty", "penalty >= 0"));
        }
        if !(self.stall_time > 0.0 && self.stall_speed >= 0.0) {
            return Err(Error::invalid("rollout.stall", "stall time > 0 and speed >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Horizon,
    Settled,
    Collision { obstacle: u32 },
    Fault(Fault),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::Settled => "settled",
            Termination::Collision { .. } => "collision",
            Termination::Fault(_) => "fault",
        }
    }

    /// Label plus detail, e.g. `fault:gimbal-lock`.
    pub fn describe(&self) -> String {
        match self {
            Termination::Collision { obstacle } => format!("collision:obstacle-{obstacle}"),
            Termination::Fault(f) => format!("fault:{}", f.code()),
            other => other.label().to_string(),
        }
    }

    fn is_early_failure(&self) -> bool {
        matches!(self, Termination::Collision { .. } | Termination::Fault(_))
    }
}

/// One row of the rollout log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub quad_position: Vec3,
    pub quad_velocity: Vec3,
    /// Exact end of the link chain.
    pub load_position: Vec3,
    /// Straight-cable load estimate used by the potential field.
    pub load_reference: Vec3,
    pub leader_position: Vec3,
    pub leader_velocity: Vec3,
    pub euler: Vec3,
    pub surface: Vec3,
    pub force: Vec3,
    pub thrust: f64,
    /// Smallest signed clearance of quadrotor or load over all obstacles.
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutLog {
    pub dt: f64,
    pub horizon: f64,
    pub target: Vec3,
    pub samples: Vec<Sample>,
    pub termination: Termination,
    /// Start of the hold window that settled the mission.
    pub settle_time: Option<f64>,
}

impl RolloutLog {
    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn load_errors(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.samples.iter().map(move |s| s.load_position - self.target)
    }

    /// Earliest time after which `|e_axis| <= tol` for the rest of the log.
    pub fn axis_settle_time(&self, axis: usize, tol: f64) -> Option<f64> {
        let last_out = self
            .samples
            .iter()
            .rposition(|s| (s.load_position[axis] - self.target[axis]).abs() > tol);
        match last_out {
            None => self.samples.first().map(|s| s.t),
            Some(i) if i + 1 < self.samples.len() => Some(self.samples[i + 1].t),
            Some(_) => None,
        }
    }

    pub fn min_clearance(&self) -> f64 {
        self.samples.iter().map(|s| s.clearance).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    /// `J = ∫ t ‖e‖ dt` plus any penalty.
    pub cost: f64,
    pub final_error: f64,
    pub settle_time: Option<f64>,
    pub min_clearance: f64,
    pub collided: bool,
}

/// Trapezoidal `∫ t ‖e(t)‖ dt` over `(t, ‖e‖)` pairs.
pub fn time_weighted_error(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut iter = points.into_iter();
    let Some((mut t0, mut e0)) = iter.next() else {
        return 0.0;
    };
    let mut acc = 0.0;
    for (t1, e1) in iter {
        acc += 0.5 * (t1 - t0) * (t0 * e0 + t1 * e1);
        t0 = t1;
        e0 = e1;
    }
    acc
}

/// Tracking cost with the default penalty weight.
pub fn fitness(log: &RolloutLog, target: &Vec3) -> FitnessReport {
    fitness_with_penalty(log, target, RolloutSettings::default().collision_penalty)
}

/// Tracking cost. Collisions and faults end the rollout early; they add
/// `penalty (T_max - t_end) T_max` so that stopping early never pays.
pub fn fitness_with_penalty(log: &RolloutLog, target: &Vec3, penalty: f64) -> FitnessReport {
    let mut cost = time_weighted_error(log.samples.iter().map(|s| (s.t, (s.load_position - target).norm())));
    let end = log.end_time();
    if log.termination.is_early_failure() {
        cost += penalty * (log.horizon - end).max(0.0) * log.horizon;
    }
    FitnessReport {
        cost,
        final_error: log.samples.last().map_or(f64::NAN, |s| (s.load_position - target).norm()),
        settle_time: log.settle_time,
        min_clearance: log.min_clearance(),
        collided: matches!(log.termination, Termination::Collision { .. }),
    }
}

fn closest_obstacle(point: &Vec3, scenario_obstacles: &[crate::world::Obstacle]) -> Option<(u32, f64)> {
    scenario_obstacles
        .iter()
        .map(|o| (o.id, o.signed_distance(point)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Fly one mission.
pub fn rollout(
    scenario: &Scenario,
    gains: &ApfGains,
    smc: &SmcGains,
    pid: &PidGains,
    model: &ModelParams,
    settings: &RolloutSettings,
) -> RolloutLog {
    let dt = scenario.dt;
    let steps = (scenario.horizon / dt).round() as usize;
    let total_mass = model.total_mass();
    let disturbance = Disturbance::new(scenario.disturbance, scenario.seed);
    let leader_cfg = LeaderConfig {
        load_offset: e3() * model.cable_length(),
        target_velocity: scenario.target_velocity,
        ..settings.leader
    };

    let mut obstacles = scenario.obstacles.clone();
    let mut state = SystemState::hanging(scenario.start, model.links());
    let mut stepper = Stepper::new(model.links());
    let mut leader = LeaderState::at_rest(scenario.start);
    let mut integral = Vec3::zeros();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut inside_since: Option<f64> = None;
    let mut stalled_since: Option<f64> = None;
    let mut termination = Termination::Horizon;
    let mut settle_time = None;

    for k in 0..=steps {
        let t = k as f64 * dt;
        leader = leader_step(&leader, &scenario.target, &obstacles, gains, &leader_cfg, dt);

        let load = load_position(&state, model, LoadPoint::Chained);
        let load_ref = load_position(&state, model, LoadPoint::Straight);
        let clearance = min_clearance(&state.position, &obstacles).min(min_clearance(&load, &obstacles));

        let control = smc_force(&leader, &state.position, &state.velocity, smc, total_mass);
        let command = extract_thrust_attitude(&control.force, total_mass, model.gravity, 0.0);
        samples.push(Sample {
            t,
            quad_position: state.position,
            quad_velocity: state.velocity,
            load_position: load,
            load_reference: load_ref,
            leader_position: leader.position,
            leader_velocity: leader.velocity,
            euler: state.euler,
            surface: control.surface,
            force: control.force,
            thrust: command.as_ref().map_or(0.0, |c| c.thrust),
            clearance,
        });

        if clearance < 0.0 {
            let quad_hit = closest_obstacle(&state.position, &obstacles);
            let load_hit = closest_obstacle(&load, &obstacles);
            let id = match (quad_hit, load_hit) {
                (Some(q), Some(l)) => if q.1 <= l.1 { q.0 } else { l.0 },
                (Some(q), None) => q.0,
                (None, Some(l)) => l.0,
                (None, None) => 0,
            };
            termination = Termination::Collision { obstacle: id };
            break;
        }

        let error = (load - scenario.target).norm();
        if error < settings.settle_tolerance {
            let since = *inside_since.get_or_insert(t);
            if t - since >= settings.settle_hold - 1e-9 {
                termination = Termination::Settled;
                settle_time = Some(since);
                break;
            }
        } else {
            inside_since = None;
        }
        let leader_gap = (leader.position + leader_cfg.load_offset - scenario.target).norm();
        if leader.velocity.norm() < settings.stall_speed && leader_gap >= settings.settle_tolerance {
            let since = *stalled_since.get_or_insert(t);
            if t - since >= settings.stall_time {
                termination = Termination::Fault(Fault::ApfLocalMinimum);
                break;
            }
        } else {
            stalled_since = None;
        }
        if k == steps {
            break;
        }

        let command = match command {
            Ok(c) => c,
            Err(f) => {
                termination = Termination::Fault(f);
                break;
            }
        };
        let rates = dynamics::euler_rates(&state.euler, &state.body_rates);
        let (torque, next_integral) = pid_attitude(&state.euler, &rates, &command.euler, pid, &integral, dt);
        integral = next_integral;
        let (force_dis, torque_dis) = disturbance.sample(t);
        let input = WrenchInput {
            thrust: command.thrust,
            torque,
            force_disturbance: force_dis,
            torque_disturbance: torque_dis,
        };
        match stepper.step_in_place(&mut state, &input, model, dt) {
            Ok(()) => {}
            Err(f) => {
                termination = Termination::Fault(f);
                break;
            }
        }
        advance_obstacles_in_place(&mut obstacles, dt);
    }

    RolloutLog {
        dt,
        horizon: scenario.horizon,
        target: scenario.target,
        samples,
        termination,
        settle_time,
    }
}

/// Validation rollout of a mission with its own gains.
pub fn simulate(mission: &Mission) -> RolloutLog {
    rollout(
        &mission.scenario,
        &mission.apf,
        &mission.smc,
        &mission.pid,
        &mission.model,
        &mission.settings,
    )
}

/// Cost of flying `mission` with the six gains in `x` at the tuning timestep.
pub fn gain_cost(mission: &Mission, x: &[f64], dt: f64) -> f64 {
    let gains = mission.apf.with_vector(x);
    let scenario = Scenario { dt, ..mission.scenario.clone() };
    let log = rollout(&scenario, &gains, &mission.smc, &mission.pid, &mission.model, &mission.settings);
    fitness_with_penalty(&log, &scenario.target, mission.settings.collision_penalty).cost
}

/// Tune the six potential-field gains of `mission` with a particle swarm.
pub fn tune(mission: &Mission, swarm: &SwarmConfig) -> Result<(ApfGains, OptimizationResult)> {
    tune_with_dt(mission, swarm, TUNING_DT)
}

pub fn tune_with_dt(mission: &Mission, swarm: &SwarmConfig, dt: f64) -> Result<(ApfGains, OptimizationResult)> {
    if swarm.dim() != 6 {
        return Err(Error::invalid("swarm.bounds", "tuning needs six dimensions"));
    }
    if swarm
        .bounds
        .iter()
        .any(|&(lo, hi)| lo < GAIN_BOUNDS.0 || hi > GAIN_BOUNDS.1)
    {
        return Err(Error::invalid("swarm.bounds", "gain bounds must lie within [0.001, 1]"));
    }
    let result = optimize(|x| gain_cost(mission, x, dt), swarm)?;
    Ok((mission.apf.with_vector(&result.best_position), result))
}

/// Swarm configuration over the standard gain box.
pub fn gain_swarm(variant: crate::pso::Variant, seed: u64) -> SwarmConfig {
    SwarmConfig::new(variant, vec![GAIN_BOUNDS; 6], seed)
}
