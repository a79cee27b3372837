//! Scenario files.
//!
//! A scenario is TOML. Only `[mission]` is required; every other section
//! falls back to the reference configuration. Lengths are meters, speeds m/s,
//! and `+z` points along gravity, so a target at `z = -10` is 10 m up.
//!
//! ```toml
//! [mission]
//! start = [0.0, 0.0, 0.0]          # quadrotor position at t = 0
//! target = [45.0, 60.0, -10.0]     # desired payload position
//! target_velocity = [0.0, 0.0, 0.0]
//! horizon = 200.0                  # T_max [s]
//! dt = 0.001                       # control and integration step [s]
//! seed = 7                         # draws moving-obstacle velocities and disturbances
//!
//! [disturbance]
//! mode = "band-limited"            # none | constant | band-limited
//! force_bound = [0.05, 0.05, 0.05]
//! torque_bound = [0.0, 0.0, 0.0]
//!
//! [model]
//! quad_mass = 0.775
//! inertia = [0.00577, 0.00577, 0.0105]   # diagonal, or 9 entries row-major
//! link_masses = [0.05, 0.05, 0.25]
//! link_lengths = [0.25, 0.25, 0.25]
//! gravity = 9.81
//!
//! [apf]
//! gains = [0.0649, 0.0646, 0.065, 0.0122, 0.0121, 0.0123]  # k_xm k_ym k_zm k_xt k_yt k_zt
//! influence_radius = 5.0
//! exponent = 1.0
//! max_speed = 2.0
//! damping_ratio = 1.0
//!
//! [smc]
//! lambda = [0.04, 0.04, 0.8]
//! mu = [0.06, 0.06, 0.08]
//! boundary_layer = 0.05
//! disturbance_bound = [0.0, 0.0, 0.0]   # per unit total mass [m/s²]
//! load_bound = [0.0, 0.0, 0.0]
//!
//! [pid]
//! kp = [0.6, 0.6, 0.8]
//! kd = [0.05, 0.05, 0.08]
//! ki = [0.15, 0.15, 0.1]
//! integral_limit = 0.5
//!
//! [rollout]
//! settle_tolerance = 0.25
//! settle_hold = 2.0
//! collision_penalty = 10.0
//!
//! [[obstacle]]
//! id = 1
//! shape = "cylinder"               # cylinder | sphere
//! center = [20.0, 25.0, 0.0]
//! radius = 1.5
//!
//! [[obstacle]]
//! id = 2
//! shape = "sphere"
//! center = [30.0, 35.0, -6.0]
//! radius = 1.0
//! moving = true                    # horizontal velocity drawn from the seed
//! ```
//!
//! An obstacle may instead give an explicit `velocity = [vx, vy, vz]`.
//! Cylinders must not move vertically.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{DisturbanceMode, DisturbanceSpec, Obstacle, Shape};
use crate::apf::ApfGains;
use crate::control::{PidGains, SmcGains};
use crate::dynamics::ModelParams;
use crate::sim::RolloutSettings;
use crate::{Error, Mat3, Result, Vec3};

/// Speed range of moving obstacles with drawn velocities [m/s].
pub const MOVING_SPEED_RANGE: (f64, f64) = (0.001, 0.5);

/// The world a mission flies through.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Quadrotor position at `t = 0`.
    pub start: Vec3,
    /// Desired payload position `r_t`.
    pub target: Vec3,
    pub target_velocity: Vec3,
    pub obstacles: Vec<Obstacle>,
    /// `T_max` [s].
    pub horizon: f64,
    pub dt: f64,
    pub disturbance: DisturbanceSpec,
    pub seed: u64,
}

impl Scenario {
    /// Check every invariant. Start and target must clear each obstacle by
    /// more than `influence_radius`.
    pub fn validate(&self, influence_radius: f64) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !finite(&self.start) {
            return Err(Error::invalid("mission.start", "must be finite"));
        }
        if !finite(&self.target) || !finite(&self.target_velocity) {
            return Err(Error::invalid("mission.target", "must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("mission.horizon", "horizon > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("mission.dt", "dt > 0"));
        }
        if self.dt > self.horizon {
            return Err(Error::invalid("mission.dt", "dt <= horizon"));
        }
        let d = &self.disturbance;
        if d.force_bound.iter().chain(d.torque_bound.iter()).any(|b| !(*b >= 0.0)) {
            return Err(Error::invalid("disturbance", "bounds >= 0"));
        }
        let mut ids = std::collections::HashSet::new();
        for o in &self.obstacles {
            let field = format!("obstacle {}", o.id);
            if !ids.insert(o.id) {
                return Err(Error::invalid(field, "duplicate id"));
            }
            if !(o.radius > 0.0 && o.radius.is_finite()) {
                return Err(Error::invalid(field, "radius > 0"));
            }
            if !finite(&o.center) || !finite(&o.velocity) {
                return Err(Error::invalid(field, "center and velocity must be finite"));
            }
            if o.shape == Shape::Cylinder && o.velocity.z != 0.0 {
                return Err(Error::invalid(field, "cylinders cannot move vertically"));
            }
            if o.signed_distance(&self.start) <= influence_radius {
                return Err(Error::invalid(
                    "mission.start",
                    format!("start inside obstacle {} influence radius", o.id),
                ));
            }
            if o.signed_distance(&self.target) <= influence_radius {
                return Err(Error::invalid(
                    "mission.target",
                    format!("target inside obstacle {} influence radius", o.id),
                ));
            }
        }
        Ok(())
    }
}

/// Everything needed to fly a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub scenario: Scenario,
    pub model: ModelParams,
    pub apf: ApfGains,
    pub smc: SmcGains,
    pub pid: PidGains,
    pub settings: RolloutSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    mission: MissionSection,
    disturbance: Option<DisturbanceSection>,
    model: Option<ModelSection>,
    apf: Option<ApfSection>,
    smc: Option<SmcSection>,
    pid: Option<PidSection>,
    rollout: Option<RolloutSection>,
    #[serde(default)]
    obstacle: Vec<ObstacleSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MissionSection {
    start: [f64; 3],
    target: [f64; 3],
    #[serde(default)]
    target_velocity: [f64; 3],
    horizon: f64,
    dt: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
enum ModeName {
    None,
    Constant,
    BandLimited,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DisturbanceSection {
    mode: ModeName,
    #[serde(default)]
    force_bound: [f64; 3],
    #[serde(default)]
    torque_bound: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    quad_mass: f64,
    inertia: Vec<f64>,
    link_masses: Vec<f64>,
    link_lengths: Vec<f64>,
    gravity: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApfSection {
    gains: Option<[f64; 6]>,
    influence_radius: Option<f64>,
    exponent: Option<f64>,
    max_speed: Option<f64>,
    damping_ratio: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SmcSection {
    lambda: [f64; 3],
    mu: [f64; 3],
    boundary_layer: Option<f64>,
    #[serde(default)]
    disturbance_bound: [f64; 3],
    #[serde(default)]
    load_bound: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PidSection {
    kp: [f64; 3],
    kd: [f64; 3],
    ki: [f64; 3],
    integral_limit: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RolloutSection {
    settle_tolerance: Option<f64>,
    settle_hold: Option<f64>,
    collision_penalty: Option<f64>,
    stall_speed: Option<f64>,
    stall_time: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
enum ShapeName {
    Cylinder,
    Sphere,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleSection {
    id: u32,
    shape: ShapeName,
    center: [f64; 3],
    radius: f64,
    velocity: Option<[f64; 3]>,
    #[serde(default)]
    moving: bool,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Horizontal velocity with uniform heading and speed in [`MOVING_SPEED_RANGE`].
fn draw_velocity(rng: &mut ChaCha8Rng) -> Vec3 {
    let heading = rng.random_range(0.0..TAU);
    let speed = rng.random_range(MOVING_SPEED_RANGE.0..=MOVING_SPEED_RANGE.1);
    Vec3::new(heading.cos(), heading.sin(), 0.0) * speed
}

fn build_model(m: ModelSection) -> Result<ModelParams> {
    let inertia = match m.inertia.len() {
        3 => Mat3::from_diagonal(&Vec3::new(m.inertia[0], m.inertia[1], m.inertia[2])),
        9 => Mat3::from_row_slice(&m.inertia),
        n => return Err(Error::invalid("model.inertia", format!("expected 3 or 9 entries, got {n}"))),
    };
    ModelParams::new(
        m.quad_mass,
        inertia,
        m.link_masses,
        m.link_lengths,
        m.gravity.unwrap_or(crate::GRAVITY),
    )
}

/// Parse and validate a full scenario file.
pub fn load_mission(text: &str) -> Result<Mission> {
    load_mission_seeded(text, None)
}

/// As [`load_mission`], with `seed` replacing `[mission] seed` when given.
pub fn load_mission_seeded(text: &str, seed: Option<u64>) -> Result<Mission> {
    let file: File = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;

    let mut m = file.mission;
    if let Some(seed) = seed {
        m.seed = seed;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let obstacles = file
        .obstacle
        .into_iter()
        .map(|o| {
            let shape = match o.shape {
                ShapeName::Cylinder => Shape::Cylinder,
                ShapeName::Sphere => Shape::Sphere,
            };
            let velocity = match (o.velocity, o.moving) {
                (Some(_), true) => {
                    return Err(Error::invalid(
                        format!("obstacle {}", o.id),
                        "give either `velocity` or `moving`, not both",
                    ))
                }
                (Some(v), false) => v3(v),
                (None, true) => draw_velocity(&mut rng),
                (None, false) => Vec3::zeros(),
            };
            Ok(Obstacle {
                id: o.id,
                shape,
                center: v3(o.center),
                radius: o.radius,
                velocity,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let disturbance = match file.disturbance {
        None => DisturbanceSpec::default(),
        Some(d) => DisturbanceSpec {
            mode: match d.mode {
                ModeName::None => DisturbanceMode::None,
                ModeName::Constant => DisturbanceMode::Constant,
                ModeName::BandLimited => DisturbanceMode::BandLimited,
            },
            force_bound: v3(d.force_bound),
            torque_bound: v3(d.torque_bound),
        },
    };

    let scenario = Scenario {
        start: v3(m.start),
        target: v3(m.target),
        target_velocity: v3(m.target_velocity),
        obstacles,
        horizon: m.horizon,
        dt: m.dt,
        disturbance,
        seed: m.seed,
    };

    let model = match file.model {
        Some(section) => build_model(section)?,
        None => ModelParams::reference(),
    };

    let mut settings = RolloutSettings::default();
    let mut apf = ApfGains::reference();
    if let Some(a) = file.apf {
        if let Some(g) = a.gains {
            apf = apf.with_vector(&g);
        }
        apf.influence_radius = a.influence_radius.unwrap_or(apf.influence_radius);
        apf.exponent = a.exponent.unwrap_or(apf.exponent);
        settings.leader.max_speed = a.max_speed.unwrap_or(settings.leader.max_speed);
        settings.leader.damping_ratio = a.damping_ratio.unwrap_or(settings.leader.damping_ratio);
    }
    apf.validate()?;

    let smc = match file.smc {
        None => SmcGains::reference(),
        Some(s) => SmcGains {
            slope: v3(s.lambda),
            reaching: v3(s.mu),
            boundary_layer: s.boundary_layer.unwrap_or(SmcGains::reference().boundary_layer),
            disturbance_bound: v3(s.disturbance_bound),
            load_bound: v3(s.load_bound),
        },
    };
    smc.validate()?;
    smc.check_margin();

    let pid = match file.pid {
        None => PidGains::reference(),
        Some(p) => PidGains {
            kp: v3(p.kp),
            kd: v3(p.kd),
            ki: v3(p.ki),
            integral_limit: p.integral_limit.unwrap_or(PidGains::reference().integral_limit),
        },
    };
    pid.validate()?;

    if let Some(r) = file.rollout {
        settings.settle_tolerance = r.settle_tolerance.unwrap_or(settings.settle_tolerance);
        settings.settle_hold = r.settle_hold.unwrap_or(settings.settle_hold);
        settings.collision_penalty = r.collision_penalty.unwrap_or(settings.collision_penalty);
        settings.stall_speed = r.stall_speed.unwrap_or(settings.stall_speed);
        settings.stall_time = r.stall_time.unwrap_or(settings.stall_time);
    }
    settings.validate()?;

    scenario.validate(apf.influence_radius)?;
    Ok(Mission {
        scenario,
        model,
        apf,
        smc,
        pid,
        settings,
    })
}

/// Parse a scenario file and return only its world.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    load_mission(text).map(|m| m.scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[mission]
start = [0.0, 0.0, 0.0]
target = [10.0, 0.0, -2.0]
horizon = 30.0
dt = 0.01
"#;

    #[test]
    fn minimal_file() {
        let s = load_scenario(MINIMAL).unwrap();
        assert!(s.obstacles.is_empty());
        assert_eq!(s.target, Vec3::new(10.0, 0.0, -2.0));
        assert_eq!(s.disturbance.mode, DisturbanceMode::None);
    }

    fn with_obstacle(block: &str) -> String {
        format!("{MINIMAL}\n[[obstacle]]\n{block}")
    }

    #[test]
    fn negative_radius_is_rejected() {
        let text = with_obstacle("id = 3\nshape = \"sphere\"\ncenter = [5.0, 20.0, 0.0]\nradius = -1.0\n");
        let err = load_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("radius > 0"), "{err}");
        assert!(err.contains("obstacle 3"), "{err}");
    }

    #[test]
    fn start_inside_obstacle_is_rejected() {
        let text = with_obstacle("id = 3\nshape = \"cylinder\"\ncenter = [0.5, 0.0, 0.0]\nradius = 1.0\n");
        let err = load_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("start inside obstacle 3"), "{err}");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = load_scenario("[mission]\nstart = [0.0, 0.0]\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = load_scenario(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn moving_velocities_are_seeded_and_in_range() {
        let text = with_obstacle("id = 1\nshape = \"sphere\"\ncenter = [5.0, 20.0, 0.0]\nradius = 1.0\nmoving = true\n");
        let a = load_scenario(&text).unwrap();
        let b = load_scenario(&text).unwrap();
        assert_eq!(a, b);
        let v = a.obstacles[0].velocity;
        assert_eq!(v.z, 0.0);
        assert!((MOVING_SPEED_RANGE.0..=MOVING_SPEED_RANGE.1).contains(&v.norm()));
        let other = load_scenario(&text.replace("dt = 0.01", "dt = 0.01\nseed = 99")).unwrap();
        assert_ne!(other.obstacles[0].velocity, v);
        let overridden = load_mission_seeded(&text, Some(99)).unwrap();
        assert_eq!(overridden.scenario, other);
    }

    #[test]
    fn vertical_cylinder_motion_is_rejected() {
        let text = with_obstacle("id = 1\nshape = \"cylinder\"\ncenter = [5.0, 20.0, 0.0]\nradius = 1.0\nvelocity = [0.0, 0.0, 0.1]\n");
        assert!(load_scenario(&text).is_err());
    }

    #[test]
    fn horizon_and_dt_checked() {
        assert!(load_scenario(&MINIMAL.replace("horizon = 30.0", "horizon = 0.0")).is_err());
        assert!(load_scenario(&MINIMAL.replace("dt = 0.01", "dt = 31.0")).is_err());
    }
}
