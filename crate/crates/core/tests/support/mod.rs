//! Independent oracles shared by the integration tests and the acceptance run.
//! Nothing here calls into the model it checks.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slungload::apf::{attractive, repulsive_single, ApfGains};
use slungload::dynamics::{rotation, total_energy, ModelParams, Stepper, SystemState, WrenchInput};
use slungload::sim::RolloutLog;
use slungload::world::min_clearance;
use slungload::{Obstacle, Shape, Vec3};

/// Quadrotor plus one bob on a rigid rod, in Cartesian coordinates.
/// The rod tension has a closed form, so no linear solve is involved.
#[derive(Debug, Clone, Copy)]
pub struct Pendulum {
    pub base: Vec3,
    pub base_velocity: Vec3,
    pub bob: Vec3,
    pub bob_velocity: Vec3,
}

pub struct PendulumParams {
    pub base_mass: f64,
    pub bob_mass: f64,
    pub length: f64,
    pub gravity: f64,
    /// External force on the base (thrust), constant.
    pub force: Vec3,
}

impl Pendulum {
    fn accelerations(&self, p: &PendulumParams) -> (Vec3, Vec3) {
        let d = self.bob - self.base;
        let dv = self.bob_velocity - self.base_velocity;
        let g = Vec3::new(0.0, 0.0, p.gravity);
        // Holding |d| fixed: d·(a_bob - a_base) + |dv|² = 0, with tension λ d
        // pulling the base towards the bob and the bob towards the base.
        let inv = 1.0 / p.base_mass + 1.0 / p.bob_mass;
        let lambda = (dv.norm_squared() - d.dot(&p.force) / p.base_mass) / (d.norm_squared() * inv);
        let a_base = g + (p.force + d * lambda) / p.base_mass;
        let a_bob = g - d * (lambda / p.bob_mass);
        (a_base, a_bob)
    }

    fn derivative(&self, p: &PendulumParams) -> [Vec3; 4] {
        let (ab, ap) = self.accelerations(p);
        [self.base_velocity, ab, self.bob_velocity, ap]
    }

    fn offset(&self, k: &[Vec3; 4], h: f64) -> Self {
        Self {
            base: self.base + k[0] * h,
            base_velocity: self.base_velocity + k[1] * h,
            bob: self.bob + k[2] * h,
            bob_velocity: self.bob_velocity + k[3] * h,
        }
    }

    /// Classic RK4.
    pub fn step(&self, p: &PendulumParams, dt: f64) -> Self {
        let k1 = self.derivative(p);
        let k2 = self.offset(&k1, dt / 2.0).derivative(p);
        let k3 = self.offset(&k2, dt / 2.0).derivative(p);
        let k4 = self.offset(&k3, dt).derivative(p);
        let mut out = *self;
        for (i, slot) in [&mut out.base, &mut out.base_velocity, &mut out.bob, &mut out.bob_velocity]
            .into_iter()
            .enumerate()
        {
            *slot += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
        out
    }
}

/// Largest relative disagreement between the model and the pendulum oracle
/// over `duration`, across base and bob positions and velocities.
pub fn pendulum_disagreement(duration: f64, dt: f64) -> f64 {
    let p = params_with_links(1);

    let mut state = SystemState::hanging(Vec3::new(1.0, -2.0, -5.0), 1);
    state.velocity = Vec3::new(0.4, -0.3, 0.2);
    state.links[0] = Vec3::new(0.6, -0.3, 0.75).normalize();
    state.link_rates[0] = Vec3::new(1.5, 2.0, -0.5);
    state.euler = Vec3::new(0.15, -0.1, 0.3);
    state.project();
    let u = WrenchInput { thrust: 9.0, ..Default::default() };

    let l = p.link_lengths[0];
    let q = state.links[0];
    let mut oracle = Pendulum {
        base: state.position,
        base_velocity: state.velocity,
        bob: state.position + q * l,
        bob_velocity: state.velocity + state.link_rates[0].cross(&q) * l,
    };
    let op = PendulumParams {
        base_mass: p.quad_mass,
        bob_mass: p.link_masses[0],
        length: l,
        gravity: p.gravity,
        // Zero body rates and torque keep the attitude, so thrust is constant.
        force: -u.thrust * (rotation(&state.euler) * Vec3::z()),
    };

    let mut stepper = Stepper::new(1);
    let steps = (duration / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        stepper.step_in_place(&mut state, &u, &p, dt).unwrap();
        oracle = oracle.step(&op, dt);
        let q = state.links[0];
        let model = [
            state.position,
            state.velocity,
            state.position + q * l,
            state.velocity + state.link_rates[0].cross(&q) * l,
        ];
        let truth = [oracle.base, oracle.base_velocity, oracle.bob, oracle.bob_velocity];
        for (m, t) in model.iter().zip(&truth) {
            worst = worst.max((m - t).norm() / t.norm().max(1.0));
        }
    }
    worst
}

/// Point-mass chain with distance constraints, solved as one saddle-point
/// system. Returns the quadrotor acceleration and every joint acceleration.
pub fn chain_accelerations(s: &SystemState, p: &ModelParams, force: Vec3) -> (Vec3, Vec<Vec3>) {
    let n = s.links.len();
    let np = n + 1;
    let mut pos = vec![s.position];
    let mut vel = vec![s.velocity];
    for i in 0..n {
        pos.push(pos[i] + s.links[i] * p.link_lengths[i]);
        vel.push(vel[i] + s.link_rates[i].cross(&s.links[i]) * p.link_lengths[i]);
    }
    let masses: Vec<f64> = std::iter::once(p.quad_mass).chain(p.link_masses.iter().copied()).collect();
    let d = 3 * np + n;
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for k in 0..np {
        let mut f = Vec3::new(0.0, 0.0, masses[k] * p.gravity);
        if k == 0 {
            f += force;
        }
        for c in 0..3 {
            a[(3 * k + c, 3 * k + c)] = masses[k];
            b[3 * k + c] = f[c];
        }
    }
    for i in 0..n {
        let dr = pos[i + 1] - pos[i];
        let dv = vel[i + 1] - vel[i];
        let row = 3 * np + i;
        for c in 0..3 {
            a[(row, 3 * (i + 1) + c)] = dr[c];
            a[(row, 3 * i + c)] = -dr[c];
            a[(3 * (i + 1) + c, row)] = dr[c];
            a[(3 * i + c, row)] = -dr[c];
        }
        b[row] = -dv.norm_squared();
    }
    let x = a.lu().solve(&b).expect("constraint system is regular");
    let acc: Vec<Vec3> = (0..np).map(|k| Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2])).collect();
    (acc[0], acc[1..].to_vec())
}

/// Model parameters with `n` links, using the reference masses from the tip back.
pub fn params_with_links(n: usize) -> ModelParams {
    let r = ModelParams::reference();
    let masses = r.link_masses[r.links() - n..].to_vec();
    let lengths = r.link_lengths[r.links() - n..].to_vec();
    ModelParams::new(r.quad_mass, r.inertia, masses, lengths, r.gravity).unwrap()
}

/// A swinging, tumbling state with `n` links.
pub fn swinging_state(n: usize) -> SystemState {
    let dirs = [
        Vec3::new(0.5, 0.1, 0.8),
        Vec3::new(-0.4, 0.3, 0.85),
        Vec3::new(0.2, -0.6, 0.7),
    ];
    let rates = [
        Vec3::new(1.0, -2.0, 0.5),
        Vec3::new(-3.0, 1.0, 2.0),
        Vec3::new(0.5, 4.0, -1.0),
    ];
    let mut s = SystemState::hanging(Vec3::new(0.0, 0.0, -10.0), n);
    for i in 0..n {
        s.links[i] = dirs[i].normalize();
        s.link_rates[i] = rates[i];
    }
    s.velocity = Vec3::new(1.0, 0.5, -2.0);
    s.body_rates = Vec3::new(0.3, -0.2, 0.5);
    s.project();
    s
}

/// Worst relative energy drift of an unforced rollout.
pub fn energy_drift(n: usize, duration: f64, dt: f64) -> f64 {
    let p = params_with_links(n);
    let mut s = swinging_state(n);
    let e0 = total_energy(&s, &p);
    let u = WrenchInput::default();
    let mut stepper = Stepper::new(n);
    let mut worst: f64 = 0.0;
    for _ in 0..(duration / dt).round() as usize {
        stepper.step_in_place(&mut s, &u, &p, dt).unwrap();
        worst = worst.max(((total_energy(&s, &p) - e0) / e0).abs());
    }
    worst
}

/// Result of comparing field forces with central differences of the potential.
#[derive(Debug, Default)]
pub struct GradientCheck {
    pub attractive_checked: usize,
    pub repulsive_checked: usize,
    pub worst_attractive: f64,
    pub worst_repulsive: f64,
}

const SURFACE_EPS: f64 = 1e-9;

/// Central differences of each axis potential along its own axis, at random
/// configurations inside the influence radius of a random obstacle.
pub fn gradient_check(configs: usize, seed: u64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientCheck::default();
    let h = 1e-5;
    let exponents = [0.0, 0.5, 1.0, 2.0];
    while out.repulsive_checked < configs {
        let gains = ApfGains {
            repulsive: Vec3::from_fn(|_, _| rng.random_range(0.001..1.0)),
            attractive: Vec3::from_fn(|_, _| rng.random_range(0.001..1.0)),
            influence_radius: rng.random_range(1.0..6.0),
            exponent: exponents[rng.random_range(0..exponents.len())],
        };
        let shape = if rng.random_bool(0.5) { Shape::Sphere } else { Shape::Cylinder };
        let center = Vec3::from_fn(|_, _| rng.random_range(-20.0..20.0));
        let obstacle = Obstacle::fixed(1, shape, center, rng.random_range(0.3..2.0));
        let target = Vec3::from_fn(|_, _| rng.random_range(-30.0..30.0));

        let heading = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mut heading = heading.normalize();
        if shape == Shape::Cylinder {
            heading.z = 0.0;
            heading = heading.normalize();
        }
        let rho = rng.random_range(0.05..gains.influence_radius);
        let mut load = center + heading * (obstacle.radius + rho);
        if shape == Shape::Cylinder {
            load.z = rng.random_range(-10.0..10.0);
        }
        let clearance = obstacle.signed_distance(&load);
        // U_rep is only C⁰ at ρ = ρ0, and undefined on the surface.
        if clearance < 10.0 * SURFACE_EPS.max(h) || (clearance - gains.influence_radius).abs() < 1e-3 {
            continue;
        }
        if (load - target).norm() < 0.5 {
            continue;
        }

        let rep = repulsive_single(&load, &target, &obstacle, &gains);
        let att = attractive(&load, &target, &gains);
        let mut fd_rep = Vec3::zeros();
        let mut fd_att = Vec3::zeros();
        for a in 0..3 {
            let mut plus = load;
            let mut minus = load;
            plus[a] += h;
            minus[a] -= h;
            fd_rep[a] = -(repulsive_single(&plus, &target, &obstacle, &gains).potential[a]
                - repulsive_single(&minus, &target, &obstacle, &gains).potential[a])
                / (2.0 * h);
            fd_att[a] = -(attractive(&plus, &target, &gains).potential[a]
                - attractive(&minus, &target, &gains).potential[a])
                / (2.0 * h);
        }
        let rel = |fd: Vec3, f: Vec3| (fd - f).norm() / f.norm().max(1e-12);
        out.worst_repulsive = out.worst_repulsive.max(rel(fd_rep, rep.force));
        out.worst_attractive = out.worst_attractive.max(rel(fd_att, att.force));
        out.repulsive_checked += 1;
        out.attractive_checked += 1;
    }
    out
}

/// The 6-D sphere function.
pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Largest growth of `|S_axis|` above its running minimum, measured from
/// the first zero crossing on that axis. `None` for axes that never cross.
pub fn surface_regrowth(log: &RolloutLog) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let s: Vec<f64> = log.samples.iter().map(|x| x.surface[axis]).collect();
        let Some(first) = s.windows(2).position(|w| w[0] == 0.0 || w[0].signum() != w[1].signum()) else {
            continue;
        };
        let mut floor = f64::INFINITY;
        let mut worst: f64 = 0.0;
        for v in &s[first + 1..] {
            floor = floor.min(v.abs());
            worst = worst.max(v.abs() - floor);
        }
        *slot = Some(worst);
    }
    out
}

/// Smallest clearance of quadrotor or load over the log, recomputed from
/// positions rather than taken from the rollout's own bookkeeping.
pub fn recomputed_clearance(log: &RolloutLog, obstacles: &[Obstacle]) -> f64 {
    let mut world = obstacles.to_vec();
    let mut t_prev = 0.0;
    let mut worst = f64::INFINITY;
    for s in &log.samples {
        let dt = s.t - t_prev;
        for o in world.iter_mut() {
            o.center += o.velocity * dt;
        }
        t_prev = s.t;
        worst = worst.min(min_clearance(&s.quad_position, &world)).min(min_clearance(&s.load_position, &world));
    }
    worst
}
