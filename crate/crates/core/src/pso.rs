//! Particle swarm optimization over a bounded box.
//!
//! Velocity update per particle `i` and dimension `j`:
//!
//! ```text
//! v' = w v + c1 r1 (pbest - x) + c2 r2 (gbest - x),   x' = x + v'
//! ```
//!
//! with `r1, r2 ~ U[0, 1]` drawn per dimension. Velocities are clamped to
//! `±v_max`; positions are clipped to the box and the velocity component is
//! zeroed wherever clipping happened.
//!
//! Three coefficient schedules are provided, see [`Variant`]. Every particle
//! owns a ChaCha stream derived from the seed, so results do not depend on
//! whether fitness evaluations run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Constant `w`, `c1`, `c2`.
    Classic,
    /// Time-varying inertia weight `w = w_max - (w_max - w_min) cos(πk / 2K)`.
    Tviw,
    /// Self-adaptive: `w = 1 - exp(-V̄/V_max)`, `c1 = α w`, `c2 = α - c1`.
    Sapso,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Classic, Variant::Tviw, Variant::Sapso];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::Tviw => "tviw",
            Variant::Sapso => "sapso",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classic" => Ok(Variant::Classic),
            "tviw" => Ok(Variant::Tviw),
            "sapso" => Ok(Variant::Sapso),
            other => Err(Error::invalid("variant", format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    /// `(lo, hi)` per dimension.
    pub bounds: Vec<(f64, f64)>,
    /// Velocity clamp per dimension.
    pub max_velocity: Vec<f64>,
    pub variant: Variant,
    /// Classic inertia weight.
    pub inertia: f64,
    /// `(w_min, w_max)` for the time-varying schedule.
    pub inertia_range: (f64, f64),
    /// Run the time-varying schedule from `w_max` down to `w_min` instead.
    pub tviw_decreasing: bool,
    /// Self-adaptive total acceleration `α = c1 + c2`.
    pub alpha: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    /// Evaluate fitness on the rayon pool.
    pub parallel: bool,
}

impl SwarmConfig {
    /// Defaults: 50 particles, 100 iterations, `w = 0.6`, `w ∈ [0.5, 0.9]`,
    /// `c1 = c2 = 2`, `α = 4`, `v_max = 0.2 (hi - lo)`.
    pub fn new(variant: Variant, bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        let max_velocity = bounds.iter().map(|(lo, hi)| 0.2 * (hi - lo)).collect();
        Self {
            particles: 50,
            iterations: 100,
            bounds,
            max_velocity,
            variant,
            inertia: 0.6,
            inertia_range: (0.5, 0.9),
            tviw_decreasing: false,
            alpha: 4.0,
            cognitive: 2.0,
            social: 2.0,
            seed,
            parallel: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::invalid("swarm.particles", "at least 2 particles"));
        }
        if self.iterations < 1 {
            return Err(Error::invalid("swarm.iterations", "at least 1 iteration"));
        }
        if self.bounds.is_empty() {
            return Err(Error::invalid("swarm.bounds", "at least one dimension"));
        }
        if let Some(j) = self.bounds.iter().position(|(lo, hi)| !(lo < hi)) {
            return Err(Error::invalid(format!("swarm.bounds[{j}]"), "lo < hi"));
        }
        if self.max_velocity.len() != self.dim() || self.max_velocity.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("swarm.max_velocity", "one positive clamp per dimension"));
        }
        let (w_min, w_max) = self.inertia_range;
        if !(0.0 < w_min && w_min < w_max) {
            return Err(Error::invalid("swarm.inertia_range", "0 < w_min < w_max"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("swarm.alpha", "alpha > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

/// Mean absolute velocity component and mean clamp magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmStats {
    pub mean_speed: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Index of this particle's random stream.
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness after each iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Coefficients for iteration `k` of `cfg.iterations`.
pub fn schedule(variant: Variant, k: usize, stats: SwarmStats, cfg: &SwarmConfig) -> Coefficients {
    match variant {
        Variant::Classic => Coefficients {
            inertia: cfg.inertia,
            cognitive: cfg.cognitive,
            social: cfg.social,
        },
        Variant::Tviw => {
            let (w_min, w_max) = cfg.inertia_range;
            let c = (std::f64::consts::PI * k as f64 / (2.0 * cfg.iterations as f64)).cos();
            let inertia = if cfg.tviw_decreasing {
                w_min + (w_max - w_min) * c
            } else {
                w_max - (w_max - w_min) * c
            };
            Coefficients {
                inertia,
                cognitive: cfg.cognitive,
                social: cfg.social,
            }
        }
        Variant::Sapso => {
            let w = 1.0 - (-stats.mean_speed / stats.max_speed).exp();
            let cognitive = cfg.alpha * w;
            Coefficients {
                inertia: w,
                cognitive,
                social: cfg.alpha - cognitive,
            }
        }
    }
}

pub fn swarm_stats(particles: &[Particle], cfg: &SwarmConfig) -> SwarmStats {
    let total: f64 = particles.iter().flat_map(|p| p.velocity.iter()).map(|v| v.abs()).sum();
    let count = (particles.len() * cfg.dim()) as f64;
    SwarmStats {
        mean_speed: total / count,
        max_speed: cfg.max_velocity.iter().map(|v| v.abs()).sum::<f64>() / cfg.dim() as f64,
    }
}

/// Move one particle given its random draws `r1`, `r2` (one per dimension).
pub fn update_particle(
    p: &Particle,
    gbest: &[f64],
    c: Coefficients,
    r1: &[f64],
    r2: &[f64],
    cfg: &SwarmConfig,
) -> Particle {
    let mut next = p.clone();
    for j in 0..cfg.dim() {
        let x = p.position[j];
        let vmax = cfg.max_velocity[j];
        let v = c.inertia * p.velocity[j]
            + c.cognitive * r1[j] * (p.best_position[j] - x)
            + c.social * r2[j] * (gbest[j] - x);
        let mut v = v.clamp(-vmax, vmax);
        let (lo, hi) = cfg.bounds[j];
        let mut x = x + v;
        if x < lo {
            x = lo;
            v = 0.0;
        } else if x > hi {
            x = hi;
            v = 0.0;
        }
        next.position[j] = x;
        next.velocity[j] = v;
    }
    next
}

fn particle_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Minimise `fitness` over `cfg.bounds`.
///
/// Each of the `K` iterations evaluates the whole swarm, updates personal and
/// global bests (strict improvement only, in particle order) and records the
/// global best, then moves the particles. Non-finite fitness counts as `+∞`.
pub fn optimize<F>(fitness: F, cfg: &SwarmConfig) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let dim = cfg.dim();
    let mut rngs: Vec<ChaCha8Rng> = (0..cfg.particles as u64).map(|i| particle_rng(cfg.seed, i)).collect();
    let mut swarm: Vec<Particle> = rngs
        .iter_mut()
        .enumerate()
        .map(|(i, rng)| {
            let position: Vec<f64> = cfg.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
            let velocity = cfg.max_velocity.iter().map(|&v| rng.random_range(-v..=v)).collect();
            Particle {
                best_position: position.clone(),
                position,
                velocity,
                best_fitness: f64::INFINITY,
                stream: i as u64,
            }
        })
        .collect();

    let evaluate = |x: &Vec<f64>| {
        let f = fitness(x);
        if f.is_finite() {
            f
        } else {
            log::warn!("non-finite fitness {f} at {x:?}, treated as +inf");
            f64::INFINITY
        }
    };

    let mut best_position = swarm[0].position.clone();
    let mut best_fitness = f64::INFINITY;
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut evaluations = 0;
    let mut r1 = vec![0.0; dim];
    let mut r2 = vec![0.0; dim];

    for k in 0..cfg.iterations {
        let values: Vec<f64> = if cfg.parallel {
            swarm.par_iter().map(|p| evaluate(&p.position)).collect()
        } else {
            swarm.iter().map(|p| evaluate(&p.position)).collect()
        };
        evaluations += values.len();
        for (p, &f) in swarm.iter_mut().zip(&values) {
            if f < p.best_fitness {
                p.best_fitness = f;
                p.best_position.clone_from(&p.position);
            }
            if f < best_fitness {
                best_fitness = f;
                best_position.clone_from(&p.position);
            }
        }
        history.push(best_fitness);
        log::debug!("{} iteration {k}: best {best_fitness:.6}", cfg.variant);

        if k + 1 == cfg.iterations {
            break;
        }
        let coeffs = schedule(cfg.variant, k, swarm_stats(&swarm, cfg), cfg);
        for (p, rng) in swarm.iter_mut().zip(rngs.iter_mut()) {
            for j in 0..dim {
                r1[j] = rng.random::<f64>();
                r2[j] = rng.random::<f64>();
            }
            *p = update_particle(p, &best_position, coeffs, &r1, &r2, cfg);
        }
    }

    Ok(OptimizationResult {
        best_position,
        best_fitness,
        history,
        evaluations,
    })
}
