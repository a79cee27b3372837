use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DisturbanceMode {
    #[default]
    None,
    /// The bound itself, applied for the whole rollout.
    Constant,
    /// A seeded sum of sinusoids whose amplitudes add up to the bound.
    BandLimited,
}

/// Bounded external force and torque acting on the quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceSpec {
    pub mode: DisturbanceMode,
    /// Elementwise bound on the force disturbance [N].
    pub force_bound: Vec3,
    /// Elementwise bound on the torque disturbance [N·m].
    pub torque_bound: Vec3,
}

const HARMONICS: usize = 4;
/// Frequency band of the band-limited mode [Hz].
const BAND: (f64, f64) = (0.05, 2.0);

#[derive(Debug, Clone, Copy)]
struct Harmonic {
    weight: f64,
    omega: f64,
    phase: f64,
}

/// A realized disturbance: a deterministic function of time.
#[derive(Debug, Clone)]
pub struct Disturbance {
    spec: DisturbanceSpec,
    /// Six channels: force x,y,z then torque x,y,z.
    channels: Vec<[Harmonic; HARMONICS]>,
}

impl Disturbance {
    pub fn new(spec: DisturbanceSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0xd157);
        let channels = (0..6)
            .map(|_| {
                let mut h = [Harmonic { weight: 0.0, omega: 0.0, phase: 0.0 }; HARMONICS];
                let mut total = 0.0;
                for item in h.iter_mut() {
                    item.weight = rng.random_range(0.1..1.0);
                    item.omega = 2.0 * std::f64::consts::PI * rng.random_range(BAND.0..BAND.1);
                    item.phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                    total += item.weight;
                }
                h.iter_mut().for_each(|item| item.weight /= total);
                h
            })
            .collect();
        Self { spec, channels }
    }

    pub fn none() -> Self {
        Self::new(DisturbanceSpec::default(), 0)
    }

    fn channel(&self, c: usize, t: f64) -> f64 {
        self.channels[c]
            .iter()
            .map(|h| h.weight * (h.omega * t + h.phase).sin())
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }

    /// `(force, torque)` at time `t`.
    pub fn sample(&self, t: f64) -> (Vec3, Vec3) {
        let s = &self.spec;
        match s.mode {
            DisturbanceMode::None => (Vec3::zeros(), Vec3::zeros()),
            DisturbanceMode::Constant => (s.force_bound, s.torque_bound),
            DisturbanceMode::BandLimited => {
                let f = Vec3::from_fn(|i, _| s.force_bound[i] * self.channel(i, t));
                let tau = Vec3::from_fn(|i, _| s.torque_bound[i] * self.channel(3 + i, t));
                (f, tau)
            }
        }
    }
}
