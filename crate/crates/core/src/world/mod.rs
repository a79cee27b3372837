//! Obstacles, their kinematics and clearance queries, plus scenario handling.

mod disturbance;
mod scenario;

pub use disturbance::{Disturbance, DisturbanceMode, DisturbanceSpec};
pub use scenario::{load_mission, load_mission_seeded, load_scenario, Mission, Scenario, MOVING_SPEED_RANGE};

use crate::Vec3;

/// Smallest clearance reported to the potential field, which divides by ρ².
pub const CLEARANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Infinitely tall cylinder with a vertical axis through `center.xy`.
    Cylinder,
    Sphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub id: u32,
    pub shape: Shape,
    pub center: Vec3,
    pub radius: f64,
    /// Zero for static obstacles. Cylinders never move vertically.
    pub velocity: Vec3,
}

impl Obstacle {
    pub fn fixed(id: u32, shape: Shape, center: Vec3, radius: f64) -> Self {
        Self {
            id,
            shape,
            center,
            radius,
            velocity: Vec3::zeros(),
        }
    }

    pub fn is_moving(&self) -> bool {
        self.velocity != Vec3::zeros()
    }

    /// Vector from the nearest point of the center (or axis) to `point`.
    fn offset(&self, point: &Vec3) -> Vec3 {
        let d = point - self.center;
        match self.shape {
            Shape::Sphere => d,
            Shape::Cylinder => Vec3::new(d.x, d.y, 0.0),
        }
    }

    /// Distance from `point` to the surface; negative inside.
    pub fn signed_distance(&self, point: &Vec3) -> f64 {
        self.offset(point).norm() - self.radius
    }
}

/// Result of a clearance query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearance {
    /// Surface distance, floored at [`CLEARANCE_FLOOR`].
    pub distance: f64,
    /// Unit gradient of the distance with respect to the query point.
    pub gradient: Vec3,
    /// Set when the point sits exactly on the center or axis and the
    /// gradient fell back to `+x`.
    pub degenerate: bool,
}

/// Surface distance from `point` to `obstacle` and its gradient.
pub fn obstacle_clearance(point: &Vec3, obstacle: &Obstacle) -> Clearance {
    let offset = obstacle.offset(point);
    let norm = offset.norm();
    if norm == 0.0 {
        return Clearance {
            distance: CLEARANCE_FLOOR,
            gradient: Vec3::x(),
            degenerate: true,
        };
    }
    Clearance {
        distance: (norm - obstacle.radius).max(CLEARANCE_FLOOR),
        gradient: offset / norm,
        degenerate: false,
    }
}

/// Constant-velocity advance of every obstacle by `dt`.
pub fn advance_obstacles(world: &[Obstacle], dt: f64) -> Vec<Obstacle> {
    world
        .iter()
        .map(|o| Obstacle {
            center: o.center + o.velocity * dt,
            ..o.clone()
        })
        .collect()
}

/// In-place variant of [`advance_obstacles`] used by the rollout loop.
pub fn advance_obstacles_in_place(world: &mut [Obstacle], dt: f64) {
    for o in world.iter_mut().filter(|o| o.is_moving()) {
        o.center += o.velocity * dt;
    }
}

/// Smallest signed surface distance from `point` over all obstacles.
pub fn min_clearance(point: &Vec3, world: &[Obstacle]) -> f64 {
    world
        .iter()
        .map(|o| o.signed_distance(point))
        .fold(f64::INFINITY, f64::min)
}
