//! Bundled scenario files.

use crate::world::{load_mission, Mission};

/// Reference mission: three-link payload, target `(45, 60, -10)`, a fixed
/// seeded obstacle layout of tall static columns and drifting spheres.
pub const PAPER_SEC4: &str = include_str!("../../../presets/paper_sec4");

pub fn paper_sec4() -> Mission {
    load_mission(PAPER_SEC4).expect("bundled preset is valid")
}

/// Look up a bundled preset by name (the file stem under `presets/`).
pub fn by_name(name: &str) -> Option<&'static str> {
    match name {
        "paper_sec4" => Some(PAPER_SEC4),
        _ => None,
    }
}
