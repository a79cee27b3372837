//! Command-line front end for `slungload`.
//!
//! Every run writes a bundle into `--out`: the CSV/JSON results plus
//! `manifest.json`, which carries the scenario text and every override, so
//! `slungload replay --manifest <bundle>/manifest.json` rebuilds the bundle
//! byte for byte.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 invalid scenario,
//! 3 simulation fault (the rollout ended in a fault or a collision).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use slungload::pso::OptimizationResult;
use slungload::sim::{fitness_with_penalty, gain_swarm, simulate, tune_with_dt, TUNING_DT};
use slungload::world::load_mission_seeded;
use slungload::{presets, ApfGains, FitnessReport, Mission, RolloutLog, Termination, Variant};

pub const TRAJECTORY_HEADER: &str =
    "t,rq_x,rq_y,rq_z,load_x,load_y,load_z,leader_x,leader_y,leader_z,err_norm,s_x,s_y,s_z,f,min_clearance";

#[derive(Parser, Debug)]
#[command(name = "slungload", version, about = "Quadrotor slung-load transport: simulate, tune and compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fly one mission and write its trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Six potential-field gains, from a `gains.json` written by `tune`.
        #[arg(long, env = "SLUNGLOAD_GAINS")]
        gains: Option<PathBuf>,
    },
    /// Tune the potential-field gains with one swarm variant.
    Tune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        swarm: SwarmArgs,
        #[arg(long, env = "SLUNGLOAD_VARIANT", default_value = "sapso")]
        variant: Variant,
    },
    /// Tune with all three variants from the same seed.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        swarm: SwarmArgs,
    },
    /// Rebuild an output bundle from its manifest.
    Replay {
        #[arg(long, env = "SLUNGLOAD_MANIFEST")]
        manifest: PathBuf,
        /// Write here instead of the directory recorded in the manifest.
        #[arg(long, env = "SLUNGLOAD_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file; a bundled preset name such as `presets/paper_sec4` also works.
    #[arg(long, env = "SLUNGLOAD_SCENARIO", default_value = "presets/paper_sec4")]
    scenario: String,
    /// Scenario seed for `simulate`, swarm seed for `tune` and `compare`.
    #[arg(long, env = "SLUNGLOAD_SEED")]
    seed: Option<u64>,
    /// Step size [s]: the mission step for `simulate`, the rollout step while tuning.
    #[arg(long, env = "SLUNGLOAD_DT", allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Mission horizon [s].
    #[arg(long, env = "SLUNGLOAD_HORIZON", allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long, env = "SLUNGLOAD_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SwarmArgs {
    #[arg(long, env = "SLUNGLOAD_PARTICLES", default_value_t = 50)]
    particles: usize,
    #[arg(long, env = "SLUNGLOAD_ITERS", default_value_t = 100)]
    iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Simulate,
    Tune,
    Compare,
}

/// Everything needed to reproduce an output bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    /// Scenario path as given on the command line.
    pub scenario: String,
    /// Scenario file contents at the time of the run.
    pub scenario_text: String,
    pub variants: Vec<String>,
    /// Gains flown by `simulate`, when they did not come from the scenario.
    pub gains: Option<[f64; 6]>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub particles: Option<usize>,
    pub iters: Option<usize>,
    pub horizon: Option<f64>,
    pub out: String,
    pub tool_version: String,
    /// Unix seconds; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Scenario(String),
    Fault(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => 1,
            Failure::Scenario(_) => 2,
            Failure::Fault(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Scenario(m) | Failure::Fault(m) | Failure::Io(m) => m,
        }
    }
}

/// Parse `argv` (program name first), run it and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<Vec<PathBuf>, Failure> {
    let manifest = match command {
        Command::Replay { manifest, out } => {
            let text = fs::read_to_string(&manifest).map_err(|e| io_error(&manifest, e))?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: not a run manifest: {e}", manifest.display())))?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&m.out));
            return replay(&m, &dir);
        }
        Command::Simulate { common, gains } => {
            let gains = gains.map(|p| read_gains(&p)).transpose()?;
            base_manifest(CommandKind::Simulate, &common, vec![], gains, None)?
        }
        Command::Tune { common, swarm, variant } => {
            base_manifest(CommandKind::Tune, &common, vec![variant.name().to_string()], None, Some(&swarm))?
        }
        Command::Compare { common, swarm } => {
            let names = Variant::ALL.iter().map(|v| v.name().to_string()).collect();
            base_manifest(CommandKind::Compare, &common, names, None, Some(&swarm))?
        }
    };
    let dir = PathBuf::from(&manifest.out);
    replay(&manifest, &dir)
}

fn base_manifest(
    command: CommandKind,
    common: &Common,
    variants: Vec<String>,
    gains: Option<[f64; 6]>,
    swarm: Option<&SwarmArgs>,
) -> Result<RunManifest, Failure> {
    Ok(RunManifest {
        command,
        scenario: common.scenario.clone(),
        scenario_text: read_scenario(&common.scenario)?,
        variants,
        gains,
        dt: common.dt,
        seed: common.seed,
        particles: swarm.map(|s| s.particles),
        iters: swarm.map(|s| s.iters),
        horizon: common.horizon,
        out: common.out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: timestamp(),
    })
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Read a scenario file, falling back to a bundled preset of the same name.
fn read_scenario(path: &str) -> Result<String, Failure> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) => {
            let stem = Path::new(path).file_stem().and_then(|s| s.to_str()).unwrap_or("");
            presets::by_name(stem)
                .map(str::to_string)
                .ok_or_else(|| Failure::Scenario(format!("scenario {path}: {e}")))
        }
    }
}

fn read_gains(path: &Path) -> Result<[f64; 6], Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("gains {}: {e}", path.display())))?;
    serde_json::from_value(value["vector"].clone())
        .map_err(|_| Failure::Usage(format!("gains {}: field `vector` must hold six numbers", path.display())))
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Build the mission a manifest describes.
pub fn mission_from(manifest: &RunManifest) -> Result<Mission, Failure> {
    let scenario_seed = match manifest.command {
        CommandKind::Simulate => manifest.seed,
        _ => None,
    };
    let mut mission = load_mission_seeded(&manifest.scenario_text, scenario_seed)
        .map_err(|e| Failure::Scenario(e.to_string()))?;
    if let Some(h) = manifest.horizon {
        mission.scenario.horizon = h;
    }
    if manifest.command == CommandKind::Simulate {
        if let Some(dt) = manifest.dt {
            mission.scenario.dt = dt;
        }
    }
    if let Some(g) = manifest.gains {
        mission.apf = mission.apf.with_vector(&g);
        mission.apf.validate().map_err(|e| Failure::Scenario(e.to_string()))?;
    }
    mission
        .scenario
        .validate(mission.apf.influence_radius)
        .map_err(|e| Failure::Scenario(e.to_string()))?;
    Ok(mission)
}

/// Run what `manifest` describes and write its bundle into `dir`.
pub fn replay(manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mission = mission_from(manifest)?;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    match manifest.command {
        CommandKind::Simulate => run_simulate(&mission, manifest, dir),
        CommandKind::Tune => run_tune(&mission, manifest, dir),
        CommandKind::Compare => run_compare(&mission, manifest, dir),
    }
}

fn run_simulate(mission: &Mission, manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let log = simulate(mission);
    let report = fitness_with_penalty(&log, &mission.scenario.target, mission.settings.collision_penalty);
    let summary = json!({
        "manifest": manifest,
        "gains": gains_json(&mission.apf),
        "termination": log.termination.describe(),
        "end_time": log.end_time(),
        "fitness": report_json(&report),
        "axis_settle_time": axis_settle_json(&log, mission.settings.settle_tolerance),
    });
    let paths = vec![
        write(dir, "trajectory.csv", &trajectory_csv(&log))?,
        write(dir, "summary.json", &pretty(&summary))?,
        write_manifest(dir, manifest)?,
    ];
    match &log.termination {
        Termination::Fault(f) => Err(Failure::Fault(format!(
            "simulation fault at t = {} s: {f} (outputs in {})",
            log.end_time(),
            dir.display()
        ))),
        Termination::Collision { obstacle } => Err(Failure::Fault(format!(
            "collision with obstacle {obstacle} at t = {} s (outputs in {})",
            log.end_time(),
            dir.display()
        ))),
        _ => Ok(paths),
    }
}

fn parse_variant(name: &str) -> Result<Variant, Failure> {
    name.parse().map_err(|_| Failure::Usage(format!("variant: unknown `{name}`")))
}

fn tune_one(mission: &Mission, manifest: &RunManifest, variant: Variant) -> Result<(ApfGains, OptimizationResult), Failure> {
    let mut swarm = gain_swarm(variant, manifest.seed.unwrap_or(mission.scenario.seed));
    swarm.particles = manifest.particles.unwrap_or(swarm.particles);
    swarm.iterations = manifest.iters.unwrap_or(swarm.iterations);
    let dt = manifest.dt.unwrap_or(TUNING_DT);
    tune_with_dt(mission, &swarm, dt).map_err(|e| Failure::Usage(e.to_string()))
}

fn run_tune(mission: &Mission, manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let name = manifest
        .variants
        .first()
        .ok_or_else(|| Failure::Usage("variant: none given".into()))?;
    let variant = parse_variant(name)?;
    let (gains, result) = tune_one(mission, manifest, variant)?;

    let tuned = Mission { apf: gains, ..mission.clone() };
    let log = simulate(&tuned);
    let report = fitness_with_penalty(&log, &tuned.scenario.target, tuned.settings.collision_penalty);

    let gains_file = json!({
        "variant": variant.name(),
        "best_fitness": result.best_fitness,
        "gains": gains_json(&gains),
        "vector": gains.to_vector(),
    });
    let summary = json!({
        "manifest": manifest,
        "variant": variant.name(),
        "best_fitness": result.best_fitness,
        "evaluations": result.evaluations,
        "gains": gains_json(&gains),
        "validation": {
            "dt": tuned.scenario.dt,
            "termination": log.termination.describe(),
            "end_time": log.end_time(),
            "fitness": report_json(&report),
            "axis_settle_time": axis_settle_json(&log, tuned.settings.settle_tolerance),
        },
    });
    Ok(vec![
        write(dir, "gains.json", &pretty(&gains_file))?,
        write(dir, "convergence.csv", &convergence_csv(&[(variant, &result)]))?,
        write(dir, "summary.json", &pretty(&summary))?,
        write_manifest(dir, manifest)?,
    ])
}

fn run_compare(mission: &Mission, manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut runs = Vec::new();
    for name in &manifest.variants {
        let variant = parse_variant(name)?;
        let (gains, result) = tune_one(mission, manifest, variant)?;
        runs.push((variant, gains, result));
    }
    let winner = runs
        .iter()
        .min_by(|a, b| a.2.best_fitness.total_cmp(&b.2.best_fitness))
        .map(|r| r.0.name());
    let results: Vec<Value> = runs
        .iter()
        .map(|(v, g, r)| {
            json!({
                "variant": v.name(),
                "best_fitness": r.best_fitness,
                "evaluations": r.evaluations,
                "gains": gains_json(g),
            })
        })
        .collect();
    let summary = json!({
        "manifest": manifest,
        "results": results,
        "winner": winner,
    });
    let histories: Vec<(Variant, &OptimizationResult)> = runs.iter().map(|(v, _, r)| (*v, r)).collect();
    Ok(vec![
        write(dir, "convergence.csv", &convergence_csv(&histories))?,
        write(dir, "summary.json", &pretty(&summary))?,
        write_manifest(dir, manifest)?,
    ])
}

fn gains_json(g: &ApfGains) -> Value {
    let v = g.to_vector();
    json!({
        "k_xm": v[0], "k_ym": v[1], "k_zm": v[2],
        "k_xt": v[3], "k_yt": v[4], "k_zt": v[5],
    })
}

fn report_json(r: &FitnessReport) -> Value {
    json!({
        "cost": r.cost,
        "final_error": r.final_error,
        "settle_time": r.settle_time,
        "min_clearance": r.min_clearance,
        "collided": r.collided,
    })
}

fn axis_settle_json(log: &RolloutLog, tol: f64) -> Value {
    json!({
        "x": log.axis_settle_time(0, tol),
        "y": log.axis_settle_time(1, tol),
        "z": log.axis_settle_time(2, tol),
    })
}

/// One row per logged step; floats use Rust's shortest round-trip form.
pub fn trajectory_csv(log: &RolloutLog) -> String {
    let mut out = String::with_capacity(64 + log.samples.len() * 256);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &log.samples {
        let err = (s.load_position - log.target).norm();
        let fields = [
            s.t,
            s.quad_position.x,
            s.quad_position.y,
            s.quad_position.z,
            s.load_position.x,
            s.load_position.y,
            s.load_position.z,
            s.leader_position.x,
            s.leader_position.y,
            s.leader_position.z,
            err,
            s.surface.x,
            s.surface.y,
            s.surface.z,
            s.thrust,
            s.clearance,
        ];
        for (i, v) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// `iter` from 1 plus one best-so-far column per variant.
pub fn convergence_csv(runs: &[(Variant, &OptimizationResult)]) -> String {
    let mut out = String::from("iter");
    for (v, _) in runs {
        out.push(',');
        out.push_str(v.name());
    }
    out.push('\n');
    let rows = runs.iter().map(|(_, r)| r.history.len()).max().unwrap_or(0);
    for k in 0..rows {
        let _ = write!(out, "{}", k + 1);
        for (_, r) in runs {
            out.push(',');
            if let Some(f) = r.history.get(k) {
                let _ = write!(out, "{f}");
            }
        }
        out.push('\n');
    }
    out
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, Failure> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest always serializes");
    write(dir, "manifest.json", &(text + "\n"))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    Ok(path)
}
