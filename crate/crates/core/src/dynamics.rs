//! Euler-Lagrange model of a quadrotor towing an `n`-link rigid cable.
//!
//! Translational and link states are collected as `X = [v_q, ω_1, …, ω_n]`
//! with `M(q) Ẋ = T − C(q, ω)`. Link `i` points from its upper joint towards
//! its lower mass, `q̇_i = ω_i × q_i`, and the payload is the mass of link `n`.
//! Attitude uses ZYX Euler angles with body rates.

use nalgebra::{DMatrix, DVector};

use crate::{e3, Error, Mat3, Result, Vec3, GRAVITY};

/// Largest pitch magnitude tolerated before the Euler parametrisation is
/// considered unusable.
pub const GIMBAL_LIMIT: f64 = 80.0 * std::f64::consts::PI / 180.0;

/// Mass-matrix condition estimate above which a solve is refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Physical and numerical faults raised while integrating a rollout.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Fault {
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
    #[error("mass matrix ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("pitch {0:.1} deg is too close to gimbal lock")]
    GimbalLock(f64),
    #[error("commanded force too small to define a thrust direction")]
    DegenerateThrust,
    #[error("state became non-finite")]
    NonFinite,
    #[error("leader stalled in a potential-field local minimum")]
    ApfLocalMinimum,
}

impl Fault {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Fault::SingularMassMatrix => "singular-mass-matrix",
            Fault::IllConditioned(_) => "ill-conditioned-mass-matrix",
            Fault::GimbalLock(_) => "gimbal-lock",
            Fault::DegenerateThrust => "degenerate-thrust",
            Fault::NonFinite => "non-finite-state",
            Fault::ApfLocalMinimum => "apf-local-minimum",
        }
    }
}

/// Masses, lengths and inertia of the quadrotor and its cable links.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub quad_mass: f64,
    pub inertia: Mat3,
    inertia_inv: Mat3,
    /// Link masses from the quadrotor downwards; the last entry is the payload.
    pub link_masses: Vec<f64>,
    pub link_lengths: Vec<f64>,
    pub gravity: f64,
    /// `tail[i] = Σ_{a ≥ i} m_a`
    tail: Vec<f64>,
}

impl ModelParams {
    pub fn new(
        quad_mass: f64,
        inertia: Mat3,
        link_masses: Vec<f64>,
        link_lengths: Vec<f64>,
        gravity: f64,
    ) -> Result<Self> {
        if link_masses.is_empty() {
            return Err(Error::invalid("model.link_masses", "at least one link is required"));
        }
        if link_masses.len() != link_lengths.len() {
            return Err(Error::invalid(
                "model.link_lengths",
                format!("{} lengths for {} masses", link_lengths.len(), link_masses.len()),
            ));
        }
        if !(quad_mass > 0.0) {
            return Err(Error::invalid("model.quad_mass", "mass > 0"));
        }
        if let Some(i) = link_masses.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::invalid(format!("model.link_masses[{i}]"), "mass > 0"));
        }
        if let Some(i) = link_lengths.iter().position(|l| !(*l > 0.0)) {
            return Err(Error::invalid(format!("model.link_lengths[{i}]"), "length > 0"));
        }
        if !(gravity.is_finite() && gravity >= 0.0) {
            return Err(Error::invalid("model.gravity", "finite and >= 0"));
        }
        if (inertia - inertia.transpose()).abs().max() > 1e-12 * inertia.abs().max() {
            return Err(Error::invalid("model.inertia", "must be symmetric"));
        }
        if inertia.cholesky().is_none() {
            return Err(Error::invalid("model.inertia", "must be positive definite"));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::invalid("model.inertia", "must be invertible"))?;
        let mut tail = vec![0.0; link_masses.len()];
        let mut acc = 0.0;
        for i in (0..link_masses.len()).rev() {
            acc += link_masses[i];
            tail[i] = acc;
        }
        Ok(Self {
            quad_mass,
            inertia,
            inertia_inv,
            link_masses,
            link_lengths,
            gravity,
            tail,
        })
    }

    /// Three 0.25 m links of 0.05, 0.05 and 0.25 kg under a 0.775 kg quadrotor.
    pub fn reference() -> Self {
        Self::new(
            0.775,
            Mat3::from_diagonal(&Vec3::new(0.577e-2, 0.577e-2, 1.05e-2)),
            vec![0.05, 0.05, 0.25],
            vec![0.25; 3],
            GRAVITY,
        )
        .expect("reference parameters are valid")
    }

    /// Number of cable links.
    pub fn links(&self) -> usize {
        self.link_masses.len()
    }

    /// Dimension of `X = [v_q, ω_1..ω_n]`.
    pub fn dof(&self) -> usize {
        3 + 3 * self.links()
    }

    /// `M_T`: quadrotor plus every link.
    pub fn total_mass(&self) -> f64 {
        self.quad_mass + self.tail[0]
    }

    /// `M_qi`: mass hanging at or below link `i`.
    pub fn tail_mass(&self, i: usize) -> f64 {
        self.tail[i]
    }

    /// `M_cij = M_q,max(i,j)`.
    pub fn coupling_mass(&self, i: usize, j: usize) -> f64 {
        self.tail[i.max(j)]
    }

    pub fn cable_length(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }
}

/// Full mechanical state.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Unit link directions.
    pub links: Vec<Vec3>,
    /// Link angular velocities, orthogonal to their links.
    pub link_rates: Vec<Vec3>,
    /// (roll φ, pitch θ, yaw ψ)
    pub euler: Vec3,
    pub body_rates: Vec3,
}

impl SystemState {
    /// At rest and level with every link hanging along gravity.
    pub fn hanging(position: Vec3, links: usize) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            links: vec![e3(); links],
            link_rates: vec![Vec3::zeros(); links],
            euler: Vec3::zeros(),
            body_rates: Vec3::zeros(),
        }
    }

    /// Project onto the constraint manifold: unit links, rates tangent to them.
    pub fn project(&mut self) {
        for (q, w) in self.links.iter_mut().zip(self.link_rates.iter_mut()) {
            *q /= q.norm();
            *w -= *q * q.dot(w);
        }
    }

    pub fn is_finite(&self) -> bool {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        finite(&self.position)
            && finite(&self.velocity)
            && finite(&self.euler)
            && finite(&self.body_rates)
            && self.links.iter().all(finite)
            && self.link_rates.iter().all(finite)
    }

    /// Stacked `X = [v_q, ω_1, …, ω_n]`.
    pub fn generalized_velocity(&self) -> DVector<f64> {
        let mut x = DVector::zeros(3 + 3 * self.links.len());
        x.fixed_rows_mut::<3>(0).copy_from(&self.velocity);
        for (i, w) in self.link_rates.iter().enumerate() {
            x.fixed_rows_mut::<3>(3 + 3 * i).copy_from(w);
        }
        x
    }
}

/// Inputs acting on the quadrotor during one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WrenchInput {
    /// Thrust magnitude, applied along `-R e3`.
    pub thrust: f64,
    /// Body-frame torque.
    pub torque: Vec3,
    pub force_disturbance: Vec3,
    pub torque_disturbance: Vec3,
}

impl WrenchInput {
    /// Thrust balancing the total weight, nothing else.
    pub fn hover(p: &ModelParams) -> Self {
        Self {
            thrust: p.total_mass() * p.gravity,
            ..Default::default()
        }
    }
}

/// Skew-symmetric matrix with `hat(v) * w == v × w`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// ZYX rotation `R = Rz(ψ) Ry(θ) Rx(φ)` from body to inertial frame.
pub fn rotation(euler: &Vec3) -> Mat3 {
    let (sr, cr) = euler.x.sin_cos();
    let (sp, cp) = euler.y.sin_cos();
    let (sy, cy) = euler.z.sin_cos();
    Mat3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Euler-angle rates from body rates for the ZYX sequence.
pub fn euler_rates(euler: &Vec3, body_rates: &Vec3) -> Vec3 {
    let (sr, cr) = euler.x.sin_cos();
    let (tp, cp) = (euler.y.tan(), euler.y.cos());
    let (p, q, r) = (body_rates.x, body_rates.y, body_rates.z);
    Vec3::new(
        p + (q * sr + r * cr) * tp,
        q * cr - r * sr,
        (q * sr + r * cr) / cp,
    )
}

/// Mass matrix `M` for `X = [v_q, ω_1, …, ω_n]`.
///
/// ```text
/// M = | M_T I        -M_q1 l1 q̂1 …  |
///     | M_q1 l1 q̂1   M_c11 l1² I  -M_c12 l1 l2 q̂1 q̂2 … |
///     | …                                   |
/// ```
pub fn mass_matrix(state: &SystemState, p: &ModelParams) -> DMatrix<f64> {
    let d = p.dof();
    let mut flat = vec![0.0; d * d];
    fill_mass_matrix(|i| state.links[i], p, &mut flat, true);
    DMatrix::from_row_slice(d, d, &flat)
}

/// Row-major fill of `M` into `out` (length `d²`). With `full == false` only
/// the lower triangle of blocks is written, which is all Cholesky reads.
fn fill_mass_matrix(q: impl Fn(usize) -> Vec3, p: &ModelParams, out: &mut [f64], full: bool) {
    let n = p.links();
    let d = p.dof();
    let mut put = |r: usize, c: usize, b: &Mat3| {
        for a in 0..3 {
            out[(r + a) * d + c..(r + a) * d + c + 3].copy_from_slice(&[b[(a, 0)], b[(a, 1)], b[(a, 2)]]);
        }
    };
    put(0, 0, &(Mat3::identity() * p.total_mass()));
    for i in 0..n {
        let li = p.link_lengths[i];
        let hi = hat(&q(i));
        let coupling = hi * (p.tail_mass(i) * li);
        if full {
            put(0, 3 + 3 * i, &(-coupling));
        }
        put(3 + 3 * i, 0, &coupling);
        let upper = if full { n } else { i + 1 };
        for j in 0..upper {
            let lj = p.link_lengths[j];
            let block = if i == j {
                Mat3::identity() * (p.coupling_mass(i, i) * li * li)
            } else {
                -(hi * hat(&q(j))) * (p.coupling_mass(i, j) * li * lj)
            };
            put(3 + 3 * i, 3 + 3 * j, &block);
        }
    }
}

/// In-place Cholesky of the row-major SPD matrix `a`, then solve `a x = b`
/// overwriting `b`. Returns the condition estimate `(max L_ii / min L_ii)²`.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], d: usize) -> Result<f64, Fault> {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    for j in 0..d {
        let diag = a[j * d + j] - dot(&a[j * d..j * d + j], &a[j * d..j * d + j]);
        if diag.is_nan() {
            return Err(Fault::NonFinite);
        }
        if diag <= 0.0 {
            return Err(Fault::SingularMassMatrix);
        }
        let ljj = diag.sqrt();
        a[j * d + j] = ljj;
        let (head, tail) = a.split_at_mut((j + 1) * d);
        let row_j = &head[j * d..j * d + j];
        for row_i in tail.chunks_exact_mut(d) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) / ljj;
        }
    }
    for i in 0..d {
        b[i] = (b[i] - dot(&a[i * d..i * d + i], &b[..i])) / a[i * d + i];
    }
    for i in (0..d).rev() {
        let mut v = b[i];
        for k in i + 1..d {
            v -= a[k * d + i] * b[k];
        }
        b[i] = v / a[i * d + i];
    }
    let (lo, hi) = (0..d)
        .map(|i| a[i * d + i])
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    Ok((hi / lo).powi(2))
}

/// Velocity-product and gravity terms `C`.
///
/// Translational block: `-Σ M_qi l_i ‖ω_i‖² q_i - M_T g e3`.
/// Link block `i`: `-Σ_{j≠i} M_cij l_i l_j ‖ω_j‖² q̂_i q_j - M_qi g l_i q̂_i e3`.
pub fn coriolis_vector(state: &SystemState, p: &ModelParams) -> DVector<f64> {
    let mut c = DVector::zeros(p.dof());
    fill_coriolis(|i| state.links[i], |i| state.link_rates[i], p, c.as_mut_slice());
    c
}

fn fill_coriolis(q: impl Fn(usize) -> Vec3, w: impl Fn(usize) -> Vec3, p: &ModelParams, out: &mut [f64]) {
    let n = p.links();
    let g = p.gravity;
    // ‖ω_j‖² l_j, reused by every block
    let mut spin = [0.0; 8];
    let mut spin_vec;
    let spin: &mut [f64] = if n <= spin.len() {
        &mut spin[..n]
    } else {
        spin_vec = vec![0.0; n];
        &mut spin_vec
    };
    for (j, s) in spin.iter_mut().enumerate() {
        *s = w(j).norm_squared() * p.link_lengths[j];
    }
    let mut trans = -p.total_mass() * g * e3();
    for i in 0..n {
        trans -= q(i) * (p.tail_mass(i) * spin[i]);
    }
    out[..3].copy_from_slice(trans.as_slice());
    for i in 0..n {
        let qi = q(i);
        let li = p.link_lengths[i];
        let mut sum = Vec3::zeros();
        for j in (0..n).filter(|&j| j != i) {
            sum += q(j) * (p.coupling_mass(i, j) * li * spin[j]);
        }
        let block = -qi.cross(&sum) - qi.cross(&e3()) * (p.tail_mass(i) * g * li);
        out[3 + 3 * i..6 + 3 * i].copy_from_slice(block.as_slice());
    }
}

/// Generalized input `T = [-f R e3 + F_dis, 0, …]`.
pub fn input_vector(state: &SystemState, u: &WrenchInput, p: &ModelParams) -> DVector<f64> {
    let mut t = DVector::zeros(p.dof());
    let thrust = -u.thrust * (rotation(&state.euler) * e3()) + u.force_disturbance;
    t.fixed_rows_mut::<3>(0).copy_from(&thrust);
    t
}

/// Translational and link accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct Accelerations {
    pub linear: Vec3,
    pub link: Vec<Vec3>,
}

/// Solve `M Ẋ = T − C` by Cholesky factorisation.
pub fn solve_accelerations(
    state: &SystemState,
    u: &WrenchInput,
    p: &ModelParams,
) -> Result<Accelerations, Fault> {
    let d = p.dof();
    let mut m = vec![0.0; d * d];
    let mut x = vec![0.0; d];
    accelerations_into(|i| state.links[i], |i| state.link_rates[i], &state.euler, u, p, &mut m, &mut x)?;
    let at = |o: usize| Vec3::new(x[o], x[o + 1], x[o + 2]);
    Ok(Accelerations {
        linear: at(0),
        link: (0..p.links()).map(|i| at(3 + 3 * i)).collect(),
    })
}

fn accelerations_into(
    q: impl Fn(usize) -> Vec3,
    w: impl Fn(usize) -> Vec3,
    euler: &Vec3,
    u: &WrenchInput,
    p: &ModelParams,
    m: &mut [f64],
    x: &mut [f64],
) -> Result<(), Fault> {
    let d = p.dof();
    fill_mass_matrix(&q, p, m, false);
    fill_coriolis(&q, w, p, x);
    x.iter_mut().for_each(|c| *c = -*c);
    let thrust = -u.thrust * (rotation(euler) * e3()) + u.force_disturbance;
    for k in 0..3 {
        x[k] += thrust[k];
    }
    let condition = cholesky_solve(m, x, d)?;
    if !(condition <= CONDITION_LIMIT) {
        return Err(Fault::IllConditioned(condition));
    }
    Ok(())
}

// Flat layout of an integrated state: position, velocity, euler angles,
// body rates, then the n link directions, then the n link rates.
const HEAD: usize = 12;

fn v3(y: &[f64], o: usize) -> Vec3 {
    Vec3::new(y[o], y[o + 1], y[o + 2])
}

fn pack(state: &SystemState, y: &mut [f64]) {
    let n = state.links.len();
    for (k, v) in [state.position, state.velocity, state.euler, state.body_rates].iter().enumerate() {
        y[3 * k..3 * k + 3].copy_from_slice(v.as_slice());
    }
    for i in 0..n {
        y[HEAD + 3 * i..HEAD + 3 * i + 3].copy_from_slice(state.links[i].as_slice());
        y[HEAD + 3 * (n + i)..HEAD + 3 * (n + i) + 3].copy_from_slice(state.link_rates[i].as_slice());
    }
}

fn unpack(y: &[f64], state: &mut SystemState) {
    let n = state.links.len();
    state.position = v3(y, 0);
    state.velocity = v3(y, 3);
    state.euler = v3(y, 6);
    state.body_rates = v3(y, 9);
    for i in 0..n {
        state.links[i] = v3(y, HEAD + 3 * i);
        state.link_rates[i] = v3(y, HEAD + 3 * (n + i));
    }
}

/// Reusable buffers for [`step`]; keeps the integrator allocation-free.
#[derive(Debug, Clone)]
pub struct Stepper {
    links: usize,
    y: Vec<f64>,
    stage: Vec<f64>,
    k: [Vec<f64>; 4],
    mass: Vec<f64>,
    accel: Vec<f64>,
}

impl Stepper {
    pub fn new(links: usize) -> Self {
        let len = HEAD + 6 * links;
        let d = 3 + 3 * links;
        Self {
            links,
            y: vec![0.0; len],
            stage: vec![0.0; len],
            k: std::array::from_fn(|_| vec![0.0; len]),
            mass: vec![0.0; d * d],
            accel: vec![0.0; d],
        }
    }

    fn derivative(&mut self, from_stage: bool, u: &WrenchInput, p: &ModelParams, slot: usize) -> Result<(), Fault> {
        let n = self.links;
        let y = if from_stage { &self.stage } else { &self.y };
        let dy = &mut self.k[slot];
        accelerations_into(
            |i| v3(y, HEAD + 3 * i),
            |i| v3(y, HEAD + 3 * (n + i)),
            &v3(y, 6),
            u,
            p,
            &mut self.mass,
            &mut self.accel,
        )?;
        let euler = v3(y, 6);
        let rates = v3(y, 9);
        let gyro = rates.cross(&(p.inertia * rates));
        let body_accel = p.inertia_inv() * (u.torque + u.torque_disturbance - gyro);
        let euler_dot = euler_rates(&euler, &rates);
        dy[..3].copy_from_slice(&y[3..6]);
        dy[3..6].copy_from_slice(&self.accel[..3]);
        dy[6..9].copy_from_slice(euler_dot.as_slice());
        dy[9..12].copy_from_slice(body_accel.as_slice());
        for i in 0..n {
            let q_dot = v3(y, HEAD + 3 * (n + i)).cross(&v3(y, HEAD + 3 * i));
            dy[HEAD + 3 * i..HEAD + 3 * i + 3].copy_from_slice(q_dot.as_slice());
            dy[HEAD + 3 * (n + i)..HEAD + 3 * (n + i) + 3].copy_from_slice(&self.accel[3 + 3 * i..6 + 3 * i]);
        }
        Ok(())
    }

    fn set_stage(&mut self, slot: usize, h: f64) {
        for ((s, y), k) in self.stage.iter_mut().zip(&self.y).zip(&self.k[slot]) {
            *s = y + h * k;
        }
    }

    /// Advance `state` by one RK4 step in place. On a fault the state is
    /// left unchanged.
    pub fn step_in_place(&mut self, state: &mut SystemState, u: &WrenchInput, p: &ModelParams, dt: f64) -> Result<(), Fault> {
        assert_eq!(state.links.len(), self.links, "stepper sized for a different chain");
        pack(state, &mut self.y);
        self.derivative(false, u, p, 0)?;
        self.set_stage(0, dt / 2.0);
        self.derivative(true, u, p, 1)?;
        self.set_stage(1, dt / 2.0);
        self.derivative(true, u, p, 2)?;
        self.set_stage(2, dt);
        self.derivative(true, u, p, 3)?;
        let w = dt / 6.0;
        let [k1, k2, k3, k4] = &self.k;
        for (idx, s) in self.stage.iter_mut().enumerate() {
            *s = self.y[idx] + w * (k1[idx] + 2.0 * (k2[idx] + k3[idx]) + k4[idx]);
        }
        let n = self.links;
        for i in 0..n {
            let (qo, wo) = (HEAD + 3 * i, HEAD + 3 * (n + i));
            let q = v3(&self.stage, qo).normalize();
            let w = v3(&self.stage, wo);
            let w = w - q * q.dot(&w);
            self.stage[qo..qo + 3].copy_from_slice(q.as_slice());
            self.stage[wo..wo + 3].copy_from_slice(w.as_slice());
        }
        if !self.stage.iter().all(|x| x.is_finite()) {
            return Err(Fault::NonFinite);
        }
        let pitch = self.stage[7];
        if pitch.abs() > GIMBAL_LIMIT {
            return Err(Fault::GimbalLock(pitch.to_degrees()));
        }
        unpack(&self.stage, state);
        Ok(())
    }
}

/// One classical RK4 step with the input held constant, followed by
/// projection back onto unit links and tangent link rates.
pub fn step(state: &SystemState, u: &WrenchInput, p: &ModelParams, dt: f64) -> Result<SystemState, Fault> {
    let mut next = state.clone();
    Stepper::new(state.links.len()).step_in_place(&mut next, u, p, dt)?;
    Ok(next)
}

/// Which payload position to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadPoint {
    /// `r_q + Σ l_i q_i`
    Chained,
    /// `r_q + (Σ l_i) e3`, the cable assumed straight down.
    Straight,
}

pub fn load_position(state: &SystemState, p: &ModelParams, point: LoadPoint) -> Vec3 {
    match point {
        LoadPoint::Chained => {
            state.position
                + state
                    .links
                    .iter()
                    .zip(&p.link_lengths)
                    .map(|(q, l)| q * *l)
                    .sum::<Vec3>()
        }
        LoadPoint::Straight => state.position + e3() * p.cable_length(),
    }
}

/// Velocity of the payload mass (end of the chain).
pub fn load_velocity(state: &SystemState, p: &ModelParams) -> Vec3 {
    state.velocity
        + state
            .links
            .iter()
            .zip(&state.link_rates)
            .zip(&p.link_lengths)
            .map(|((q, w), l)| w.cross(q) * *l)
            .sum::<Vec3>()
}

/// Kinetic plus gravitational energy. Height is `-z`, the datum is `z = 0`.
pub fn total_energy(state: &SystemState, p: &ModelParams) -> f64 {
    let x = state.generalized_velocity();
    let m = mass_matrix(state, p);
    let kinetic = 0.5 * x.dot(&(&m * &x)) + 0.5 * state.body_rates.dot(&(p.inertia * state.body_rates));
    let mut potential = -p.quad_mass * p.gravity * state.position.z;
    let mut joint = state.position;
    for i in 0..p.links() {
        joint += state.links[i] * p.link_lengths[i];
        potential -= p.link_masses[i] * p.gravity * joint.z;
    }
    kinetic + potential
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(v: Vec3) -> Vec3 {
        v / v.norm()
    }

    fn tilted_state(p: &ModelParams) -> SystemState {
        let mut s = SystemState::hanging(Vec3::new(1.0, -2.0, -5.0), p.links());
        for i in 0..p.links() {
            let k = i as f64 + 1.0;
            s.links[i] = unit(Vec3::new(0.3 * k, -0.2, 1.0));
            s.link_rates[i] = Vec3::new(0.5, 1.0 / k, -0.4);
        }
        s.velocity = Vec3::new(0.2, -0.1, 0.3);
        s.euler = Vec3::new(0.05, -0.1, 0.3);
        s.body_rates = Vec3::new(0.2, -0.3, 0.1);
        s.project();
        s
    }

    #[test]
    fn hat_is_cross_product() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(hat(&Vec3::x()) * Vec3::y(), Vec3::z());
        let v = Vec3::new(0.3, -1.2, 2.5);
        assert_eq!(hat(&v).transpose(), -hat(&v));
        let w = Vec3::new(-0.7, 0.1, 4.0);
        assert_relative_eq!(hat(&v) * w, v.cross(&w), epsilon = 1e-15);
    }

    #[test]
    fn mass_sums() {
        let p = ModelParams::reference();
        assert_relative_eq!(p.total_mass(), 1.125, epsilon = 1e-12);
        assert_relative_eq!(p.tail_mass(0), 0.35, epsilon = 1e-12);
        assert_relative_eq!(p.tail_mass(2), 0.25, epsilon = 1e-12);
        assert_relative_eq!(p.coupling_mass(0, 2), 0.25, epsilon = 1e-12);
        assert_relative_eq!(p.coupling_mass(1, 0), 0.30, epsilon = 1e-12);
    }

    #[test]
    fn top_left_block_is_total_mass() {
        let p = ModelParams::reference();
        let m = mass_matrix(&tilted_state(&p), &p);
        for r in 0..3 {
            for c in 0..3 {
                let expected = if r == c { 1.125 } else { 0.0 };
                assert_relative_eq!(m[(r, c)], expected, epsilon = 1e-12);
            }
        }
        let single = ModelParams::new(0.5, Mat3::identity(), vec![0.2], vec![1.0], GRAVITY).unwrap();
        let m = mass_matrix(&SystemState::hanging(Vec3::zeros(), 1), &single);
        assert_relative_eq!(m[(0, 0)], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let j = Mat3::identity();
        assert!(ModelParams::new(0.0, j, vec![0.1], vec![1.0], GRAVITY).is_err());
        assert!(ModelParams::new(1.0, j, vec![], vec![], GRAVITY).is_err());
        assert!(ModelParams::new(1.0, j, vec![0.1], vec![-1.0], GRAVITY).is_err());
        assert!(ModelParams::new(1.0, -j, vec![0.1], vec![1.0], GRAVITY).is_err());
        let mut skew = j;
        skew[(0, 1)] = 0.5;
        assert!(ModelParams::new(1.0, skew, vec![0.1], vec![1.0], GRAVITY).is_err());
    }

    #[test]
    fn hanging_straight_has_only_weight() {
        let p = ModelParams::reference();
        let s = SystemState::hanging(Vec3::zeros(), 3);
        let c = coriolis_vector(&s, &p);
        assert_relative_eq!(c[2], -p.total_mass() * p.gravity, epsilon = 1e-12);
        assert!(c.rows(3, 9).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn single_link_coriolis_by_hand() {
        let (mq, m1, l1, g) = (0.6, 0.3, 0.8, 9.81);
        let p = ModelParams::new(mq, Mat3::identity(), vec![m1], vec![l1], g).unwrap();
        let mut s = SystemState::hanging(Vec3::zeros(), 1);
        let q = unit(Vec3::new(0.6, 0.0, 0.8));
        s.links[0] = q;
        s.link_rates[0] = Vec3::new(0.0, 2.0, 0.0);
        let c = coriolis_vector(&s, &p);
        // translational: -m1 l1 |w|^2 q - (mq + m1) g e3
        let expected_t = -q * (m1 * l1 * 4.0) - Vec3::new(0.0, 0.0, (mq + m1) * g);
        // link: -m1 g l1 (q × e3) = -m1 g l1 (0, -0.6, 0)
        let expected_l = Vec3::new(0.0, m1 * g * l1 * 0.6, 0.0);
        assert_relative_eq!(c.fixed_rows::<3>(0).into_owned(), expected_t, epsilon = 1e-12);
        assert_relative_eq!(c.fixed_rows::<3>(3).into_owned(), expected_l, epsilon = 1e-12);
    }

    #[test]
    fn rate_terms_scale_quadratically() {
        let p = ModelParams::reference();
        let s = tilted_state(&p);
        let mut fast = s.clone();
        fast.link_rates.iter_mut().for_each(|w| *w *= 2.0);
        let gravity_only = {
            let mut r = s.clone();
            r.link_rates.iter_mut().for_each(|w| *w = Vec3::zeros());
            coriolis_vector(&r, &p)
        };
        let slow = coriolis_vector(&s, &p) - &gravity_only;
        let quick = coriolis_vector(&fast, &p) - &gravity_only;
        assert_relative_eq!(quick, slow * 4.0, epsilon = 1e-12);
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = ModelParams::reference();
        let s = SystemState::hanging(Vec3::new(3.0, 4.0, -2.0), 3);
        let acc = solve_accelerations(&s, &WrenchInput::hover(&p), &p).unwrap();
        assert!(acc.linear.norm() < 1e-12);
        assert!(acc.link.iter().all(|w| w.norm() < 1e-12));
        let next = step(&s, &WrenchInput::hover(&p), &p, 1e-3).unwrap();
        assert!((next.position - s.position).norm() < 1e-9);
        assert!(next.velocity.norm() < 1e-9);
    }

    #[test]
    fn zero_thrust_is_free_fall() {
        let p = ModelParams::reference();
        let s = SystemState::hanging(Vec3::zeros(), 3);
        let acc = solve_accelerations(&s, &WrenchInput::default(), &p).unwrap();
        assert_relative_eq!(acc.linear, e3() * p.gravity, epsilon = 1e-12);
    }

    #[test]
    fn step_renormalises_links() {
        let p = ModelParams::reference();
        let mut s = tilted_state(&p);
        for _ in 0..50 {
            s = step(&s, &WrenchInput::hover(&p), &p, 1e-2).unwrap();
            for (q, w) in s.links.iter().zip(&s.link_rates) {
                assert!((q.norm() - 1.0).abs() < 1e-15);
                assert!(q.dot(w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gimbal_fault() {
        let p = ModelParams::reference();
        let mut s = SystemState::hanging(Vec3::zeros(), 3);
        s.euler.y = 79.99_f64.to_radians();
        s.body_rates.y = 5.0;
        let err = step(&s, &WrenchInput::hover(&p), &p, 1e-2).unwrap_err();
        assert!(matches!(err, Fault::GimbalLock(_)));
    }

    #[test]
    fn load_positions() {
        let p = ModelParams::reference();
        let mut s = SystemState::hanging(Vec3::new(1.0, 2.0, 3.0), 3);
        assert_relative_eq!(load_position(&s, &p, LoadPoint::Chained), Vec3::new(1.0, 2.0, 3.75), epsilon = 1e-12);
        s.links = vec![Vec3::x(); 3];
        assert_relative_eq!(load_position(&s, &p, LoadPoint::Straight), Vec3::new(1.0, 2.0, 3.75), epsilon = 1e-12);
        let single = ModelParams::new(0.5, Mat3::identity(), vec![0.2], vec![0.25], GRAVITY).unwrap();
        let mut s1 = SystemState::hanging(Vec3::zeros(), 1);
        s1.links[0] = Vec3::x();
        assert_relative_eq!(load_position(&s1, &single, LoadPoint::Chained), Vec3::new(0.25, 0.0, 0.0));
    }

    #[test]
    fn energy_at_rest_on_datum_is_zero_and_translation_invariant() {
        let p = ModelParams::reference();
        let mut s = SystemState::hanging(Vec3::zeros(), 3);
        s.links = vec![Vec3::x(); 3];
        assert_eq!(total_energy(&s, &p), 0.0);
        let t = tilted_state(&p);
        let mut shifted = t.clone();
        shifted.position += Vec3::new(17.0, -4.0, 0.0);
        assert_relative_eq!(total_energy(&t, &p), total_energy(&shifted, &p), epsilon = 1e-12);
    }

    #[test]
    fn kinetic_energy_matches_point_masses() {
        // ½ XᵀMX must equal Σ ½ m |v|² of the chained point masses.
        let p = ModelParams::reference();
        let s = tilted_state(&p);
        let x = s.generalized_velocity();
        let ke = 0.5 * x.dot(&(mass_matrix(&s, &p) * &x));
        let mut direct = 0.5 * p.quad_mass * s.velocity.norm_squared();
        let mut v = s.velocity;
        for i in 0..3 {
            v += s.link_rates[i].cross(&s.links[i]) * p.link_lengths[i];
            direct += 0.5 * p.link_masses[i] * v.norm_squared();
        }
        assert_relative_eq!(ke, direct, max_relative = 1e-12);
    }

    fn arb_state(n: usize) -> impl Strategy<Value = SystemState> {
        let v3 = || (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c));
        (
            v3(),
            proptest::collection::vec(v3(), n),
            proptest::collection::vec(v3(), n),
            v3(),
        )
            .prop_filter_map("degenerate link", move |(v, qs, ws, euler)| {
                if qs.iter().any(|q| q.norm() < 1e-3) {
                    return None;
                }
                let mut s = SystemState::hanging(Vec3::zeros(), n);
                s.velocity = v;
                s.links = qs;
                s.link_rates = ws;
                s.euler = Vec3::new(euler.x * 0.3, euler.y * 0.3, euler.z);
                s.project();
                Some(s)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn mass_matrix_is_spd(s in arb_state(3)) {
            let p = ModelParams::reference();
            let m = mass_matrix(&s, &p);
            prop_assert!((&m - m.transpose()).abs().max() < 1e-15);
            let eig = m.symmetric_eigenvalues();
            prop_assert!(eig.min() > 0.0);
        }

        #[test]
        fn solve_residual_is_small(s in arb_state(3), f in 0.0..30.0f64, dx in -2.0..2.0f64) {
            let p = ModelParams::reference();
            let u = WrenchInput { thrust: f, force_disturbance: Vec3::new(dx, 0.5, -dx), ..Default::default() };
            let acc = solve_accelerations(&s, &u, &p).unwrap();
            let mut xdot = DVector::zeros(p.dof());
            xdot.fixed_rows_mut::<3>(0).copy_from(&acc.linear);
            for (i, w) in acc.link.iter().enumerate() {
                xdot.fixed_rows_mut::<3>(3 + 3 * i).copy_from(w);
            }
            let rhs = input_vector(&s, &u, &p) - coriolis_vector(&s, &p);
            let residual = (mass_matrix(&s, &p) * xdot - &rhs).norm();
            prop_assert!(residual < 1e-10 * (1.0 + rhs.norm()));
        }

        #[test]
        fn solve_matches_nalgebra_cholesky(s in arb_state(3), f in 0.0..30.0f64) {
            let p = ModelParams::reference();
            let u = WrenchInput { thrust: f, ..Default::default() };
            let acc = solve_accelerations(&s, &u, &p).unwrap();
            let rhs = input_vector(&s, &u, &p) - coriolis_vector(&s, &p);
            let reference = mass_matrix(&s, &p).cholesky().unwrap().solve(&rhs);
            let scale = 1.0 + reference.norm();
            for k in 0..3 {
                prop_assert!((acc.linear[k] - reference[k]).abs() < 1e-12 * scale);
                for (i, w) in acc.link.iter().enumerate() {
                    prop_assert!((w[k] - reference[3 + 3 * i + k]).abs() < 1e-12 * scale);
                }
            }
        }
    }
}
