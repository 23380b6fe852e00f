//! Time evolution of the standard Schrödinger-Lohe system and its two
//! Cucker-Smale driven variants.
//!
//! One split step is `H(dt/2) . N(dt) . H(dt/2)`, where `H` is the exact
//! linear flow of `-1/2 Laplacian + V + Omega_j` (itself Strang-split into
//! kinetic and potential phases) and `N` is one classical RK4 step of the
//! joint coupling + theta system with centers of mass recomputed per stage.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::cucker_smale::{theta_rhs, KernelSpec, ThetaState};
use crate::error::{QsyncError, Result};
use crate::grid::{
    center_of_mass, phase_multiplier, raw_inner, GridSpec, PotentialSpec, Spectral, WaveField,
    C64, MASS_FLOOR,
};
use crate::observables::{frame, zeta_derivative_identity, ObservableFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Uniform coupling with mass normalization; theta is pinned to one.
    StandardSL,
    /// Theta-weighted coupling, normalized by `|psi_j|^2`.
    Model1,
    /// Theta-weighted coupling without normalization.
    Model2,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::StandardSL => "standard_sl",
            ModelKind::Model1 => "model1",
            ModelKind::Model2 => "model2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "standard_sl" => Some(ModelKind::StandardSL),
            "model1" => Some(ModelKind::Model1),
            "model2" => Some(ModelKind::Model2),
            _ => None,
        }
    }

    fn normalized(&self) -> bool {
        !matches!(self, ModelKind::Model2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub k: f64,
    pub mu: f64,
    pub omegas: Vec<f64>,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
    pub dt: f64,
    pub t_final: f64,
}

impl ModelParams {
    pub fn validate(&self, n: usize, grid: &GridSpec) -> Result<()> {
        let bad = |m: String| Err(QsyncError::Domain(m));
        if !(self.k.is_finite() && self.k > 0.0) {
            return bad(format!("coupling k must be > 0, got {}", self.k));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return bad(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return bad(format!("t_final must be >= dt, got {}", self.t_final));
        }
        if self.omegas.len() != n {
            return Err(QsyncError::LengthMismatch {
                expected: n,
                got: self.omegas.len(),
            });
        }
        if self.omegas.iter().any(|w| !w.is_finite()) {
            return Err(QsyncError::NonFinite("natural frequencies".into()));
        }
        self.kernel.validate()?;
        self.potential.validate(grid)
    }

    /// Number of steps to reach `t_final`.
    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }

    fn theta_active(&self) -> bool {
        self.kind != ModelKind::StandardSL && self.mu > 0.0
    }
}

/// All oscillators plus their intrinsic parameters at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub fields: Vec<WaveField>,
    pub theta: ThetaState,
    pub time: f64,
}

impl EnsembleState {
    pub fn new(fields: Vec<WaveField>, theta: ThetaState, time: f64) -> Result<Self> {
        if fields.is_empty() {
            return Err(QsyncError::Domain("ensemble needs at least one oscillator".into()));
        }
        if theta.len() != fields.len() {
            return Err(QsyncError::LengthMismatch {
                expected: fields.len(),
                got: theta.len(),
            });
        }
        let g = *fields[0].grid();
        if fields.iter().any(|f| *f.grid() != g) {
            return Err(QsyncError::GridMismatch);
        }
        Ok(EnsembleState {
            fields,
            theta,
            time,
        })
    }

    pub fn n(&self) -> usize {
        self.fields.len()
    }

    pub fn grid(&self) -> &GridSpec {
        self.fields[0].grid()
    }

    /// `lambda_j = |psi_j|`.
    pub fn masses(&self) -> Vec<f64> {
        self.fields.iter().map(crate::grid::norm).collect()
    }
}

// ---------------------------------------------------------------------------
// Right-hand sides on raw sample arrays.

fn effective_theta(kind: ModelKind, theta: &[f64], j: usize) -> f64 {
    match kind {
        ModelKind::StandardSL => 1.0,
        _ => theta[j],
    }
}

fn zeta_of(psi: &[Vec<C64>]) -> Vec<C64> {
    let n = psi.len() as f64;
    let mut z = vec![C64::new(0.0, 0.0); psi[0].len()];
    for f in psi {
        for (a, b) in z.iter_mut().zip(f) {
            *a += b;
        }
    }
    z.iter_mut().for_each(|v| *v /= n);
    z
}

fn sq_norms(psi: &[Vec<C64>], dv: f64) -> Vec<f64> {
    psi.iter()
        .map(|f| f.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv)
        .collect()
}

/// Coupling increments in order-parameter form,
/// `(k/2)(theta_j zeta - <zeta, psi_j> / m_j psi_j)` with `m_j = |psi_j|^2`
/// (normalized models) or `m_j = 1` (Model 2).
fn coupling_raw(
    kind: ModelKind,
    k: f64,
    psi: &[Vec<C64>],
    theta: &[f64],
    dv: f64,
    time: f64,
) -> Result<Vec<Vec<C64>>> {
    let zeta = zeta_of(psi);
    let masses = sq_norms(psi, dv);
    let mut out = Vec::with_capacity(psi.len());
    for (j, f) in psi.iter().enumerate() {
        let overlap = raw_inner(&zeta, f) * dv;
        let weight = if kind.normalized() {
            if !(masses[j].sqrt() > MASS_FLOOR) {
                return Err(QsyncError::VanishingMass {
                    oscillator: j,
                    time,
                    mass: masses[j].sqrt(),
                });
            }
            overlap / masses[j]
        } else {
            overlap
        };
        let th = effective_theta(kind, theta, j);
        let half_k = 0.5 * k;
        out.push(
            zeta.iter()
                .zip(f)
                .map(|(z, p)| (z * th - weight * p) * half_k)
                .collect(),
        );
    }
    Ok(out)
}

fn centers_raw(grid: &GridSpec, psi: &[Vec<C64>], time: f64) -> Result<Vec<Vec<f64>>> {
    psi.iter()
        .enumerate()
        .map(|(j, f)| {
            // Borrowing into a WaveField would copy; the moment loop is cheap.
            let d = grid.dim();
            let mut m0 = 0.0;
            let mut m1 = [0.0f64; 2];
            for (i, v) in f.iter().enumerate() {
                let w = v.norm_sqr();
                let p = grid.point(i);
                m0 += w;
                for a in 0..d {
                    m1[a] += p[a] * w;
                }
            }
            let mass = (m0 * grid.cell_volume()).sqrt();
            if !(mass > MASS_FLOOR) {
                return Err(QsyncError::VanishingMass {
                    oscillator: j,
                    time,
                    mass,
                });
            }
            Ok(m1[..d].iter().map(|m| m / m0).collect())
        })
        .collect()
}

/// Coupling increments `d psi_j / dt` restricted to the non-Hamiltonian part.
pub fn coupling_rhs(state: &EnsembleState, params: &ModelParams) -> Result<Vec<WaveField>> {
    let psi: Vec<Vec<C64>> = state.fields.iter().map(|f| f.values().to_vec()).collect();
    let g = *state.grid();
    let inc = coupling_raw(
        params.kind,
        params.k,
        &psi,
        state.theta.values(),
        g.cell_volume(),
        state.time,
    )?;
    inc.into_iter().map(|v| WaveField::new(g, v)).collect()
}

/// Analytic `d/dt |psi_j|^2`: `k Re<zeta, psi_j>(theta_j - 1)` for the
/// normalized models and `k Re<zeta, psi_j>(theta_j - |psi_j|^2)` for Model 2.
pub fn mass_rhs_check(state: &EnsembleState, params: &ModelParams) -> Result<Vec<f64>> {
    let psi: Vec<Vec<C64>> = state.fields.iter().map(|f| f.values().to_vec()).collect();
    let dv = state.grid().cell_volume();
    let zeta = zeta_of(&psi);
    let masses = sq_norms(&psi, dv);
    Ok(psi
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let re = (raw_inner(&zeta, f) * dv).re;
            let th = effective_theta(params.kind, state.theta.values(), j);
            let target = if params.kind.normalized() { 1.0 } else { masses[j] };
            params.k * re * (th - target)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Solver.

/// Cached propagators for one grid and parameter set.
pub struct Solver {
    params: ModelParams,
    grid: GridSpec,
    spectral: Spectral,
    potential: Vec<f64>,
    kinetic_half: Vec<C64>,
    potential_quarter: Vec<Vec<C64>>,
    pool: Option<rayon::ThreadPool>,
}

impl fmt::Debug for Solver {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.debug_struct("Solver")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .finish()
    }
}

type Stage = (Vec<Vec<C64>>, Vec<f64>);

impl Solver {
    pub fn new(grid: GridSpec, params: &ModelParams) -> Result<Self> {
        params.validate(params.omegas.len(), &grid)?;
        let spectral = Spectral::new(grid);
        let potential = params.potential.samples(&grid)?;
        let kinetic_half = spectral.kinetic_multiplier(0.5 * params.dt);
        let potential_quarter = params
            .omegas
            .iter()
            .map(|w| phase_multiplier(&potential, *w, 0.25 * params.dt))
            .collect();
        Ok(Solver {
            params: params.clone(),
            grid,
            spectral,
            potential,
            kinetic_half,
            potential_quarter,
            pool: None,
        })
    }

    /// Runs per-oscillator work on a dedicated pool of `threads` workers.
    /// Each oscillator writes only its own field, so results do not depend
    /// on the thread count.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| QsyncError::Domain(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn check_state(&self, state: &EnsembleState) -> Result<()> {
        if *state.grid() != self.grid {
            return Err(QsyncError::GridMismatch);
        }
        if state.n() != self.params.omegas.len() {
            return Err(QsyncError::LengthMismatch {
                expected: self.params.omegas.len(),
                got: state.n(),
            });
        }
        Ok(())
    }

    fn half_flow(&self, j: usize, psi: &mut [C64]) {
        let quarter = &self.potential_quarter[j];
        psi.iter_mut().zip(quarter).for_each(|(v, m)| *v *= m);
        self.spectral.apply_multiplier(psi, &self.kinetic_half);
        psi.iter_mut().zip(quarter).for_each(|(v, m)| *v *= m);
    }

    fn hamiltonian_half(&self, psi: &mut [Vec<C64>]) {
        match &self.pool {
            Some(pool) => pool.install(|| {
                psi.par_iter_mut()
                    .enumerate()
                    .for_each(|(j, f)| self.half_flow(j, f))
            }),
            None => psi
                .iter_mut()
                .enumerate()
                .for_each(|(j, f)| self.half_flow(j, f)),
        }
    }

    /// `-i (H + Omega_j) psi` evaluated spectrally.
    fn hamiltonian_rhs(&self, j: usize, psi: &[C64]) -> Vec<C64> {
        let kin = self.spectral.kinetic_apply(psi);
        let w = self.params.omegas[j];
        kin.iter()
            .zip(psi)
            .zip(&self.potential)
            .map(|((k, p), v)| {
                let h = k + p * (v + w);
                C64::new(h.im, -h.re)
            })
            .collect()
    }

    fn joint_rhs(&self, psi: &[Vec<C64>], theta: &[f64], time: f64, with_h: bool) -> Result<Stage> {
        let p = &self.params;
        let mut dpsi = coupling_raw(p.kind, p.k, psi, theta, self.grid.cell_volume(), time)?;
        if with_h {
            for (j, d) in dpsi.iter_mut().enumerate() {
                let h = self.hamiltonian_rhs(j, &psi[j]);
                d.iter_mut().zip(h).for_each(|(a, b)| *a += b);
            }
        }
        let dtheta = if p.theta_active() {
            let centers = centers_raw(&self.grid, psi, time)?;
            theta_rhs(theta, &centers, &p.kernel, p.mu)?
        } else {
            vec![0.0; theta.len()]
        };
        Ok((dpsi, dtheta))
    }

    fn rk4(&self, psi: &[Vec<C64>], theta: &[f64], time: f64, with_h: bool) -> Result<Stage> {
        let dt = self.params.dt;
        let shifted = |base: &Stage, inc: &Stage, h: f64| -> Stage {
            let p = base
                .0
                .iter()
                .zip(&inc.0)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * h).collect())
                .collect();
            let t = base.1.iter().zip(&inc.1).map(|(x, y)| x + y * h).collect();
            (p, t)
        };
        let base: Stage = (psi.to_vec(), theta.to_vec());
        let k1 = self.joint_rhs(psi, theta, time, with_h)?;
        let s2 = shifted(&base, &k1, 0.5 * dt);
        let k2 = self.joint_rhs(&s2.0, &s2.1, time, with_h)?;
        let s3 = shifted(&base, &k2, 0.5 * dt);
        let k3 = self.joint_rhs(&s3.0, &s3.1, time, with_h)?;
        let s4 = shifted(&base, &k3, dt);
        let k4 = self.joint_rhs(&s4.0, &s4.1, time, with_h)?;
        let w = dt / 6.0;
        let mut out = base;
        for j in 0..out.0.len() {
            for i in 0..out.0[j].len() {
                out.0[j][i] += (k1.0[j][i] + (k2.0[j][i] + k3.0[j][i]) * 2.0 + k4.0[j][i]) * w;
            }
        }
        for j in 0..out.1.len() {
            out.1[j] += (k1.1[j] + 2.0 * (k2.1[j] + k3.1[j]) + k4.1[j]) * w;
        }
        Ok(out)
    }

    /// A field whose overlap with its value one step earlier is not positive
    /// has passed through zero inside the step, which the end-of-step mass
    /// floor cannot see.
    fn check_continuity(&self, before: &[Vec<C64>], after: &[Vec<C64>], time: f64) -> Result<()> {
        let dv = self.grid.cell_volume();
        for (j, (a, b)) in before.iter().zip(after).enumerate() {
            let overlap: f64 = a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum();
            if !(overlap > 0.0) {
                let mass = (b.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv).sqrt();
                return Err(QsyncError::VanishingMass {
                    oscillator: j,
                    time,
                    mass,
                });
            }
        }
        Ok(())
    }

    fn finish(&self, psi: Vec<Vec<C64>>, theta: Vec<f64>, time: f64) -> Result<EnsembleState> {
        for (j, f) in psi.iter().enumerate() {
            if f.iter().any(|v| !v.is_finite()) || !theta[j].is_finite() {
                return Err(QsyncError::NumericalInstability { oscillator: j, time });
            }
        }
        if let Some(j) = theta.iter().position(|t| !(*t > 0.0)) {
            return Err(QsyncError::NumericalInstability { oscillator: j, time });
        }
        let fields = psi
            .into_iter()
            .map(|v| WaveField::new(self.grid, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleState {
            fields,
            theta: ThetaState::from_raw(theta),
            time,
        })
    }

    /// One split step of length `dt`.
    pub fn step(&self, state: &EnsembleState) -> Result<EnsembleState> {
        self.check_state(state)?;
        let mut psi: Vec<Vec<C64>> = state.fields.iter().map(|f| f.values().to_vec()).collect();
        self.hamiltonian_half(&mut psi);
        let (mut next, theta) = self.rk4(&psi, state.theta.values(), state.time, false)?;
        self.check_continuity(&psi, &next, state.time + self.params.dt)?;
        self.hamiltonian_half(&mut next);
        let psi = next;
        self.finish(psi, theta, state.time + self.params.dt)
    }

    /// One RK4 step of the full semi-discrete system (method of lines).
    pub fn oracle_step(&self, state: &EnsembleState) -> Result<EnsembleState> {
        self.check_state(state)?;
        let psi: Vec<Vec<C64>> = state.fields.iter().map(|f| f.values().to_vec()).collect();
        let (next, theta) = self.rk4(&psi, state.theta.values(), state.time, true)?;
        self.check_continuity(&psi, &next, state.time + self.params.dt)?;
        self.finish(next, theta, state.time + self.params.dt)
    }
}

/// One split step; builds a fresh [`Solver`].
pub fn step(state: &EnsembleState, params: &ModelParams) -> Result<EnsembleState> {
    Solver::new(*state.grid(), params)?.step(state)
}

/// One method-of-lines RK4 step; builds a fresh [`Solver`].
pub fn oracle_step(state: &EnsembleState, params: &ModelParams) -> Result<EnsembleState> {
    Solver::new(*state.grid(), params)?.oracle_step(state)
}

// ---------------------------------------------------------------------------
// Preflight.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warn,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreflightCheck {
    pub name: String,
    pub status: CheckStatus,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PreflightReport {
    pub checks: Vec<PreflightCheck>,
}

impl PreflightReport {
    pub fn get(&self, name: &str) -> Option<&PreflightCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &PreflightCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Warn)
    }

    fn push(&mut self, name: &str, pass: bool, value: Option<f64>, detail: String) {
        self.checks.push(PreflightCheck {
            name: name.into(),
            status: if pass { CheckStatus::Pass } else { CheckStatus::Warn },
            value,
            detail,
        });
    }

    fn not_applicable(&mut self, name: &str, detail: String) {
        self.checks.push(PreflightCheck {
            name: name.into(),
            status: CheckStatus::NotApplicable,
            value: None,
            detail,
        });
    }
}

/// Lower bound on `min_j |psi_j(t)|` for Model 1:
/// `lambda_-(0) - (k/2)(lambda_+(0)/(mu c))(theta_+ - 1) exp((k/(2 mu c))(theta_+ - 1))`.
/// `None` when the kernel infimum or `mu` vanishes while `theta_+ > 1`.
pub fn model1_lower_bound(
    lambda_min: f64,
    lambda_max: f64,
    theta_max: f64,
    k: f64,
    mu: f64,
    c: f64,
) -> Option<f64> {
    let excess = theta_max - 1.0;
    if excess <= 0.0 {
        return Some(lambda_min);
    }
    let rate = mu * c;
    if !(rate > 0.0) {
        return None;
    }
    let a = k / (2.0 * rate) * excess;
    Some(lambda_min - 0.5 * k * lambda_max / rate * excess * a.exp())
}

/// Evaluates the sufficient conditions for global existence and the
/// theta normalization. Only non-positive theta is a hard error.
pub fn preflight(state: &EnsembleState, params: &ModelParams) -> Result<PreflightReport> {
    let theta = state.theta.values();
    if let Some(t) = theta.iter().find(|t| !(**t > 0.0)) {
        return Err(QsyncError::Domain(format!("theta must be positive, got {t}")));
    }
    let mut r = PreflightReport::default();
    let mean = state.theta.mean();
    r.push(
        "theta_mean",
        (mean - 1.0).abs() <= 1e-12,
        Some(mean),
        "mean of theta should be 1".into(),
    );

    let masses = state.masses();
    let lmin = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = masses.iter().cloned().fold(0.0, f64::max);
    r.push(
        "mass_floor",
        lmin > MASS_FLOOR,
        Some(lmin),
        format!("smallest |psi_j| against the floor {MASS_FLOOR:e}"),
    );

    match params.kind {
        ModelKind::StandardSL => {
            let uniform = theta.iter().all(|t| *t == 1.0);
            r.push("theta_uniform", uniform, None, "standard model needs theta == 1".into());
        }
        ModelKind::Model1 => {
            let tmax = theta.iter().cloned().fold(f64::MIN, f64::max);
            match model1_lower_bound(lmin, lmax, tmax, params.k, params.mu, params.kernel.infimum())
            {
                Some(v) => r.push(
                    "model1_lower_bound",
                    v > 0.0,
                    Some(v),
                    "global existence needs a positive mass lower bound".into(),
                ),
                None => r.not_applicable(
                    "model1_lower_bound",
                    "kernel infimum or mu is zero; bound unavailable".into(),
                ),
            }
        }
        ModelKind::Model2 => {
            let corr = frame(state).map(|f| f.min_corr).unwrap_or(f64::NAN);
            let wedge = state.n() == 1 || corr >= 0.0;
            r.push(
                "model2_wedge",
                wedge,
                Some(corr),
                "min Re<phi_j, phi_k> >= 0".into(),
            );
            let below = masses.iter().zip(theta).all(|(l, t)| l * l <= *t + 1e-12);
            let slack = masses
                .iter()
                .zip(theta)
                .map(|(l, t)| t - l * l)
                .fold(f64::INFINITY, f64::min);
            r.push(
                "model2_mass_below_theta",
                below,
                Some(slack),
                "|psi_j|^2 <= theta_j for all j".into(),
            );
            r.push(
                "model2_global_existence",
                wedge || below,
                None,
                "either the wedge or the mass condition holds".into(),
            );
        }
    }

    let edge = state
        .fields
        .iter()
        .map(|f| f.boundary_amplitude())
        .fold(0.0, f64::max);
    r.push(
        "boundary_amplitude",
        edge < 1e-8,
        Some(edge),
        "field must be negligible at the box edge".into(),
    );
    Ok(r)
}

// ---------------------------------------------------------------------------
// Run loop.

/// Worst residuals of the mass and order-parameter derivative identities
/// against centered differences taken one step either side of each frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IdentityStats {
    pub max_mass_residual: f64,
    pub max_zeta_residual: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<ObservableFrame>,
    pub identity: IdentityStats,
    pub max_boundary_amplitude: f64,
    pub final_state: EnsembleState,
}

/// A run that stopped early; `partial` holds everything up to the failure.
#[derive(Debug, Clone)]
pub struct RunError {
    pub partial: Option<Trajectory>,
    pub source: QsyncError,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "run aborted: {}", self.source)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<QsyncError> for RunError {
    fn from(source: QsyncError) -> Self {
        RunError {
            partial: None,
            source,
        }
    }
}

fn sq_mass_and_zeta(state: &EnsembleState) -> (Vec<f64>, f64) {
    let m: Vec<f64> = state.masses().iter().map(|l| l * l).collect();
    let z = crate::observables::order_parameter(state);
    let zn = crate::grid::norm(&z);
    (m, zn * zn)
}

struct PendingIdentity {
    before: (Vec<f64>, f64),
    analytic_mass: Vec<f64>,
    analytic_zeta: f64,
}

/// Integrates to `t_final`, recording a frame every `sample_every` steps and
/// at the end.
pub fn run(
    initial: &EnsembleState,
    params: &ModelParams,
    sample_every: usize,
) -> std::result::Result<Trajectory, RunError> {
    let solver = Solver::new(*initial.grid(), params)?;
    run_with(&solver, initial, sample_every)
}

pub fn run_with(
    solver: &Solver,
    initial: &EnsembleState,
    sample_every: usize,
) -> std::result::Result<Trajectory, RunError> {
    let params = solver.params();
    if sample_every == 0 {
        return Err(QsyncError::Domain("sample_every must be positive".into()).into());
    }
    if params.omegas.len() != initial.n() {
        return Err(QsyncError::LengthMismatch {
            expected: initial.n(),
            got: params.omegas.len(),
        }
        .into());
    }
    if params.kind == ModelKind::StandardSL && initial.theta.values().iter().any(|t| *t != 1.0) {
        return Err(QsyncError::Domain("standard model requires theta == 1".into()).into());
    }
    let dt = params.dt;
    let steps = params.steps();

    let mut traj = Trajectory {
        frames: vec![frame(initial)?],
        identity: IdentityStats::default(),
        max_boundary_amplitude: initial
            .fields
            .iter()
            .map(|f| f.boundary_amplitude())
            .fold(0.0, f64::max),
        final_state: initial.clone(),
    };

    let mut state = initial.clone();
    let mut previous = sq_mass_and_zeta(&state);
    let mut pending: Option<PendingIdentity> = None;

    for i in 1..=steps {
        let next = match solver.step(&state) {
            Ok(s) => s,
            Err(e) => {
                traj.final_state = state;
                return Err(RunError {
                    partial: Some(traj),
                    source: e,
                });
            }
        };
        let current = sq_mass_and_zeta(&next);

        if let Some(p) = pending.take() {
            let mut worst = 0.0f64;
            for (j, a) in p.analytic_mass.iter().enumerate() {
                let fd = (current.0[j] - p.before.0[j]) / (2.0 * dt);
                worst = worst.max((fd - a).abs());
            }
            let fdz = (current.1 - p.before.1) / (2.0 * dt);
            let id = &mut traj.identity;
            id.max_mass_residual = id.max_mass_residual.max(worst);
            id.max_zeta_residual = id.max_zeta_residual.max((fdz - p.analytic_zeta).abs());
            id.samples += 1;
        }

        let sampled = i % sample_every == 0 || i == steps;
        if sampled {
            let f = match frame(&next) {
                Ok(f) => f,
                Err(e) => {
                    traj.final_state = next;
                    return Err(RunError {
                        partial: Some(traj),
                        source: e,
                    });
                }
            };
            traj.frames.push(f);
            if i < steps {
                let analytic_mass = mass_rhs_check(&next, params)?;
                let analytic_zeta = zeta_derivative_identity(&next, params)?;
                pending = Some(PendingIdentity {
                    before: previous.clone(),
                    analytic_mass,
                    analytic_zeta,
                });
            }
            let edge = next
                .fields
                .iter()
                .map(|f| f.boundary_amplitude())
                .fold(0.0, f64::max);
            traj.max_boundary_amplitude = traj.max_boundary_amplitude.max(edge);
        }
        previous = current;
        state = next;
    }
    traj.final_state = state;
    Ok(traj)
}

/// Centers of mass, with the oscillator index filled into vanishing-mass errors.
pub fn centers(state: &EnsembleState) -> Result<Vec<Vec<f64>>> {
    state
        .fields
        .iter()
        .enumerate()
        .map(|(j, f)| {
            center_of_mass(f).map_err(|e| match e {
                QsyncError::VanishingMass { mass, .. } => QsyncError::VanishingMass {
                    oscillator: j,
                    time: state.time,
                    mass,
                },
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, GaussianPacket};

    fn grid() -> GridSpec {
        GridSpec::new(1, 128, 16.0).unwrap()
    }

    fn packet(center: f64, momentum: f64, amplitude: f64) -> WaveField {
        GaussianPacket {
            center: vec![center],
            momentum: vec![momentum],
            width: 1.0,
            amplitude,
            phase: 0.0,
        }
        .sample(grid())
        .unwrap()
    }

    fn params(kind: ModelKind, n: usize, k: f64) -> ModelParams {
        ModelParams {
            kind,
            k,
            mu: 1.0,
            omegas: vec![0.0; n],
            kernel: KernelSpec::Constant { c: 1.0 },
            potential: PotentialSpec::Harmonic { omega: 1.0 },
            dt: 1e-3,
            t_final: 0.05,
        }
    }

    #[test]
    fn single_oscillator_ignores_coupling() {
        let s = EnsembleState::new(vec![packet(0.7, 0.4, 1.0)], ThetaState::uniform(1), 0.0).unwrap();
        let weak = Solver::new(grid(), &params(ModelKind::StandardSL, 1, 0.5)).unwrap();
        let strong = Solver::new(grid(), &params(ModelKind::StandardSL, 1, 4.0)).unwrap();
        let (mut a, mut b) = (s.clone(), s);
        for _ in 0..20 {
            a = weak.step(&a).unwrap();
            b = strong.step(&b).unwrap();
        }
        for (x, y) in a.fields[0].values().iter().zip(b.fields[0].values()) {
            assert!((x - y).norm() < 1e-13);
        }
        assert!((a.masses()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_vanishes_on_synchronized_states() {
        let f = packet(0.0, 0.0, 1.0);
        let s = EnsembleState::new(vec![f.clone(), f], ThetaState::uniform(2), 0.0).unwrap();
        let rhs = coupling_rhs(&s, &params(ModelKind::Model1, 2, 1.0)).unwrap();
        for r in &rhs {
            assert!(r.values().iter().all(|v| v.norm() < 1e-14));
        }
    }

    #[test]
    fn mass_rhs_matches_projection_of_coupling() {
        let fields = vec![packet(-1.0, 0.2, 1.0), packet(1.0, -0.1, 0.8)];
        let theta = ThetaState::new(vec![1.3, 0.7]).unwrap();
        let s = EnsembleState::new(fields, theta, 0.0).unwrap();
        for kind in [ModelKind::Model1, ModelKind::Model2] {
            let p = params(kind, 2, 1.5);
            let rhs = coupling_rhs(&s, &p).unwrap();
            let check = mass_rhs_check(&s, &p).unwrap();
            for j in 0..2 {
                let direct = 2.0 * inner_product(&s.fields[j], &rhs[j]).unwrap().re;
                assert!((direct - check[j]).abs() < 1e-12, "{kind:?} {j}: {direct} vs {}", check[j]);
            }
        }
    }

    #[test]
    fn lower_bound_cases() {
        assert_eq!(model1_lower_bound(0.9, 1.1, 1.0, 1.0, 1.0, 0.5), Some(0.9));
        assert_eq!(model1_lower_bound(0.9, 1.1, 1.2, 1.0, 0.0, 0.5), None);
        let v = model1_lower_bound(1.0, 1.0, 1.2, 1.0, 1.0, 1.0).unwrap();
        assert!((v - (1.0 - 0.1 * 0.1f64.exp())).abs() < 1e-15);
    }

    #[test]
    fn preflight_flags() {
        let fields = vec![packet(-1.0, 0.0, 1.0), packet(1.0, 0.0, 1.0)];
        let s = EnsembleState::new(fields, ThetaState::new(vec![1.5, 0.5]).unwrap(), 0.0).unwrap();
        let r = preflight(&s, &params(ModelKind::StandardSL, 2, 1.0)).unwrap();
        assert_eq!(r.get("theta_uniform").unwrap().status, CheckStatus::Warn);
        let r = preflight(&s, &params(ModelKind::Model2, 2, 1.0)).unwrap();
        assert_eq!(r.get("model2_wedge").unwrap().status, CheckStatus::Pass);
        assert_eq!(r.get("model2_mass_below_theta").unwrap().status, CheckStatus::Warn);
        assert_eq!(r.get("model2_global_existence").unwrap().status, CheckStatus::Pass);
        assert!(run(&s, &params(ModelKind::StandardSL, 2, 1.0), 5).is_err());
    }

    #[test]
    fn mass_crossing_zero_aborts_the_run() {
        // Identical fields: lambda_2' = (k/4)(lambda_1 + lambda_2)(theta_2 - 1) = -1.8, so
        // lambda_2 reaches zero at t = 1/1.8.
        let f = packet(0.0, 0.0, 1.0);
        let s = EnsembleState::new(vec![f.clone(), f], ThetaState::new(vec![1.9, 0.1]).unwrap(), 0.0).unwrap();
        let mut p = params(ModelKind::Model1, 2, 4.0);
        p.mu = 0.0;
        p.t_final = 1.0;
        let err = run(&s, &p, 10).unwrap_err();
        match err.source {
            QsyncError::VanishingMass { oscillator, time, .. } => {
                assert_eq!(oscillator, 1);
                assert!((time - 1.0 / 1.8).abs() < 2e-3, "t = {time}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let partial = err.partial.unwrap();
        assert!(partial.frames.last().unwrap().time < 0.56);
    }

    #[test]
    fn run_samples_and_ends_on_the_last_step() {
        let fields = vec![packet(-0.5, 0.0, 1.0), packet(0.5, 0.1, 1.0)];
        let s = EnsembleState::new(fields, ThetaState::new(vec![1.1, 0.9]).unwrap(), 0.0).unwrap();
        let t = run(&s, &params(ModelKind::Model1, 2, 1.0), 20).unwrap();
        let times: Vec<f64> = t.frames.iter().map(|f| f.time).collect();
        assert_eq!(times.len(), 4);
        assert!((times[3] - 0.05).abs() < 1e-12);
        assert!(t.identity.samples >= 2);
        assert!((t.final_state.theta.mean() - 1.0).abs() < 1e-14);
    }
}
