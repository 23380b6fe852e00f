//! Named, seeded scenarios with their headline assertions.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cucker_smale::{KernelSpec, ThetaState};
use crate::dynamics::{preflight, run, EnsembleState, IdentityStats, ModelKind, ModelParams, PreflightReport};
use crate::error::{QsyncError, Result};
use crate::grid::{GaussianPacket, GridSpec, PotentialSpec, WaveField, C64};
use crate::observables::{
    clip_before_floor, detect_regime, fit_exponential_rate, tail_stats, ObservableFrame, Regime,
};
use crate::reduced::{classify, fixed_points, lambda_param, RegimeClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeClass {
    Seconds,
    Minute,
}

/// Catalog entry: name, one-line summary and expected cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub runtime: RuntimeClass,
}

pub const CATALOG: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "standard_sl",
        summary: "three uncoupled-theta oscillators; every mass is conserved",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "two_identical",
        summary: "two oscillators, heavy-tail kernel: exponential sync, aggregation, mass bounds",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "two_frequencies_sub",
        summary: "detuned pair with Lambda = 0.5: exponential lock to z1",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "two_frequencies_crit",
        summary: "detuned pair with Lambda = 1: algebraic lock to i",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "two_frequencies_super",
        summary: "detuned pair with Lambda = 1.5: periodic correlation",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "model1_absolute",
        summary: "six oscillators, absolute kernel, generic data",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "model1_heavytail_wedge",
        summary: "six oscillators, heavy-tail kernel, wedge data",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "model2_wedge",
        summary: "unnormalized coupling with theta consensus; masses tend to one",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "frozen_model2",
        summary: "unnormalized coupling, frozen distinct theta; masses tend to theta",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "bipolar",
        summary: "mirror-symmetric ensemble pinned at an antipodal equilibrium",
        runtime: RuntimeClass::Seconds,
    },
    ScenarioInfo {
        name: "incoherent",
        summary: "mirror-symmetric ensemble with an overweight antipode; order parameter decays",
        runtime: RuntimeClass::Seconds,
    },
];

pub fn scenario_names() -> Vec<&'static str> {
    CATALOG.iter().map(|s| s.name).collect()
}

/// A fully built scenario, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub initial: EnsembleState,
    pub params: ModelParams,
    pub sample_every: usize,
}

/// Horizon of the incoherent scenario.
pub const INCOHERENT_HORIZON: f64 = 10.0;

const SUB_OMEGA: f64 = 1.0;

fn base_params(kind: ModelKind, n: usize, t_final: f64) -> ModelParams {
    ModelParams {
        kind,
        k: 1.0,
        mu: 1.0,
        omegas: vec![0.0; n],
        kernel: KernelSpec::default(),
        potential: PotentialSpec::Harmonic { omega: 1.0 },
        dt: 1e-3,
        t_final,
    }
}

fn packet(grid: GridSpec, center: f64, momentum: f64, amplitude: f64, phase: f64) -> Result<WaveField> {
    let mut c = vec![0.0; grid.dim()];
    let mut p = vec![0.0; grid.dim()];
    c[0] = center;
    p[0] = momentum;
    GaussianPacket {
        center: c,
        momentum: p,
        width: 1.0,
        amplitude,
        phase,
    }
    .sample(grid)
}

fn normalized_thetas(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Result<ThetaState> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Ok(ThetaState::new(raw)?.normalized())
}

fn min_real_corr(fields: &[WaveField]) -> Result<f64> {
    let mut m = f64::INFINITY;
    for (j, a) in fields.iter().enumerate() {
        for b in &fields[j + 1..] {
            let c = crate::grid::inner_product(a, b)? / (crate::grid::norm(a) * crate::grid::norm(b));
            m = m.min(c.re);
        }
    }
    Ok(m)
}

/// Common Gaussian plus a small random packet, rescaled to the requested
/// masses; resampled until every pairwise real correlation is nonnegative.
fn wedge_fields(rng: &mut ChaCha8Rng, grid: GridSpec, masses: &[f64]) -> Result<Vec<WaveField>> {
    let base = packet(grid, 0.0, 0.0, 1.0, 0.0)?;
    for _ in 0..1000 {
        let mut fields = Vec::with_capacity(masses.len());
        for &m in masses {
            let bump = packet(
                grid,
                rng.random_range(-2.0..2.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.2..0.5),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )?;
            let v: Vec<C64> = base.values().iter().zip(bump.values()).map(|(a, b)| a + b).collect();
            let f = WaveField::new(grid, v)?;
            let s = m / crate::grid::norm(&f);
            fields.push(f.scaled(C64::new(s, 0.0)));
        }
        if min_real_corr(&fields)? >= 0.0 {
            return Ok(fields);
        }
    }
    Err(QsyncError::Domain("could not draw wedge data".into()))
}

/// Real, grid-orthonormal Hermite-type profiles `H_m(x_0) exp(-|x|^2/2)`.
fn hermite_basis(grid: GridSpec, count: usize) -> Result<Vec<Vec<f64>>> {
    let dv = grid.cell_volume();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    for m in 0..count {
        let mut v: Vec<f64> = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                let r2: f64 = p[..grid.dim()].iter().map(|x| x * x).sum();
                let x = p[0];
                let h = match m {
                    0 => 1.0,
                    1 => 2.0 * x,
                    2 => 4.0 * x * x - 2.0,
                    3 => 8.0 * x.powi(3) - 12.0 * x,
                    _ => 16.0 * x.powi(4) - 48.0 * x * x + 12.0,
                };
                h * (-0.5 * r2).exp()
            })
            .collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum::<f64>() * dv;
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= proj * c);
        }
        let nrm = (v.iter().map(|a| a * a).sum::<f64>() * dv).sqrt();
        v.iter_mut().for_each(|a| *a /= nrm);
        basis.push(v);
    }
    Ok(basis)
}

/// `2N` oscillators mirrored about a real order parameter. Oscillators 1 and
/// `N+1` equal `-a u`; the others are `lambda_j (alpha_j u + i beta_j v_j)` and
/// their complex conjugates.
fn mirrored_fields(rng: &mut ChaCha8Rng, grid: GridSpec, half: usize, a: f64) -> Result<Vec<WaveField>> {
    let basis = hermite_basis(grid, half)?;
    let u = &basis[0];
    let mut first = Vec::with_capacity(half);
    first.push(u.iter().map(|x| C64::new(-a * x, 0.0)).collect::<Vec<_>>());
    for v in &basis[1..] {
        let lam = 0.9;
        let alpha: f64 = rng.random_range(0.7..0.9);
        let beta = (1.0 - alpha * alpha).sqrt();
        first.push(
            u.iter()
                .zip(v)
                .map(|(x, y)| C64::new(lam * alpha * x, lam * beta * y))
                .collect(),
        );
    }
    let mirror: Vec<Vec<C64>> = first
        .iter()
        .map(|f| f.iter().map(|v| v.conj()).collect())
        .collect();
    first
        .into_iter()
        .chain(mirror)
        .map(|v| WaveField::new(grid, v))
        .collect()
}

/// Initial state and parameters of a named scenario on `grid`.
pub fn build_initial(name: &str, seed: u64, grid: GridSpec) -> Result<(EnsembleState, ModelParams)> {
    build(name, seed, grid).map(|s| (s.initial, s.params))
}

/// Full scenario, including the sampling stride.
pub fn build(name: &str, seed: u64, grid: GridSpec) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = std::f64::consts::PI;
    let (fields, theta, params) = match name {
        "standard_sl" => {
            let fields = (0..3)
                .map(|j| {
                    packet(
                        grid,
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-0.5..0.5),
                        1.0,
                        rng.random_range(0.0..pi) + j as f64,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            (fields, ThetaState::uniform(3), base_params(ModelKind::StandardSL, 3, 10.0))
        }
        "two_identical" => {
            let d = rng.random_range(1.0..1.5);
            let fields = vec![
                packet(grid, -d, rng.random_range(-0.3..0.3), 1.0, 0.0)?,
                packet(grid, d, rng.random_range(-0.3..0.3), 1.0, rng.random_range(0.3..1.5))?,
            ];
            let theta = ThetaState::new(vec![1.2, 0.8])?;
            (fields, theta, base_params(ModelKind::Model1, 2, 20.0))
        }
        "two_frequencies_sub" | "two_frequencies_crit" | "two_frequencies_super" => {
            let lam = match name {
                "two_frequencies_sub" => 0.5,
                "two_frequencies_crit" => 1.0,
                _ => 1.5,
            };
            let t_final = match name {
                "two_frequencies_sub" => 20.0,
                "two_frequencies_crit" => 100.0,
                _ => 40.0,
            };
            let fields = vec![
                packet(grid, -0.5, rng.random_range(-0.3..0.3), 1.0, 0.0)?,
                packet(grid, 0.5, rng.random_range(-0.3..0.3), 1.0, rng.random_range(0.0..1.0))?,
            ];
            let mut p = base_params(ModelKind::Model1, 2, t_final);
            p.k = 2.0 * SUB_OMEGA / lam;
            p.omegas = vec![SUB_OMEGA, -SUB_OMEGA];
            p.kernel = KernelSpec::Constant { c: 1.0 };
            (fields, ThetaState::uniform(2), p)
        }
        "model1_absolute" => {
            let fields = (0..6)
                .map(|_| {
                    packet(
                        grid,
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(0.8..1.2),
                        rng.random_range(-pi / 2.0..pi / 2.0),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let theta = normalized_thetas(&mut rng, 6, 0.7, 1.3)?;
            let mut p = base_params(ModelKind::Model1, 6, 30.0);
            p.kernel = KernelSpec::Absolute {
                c_floor: 0.5,
                amp: 0.5,
                gamma: 1.0,
            };
            (fields, theta, p)
        }
        "model1_heavytail_wedge" => {
            let masses: Vec<f64> = (0..6).map(|_| rng.random_range(0.9..1.1)).collect();
            let fields = wedge_fields(&mut rng, grid, &masses)?;
            let theta = normalized_thetas(&mut rng, 6, 0.8, 1.2)?;
            (fields, theta, base_params(ModelKind::Model1, 6, 30.0))
        }
        "model2_wedge" => {
            let masses: Vec<f64> = (0..4).map(|_| rng.random_range(0.8..1.1)).collect();
            let fields = wedge_fields(&mut rng, grid, &masses)?;
            let theta = normalized_thetas(&mut rng, 4, 0.8, 1.2)?;
            (fields, theta, base_params(ModelKind::Model2, 4, 30.0))
        }
        "frozen_model2" => {
            let thetas = vec![0.6, 0.9, 1.2, 1.3];
            let masses: Vec<f64> = thetas
                .iter()
                .map(|t: &f64| (t * rng.random_range(0.7..0.9)).sqrt())
                .collect();
            let fields = wedge_fields(&mut rng, grid, &masses)?;
            let mut p = base_params(ModelKind::Model2, 4, 30.0);
            p.mu = 0.0;
            (fields, ThetaState::new(thetas)?, p)
        }
        "bipolar" | "incoherent" => {
            let a = if name == "bipolar" { 1.0 } else { 1.3 };
            let fields = mirrored_fields(&mut rng, grid, 4, a)?;
            let mut p = base_params(ModelKind::Model2, 8, if name == "bipolar" { 5.0 } else { INCOHERENT_HORIZON });
            p.mu = 0.0;
            (fields, ThetaState::uniform(8), p)
        }
        other => return Err(QsyncError::UnknownScenario(other.to_string())),
    };
    Ok(Scenario {
        name: name.to_string(),
        seed,
        initial: EnsembleState::new(fields, theta, 0.0)?,
        params,
        sample_every: 10,
    })
}

// ---------------------------------------------------------------------------
// Assertions.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

fn check(name: &str, passed: bool, measured: f64, threshold: f64, detail: impl Into<String>) -> AssertionOutcome {
    AssertionOutcome {
        name: name.into(),
        passed: passed && measured.is_finite(),
        measured,
        threshold,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub passed: bool,
    pub assertions: Vec<AssertionOutcome>,
    pub preflight: PreflightReport,
    pub identity: IdentityStats,
    /// Tail mean and standard deviation of `|zeta|` over the last 20% of frames.
    pub zeta_limit: (f64, f64),
    pub max_boundary_amplitude: f64,
    pub wall_time_seconds: f64,
    pub trajectory_files: Vec<String>,
    pub error: Option<String>,
}

/// Result of [`run_scenario`]: the report plus the recorded frames.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub frames: Vec<ObservableFrame>,
}

/// Bound on the identity residuals: `IDENTITY_C * dt^2`.
pub const IDENTITY_C: f64 = 50.0;

fn series<F: Fn(&ObservableFrame) -> f64>(frames: &[ObservableFrame], f: F) -> Vec<(f64, f64)> {
    frames.iter().map(|fr| (fr.time, f(fr))).collect()
}

fn exp_fit_check(name: &str, s: &[(f64, f64)], t0: f64, min_r2: f64) -> AssertionOutcome {
    let t1 = clip_before_floor(s, t0, 1e-10);
    match fit_exponential_rate(s, (t0, t1)) {
        Ok(f) => check(
            name,
            f.r_squared >= min_r2 && f.rate > 0.0,
            f.r_squared,
            min_r2,
            format!("rate {:.4} over [{:.2}, {:.2}]", f.rate, t0, t1),
        ),
        Err(e) => check(name, false, f64::NAN, min_r2, e.to_string()),
    }
}

fn terminal_sync(frames: &[ObservableFrame]) -> AssertionOutcome {
    let m = frames.last().map(|f| f.min_corr).unwrap_or(f64::NAN);
    check("terminal_sync", m > 0.999, m, 0.999, "final min Re<phi_j, phi_k>")
}

fn wedge_preserved(frames: &[ObservableFrame]) -> AssertionOutcome {
    let m = frames.iter().map(|f| f.min_corr).fold(f64::INFINITY, f64::min);
    check("wedge_preserved", m >= -1e-8, m, -1e-8, "min over frames of min_corr")
}

fn zeta_nondecreasing(name: &str, frames: &[ObservableFrame], tol: f64) -> AssertionOutcome {
    let worst = frames
        .windows(2)
        .map(|w| w[1].zeta_norm.powi(2) - w[0].zeta_norm.powi(2))
        .fold(f64::INFINITY, f64::min);
    check(name, worst >= -tol, worst, -tol, "smallest frame-to-frame change of |zeta|^2")
}

/// Mass bounds for the two-oscillator normalized model with `m` a lower
/// bound on the kernel along the run. Returns `(C1, C2)`.
pub fn two_body_mass_bounds(l: [f64; 2], theta: [f64; 2], k: f64, mu: f64, m: f64) -> (f64, f64) {
    let (a, b) = if l[0] >= l[1] { (0, 1) } else { (1, 0) };
    let rate = mu * m;
    let e = k / (2.0 * rate) * (theta[a] - 1.0);
    if theta[a] >= 1.0 {
        let c2 = l[a] * e.exp();
        let c1 = l[b] - 0.5 * k * l[a] / rate * (theta[a] - 1.0) * e.exp();
        (c1, c2)
    } else {
        let c1 = (l[a] * e.exp()).min(l[b]);
        let c2 = l[a].max(l[b] + 0.5 * k * l[a] / rate * (1.0 - theta[a]));
        (c1, c2)
    }
}

/// `lambda_+(0) exp((k/(2 c mu)) max_j |theta_j - 1|(0))`.
pub fn mass_upper_envelope(lambda_max0: f64, thetas0: &[f64], k: f64, mu: f64, c: f64) -> f64 {
    let dev = thetas0.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
    lambda_max0 * (k / (2.0 * c * mu) * dev).exp()
}

fn correlation_series(frames: &[ObservableFrame]) -> Vec<(f64, C64)> {
    frames.iter().map(|f| (f.time, f.corr(0, 1))).collect()
}

/// Evaluates the scenario's assertions on a recorded trajectory.
pub fn evaluate(sc: &Scenario, frames: &[ObservableFrame], identity: &IdentityStats) -> Vec<AssertionOutcome> {
    let p = &sc.params;
    let t_end = frames.last().map(|f| f.time).unwrap_or(0.0);
    let first = &frames[0];
    let last = frames.last().unwrap_or(first);
    let mut out = Vec::new();
    match sc.name.as_str() {
        "standard_sl" => {
            let drift = frames
                .iter()
                .flat_map(|f| f.masses.iter().zip(&first.masses).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            out.push(check("mass_conservation", drift < 1e-9, drift, 1e-9, "max |lambda_j(t) - lambda_j(0)|"));
        }
        "two_identical" => {
            let s = series(frames, |f| 1.0 - f.corr_re[0][1]);
            out.push(exp_fit_check("correlation_exponential_fit", &s, 0.5 * t_end, 0.99));
            let gap = (last.centers[0][0] - last.centers[1][0]).abs();
            out.push(check("center_aggregation", gap < 1e-3, gap, 1e-3, "|x_1 - x_2| at the horizon"));
            let dmax = frames.iter().map(|f| f.diameter).fold(0.0, f64::max);
            let m = crate::cucker_smale::kernel_eval(&p.kernel, dmax).unwrap_or(f64::NAN);
            let (c1, c2) = two_body_mass_bounds(
                [first.masses[0], first.masses[1]],
                [first.thetas[0], first.thetas[1]],
                p.k,
                p.mu,
                m,
            );
            let lo = frames.iter().flat_map(|f| f.masses.iter().cloned()).fold(f64::INFINITY, f64::min);
            let hi = frames.iter().flat_map(|f| f.masses.iter().cloned()).fold(0.0, f64::max);
            out.push(check("mass_lower_bound", lo >= c1, lo, c1, "min lambda_j(t) against C1"));
            out.push(check("mass_upper_bound", hi <= c2, hi, c2, "max lambda_j(t) against C2"));
            let worst = frames
                .windows(2)
                .map(|w| w[1].corr_re[0][1] - w[0].corr_re[0][1])
                .fold(f64::INFINITY, f64::min);
            out.push(check("correlation_monotone", worst >= -1e-10, worst, -1e-10, "smallest change of Re<phi_1, phi_2>"));
        }
        "two_frequencies_sub" | "two_frequencies_crit" | "two_frequencies_super" => {
            let omega = 0.5 * (p.omegas[0] - p.omegas[1]).abs();
            let lam = lambda_param(omega, p.k, last.masses[0], last.masses[1]).unwrap_or(f64::NAN);
            let expected = match sc.name.as_str() {
                "two_frequencies_sub" => RegimeClass::Exponential,
                "two_frequencies_crit" => RegimeClass::Critical,
                _ => RegimeClass::Periodic,
            };
            let class = classify(lam, omega).map(|d| d.class);
            out.push(check(
                "regime_class",
                class.as_ref().ok() == Some(&expected),
                lam,
                1.0,
                format!("Lambda from terminal masses, classified as {class:?}"),
            ));
            let z = correlation_series(frames);
            let zt = z.last().map(|p| p.1).unwrap_or_default();
            match expected {
                RegimeClass::Exponential => {
                    let z1 = fixed_points(lam).map(|f| f.0).unwrap_or(C64::new(f64::NAN, f64::NAN));
                    let d = (zt - z1).norm();
                    out.push(check("limit_z1", d < 1e-3, d, 1e-3, "|z(T) - z1|"));
                    let regime = detect_regime(&z, 0.3);
                    out.push(check(
                        "detected_regime",
                        matches!(regime, Ok(Regime::Converged(_))),
                        0.0,
                        0.0,
                        format!("{regime:?}"),
                    ));
                }
                RegimeClass::Critical => {
                    let worst = z
                        .iter()
                        .filter(|(t, _)| *t >= 20.0)
                        .map(|(t, zz)| (t * (zz - C64::i()).norm() * omega - 1.0).abs())
                        .fold(0.0, f64::max);
                    out.push(check("linear_rate", worst < 0.1, worst, 0.1, "max |Omega t |z - i| - 1| for t >= 20"));
                }
                RegimeClass::Periodic => {
                    let regime = detect_regime(&z, 0.5);
                    out.push(check(
                        "detected_regime",
                        matches!(regime, Ok(Regime::Periodic(_))),
                        0.0,
                        0.0,
                        format!("{regime:?}"),
                    ));
                }
            }
        }
        "model1_absolute" => {
            out.push(zeta_nondecreasing("zeta_monotone", frames, 1e-8 * p.dt));
            let c = p.kernel.infimum();
            let lmax0 = first.masses.iter().cloned().fold(0.0, f64::max);
            let bound = mass_upper_envelope(lmax0, &first.thetas, p.k, p.mu, c);
            let hi = frames.iter().flat_map(|f| f.masses.iter().cloned()).fold(0.0, f64::max);
            out.push(check("mass_upper_envelope", hi <= bound, hi, bound, "max lambda_j(t) against the bound"));
            out.push(terminal_sync(frames));
            let s = series(frames, |f| 1.0 - f.min_corr);
            out.push(exp_fit_check("sync_exponential_fit", &s, 0.2 * t_end, 0.98));
            let spread = series(frames, |f| f.theta_spread);
            let t1 = clip_before_floor(&spread, 0.2 * t_end, 1e-10);
            let need = 0.9 * p.mu * c;
            match fit_exponential_rate(&spread, (0.2 * t_end, t1)) {
                Ok(f) => out.push(check("theta_spread_rate", f.rate >= need, f.rate, need, "fitted decay rate of theta spread")),
                Err(e) => out.push(check("theta_spread_rate", false, f64::NAN, need, e.to_string())),
            }
        }
        "model1_heavytail_wedge" => {
            out.push(wedge_preserved(frames));
            out.push(terminal_sync(frames));
            let s = series(frames, |f| 1.0 - f.min_corr);
            out.push(exp_fit_check("sync_exponential_fit", &s, 0.2 * t_end, 0.98));
            out.push(check("center_aggregation", last.diameter < 1e-2, last.diameter, 1e-2, "D(T)"));
            let ratio = last.theta_spread / first.theta_spread;
            out.push(check("theta_alignment", ratio < 1e-3, ratio, 1e-3, "theta spread at T relative to t = 0"));
        }
        "model2_wedge" => {
            out.push(wedge_preserved(frames));
            out.push(terminal_sync(frames));
            let dev = last.masses.iter().map(|l| (l * l - 1.0).abs()).fold(0.0, f64::max);
            out.push(check("masses_to_one", dev < 1e-4, dev, 1e-4, "max |lambda_j^2(T) - 1|"));
        }
        "frozen_model2" => {
            out.push(terminal_sync(frames));
            let dev = last
                .masses
                .iter()
                .zip(&last.thetas)
                .map(|(l, t)| (l * l - t).abs())
                .fold(0.0, f64::max);
            out.push(check("masses_to_theta", dev < 1e-4, dev, 1e-4, "max |lambda_j^2(T) - theta_j|"));
            let over = frames
                .iter()
                .flat_map(|f| f.masses.iter().zip(&f.thetas).map(|(l, t)| l * l - t))
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(check("mass_below_theta", over <= 1e-8, over, 1e-8, "max lambda_j^2 - theta_j over frames"));
        }
        "bipolar" => {
            let worst = frames
                .iter()
                .map(|f| (antipode_alignment(f) + 1.0).abs())
                .fold(0.0, f64::max);
            out.push(check("antipode_pinned", worst < 1e-4, worst, 1e-4, "max |Re<phi_1, zeta/|zeta|> + 1|"));
            out.push(zeta_nondecreasing("zeta_nondecreasing", frames, 1e-12));
        }
        "incoherent" => {
            let ratio = last.zeta_norm / first.zeta_norm;
            out.push(check("zeta_halved", ratio < 0.5, ratio, 0.5, "|zeta|(T) / |zeta|(0)"));
            let after: Vec<&ObservableFrame> = frames.iter().filter(|f| f.time >= 0.25 * t_end).collect();
            let worst = after
                .windows(2)
                .map(|w| w[1].zeta_norm - w[0].zeta_norm)
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(check("zeta_decreasing", worst < 0.0, worst, 0.0, "largest change of |zeta| after the transient"));
        }
        _ => {}
    }
    let bound = IDENTITY_C * p.dt * p.dt;
    out.push(check("identity_mass", identity.max_mass_residual <= bound, identity.max_mass_residual, bound, "mass derivative vs centered difference"));
    out.push(check("identity_zeta", identity.max_zeta_residual <= bound, identity.max_zeta_residual, bound, "|zeta|^2 derivative vs centered difference"));
    out
}

/// `Re<phi_1, zeta> / |zeta|` from the correlation matrix.
pub fn antipode_alignment(f: &ObservableFrame) -> f64 {
    let n = f.n() as f64;
    let s: f64 = (0..f.n()).map(|k| f.masses[k] * f.corr_re[0][k]).sum();
    s / (n * f.zeta_norm)
}

/// Names of the assertions a scenario reports, in order.
pub fn assertion_names(name: &str) -> Result<Vec<&'static str>> {
    let specific: &[&'static str] = match name {
        "standard_sl" => &["mass_conservation"],
        "two_identical" => &[
            "correlation_exponential_fit",
            "center_aggregation",
            "mass_lower_bound",
            "mass_upper_bound",
            "correlation_monotone",
        ],
        "two_frequencies_sub" => &["regime_class", "limit_z1", "detected_regime"],
        "two_frequencies_crit" => &["regime_class", "linear_rate"],
        "two_frequencies_super" => &["regime_class", "detected_regime"],
        "model1_absolute" => &[
            "zeta_monotone",
            "mass_upper_envelope",
            "terminal_sync",
            "sync_exponential_fit",
            "theta_spread_rate",
        ],
        "model1_heavytail_wedge" => &[
            "wedge_preserved",
            "terminal_sync",
            "sync_exponential_fit",
            "center_aggregation",
            "theta_alignment",
        ],
        "model2_wedge" => &["wedge_preserved", "terminal_sync", "masses_to_one"],
        "frozen_model2" => &["terminal_sync", "masses_to_theta", "mass_below_theta"],
        "bipolar" => &["antipode_pinned", "zeta_nondecreasing"],
        "incoherent" => &["zeta_halved", "zeta_decreasing"],
        other => return Err(QsyncError::UnknownScenario(other.into())),
    };
    let mut v = specific.to_vec();
    v.extend(["identity_mass", "identity_zeta"]);
    Ok(v)
}

/// Builds and runs a scenario on the default grid.
pub fn run_scenario(name: &str, seed: u64) -> Result<ScenarioOutcome> {
    let sc = build(name, seed, GridSpec::default_1d())?;
    run_built(&sc)
}

/// Runs an already built scenario and evaluates its assertions. Solver
/// failures mark every assertion as failed and are recorded in `error`.
pub fn run_built(sc: &Scenario) -> Result<ScenarioOutcome> {
    let start = Instant::now();
    let pre = preflight(&sc.initial, &sc.params)?;
    let result = run(&sc.initial, &sc.params, sc.sample_every);
    let (frames, identity, edge, error) = match result {
        Ok(t) => (t.frames, t.identity, t.max_boundary_amplitude, None),
        Err(e) => {
            let (frames, identity, edge) = match e.partial {
                Some(t) => (t.frames, t.identity, t.max_boundary_amplitude),
                None => (vec![], IdentityStats::default(), f64::NAN),
            };
            (frames, identity, edge, Some(e.source.to_string()))
        }
    };
    let assertions = match &error {
        None => evaluate(sc, &frames, &identity),
        Some(msg) => assertion_names(&sc.name)?
            .into_iter()
            .map(|n| check(n, false, f64::NAN, f64::NAN, format!("solver error: {msg}")))
            .collect(),
    };
    let zeta: Vec<f64> = frames.iter().map(|f| f.zeta_norm).collect();
    let report = ScenarioReport {
        scenario: sc.name.clone(),
        seed: sc.seed,
        passed: error.is_none() && assertions.iter().all(|a| a.passed),
        assertions,
        preflight: pre,
        identity,
        zeta_limit: tail_stats(&zeta, 0.2),
        max_boundary_amplitude: edge,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        trajectory_files: vec![],
        error,
    };
    Ok(ScenarioOutcome { report, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_build() {
        let g = GridSpec::default_1d();
        for name in scenario_names() {
            let sc = build(name, 3, g).unwrap();
            assert_eq!(sc.params.omegas.len(), sc.initial.n(), "{name}");
            assert!(assertion_names(name).is_ok());
        }
        assert!(matches!(build("nope", 0, g), Err(QsyncError::UnknownScenario(_))));
    }

    #[test]
    fn builds_are_deterministic() {
        let g = GridSpec::default_1d();
        assert_eq!(build("model1_absolute", 11, g).unwrap(), build("model1_absolute", 11, g).unwrap());
        assert_ne!(
            build("model1_absolute", 11, g).unwrap().initial,
            build("model1_absolute", 12, g).unwrap().initial
        );
    }

    #[test]
    fn wedge_data_is_in_the_wedge() {
        let g = GridSpec::default_1d();
        for seed in 0..5 {
            let (s, _) = build_initial("model1_heavytail_wedge", seed, g).unwrap();
            assert!(min_real_corr(&s.fields).unwrap() >= 0.0);
        }
    }

    #[test]
    fn mirrored_data_is_exactly_symmetric() {
        let g = GridSpec::default_1d();
        let (s, _) = build_initial("bipolar", 5, g).unwrap();
        assert_eq!(s.fields[0], s.fields[4]);
        for j in 1..4 {
            let conj: Vec<C64> = s.fields[j].values().iter().map(|v| v.conj()).collect();
            assert_eq!(conj.as_slice(), s.fields[j + 4].values());
        }
        let masses = s.masses();
        assert!((masses[0] * masses[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn case_one_bounds() {
        let (c1, c2) = two_body_mass_bounds([1.0, 1.0], [1.4, 0.6], 1.0, 1.0, 1.0);
        assert!((c2 - 0.2f64.exp()).abs() < 1e-15);
        assert!((c1 - (1.0 - 0.2 * 0.2f64.exp())).abs() < 1e-15);
    }
}
