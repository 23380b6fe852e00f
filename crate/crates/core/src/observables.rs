//! Diagnostics computed from ensemble states and from sampled trajectories.

use serde::{Deserialize, Serialize};

use crate::cucker_smale::{pair_diameter, theta_spread};
use crate::dynamics::{centers, EnsembleState, ModelKind, ModelParams};
use crate::error::{QsyncError, Result};
use crate::grid::{raw_inner, WaveField, C64, MASS_FLOOR};

/// `zeta = (1/N) sum_j psi_j`.
pub fn order_parameter(state: &EnsembleState) -> WaveField {
    let n = state.n() as f64;
    let mut acc = vec![C64::new(0.0, 0.0); state.grid().len()];
    for f in &state.fields {
        for (a, v) in acc.iter_mut().zip(f.values()) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|v| *v /= n);
    WaveField::new(*state.grid(), acc).expect("average of valid fields is valid")
}

/// Snapshot of every scalar diagnostic at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableFrame {
    pub time: f64,
    pub masses: Vec<f64>,
    pub thetas: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub corr_re: Vec<Vec<f64>>,
    pub corr_im: Vec<Vec<f64>>,
    pub zeta_norm: f64,
    pub min_corr: f64,
    pub theta_spread: f64,
    pub diameter: f64,
}

impl ObservableFrame {
    pub fn n(&self) -> usize {
        self.masses.len()
    }

    /// `<phi_j, phi_k>` as a complex number.
    pub fn corr(&self, j: usize, k: usize) -> C64 {
        C64::new(self.corr_re[j][k], self.corr_im[j][k])
    }

    /// Lowest-index pair `(j, k)`, `j < k`, attaining `min_corr`.
    pub fn min_corr_pair(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..self.n() {
            for k in (j + 1)..self.n() {
                let c = self.corr_re[j][k];
                if best.map_or(true, |(_, _, b)| c < b) {
                    best = Some((j, k, c));
                }
            }
        }
        best.map(|(j, k, _)| (j, k))
    }
}

/// Builds a frame; fails if any mass is below the floor.
pub fn frame(state: &EnsembleState) -> Result<ObservableFrame> {
    let n = state.n();
    let dv = state.grid().cell_volume();
    let masses = state.masses();
    if let Some(j) = masses.iter().position(|m| !(*m > MASS_FLOOR)) {
        return Err(QsyncError::VanishingMass {
            oscillator: j,
            time: state.time,
            mass: masses[j],
        });
    }
    let mut corr_re = vec![vec![0.0; n]; n];
    let mut corr_im = vec![vec![0.0; n]; n];
    for j in 0..n {
        corr_re[j][j] = 1.0;
        for k in (j + 1)..n {
            let c = raw_inner(state.fields[j].values(), state.fields[k].values()) * dv
                / (masses[j] * masses[k]);
            corr_re[j][k] = c.re;
            corr_re[k][j] = c.re;
            corr_im[j][k] = c.im;
            corr_im[k][j] = -c.im;
        }
    }
    let min_corr = if n < 2 {
        1.0
    } else {
        (0..n)
            .flat_map(|j| ((j + 1)..n).map(move |k| (j, k)))
            .map(|(j, k)| corr_re[j][k])
            .fold(f64::INFINITY, f64::min)
    };
    let c = centers(state)?;
    Ok(ObservableFrame {
        time: state.time,
        thetas: state.theta.values().to_vec(),
        diameter: pair_diameter(&c),
        centers: c,
        zeta_norm: crate::grid::norm(&order_parameter(state)),
        min_corr,
        theta_spread: theta_spread(state.theta.values()),
        corr_re,
        corr_im,
        masses,
    })
}

struct ZetaParts {
    zeta_sq: f64,
    theta_bar: f64,
    overlaps: Vec<C64>,
    masses_sq: Vec<f64>,
    frequency_term: f64,
}

fn zeta_parts(state: &EnsembleState, params: &ModelParams) -> Result<ZetaParts> {
    let n = state.n();
    if params.omegas.len() != n {
        return Err(QsyncError::LengthMismatch {
            expected: n,
            got: params.omegas.len(),
        });
    }
    let dv = state.grid().cell_volume();
    let zeta = order_parameter(state);
    let z = zeta.values();
    let overlaps: Vec<C64> = state
        .fields
        .iter()
        .map(|f| raw_inner(z, f.values()) * dv)
        .collect();
    let frequency_term = 2.0 / n as f64
        * overlaps
            .iter()
            .zip(&params.omegas)
            .map(|(o, w)| w * o.im)
            .sum::<f64>();
    let theta_bar = match params.kind {
        ModelKind::StandardSL => 1.0,
        _ => state.theta.mean(),
    };
    Ok(ZetaParts {
        zeta_sq: raw_inner(z, z).re * dv,
        theta_bar,
        masses_sq: state.masses().iter().map(|l| l * l).collect(),
        overlaps,
        frequency_term,
    })
}

/// Analytic `d/dt |zeta|^2` along the flow.
///
/// Normalized models: `k(theta_bar |zeta|^2 - (1/N) sum Re[<phi_j, zeta>^2])`.
/// Model 2: `k(theta_bar |zeta|^2 - (1/N) sum lambda_j^2 Re[<phi_j, zeta>^2])`.
/// Both carry the additional `(2/N) sum Omega_j Im<zeta, psi_j>`, which vanishes
/// when all natural frequencies agree.
pub fn zeta_derivative_identity(state: &EnsembleState, params: &ModelParams) -> Result<f64> {
    let p = zeta_parts(state, params)?;
    let n = state.n() as f64;
    let mut s = 0.0;
    for (o, m) in p.overlaps.iter().zip(&p.masses_sq) {
        if !(m.sqrt() > MASS_FLOOR) {
            return Err(QsyncError::VanishingMass {
                oscillator: 0,
                time: state.time,
                mass: m.sqrt(),
            });
        }
        // <zeta, psi_j>^2 = lambda_j^2 <zeta, phi_j>^2.
        let sq = (o * o).re;
        s += match params.kind {
            ModelKind::Model2 => sq,
            _ => sq / m,
        };
    }
    Ok(params.k * (p.theta_bar * p.zeta_sq - s / n) + p.frequency_term)
}

/// Model 2 variant that squares the real part instead of the complex overlap:
/// `k(theta_bar |zeta|^2 - (1/N) sum lambda_j^2 (Re<phi_j, zeta>)^2)`.
/// It agrees with [`zeta_derivative_identity`] only when every overlap is real.
pub fn zeta_derivative_real_part_squared(
    state: &EnsembleState,
    params: &ModelParams,
) -> Result<f64> {
    let p = zeta_parts(state, params)?;
    let n = state.n() as f64;
    let s: f64 = p
        .overlaps
        .iter()
        .zip(&p.masses_sq)
        .map(|(o, m)| {
            let re_phi = o.re / m.sqrt();
            m * re_phi * re_phi
        })
        .sum();
    Ok(params.k * (p.theta_bar * p.zeta_sq - s / n) + p.frequency_term)
}

// ---------------------------------------------------------------------------
// Trajectory analysis.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares line through `(t, ln y)` over `t0 <= t <= t1`; `rate` is the
/// negated slope. Constant data gives `r_squared = 0`.
pub fn fit_exponential_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (t0, t1) = window;
    if !(t0 < t1) {
        return Err(QsyncError::Domain(format!("empty fit window ({t0}, {t1})")));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t0 && *t <= t1)
        .collect();
    if pts.len() < 3 {
        return Err(QsyncError::TooFewSamples {
            needed: 3,
            got: pts.len(),
        });
    }
    if let Some((t, y)) = pts.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(QsyncError::NonPositiveSample { time: *t, value: *y });
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        let (dt, dl) = (t - mt, y.ln() - ml);
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    let slope = stl / stt;
    let r_squared = if sll > 0.0 {
        (stl * stl / (stt * sll)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(RateFit {
        rate: -slope,
        intercept: ml - slope * mt,
        r_squared,
        window,
    })
}

/// Last time `t >= t0` before the series first drops to `floor` or below,
/// giving a fit window that stays clear of the noise floor.
pub fn clip_before_floor(series: &[(f64, f64)], t0: f64, floor: f64) -> f64 {
    let mut last = t0;
    for (t, y) in series.iter().filter(|(t, _)| *t >= t0) {
        if !(*y > floor) {
            break;
        }
        last = *t;
    }
    last
}

/// Mean and standard deviation of the last `fraction` of `values`.
pub fn tail_stats(values: &[f64], fraction: f64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let start = ((1.0 - fraction.clamp(0.0, 1.0)) * values.len() as f64).floor() as usize;
    let tail = &values[start.min(values.len() - 1)..];
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    let v = tail.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / tail.len() as f64;
    (m, v.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    Converged(C64),
    Periodic(f64),
    Undetermined,
}

/// Classifies the tail of a complex time series as converged, periodic or
/// neither. The tail is the last `tail_fraction` of the samples.
pub fn detect_regime(series: &[(f64, C64)], tail_fraction: f64) -> Result<Regime> {
    if series.len() < 100 {
        return Err(QsyncError::TooFewSamples {
            needed: 100,
            got: series.len(),
        });
    }
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(QsyncError::Domain(format!(
            "tail fraction must lie in (0, 1), got {tail_fraction}"
        )));
    }
    let start = ((1.0 - tail_fraction) * series.len() as f64).floor() as usize;
    let tail = &series[start..];
    let mean = tail.iter().map(|p| p.1).sum::<C64>() / tail.len() as f64;
    let dev: Vec<f64> = tail.iter().map(|p| (p.1 - mean).norm()).collect();
    let spread = dev.iter().cloned().fold(f64::MIN, f64::max) - dev.iter().cloned().fold(f64::MAX, f64::min);
    if spread < 1e-4 {
        return Ok(Regime::Converged(mean));
    }

    let anchor = tail[0].1;
    let dist: Vec<f64> = tail.iter().map(|p| (p.1 - anchor).norm()).collect();
    let reach = dist.iter().cloned().fold(0.0, f64::max);
    let tol = (0.05 * reach).max(1e-6);
    let mut returns = Vec::new();
    for i in 1..dist.len() - 1 {
        if dist[i] <= dist[i - 1] && dist[i] < dist[i + 1] && dist[i] < tol {
            returns.push(tail[i].0);
        }
    }
    if returns.len() < 3 {
        return Ok(Regime::Undetermined);
    }
    let mut times = vec![tail[0].0];
    times.extend(returns);
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let period = gaps.iter().sum::<f64>() / gaps.len() as f64;
    if gaps.iter().all(|g| (g - period).abs() <= 0.1 * period) {
        Ok(Regime::Periodic(period))
    } else {
        Ok(Regime::Undetermined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cucker_smale::{KernelSpec, ThetaState};
    use crate::grid::{GaussianPacket, GridSpec, PotentialSpec};

    fn packet(grid: GridSpec, c: f64, p: f64, amp: f64, phase: f64) -> WaveField {
        GaussianPacket {
            center: vec![c],
            momentum: vec![p],
            width: 1.0,
            amplitude: amp,
            phase,
        }
        .sample(grid)
        .unwrap()
    }

    fn params(kind: ModelKind, n: usize) -> ModelParams {
        ModelParams {
            kind,
            k: 1.3,
            mu: 0.0,
            omegas: vec![0.0; n],
            kernel: KernelSpec::default(),
            potential: PotentialSpec::Zero,
            dt: 1e-3,
            t_final: 1.0,
        }
    }

    #[test]
    fn antipodal_pair_cancels() {
        let g = GridSpec::default_1d();
        let a = packet(g, 0.5, 0.3, 1.0, 0.0);
        let b = a.scaled(C64::new(-1.0, 0.0));
        let s = EnsembleState::new(vec![a, b], ThetaState::uniform(2), 0.0).unwrap();
        assert!(order_parameter(&s).values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn quarter_rotation_correlation() {
        let g = GridSpec::default_1d();
        let a = packet(g, 0.0, 0.0, 1.0, 0.0);
        let b = a.scaled(C64::new(0.0, 1.0));
        let s = EnsembleState::new(vec![a, b], ThetaState::uniform(2), 0.0).unwrap();
        let f = frame(&s).unwrap();
        assert!(f.corr_re[0][1].abs() < 1e-14);
        assert!((f.corr_im[0][1].abs() - 1.0).abs() < 1e-12);
        assert_eq!(f.corr_im[1][0], -f.corr_im[0][1]);
    }

    #[test]
    fn synchronized_zeta_derivative_vanishes() {
        let g = GridSpec::default_1d();
        let a = packet(g, 0.0, 0.2, 1.0, 0.4);
        let s = EnsembleState::new(vec![a.clone(), a.clone(), a], ThetaState::uniform(3), 0.0)
            .unwrap();
        let v = zeta_derivative_identity(&s, &params(ModelKind::Model1, 3)).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn real_overlaps_make_both_model2_forms_agree() {
        let g = GridSpec::default_1d();
        let fields = vec![
            packet(g, -0.5, 0.0, 0.8, 0.0),
            packet(g, 0.5, 0.0, 0.9, 0.0),
        ];
        let s = EnsembleState::new(fields, ThetaState::new(vec![0.9, 1.1]).unwrap(), 0.0).unwrap();
        let p = params(ModelKind::Model2, 2);
        let a = zeta_derivative_identity(&s, &p).unwrap();
        let b = zeta_derivative_real_part_squared(&s, &p).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn rate_fit_exact_and_constant() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, (-2.0 * i as f64 * 0.1).exp())).collect();
        let f = fit_exponential_rate(&s, (0.0, 5.0)).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let c: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0)).collect();
        let f = fit_exponential_rate(&c, (0.0, 9.0)).unwrap();
        assert_eq!(f.rate, 0.0);
        assert_eq!(f.r_squared, 0.0);
    }

    #[test]
    fn rate_fit_errors() {
        let s = vec![(0.0, 1.0), (1.0, 0.0), (2.0, 0.5)];
        assert!(matches!(
            fit_exponential_rate(&s, (0.0, 2.0)),
            Err(QsyncError::NonPositiveSample { .. })
        ));
        assert!(matches!(
            fit_exponential_rate(&s[..2], (0.0, 2.0)),
            Err(QsyncError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn clip_stops_at_floor() {
        let s = vec![(0.0, 1.0), (1.0, 0.1), (2.0, 1e-12), (3.0, 1.0)];
        assert_eq!(clip_before_floor(&s, 0.0, 1e-10), 1.0);
    }

    #[test]
    fn regimes_of_constructed_series() {
        let c: Vec<(f64, C64)> = (0..200).map(|i| (i as f64, C64::new(0.3, -0.2))).collect();
        match detect_regime(&c, 0.5).unwrap() {
            Regime::Converged(z) => assert!((z - C64::new(0.3, -0.2)).norm() < 1e-14),
            other => panic!("expected convergence, got {other:?}"),
        }
        let p: Vec<(f64, C64)> = (0..4000)
            .map(|i| {
                let t = i as f64 * 0.01;
                (t, C64::from_polar(0.5, t))
            })
            .collect();
        match detect_regime(&p, 0.6).unwrap() {
            Regime::Periodic(period) => {
                assert!((period - std::f64::consts::TAU).abs() < 0.1 * std::f64::consts::TAU)
            }
            other => panic!("expected periodic, got {other:?}"),
        }
        assert!(detect_regime(&p[..99], 0.5).is_err());
    }

    #[test]
    fn tail_statistics() {
        let (m, s) = tail_stats(&[0.0, 0.0, 2.0, 2.0], 0.5);
        assert_eq!((m, s), (2.0, 0.0));
    }
}
