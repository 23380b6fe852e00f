//! Closed two-oscillator reduction of Model 1 under a constant kernel.
//!
//! With `z = <phi_1, phi_2>`, natural frequencies `+Omega` and `-Omega`, and a
//! constant communication kernel `c`, the six real unknowns
//! `(z, lambda_1, lambda_2, theta_1, theta_2)` obey an autonomous ODE.

use serde::{Deserialize, Serialize};

use crate::error::{QsyncError, Result};
use crate::grid::C64;

/// Values of `Lambda` within this distance of one are treated as critical.
pub const CRITICAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub z: C64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub time: f64,
}

impl ReducedState {
    fn as_array(&self) -> [f64; 6] {
        [self.z.re, self.z.im, self.lambda1, self.lambda2, self.theta1, self.theta2]
    }

    fn from_array(a: [f64; 6], time: f64) -> Self {
        ReducedState {
            z: C64::new(a[0], a[1]),
            lambda1: a[2],
            lambda2: a[3],
            theta1: a[4],
            theta2: a[5],
            time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub omega: f64,
    pub k: f64,
    pub mu: f64,
    /// Constant kernel value `h = c`.
    pub c: f64,
}

/// `Lambda = 4 Omega l1 l2 / (k (l1^2 + l2^2))`.
pub fn lambda_param(omega: f64, k: f64, lam1_bar: f64, lam2_bar: f64) -> Result<f64> {
    if !(k > 0.0 && lam1_bar > 0.0 && lam2_bar > 0.0 && omega >= 0.0) {
        return Err(QsyncError::Domain(format!(
            "Lambda needs k, lambda > 0 and Omega >= 0 (k={k}, l1={lam1_bar}, l2={lam2_bar}, Omega={omega})"
        )));
    }
    Ok(4.0 * omega * lam1_bar * lam2_bar / (k * (lam1_bar * lam1_bar + lam2_bar * lam2_bar)))
}

/// Time derivative of the reduced state.
pub fn reduced_rhs(s: &ReducedState, p: &ReducedParams) -> Result<ReducedState> {
    let (l1, l2, t1, t2, z) = (s.lambda1, s.lambda2, s.theta1, s.theta2, s.z);
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(QsyncError::Domain(format!("reduced masses must be positive ({l1}, {l2})")));
    }
    let i = C64::i();
    let one = C64::new(1.0, 0.0);
    let k4 = 0.25 * p.k;
    let dz = 2.0 * i * p.omega * z
        + k4 * (t1 * l2 * l2 + t2 * l1 * l1) / (l1 * l2) * (one - z * z)
        + i * k4 * ((l2 / l1) * (t1 - 1.0) + (l1 / l2) * (t2 - 1.0)) * z.im * z;
    let dl1 = k4 * (l1 + l2 * z.re) * (t1 - 1.0);
    let dl2 = k4 * (l1 * z.re + l2) * (t2 - 1.0);
    let dt1 = 0.5 * p.mu * p.c * (t2 - t1);
    Ok(ReducedState {
        z: dz,
        lambda1: dl1,
        lambda2: dl2,
        theta1: dt1,
        theta2: -dt1,
        time: 1.0,
    })
}

/// Classical RK4 from `s0` to `t_final`, keeping every `sample_every`-th state
/// plus the first and last.
pub fn integrate_reduced(
    s0: &ReducedState,
    p: &ReducedParams,
    dt: f64,
    t_final: f64,
    sample_every: usize,
) -> Result<Vec<ReducedState>> {
    if !(dt > 0.0 && t_final >= 0.0) || sample_every == 0 {
        return Err(QsyncError::Domain(format!(
            "bad integration controls dt={dt}, t_final={t_final}, sample_every={sample_every}"
        )));
    }
    let steps = (t_final / dt).round() as usize;
    let f = |y: [f64; 6]| -> Result<[f64; 6]> {
        Ok(reduced_rhs(&ReducedState::from_array(y, 0.0), p)?.as_array())
    };
    let axpy = |y: &[f64; 6], k: &[f64; 6], h: f64| -> [f64; 6] {
        let mut o = *y;
        o.iter_mut().zip(k).for_each(|(a, b)| *a += h * b);
        o
    };
    let mut out = vec![*s0];
    let mut y = s0.as_array();
    let mut time = s0.time;
    for n in 1..=steps {
        let k1 = f(y)?;
        let k2 = f(axpy(&y, &k1, 0.5 * dt))?;
        let k3 = f(axpy(&y, &k2, 0.5 * dt))?;
        let k4 = f(axpy(&y, &k3, dt))?;
        for i in 0..6 {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        time += dt;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(QsyncError::NumericalInstability { oscillator: 0, time });
        }
        if n % sample_every == 0 || n == steps {
            out.push(ReducedState::from_array(y, time));
        }
    }
    Ok(out)
}

/// `z_1 = sqrt(1 - Lambda^2) + i Lambda` and `z_2 = -sqrt(1 - Lambda^2) + i Lambda`.
pub fn fixed_points(lambda_cap: f64) -> Result<(C64, C64)> {
    if !(lambda_cap >= 0.0) {
        return Err(QsyncError::Domain(format!("Lambda must be >= 0, got {lambda_cap}")));
    }
    if lambda_cap > 1.0 + CRITICAL_BAND {
        return Err(QsyncError::NoFixedPoint(lambda_cap));
    }
    let r = (1.0 - lambda_cap * lambda_cap).max(0.0).sqrt();
    Ok((C64::new(r, lambda_cap), C64::new(-r, lambda_cap)))
}

/// Exponential convergence rate `(2 Omega / Lambda) sqrt(1 - Lambda^2)` in regime 1.
pub fn regime1_rate(omega: f64, lambda_cap: f64) -> f64 {
    2.0 * omega / lambda_cap * (1.0 - lambda_cap * lambda_cap).sqrt()
}

fn check_y_inputs(t: f64, omega: f64, lambda_cap: f64) -> Result<()> {
    if !(lambda_cap > 0.0 && lambda_cap <= 1.0 + CRITICAL_BAND) {
        return Err(QsyncError::Domain(format!("closed form needs 0 < Lambda <= 1, got {lambda_cap}")));
    }
    if !(omega > 0.0) || !t.is_finite() {
        return Err(QsyncError::Domain(format!("closed form needs Omega > 0, got {omega}")));
    }
    Ok(())
}

fn critical_branch(t: f64, y0: C64, omega: f64) -> Result<C64> {
    let i = C64::i();
    if y0 == i {
        return Ok(i);
    }
    let w = omega * t + 1.0 / (y0 - i);
    if w.norm() < 1e-12 {
        return Err(QsyncError::Singularity(t));
    }
    Ok(i + 1.0 / w)
}

/// Explicit solution of `y' = 2 i Omega y + (Omega/Lambda)(1 - y^2)`.
///
/// For `Lambda < 1`, with `R = (y0 - z1)/(y0 + conj z1)` and
/// `E = exp(-(2 Omega/Lambda) sqrt(1 - Lambda^2) t)`,
/// `y = (z1 + conj(z1) R E) / (1 - R E)`. For `Lambda = 1`,
/// `y = i + 1/(Omega t + 1/(y0 - i))`.
pub fn y_exact(t: f64, y0: C64, omega: f64, lambda_cap: f64) -> Result<C64> {
    check_y_inputs(t, omega, lambda_cap)?;
    if (lambda_cap - 1.0).abs() <= CRITICAL_BAND {
        return critical_branch(t, y0, omega);
    }
    let (z1, _) = fixed_points(lambda_cap)?;
    let anchor = y0 + z1.conj();
    if anchor.norm() < 1e-14 {
        return Err(QsyncError::ExcludedInitialCondition);
    }
    let re = (y0 - z1) / anchor * (-regime1_rate(omega, lambda_cap) * t).exp();
    let den = 1.0 - re;
    if den.norm() < 1e-12 {
        return Err(QsyncError::Singularity(t));
    }
    Ok((z1 + z1.conj() * re) / den)
}

/// Variant whose denominator ratio is `(y0 - z1)/(y0 + z1)` while the
/// numerator keeps `(y0 - z1)/(y0 + conj z1)`. It reproduces `y0` at `t = 0`
/// only when `Lambda = 0`; kept for comparison against [`y_exact`].
pub fn y_exact_mixed_denominator(t: f64, y0: C64, omega: f64, lambda_cap: f64) -> Result<C64> {
    check_y_inputs(t, omega, lambda_cap)?;
    if (lambda_cap - 1.0).abs() <= CRITICAL_BAND {
        return critical_branch(t, y0, omega);
    }
    let (z1, _) = fixed_points(lambda_cap)?;
    let anchor = y0 + z1.conj();
    if anchor.norm() < 1e-14 {
        return Err(QsyncError::ExcludedInitialCondition);
    }
    let e = (-regime1_rate(omega, lambda_cap) * t).exp();
    let num = z1 + z1.conj() * (y0 - z1) / anchor * e;
    let den = 1.0 - (y0 - z1) / (y0 + z1) * e;
    if den.norm() < 1e-12 {
        return Err(QsyncError::Singularity(t));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeClass {
    /// `0 <= Lambda < 1`: exponential convergence to `z1` (`z2` is unstable).
    Exponential,
    /// `Lambda = 1`: convergence to `i` at an algebraic rate.
    Critical,
    /// `Lambda > 1`: no fixed point, oscillatory behaviour.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeDescriptor {
    pub class: RegimeClass,
    pub lambda_cap: f64,
    /// Stable limit first, then the unstable one when it exists.
    pub limits: Vec<C64>,
    /// Exponential rate for [`RegimeClass::Exponential`], otherwise `None`.
    pub rate: Option<f64>,
}

impl RegimeDescriptor {
    pub fn number(&self) -> u8 {
        match self.class {
            RegimeClass::Exponential => 1,
            RegimeClass::Critical => 2,
            RegimeClass::Periodic => 3,
        }
    }
}

/// Regime of the two-oscillator system; `omega` only scales the rate.
pub fn classify(lambda_cap: f64, omega: f64) -> Result<RegimeDescriptor> {
    if !(lambda_cap >= 0.0) {
        return Err(QsyncError::Domain(format!("Lambda must be >= 0, got {lambda_cap}")));
    }
    let d = if (lambda_cap - 1.0).abs() <= CRITICAL_BAND {
        RegimeDescriptor {
            class: RegimeClass::Critical,
            lambda_cap,
            limits: vec![C64::i()],
            rate: None,
        }
    } else if lambda_cap < 1.0 {
        let (z1, z2) = fixed_points(lambda_cap)?;
        RegimeDescriptor {
            class: RegimeClass::Exponential,
            lambda_cap,
            limits: vec![z1, z2],
            rate: (lambda_cap > 0.0).then(|| regime1_rate(omega, lambda_cap)),
        }
    } else {
        RegimeDescriptor {
            class: RegimeClass::Periodic,
            lambda_cap,
            limits: vec![],
            rate: None,
        }
    };
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(z: C64) -> ReducedState {
        ReducedState { z, lambda1: 1.0, lambda2: 1.0, theta1: 1.0, theta2: 1.0, time: 0.0 }
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_param(0.0, 1.0, 1.0, 2.0).unwrap(), 0.0);
        assert!((lambda_param(1.0, 2.0, 0.7, 0.7).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambda_param(1.0, 1.0, 2.0, 1.0).unwrap() - 1.6).abs() < 1e-15);
        assert!(lambda_param(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(lambda_param(-1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rhs_special_points() {
        let p = ReducedParams { omega: 0.0, k: 2.0, mu: 1.0, c: 1.0 };
        let d = reduced_rhs(&state(C64::new(1.0, 0.0)), &p).unwrap();
        assert_eq!(d.as_array(), [0.0; 6]);
        let d = reduced_rhs(&state(C64::new(0.0, 0.0)), &p).unwrap();
        assert_eq!(d.z, C64::new(1.0, 0.0));
        assert_eq!((d.lambda1, d.lambda2, d.theta1, d.theta2), (0.0, 0.0, 0.0, 0.0));
        let mut bad = state(C64::new(0.0, 0.0));
        bad.lambda2 = 0.0;
        assert!(reduced_rhs(&bad, &p).is_err());
    }

    #[test]
    fn fixed_point_values() {
        assert_eq!(fixed_points(0.0).unwrap(), (C64::new(1.0, 0.0), C64::new(-1.0, 0.0)));
        let (a, b) = fixed_points(0.6).unwrap();
        assert!((a - C64::new(0.8, 0.6)).norm() < 1e-15);
        assert!((b - C64::new(-0.8, 0.6)).norm() < 1e-15);
        assert_eq!(fixed_points(1.0).unwrap(), (C64::i(), C64::i()));
        assert_eq!(fixed_points(1.2), Err(QsyncError::NoFixedPoint(1.2)));
    }

    #[test]
    fn closed_form_edges() {
        let y0 = C64::new(0.1, -0.3);
        assert!((y_exact(0.0, y0, 1.0, 0.5).unwrap() - y0).norm() < 1e-15);
        let (z1, z2) = fixed_points(0.5).unwrap();
        assert!((y_exact(3.0, z1, 1.0, 0.5).unwrap() - z1).norm() < 1e-15);
        assert_eq!(y_exact(1.0, z2, 1.0, 0.5), Err(QsyncError::ExcludedInitialCondition));
        assert!((y_exact(0.0, y0, 1.0, 1.0).unwrap() - y0).norm() < 1e-15);
        assert!(y_exact(1.0, y0, 1.0, 0.0).is_err());
    }

    #[test]
    fn classification() {
        let d = classify(0.5, 1.0).unwrap();
        assert_eq!((d.class, d.number()), (RegimeClass::Exponential, 1));
        assert!((d.rate.unwrap() - 4.0 * 0.75f64.sqrt()).abs() < 1e-14);
        assert_eq!(classify(1.0, 1.0).unwrap().limits, vec![C64::i()]);
        assert_eq!(classify(1.5, 1.0).unwrap().class, RegimeClass::Periodic);
    }

    #[test]
    fn theta_sum_conserved() {
        let s0 = ReducedState { z: C64::new(0.2, 0.1), lambda1: 1.1, lambda2: 0.9, theta1: 1.3, theta2: 0.7, time: 0.0 };
        let p = ReducedParams { omega: 0.4, k: 1.0, mu: 1.0, c: 0.8 };
        let tr = integrate_reduced(&s0, &p, 1e-3, 5.0, 100).unwrap();
        for s in &tr {
            assert!((s.theta1 + s.theta2 - 2.0).abs() < 1e-12);
            assert!(s.z.norm() <= 1.0 + 1e-8);
        }
        assert!((tr.last().unwrap().time - 5.0).abs() < 1e-9);
    }
}
