//! Cucker-Smale consensus dynamics for the intrinsic parameters `theta_j`,
//! driven by the oscillators' centers of mass.

use serde::{Deserialize, Serialize};

use crate::error::{QsyncError, Result};

/// Communication kernel `h(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `h(r) = c`.
    Constant { c: f64 },
    /// `h(r) = c_floor + amp (1 + r^2)^{-gamma/2}`, so `inf h = c_floor`.
    Absolute { c_floor: f64, amp: f64, gamma: f64 },
    /// `h(r) = (1 + r^2)^{-gamma/2}` with `gamma <= 1`.
    HeavyTail { gamma: f64 },
    /// Piecewise-linear through `(radii, values)`, constant outside.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::HeavyTail { gamma: 1.0 }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QsyncError::Domain(msg));
        match self {
            KernelSpec::Constant { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return bad(format!("constant kernel needs c > 0, got {c}"));
                }
            }
            KernelSpec::Absolute { c_floor, amp, gamma } => {
                if !(c_floor.is_finite() && *c_floor > 0.0) {
                    return bad(format!("absolute kernel needs c_floor > 0, got {c_floor}"));
                }
                if !(amp.is_finite() && *amp >= 0.0) {
                    return bad(format!("absolute kernel needs amp >= 0, got {amp}"));
                }
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return bad(format!("absolute kernel needs gamma > 0, got {gamma}"));
                }
            }
            KernelSpec::HeavyTail { gamma } => {
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return bad(format!("heavy-tail kernel needs gamma in (0, 1], got {gamma}"));
                }
            }
            KernelSpec::Tabulated { radii, values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return bad("tabulated kernel needs matching non-empty radii/values".into());
                }
                if radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("tabulated kernel radii must be strictly increasing".into());
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("tabulated kernel values must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// `inf_r h(r)`; zero for the heavy-tail family.
    pub fn infimum(&self) -> f64 {
        match self {
            KernelSpec::Constant { c } => *c,
            KernelSpec::Absolute { c_floor, .. } => *c_floor,
            KernelSpec::HeavyTail { .. } => 0.0,
            KernelSpec::Tabulated { values, .. } => {
                values.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn eval_unchecked(&self, r: f64) -> f64 {
        match self {
            KernelSpec::Constant { c } => *c,
            KernelSpec::Absolute { c_floor, amp, gamma } => {
                c_floor + amp * (1.0 + r * r).powf(-gamma / 2.0)
            }
            KernelSpec::HeavyTail { gamma } => (1.0 + r * r).powf(-gamma / 2.0),
            KernelSpec::Tabulated { radii, values } => {
                if r <= radii[0] {
                    return values[0];
                }
                let last = radii.len() - 1;
                if r >= radii[last] {
                    return values[last];
                }
                let i = radii.partition_point(|&x| x <= r) - 1;
                let t = (r - radii[i]) / (radii[i + 1] - radii[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(QsyncError::Domain(format!("kernel radius must be >= 0, got {r}")));
    }
    Ok(spec.eval_unchecked(r))
}

/// Intrinsic parameters `theta_1..theta_N`, all positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaState(Vec<f64>);

impl ThetaState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(QsyncError::Domain("theta list is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(QsyncError::Domain(format!("theta values must be positive, got {v}")));
        }
        Ok(ThetaState(values))
    }

    /// All ones; the standard Schrödinger-Lohe setting.
    pub fn uniform(n: usize) -> Self {
        ThetaState(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Rescales so the mean is exactly one.
    pub fn normalized(&self) -> ThetaState {
        let m = self.mean();
        ThetaState(self.0.iter().map(|v| v / m).collect())
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        ThetaState(values)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `theta_j' = (mu/N) sum_k h(|x_j - x_k|) (theta_k - theta_j)`.
pub fn theta_rhs(
    theta: &[f64],
    centers: &[Vec<f64>],
    spec: &KernelSpec,
    mu: f64,
) -> Result<Vec<f64>> {
    let n = theta.len();
    if centers.len() != n {
        return Err(QsyncError::LengthMismatch {
            expected: n,
            got: centers.len(),
        });
    }
    if !(mu >= 0.0) {
        return Err(QsyncError::Domain(format!("mu must be >= 0, got {mu}")));
    }
    let mut out = vec![0.0; n];
    if mu == 0.0 {
        return Ok(out);
    }
    // Pair loop keeps the antisymmetry exact: each h is used with both signs.
    for j in 0..n {
        for k in (j + 1)..n {
            let h = spec.eval_unchecked(distance(&centers[j], &centers[k]));
            let flux = h * (theta[k] - theta[j]);
            out[j] += flux;
            out[k] -= flux;
        }
    }
    let scale = mu / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// `max_j |theta_j - mean(theta)|`.
pub fn theta_spread(theta: &[f64]) -> f64 {
    if theta.is_empty() {
        return 0.0;
    }
    let mean = theta.iter().sum::<f64>() / theta.len() as f64;
    theta.iter().map(|t| (t - mean).abs()).fold(0.0, f64::max)
}

/// `D = max_{i,j} |x_i - x_j|`.
pub fn pair_diameter(centers: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            d = d.max(distance(a, b));
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_eval(&KernelSpec::Constant { c: 2.0 }, 17.0).unwrap(), 2.0);
        let ht = KernelSpec::HeavyTail { gamma: 1.0 };
        assert_eq!(kernel_eval(&ht, 0.0).unwrap(), 1.0);
        assert!((kernel_eval(&ht, 3f64.sqrt()).unwrap() - 0.5).abs() < 1e-15);
        assert!(kernel_eval(&ht, -0.1).is_err());
        let abs = KernelSpec::Absolute { c_floor: 0.3, amp: 0.7, gamma: 2.0 };
        assert!((kernel_eval(&abs, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(kernel_eval(&abs, 1e6).unwrap() > 0.3);
        assert_eq!(abs.infimum(), 0.3);
    }

    #[test]
    fn tabulated_kernel_interpolates() {
        let t = KernelSpec::Tabulated { radii: vec![0.0, 1.0, 3.0], values: vec![2.0, 1.0, 0.5] };
        t.validate().unwrap();
        assert_eq!(kernel_eval(&t, 0.5).unwrap(), 1.5);
        assert_eq!(kernel_eval(&t, 2.0).unwrap(), 0.75);
        assert_eq!(kernel_eval(&t, 10.0).unwrap(), 0.5);
        assert_eq!(t.infimum(), 0.5);
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelSpec::HeavyTail { gamma: 1.5 }.validate().is_err());
        assert!(KernelSpec::Constant { c: 0.0 }.validate().is_err());
        assert!(KernelSpec::Absolute { c_floor: 0.0, amp: 1.0, gamma: 1.0 }.validate().is_err());
        let t = KernelSpec::Tabulated { radii: vec![1.0, 1.0], values: vec![1.0, 1.0] };
        assert!(t.validate().is_err());
    }

    #[test]
    fn theta_state_rejects_nonpositive() {
        assert!(ThetaState::new(vec![1.0, 0.0]).is_err());
        assert!(ThetaState::new(vec![]).is_err());
        let t = ThetaState::new(vec![2.0, 4.0]).unwrap().normalized();
        assert_eq!(t.values(), &[2.0 / 3.0, 4.0 / 3.0]);
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let c = vec![vec![0.0], vec![1.0], vec![-2.0]];
        let out = theta_rhs(&[1.0, 1.0, 1.0], &c, &KernelSpec::default(), 2.0).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_body_constant_kernel() {
        let (mu, c, a) = (0.7, 1.3, 0.2);
        let out = theta_rhs(
            &[1.0 + a, 1.0 - a],
            &[vec![0.0], vec![5.0]],
            &KernelSpec::Constant { c },
            mu,
        )
        .unwrap();
        assert!((out[0] + mu * c * a).abs() < 1e-15);
        assert!((out[1] - mu * c * a).abs() < 1e-15);
    }

    #[test]
    fn mu_zero_and_length_mismatch() {
        let out = theta_rhs(&[0.5, 1.5], &[vec![0.0], vec![1.0]], &KernelSpec::default(), 0.0);
        assert_eq!(out.unwrap(), vec![0.0, 0.0]);
        assert!(theta_rhs(&[1.0], &[vec![0.0], vec![1.0]], &KernelSpec::default(), 1.0).is_err());
    }

    #[test]
    fn spread_and_diameter() {
        assert_eq!(theta_spread(&[1.0, 1.0, 1.0]), 0.0);
        assert!((theta_spread(&[1.2, 0.8]) - 0.2).abs() < 1e-15);
        assert_eq!(pair_diameter(&[vec![0.3]]), 0.0);
        assert_eq!(pair_diameter(&[vec![0.0], vec![3.0]]), 3.0);
    }
}
