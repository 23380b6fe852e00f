//! Uniform periodic grid on the box `[-L, L)^d`, quadrature, and the exact
//! spectral/pointwise flows used by the split-step integrator.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{QsyncError, Result};

pub type C64 = Complex64;

/// Fields with norm below this floor are treated as vanished.
pub const MASS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    points_per_dim: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_dim: usize, half_width: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(QsyncError::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if points_per_dim < 16 || !points_per_dim.is_power_of_two() {
            return Err(QsyncError::InvalidGrid(format!(
                "points_per_dim must be a power of two >= 16, got {points_per_dim}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(QsyncError::InvalidGrid(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        Ok(GridSpec {
            dim,
            points_per_dim,
            half_width,
        })
    }

    /// 1D grid with n = 256 points on [-20, 20).
    pub fn default_1d() -> Self {
        GridSpec {
            dim: 1,
            points_per_dim: 256,
            half_width: 20.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_dim as f64
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `dx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinates along one axis: `x_i = -L + i dx`.
    pub fn axis(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.points_per_dim)
            .map(|i| -self.half_width + i as f64 * dx)
            .collect()
    }

    /// Angular wavenumbers `pi m / L` in FFT storage order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.points_per_dim as i64;
        (0..n)
            .map(|i| {
                let m = if i < n / 2 { i } else { i - n };
                PI * m as f64 / self.half_width
            })
            .collect()
    }

    /// Position of the flat (row-major) sample index.
    pub fn point(&self, index: usize) -> [f64; 2] {
        let dx = self.spacing();
        let n = self.points_per_dim;
        match self.dim {
            1 => [-self.half_width + index as f64 * dx, 0.0],
            _ => [
                -self.half_width + (index / n) as f64 * dx,
                -self.half_width + (index % n) as f64 * dx,
            ],
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(
            f,
            "{}D grid, n = {}, L = {}",
            self.dim, self.points_per_dim, self.half_width
        )
    }
}

/// Complex samples of one oscillator on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: GridSpec,
    values: Vec<C64>,
}

impl WaveField {
    pub fn new(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(QsyncError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QsyncError::NonFinite("wave field".into()));
        }
        Ok(WaveField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        WaveField {
            grid,
            values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f(x)` at every grid point. The closure receives a slice of
    /// length `dim`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> C64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..d])
            })
            .collect();
        WaveField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn scaled(&self, s: C64) -> WaveField {
        WaveField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest modulus over the outermost grid layer.
    pub fn boundary_amplitude(&self) -> f64 {
        let n = self.grid.points_per_dim();
        let mut worst = 0.0f64;
        for (i, v) in self.values.iter().enumerate() {
            let on_edge = match self.grid.dim() {
                1 => i == 0 || i == n - 1,
                _ => {
                    let (r, c) = (i / n, i % n);
                    r == 0 || r == n - 1 || c == 0 || c == n - 1
                }
            };
            if on_edge {
                worst = worst.max(v.norm());
            }
        }
        worst
    }
}

/// Gaussian wave packet `A (pi w^2)^{-d/4} exp(-|x-c|^2/(2w^2) + i p.x + i phase)`;
/// its continuum L2 norm is `amplitude`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPacket {
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl GaussianPacket {
    pub fn sample(&self, grid: GridSpec) -> Result<WaveField> {
        let d = grid.dim();
        if self.center.len() != d || self.momentum.len() != d {
            return Err(QsyncError::LengthMismatch {
                expected: d,
                got: self.center.len().min(self.momentum.len()),
            });
        }
        if !(self.width > 0.0) {
            return Err(QsyncError::Domain(format!("packet width {} <= 0", self.width)));
        }
        let norm = self.amplitude * (PI * self.width * self.width).powf(-(d as f64) / 4.0);
        let w2 = self.width * self.width;
        Ok(WaveField::from_fn(grid, |x| {
            let mut r2 = 0.0;
            let mut px = 0.0;
            for a in 0..d {
                let dx = x[a] - self.center[a];
                r2 += dx * dx;
                px += self.momentum[a] * x[a];
            }
            C64::from_polar(norm * (-r2 / (2.0 * w2)).exp(), px + self.phase)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// `V(x) = omega^2 |x|^2 / 2`.
    Harmonic { omega: f64 },
    Tabulated { samples: Vec<f64> },
}

impl PotentialSpec {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::Harmonic { omega } => {
                if omega.is_finite() && *omega > 0.0 {
                    Ok(())
                } else {
                    Err(QsyncError::Domain(format!("harmonic omega must be > 0, got {omega}")))
                }
            }
            PotentialSpec::Tabulated { samples } => {
                if samples.len() != grid.len() {
                    return Err(QsyncError::LengthMismatch {
                        expected: grid.len(),
                        got: samples.len(),
                    });
                }
                if samples.iter().any(|v| !v.is_finite()) {
                    return Err(QsyncError::NonFinite("tabulated potential".into()));
                }
                Ok(())
            }
        }
    }

    /// Potential values at every grid sample.
    pub fn samples(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        self.validate(grid)?;
        let d = grid.dim();
        Ok(match self {
            PotentialSpec::Zero => vec![0.0; grid.len()],
            PotentialSpec::Harmonic { omega } => (0..grid.len())
                .map(|i| {
                    let p = grid.point(i);
                    let r2: f64 = p[..d].iter().map(|x| x * x).sum();
                    0.5 * omega * omega * r2
                })
                .collect(),
            PotentialSpec::Tabulated { samples } => samples.clone(),
        })
    }
}

fn check_same_grid(f: &WaveField, g: &WaveField) -> Result<()> {
    if f.grid != g.grid {
        return Err(QsyncError::GridMismatch);
    }
    Ok(())
}

/// `<f, g> = sum conj(f) g dx^d`, conjugate-linear in the first slot.
pub fn inner_product(f: &WaveField, g: &WaveField) -> Result<C64> {
    check_same_grid(f, g)?;
    Ok(raw_inner(f.values(), g.values()) * f.grid.cell_volume())
}

/// Unweighted `sum conj(a) b`.
pub(crate) fn raw_inner(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

pub fn norm(f: &WaveField) -> f64 {
    let s: f64 = f.values().iter().map(|v| v.norm_sqr()).sum();
    (s * f.grid.cell_volume()).sqrt()
}

/// Normalized first moment of `|f|^2`.
pub fn center_of_mass(f: &WaveField) -> Result<Vec<f64>> {
    let grid = f.grid;
    let d = grid.dim();
    let mut m0 = 0.0;
    let mut m1 = [0.0f64; 2];
    for (i, v) in f.values().iter().enumerate() {
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
            oscillator: 0,
            time: f64::NAN,
            mass,
        });
    }
    Ok(m1[..d].iter().map(|m| m / m0).collect())
}

/// Cached FFT plans and `|xi|^2` table for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    xi_sq: Vec<f64>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.points_per_dim();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k = grid.wavenumbers();
        let xi_sq = match grid.dim() {
            1 => k.iter().map(|x| x * x).collect(),
            _ => (0..grid.len())
                .map(|i| k[i / n] * k[i / n] + k[i % n] * k[i % n])
                .collect(),
        };
        Spectral {
            grid,
            fwd,
            inv,
            xi_sq,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `|xi|^2` in FFT storage order.
    pub fn xi_squared(&self) -> &[f64] {
        &self.xi_sq
    }

    fn transform(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [C64]) {
        let n = self.grid.points_per_dim();
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Rows are contiguous; for 1D this is the whole transform.
        plan.process_with_scratch(data, &mut scratch);
        if self.grid.dim() == 2 {
            let mut col = vec![C64::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    col[r] = data[r * n + c];
                }
                plan.process_with_scratch(&mut col, &mut scratch);
                for r in 0..n {
                    data[r * n + c] = col[r];
                }
            }
        }
    }

    /// Unnormalized forward DFT.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(&self.fwd, data);
    }

    /// Inverse DFT including the `1/n` per dimension.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(&self.inv, data);
        let scale = 1.0 / self.grid.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Fourier multiplier `exp(-i |xi|^2 dt / 2)`.
    pub fn kinetic_multiplier(&self, dt: f64) -> Vec<C64> {
        self.xi_sq
            .iter()
            .map(|k2| C64::from_polar(1.0, -0.5 * k2 * dt))
            .collect()
    }

    /// Applies a precomputed Fourier multiplier in place.
    pub fn apply_multiplier(&self, data: &mut [C64], multiplier: &[C64]) {
        self.forward(data);
        for (v, m) in data.iter_mut().zip(multiplier) {
            *v *= m;
        }
        self.inverse(data);
    }

    /// `-1/2 Laplacian` applied spectrally.
    pub fn kinetic_apply(&self, data: &[C64]) -> Vec<C64> {
        let mut out = data.to_vec();
        self.forward(&mut out);
        for (v, k2) in out.iter_mut().zip(&self.xi_sq) {
            *v *= 0.5 * k2;
        }
        self.inverse(&mut out);
        out
    }
}

/// Exact flow of the kinetic operator `-1/2 Laplacian` over time `dt`.
pub fn kinetic_phase(f: &WaveField, dt: f64) -> WaveField {
    let spectral = Spectral::new(f.grid);
    let mut out = f.clone();
    if dt != 0.0 {
        let m = spectral.kinetic_multiplier(dt);
        spectral.apply_multiplier(out.values_mut(), &m);
    }
    out
}

/// Pointwise multiplier `exp(-i (V(x) + shift) dt)`.
pub fn phase_multiplier(potential: &[f64], omega_shift: f64, dt: f64) -> Vec<C64> {
    potential
        .iter()
        .map(|v| C64::from_polar(1.0, -(v + omega_shift) * dt))
        .collect()
}

/// Exact flow of `V + omega_shift` over time `dt`.
pub fn potential_phase(
    f: &WaveField,
    pot: &PotentialSpec,
    omega_shift: f64,
    dt: f64,
) -> Result<WaveField> {
    let v = pot.samples(&f.grid)?;
    let m = phase_multiplier(&v, omega_shift, dt);
    let mut out = f.clone();
    for (x, p) in out.values_mut().iter_mut().zip(&m) {
        *x *= p;
    }
    Ok(out)
}
