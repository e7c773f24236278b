//! Wave functions on a uniform periodic 1-D grid.
//!
//! Amplitudes are stored at the grid points `x_j = x_min + j*dx`, `j = 0..n`.
//! The point `x_max` is identified with `x_min`. Time evolution uses the
//! symmetric (Strang) split-step Fourier method, which is unitary step by step.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Mass allowed to leak past the periodic boundary.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-10;

/// Tolerance on `sum |psi|^2 dx = 1` accepted by [`WaveFunction::from_normalized`].
pub const NORM_TOLERANCE: f64 = 1e-8;

const MIN_POINTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WavefieldError {
    #[error("grid must have a power-of-two number of points >= {MIN_POINTS}, got {0}")]
    BadPointCount(usize),
    #[error("grid bounds must satisfy x_min < x_max (got {x_min}..{x_max})")]
    BadBounds { x_min: f64, x_max: f64 },
    #[error("packet width {width} is below 4*dx = {min}")]
    WidthTooSmall { width: f64, min: f64 },
    #[error("packet center {0} lies outside the grid")]
    CenterOutsideGrid(f64),
    #[error("packet mass {mass:e} outside the grid exceeds {BOUNDARY_MASS_LIMIT:e}")]
    PacketClipped { mass: f64 },
    #[error("time step too large: dt*max|V|/hbar = {0} (must be < 1)")]
    StepTooLarge(f64),
    #[error("time step must be finite and nonzero, got {0}")]
    BadTimeStep(f64),
    #[error("amplitude array has length {got}, grid has {expected} points")]
    LengthMismatch { expected: usize, got: usize },
    #[error("wave function has zero or non-finite norm")]
    ZeroNorm,
    #[error("wave function is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("potential contains non-finite values")]
    NonFinitePotential,
    #[error("physical constants must be strictly positive")]
    BadConstants,
}

pub type Result<T> = std::result::Result<T, WavefieldError>;

/// Uniform periodic grid on `[x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < MIN_POINTS || !n_points.is_power_of_two() {
            return Err(WavefieldError::BadPointCount(n_points));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(WavefieldError::BadBounds { x_min, x_max });
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Angular wavenumbers in FFT order: `0, 1, .., n/2-1, -n/2, .., -1` times `2*pi/L`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as isize;
        let dk = 2.0 * PI / self.length();
        (0..n)
            .map(|j| if j < n / 2 { j } else { j - n })
            .map(|m| m as f64 * dk)
            .collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x < self.x_max
    }

    /// Maps `x` into `[x_min, x_max)` by periodic identification.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        let w = self.x_min + (x - self.x_min).rem_euclid(l);
        if w >= self.x_max {
            self.x_min
        } else {
            w
        }
    }
}

/// Reduced Planck constant and particle mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let c = Self { hbar, mass };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hbar > 0.0 && self.mass > 0.0 && self.hbar.is_finite() && self.mass.is_finite() {
            Ok(())
        } else {
            Err(WavefieldError::BadConstants)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    Harmonic { omega: f64 },
    Custom { values: Vec<f64> },
}

impl Potential {
    /// Samples the potential on the grid points.
    pub fn values(&self, grid: &Grid, constants: &PhysicalConstants) -> Result<Vec<f64>> {
        let values = match self {
            Potential::Free => vec![0.0; grid.len()],
            Potential::Harmonic { omega } => grid
                .points()
                .into_iter()
                .map(|x| 0.5 * constants.mass * omega * omega * x * x)
                .collect(),
            Potential::Custom { values } => {
                if values.len() != grid.len() {
                    return Err(WavefieldError::LengthMismatch {
                        expected: grid.len(),
                        got: values.len(),
                    });
                }
                values.clone()
            }
        };
        if values.iter().all(|v| v.is_finite()) {
            Ok(values)
        } else {
            Err(WavefieldError::NonFinitePotential)
        }
    }
}

/// Normalized complex amplitudes on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
}

impl WaveFunction {
    /// Builds a wave function from arbitrary amplitudes, rescaling to unit norm.
    pub fn new(grid: Grid, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(WavefieldError::LengthMismatch {
                expected: grid.len(),
                got: amplitudes.len(),
            });
        }
        let norm_sq = norm_sq(&amplitudes, grid.dx());
        if !(norm_sq.is_finite() && norm_sq > 0.0) {
            return Err(WavefieldError::ZeroNorm);
        }
        let scale = norm_sq.sqrt().recip();
        amplitudes.iter_mut().for_each(|a| *a *= scale);
        Ok(Self { grid, amplitudes })
    }

    /// Wraps amplitudes that are already normalized to within [`NORM_TOLERANCE`].
    pub fn from_normalized(grid: Grid, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(WavefieldError::LengthMismatch {
                expected: grid.len(),
                got: amplitudes.len(),
            });
        }
        let n = norm_sq(&amplitudes, grid.dx());
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(WavefieldError::NotNormalized(n));
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amplitudes, self.grid.dx())
    }

    /// Expectation value of the position operator (no periodic unwrapping).
    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.dx();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| self.grid.x(j) * a.norm_sqr() * dx)
            .sum()
    }

    pub fn position_variance(&self) -> f64 {
        let mean = self.mean_position();
        let dx = self.grid.dx();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| (self.grid.x(j) - mean).powi(2) * a.norm_sqr() * dx)
            .sum()
    }
}

fn norm_sq(amplitudes: &[Complex64], dx: f64) -> f64 {
    amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx
}

/// Gaussian packet `exp(-(x-c)^2/(4 w^2)) exp(i p x / hbar)`, normalized on the grid.
///
/// `width` is the standard deviation of `|psi|^2`.
pub fn make_gaussian(
    grid: &Grid,
    center: f64,
    width: f64,
    momentum: f64,
    constants: &PhysicalConstants,
) -> Result<WaveFunction> {
    constants.validate()?;
    if !(center > grid.x_min() && center < grid.x_max()) {
        return Err(WavefieldError::CenterOutsideGrid(center));
    }
    let min_width = 4.0 * grid.dx();
    if !(width >= min_width) {
        return Err(WavefieldError::WidthTooSmall {
            width,
            min: min_width,
        });
    }
    let clipped = gaussian_mass_outside(grid, center, width);
    if clipped > BOUNDARY_MASS_LIMIT {
        return Err(WavefieldError::PacketClipped { mass: clipped });
    }
    WaveFunction::new(
        *grid,
        gaussian_amplitudes(grid, center, width, momentum, constants),
    )
}

/// Unnormalized Gaussian amplitudes; used when superposing packets.
pub(crate) fn gaussian_amplitudes(
    grid: &Grid,
    center: f64,
    width: f64,
    momentum: f64,
    constants: &PhysicalConstants,
) -> Vec<Complex64> {
    let k = momentum / constants.hbar;
    grid.points()
        .into_iter()
        .map(|x| {
            let envelope = (-(x - center).powi(2) / (4.0 * width * width)).exp();
            Complex64::from_polar(envelope, k * x)
        })
        .collect()
}

/// Mass of a normal density with standard deviation `width` lying outside the grid.
pub fn gaussian_mass_outside(grid: &Grid, center: f64, width: f64) -> f64 {
    let s = width * std::f64::consts::SQRT_2;
    0.5 * erfc((center - grid.x_min()) / s) + 0.5 * erfc((grid.x_max() - center) / s)
}

/// Born density `|psi|^2` at the grid points.
pub fn density(wf: &WaveFunction) -> Vec<f64> {
    wf.amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

/// Spectral derivative of periodic samples.
pub fn spectral_derivative(grid: &Grid, values: &[Complex64]) -> Vec<Complex64> {
    let n = grid.len();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf = values.to_vec();
    forward.process(&mut buf);
    let scale = 1.0 / n as f64;
    for (j, (b, k)) in buf.iter_mut().zip(grid.wavenumbers()).enumerate() {
        // the Nyquist mode has no well-defined derivative
        let k = if j == n / 2 { 0.0 } else { k };
        *b *= Complex64::new(0.0, k * scale);
    }
    inverse.process(&mut buf);
    buf
}

/// Probability current `j = (hbar/m) Im(conj(psi) dpsi/dx)`.
pub fn probability_current(wf: &WaveFunction, constants: &PhysicalConstants) -> Vec<f64> {
    let deriv = spectral_derivative(&wf.grid, &wf.amplitudes);
    let factor = constants.hbar / constants.mass;
    wf.amplitudes
        .iter()
        .zip(&deriv)
        .map(|(psi, d)| factor * (psi.conj() * d).im)
        .collect()
}

/// Reusable Strang split-step propagator for a fixed grid, potential and step.
pub struct Propagator {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    half_kick: Vec<Complex64>,
    drift: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Propagator {
    /// `dt` may be negative to run backwards in time.
    pub fn new(
        grid: &Grid,
        potential: &Potential,
        dt: f64,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        constants.validate()?;
        if !(dt.is_finite() && dt != 0.0) {
            return Err(WavefieldError::BadTimeStep(dt));
        }
        let v = potential.values(grid, constants)?;
        let v_max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let guard = dt.abs() * v_max / constants.hbar;
        if guard >= 1.0 {
            return Err(WavefieldError::StepTooLarge(guard));
        }
        let n = grid.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let half_kick = v
            .iter()
            .map(|&vj| Complex64::from_polar(1.0, -vj * dt / (2.0 * constants.hbar)))
            .collect();
        let scale = 1.0 / n as f64;
        let drift = grid
            .wavenumbers()
            .into_iter()
            .map(|k| {
                let phase = -constants.hbar * k * k * dt / (2.0 * constants.mass);
                Complex64::from_polar(scale, phase)
            })
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Self {
            forward,
            inverse,
            half_kick,
            drift,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    /// Advances raw amplitudes by one step. Linear in `psi`; no renormalization.
    pub fn step(&mut self, psi: &mut [Complex64]) {
        psi.iter_mut()
            .zip(&self.half_kick)
            .for_each(|(a, k)| *a *= k);
        self.forward.process_with_scratch(psi, &mut self.scratch);
        psi.iter_mut().zip(&self.drift).for_each(|(a, d)| *a *= d);
        self.inverse.process_with_scratch(psi, &mut self.scratch);
        psi.iter_mut()
            .zip(&self.half_kick)
            .for_each(|(a, k)| *a *= k);
    }

    pub fn run(&mut self, psi: &mut [Complex64], steps: usize) {
        for _ in 0..steps {
            self.step(psi);
        }
    }
}

/// Evolves `wf` by `steps` split-step increments of `dt`.
pub fn evolve(
    wf: &WaveFunction,
    potential: &Potential,
    dt: f64,
    steps: usize,
    constants: &PhysicalConstants,
) -> Result<WaveFunction> {
    let mut propagator = Propagator::new(&wf.grid, potential, dt, constants)?;
    let mut amplitudes = wf.amplitudes.clone();
    propagator.run(&mut amplitudes, steps);
    Ok(WaveFunction {
        grid: wf.grid,
        amplitudes,
    })
}

/// Maximum discrete residual of `d rho/dt + d j/dx` at the state `wf`.
///
/// The time derivative is a central difference over one propagation step
/// either side; the divergence is a central difference on the grid. Both are
/// second order, so halving `dx` and `dt` together should cut the residual ~4x.
pub fn continuity_residual(
    wf: &WaveFunction,
    potential: &Potential,
    dt: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let ahead = evolve(wf, potential, dt, 1, constants)?;
    let behind = evolve(wf, potential, -dt, 1, constants)?;
    let rho_ahead = density(&ahead);
    let rho_behind = density(&behind);
    let j = probability_current(wf, constants);
    let n = j.len();
    let dx = wf.grid.dx();
    let residual = (0..n)
        .map(|i| {
            let drho = (rho_ahead[i] - rho_behind[i]) / (2.0 * dt);
            let dj = (j[(i + 1) % n] - j[(i + n - 1) % n]) / (2.0 * dx);
            (drho + dj).abs()
        })
        .fold(0.0, f64::max);
    Ok(residual)
}
