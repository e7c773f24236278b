//! Classical coin flip in a one-axis rotation model.
//!
//! A coin launched with vertical speed `v` and spin `omega` stays in the air for
//! `2v/g` and turns through `theta = omega * 2v/g`. The outcome is a deterministic
//! function of `(v, omega)`; the heads region in the launch plane is a set of
//! alternating hyperbolic bands, so any launch density that is smooth on the
//! scale of a band gives close to 50-50 outcomes.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Largest change allowed when the quadrature resolution is doubled.
pub const QUADRATURE_TOLERANCE: f64 = 1e-3;

pub const DEFAULT_QUADRATURE_N: usize = 256;

/// Half-width of the integrated `v` range, in standard deviations.
const V_SPAN_SDS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlipError {
    #[error("invalid launch: {0}")]
    InvalidLaunch(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("quadrature underresolved: {coarse} at n={n} vs {fine} at n={}", 2 * n)]
    QuadratureUnderresolved { n: usize, coarse: f64, fine: f64 },
}

pub type Result<T> = std::result::Result<T, FlipError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchState {
    pub v: f64,
    pub omega: f64,
    pub g_grav: f64,
}

impl LaunchState {
    pub fn new(v: f64, omega: f64) -> Result<Self> {
        Self::with_gravity(v, omega, STANDARD_GRAVITY)
    }

    pub fn with_gravity(v: f64, omega: f64, g_grav: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(FlipError::InvalidLaunch(format!(
                "v must be positive, got {v}"
            )));
        }
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(FlipError::InvalidLaunch(format!(
                "omega must be non-negative, got {omega}"
            )));
        }
        if !(g_grav > 0.0 && g_grav.is_finite()) {
            return Err(FlipError::InvalidLaunch(format!(
                "g_grav must be positive, got {g_grav}"
            )));
        }
        Ok(Self { v, omega, g_grav })
    }

    pub fn flight_time(&self) -> f64 {
        2.0 * self.v / self.g_grav
    }

    pub fn total_angle(&self) -> f64 {
        self.omega * self.flight_time()
    }
}

/// Whether the total rotation angle lands the starting face up.
pub fn is_heads_angle(theta: f64) -> bool {
    let r = theta.rem_euclid(TAU);
    !(FRAC_PI_2..3.0 * FRAC_PI_2).contains(&r)
}

/// 1 (heads) iff `theta mod 2pi` lies in `[0, pi/2) ∪ [3pi/2, 2pi)`.
pub fn flip_outcome(launch: &LaunchState) -> u8 {
    u8::from(is_heads_angle(launch.total_angle()))
}

/// Independent Gaussian launch density, truncated to `v > 0`, `omega >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchDensity {
    pub v_mean: f64,
    pub v_sd: f64,
    pub omega_mean: f64,
    pub omega_sd: f64,
    pub g_grav: f64,
}

impl LaunchDensity {
    pub fn new(v_mean: f64, v_sd: f64, omega_mean: f64, omega_sd: f64) -> Self {
        Self {
            v_mean,
            v_sd,
            omega_mean,
            omega_sd,
            g_grav: STANDARD_GRAVITY,
        }
    }

    /// Same means, both spreads multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            v_sd: self.v_sd * factor,
            omega_sd: self.omega_sd * factor,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.v_mean > 0.0
            && self.omega_mean >= 0.0
            && self.v_sd >= 0.0
            && self.omega_sd >= 0.0
            && self.g_grav > 0.0
            && [
                self.v_mean,
                self.v_sd,
                self.omega_mean,
                self.omega_sd,
                self.g_grav,
            ]
            .iter()
            .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(FlipError::InvalidDensity(format!("{self:?}")))
        }
    }
}

/// Probability of heads under `density`.
///
/// The `omega` integral is done exactly band by band with the normal CDF; the
/// `v` integral uses an `n`-point midpoint rule, and the result at `2n` must agree
/// to within [`QUADRATURE_TOLERANCE`].
pub fn heads_probability(density: &LaunchDensity, quadrature_n: usize) -> Result<f64> {
    density.validate()?;
    if quadrature_n == 0 {
        return Err(FlipError::InvalidDensity(
            "quadrature_n must be positive".into(),
        ));
    }
    if density.v_sd == 0.0 {
        return Ok(heads_given_v(density, density.v_mean));
    }
    let coarse = integrate_v(density, quadrature_n);
    let fine = integrate_v(density, 2 * quadrature_n);
    if (coarse - fine).abs() > QUADRATURE_TOLERANCE {
        return Err(FlipError::QuadratureUnderresolved {
            n: quadrature_n,
            coarse,
            fine,
        });
    }
    Ok(fine.clamp(0.0, 1.0))
}

fn integrate_v(d: &LaunchDensity, n: usize) -> f64 {
    let lo = (d.v_mean - V_SPAN_SDS * d.v_sd).max(0.0);
    let hi = d.v_mean + V_SPAN_SDS * d.v_sd;
    let h = (hi - lo) / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let v = lo + (i as f64 + 0.5) * h;
        let z = (v - d.v_mean) / d.v_sd;
        let w = (-0.5 * z * z).exp();
        num += w * heads_given_v(d, v);
        den += w;
    }
    num / den
}

/// Conditional heads probability over the truncated `omega` density at fixed `v`.
fn heads_given_v(d: &LaunchDensity, v: f64) -> f64 {
    let scale = 2.0 * v / d.g_grav;
    if d.omega_sd == 0.0 {
        return f64::from(u8::from(is_heads_angle(d.omega_mean * scale)));
    }
    let normal = Normal::new(d.omega_mean, d.omega_sd).expect("validated sd");
    let lo = (d.omega_mean - 12.0 * d.omega_sd).max(0.0);
    let hi = d.omega_mean + 12.0 * d.omega_sd;
    let total = 1.0 - normal.cdf(0.0);
    // heads bands in theta: [2pi k - pi/2, 2pi k + pi/2), clipped to theta >= 0
    let k_lo = ((lo * scale + FRAC_PI_2) / TAU).floor() as i64;
    let k_hi = ((hi * scale + FRAC_PI_2) / TAU).ceil() as i64;
    let mut mass = 0.0;
    for k in k_lo.max(0)..=k_hi {
        let a = ((TAU * k as f64 - FRAC_PI_2) / scale).max(0.0);
        let b = (TAU * k as f64 + FRAC_PI_2) / scale;
        if b > a {
            mass += normal.cdf(b) - normal.cdf(a);
        }
    }
    mass / total
}

/// `omega` giving a total angle of `theta` at speed `v`.
pub fn omega_for_angle(theta: f64, v: f64, g_grav: f64) -> f64 {
    theta * g_grav / (2.0 * v)
}

/// Number of half-turn bands crossed by `theta` within `±sds` standard deviations.
pub fn bands_crossed(density: &LaunchDensity, sds: f64) -> f64 {
    let dtheta_domega = 2.0 * density.v_mean / density.g_grav;
    let dtheta_dv = 2.0 * density.omega_mean / density.g_grav;
    let spread = (dtheta_domega * density.omega_sd).hypot(dtheta_dv * density.v_sd);
    2.0 * sds * spread / PI
}
