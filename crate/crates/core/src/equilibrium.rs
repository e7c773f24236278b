//! Conditional wave functions and the quantum equilibrium marginal on small
//! product states.
//!
//! For a bipartite `Psi(y, z)` the conditional wave function at environment
//! position `s` is `Psi(., s) / ||Psi(., s)||`. When `Psi = psi (x) Phi` it
//! equals `psi` times the phase `Phi(s)/|Phi(s)|`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavefield::{Grid, WaveFunction, WavefieldError};

/// Fibers with norm below this are treated as empty.
pub const NULL_FIBER_NORM: f64 = 1e-12;

/// `|psi_M|` below this is excluded from the phase-constancy check.
pub const PHASE_SUPPORT: f64 = 1e-6;

/// Largest per-coordinate grid accepted by [`TripartiteWF`].
pub const MAX_TRIPARTITE_POINTS: usize = 64;

/// Tolerance of [`qeh_consistency`].
pub const QEH_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("fiber at environment index {index} has norm {norm:e}")]
    NullFiber { index: usize, norm: f64 },
    #[error("index {index} out of range for {len} environment points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tripartite grids are limited to {MAX_TRIPARTITE_POINTS} points per coordinate")]
    TooLarge,
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
}

pub type Result<T> = std::result::Result<T, EquilibriumError>;

/// Closed-open interval `[lo, hi)`; infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn everything() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn positive() -> Self {
        Self::new(0.0, f64::INFINITY)
    }
}

/// Quadrature weights of `intervals` for densities interpolated linearly
/// between grid points: `w_j = (1/dx) * integral over the region of hat_j`.
///
/// The intervals are assumed disjoint. The full line gives `w_j = 1`, so the
/// weights reproduce `sum rho_j dx` exactly.
pub fn cell_weights(grid: &Grid, intervals: &[Interval]) -> Vec<f64> {
    // integral of the unit hat from -1 to u
    let hat_cdf = |u: f64| {
        let u = u.clamp(-1.0, 1.0);
        if u <= 0.0 {
            0.5 * (1.0 + u) * (1.0 + u)
        } else {
            1.0 - 0.5 * (1.0 - u) * (1.0 - u)
        }
    };
    let dx = grid.dx();
    (0..grid.len())
        .map(|j| {
            let x = grid.x(j);
            intervals
                .iter()
                .map(|iv| hat_cdf((iv.hi - x) / dx) - hat_cdf((iv.lo - x) / dx))
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect()
}

/// Born probability of `intervals` for a single coordinate.
pub fn born_probability(wf: &WaveFunction, intervals: &[Interval]) -> f64 {
    let dx = wf.grid().dx();
    cell_weights(wf.grid(), intervals)
        .iter()
        .zip(wf.amplitudes())
        .map(|(w, a)| w * a.norm_sqr() * dx)
        .sum()
}

/// `Psi(y, z)` stored row-major: index `iy * n_z + iz`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteWF {
    grid_y: Grid,
    grid_z: Grid,
    amplitudes: Vec<Complex64>,
}

impl BipartiteWF {
    /// Normalizes `amplitudes` over `dy dz`.
    pub fn new(grid_y: Grid, grid_z: Grid, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let expected = grid_y.len() * grid_z.len();
        if amplitudes.len() != expected {
            return Err(EquilibriumError::ShapeMismatch(format!(
                "expected {expected} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let norm_sq: f64 =
            amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid_y.dx() * grid_z.dx();
        if !(norm_sq > 0.0 && norm_sq.is_finite()) {
            return Err(WavefieldError::ZeroNorm.into());
        }
        let scale = norm_sq.sqrt().recip();
        amplitudes.iter_mut().for_each(|a| *a *= scale);
        Ok(Self {
            grid_y,
            grid_z,
            amplitudes,
        })
    }

    /// `psi (x) phi`; already normalized since both factors are.
    pub fn product(psi: &WaveFunction, phi: &WaveFunction) -> Self {
        let amplitudes = psi
            .amplitudes()
            .iter()
            .flat_map(|a| phi.amplitudes().iter().map(move |b| a * b))
            .collect();
        Self {
            grid_y: *psi.grid(),
            grid_z: *phi.grid(),
            amplitudes,
        }
    }

    /// Normalized `sum_i psi_i (x) phi_i`.
    pub fn superposition(terms: &[(&WaveFunction, &WaveFunction)]) -> Result<Self> {
        let (first_y, first_z) = terms
            .first()
            .map(|(y, z)| (*y.grid(), *z.grid()))
            .ok_or_else(|| EquilibriumError::ShapeMismatch("no terms".into()))?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); first_y.len() * first_z.len()];
        for (psi, phi) in terms {
            if *psi.grid() != first_y || *phi.grid() != first_z {
                return Err(EquilibriumError::ShapeMismatch(
                    "terms on different grids".into(),
                ));
            }
            for (iy, a) in psi.amplitudes().iter().enumerate() {
                for (iz, b) in phi.amplitudes().iter().enumerate() {
                    amplitudes[iy * first_z.len() + iz] += a * b;
                }
            }
        }
        Self::new(first_y, first_z, amplitudes)
    }

    pub fn grid_y(&self) -> &Grid {
        &self.grid_y
    }

    pub fn grid_z(&self) -> &Grid {
        &self.grid_z
    }

    pub fn amplitude(&self, iy: usize, iz: usize) -> Complex64 {
        self.amplitudes[iy * self.grid_z.len() + iz]
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
            * self.grid_y.dx()
            * self.grid_z.dx()
    }

    pub fn fiber(&self, iz: usize) -> Vec<Complex64> {
        (0..self.grid_y.len())
            .map(|iy| self.amplitude(iy, iz))
            .collect()
    }

    pub fn fiber_norm(&self, iz: usize) -> f64 {
        let dy = self.grid_y.dx();
        (self.fiber(iz).iter().map(|a| a.norm_sqr()).sum::<f64>() * dy).sqrt()
    }
}

/// Conditional wave function `Psi(., s) / ||Psi(., s)||` on `grid_y`.
pub fn conditional_wf(psi: &BipartiteWF, s_index: usize) -> Result<WaveFunction> {
    let len = psi.grid_z.len();
    if s_index >= len {
        return Err(EquilibriumError::IndexOutOfRange {
            index: s_index,
            len,
        });
    }
    let norm = psi.fiber_norm(s_index);
    if !(norm > NULL_FIBER_NORM) {
        return Err(EquilibriumError::NullFiber {
            index: s_index,
            norm,
        });
    }
    let amps = psi.fiber(s_index).into_iter().map(|a| a / norm).collect();
    Ok(WaveFunction::from_normalized(psi.grid_y, amps)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub is_member: bool,
    /// `max | |Psi^z(y)| - |psi_M(y)| |` over checked fibers.
    pub max_amplitude_residual: f64,
    /// `max |r(y) - r(y_ref)|` with `r = Psi^z / psi_M`, over checked fibers.
    pub max_phase_residual: f64,
    pub fibers_checked: usize,
}

/// Tests whether every non-null fiber of `psi` is `psi_m` up to a y-independent phase.
pub fn check_factorization(
    psi: &BipartiteWF,
    psi_m: &WaveFunction,
    tol: f64,
) -> Result<FactorizationReport> {
    if *psi_m.grid() != psi.grid_y {
        return Err(EquilibriumError::ShapeMismatch(
            "psi_M must live on the system grid".into(),
        ));
    }
    let target = psi_m.amplitudes();
    let reference = target
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    let mut max_amp = 0.0_f64;
    let mut max_phase = 0.0_f64;
    let mut checked = 0;
    for iz in 0..psi.grid_z.len() {
        let cond = match conditional_wf(psi, iz) {
            Ok(c) => c,
            Err(EquilibriumError::NullFiber { .. }) => continue,
            Err(e) => return Err(e),
        };
        checked += 1;
        let cond = cond.amplitudes();
        for (c, t) in cond.iter().zip(target) {
            max_amp = max_amp.max((c.norm() - t.norm()).abs());
        }
        let r_ref = cond[reference] / target[reference];
        for (c, t) in cond.iter().zip(target) {
            if t.norm() > PHASE_SUPPORT {
                max_phase = max_phase.max((c / t - r_ref).norm());
            }
        }
    }
    Ok(FactorizationReport {
        is_member: max_amp <= tol && max_phase <= tol,
        max_amplitude_residual: max_amp,
        max_phase_residual: max_phase,
        fibers_checked: checked,
    })
}

/// Product of per-coordinate Born probabilities of `region`.
pub fn qeh_marginal(psi_list: &[WaveFunction], region: &[Vec<Interval>]) -> Result<f64> {
    if psi_list.len() != region.len() {
        return Err(EquilibriumError::ShapeMismatch(format!(
            "{} wave functions but {} region factors",
            psi_list.len(),
            region.len()
        )));
    }
    let p = psi_list
        .iter()
        .zip(region)
        .map(|(wf, ivs)| born_probability(wf, ivs))
        .product::<f64>();
    Ok(p.clamp(0.0, 1.0))
}

/// `Psi(y1, y2, z)` on three small grids; index `(i1 * n2 + i2) * n_z + iz`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripartiteWF {
    grids: [Grid; 3],
    amplitudes: Vec<Complex64>,
}

impl TripartiteWF {
    /// `psi1 (x) psi2 (x) phi`.
    pub fn product(psi1: &WaveFunction, psi2: &WaveFunction, phi: &WaveFunction) -> Result<Self> {
        let grids = [*psi1.grid(), *psi2.grid(), *phi.grid()];
        if grids.iter().any(|g| g.len() > MAX_TRIPARTITE_POINTS) {
            return Err(EquilibriumError::TooLarge);
        }
        let mut amplitudes = Vec::with_capacity(grids.iter().map(Grid::len).product());
        for a in psi1.amplitudes() {
            for b in psi2.amplitudes() {
                let ab = a * b;
                amplitudes.extend(phi.amplitudes().iter().map(|c| ab * c));
            }
        }
        Ok(Self { grids, amplitudes })
    }

    pub fn grids(&self) -> &[Grid; 3] {
        &self.grids
    }

    fn amplitude(&self, i1: usize, i2: usize, iz: usize) -> Complex64 {
        let [_, g2, gz] = &self.grids;
        self.amplitudes[(i1 * g2.len() + i2) * gz.len() + iz]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QehReport {
    pub marginal: f64,
    pub max_deviation: f64,
    pub fibers_checked: usize,
    pub pass: bool,
}

/// Compares the conditional system distribution at every environment index
/// with the product Born marginal of `system`.
pub fn qeh_consistency(
    state: &TripartiteWF,
    system: &[WaveFunction; 2],
    region: &[Vec<Interval>; 2],
) -> Result<QehReport> {
    let [g1, g2, gz] = state.grids;
    if *system[0].grid() != g1 || *system[1].grid() != g2 {
        return Err(EquilibriumError::ShapeMismatch(
            "system wave functions must match the state's grids".into(),
        ));
    }
    let marginal = qeh_marginal(system, region)?;
    let w1 = cell_weights(&g1, &region[0]);
    let w2 = cell_weights(&g2, &region[1]);
    let cell = g1.dx() * g2.dx();
    let mut max_dev = 0.0_f64;
    let mut checked = 0;
    for iz in 0..gz.len() {
        let mut total = 0.0;
        let mut inside = 0.0;
        for (i1, a) in w1.iter().enumerate() {
            for (i2, b) in w2.iter().enumerate() {
                let rho = state.amplitude(i1, i2, iz).norm_sqr() * cell;
                total += rho;
                inside += rho * a * b;
            }
        }
        if total.sqrt() <= NULL_FIBER_NORM {
            continue;
        }
        checked += 1;
        max_dev = max_dev.max((inside / total - marginal).abs());
    }
    Ok(QehReport {
        marginal,
        max_deviation: max_dev,
        fibers_checked: checked,
        pass: checked > 0 && max_dev <= QEH_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::{make_gaussian, PhysicalConstants};

    fn grid() -> Grid {
        Grid::new(-8.0, 8.0, 64).unwrap()
    }

    fn gaussian(center: f64, width: f64, momentum: f64) -> WaveFunction {
        make_gaussian(
            &grid(),
            center,
            width,
            momentum,
            &PhysicalConstants::default(),
        )
        .unwrap()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn conditional_of_real_positive_product_is_the_factor() {
        let psi = gaussian(0.5, 1.0, 1.3);
        let phi = gaussian(-1.0, 1.1, 0.0);
        let state = BipartiteWF::product(&psi, &phi);
        assert!((state.norm_sq() - 1.0).abs() < 1e-12);
        for s in 0..64 {
            if let Ok(c) = conditional_wf(&state, s) {
                assert!(max_diff(c.amplitudes(), psi.amplitudes()) < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_picks_up_the_environment_phase() {
        let psi = gaussian(0.0, 1.0, -0.7);
        let phi = gaussian(1.0, 1.05, 2.0);
        let state = BipartiteWF::product(&psi, &phi);
        for s in [10, 30, 41] {
            let c = conditional_wf(&state, s).unwrap();
            let phase = phi.amplitudes()[s] / phi.amplitudes()[s].norm();
            let expected: Vec<_> = psi.amplitudes().iter().map(|a| a * phase).collect();
            assert!(max_diff(c.amplitudes(), &expected) < 1e-12);
        }
    }

    fn masked(wf: &WaveFunction, keep: impl Fn(f64) -> bool) -> WaveFunction {
        let g = *wf.grid();
        let amps = wf
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(j, a)| {
                if keep(g.x(j)) {
                    *a
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        WaveFunction::new(g, amps).unwrap()
    }

    #[test]
    fn entangled_state_with_disjoint_pointers() {
        let phi1 = gaussian(-1.2, 1.0, 0.4);
        let phi2 = gaussian(1.4, 1.0, -1.0);
        let chi1 = masked(&gaussian(-1.5, 1.0, 0.5), |z| z < 0.0);
        let chi2 = masked(&gaussian(1.5, 1.0, 0.0), |z| z >= 0.0);
        let state = BipartiteWF::superposition(&[(&phi1, &chi1), (&phi2, &chi2)]).unwrap();
        let s = (0..64).find(|&i| grid().x(i) >= -1.5).unwrap();
        let c = conditional_wf(&state, s).unwrap();
        // independent oracle: normalize the column by hand
        let col: Vec<Complex64> = (0..64).map(|iy| state.amplitude(iy, s)).collect();
        let norm = (col.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid().dx()).sqrt();
        let by_hand: Vec<_> = col.iter().map(|a| a / norm).collect();
        assert!(max_diff(c.amplitudes(), &by_hand) < 1e-12);
        let report = check_factorization(&BipartiteWF::product(&c, &chi1), &phi1, 1e-10).unwrap();
        assert!(report.is_member, "{report:?}");
        // as a whole the state is not a product
        assert!(!check_factorization(&state, &phi1, 1e-6).unwrap().is_member);
    }

    #[test]
    fn null_fiber() {
        let psi = gaussian(0.0, 1.0, 0.0);
        let chi = masked(&gaussian(1.5, 1.0, 0.0), |z| z >= 0.0);
        let state = BipartiteWF::product(&psi, &chi);
        assert!(matches!(
            conditional_wf(&state, 0),
            Err(EquilibriumError::NullFiber { index: 0, .. })
        ));
        assert!(matches!(
            conditional_wf(&state, 64),
            Err(EquilibriumError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn factorization_membership() {
        let psi_m = gaussian(0.3, 1.05, 0.9);
        let phi = gaussian(-0.5, 1.0, -1.4);
        let r = check_factorization(&BipartiteWF::product(&psi_m, &phi), &psi_m, 1e-10).unwrap();
        assert!(r.is_member);
        assert!(r.max_amplitude_residual < 1e-10 && r.max_phase_residual < 1e-10);

        let theta = Complex64::from_polar(1.0, 1.234);
        let rotated = WaveFunction::new(
            *psi_m.grid(),
            psi_m.amplitudes().iter().map(|a| a * theta).collect(),
        )
        .unwrap();
        let r = check_factorization(&BipartiteWF::product(&rotated, &phi), &psi_m, 1e-10).unwrap();
        assert!(r.is_member);

        let other = gaussian(-1.0, 1.0, 0.0);
        let entangled =
            BipartiteWF::superposition(&[(&psi_m, &phi), (&other, &gaussian(1.0, 1.0, 0.0))])
                .unwrap();
        assert!(
            !check_factorization(&entangled, &psi_m, 1e-6)
                .unwrap()
                .is_member
        );
    }

    #[test]
    fn marginal_values() {
        let fine = Grid::new(-10.0, 10.0, 256).unwrap();
        let std = make_gaussian(&fine, 0.0, 1.0, 0.0, &PhysicalConstants::default()).unwrap();
        let full = vec![Interval::everything()];
        let p = qeh_marginal(&[std.clone(), std.clone()], &[full.clone(), full]).unwrap();
        assert!((p - 1.0).abs() < 1e-8);
        let half = vec![Interval::positive()];
        let p = qeh_marginal(&[std.clone(), std.clone()], &[half.clone(), half]).unwrap();
        assert!((p - 0.25).abs() < 1e-6);
        // erf(1/sqrt 2) = 0.682689492...
        let unit = vec![Interval::new(-1.0, 1.0)];
        let p = qeh_marginal(&[std.clone(), std.clone()], &[unit.clone(), unit]).unwrap();
        assert!((p - 0.682_689_492f64.powi(2)).abs() < 1e-3);
        assert!(qeh_marginal(&[std], &[]).is_err());
    }

    #[test]
    fn marginal_factorizes() {
        let a = gaussian(0.4, 1.0, 0.2);
        let b = gaussian(-1.1, 1.0, 0.0);
        let ra = vec![Interval::new(-0.5, 1.5), Interval::new(3.0, 4.0)];
        let rb = vec![Interval::new(f64::NEG_INFINITY, -1.0)];
        let joint = qeh_marginal(&[a.clone(), b.clone()], &[ra.clone(), rb.clone()]).unwrap();
        let split = born_probability(&a, &ra) * born_probability(&b, &rb);
        assert!((joint - split).abs() < 1e-12);
    }

    #[test]
    fn conditional_system_distribution_matches_marginal() {
        let psi = gaussian(0.0, 1.0, 0.0);
        let phi = gaussian(0.7, 1.0, 1.0);
        let state = TripartiteWF::product(&psi, &psi, &phi).unwrap();
        let unit = vec![Interval::new(-1.0, 1.0)];
        let r =
            qeh_consistency(&state, &[psi.clone(), psi.clone()], &[unit.clone(), unit]).unwrap();
        assert!(r.pass, "{r:?}");
        let half = vec![Interval::positive()];
        let r = qeh_consistency(&state, &[psi.clone(), psi], &[half.clone(), half]).unwrap();
        assert!(r.pass && (r.marginal - 0.25).abs() < 1e-8);
    }

    #[test]
    fn tripartite_size_limit() {
        let big = Grid::new(-8.0, 8.0, 128).unwrap();
        let wf = make_gaussian(&big, 0.0, 1.0, 0.0, &PhysicalConstants::default()).unwrap();
        let small = gaussian(0.0, 1.0, 0.0);
        assert!(matches!(
            TripartiteWF::product(&wf, &small, &small),
            Err(EquilibriumError::TooLarge)
        ));
    }
}
