//! Guiding-equation velocity field and particle trajectories.
//!
//! The velocity is `v = (hbar/m) Im(psi'/psi) = j/rho`. Between stored
//! snapshots the wave function (and its derivative) is interpolated linearly
//! in time; in space both are interpolated by 4-point cubic Lagrange on the
//! real and imaginary parts.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::{ks_distance, BornSampler};
use crate::wavefield::{
    spectral_derivative, Grid, PhysicalConstants, Potential, Propagator, WaveFunction,
    WavefieldError,
};

/// Relative density below which the velocity is considered singular.
pub const DEFAULT_NODE_EPS: f64 = 1e-8;

/// KS distance allowed between an evolved Born ensemble and the evolved density.
pub const EQUIVARIANCE_KS_LIMIT: f64 = 0.02;

/// Substeps used when a step is retried after touching the node guard.
const NODE_REFINEMENT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PilotError {
    #[error("density {rho:e} at x = {x} (t = {t}) is below the node threshold {threshold:e}")]
    NodeProximity {
        x: f64,
        t: f64,
        rho: f64,
        threshold: f64,
    },
    #[error("trajectory from q0 = {q0} could not be resolved past a node near x = {x} at t = {t}")]
    NodeUnresolvable { q0: f64, x: f64, t: f64 },
    #[error("position {0} is not finite")]
    NonFinitePosition(f64),
    #[error("history needs at least two snapshots on one grid with uniform spacing")]
    BadHistory,
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
}

pub type Result<T> = std::result::Result<T, PilotError>;

/// A wave function together with its spectral derivative, ready for interpolation.
#[derive(Debug, Clone)]
struct Snapshot {
    wf: WaveFunction,
    deriv: Vec<Complex64>,
    rho_max: f64,
}

impl Snapshot {
    fn new(wf: WaveFunction) -> Self {
        let deriv = spectral_derivative(wf.grid(), wf.amplitudes());
        let rho_max = wf
            .amplitudes()
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0, f64::max);
        Self { wf, deriv, rho_max }
    }
}

/// Cubic Lagrange stencil at `x`: four periodic indices and their weights.
fn stencil(grid: &Grid, x: f64) -> ([usize; 4], [f64; 4]) {
    let n = grid.len();
    let t = (x - grid.x_min()) / grid.dx();
    let j = t.floor();
    let s = t - j;
    let j = (j as i64).rem_euclid(n as i64) as usize;
    let idx = [(j + n - 1) % n, j, (j + 1) % n, (j + 2) % n];
    let w = [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ];
    (idx, w)
}

fn apply(values: &[Complex64], idx: &[usize; 4], w: &[f64; 4]) -> Complex64 {
    idx.iter().zip(w).map(|(&i, &wi)| values[i] * wi).sum()
}

/// Interpolated `(psi, psi')` and the node threshold at one point.
struct LocalField {
    psi: Complex64,
    deriv: Complex64,
    rho_max: f64,
}

impl LocalField {
    fn velocity(
        &self,
        constants: &PhysicalConstants,
        node_eps: f64,
        x: f64,
        t: f64,
    ) -> Result<f64> {
        let rho = self.psi.norm_sqr();
        let threshold = node_eps * self.rho_max;
        if !(rho >= threshold) || rho == 0.0 {
            return Err(PilotError::NodeProximity {
                x,
                t,
                rho,
                threshold,
            });
        }
        Ok(constants.hbar / constants.mass * (self.psi.conj() * self.deriv).im / rho)
    }
}

fn local_field(snapshot: &Snapshot, x: f64) -> LocalField {
    let (idx, w) = stencil(snapshot.wf.grid(), x);
    LocalField {
        psi: apply(snapshot.wf.amplitudes(), &idx, &w),
        deriv: apply(&snapshot.deriv, &idx, &w),
        rho_max: snapshot.rho_max,
    }
}

/// Guiding velocity of a single wave function at `x`.
pub fn velocity(
    wf: &WaveFunction,
    x: f64,
    constants: &PhysicalConstants,
    node_eps: f64,
) -> Result<f64> {
    if !x.is_finite() {
        return Err(PilotError::NonFinitePosition(x));
    }
    let snapshot = Snapshot::new(wf.clone());
    local_field(&snapshot, x).velocity(constants, node_eps, x, 0.0)
}

/// Uniformly spaced wave-function snapshots on `[0, T]`.
#[derive(Debug, Clone)]
pub struct WavefieldHistory {
    dt: f64,
    constants: PhysicalConstants,
    snapshots: Vec<Snapshot>,
}

impl WavefieldHistory {
    /// Evolves `initial` for `intervals` snapshot intervals of length `dt`,
    /// each made of `substeps` split-step increments.
    pub fn build(
        initial: &WaveFunction,
        potential: &Potential,
        dt: f64,
        intervals: usize,
        substeps: usize,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        if intervals == 0 || substeps == 0 || !(dt > 0.0) {
            return Err(PilotError::BadHistory);
        }
        let grid = *initial.grid();
        let mut propagator = Propagator::new(&grid, potential, dt / substeps as f64, constants)?;
        let mut psi = initial.amplitudes().to_vec();
        let mut snapshots = Vec::with_capacity(intervals + 1);
        snapshots.push(Snapshot::new(initial.clone()));
        for _ in 0..intervals {
            propagator.run(&mut psi, substeps);
            snapshots.push(Snapshot::new(WaveFunction::from_normalized(
                grid,
                psi.clone(),
            )?));
        }
        Ok(Self {
            dt,
            constants: *constants,
            snapshots,
        })
    }

    /// Wraps precomputed snapshots taken every `dt`.
    pub fn from_snapshots(
        snapshots: Vec<WaveFunction>,
        dt: f64,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        if snapshots.len() < 2 || !(dt > 0.0) {
            return Err(PilotError::BadHistory);
        }
        let grid = *snapshots[0].grid();
        if snapshots.iter().any(|s| *s.grid() != grid) {
            return Err(PilotError::BadHistory);
        }
        Ok(Self {
            dt,
            constants: *constants,
            snapshots: snapshots.into_iter().map(Snapshot::new).collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.snapshots[0].wf.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    /// Number of snapshot intervals.
    pub fn intervals(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.intervals() as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn snapshot(&self, i: usize) -> &WaveFunction {
        &self.snapshots[i].wf
    }

    pub fn initial(&self) -> &WaveFunction {
        self.snapshot(0)
    }

    pub fn last(&self) -> &WaveFunction {
        self.snapshot(self.intervals())
    }

    fn field(&self, x: f64, t: f64) -> LocalField {
        let last = self.intervals();
        let pos = (t / self.dt).clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last - 1);
        let s = pos - i as f64;
        let a = local_field(&self.snapshots[i], x);
        if s == 0.0 {
            return a;
        }
        let b = local_field(&self.snapshots[i + 1], x);
        LocalField {
            psi: a.psi * (1.0 - s) + b.psi * s,
            deriv: a.deriv * (1.0 - s) + b.deriv * s,
            rho_max: a.rho_max * (1.0 - s) + b.rho_max * s,
        }
    }

    /// Guiding velocity at `(x, t)` from the time-interpolated wave function.
    pub fn velocity_at(
        &self,
        x: f64,
        t: f64,
        constants: &PhysicalConstants,
        node_eps: f64,
    ) -> Result<f64> {
        self.field(x, t).velocity(constants, node_eps, x, t)
    }
}

/// Stored path `t -> q(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// Per stored point: whether the step ending there needed node refinement.
    pub step_flags: Vec<bool>,
    /// True if the position was wrapped across the periodic boundary.
    pub wrapped: bool,
}

impl Trajectory {
    pub fn node_flag(&self) -> bool {
        self.step_flags.iter().any(|&f| f)
    }

    pub fn final_position(&self) -> f64 {
        *self
            .positions
            .last()
            .expect("trajectory has at least the start point")
    }

    /// CSV with header `t,q,node_flag`, one row per stored step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,q,node_flag\n");
        for ((t, q), f) in self.times.iter().zip(&self.positions).zip(&self.step_flags) {
            out.push_str(&format!("{t},{q},{}\n", u8::from(*f)));
        }
        out
    }
}

/// Outcome of one ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub initial: f64,
    pub final_position: f64,
    /// Position one step before the end.
    pub previous_position: f64,
    pub node_flag: bool,
    /// Refinement failed; `final_position` is where integration stopped.
    pub unresolved: bool,
    pub wrapped: bool,
}

struct Integrator<'a> {
    history: &'a WavefieldHistory,
    constants: &'a PhysicalConstants,
    node_eps: f64,
}

impl Integrator<'_> {
    fn v(&self, x: f64, t: f64) -> Result<f64> {
        self.history
            .velocity_at(x, t, self.constants, self.node_eps)
    }

    fn rk4(&self, t: f64, q: f64, h: f64) -> Result<f64> {
        let k1 = self.v(q, t)?;
        let k2 = self.v(q + 0.5 * h * k1, t + 0.5 * h)?;
        let k3 = self.v(q + 0.5 * h * k2, t + 0.5 * h)?;
        let k4 = self.v(q + h * k3, t + h)?;
        Ok(q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    }

    /// One snapshot interval; returns the new position and whether refinement was needed.
    fn step(&self, q0: f64, t: f64, q: f64) -> Result<(f64, bool)> {
        let h = self.history.dt();
        match self.rk4(t, q, h) {
            Ok(next) => Ok((next, false)),
            Err(PilotError::NodeProximity { .. }) => {
                let sub = h / NODE_REFINEMENT as f64;
                let mut p = q;
                for k in 0..NODE_REFINEMENT {
                    let ts = t + k as f64 * sub;
                    p = self.rk4(ts, p, sub).map_err(|e| match e {
                        PilotError::NodeProximity { x, t, .. } => {
                            PilotError::NodeUnresolvable { q0, x, t }
                        }
                        other => other,
                    })?;
                }
                Ok((p, true))
            }
            Err(e) => Err(e),
        }
    }

    /// Runs the whole history, calling `record(i, t_i, q_i, flagged)` after each step.
    fn run(
        &self,
        q0: f64,
        mut record: impl FnMut(usize, f64, f64, bool),
    ) -> std::result::Result<(), (PilotError, f64)> {
        let grid = self.history.grid();
        let mut q = grid.wrap(q0);
        for i in 0..self.history.intervals() {
            let t = self.history.time(i);
            let (next, flagged) = self.step(q0, t, q).map_err(|e| (e, q))?;
            if !next.is_finite() {
                return Err((PilotError::NonFinitePosition(next), q));
            }
            q = next;
            record(i + 1, self.history.time(i + 1), q, flagged);
        }
        Ok(())
    }
}

/// Integrates the guiding equation from `q0` with RK4 at the snapshot spacing.
///
/// A step whose stages hit the node guard is redone as four quarter steps;
/// if that also fails the trajectory is [`PilotError::NodeUnresolvable`].
pub fn integrate_trajectory(
    history: &WavefieldHistory,
    q0: f64,
    constants: &PhysicalConstants,
    node_eps: f64,
) -> Result<Trajectory> {
    if !q0.is_finite() {
        return Err(PilotError::NonFinitePosition(q0));
    }
    let grid = *history.grid();
    let start = grid.wrap(q0);
    let mut traj = Trajectory {
        times: vec![0.0],
        positions: vec![start],
        step_flags: vec![false],
        wrapped: start != q0,
    };
    Integrator {
        history,
        constants,
        node_eps,
    }
    .run(q0, |_, t, q, flagged| {
        let wrapped = grid.wrap(q);
        traj.wrapped |= wrapped != q;
        traj.times.push(t);
        traj.positions.push(wrapped);
        traj.step_flags.push(flagged);
    })
    .map_err(|(e, _)| e)?;
    Ok(traj)
}

/// Final state of one trajectory without storing the path.
pub fn integrate_final(
    history: &WavefieldHistory,
    q0: f64,
    constants: &PhysicalConstants,
    node_eps: f64,
) -> EnsembleMember {
    let grid = history.grid();
    let mut member = EnsembleMember {
        initial: q0,
        final_position: grid.wrap(q0),
        previous_position: grid.wrap(q0),
        node_flag: false,
        unresolved: false,
        wrapped: grid.wrap(q0) != q0,
    };
    if !q0.is_finite() {
        member.unresolved = true;
        return member;
    }
    let outcome = Integrator {
        history,
        constants,
        node_eps,
    }
    .run(q0, |_, _, q, flagged| {
        let wrapped = grid.wrap(q);
        member.wrapped |= wrapped != q;
        member.previous_position = member.final_position;
        member.final_position = wrapped;
        member.node_flag |= flagged;
    });
    if outcome.is_err() {
        member.node_flag = true;
        member.unresolved = true;
    }
    member
}

/// Propagates every initial position independently; output order matches input order.
pub fn propagate_ensemble(
    history: &WavefieldHistory,
    initial_positions: &[f64],
    constants: &PhysicalConstants,
) -> Vec<EnsembleMember> {
    propagate_ensemble_with(history, initial_positions, constants, DEFAULT_NODE_EPS)
}

pub fn propagate_ensemble_with(
    history: &WavefieldHistory,
    initial_positions: &[f64],
    constants: &PhysicalConstants,
    node_eps: f64,
) -> Vec<EnsembleMember> {
    initial_positions
        .par_iter()
        .map(|&q0| integrate_final(history, q0, constants, node_eps))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub n: usize,
    /// Members that hit the node guard; unresolved ones are left out of the KS statistic.
    pub flagged: usize,
    pub unresolved: usize,
    pub ks_distance: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Propagates `initial_positions` (assumed drawn from the initial density) and
/// compares the final positions with the density of the last snapshot.
pub fn verify_equivariance(
    history: &WavefieldHistory,
    initial_positions: &[f64],
    constants: &PhysicalConstants,
    node_eps: f64,
) -> (EquivarianceReport, Vec<EnsembleMember>) {
    let members = propagate_ensemble_with(history, initial_positions, constants, node_eps);
    let finals: Vec<f64> = members
        .iter()
        .filter(|m| !m.unresolved)
        .map(|m| m.final_position)
        .collect();
    let target = BornSampler::new(history.last());
    let ks = ks_distance(&finals, |x| target.cdf(x));
    let report = EquivarianceReport {
        n: members.len(),
        flagged: members.iter().filter(|m| m.node_flag).count(),
        unresolved: members.len() - finals.len(),
        ks_distance: ks,
        threshold: EQUIVARIANCE_KS_LIMIT,
        pass: ks <= EQUIVARIANCE_KS_LIMIT,
    };
    (report, members)
}
