//! The quantum coin toss as packet splitting.
//!
//! A spin-z measurement on `(|up> + |down>)/sqrt(2)` is modeled as two
//! Gaussian packets at `-a` and `+a` drifting apart with momenta `-p` and `+p`
//! under free evolution. The outcome of a toss is the side of the origin the
//! particle ends up on at time `T`:
//!
//! ```text
//! bit = outcome_map(flow_T(born_sample(oracle.next_uniform())))
//! ```
//!
//! The oracle is the only place any randomness can enter; everything after it
//! is a deterministic function of the drawn uniform.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pilot::{
    integrate_final, integrate_trajectory, propagate_ensemble_with, EnsembleMember, PilotError,
    Trajectory, WavefieldHistory,
};
use crate::randomness::ReplayEntry;
use crate::sampling::{
    sample_stream, BornSampler, OracleDescriptor, SamplingError, SamplingOracle,
};
use crate::wavefield::{
    gaussian_amplitudes, gaussian_mass_outside, Grid, PhysicalConstants, Potential, WaveFunction,
    WavefieldError, BOUNDARY_MASS_LIMIT,
};

/// Version of the sequence sidecar layout.
pub const SEQUENCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TossError {
    #[error("invalid toss configuration: {0}")]
    InvalidConfig(String),
    #[error("final position is exactly 0; the outcome map is undefined there")]
    ExactZero,
    #[error("toss count must be at least 1")]
    ZeroCount,
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
    #[error(transparent)]
    Pilot(#[from] PilotError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

pub type Result<T> = std::result::Result<T, TossError>;

/// Parameters of the two-packet experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TossConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    /// Packets start at `-separation` and `+separation`.
    pub separation: f64,
    /// Standard deviation of each packet's `|phi|^2` at `t = 0`.
    pub width: f64,
    /// Drift momentum magnitude; the right packet moves right.
    pub momentum: f64,
    /// Readout time `T`.
    pub time: f64,
    /// Number of stored snapshot intervals (also the trajectory step count).
    pub steps: usize,
    /// Split-step increments per snapshot interval.
    pub substeps: usize,
    pub node_eps: f64,
    pub hbar: f64,
    pub mass: f64,
}

impl Default for TossConfig {
    fn default() -> Self {
        Self {
            x_min: -40.0,
            x_max: 40.0,
            n_points: 1024,
            separation: 5.0,
            width: 1.0,
            momentum: 2.0,
            time: 4.0,
            steps: 200,
            substeps: 1,
            node_eps: crate::pilot::DEFAULT_NODE_EPS,
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl TossConfig {
    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.x_min, self.x_max, self.n_points)?)
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        Ok(PhysicalConstants::new(self.hbar, self.mass)?)
    }

    pub fn dt(&self) -> f64 {
        self.time / self.steps as f64
    }

    /// Packet width at time `t` under free spreading.
    pub fn width_at(&self, t: f64) -> f64 {
        let spread = self.hbar * t / (2.0 * self.mass * self.width * self.width);
        self.width * (1.0 + spread * spread).sqrt()
    }

    /// Packet center offset from the origin at time `t`.
    pub fn center_at(&self, t: f64) -> f64 {
        self.separation + self.momentum * t / self.mass
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.constants()?;
        let bad = |msg: String| Err(TossError::InvalidConfig(msg));
        if self.x_min != -self.x_max {
            return bad(format!(
                "grid must be symmetric about 0 (x_min = -x_max), got [{}, {})",
                self.x_min, self.x_max
            ));
        }
        if !(self.separation > 0.0) {
            return bad(format!(
                "separation must be positive, got {}",
                self.separation
            ));
        }
        if !(self.width >= 4.0 * grid.dx()) {
            return bad(format!(
                "width {} is below 4*dx = {}",
                self.width,
                4.0 * grid.dx()
            ));
        }
        if !(self.momentum >= 0.0 && self.momentum.is_finite()) {
            return bad(format!("momentum must be >= 0, got {}", self.momentum));
        }
        if !(self.time > 0.0 && self.time.is_finite()) {
            return bad(format!("time must be positive, got {}", self.time));
        }
        if self.steps == 0 || self.substeps == 0 {
            return bad("steps and substeps must be at least 1".into());
        }
        if !(self.node_eps > 0.0 && self.node_eps < 1.0) {
            return bad(format!(
                "node_eps must lie in (0, 1), got {}",
                self.node_eps
            ));
        }
        let (center, width) = (self.center_at(self.time), self.width_at(self.time));
        if center < 4.0 * width {
            return bad(format!(
                "packets unresolved at readout: center {center} < 4 * width {width}"
            ));
        }
        // centers move outward and widths grow, so the readout time is the worst case
        let clipped = gaussian_mass_outside(&grid, center, width);
        if clipped > BOUNDARY_MASS_LIMIT {
            return Err(WavefieldError::PacketClipped { mass: clipped }.into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// `N (phi(-a, -p) + phi(+a, +p))`.
pub fn prepare_coin_state(config: &TossConfig) -> Result<WaveFunction> {
    config.validate()?;
    let grid = config.grid()?;
    let constants = config.constants()?;
    let a = config.separation;
    let left = gaussian_amplitudes(&grid, -a, config.width, -config.momentum, &constants);
    let right = gaussian_amplitudes(&grid, a, config.width, config.momentum, &constants);
    let sum = left.iter().zip(&right).map(|(l, r)| l + r).collect();
    Ok(WaveFunction::new(grid, sum)?)
}

/// Readout `g`: 1 to the right of the origin, 0 to the left.
pub fn outcome_map(q_final: f64) -> Result<u8> {
    if q_final > 0.0 {
        Ok(1)
    } else if q_final < 0.0 {
        Ok(0)
    } else {
        Err(TossError::ExactZero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TossFlagKind {
    /// A step was refined near a node and then succeeded.
    NodeRefined,
    /// Refinement failed; the bit is read from where integration stopped.
    NodeUnresolved,
    /// The final position was exactly 0; the bit comes from the previous step.
    ExactZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TossFlag {
    pub index: usize,
    pub kind: TossFlagKind,
}

/// Bits of one run plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSequence {
    pub bits: Vec<u8>,
    pub config_digest: String,
    pub oracle: OracleDescriptor,
    pub flags: Vec<TossFlag>,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
}

impl OutcomeSequence {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// One ASCII `0`/`1` per line.
    pub fn to_text(&self) -> String {
        bits_to_text(&self.bits)
    }

    /// Deterministic sidecar: everything except the creation time.
    pub fn sidecar(&self, config: &TossConfig) -> SequenceSidecar {
        SequenceSidecar {
            schema_version: SEQUENCE_SCHEMA_VERSION,
            n: self.bits.len(),
            ones: self.ones(),
            config_digest: self.config_digest.clone(),
            config: config.clone(),
            oracle: self.oracle.clone(),
            oracle_role: self.oracle.role().to_owned(),
            flags: self.flags.clone(),
        }
    }
}

/// JSON companion of a sequence file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSidecar {
    pub schema_version: u32,
    pub n: usize,
    pub ones: usize,
    pub config_digest: String,
    pub config: TossConfig,
    pub oracle: OracleDescriptor,
    pub oracle_role: String,
    pub flags: Vec<TossFlag>,
}

pub fn bits_to_text(bits: &[u8]) -> String {
    let mut out = String::with_capacity(bits.len() * 2);
    for b in bits {
        out.push(if *b == 0 { '0' } else { '1' });
        out.push('\n');
    }
    out
}

/// A prepared experiment: initial state, Born sampler and the wave-function history.
#[derive(Debug, Clone)]
pub struct CoinToss {
    config: TossConfig,
    constants: PhysicalConstants,
    sampler: BornSampler,
    history: WavefieldHistory,
}

impl CoinToss {
    pub fn prepare(config: &TossConfig) -> Result<Self> {
        let psi0 = prepare_coin_state(config)?;
        let constants = config.constants()?;
        let sampler = BornSampler::new(&psi0);
        let history = WavefieldHistory::build(
            &psi0,
            &Potential::Free,
            config.dt(),
            config.steps,
            config.substeps,
            &constants,
        )?;
        Ok(Self {
            config: config.clone(),
            constants,
            sampler,
            history,
        })
    }

    pub fn config(&self) -> &TossConfig {
        &self.config
    }

    pub fn sampler(&self) -> &BornSampler {
        &self.sampler
    }

    pub fn history(&self) -> &WavefieldHistory {
        &self.history
    }

    pub fn initial_state(&self) -> &WaveFunction {
        self.history.initial()
    }

    /// The sampling map `h`: consumes `n` uniforms, in order.
    pub fn draw_initial_positions(
        &self,
        oracle: &mut SamplingOracle,
        n: usize,
    ) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(TossError::ZeroCount);
        }
        Ok(sample_stream(oracle, &self.sampler, n)?)
    }

    /// The flow to time `T`, one independent trajectory per start.
    pub fn propagate(&self, initial: &[f64]) -> Vec<EnsembleMember> {
        propagate_ensemble_with(
            &self.history,
            initial,
            &self.constants,
            self.config.node_eps,
        )
    }

    pub fn trajectory(&self, q0: f64) -> Result<Trajectory> {
        Ok(integrate_trajectory(
            &self.history,
            q0,
            &self.constants,
            self.config.node_eps,
        )?)
    }

    /// Outcome of a single start position, with any flag raised on the way.
    pub fn outcome(&self, q0: f64) -> (u8, Option<TossFlagKind>) {
        let member = integrate_final(&self.history, q0, &self.constants, self.config.node_eps);
        read_out(&member)
    }

    /// `s = g o h` for `n` tosses. Oracle draws happen first and sequentially;
    /// the trajectories are then integrated in parallel.
    pub fn run(&self, oracle: &mut SamplingOracle, n: usize) -> Result<OutcomeSequence> {
        let initial = self.draw_initial_positions(oracle, n)?;
        let members = self.propagate(&initial);
        let mut bits = Vec::with_capacity(n);
        let mut flags = Vec::new();
        for (index, member) in members.iter().enumerate() {
            let (bit, flag) = read_out(member);
            bits.push(bit);
            if let Some(kind) = flag {
                flags.push(TossFlag { index, kind });
            }
        }
        Ok(OutcomeSequence {
            bits,
            config_digest: self.config.digest(),
            oracle: oracle.descriptor().clone(),
            flags,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }
}

fn read_out(member: &EnsembleMember) -> (u8, Option<TossFlagKind>) {
    let node_flag = if member.unresolved {
        Some(TossFlagKind::NodeUnresolved)
    } else if member.node_flag {
        Some(TossFlagKind::NodeRefined)
    } else {
        None
    };
    match outcome_map(member.final_position) {
        Ok(bit) => (bit, node_flag),
        // fall back to the side the particle was on one step earlier; 0 if that is also 0
        Err(_) => (
            u8::from(member.previous_position > 0.0),
            Some(TossFlagKind::ExactZero),
        ),
    }
}

pub fn run_toss_sequence(
    config: &TossConfig,
    oracle: &mut SamplingOracle,
    n: usize,
) -> Result<OutcomeSequence> {
    CoinToss::prepare(config)?.run(oracle, n)
}

/// Catalog entry that regenerates a run from its disclosed configuration and
/// oracle. `None` for entropy, which has nothing to disclose.
pub fn replay_entry(config: &TossConfig, oracle: &OracleDescriptor) -> Result<Option<ReplayEntry>> {
    if !oracle.is_replayable() {
        return Ok(None);
    }
    let parameters = serde_json::json!({ "config": config, "oracle": oracle });
    let parameter_bits = 8 * parameters.to_string().len() as u64;
    let toss = Arc::new(CoinToss::prepare(config)?);
    let descriptor = oracle.clone();
    Ok(Some(ReplayEntry::new(
        format!("toss:{}", oracle.kind_name()),
        parameters,
        parameter_bits,
        move |n| {
            let mut oracle = SamplingOracle::new(descriptor.clone()).ok()?;
            toss.run(&mut oracle, n).ok().map(|s| s.bits)
        },
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub n: usize,
    pub ones: usize,
    pub empirical_p1: f64,
    /// Half-width of the 3-sigma band around 1/2.
    pub ci: f64,
    pub pass: bool,
}

/// Empirical check that the frequency of 1s reproduces the Born value 1/2.
pub fn verify_compatibility(
    config: &TossConfig,
    oracle: &mut SamplingOracle,
    n: usize,
) -> Result<CompatibilityReport> {
    let seq = run_toss_sequence(config, oracle, n)?;
    Ok(compatibility_of(&seq.bits))
}

pub fn compatibility_of(bits: &[u8]) -> CompatibilityReport {
    let n = bits.len();
    let ones = bits.iter().filter(|&&b| b == 1).count();
    let p = ones as f64 / n as f64;
    let ci = 3.0 * (0.25 / n as f64).sqrt();
    CompatibilityReport {
        n,
        ones,
        empirical_p1: p,
        ci,
        pass: (p - 0.5).abs() <= ci,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminismReport {
    pub q0: f64,
    pub repeats: usize,
    pub bits: Vec<u8>,
    pub pass: bool,
}

/// Re-prepares the experiment from scratch `repeats` times and reads out `q0`.
pub fn verify_outcome_determinism(
    config: &TossConfig,
    q0: f64,
    repeats: usize,
) -> Result<DeterminismReport> {
    let mut bits = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let toss = CoinToss::prepare(config)?;
        let (bit, flag) = toss.outcome(q0);
        if matches!(flag, Some(TossFlagKind::NodeUnresolved)) {
            return Err(PilotError::NodeUnresolvable { q0, x: q0, t: 0.0 }.into());
        }
        bits.push(bit);
    }
    let pass = bits.windows(2).all(|w| w[0] == w[1]);
    Ok(DeterminismReport {
        q0,
        repeats,
        bits,
        pass,
    })
}
