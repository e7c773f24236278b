//! Sampling oracles and the Born sampler.
//!
//! An oracle is any source of uniforms in `[0, 1)`. Every kind except
//! [`OracleDescriptor::Entropy`] is a pure function of its parameters and
//! cursor, so a run can be replayed bit for bit. The [`BornSampler`] is a
//! separate inverse-CDF transform from uniforms to positions distributed
//! per `|psi|^2`.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavefield::{density, Grid, WaveFunction};

/// Digits (or bits) consumed per uniform by the digit-stream oracles.
pub const DIGITS_PER_UNIFORM: usize = 53;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;
const LARGEST_BELOW_ONE: f64 = 1.0 - 1.0 / TWO_POW_53;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("oracle file {path} exhausted after {consumed} bits")]
    FileExhausted { path: PathBuf, consumed: usize },
    #[error("oracle file {path}: unexpected character {ch:?}")]
    BadFileContent { path: PathBuf, ch: char },
    #[error("reading oracle file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("periodic pattern must be a non-empty string of '0'/'1', got {0:?}")]
    BadPattern(String),
    #[error("constant oracle value must lie in [0, 1), got {0}")]
    BadConstant(f64),
    #[error("champernowne base must be 2 or 10, got {0}")]
    BadBase(u32),
    #[error("sample count must be at least 1")]
    ZeroCount,
}

pub type Result<T> = std::result::Result<T, SamplingError>;

/// Serializable description of an oracle; enough to rebuild any replayable kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleDescriptor {
    /// Operating-system entropy. The only kind that cannot be replayed.
    Entropy,
    SeededPrng {
        seed: u64,
    },
    Champernowne {
        base: u32,
    },
    Periodic {
        pattern: String,
    },
    Constant {
        value: f64,
    },
    File {
        path: PathBuf,
    },
}

impl OracleDescriptor {
    pub fn is_replayable(&self) -> bool {
        !matches!(self, OracleDescriptor::Entropy)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            OracleDescriptor::Entropy => "entropy",
            OracleDescriptor::SeededPrng { .. } => "seeded_prng",
            OracleDescriptor::Champernowne { .. } => "champernowne",
            OracleDescriptor::Periodic { .. } => "periodic",
            OracleDescriptor::Constant { .. } => "constant",
            OracleDescriptor::File { .. } => "file",
        }
    }

    /// Human-readable role of the oracle for reports.
    pub fn role(&self) -> &'static str {
        match self {
            OracleDescriptor::Entropy => {
                "external random oracle (operating-system entropy; not part of the dynamics)"
            }
            OracleDescriptor::File { .. } => "recorded stream (replayable)",
            _ => "computable oracle (explicit formula, replayable)",
        }
    }
}

impl fmt::Display for OracleDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleDescriptor::Entropy => write!(f, "entropy"),
            OracleDescriptor::SeededPrng { seed } => write!(f, "seeded_prng(seed={seed})"),
            OracleDescriptor::Champernowne { base } => write!(f, "champernowne(base={base})"),
            OracleDescriptor::Periodic { pattern } => write!(f, "periodic({pattern})"),
            OracleDescriptor::Constant { value } => write!(f, "constant({value})"),
            OracleDescriptor::File { path } => write!(f, "file({})", path.display()),
        }
    }
}

/// Digits of Champernowne's constant in base 2 or 10.
///
/// Base 10 starts from 0 (`0123456789101112...`); base 2 starts from 1
/// (`1 10 11 100 ...`), so neither has a leading run of zeros.
#[derive(Debug, Clone)]
pub struct ChampernowneDigits {
    base: u64,
    next_int: u64,
    buf: Vec<u8>,
    pos: usize,
}

impl ChampernowneDigits {
    pub fn new(base: u32) -> Result<Self> {
        let first = match base {
            2 => 1,
            10 => 0,
            other => return Err(SamplingError::BadBase(other)),
        };
        Ok(Self {
            base: base as u64,
            next_int: first,
            buf: Vec::new(),
            pos: 0,
        })
    }

    pub fn binary() -> Self {
        Self::new(2).expect("base 2 is supported")
    }

    fn refill(&mut self) {
        let mut v = self.next_int;
        self.buf.clear();
        loop {
            self.buf.push((v % self.base) as u8);
            v /= self.base;
            if v == 0 {
                break;
            }
        }
        self.buf.reverse();
        self.pos = 0;
        self.next_int += 1;
    }
}

impl Iterator for ChampernowneDigits {
    type Item = u8;

    fn next(&mut self) -> Option<u8> {
        if self.pos == self.buf.len() {
            self.refill();
        }
        let d = self.buf[self.pos];
        self.pos += 1;
        Some(d)
    }
}

enum Source {
    Entropy(OsRng),
    Prng(Box<ChaCha20Rng>),
    Champernowne(ChampernowneDigits),
    Periodic { bits: Vec<u8>, pos: usize },
    Constant(f64),
    File { bits: Vec<u8>, pos: usize },
}

/// Stateful stream of uniforms. Single consumer; move it, don't share it.
pub struct SamplingOracle {
    descriptor: OracleDescriptor,
    source: Source,
    drawn: u64,
    recording: Option<Vec<u64>>,
}

impl fmt::Debug for SamplingOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplingOracle")
            .field("descriptor", &self.descriptor)
            .field("drawn", &self.drawn)
            .finish()
    }
}

impl SamplingOracle {
    pub fn new(descriptor: OracleDescriptor) -> Result<Self> {
        let source = match &descriptor {
            OracleDescriptor::Entropy => Source::Entropy(OsRng),
            OracleDescriptor::SeededPrng { seed } => {
                Source::Prng(Box::new(ChaCha20Rng::seed_from_u64(*seed)))
            }
            OracleDescriptor::Champernowne { base } => {
                Source::Champernowne(ChampernowneDigits::new(*base)?)
            }
            OracleDescriptor::Periodic { pattern } => Source::Periodic {
                bits: parse_pattern(pattern)?,
                pos: 0,
            },
            OracleDescriptor::Constant { value } => {
                if !(0.0..1.0).contains(value) {
                    return Err(SamplingError::BadConstant(*value));
                }
                Source::Constant(*value)
            }
            OracleDescriptor::File { path } => Source::File {
                bits: read_bit_file(path)?,
                pos: 0,
            },
        };
        Ok(Self {
            descriptor,
            source,
            drawn: 0,
            recording: None,
        })
    }

    pub fn entropy() -> Self {
        Self::new(OracleDescriptor::Entropy).expect("entropy oracle is infallible")
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(OracleDescriptor::SeededPrng { seed }).expect("seeded oracle is infallible")
    }

    pub fn descriptor(&self) -> &OracleDescriptor {
        &self.descriptor
    }

    /// Number of uniforms drawn so far.
    pub fn cursor(&self) -> u64 {
        self.drawn
    }

    /// Starts keeping each drawn uniform as a 53-bit integer `u * 2^53`.
    ///
    /// Exact for every kind except base-10 Champernowne and non-dyadic constants.
    pub fn start_recording(&mut self) {
        self.recording = Some(Vec::new());
    }

    pub fn take_recording(&mut self) -> Option<Vec<u64>> {
        self.recording.take()
    }

    /// Next uniform in `[0, 1)`.
    ///
    /// Digit-stream kinds (champernowne, periodic, file) consume exactly
    /// [`DIGITS_PER_UNIFORM`] symbols per call; the PRNG and entropy kinds
    /// consume one 64-bit word and keep the top 53 bits.
    pub fn next_uniform(&mut self) -> Result<f64> {
        let u = match &mut self.source {
            Source::Entropy(rng) => word_to_uniform(rng.next_u64()),
            Source::Prng(rng) => word_to_uniform(rng.next_u64()),
            Source::Champernowne(digits) => {
                let base = digits.base;
                let ds: Vec<u8> = digits.by_ref().take(DIGITS_PER_UNIFORM).collect();
                digits_to_uniform(&ds, base)
            }
            Source::Periodic { bits, pos } => {
                let mut m = 0u64;
                for _ in 0..DIGITS_PER_UNIFORM {
                    m = (m << 1) | bits[*pos] as u64;
                    *pos = (*pos + 1) % bits.len();
                }
                m as f64 / TWO_POW_53
            }
            Source::Constant(v) => *v,
            Source::File { bits, pos } => {
                if bits.len() - *pos < DIGITS_PER_UNIFORM {
                    let path = match &self.descriptor {
                        OracleDescriptor::File { path } => path.clone(),
                        _ => unreachable!("file source always has a file descriptor"),
                    };
                    return Err(SamplingError::FileExhausted {
                        path,
                        consumed: *pos,
                    });
                }
                let m = bits[*pos..*pos + DIGITS_PER_UNIFORM]
                    .iter()
                    .fold(0u64, |m, &b| (m << 1) | b as u64);
                *pos += DIGITS_PER_UNIFORM;
                m as f64 / TWO_POW_53
            }
        };
        debug_assert!((0.0..1.0).contains(&u));
        self.drawn += 1;
        if let Some(rec) = &mut self.recording {
            rec.push((u * TWO_POW_53) as u64);
        }
        Ok(u)
    }
}

fn word_to_uniform(word: u64) -> f64 {
    (word >> 11) as f64 / TWO_POW_53
}

/// Fixed-point fraction `0.d1 d2 d3 ...` in the given base, clamped below 1.
fn digits_to_uniform(digits: &[u8], base: u64) -> f64 {
    let b = base as f64;
    let u = digits
        .iter()
        .rev()
        .fold(0.0_f64, |acc, &d| (acc + d as f64) / b);
    u.min(LARGEST_BELOW_ONE)
}

fn parse_pattern(pattern: &str) -> Result<Vec<u8>> {
    let bits: Option<Vec<u8>> = pattern
        .chars()
        .map(|c| match c {
            '0' => Some(0),
            '1' => Some(1),
            _ => None,
        })
        .collect();
    match bits {
        Some(b) if !b.is_empty() => Ok(b),
        _ => Err(SamplingError::BadPattern(pattern.to_owned())),
    }
}

fn read_bit_file(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path).map_err(|source| SamplingError::Io {
        path: path.to_owned(),
        source,
    })?;
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            ch => Err(SamplingError::BadFileContent {
                path: path.to_owned(),
                ch,
            }),
        })
        .collect()
}

/// Renders recorded 53-bit uniforms in the file-oracle format, one uniform per line.
pub fn uniforms_to_bit_text(mantissas: &[u64]) -> String {
    let mut out = String::with_capacity(mantissas.len() * (DIGITS_PER_UNIFORM + 1));
    for m in mantissas {
        out.push_str(&format!("{:053b}\n", m));
    }
    out
}

/// Inverse-CDF sampler for `|psi|^2`.
///
/// Cell `j` is `[x_j - dx/2, x_j + dx/2)` and carries mass `rho_j dx`; the CDF
/// is linear inside each cell. Positions are therefore in
/// `[x_min - dx/2, x_max - dx/2)` and are not wrapped, which keeps the map monotone.
#[derive(Debug, Clone)]
pub struct BornSampler {
    grid: Grid,
    cdf: Vec<f64>,
}

impl BornSampler {
    pub fn new(wf: &WaveFunction) -> Self {
        let grid = *wf.grid();
        let dx = grid.dx();
        let rho = density(wf);
        let mut cdf = Vec::with_capacity(rho.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for r in &rho {
            acc += r * dx;
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        *cdf.last_mut().expect("non-empty") = 1.0;
        Self { grid, cdf }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Cumulative masses at cell edges (`n + 1` entries, `0` to `1`).
    pub fn cdf_table(&self) -> &[f64] {
        &self.cdf
    }

    fn left_edge(&self) -> f64 {
        self.grid.x_min() - 0.5 * self.grid.dx()
    }

    /// Position with cumulative Born mass `u`.
    pub fn sample(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, LARGEST_BELOW_ONE);
        // first edge whose cumulative mass exceeds u; cell j = that - 1 has positive mass
        let upper = self.cdf.partition_point(|&c| c <= u);
        let j = upper.saturating_sub(1).min(self.grid.len() - 1);
        let lo = self.cdf[j];
        let hi = self.cdf[j + 1];
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        self.left_edge() + (j as f64 + frac) * self.grid.dx()
    }

    /// Piecewise-linear Born CDF at `x` (no periodic wrap).
    pub fn cdf(&self, x: f64) -> f64 {
        let t = (x - self.left_edge()) / self.grid.dx();
        if t <= 0.0 {
            return 0.0;
        }
        let j = t.floor() as usize;
        if j >= self.grid.len() {
            return 1.0;
        }
        let frac = t - j as f64;
        self.cdf[j] + frac * (self.cdf[j + 1] - self.cdf[j])
    }

    pub fn median(&self) -> f64 {
        self.sample(0.5)
    }
}

/// Draws `n` Born samples; sample `i` uses exactly the `i`-th uniform.
pub fn sample_stream(
    oracle: &mut SamplingOracle,
    sampler: &BornSampler,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(SamplingError::ZeroCount);
    }
    (0..n)
        .map(|_| oracle.next_uniform().map(|u| sampler.sample(u)))
        .collect()
}

/// Two-sided Kolmogorov-Smirnov distance between samples and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
