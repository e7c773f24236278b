//! Refutation-only randomness analysis of finite bit strings.
//!
//! Algorithmic (Martin-Löf) randomness of an infinite sequence is undecidable,
//! and no finite test can certify it. Each check here can only produce a
//! *witness* against randomness: a block frequency far from `2^-k`, a short
//! dictionary encoding, or an explicit generator from a finite catalog that
//! reproduces the input. A report without witnesses is "consistent with
//! randomness" and nothing more.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::ChampernowneDigits;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Bumped whenever a generator family is added to or removed from the catalog.
pub const CATALOG_VERSION: u32 = 1;

/// Dictionary compression ratio below which a sequence is refuted.
pub const COMPRESSION_REFUTATION_RATIO: f64 = 0.5;

/// Largest block length tested by [`randomness_report`].
pub const DEFAULT_K_MAX: usize = 4;

/// Minimum expected number of blocks per pattern before a block length is tested.
pub const BLOCKS_PER_PATTERN: usize = 100;

pub const MIN_REPORT_LENGTH: usize = 1000;
pub const MIN_CATALOG_LENGTH: usize = 64;

pub const MAX_PERIOD: usize = 64;
pub const MAX_CHAMPERNOWNE_OFFSET: usize = 1024;
pub const MAX_COUNTER_WIDTH: usize = 32;

/// Number of generator families: constant, periodic, champernowne, counter, replay.
const CATALOG_ID_BITS: u64 = 3;

pub const REPORT_NOTICE: &str = "Algorithmic randomness is undecidable. Only refutations are \
conclusive: a witness proves the sequence has a short description or a statistical defect. \
'consistent_with_randomness' means no witness was found among the tests and the finite \
generator catalog listed here; it is not a certificate of randomness.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomnessError {
    #[error("sequence of length {len} is too short (need at least {required})")]
    SequenceTooShort { len: usize, required: usize },
    #[error("unexpected character {0:?} in bit sequence")]
    BadCharacter(char),
    #[error("block length must be at least 1")]
    BadBlockLength,
}

pub type Result<T> = std::result::Result<T, RandomnessError>;

/// Parses ASCII `0`/`1`, ignoring whitespace.
pub fn parse_bits(text: &str) -> Result<Vec<u8>> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(RandomnessError::BadCharacter(other)),
        })
        .collect()
}

fn bits_to_string(bits: &[u8]) -> String {
    bits.iter()
        .map(|&b| if b == 0 { '0' } else { '1' })
        .collect()
}

// ---------------------------------------------------------------------------
// Borel normality

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFrequency {
    pub block: String,
    pub count: usize,
    pub freq: f64,
    pub expected: f64,
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub k: usize,
    /// Number of disjoint k-blocks, `floor(N / k)`.
    pub blocks: usize,
    pub frequencies: Vec<BlockFrequency>,
    pub pass: bool,
}

/// Disjoint k-block frequency test for `k = 1..=k_max`.
///
/// A block `b` is flagged when `|freq(b) - 2^-k| > 3 sqrt(2^-k (1 - 2^-k) / floor(N/k))`.
pub fn borel_normality(bits: &[u8], k_max: usize) -> Result<Vec<NormalityResult>> {
    if k_max == 0 {
        return Err(RandomnessError::BadBlockLength);
    }
    let required = (1usize << k_max) * BLOCKS_PER_PATTERN;
    if bits.len() < required {
        return Err(RandomnessError::SequenceTooShort {
            len: bits.len(),
            required,
        });
    }
    Ok((1..=k_max).map(|k| normality_for(bits, k)).collect())
}

fn normality_for(bits: &[u8], k: usize) -> NormalityResult {
    let patterns = 1usize << k;
    let blocks = bits.len() / k;
    let mut counts = vec![0usize; patterns];
    for chunk in bits.chunks_exact(k) {
        let v = chunk.iter().fold(0usize, |v, &b| (v << 1) | b as usize);
        counts[v] += 1;
    }
    let expected = 1.0 / patterns as f64;
    let threshold = 3.0 * (expected * (1.0 - expected) / blocks as f64).sqrt();
    let frequencies: Vec<BlockFrequency> = counts
        .iter()
        .enumerate()
        .map(|(v, &count)| {
            let freq = count as f64 / blocks as f64;
            BlockFrequency {
                block: format!("{v:0k$b}"),
                count,
                freq,
                expected,
                threshold,
                flagged: (freq - expected).abs() > threshold,
            }
        })
        .collect();
    let pass = frequencies.iter().all(|f| !f.flagged);
    NormalityResult {
        k,
        blocks,
        frequencies,
        pass,
    }
}

// ---------------------------------------------------------------------------
// LZ78 dictionary parsing

/// One parsed phrase: a previously seen phrase (0 = empty) extended by one bit.
/// Only the final phrase may lack the extra bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub prefix: u32,
    pub bit: Option<u8>,
}

/// Incremental dictionary parse of `bits`.
pub fn lz78_encode(bits: &[u8]) -> Vec<Phrase> {
    // trie node i is phrase i; node 0 is the empty phrase; 0 also marks "no child"
    let mut children: Vec<[u32; 2]> = vec![[0, 0]];
    let mut phrases = Vec::new();
    let mut node = 0u32;
    for &b in bits {
        let b = b & 1;
        let child = children[node as usize][b as usize];
        if child != 0 {
            node = child;
        } else {
            let id = children.len() as u32;
            children.push([0, 0]);
            children[node as usize][b as usize] = id;
            phrases.push(Phrase {
                prefix: node,
                bit: Some(b),
            });
            node = 0;
        }
    }
    if node != 0 {
        phrases.push(Phrase {
            prefix: node,
            bit: None,
        });
    }
    phrases
}

/// Rebuilds the bit string from a phrase stream.
pub fn lz78_decode(phrases: &[Phrase]) -> Option<Vec<u8>> {
    let mut dict: Vec<Vec<u8>> = vec![Vec::new()];
    let mut out = Vec::new();
    for (i, p) in phrases.iter().enumerate() {
        let mut phrase = dict.get(p.prefix as usize)?.clone();
        match p.bit {
            Some(b) => phrase.push(b),
            None if i + 1 == phrases.len() => {}
            None => return None,
        }
        out.extend_from_slice(&phrase);
        dict.push(phrase);
    }
    Some(out)
}

fn ceil_log2(c: u64) -> u64 {
    if c <= 1 {
        0
    } else {
        64 - u64::from((c - 1).leading_zeros())
    }
}

/// Encoded size `c * (ceil(log2 c) + 1)` of a `c`-phrase parse.
pub fn lz78_size(phrase_count: usize) -> u64 {
    let c = phrase_count as u64;
    c * (ceil_log2(c) + 1)
}

/// Upper-bound description length of `bits` from the dictionary parse.
pub fn lz78_bits(bits: &[u8]) -> u64 {
    lz78_size(lz78_encode(bits).len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionResult {
    pub phrases: usize,
    pub bits: u64,
    pub ratio: f64,
    pub threshold: f64,
    /// The phrase stream decoded back to the input.
    pub round_trip: bool,
}

pub fn compression(bits: &[u8]) -> CompressionResult {
    let phrases = lz78_encode(bits);
    let size = lz78_size(phrases.len());
    CompressionResult {
        phrases: phrases.len(),
        bits: size,
        ratio: size as f64 / bits.len().max(1) as f64,
        threshold: COMPRESSION_REFUTATION_RATIO,
        round_trip: lz78_decode(&phrases).as_deref() == Some(bits),
    }
}

// ---------------------------------------------------------------------------
// Generator catalog

/// Explicit generators the catalog can recognize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    Constant {
        bit: u8,
    },
    Periodic {
        pattern: String,
    },
    /// Binary Champernowne (`1 10 11 100 ...`) starting at bit `offset`.
    Champernowne {
        offset: usize,
    },
    /// `width`-bit big-endian counter `start, start + stride, ...` modulo `2^width`.
    Counter {
        width: usize,
        start: u64,
        stride: u64,
    },
}

impl Generator {
    pub fn id(&self) -> &'static str {
        match self {
            Generator::Constant { .. } => "constant",
            Generator::Periodic { .. } => "periodic",
            Generator::Champernowne { .. } => "champernowne",
            Generator::Counter { .. } => "counter",
        }
    }

    /// First `n` bits of the generator's output.
    pub fn generate(&self, n: usize) -> Vec<u8> {
        match self {
            Generator::Constant { bit } => vec![*bit; n],
            Generator::Periodic { pattern } => {
                let p: Vec<u8> = pattern.bytes().map(|b| b - b'0').collect();
                p.iter().copied().cycle().take(n).collect()
            }
            Generator::Champernowne { offset } => {
                ChampernowneDigits::binary().skip(*offset).take(n).collect()
            }
            Generator::Counter {
                width,
                start,
                stride,
            } => {
                let mask = if *width >= 64 {
                    u64::MAX
                } else {
                    (1u64 << width) - 1
                };
                let mut out = Vec::with_capacity(n + width);
                let mut v = *start & mask;
                while out.len() < n {
                    out.extend((0..*width).rev().map(|i| ((v >> i) & 1) as u8));
                    v = v.wrapping_add(*stride) & mask;
                }
                out.truncate(n);
                out
            }
        }
    }

    fn parameter_bits(&self) -> u64 {
        match self {
            Generator::Constant { .. } => 1,
            Generator::Periodic { pattern } => 6 + pattern.len() as u64,
            Generator::Champernowne { .. } => 11,
            Generator::Counter { width, .. } => 5 + 2 * *width as u64,
        }
    }
}

/// Elias-gamma length of a positive integer.
fn length_code_bits(n: usize) -> u64 {
    2 * (63 - (n.max(1) as u64).leading_zeros() as u64) + 1
}

type Regenerate = dyn Fn(usize) -> Option<Vec<u8>> + Send + Sync;

/// A disclosed deterministic experiment that can regenerate its own output.
#[derive(Clone)]
pub struct ReplayEntry {
    pub label: String,
    pub parameters: serde_json::Value,
    /// Bits needed to write the parameters down.
    pub parameter_bits: u64,
    regenerate: Arc<Regenerate>,
}

impl ReplayEntry {
    pub fn new(
        label: impl Into<String>,
        parameters: serde_json::Value,
        parameter_bits: u64,
        regenerate: impl Fn(usize) -> Option<Vec<u8>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            parameters,
            parameter_bits,
            regenerate: Arc::new(regenerate),
        }
    }

    pub fn regenerate(&self, n: usize) -> Option<Vec<u8>> {
        (self.regenerate)(n)
    }
}

impl fmt::Debug for ReplayEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReplayEntry")
            .field("label", &self.label)
            .field("parameters", &self.parameters)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogMatch {
    pub generator: String,
    pub parameters: serde_json::Value,
    pub description_bits: u64,
}

/// The finite list of explicit formulas a sequence is checked against.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    replays: Vec<ReplayEntry>,
}

impl Catalog {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn with_replay(mut self, entry: ReplayEntry) -> Self {
        self.replays.push(entry);
        self
    }

    pub fn replays(&self) -> &[ReplayEntry] {
        &self.replays
    }

    /// Every catalog entry that regenerates `bits` exactly.
    pub fn matches(&self, bits: &[u8]) -> Vec<CatalogMatch> {
        let n = bits.len();
        if n < MIN_CATALOG_LENGTH {
            return Vec::new();
        }
        let base = CATALOG_ID_BITS + length_code_bits(n);
        let mut found: Vec<CatalogMatch> = find_generators(bits)
            .into_iter()
            .filter(|g| g.generate(n) == bits)
            .map(|g| CatalogMatch {
                generator: g.id().to_owned(),
                description_bits: base + g.parameter_bits(),
                parameters: serde_json::to_value(&g).expect("generator serializes"),
            })
            .collect();
        for entry in &self.replays {
            if entry.regenerate(n).as_deref() == Some(bits) {
                found.push(CatalogMatch {
                    generator: format!("replay:{}", entry.label),
                    parameters: entry.parameters.clone(),
                    description_bits: base + entry.parameter_bits,
                });
            }
        }
        found
    }
}

/// Candidate generators read off the prefix of `bits`; callers verify them.
fn find_generators(bits: &[u8]) -> Vec<Generator> {
    let n = bits.len();
    let mut out = Vec::new();
    if bits.iter().all(|&b| b == bits[0]) {
        out.push(Generator::Constant { bit: bits[0] });
    }
    if let Some(p) = (1..=MAX_PERIOD.min(n / 2)).find(|&p| (p..n).all(|i| bits[i] == bits[i - p])) {
        out.push(Generator::Periodic {
            pattern: bits_to_string(&bits[..p]),
        });
    }
    let stream: Vec<u8> = ChampernowneDigits::binary()
        .take(n + MAX_CHAMPERNOWNE_OFFSET)
        .collect();
    if let Some(offset) = (0..=MAX_CHAMPERNOWNE_OFFSET).find(|&o| stream[o..o + n] == *bits) {
        out.push(Generator::Champernowne { offset });
    }
    for width in 2..=MAX_COUNTER_WIDTH.min(n / 2) {
        let word = |i: usize| {
            bits[i * width..(i + 1) * width]
                .iter()
                .fold(0u64, |v, &b| (v << 1) | b as u64)
        };
        let mask = (1u64 << width) - 1;
        let (start, second) = (word(0), word(1));
        let stride = second.wrapping_sub(start) & mask;
        // stride 0 is periodic and already covered
        if stride != 0 {
            out.push(Generator::Counter {
                width,
                start,
                stride,
            });
        }
    }
    out
}

/// Matches against the standard catalog (no replay entries).
pub fn catalog_match(bits: &[u8]) -> Vec<CatalogMatch> {
    Catalog::standard().matches(bits)
}

// ---------------------------------------------------------------------------
// Monobit and runs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonobitResult {
    pub ones: usize,
    pub z: f64,
    pub pass: bool,
}

pub fn monobit(bits: &[u8]) -> MonobitResult {
    let n = bits.len() as f64;
    let ones = bits.iter().filter(|&&b| b == 1).count();
    let z = (ones as f64 - n / 2.0) / (n / 4.0).sqrt();
    MonobitResult {
        ones,
        z,
        pass: z.abs() <= 3.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsResult {
    pub runs: usize,
    pub expected: f64,
    pub z: f64,
    pub pass: bool,
}

/// Total number of runs against the fair-coin mean `(N+1)/2` and variance `(N-1)/4`.
pub fn runs_test(bits: &[u8]) -> RunsResult {
    let n = bits.len() as f64;
    let runs = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let expected = (n + 1.0) / 2.0;
    let sd = ((n - 1.0) / 4.0).sqrt();
    let z = (runs as f64 - expected) / sd;
    RunsResult {
        runs,
        expected,
        z,
        pass: z.abs() <= 3.0,
    }
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Normality {
        k: usize,
        block: String,
        freq: f64,
        expected: f64,
    },
    Compression {
        ratio: f64,
        threshold: f64,
    },
    Catalog {
        generator: String,
        description_bits: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Refuted,
    ConsistentWithRandomness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub schema_version: u32,
    pub catalog_version: u32,
    pub notice: String,
    pub length: usize,
    pub normality: Vec<NormalityResult>,
    pub compression: CompressionResult,
    pub catalog_matches: Vec<CatalogMatch>,
    pub monobit: MonobitResult,
    pub runs: RunsResult,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
}

impl RandomnessReport {
    pub fn is_refuted(&self) -> bool {
        self.verdict == Verdict::Refuted
    }

    /// Normality result for block length `k`, if tested.
    pub fn normality_for(&self, k: usize) -> Option<&NormalityResult> {
        self.normality.iter().find(|r| r.k == k)
    }

    /// Rows `k,block,freq,expected,flagged` for plotting.
    pub fn normality_csv(&self) -> String {
        let mut out = String::from("k,block,freq,expected,flagged\n");
        for r in &self.normality {
            for f in &r.frequencies {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.k,
                    f.block,
                    f.freq,
                    f.expected,
                    u8::from(f.flagged)
                ));
            }
        }
        out
    }
}

/// Largest block length that the sequence supports, capped at [`DEFAULT_K_MAX`].
pub fn supported_k_max(len: usize) -> usize {
    (1..=DEFAULT_K_MAX)
        .take_while(|&k| len >= (1usize << k) * BLOCKS_PER_PATTERN)
        .last()
        .unwrap_or(0)
}

pub fn randomness_report(bits: &[u8]) -> Result<RandomnessReport> {
    randomness_report_with(bits, &Catalog::standard())
}

pub fn randomness_report_with(bits: &[u8], catalog: &Catalog) -> Result<RandomnessReport> {
    if bits.len() < MIN_REPORT_LENGTH {
        return Err(RandomnessError::SequenceTooShort {
            len: bits.len(),
            required: MIN_REPORT_LENGTH,
        });
    }
    let normality = borel_normality(bits, supported_k_max(bits.len()))?;
    let compression = compression(bits);
    let catalog_matches = catalog.matches(bits);

    let mut witnesses: Vec<Witness> = normality
        .iter()
        .flat_map(|r| {
            r.frequencies
                .iter()
                .filter(|f| f.flagged)
                .map(move |f| Witness::Normality {
                    k: r.k,
                    block: f.block.clone(),
                    freq: f.freq,
                    expected: f.expected,
                })
        })
        .collect();
    if compression.ratio < COMPRESSION_REFUTATION_RATIO {
        witnesses.push(Witness::Compression {
            ratio: compression.ratio,
            threshold: COMPRESSION_REFUTATION_RATIO,
        });
    }
    witnesses.extend(catalog_matches.iter().map(|m| Witness::Catalog {
        generator: m.generator.clone(),
        description_bits: m.description_bits,
    }));
    let verdict = if witnesses.is_empty() {
        Verdict::ConsistentWithRandomness
    } else {
        Verdict::Refuted
    };
    Ok(RandomnessReport {
        schema_version: REPORT_SCHEMA_VERSION,
        catalog_version: CATALOG_VERSION,
        notice: REPORT_NOTICE.to_owned(),
        length: bits.len(),
        normality,
        compression,
        catalog_matches,
        monobit: monobit(bits),
        runs: runs_test(bits),
        verdict,
        witnesses,
    })
}

/// Counts of every k-block, for callers that want raw tallies.
pub fn block_counts(bits: &[u8], k: usize) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for chunk in bits.chunks_exact(k.max(1)) {
        *counts.entry(bits_to_string(chunk)).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0..=1u8)).collect()
    }

    fn periodic(pattern: &str, n: usize) -> Vec<u8> {
        Generator::Periodic {
            pattern: pattern.into(),
        }
        .generate(n)
    }

    #[test]
    fn parse() {
        assert_eq!(parse_bits("0 1\n1\t0").unwrap(), vec![0, 1, 1, 0]);
        assert_eq!(parse_bits("012"), Err(RandomnessError::BadCharacter('2')));
    }

    #[test]
    fn normality_degenerate_and_alternating() {
        let zeros = vec![0u8; 1000];
        let r = borel_normality(&zeros, 1).unwrap();
        assert!(!r[0].pass);
        assert_eq!(r[0].frequencies[1].freq, 0.0);

        let alt = periodic("01", 10_000);
        let r = borel_normality(&alt, 2).unwrap();
        assert!(r[0].pass);
        assert_eq!(r[0].frequencies[0].freq, 0.5);
        assert!(!r[1].pass);
        let f01 = r[1].frequencies.iter().find(|f| f.block == "01").unwrap();
        assert_eq!(f01.freq, 1.0);
        for b in ["00", "10", "11"] {
            let f = r[1].frequencies.iter().find(|f| f.block == b).unwrap();
            assert_eq!(f.count, 0);
            assert!(f.flagged);
        }
        // block counts agree with an independent tally
        let counts = block_counts(&alt, 2);
        assert_eq!(counts.get("01"), Some(&5000));
    }

    #[test]
    fn normality_requires_enough_blocks() {
        assert_eq!(
            borel_normality(&[0, 1], 1),
            Err(RandomnessError::SequenceTooShort {
                len: 2,
                required: 200
            })
        );
        assert_eq!(supported_k_max(1000), 3);
        assert_eq!(supported_k_max(100_000), 4);
    }

    #[test]
    fn lz78_small_cases() {
        assert_eq!(lz78_encode(&[0]).len(), 1);
        assert_eq!(lz78_bits(&[0]), 1);
        // 0 | 00 | 1 | 000 | 01 | 0
        let s = parse_bits("0001000010").unwrap();
        let p = lz78_encode(&s);
        assert_eq!(p.len(), 6);
        assert_eq!(p.last().unwrap().bit, None);
        assert_eq!(lz78_decode(&p).unwrap(), s);
        assert_eq!(lz78_size(6), 6 * 4);
    }

    #[test]
    fn lz78_all_zeros() {
        let zeros = vec![0u8; 10_000];
        let c = compression(&zeros);
        // phrase lengths 1..=140 cover 9870 bits, the last 130 bits repeat phrase 130
        assert_eq!(c.phrases, 141);
        assert_eq!(c.bits, 141 * 9);
        assert!((c.ratio - 0.1269).abs() < 1e-12);
        assert!(c.round_trip);
    }

    #[test]
    fn lz78_round_trip_million() {
        let bits = random_bits(1_000_000, 3);
        assert_eq!(lz78_decode(&lz78_encode(&bits)).unwrap(), bits);
        let p = periodic("0110100110010110", 1_000_000);
        assert_eq!(lz78_decode(&lz78_encode(&p)).unwrap(), p);
    }

    #[test]
    fn compression_separates_periodic_from_random() {
        let rnd = compression(&random_bits(100_000, 11));
        let per = compression(&periodic("0010111011000101", 100_000));
        // about 9400 phrases of 14 bits each; the size bound exceeds N at this length
        assert!((1.2..=1.45).contains(&rnd.ratio), "{}", rnd.ratio);
        assert!(rnd.ratio - per.ratio >= 0.4);
    }

    #[test]
    fn catalog_finds_periodic() {
        let s = periodic("0110", 1000);
        let m = catalog_match(&s);
        let p = m.iter().find(|m| m.generator == "periodic").unwrap();
        assert_eq!(p.parameters["pattern"], "0110");
        assert!(p.description_bits < 40);
    }

    #[test]
    fn catalog_finds_champernowne_and_offsets() {
        let s: Vec<u8> = ChampernowneDigits::binary().take(5000).collect();
        let m = catalog_match(&s);
        let c = m.iter().find(|m| m.generator == "champernowne").unwrap();
        assert_eq!(c.parameters["offset"], 0);
        let shifted: Vec<u8> = ChampernowneDigits::binary().skip(777).take(5000).collect();
        let m = catalog_match(&shifted);
        assert!(m.iter().any(|m| m.parameters["offset"] == 777));
    }

    #[test]
    fn catalog_finds_counters() {
        let g = Generator::Counter {
            width: 12,
            start: 1234,
            stride: 97,
        };
        let m = catalog_match(&g.generate(4000));
        assert!(m
            .iter()
            .any(|m| m.generator == "counter" && m.parameters["stride"] == 97));
    }

    #[test]
    fn catalog_ignores_random_bits() {
        assert!(catalog_match(&random_bits(10_000, 5)).is_empty());
        assert!(catalog_match(&[0u8; 10]).is_empty());
    }

    #[test]
    fn replay_entries() {
        let target = random_bits(2000, 77);
        let cat = Catalog::standard().with_replay(ReplayEntry::new(
            "prng",
            serde_json::json!({"seed": 77}),
            64,
            |n| Some(random_bits(n, 77)),
        ));
        let m = cat.matches(&target);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].generator, "replay:prng");
        assert!(cat.matches(&random_bits(2000, 78)).is_empty());
    }

    #[test]
    fn every_match_regenerates_independently() {
        let s = periodic("1", 4096);
        let lz = lz78_encode(&s);
        assert_eq!(lz78_decode(&lz).unwrap(), s);
        for m in catalog_match(&s) {
            let g: Generator = serde_json::from_value(m.parameters.clone()).unwrap();
            assert_eq!(g.generate(s.len()), s);
        }
    }

    #[test]
    fn report_on_zeros() {
        let r = randomness_report(&vec![0u8; 5000]).unwrap();
        assert!(r.is_refuted());
        assert!(r.witnesses.len() >= 2);
        assert!(r
            .witnesses
            .iter()
            .any(|w| matches!(w, Witness::Normality { k: 1, .. })));
        assert!(r
            .witnesses
            .iter()
            .any(|w| matches!(w, Witness::Catalog { generator, .. } if generator == "constant")));
    }

    #[test]
    fn report_on_champernowne_is_refuted_by_catalog() {
        let s: Vec<u8> = ChampernowneDigits::binary().take(100_000).collect();
        let r = randomness_report(&s).unwrap();
        assert!(r.is_refuted());
        assert!(r
            .catalog_matches
            .iter()
            .any(|m| m.generator == "champernowne"));
    }

    #[test]
    fn report_on_random_bits() {
        let r = randomness_report(&random_bits(100_000, 2024)).unwrap();
        assert_eq!(
            r.verdict,
            Verdict::ConsistentWithRandomness,
            "{:?}",
            r.witnesses
        );
        assert!(r.witnesses.is_empty());
        assert!(r.compression.round_trip);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["verdict"], "consistent_with_randomness");
        assert_eq!(json["schema_version"], REPORT_SCHEMA_VERSION);
        assert!(randomness_report(&[0, 1]).is_err());
    }

    #[test]
    fn runs_and_monobit() {
        let alt = periodic("01", 10_000);
        assert!(monobit(&alt).pass);
        assert!(!runs_test(&alt).pass);
        assert_eq!(runs_test(&alt).runs, 10_000);
        let r = random_bits(10_000, 1);
        assert!(runs_test(&r).pass);
    }

    #[test]
    fn normality_csv_rows() {
        let r = randomness_report(&random_bits(1000, 4)).unwrap();
        let csv = r.normality_csv();
        assert!(csv.starts_with("k,block,freq,expected,flagged\n"));
        // k = 1..=3 -> 2 + 4 + 8 rows
        assert_eq!(csv.lines().count(), 1 + 14);
    }

    proptest::proptest! {
        #[test]
        fn lz78_round_trip(bits in proptest::collection::vec(0u8..=1, 0..3000)) {
            let p = lz78_encode(&bits);
            proptest::prop_assert_eq!(lz78_decode(&p).unwrap(), bits);
        }

        #[test]
        fn witnesses_survive_extension(
            pattern in "[01]{1,64}",
            offset in 0usize..=1024,
            n in 64usize..2000,
            extra in 1usize..2000,
        ) {
            let g = Generator::Periodic { pattern: pattern.clone() };
            let short = g.generate(n);
            let long = g.generate(n + extra);
            let before: Vec<_> = catalog_match(&short).into_iter().filter(|m| m.generator == "periodic").collect();
            let after = catalog_match(&long);
            for m in before {
                proptest::prop_assert!(after.iter().any(|a| a.parameters == m.parameters));
            }
            let c = Generator::Champernowne { offset };
            proptest::prop_assert!(catalog_match(&c.generate(n + extra))
                .iter()
                .any(|m| m.generator == "champernowne"));
        }
    }
}
