//! Experiment configuration: a sectioned TOML file with flat keys.
//!
//! ```toml
//! [experiment]
//! n = 10000
//!
//! [packet]
//! separation = 5.0
//!
//! [oracle]
//! kind = "seeded_prng"
//! seed = 42
//! ```
//!
//! Unknown sections and keys are rejected. `--set section.key=value` edits the
//! parsed table before validation, so overrides obey the same rules.

use std::path::{Path, PathBuf};

use bohmlab::cointoss::TossConfig;
use bohmlab::sampling::OracleDescriptor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const ORACLE_OVERRIDE_ENV: &str = "BOHM_ORACLE_OVERRIDE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Tosses, samples or flips to draw.
    pub n: usize,
    pub out: Option<PathBuf>,
    /// Trajectories written to the plot data.
    pub trajectories: usize,
    pub bins: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n: 1000,
            out: None,
            trajectories: 20,
            bins: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacketSection {
    pub separation: f64,
    pub width: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub time: f64,
    pub steps: usize,
    pub substeps: usize,
    pub node_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let t = TossConfig::default();
        Self {
            x_min: t.x_min,
            x_max: t.x_max,
            n_points: t.n_points,
        }
    }
}

impl Default for PacketSection {
    fn default() -> Self {
        let t = TossConfig::default();
        Self {
            separation: t.separation,
            width: t.width,
            momentum: t.momentum,
        }
    }
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let t = TossConfig::default();
        Self {
            time: t.time,
            steps: t.steps,
            substeps: t.substeps,
            node_eps: t.node_eps,
        }
    }
}

impl Default for ConstantsSection {
    fn default() -> Self {
        let t = TossConfig::default();
        Self {
            hbar: t.hbar,
            mass: t.mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub kind: String,
    pub seed: Option<u64>,
    pub base: Option<u32>,
    pub pattern: Option<String>,
    pub value: Option<f64>,
    pub path: Option<PathBuf>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            kind: "entropy".into(),
            seed: None,
            base: None,
            pattern: None,
            value: None,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSection {
    pub n_points: usize,
    pub half_extent: f64,
    pub width: f64,
    /// Offset of the two branches in the entangled example.
    pub offset: f64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        Self {
            n_points: 64,
            half_extent: 8.0,
            width: 1.0,
            offset: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalSection {
    pub v_mean: f64,
    pub v_sd: f64,
    pub omega_mean: f64,
    pub omega_sd: f64,
    pub g_grav: f64,
    pub quadrature_n: usize,
}

impl Default for ClassicalSection {
    fn default() -> Self {
        Self {
            v_mean: 2.4,
            v_sd: 0.1,
            omega_mean: 240.0,
            omega_sd: 20.0,
            g_grav: bohmlab::classicalflip::STANDARD_GRAVITY,
            quadrature_n: bohmlab::classicalflip::DEFAULT_QUADRATURE_N,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub grid: GridSection,
    pub packet: PacketSection,
    pub evolution: EvolutionSection,
    pub constants: ConstantsSection,
    pub oracle: OracleSection,
    pub analysis: AnalysisSection,
    pub equilibrium: EquilibriumSection,
    pub classical: ClassicalSection,
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `key=value` overrides, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiment.n == 0 {
            return Err(CliError::Config("experiment.n must be at least 1".into()));
        }
        if self.experiment.bins == 0 {
            return Err(CliError::Config(
                "experiment.bins must be at least 1".into(),
            ));
        }
        self.oracle_descriptor()?;
        if self.classical.quadrature_n == 0 {
            return Err(CliError::Config(
                "classical.quadrature_n must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn toss_config(&self) -> TossConfig {
        TossConfig {
            x_min: self.grid.x_min,
            x_max: self.grid.x_max,
            n_points: self.grid.n_points,
            separation: self.packet.separation,
            width: self.packet.width,
            momentum: self.packet.momentum,
            time: self.evolution.time,
            steps: self.evolution.steps,
            substeps: self.evolution.substeps,
            node_eps: self.evolution.node_eps,
            hbar: self.constants.hbar,
            mass: self.constants.mass,
        }
    }

    pub fn oracle_descriptor(&self) -> Result<OracleDescriptor, CliError> {
        let o = &self.oracle;
        let mut used = vec![];
        let descriptor = match o.kind.as_str() {
            "entropy" => OracleDescriptor::Entropy,
            "seeded_prng" => {
                used.push("seed");
                OracleDescriptor::SeededPrng {
                    seed: required(o.seed, "seed")?,
                }
            }
            "champernowne" => {
                used.push("base");
                OracleDescriptor::Champernowne {
                    base: o.base.unwrap_or(10),
                }
            }
            "periodic" => {
                used.push("pattern");
                OracleDescriptor::Periodic {
                    pattern: required(o.pattern.clone(), "pattern")?,
                }
            }
            "constant" => {
                used.push("value");
                OracleDescriptor::Constant {
                    value: required(o.value, "value")?,
                }
            }
            "file" => {
                used.push("path");
                OracleDescriptor::File {
                    path: required(o.path.clone(), "path")?,
                }
            }
            other => return Err(CliError::Config(format!("unknown oracle kind {other:?}"))),
        };
        let present = [
            ("seed", o.seed.is_some()),
            ("base", o.base.is_some()),
            ("pattern", o.pattern.is_some()),
            ("value", o.value.is_some()),
            ("path", o.path.is_some()),
        ];
        for (key, set) in present {
            if set && !used.contains(&key) {
                return Err(CliError::Config(format!(
                    "oracle.{key} does not apply to oracle kind {:?}",
                    o.kind
                )));
            }
        }
        Ok(descriptor)
    }

    /// Replaces the oracle section, clearing kind-specific keys.
    pub fn set_oracle(&mut self, descriptor: &OracleDescriptor) {
        let mut o = OracleSection {
            kind: descriptor.kind_name().to_owned(),
            ..OracleSection::default()
        };
        match descriptor {
            OracleDescriptor::Entropy => {}
            OracleDescriptor::SeededPrng { seed } => o.seed = Some(*seed),
            OracleDescriptor::Champernowne { base } => o.base = Some(*base),
            OracleDescriptor::Periodic { pattern } => o.pattern = Some(pattern.clone()),
            OracleDescriptor::Constant { value } => o.value = Some(*value),
            OracleDescriptor::File { path } => o.path = Some(path.clone()),
        }
        self.oracle = o;
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

fn required<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("oracle.{key} is required for this oracle kind")))
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("override key {key:?} must be section.key")))?;
    if field.contains('.') {
        return Err(CliError::Config(format!(
            "override key {key:?} is nested too deeply"
        )));
    }
    let value = parse_value(raw.trim());
    let entry = table
        .entry(section.to_owned())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field.to_owned(), value);
            Ok(())
        }
        _ => Err(CliError::Config(format!("{section} is not a section"))),
    }
}

/// A TOML scalar if `raw` parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .filter(|v| !v.is_table() && !v.is_array())
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Parses `kind[:argument]`, e.g. `seeded_prng:7`, `champernowne:2`, `constant:0.25`.
pub fn parse_oracle_override(text: &str) -> Result<OracleDescriptor, CliError> {
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    let bad = |what: &str| CliError::Config(format!("{ORACLE_OVERRIDE_ENV}={text:?}: {what}"));
    let need = || arg.ok_or_else(|| bad("missing argument"));
    Ok(match kind {
        "entropy" => OracleDescriptor::Entropy,
        "seeded_prng" => OracleDescriptor::SeededPrng {
            seed: need()?
                .parse()
                .map_err(|_| bad("seed must be an integer"))?,
        },
        "champernowne" => OracleDescriptor::Champernowne {
            base: arg
                .map(|a| a.parse().map_err(|_| bad("base must be an integer")))
                .transpose()?
                .unwrap_or(10),
        },
        "periodic" => OracleDescriptor::Periodic {
            pattern: need()?.to_owned(),
        },
        "constant" => OracleDescriptor::Constant {
            value: need()?.parse().map_err(|_| bad("value must be a number"))?,
        },
        "file" => OracleDescriptor::File {
            path: PathBuf::from(need()?),
        },
        _ => return Err(bad("unknown oracle kind")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_match_toss_defaults() {
        let c = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(c.toss_config(), TossConfig::default());
        assert_eq!(c.oracle_descriptor().unwrap(), OracleDescriptor::Entropy);
    }

    #[test]
    fn sections_and_overrides() {
        let f = write("[experiment]\nn = 50\n[oracle]\nkind = \"seeded_prng\"\nseed = 3\n");
        let c = ExperimentConfig::load(
            Some(f.path()),
            &["packet.width=1.25".into(), "oracle.seed = 9".into()],
        )
        .unwrap();
        assert_eq!(c.experiment.n, 50);
        assert_eq!(c.packet.width, 1.25);
        assert_eq!(
            c.oracle_descriptor().unwrap(),
            OracleDescriptor::SeededPrng { seed: 9 }
        );
        let c = ExperimentConfig::load(
            None,
            &["oracle.kind=periodic".into(), "oracle.pattern=0110".into()],
        )
        .unwrap();
        assert_eq!(
            c.oracle_descriptor().unwrap(),
            OracleDescriptor::Periodic {
                pattern: "0110".into()
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write("[packet]\nwidht = 1.0\n");
        assert!(matches!(
            ExperimentConfig::load(Some(f.path()), &[]),
            Err(CliError::Config(_))
        ));
        let f = write("[nonsense]\na = 1\n");
        assert!(ExperimentConfig::load(Some(f.path()), &[]).is_err());
        assert!(ExperimentConfig::load(None, &["grid.nope=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["novalue".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["a.b.c=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["oracle.seed=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["oracle.kind=seeded_prng".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["experiment.n=0".into()]).is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.packet.width = 2.0;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn oracle_overrides() {
        assert_eq!(
            parse_oracle_override("seeded_prng:7").unwrap(),
            OracleDescriptor::SeededPrng { seed: 7 }
        );
        assert_eq!(
            parse_oracle_override("champernowne").unwrap(),
            OracleDescriptor::Champernowne { base: 10 }
        );
        assert!(parse_oracle_override("seeded_prng").is_err());
        assert!(parse_oracle_override("dice:6").is_err());
        let mut c = ExperimentConfig::default();
        c.set_oracle(&OracleDescriptor::Constant { value: 0.5 });
        assert_eq!(
            c.oracle_descriptor().unwrap(),
            OracleDescriptor::Constant { value: 0.5 }
        );
    }
}
