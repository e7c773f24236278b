//! Output directory handling, run manifests and plot-data CSVs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use bohmlab::pilot::Trajectory;
use serde::Serialize;

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "run_manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: &str = "t,q,node_flag";
pub const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count,density";

const FLOAT_ENVIRONMENT: &str = "IEEE-754 binary64, round-to-nearest; outputs of replayable \
oracles are byte-identical for the same build on the same platform";

/// Directory receiving the files of one run. Every file is written to a
/// temporary sibling and renamed into place.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_owned(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.dir.join(name);
        let io = |source| CliError::Io {
            path: target.clone(),
            source,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(contents).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_owned());
        }
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub bohmlab: &'static str,
    pub cli: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toss_config_digest: Option<String>,
    pub oracle_kind: String,
    pub oracle: serde_json::Value,
    pub oracle_role: String,
    pub versions: Versions,
    pub float_environment: &'static str,
    pub created_unix: u64,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        config: &crate::config::ExperimentConfig,
    ) -> Result<Self, CliError> {
        let oracle = config.oracle_descriptor()?;
        Ok(Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            subcommand: subcommand.to_owned(),
            config_digest: config.digest(),
            toss_config_digest: None,
            oracle_kind: oracle.kind_name().to_owned(),
            oracle: serde_json::to_value(&oracle).map_err(CliError::runtime)?,
            oracle_role: oracle.role().to_owned(),
            versions: Versions {
                bohmlab: bohmlab::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
            },
            float_environment: FLOAT_ENVIRONMENT,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
            config: serde_json::to_value(config).map_err(CliError::runtime)?,
        })
    }

    /// Writes the manifest last, listing everything written before it.
    pub fn finish(mut self, out: &mut OutputDir) -> Result<PathBuf, CliError> {
        self.outputs = out.written().to_vec();
        out.write_json(MANIFEST_NAME, &self)
    }
}

/// Rows `t,q,node_flag` for every stored step of every trajectory, in order.
pub fn trajectories_csv(trajectories: &[Trajectory]) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for traj in trajectories {
        for ((t, q), f) in traj.times.iter().zip(&traj.positions).zip(&traj.step_flags) {
            out.push_str(&format!("{t},{q},{}\n", u8::from(*f)));
        }
    }
    out
}

/// Equal-width histogram over `[lo, hi]`; values outside are clamped into the end bins
/// so the counts always add up to `samples.len()`.
pub fn histogram_csv(samples: &[f64], lo: f64, hi: f64, bins: usize) -> String {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let i = ((x - lo) / width).floor();
        let i = if i.is_nan() {
            0
        } else {
            (i.max(0.0) as usize).min(bins - 1)
        };
        counts[i] += 1;
    }
    let n = samples.len().max(1) as f64;
    let mut out = format!("{HISTOGRAM_HEADER}\n");
    for (i, c) in counts.iter().enumerate() {
        let left = lo + i as f64 * width;
        out.push_str(&format!(
            "{left},{},{c},{}\n",
            left + width,
            *c as f64 / (n * width)
        ));
    }
    out
}
