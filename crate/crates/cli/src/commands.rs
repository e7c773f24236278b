//! Subcommand implementations.

use std::path::{Path, PathBuf};

use bohmlab::classicalflip::{
    bands_crossed, flip_outcome, heads_probability, LaunchDensity, LaunchState,
};
use bohmlab::cointoss::{bits_to_text, compatibility_of, replay_entry, CoinToss, SequenceSidecar};
use bohmlab::equilibrium::{
    check_factorization, conditional_wf, qeh_consistency, qeh_marginal, BipartiteWF, Interval,
    TripartiteWF,
};
use bohmlab::pilot::{verify_equivariance, Trajectory};
use bohmlab::randomness::{
    parse_bits, randomness_report_with, Catalog, RandomnessReport, ReplayEntry, Verdict,
};
use bohmlab::sampling::{uniforms_to_bit_text, BornSampler, OracleDescriptor, SamplingOracle};
use bohmlab::wavefield::{make_gaussian, Grid, PhysicalConstants};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{ClassicalSection, ExperimentConfig};
use crate::error::CliError;
use crate::output::{histogram_csv, trajectories_csv, OutputDir, RunManifest};

pub const SEQUENCE_FILE: &str = "sequence.txt";
pub const SEQUENCE_SIDECAR: &str = "sequence.json";
pub const UNIFORMS_FILE: &str = "uniforms.txt";
pub const FLIPS_FILE: &str = "flips.txt";
pub const FLIPS_SIDECAR: &str = "flips.json";

/// Quantile levels written by `equivariance`.
const QUANTILES: usize = 99;

fn open_oracle(descriptor: &OracleDescriptor) -> Result<SamplingOracle, CliError> {
    SamplingOracle::new(descriptor.clone()).map_err(|e| CliError::Config(e.to_string()))
}

/// Trajectories started at evenly spaced quantiles of the initial density.
fn quantile_trajectories(toss: &CoinToss, count: usize) -> Result<Vec<Trajectory>, CliError> {
    (0..count)
        .map(|i| {
            let q0 = toss.sampler().sample((i as f64 + 0.5) / count as f64);
            toss.trajectory(q0).map_err(CliError::from)
        })
        .collect()
}

pub fn toss(config: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let toss_config = config.toss_config();
    toss_config.validate()?;
    let descriptor = config.oracle_descriptor()?;
    let mut oracle = open_oracle(&descriptor)?;
    if !descriptor.is_replayable() {
        oracle.start_recording();
    }
    let mut manifest = RunManifest::new("toss", config)?;
    manifest.toss_config_digest = Some(toss_config.digest());

    let toss = CoinToss::prepare(&toss_config)?;
    let seq = toss.run(&mut oracle, config.experiment.n)?;
    out.write(SEQUENCE_FILE, seq.to_text().as_bytes())?;
    out.write_json(SEQUENCE_SIDECAR, &seq.sidecar(&toss_config))?;
    if let Some(uniforms) = oracle.take_recording() {
        out.write(UNIFORMS_FILE, uniforms_to_bit_text(&uniforms).as_bytes())?;
    }
    let trajectories = quantile_trajectories(&toss, config.experiment.trajectories)?;
    out.write(
        "trajectories.csv",
        trajectories_csv(&trajectories).as_bytes(),
    )?;

    let compat = compatibility_of(&seq.bits);
    println!(
        "toss: n={} ones={} p1={:.5} (3-sigma band ±{:.5}: {}) flags={} oracle={}",
        seq.len(),
        compat.ones,
        compat.empirical_p1,
        compat.ci,
        if compat.pass { "pass" } else { "fail" },
        seq.flags.len(),
        descriptor
    );
    if !descriptor.is_replayable() {
        println!(
            "toss: consumed uniforms saved to {UNIFORMS_FILE}; replay with --set oracle.kind=file --set oracle.path=<dir>/{UNIFORMS_FILE}"
        );
    }
    manifest.finish(out)?;
    Ok(())
}

/// Sidecar written next to classical flip sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlipSidecar {
    pub schema_version: u32,
    pub n: usize,
    pub ones: usize,
    pub classical: ClassicalSection,
    pub oracle: OracleDescriptor,
}

fn sidecar_path(input: &Path) -> PathBuf {
    input.with_extension("json")
}

/// Replay entry from the sidecar next to `input`, if there is a usable one.
fn sidecar_replay(input: &Path) -> Result<Option<ReplayEntry>, CliError> {
    let path = sidecar_path(input);
    let Ok(text) = std::fs::read_to_string(&path) else {
        return Ok(None);
    };
    if let Ok(sidecar) = serde_json::from_str::<SequenceSidecar>(&text) {
        return Ok(replay_entry(&sidecar.config, &sidecar.oracle)?);
    }
    if let Ok(sidecar) = serde_json::from_str::<FlipSidecar>(&text) {
        return Ok(classical_replay(&sidecar.classical, &sidecar.oracle));
    }
    eprintln!("analyze: ignoring unrecognized sidecar {}", path.display());
    Ok(None)
}

pub fn analyze(
    config: &ExperimentConfig,
    input: Option<&Path>,
    expect_consistent: bool,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| config.analysis.input.clone())
        .ok_or_else(|| {
            CliError::Config("analyze needs an input file (argument or analysis.input)".into())
        })?;
    let text = std::fs::read_to_string(&input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let bits =
        parse_bits(&text).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;

    let mut catalog = Catalog::standard();
    if let Some(entry) = sidecar_replay(&input)? {
        println!("analyze: replay entry {} from sidecar", entry.label);
        catalog = catalog.with_replay(entry);
    }
    let report = randomness_report_with(&bits, &catalog).map_err(CliError::runtime)?;
    out.write_json("report.json", &report)?;
    out.write("normality.csv", report.normality_csv().as_bytes())?;
    print_report(&report);
    RunManifest::new("analyze", config)?.finish(out)?;
    if expect_consistent && report.is_refuted() {
        return Err(CliError::Refuted);
    }
    Ok(())
}

fn print_report(report: &RandomnessReport) {
    let verdict = match report.verdict {
        Verdict::Refuted => "refuted",
        Verdict::ConsistentWithRandomness => "consistent_with_randomness",
    };
    println!(
        "analyze: N={} compression ratio={:.4} catalog matches={} verdict={verdict} witnesses={}",
        report.length,
        report.compression.ratio,
        report.catalog_matches.len(),
        report.witnesses.len()
    );
    println!("analyze: {}", report.notice);
}

#[derive(Debug, Serialize)]
struct EquivarianceOutput {
    ks_distance: f64,
    threshold: f64,
    pass: bool,
    n: usize,
    flagged: usize,
    unresolved: usize,
    time: f64,
}

pub fn equivariance(config: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let toss_config = config.toss_config();
    toss_config.validate()?;
    let descriptor = config.oracle_descriptor()?;
    let mut oracle = open_oracle(&descriptor)?;
    let mut manifest = RunManifest::new("equivariance", config)?;
    manifest.toss_config_digest = Some(toss_config.digest());

    let toss = CoinToss::prepare(&toss_config)?;
    let q0 = toss.draw_initial_positions(&mut oracle, config.experiment.n)?;
    let constants = toss_config.constants()?;
    let (report, members) =
        verify_equivariance(toss.history(), &q0, &constants, toss_config.node_eps);

    let mut finals: Vec<f64> = members
        .iter()
        .filter(|m| !m.unresolved)
        .map(|m| m.final_position)
        .collect();
    finals.sort_by(f64::total_cmp);
    let target = BornSampler::new(toss.history().last());
    let mut quantiles = String::from("p,q_empirical,q_density\n");
    for i in 1..=QUANTILES {
        let p = i as f64 / (QUANTILES + 1) as f64;
        let k = ((p * finals.len() as f64) as usize).min(finals.len().saturating_sub(1));
        quantiles.push_str(&format!("{p},{},{}\n", finals[k], target.sample(p)));
    }
    out.write("quantiles.csv", quantiles.as_bytes())?;
    let grid = toss.history().grid();
    let (lo, hi) = (grid.x_min(), grid.x_max());
    out.write(
        "histogram_initial.csv",
        histogram_csv(&q0, lo, hi, config.experiment.bins).as_bytes(),
    )?;
    out.write(
        "histogram_final.csv",
        histogram_csv(&finals, lo, hi, config.experiment.bins).as_bytes(),
    )?;
    let shown: Vec<Trajectory> = q0
        .iter()
        .take(config.experiment.trajectories)
        .map(|&q| toss.trajectory(q).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    out.write("trajectories.csv", trajectories_csv(&shown).as_bytes())?;
    out.write_json(
        "equivariance.json",
        &EquivarianceOutput {
            ks_distance: report.ks_distance,
            threshold: report.threshold,
            pass: report.pass,
            n: report.n,
            flagged: report.flagged,
            unresolved: report.unresolved,
            time: toss_config.time,
        },
    )?;
    println!(
        "equivariance: n={} KS={:.4} (limit {}) {} flagged={} unresolved={}",
        report.n,
        report.ks_distance,
        report.threshold,
        if report.pass { "pass" } else { "FAIL" },
        report.flagged,
        report.unresolved
    );
    manifest.finish(out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EquilibriumOutput {
    product_is_member: bool,
    product_amplitude_residual: f64,
    product_phase_residual: f64,
    entangled_is_member: bool,
    entangled_amplitude_residual: f64,
    conditional_index: usize,
    conditional_environment_position: f64,
    qeh_marginal: f64,
    qeh_max_deviation: f64,
    qeh_pass: bool,
}

pub fn equilibrium_demo(config: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let e = &config.equilibrium;
    let grid = Grid::new(-e.half_extent, e.half_extent, e.n_points)
        .map_err(|err| CliError::Config(err.to_string()))?;
    let c = PhysicalConstants::default();
    let gauss =
        |center: f64| make_gaussian(&grid, center, e.width, 0.0, &c).map_err(CliError::runtime);
    let manifest = RunManifest::new("equilibrium-demo", config)?;

    let psi = gauss(0.0)?;
    let phi = gauss(0.0)?;
    let product = BipartiteWF::product(&psi, &phi);
    let prod_report = check_factorization(&product, &psi, 1e-10).map_err(CliError::runtime)?;

    // two correlated branches: the conditional wave function depends on z
    let (left, right) = (gauss(-e.offset)?, gauss(e.offset)?);
    let entangled = BipartiteWF::superposition(&[(&left, &left), (&right, &right)])
        .map_err(CliError::runtime)?;
    let z_index = (0..grid.len())
        .min_by(|&a, &b| {
            (grid.x(a) - e.offset)
                .abs()
                .total_cmp(&(grid.x(b) - e.offset).abs())
        })
        .unwrap_or(0);
    let cond = conditional_wf(&entangled, z_index).map_err(CliError::runtime)?;
    let ent_report = check_factorization(&entangled, &cond, 1e-10).map_err(CliError::runtime)?;

    let mut csv = String::from("y,re,im,density\n");
    for (j, a) in cond.amplitudes().iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            grid.x(j),
            a.re,
            a.im,
            a.norm_sqr()
        ));
    }
    out.write("conditional_wf.csv", csv.as_bytes())?;

    let unit = vec![Interval::new(-1.0, 1.0)];
    let state = TripartiteWF::product(&psi, &psi, &phi).map_err(CliError::runtime)?;
    let qeh = qeh_consistency(
        &state,
        &[psi.clone(), psi.clone()],
        &[unit.clone(), unit.clone()],
    )
    .map_err(CliError::runtime)?;
    let marginal =
        qeh_marginal(&[psi.clone(), psi], &[unit.clone(), unit]).map_err(CliError::runtime)?;
    let output = EquilibriumOutput {
        product_is_member: prod_report.is_member,
        product_amplitude_residual: prod_report.max_amplitude_residual,
        product_phase_residual: prod_report.max_phase_residual,
        entangled_is_member: ent_report.is_member,
        entangled_amplitude_residual: ent_report.max_amplitude_residual,
        conditional_index: z_index,
        conditional_environment_position: grid.x(z_index),
        qeh_marginal: marginal,
        qeh_max_deviation: qeh.max_deviation,
        qeh_pass: qeh.pass,
    };
    out.write_json("equilibrium.json", &output)?;
    println!(
        "equilibrium-demo: product factorizes={} (residuals {:.1e}, {:.1e}); entangled factorizes={}; QEH marginal on [-1,1]^2 = {:.5}, max deviation {:.1e}",
        output.product_is_member,
        output.product_amplitude_residual,
        output.product_phase_residual,
        output.entangled_is_member,
        output.qeh_marginal,
        output.qeh_max_deviation
    );
    manifest.finish(out)?;
    Ok(())
}

fn launch_density(c: &ClassicalSection) -> LaunchDensity {
    LaunchDensity {
        g_grav: c.g_grav,
        ..LaunchDensity::new(c.v_mean, c.v_sd, c.omega_mean, c.omega_sd)
    }
}

/// Draws one launch from the truncated density by inverse-CDF sampling.
fn draw_launch(
    oracle: &mut SamplingOracle,
    v: &Option<Normal>,
    omega: &Option<Normal>,
    d: &LaunchDensity,
) -> Option<LaunchState> {
    // conditional inverse CDF over the allowed half-line, so one uniform per coordinate
    let draw = |oracle: &mut SamplingOracle, dist: &Option<Normal>, mean: f64| -> Option<f64> {
        let u = oracle.next_uniform().ok()?;
        Some(match dist {
            Some(n) => {
                let lo = n.cdf(0.0);
                n.inverse_cdf(lo + u * (1.0 - lo))
            }
            None => mean,
        })
    };
    let v_draw = draw(oracle, v, d.v_mean)?.max(f64::MIN_POSITIVE);
    let w_draw = draw(oracle, omega, d.omega_mean)?.max(0.0);
    LaunchState::with_gravity(v_draw, w_draw, d.g_grav).ok()
}

fn classical_flips(c: &ClassicalSection, oracle: &mut SamplingOracle, n: usize) -> Option<Vec<u8>> {
    let d = launch_density(c);
    let normal = |m: f64, s: f64| (s > 0.0).then(|| Normal::new(m, s).ok()).flatten();
    let v = normal(d.v_mean, d.v_sd);
    let w = normal(d.omega_mean, d.omega_sd);
    (0..n)
        .map(|_| draw_launch(oracle, &v, &w, &d).map(|l| flip_outcome(&l)))
        .collect()
}

fn classical_replay(c: &ClassicalSection, oracle: &OracleDescriptor) -> Option<ReplayEntry> {
    if !oracle.is_replayable() {
        return None;
    }
    let parameters = serde_json::json!({ "classical": c, "oracle": oracle });
    let bits = 8 * parameters.to_string().len() as u64;
    let (c, descriptor) = (c.clone(), oracle.clone());
    Some(ReplayEntry::new(
        format!("classical:{}", oracle.kind_name()),
        parameters,
        bits,
        move |n| {
            let mut o = SamplingOracle::new(descriptor.clone()).ok()?;
            classical_flips(&c, &mut o, n)
        },
    ))
}

#[derive(Debug, Serialize)]
struct ClassicalOutput {
    heads_probability: f64,
    bands_crossed_2sd: f64,
    sweep: Vec<(f64, f64)>,
    flips: usize,
    flip_ones: usize,
    flip_verdict: Option<Verdict>,
}

pub fn coinflip_classical(config: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let c = &config.classical;
    let d = launch_density(c);
    let manifest = RunManifest::new("coinflip-classical", config)?;
    let p = heads_probability(&d, c.quadrature_n).map_err(CliError::runtime)?;

    let mut sweep = Vec::new();
    let mut sweep_csv = String::from("scale,v_sd,omega_sd,p_heads\n");
    for scale in [1.0, 2.0, 4.0, 8.0] {
        let ds = d.scaled(scale);
        let ps = heads_probability(&ds, c.quadrature_n).map_err(CliError::runtime)?;
        sweep_csv.push_str(&format!("{scale},{},{},{ps}\n", ds.v_sd, ds.omega_sd));
        sweep.push((scale, ps));
    }
    out.write("sweep.csv", sweep_csv.as_bytes())?;

    let mut bands = String::from("omega,theta,outcome\n");
    let omega_hi = c.omega_mean + 4.0 * c.omega_sd.max(1.0);
    let points = 2000;
    for i in 0..=points {
        let omega = omega_hi * i as f64 / points as f64;
        let launch = LaunchState::with_gravity(c.v_mean, omega, c.g_grav)
            .map_err(|e| CliError::Config(e.to_string()))?;
        bands.push_str(&format!(
            "{omega},{},{}\n",
            launch.total_angle(),
            flip_outcome(&launch)
        ));
    }
    out.write("bands.csv", bands.as_bytes())?;

    let descriptor = config.oracle_descriptor()?;
    let mut oracle = open_oracle(&descriptor)?;
    let flips = classical_flips(c, &mut oracle, config.experiment.n)
        .ok_or_else(|| CliError::Runtime("oracle exhausted while drawing launches".into()))?;
    let ones = flips.iter().filter(|&&b| b == 1).count();
    out.write(FLIPS_FILE, bits_to_text(&flips).as_bytes())?;
    out.write_json(
        FLIPS_SIDECAR,
        &FlipSidecar {
            schema_version: 1,
            n: flips.len(),
            ones,
            classical: c.clone(),
            oracle: descriptor.clone(),
        },
    )?;
    let mut catalog = Catalog::standard();
    if let Some(entry) = classical_replay(c, &descriptor) {
        catalog = catalog.with_replay(entry);
    }
    let flip_verdict = randomness_report_with(&flips, &catalog)
        .ok()
        .map(|r| r.verdict);

    let output = ClassicalOutput {
        heads_probability: p,
        bands_crossed_2sd: bands_crossed(&d, 2.0),
        sweep,
        flips: flips.len(),
        flip_ones: ones,
        flip_verdict,
    };
    out.write_json("classical.json", &output)?;
    println!(
        "coinflip-classical: P(heads)={p:.4} over {:.1} bands; sweep {:?}; {} flips, {} heads, verdict {:?}",
        output.bands_crossed_2sd, output.sweep, output.flips, ones, output.flip_verdict
    );
    manifest.finish(out)?;
    Ok(())
}
