//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use bohmlab::classicalflip::{
    heads_probability, omega_for_angle, LaunchDensity, DEFAULT_QUADRATURE_N,
};
use bohmlab::cointoss::{
    compatibility_of, replay_entry, verify_outcome_determinism, CoinToss, TossConfig,
};
use bohmlab::equilibrium::{
    check_factorization, conditional_wf, qeh_marginal, BipartiteWF, Interval,
};
use bohmlab::pilot::verify_equivariance;
use bohmlab::randomness::{
    borel_normality, catalog_match, compression, lz78_decode, lz78_encode, randomness_report,
    randomness_report_with, Catalog, Generator, Witness,
};
use bohmlab::sampling::{ChampernowneDigits, OracleDescriptor, SamplingOracle};
use bohmlab::wavefield::{
    continuity_residual, evolve, make_gaussian, Grid, PhysicalConstants, Potential, WaveFunction,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::function::erf::erf;

type Outcome = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn ones(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b == 1).count()
}

fn criterion_1(entropy_bits: &mut Vec<u8>) -> Outcome {
    let config = TossConfig::default();
    let start = Instant::now();
    let toss = CoinToss::prepare(&config).map_err(err)?;
    let seq = toss
        .run(&mut SamplingOracle::entropy(), 100_000)
        .map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = compatibility_of(&seq.bits);
    let band = 3.0 * (0.25f64 / 100_000.0).sqrt();
    let pass = (report.empirical_p1 - 0.5).abs() <= band && report.pass;
    *entropy_bits = seq.bits;
    Ok((
        pass,
        format!(
            "n=100000 ones={} p1={:.5} band=±{band:.5} flags={} runtime={elapsed:.1}s (target ≤ 60s)",
            report.ones,
            report.empirical_p1,
            seq.flags.len()
        ),
    ))
}

fn criterion_2() -> Outcome {
    let config = TossConfig::default();
    let toss = CoinToss::prepare(&config).map_err(err)?;
    let mut oracle = SamplingOracle::seeded(2718);
    let q0 = toss
        .draw_initial_positions(&mut oracle, 10_000)
        .map_err(err)?;
    let constants = config.constants().map_err(err)?;
    let (report, _) = verify_equivariance(toss.history(), &q0, &constants, config.node_eps);
    Ok((
        report.pass,
        format!(
            "n={} KS={:.4} (limit {}) flagged={} unresolved={}",
            report.n, report.ks_distance, report.threshold, report.flagged, report.unresolved
        ),
    ))
}

fn criterion_3() -> Outcome {
    let config = TossConfig::default();
    let starts = [-6.5, -5.0, -3.5, -2.0, -0.5, 0.5, 2.0, 3.5, 5.0, 6.5];
    let mut identical = 0;
    for &q0 in &starts {
        let r = verify_outcome_determinism(&config, q0, 100).map_err(err)?;
        if r.pass && r.bits.len() == 100 {
            identical += 1;
        }
    }
    let toss = CoinToss::prepare(&config).map_err(err)?;
    let mut constant =
        SamplingOracle::new(OracleDescriptor::Constant { value: 0.25 }).map_err(err)?;
    let seq = toss.run(&mut constant, 1000).map_err(err)?;
    let degenerate = seq.bits.iter().all(|&b| b == seq.bits[0]);
    Ok((
        identical == starts.len() && degenerate,
        format!(
            "{identical}/{} start positions gave 100/100 identical bits; constant(0.25) oracle: {} tosses all equal to {} = {degenerate}",
            starts.len(),
            seq.len(),
            seq.bits[0]
        ),
    ))
}

fn catalog_refutes(
    config: &TossConfig,
    descriptor: OracleDescriptor,
    n: usize,
) -> Result<(bool, String), String> {
    let toss = CoinToss::prepare(config).map_err(err)?;
    let mut oracle = SamplingOracle::new(descriptor.clone()).map_err(err)?;
    let seq = toss.run(&mut oracle, n).map_err(err)?;
    let entry = replay_entry(config, &descriptor)
        .map_err(err)?
        .ok_or("oracle is not replayable")?;
    let report =
        randomness_report_with(&seq.bits, &Catalog::standard().with_replay(entry)).map_err(err)?;
    let catalog: Vec<&str> = report
        .witnesses
        .iter()
        .filter_map(|w| match w {
            Witness::Catalog { generator, .. } => Some(generator.as_str()),
            _ => None,
        })
        .collect();
    Ok((
        report.is_refuted() && !catalog.is_empty(),
        format!("{} -> {:?} via {:?}", descriptor, report.verdict, catalog),
    ))
}

fn criterion_4(entropy_bits: &[u8]) -> Outcome {
    let config = TossConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for descriptor in [
        OracleDescriptor::Periodic {
            pattern: "0110".into(),
        },
        OracleDescriptor::Champernowne { base: 10 },
        OracleDescriptor::SeededPrng { seed: 42 },
    ] {
        let (ok, detail) = catalog_refutes(&config, descriptor, 10_000)?;
        pass &= ok;
        parts.push(detail);
    }
    if entropy_bits.is_empty() {
        return Err("no entropy sequence from criterion 1".into());
    }
    let first = randomness_report(entropy_bits).map_err(err)?;
    // a 3-sigma battery flags a truly random sequence now and then; one rerun on a fresh draw
    let entropy_ok = if first.is_refuted() {
        let toss = CoinToss::prepare(&config).map_err(err)?;
        let fresh = toss
            .run(&mut SamplingOracle::entropy(), 100_000)
            .map_err(err)?;
        let second = randomness_report(&fresh.bits).map_err(err)?;
        parts.push(format!(
            "entropy -> refuted by {:?}, rerun -> {:?}",
            first.witnesses, second.verdict
        ));
        !second.is_refuted()
    } else {
        parts.push(format!("entropy -> {:?}", first.verdict));
        true
    };
    Ok((pass && entropy_ok, parts.join("; ")))
}

fn criterion_5() -> Outcome {
    let bits: Vec<u8> = ChampernowneDigits::binary().take(100_000).collect();
    let normality = borel_normality(&bits, 4).map_err(err)?;
    let failing: Vec<String> = normality
        .iter()
        .filter(|r| !r.pass)
        .map(|r| {
            let worst = r
                .frequencies
                .iter()
                .max_by(|a, b| {
                    (a.freq - a.expected)
                        .abs()
                        .total_cmp(&(b.freq - b.expected).abs())
                })
                .expect("non-empty");
            format!(
                "k={} block {} freq {:.4} vs {:.4} ± {:.4}",
                r.k, worst.block, worst.freq, worst.expected, worst.threshold
            )
        })
        .collect();
    let matches = catalog_match(&bits);
    let catalog_hit = matches.iter().any(|m| m.generator == "champernowne");
    Ok((
        failing.is_empty() && catalog_hit,
        format!(
            "catalog match: {catalog_hit}; ones freq {:.4}; normality k≤4 failures: [{}]",
            ones(&bits) as f64 / bits.len() as f64,
            failing.join(", ")
        ),
    ))
}

fn criterion_6() -> Outcome {
    let c = PhysicalConstants::default();
    let residual = |n: usize, dt: f64| -> Result<f64, String> {
        let g = Grid::new(-20.0, 20.0, n).map_err(err)?;
        let wf = make_gaussian(&g, -2.0, 2.0, 1.5, &c).map_err(err)?;
        continuity_residual(&wf, &Potential::Free, dt, &c).map_err(err)
    };
    let coarse = residual(128, 0.04)?;
    let fine = residual(256, 0.02)?;
    let ratio = coarse / fine;
    Ok((
        ratio >= 3.5,
        format!("residual {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2} (need ≥ 3.5)"),
    ))
}

fn random_state(grid: Grid, rng: &mut ChaCha20Rng) -> Result<WaveFunction, String> {
    let amps = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    WaveFunction::new(grid, amps).map_err(err)
}

fn criterion_7() -> Outcome {
    let grid = Grid::new(-8.0, 8.0, 64).map_err(err)?;
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let (mut amp, mut phase) = (0.0f64, 0.0f64);
    let mut cond = 0.0f64;
    for _ in 0..20 {
        let psi = random_state(grid, &mut rng)?;
        let phi = random_state(grid, &mut rng)?;
        let product = BipartiteWF::product(&psi, &phi);
        let report = check_factorization(&product, &psi, 1e-12).map_err(err)?;
        amp = amp.max(report.max_amplitude_residual);
        phase = phase.max(report.max_phase_residual);
        // the conditional wave function equals psi up to one global phase
        let s = rng.gen_range(0..grid.len());
        let cw = conditional_wf(&product, s).map_err(err)?;
        let rot = phi.amplitudes()[s] / phi.amplitudes()[s].norm();
        for (a, b) in cw.amplitudes().iter().zip(psi.amplitudes()) {
            cond = cond.max((a - b * rot).norm());
        }
    }
    let fine = Grid::new(-10.0, 10.0, 256).map_err(err)?;
    let c = PhysicalConstants::default();
    let g = make_gaussian(&fine, 0.0, 1.0, 0.0, &c).map_err(err)?;
    let unit = vec![Interval::new(-1.0, 1.0)];
    let marginal = qeh_marginal(&[g.clone(), g], &[unit.clone(), unit]).map_err(err)?;
    let exact = erf(FRAC_1_SQRT_2).powi(2);
    let pass = amp <= 1e-12 && phase <= 1e-10 && cond <= 1e-12 && (marginal - exact).abs() <= 1e-3;
    Ok((
        pass,
        format!(
            "20 product states: amplitude residual {amp:.2e}, phase residual {phase:.2e}, conditional-vs-factor {cond:.2e}; QEH marginal {marginal:.5} vs {exact:.5}"
        ),
    ))
}

fn criterion_8() -> Outcome {
    let g = Grid::new(-40.0, 40.0, 1024).map_err(err)?;
    let c = PhysicalConstants::default();
    let sigma = 1.5;
    let wf = make_gaussian(&g, 0.0, sigma, 0.0, &c).map_err(err)?;
    let t = 2.0 * c.mass * sigma * sigma / c.hbar;
    let steps = 200;
    let out = evolve(&wf, &Potential::Free, t / steps as f64, steps, &c).map_err(err)?;
    let expected = sigma * sigma + (c.hbar * t / (2.0 * c.mass * sigma)).powi(2);
    let rel = (out.position_variance() / expected - 1.0).abs();
    Ok((
        rel <= 1e-3,
        format!(
            "width² {:.6} vs {expected:.6}, relative error {rel:.2e}",
            out.position_variance()
        ),
    ))
}

fn criterion_9() -> Outcome {
    let broad = LaunchDensity::new(2.4, 0.1, 240.0, 20.0);
    let bands = bohmlab::classicalflip::bands_crossed(&broad, 2.0);
    let p = heads_probability(&broad, DEFAULT_QUADRATURE_N).map_err(err)?;
    let v = 2.4;
    let seed = LaunchDensity::new(v, 0.002, omega_for_angle(40.0 * PI, v, 9.81), 0.5);
    let devs = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&s| heads_probability(&seed.scaled(s), DEFAULT_QUADRATURE_N).map(|p| (p - 0.5).abs()))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(err)?;
    let monotone = devs.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        bands >= 10.0 && (p - 0.5).abs() <= 0.01 && monotone,
        format!("{bands:.1} bands crossed, p={p:.4}; |p-0.5| over sd x{{1,2,4,8}}: {devs:.4?}"),
    ))
}

fn criterion_10(entropy_bits: &[u8]) -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let random: Vec<u8> = (0..100_000).map(|_| rng.gen_range(0..=1u8)).collect();
    let pattern: String = (0..16)
        .map(|_| if rng.gen::<bool>() { '1' } else { '0' })
        .collect();
    let periodic = Generator::Periodic { pattern }.generate(100_000);
    let r = compression(&random);
    let p = compression(&periodic);
    let gap = r.ratio - p.ratio;

    let corpora: Vec<Vec<u8>> = vec![
        random,
        periodic,
        vec![0; 10_000],
        ChampernowneDigits::binary().take(100_000).collect(),
        entropy_bits.to_vec(),
        vec![1],
        Vec::new(),
    ];
    let round_trips = corpora
        .iter()
        .filter(|c| lz78_decode(&lz78_encode(c)).as_deref() == Some(c.as_slice()))
        .count();
    Ok((
        gap >= 0.4 && round_trips == corpora.len(),
        format!(
            "ratio entropy {:.4}, period-16 {:.4}, gap {gap:.4} (need ≥ 0.4); round trip {round_trips}/{}",
            r.ratio,
            p.ratio,
            corpora.len()
        ),
    ))
}

#[allow(clippy::vec_init_then_push)]
fn main() -> ExitCode {
    let mut entropy_bits = Vec::new();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    results.push((1, criterion_1(&mut entropy_bits)));
    results.push((2, criterion_2()));
    results.push((3, criterion_3()));
    results.push((4, criterion_4(&entropy_bits)));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10(&entropy_bits)));

    let mut failed = 0;
    for (id, outcome) in &results {
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (*pass, detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2}: {} {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
