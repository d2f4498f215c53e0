//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! The synthetic sweeps run at full scale (256² patches, b = 16, four seeds
//! per filter) and dominate the runtime.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use transit_deconv::blind::{iterative_rho, noise_bound, warm_start_sweep, whiteness_measure, SolverConfig, Workspace};
use transit_deconv::grid::{derive_omega, disk_pixels, FilterEstimate};
use transit_deconv::nonblind::{
    compute_rsnr, deconvolve_adaptive, disk_intensity_ratio, DeconvSettings, DB_SENTINEL, RHO_BASE_FRACTION,
};
use transit_deconv::simkit::{
    longrange_constant_check, power_law_psf, simulate_observations, solar_texture, FilterSpec, SyntheticScenario,
    DEFAULT_TEXTURE_SEED, DEFAULT_TEXTURE_SIDE,
};

const SEEDS: [u64; 4] = [0, 1, 2, 3];
const PATCHES: usize = 3;
const BORDER: usize = 16;
const RUNTIME_LIMIT_S: f64 = 2.0 * 3600.0;

#[derive(Default)]
struct Verdicts {
    lines: Vec<(u32, bool, String)>,
}

impl Verdicts {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let line = format!("criterion {id} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((id, pass, line));
    }
}

/// One seed of the synthetic protocol: a warm-started P = 1..3 sweep, then
/// non-blind validation of the P = 3 filter on a fourth, held-out cutout.
struct SeedRun {
    rsnr: Vec<f64>,
    isnr: Vec<f64>,
    seconds: f64,
    disk_ratio: f64,
}

fn run_seed(filter: FilterSpec, seed: u64) -> SeedRun {
    let sc = SyntheticScenario::standard(filter, PATCHES + 1, seed).unwrap();
    let stack = simulate_observations(&sc).unwrap();
    let train = stack.select(&(0..PATCHES).collect::<Vec<_>>());
    let config = SolverConfig { sigma: stack.sigma, border: BORDER, ..Default::default() };
    let ws = Workspace::new(&train.observations, &train.geoms, None, &config).unwrap();
    let truth = train.truth_inner();

    let start = Instant::now();
    let sweep = warm_start_sweep(&ws, &config).unwrap();
    let seconds = start.elapsed().as_secs_f64();

    let mut rsnr = Vec::new();
    let mut isnr = Vec::new();
    for out in &sweep {
        rsnr.push(compute_rsnr(&stack.filter, &out.filter).unwrap());
        let (mut before, mut after) = (0.0, 0.0);
        for (j, x) in out.images.iter().enumerate() {
            let est = ws.domain.crop(x.view());
            before += (train.observations[j].data() - &truth[j]).iter().map(|v| v * v).sum::<f64>();
            after += (&est - &truth[j]).iter().map(|v| v * v).sum::<f64>();
        }
        isnr.push(10.0 * (before / after).log10());
    }

    let last = sweep.last().unwrap();
    let held = &stack.observations[PATCHES];
    let settings = DeconvSettings { border: BORDER, ..Default::default() };
    let (restored, _) =
        deconvolve_adaptive(held, &last.filter, None, RHO_BASE_FRACTION * last.report.rho, &settings).unwrap();
    let omega = derive_omega(&stack.geoms[PATCHES], held.side()).unwrap();
    let disk_ratio = disk_intensity_ratio(held.view(), restored.image.view(), &omega).unwrap();
    SeedRun { rsnr, isnr, seconds, disk_ratio }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn per_p(runs: &[SeedRun], pick: impl Fn(&SeedRun) -> &Vec<f64>) -> Vec<f64> {
    (0..PATCHES).map(|p| mean(runs.iter().map(|r| pick(r)[p]))).collect()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" -> ")
}

fn synthetic_criteria(v: &mut Verdicts) {
    let jobs: Vec<(bool, u64)> = [false, true].iter().flat_map(|&x| SEEDS.iter().map(move |&s| (x, s))).collect();
    let runs: Vec<(bool, SeedRun)> = jobs
        .par_iter()
        .map(|&(x, s)| {
            let spec = if x { FilterSpec::X { half_width: BORDER } } else { FilterSpec::standard_gaussian() };
            (x, run_seed(spec, s))
        })
        .collect();
    let (x_runs, g_runs): (Vec<_>, Vec<_>) = runs.into_iter().partition(|r| r.0);
    let g: Vec<SeedRun> = g_runs.into_iter().map(|r| r.1).collect();
    let x: Vec<SeedRun> = x_runs.into_iter().map(|r| r.1).collect();

    let rsnr = per_p(&g, |r| &r.rsnr);
    let isnr = per_p(&g, |r| &r.isnr);
    let slowest = g.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let increasing = rsnr.windows(2).all(|w| w[1] > w[0]);
    let pass = increasing && rsnr[2] >= 11.0 && isnr[2] >= 0.8 && slowest <= RUNTIME_LIMIT_S;
    v.record(
        1,
        "Gaussian filter, RSNR rising with P, RSNR(3) >= 11 dB, ISNR(3) >= 0.8 dB, <= 2 h",
        pass,
        format!("RSNR {} dB, ISNR {} dB, slowest sweep {slowest:.0} s", fmt(&rsnr), fmt(&isnr)),
    );

    let rsnr = per_p(&x, |r| &r.rsnr);
    let isnr = per_p(&x, |r| &r.isnr);
    v.record(
        2,
        "X filter, RSNR(3) >= 5 dB, ISNR(3) >= 1.5 dB",
        rsnr[2] >= 5.0 && isnr[2] >= 1.5,
        format!("RSNR {} dB, ISNR {} dB", fmt(&rsnr), fmt(&isnr)),
    );

    let rg = mean(g.iter().map(|r| r.disk_ratio));
    let rx = mean(x.iter().map(|r| r.disk_ratio));
    v.record(
        3,
        "held-out disk intensity ratio <= 0.15 (Gaussian) and <= 0.06 (X)",
        rg <= 0.15 && rx <= 0.06,
        format!("Gaussian {rg:.4}, X {rx:.4}"),
    );
}

fn noise_only_delta(v: &mut Verdicts) {
    let sc = SyntheticScenario::standard(FilterSpec::Delta { half_width: BORDER }, PATCHES, 0).unwrap();
    let stack = simulate_observations(&sc).unwrap();
    let config = SolverConfig { sigma: stack.sigma, border: BORDER, ..Default::default() };
    let ws = Workspace::new(&stack.observations, &stack.geoms, None, &config).unwrap();
    let out = iterative_rho(&ws, &config, None).unwrap();
    let rsnr = compute_rsnr(&FilterEstimate::delta(BORDER), &out.filter).unwrap();
    let shown = if rsnr == DB_SENTINEL { "exact".to_string() } else { format!("{rsnr:.1} dB") };
    v.record(4, "noise-only observations recover the delta filter, RSNR >= 40 dB", rsnr >= 40.0, shown);
}

fn oracle_suite(v: &mut Verdicts) {
    let checks = [
        ("fft vs direct", common::fft_vs_direct(50), 1e-10),
        ("adjoint", common::adjoint_dot_tests(50), 1e-10),
        ("simplex vs enumeration", common::simplex_vs_enumeration(100), 1e-9),
        ("moreau", common::moreau_identity(), 1e-12),
        ("udwt round trip", common::udwt_round_trip(), 1e-10),
        ("filter gradient vs fd", common::filter_gradient_vs_fd(20), 1e-6),
    ];
    let pass = checks.iter().all(|c| c.1 <= c.2);
    let detail = checks.iter().map(|c| format!("{} {:.1e}/{:.0e}", c.0, c.1, c.2)).collect::<Vec<_>>().join(", ");
    v.record(5, "oracle equivalence suite", pass, detail);
}

fn whiteness_calibration(v: &mut Verdicts) {
    let lag = SolverConfig::default().whiteness_lag;
    let values: Vec<f64> = (0..20u64)
        .map(|s| {
            let mut r = common::rng(9000 + s);
            let noise = Array2::from_shape_fn((256, 256), |_| StandardNormal.sample(&mut r));
            whiteness_measure(&[noise], lag).unwrap()
        })
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ramp = Array2::from_shape_fn((256, 256), |(i, j)| (i + j) as f64);
    let m_ramp = whiteness_measure(&[ramp], lag).unwrap();
    v.record(
        6,
        "white residuals give M in [-0.01, 0] over 20 seeds, a ramp gives M < -0.5",
        lo >= -0.01 && hi <= 0.0 && m_ramp < -0.5,
        format!("white range [{lo:.5}, {hi:.5}], ramp {m_ramp:.3}"),
    );
}

fn chernoff_bound(v: &mut Verdicts) {
    let np = PATCHES * 256 * 256;
    let sigma = 1.7;
    let bound = noise_bound(sigma, np, 2.0);
    let inside = (0..100u64)
        .into_par_iter()
        .filter(|&d| {
            let mut r = common::rng(20_000 + d);
            let energy: f64 = (0..np)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut r);
                    (sigma * e).powi(2)
                })
                .sum();
            energy < bound * bound
        })
        .count();
    v.record(7, "noise energy below the bound in >= 95 of 100 draws", inside >= 95, format!("{inside}/100"));
}

fn longrange_constant(v: &mut Verdicts) {
    let side = DEFAULT_TEXTURE_SIDE;
    let mut image = solar_texture(side, DEFAULT_TEXTURE_SEED);
    let center = (side as f64 / 2.0, side as f64 / 2.0);
    for i in disk_pixels(center, 48.0, side) {
        image[(i / side, i % side)] = 0.0;
    }
    let psf = power_law_psf(256, 2.0);
    let rep = longrange_constant_check(psf.view(), image.view(), 64, center, 10.0).unwrap();
    let rel = rep.relative_spread();
    v.record(
        8,
        "core-zeroed tail is nearly constant inside the disk, spread/mean < 0.1",
        rel < 0.1,
        format!("spread/mean {rel:.4} (mean {:.3})", rep.mean),
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filtered runs still expect a test binary
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut v = Verdicts::default();
    oracle_suite(&mut v);
    whiteness_calibration(&mut v);
    chernoff_bound(&mut v);
    longrange_constant(&mut v);
    noise_only_delta(&mut v);
    synthetic_criteria(&mut v);
    v.lines.sort_by_key(|l| l.0);
    println!();
    for l in &v.lines {
        println!("{}", l.2);
    }
    let failed = v.lines.iter().filter(|l| !l.1).count();
    println!("acceptance: {failed} of {} criteria failed ({:.0} s)", v.lines.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
