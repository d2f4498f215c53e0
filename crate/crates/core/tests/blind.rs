mod common;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use common::{small_gaussian, small_scenario};
use transit_deconv::blind::{
    adaptive_sigma, alternating_minimization, iterative_rho, warm_start_sweep, BlindOutcome, SolverConfig, Workspace,
};
use transit_deconv::grid::{DiskGeometry, FilterEstimate, SIMPLEX_TOL};
use transit_deconv::prox::project_p0;
use transit_deconv::simkit::{simulate_observations, FilterSpec, SimulatedStack};
use transit_deconv::solvers::CpDuals;
use transit_deconv::wavelet::{estimate_sigma_rme, WaveletDictionary};
use transit_deconv::ImagePatch;

fn config(sigma: f64) -> SolverConfig {
    SolverConfig { sigma, border: 3, max_iter: 6, max_rho_iter: 3, ..Default::default() }
}

fn workspace(stack: &SimulatedStack, cfg: &SolverConfig) -> Workspace {
    Workspace::new(&stack.observations, &stack.geoms, None, cfg).unwrap()
}

fn assert_feasible(out: &BlindOutcome, ws: &Workspace) {
    let h = out.filter.data();
    assert!(h.iter().all(|&v| v >= 0.0));
    assert!((h.sum() - 1.0).abs() <= SIMPLEX_TOL);
    for (x, zero) in out.images.iter().zip(&ws.zero_sets) {
        assert!(x.iter().all(|&v| v >= 0.0));
        let flat = x.as_slice().unwrap();
        assert!(zero.iter().all(|&i| flat[i] == 0.0));
    }
}

#[test]
fn noiseless_identity_blur_is_a_fixed_point() {
    let stack = simulate_observations(&small_scenario(FilterSpec::Delta { half_width: 3 }, 2, None, 0)).unwrap();
    let cfg = config(0.0);
    let ws = workspace(&stack, &cfg);
    let x0: Vec<Array2<f64>> = ws
        .z
        .iter()
        .zip(&ws.zero_sets)
        .map(|(z, zero)| {
            let mut x = ws.domain.replicate_pad(z.view());
            project_p0(&mut x, zero);
            x
        })
        .collect();
    let delta = FilterEstimate::delta(3);
    let mut duals = CpDuals::zeros(ws.count(), &ws.dict, ws.domain.inner);
    let out = alternating_minimization(&ws, &cfg, cfg.rho_min, &x0, &delta, &mut duals, 1).unwrap();
    assert!(out.records.len() <= 2, "{} outer iterations", out.records.len());
    let dh = (out.filter.data() - delta.data()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(dh < 1e-9, "filter moved by {dh}");
    for (x, z) in out.images.iter().zip(&ws.z) {
        let err = (&ws.domain.crop(x.view()) - z).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-6 * z.iter().fold(0.0f64, |m, v| m.max(*v)), "image moved by {err}");
    }
}

#[test]
fn zero_sigma_clamps_rho_and_fits_the_data() {
    let stack = simulate_observations(&small_scenario(small_gaussian(), 2, None, 0)).unwrap();
    let cfg = SolverConfig { max_iter: 4, max_rho_iter: 2, ..config(0.0) };
    let ws = workspace(&stack, &cfg);
    let out = iterative_rho(&ws, &cfg, None).unwrap();
    assert_eq!(out.report.epsilon, 0.0);
    assert_eq!(out.report.rho_initial, cfg.rho_min);
    assert!(out.report.rounds.iter().all(|r| r.rho == cfg.rho_min));
    let z_norm = ws.z.iter().map(|z| z.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    let res = out.report.rounds.iter().map(|r| r.residual_norm).fold(f64::INFINITY, f64::min);
    assert!(res < 0.05 * z_norm, "residual {res} against |Z| {z_norm}");
    assert_feasible(&out, &ws);
}

#[test]
fn pure_noise_keeps_rho_near_its_start() {
    let n = 64;
    let sigma = 3.0;
    let geoms = vec![DiskGeometry::new((32.0, 32.0), 10.0).unwrap(); 2];
    let patches: Vec<ImagePatch> = (0..2)
        .map(|j| {
            let mut r = common::rng(700 + j);
            ImagePatch::new(Array2::from_shape_fn((n, n), |_| {
                let e: f64 = StandardNormal.sample(&mut r);
                sigma * e
            }))
            .unwrap()
        })
        .collect();
    let cfg = SolverConfig { max_rho_iter: 5, ..config(sigma) };
    let ws = Workspace::new(&patches, &geoms, None, &cfg).unwrap();
    let out = iterative_rho(&ws, &cfg, None).unwrap();
    let rho1 = out.report.rho_initial;
    for r in &out.report.rounds {
        assert!(r.rho >= rho1 / 2.0 && r.rho <= 2.0 * rho1, "rho {} vs start {rho1}", r.rho);
    }
    assert_feasible(&out, &ws);
}

#[test]
fn single_sigma_candidate_is_returned_unconditionally() {
    let stack = simulate_observations(&small_scenario(small_gaussian(), 2, Some(30.0), 1)).unwrap();
    let cfg = SolverConfig { max_iter: 3, max_rho_iter: 2, ..config(0.0) };
    let ws = workspace(&stack, &cfg);
    let dict = WaveletDictionary::new(48, cfg.levels).unwrap();
    let rme = estimate_sigma_rme(&stack.observations[0], &dict).unwrap();
    let adaptive = adaptive_sigma(&ws, &cfg, rme, &[1.0], None).unwrap();
    let direct = iterative_rho(&ws, &SolverConfig { sigma: rme, ..cfg.clone() }, None).unwrap();
    assert_eq!(adaptive.filter, direct.filter);
    assert_eq!(adaptive.report.sigma_candidates.len(), 1);
    assert_eq!(adaptive.report.sigma_rme, Some(rme));
    assert!(adaptive_sigma(&ws, &cfg, rme, &[], None).is_err());
}

#[test]
fn schedule_best_iterate_and_feasibility() {
    let stack = simulate_observations(&small_scenario(small_gaussian(), 2, Some(30.0), 2)).unwrap();
    let cfg = config(stack.sigma);
    let ws = workspace(&stack, &cfg);
    let out = iterative_rho(&ws, &cfg, None).unwrap();
    let r = &out.report;
    assert!(!r.rounds.is_empty());
    for round in &r.rounds {
        let recs: Vec<_> = r.iterations.iter().filter(|o| o.round == round.round).collect();
        for (i, rec) in recs.iter().enumerate() {
            assert_eq!(rec.k, i + 1);
            assert_eq!(rec.rho, round.rho);
            let want = round.rho * cfg.decay.powi(i as i32);
            assert!((rec.lambda - want).abs() <= 1e-14 * want, "lambda {} vs {want}", rec.lambda);
        }
        // the round reports its whitest iterate
        let best = recs.iter().map(|o| o.whiteness).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(round.whiteness, best);
        assert_eq!(recs[round.best_k - 1].whiteness, best);
    }
    for w in r.rounds.windows(2) {
        assert_eq!(w[1].rho, w[0].rho * r.epsilon / w[0].residual_norm);
    }
    let best_round = r.rounds.iter().map(|o| o.whiteness).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.whiteness, best_round);
    let res = ws.residuals(&out.images, &out.filter).unwrap();
    let norm = res.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    let chosen = r.rounds.iter().find(|o| o.whiteness == r.whiteness).unwrap();
    assert!((norm - chosen.residual_norm).abs() <= 1e-9 * norm);
    assert_feasible(&out, &ws);
}

#[test]
fn warm_start_sweep_grows_the_stack() {
    let stack = simulate_observations(&small_scenario(small_gaussian(), 3, Some(30.0), 3)).unwrap();
    let cfg = SolverConfig { max_iter: 3, max_rho_iter: 2, ..config(stack.sigma) };
    let ws = workspace(&stack, &cfg);
    let outs = warm_start_sweep(&ws, &cfg).unwrap();
    assert_eq!(outs.len(), 3);
    for (p, out) in outs.iter().enumerate() {
        assert_eq!(out.images.len(), p + 1);
        assert_feasible(out, &ws.prefix(p + 1).unwrap());
    }
    // each run starts from the previous run's ρ
    for w in outs.windows(2) {
        assert_eq!(w[1].report.rho_initial, w[0].report.rho);
    }
}

#[test]
fn adaptive_sigma_recovers_the_simulated_noise_level() {
    let stack = simulate_observations(&small_scenario(small_gaussian(), 3, Some(30.0), 4)).unwrap();
    let cfg = config(0.0);
    let ws = workspace(&stack, &cfg);
    let out = adaptive_sigma(&ws, &cfg, stack.sigma, &[0.5, 1.0, 2.0], None).unwrap();
    let picked = out.report.sigma_candidates.iter().find(|c| c.whiteness == out.report.whiteness).unwrap();
    assert_eq!(picked.multiplier, 1.0, "{:?}", out.report.sigma_candidates);
}
