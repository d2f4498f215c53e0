//! Synthetic P-sweep on the bundled texture.
//!
//! `cargo run --release -p transit-deconv --example table1 -- [gaussian|x|delta] [seed] [patches]`
//!
//! `TABLE1_TOL` and `TABLE1_ROUNDS` override the inner tolerance and the ρ round
//! cap; `TABLE1_TRACE` dumps the filter-step trace.

use std::time::Instant;

use transit_deconv::blind::{warm_start_sweep, SolverConfig, Workspace};
use transit_deconv::nonblind::{compute_isnr, compute_rsnr};
use transit_deconv::simkit::{simulate_observations, FilterSpec, SyntheticScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let filter = match args.first().map(String::as_str) {
        Some("x") => FilterSpec::X { half_width: 16 },
        Some("delta") => FilterSpec::Delta { half_width: 16 },
        _ => FilterSpec::standard_gaussian(),
    };
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let patches: usize = args.get(2).map_or(Ok(3), |s| s.parse())?;

    let t0 = Instant::now();
    let sc = SyntheticScenario::standard(filter, patches, seed)?;
    let stack = simulate_observations(&sc)?;
    let mut config = SolverConfig { sigma: stack.sigma, border: 16, ..Default::default() };
    if let Ok(t) = std::env::var("TABLE1_TOL") {
        config.inner.tol = t.parse()?;
    }
    if let Ok(r) = std::env::var("TABLE1_ROUNDS") {
        config.max_rho_iter = r.parse()?;
    }
    let ws = Workspace::new(&stack.observations, &stack.geoms, None, &config)?;
    println!("setup {:.1}s sigma {:.3}", t0.elapsed().as_secs_f64(), stack.sigma);

    let truth = stack.truth_inner();
    let sweep = warm_start_sweep(&ws, &config)?;
    for (p, out) in sweep.iter().enumerate() {
        let rsnr = compute_rsnr(&stack.filter, &out.filter)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..=p {
            let est = ws.domain.crop(out.images[j].view());
            let y = stack.observations[j].data();
            num += (y - &truth[j]).iter().map(|v| v * v).sum::<f64>();
            den += (&est - &truth[j]).iter().map(|v| v * v).sum::<f64>();
        }
        let isnr = 10.0 * (num / den).log10();
        let first = compute_isnr(
            stack.observations[0].view(),
            ws.domain.crop(out.images[0].view()).view(),
            truth[0].view(),
        )?;
        let r = &out.report;
        println!(
            "P={} rsnr {rsnr:.2} isnr {isnr:.2} (first {first:.2}) white {:.4} rho {:.4e} rounds {} outer {} t {:.1}s",
            p + 1,
            r.whiteness,
            r.rho,
            r.rounds.len(),
            r.iterations.len(),
            r.wall_clock_s
        );
        for rec in &r.iterations {
            println!(
                "   l{} k{} rho {:.3e} lam {:.3e} obj {:.4e} res {:.2} white {:.4} cp {:?} apg {}",
                rec.round, rec.k, rec.rho, rec.lambda, rec.objective, rec.residual_norm, rec.whiteness, rec.cp_iterations, rec.apg_iterations
            );
        }
    }
    if std::env::var_os("TABLE1_TRACE").is_some() {
        for out in &sweep {
            for t in out.trace.iter().filter(|t| t.solver == "apg") {
                println!("   apg k{} t{} obj {:.6e} change {:.3e} step {:.3e}", t.k, t.t, t.objective, t.primal_change, t.step);
            }
        }
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
