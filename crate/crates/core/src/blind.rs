//! Outer loops of the blind estimator: proximal alternating minimization with
//! a whiteness stop, the iterative choice of ρ, and the σ and μ helpers.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{multiply, Fft2, Spectrum};
use crate::grid::{derive_omega, disk_pixels, prefilter_spectrum, ConvOperator, DiskGeometry, ExpandedDomain, FilterEstimate, ImagePatch};
use crate::prox::project_p0;
use crate::solvers::{
    solve_filter_step, solve_image_step, CpDuals, FilterProblem, ImageProblem, InnerOptions, TraceRecord,
};
use crate::wavelet::{build_theta, CoefficientSets, WaveletDictionary, THETA_DRAWS};

/// Radius of the disk inside the transit body used to estimate μ.
pub const MU_DISK_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Starting ρ; when absent the data-driven value `√2σ²/τ_Z` is used.
    pub rho0: Option<f64>,
    /// Per-outer-iteration decay Δ of the cost-to-move weights.
    pub decay: f64,
    pub max_iter: usize,
    pub max_rho_iter: usize,
    /// Noise standard deviation (DN).
    pub sigma: f64,
    /// Long-range constant subtracted from the observations (DN).
    pub mu: f64,
    /// Half-width L of the autocorrelation window of the whiteness measure.
    pub whiteness_lag: usize,
    /// Constant c of the noise bound `σ√(NP + c√(NP))`.
    pub noise_c: f64,
    pub rho_min: f64,
    /// Filter half-width b (also the unknown border width).
    pub border: usize,
    pub levels: usize,
    pub theta_draws: usize,
    pub theta_seed: u64,
    pub inner: InnerOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho0: None,
            decay: 0.75,
            max_iter: 20,
            max_rho_iter: 5,
            sigma: 0.0,
            mu: 0.0,
            whiteness_lag: 4,
            noise_c: 2.0,
            rho_min: 1e-12,
            border: 16,
            levels: WaveletDictionary::DEFAULT_LEVELS,
            theta_draws: THETA_DRAWS,
            theta_seed: 0,
            inner: InnerOptions::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if self.max_iter == 0 || self.max_rho_iter == 0 || self.inner.max_cp_iter == 0 || self.inner.max_apg_iter == 0 {
            return bad("iteration caps must be at least 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite".into());
        }
        if self.whiteness_lag == 0 {
            return bad("whiteness window L must be >= 1".into());
        }
        if let Some(r) = self.rho0 {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("rho0 must be finite and >= 0, got {r}"));
            }
        }
        if !(self.rho_min > 0.0) || !(self.inner.tol >= 0.0) || self.levels == 0 || self.theta_draws == 0 {
            return bad("rho_min > 0, tol >= 0, levels >= 1 and theta_draws >= 1 are required".into());
        }
        Ok(())
    }
}

/// Everything derived once from the observations: Z, geometry index sets,
/// dictionary, FFT plans and the optional parametric prefilter.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub domain: ExpandedDomain,
    pub fft: Arc<Fft2>,
    pub dict: WaveletDictionary,
    pub sets: CoefficientSets,
    /// Ω_j as flat indices into the expanded grid.
    pub zero_sets: Vec<Vec<usize>>,
    /// Ω_j as flat indices into the observed window.
    pub omegas: Vec<Vec<usize>>,
    /// Modified observations `z_j = y_j − μ`.
    pub z: Vec<Array2<f64>>,
    pub geoms: Vec<DiskGeometry>,
    pub prefilter: Option<Spectrum>,
}

impl Workspace {
    pub fn new(
        observations: &[ImagePatch],
        geoms: &[DiskGeometry],
        prefilter: Option<ArrayView2<f64>>,
        config: &SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        if observations.is_empty() {
            return Err(Error::Shape("at least one observation is required".into()));
        }
        if geoms.len() != observations.len() {
            return Err(Error::Geometry(format!(
                "{} observations but {} disk geometries",
                observations.len(),
                geoms.len()
            )));
        }
        let n = observations[0].side();
        if observations.iter().any(|o| o.side() != n) {
            return Err(Error::Shape("observations differ in size".into()));
        }
        let domain = ExpandedDomain::new(n, config.border);
        let m = domain.side();
        let fft = Arc::new(Fft2::new(m));
        let dict = WaveletDictionary::new(m, config.levels)?;
        let sets = build_theta(geoms, domain, &dict, config.theta_draws, config.theta_seed)?;
        let mut omegas = Vec::with_capacity(geoms.len());
        for g in geoms {
            omegas.push(derive_omega(g, n)?);
        }
        let zero_sets = omegas
            .iter()
            .map(|o| o.iter().map(|&i| domain.to_expanded_index(i)).collect())
            .collect();
        let z = observations.iter().map(|o| o.data() - config.mu).collect();
        let prefilter = match prefilter {
            Some(p) => Some(prefilter_spectrum(&fft, p)?),
            None => None,
        };
        Ok(Self { domain, fft, dict, sets, zero_sets, omegas, z, geoms: geoms.to_vec(), prefilter })
    }

    pub fn count(&self) -> usize {
        self.z.len()
    }

    /// Same workspace restricted to the first `p` observations.
    pub fn prefix(&self, p: usize) -> Result<Self> {
        if p == 0 || p > self.count() {
            return Err(Error::Config(format!("cannot take {p} of {} observations", self.count())));
        }
        let mut w = self.clone();
        w.z.truncate(p);
        w.zero_sets.truncate(p);
        w.omegas.truncate(p);
        w.geoms.truncate(p);
        w.sets.theta.truncate(p);
        Ok(w)
    }

    /// Trivial start: `X₀ = P₀(Z)` (border replicated) and `h₀ = δ`.
    pub fn trivial_init(&self) -> (Vec<Array2<f64>>, FilterEstimate) {
        let images = self.z.iter().zip(&self.zero_sets).map(|(z, zs)| self.init_image(z, zs)).collect();
        (images, FilterEstimate::delta(self.domain.border))
    }

    fn init_image(&self, z: &Array2<f64>, zero_set: &[usize]) -> Array2<f64> {
        let mut x = self.domain.replicate_pad(z.view());
        project_p0(&mut x, zero_set);
        x
    }

    pub fn operator(&self, h: &FilterEstimate) -> Result<ConvOperator> {
        ConvOperator::new(self.domain, self.fft.clone(), h, self.prefilter.as_ref())
    }

    /// `R = Z − S_N Φ(h) X`, one `n × n` residual per observation.
    pub fn residuals(&self, images: &[Array2<f64>], h: &FilterEstimate) -> Result<Vec<Array2<f64>>> {
        let op = self.operator(h)?;
        images.iter().zip(&self.z).map(|(x, z)| Ok(z - &op.apply(x.view())?)).collect()
    }

    /// `τ_Z = √2 Σ_j ‖S_Θj Ψᵀ z_j‖₁ / Σ_j |Θ_j|`.
    pub fn tau_z(&self) -> Result<f64> {
        let q = self.sets.theta_total();
        if q == 0 {
            return Err(Error::Degenerate("Θ is empty; the disk or border covers every detail coefficient".into()));
        }
        let mut l1 = 0.0;
        for (z, mask) in self.z.iter().zip(&self.sets.theta) {
            let c = self.dict.analyze(self.domain.zero_pad(z.view()).view())?;
            l1 += mask.l1(&c);
        }
        Ok(std::f64::consts::SQRT_2 * l1 / q as f64)
    }

    /// Total number of observed pixels `NP`.
    pub fn observed_pixels(&self) -> usize {
        self.domain.inner * self.domain.inner * self.count()
    }
}

/// `ε = σ√(NP + c√(NP))`.
pub fn noise_bound(sigma: f64, np: usize, c: f64) -> f64 {
    let np = np as f64;
    sigma * (np + c * np.sqrt()).sqrt()
}

/// Negative energy of the off-origin autocorrelation of each residual within
/// a `(2L+1)²` window, averaged over residuals. Each residual is normalized
/// to zero mean and unit variance; the autocorrelation is circular with the
/// biased normalization, so `C(0,0) = 1`. A constant residual yields −∞.
pub fn whiteness_measure(residuals: &[Array2<f64>], lag: usize) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::Shape("whiteness needs at least one residual".into()));
    }
    let n = residuals[0].nrows();
    if residuals.iter().any(|r| r.dim() != (n, n)) {
        return Err(Error::Shape("residuals must be square and equally sized".into()));
    }
    let fft = Fft2::new(n);
    let count = (n * n) as f64;
    let lag = lag.min(n / 2) as isize;
    let mut total = 0.0;
    for r in residuals {
        let mean = r.sum() / count;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        if !(var > 0.0) || !var.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let sd = var.sqrt();
        let normed = r.mapv(|v| (v - mean) / sd);
        let s = fft.forward(normed.view())?;
        let ac = fft.inverse(multiply(&s, &s, true))? / count;
        let mut e = 0.0;
        for dr in -lag..=lag {
            for dc in -lag..=lag {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let i = dr.rem_euclid(n as isize) as usize;
                let j = dc.rem_euclid(n as isize) as usize;
                e += ac[(i, j)] * ac[(i, j)];
            }
        }
        total -= e;
    }
    Ok(total / residuals.len() as f64)
}

/// Mean over radius-`inner_radius` disks at each transit center, averaged
/// over patches.
pub fn estimate_mu(patches: &[ImagePatch], geoms: &[DiskGeometry], inner_radius: f64) -> Result<f64> {
    if patches.is_empty() || patches.len() != geoms.len() {
        return Err(Error::Geometry("one geometry per patch is required to estimate mu".into()));
    }
    let mut acc = 0.0;
    for (p, g) in patches.iter().zip(geoms) {
        if g.radius < inner_radius {
            return Err(Error::Geometry(format!(
                "disk radius {} is smaller than the mu window {inner_radius}",
                g.radius
            )));
        }
        g.check_fits(p.side())?;
        let px = disk_pixels(g.center, inner_radius, p.side());
        let flat = p.data().as_slice().expect("standard layout");
        acc += px.iter().map(|&i| flat[i]).sum::<f64>() / px.len() as f64;
    }
    Ok(acc / patches.len() as f64)
}

/// One outer iteration of the alternating scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    /// ρ round (1-based).
    pub round: usize,
    /// Outer iteration within the round (1-based).
    pub k: usize,
    pub rho: f64,
    /// Cost-to-move weight used in this iteration.
    pub lambda: f64,
    /// `ρ Σ‖S_Θ Ψᵀ x_j‖₁ + ½‖R‖²` after the iteration.
    pub objective: f64,
    pub residual_norm: f64,
    pub whiteness: f64,
    pub cp_iterations: Vec<usize>,
    pub apg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub rho: f64,
    pub residual_norm: f64,
    pub whiteness: f64,
    pub best_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCandidate {
    pub multiplier: f64,
    pub sigma: f64,
    pub whiteness: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub iterations: Vec<OuterRecord>,
    pub rounds: Vec<RoundRecord>,
    pub sigma: f64,
    pub sigma_rme: Option<f64>,
    pub sigma_candidates: Vec<SigmaCandidate>,
    pub mu: f64,
    /// Noise bound ε the ρ updates aim for.
    pub epsilon: f64,
    pub rho_initial: f64,
    /// ρ of the returned round.
    pub rho: f64,
    /// ρ the next round would have used; the warm-start seed for larger P.
    pub rho_next: f64,
    pub whiteness: f64,
    pub wall_clock_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<serde_json::Value>,
}

/// Estimated images (expanded grid) and filter with the run report.
#[derive(Debug, Clone)]
pub struct BlindOutcome {
    pub images: Vec<Array2<f64>>,
    pub filter: FilterEstimate,
    pub report: RunReport,
    pub trace: Vec<TraceRecord>,
}

/// Result of a single run of the alternating scheme at fixed ρ.
#[derive(Debug, Clone)]
pub struct AlternatingOutcome {
    pub images: Vec<Array2<f64>>,
    pub filter: FilterEstimate,
    pub whiteness: f64,
    pub residual_norm: f64,
    /// 1-based index of the returned outer iterate.
    pub best_k: usize,
    pub records: Vec<OuterRecord>,
    pub trace: Vec<TraceRecord>,
}

fn relative_change(new: ArrayView2<f64>, old: ArrayView2<f64>) -> f64 {
    let mut d = 0.0;
    let mut s = 0.0;
    ndarray::Zip::from(new).and(old).for_each(|a, b| {
        d += (a - b) * (a - b);
        s += a * a;
    });
    if s > 0.0 {
        (d / s).sqrt()
    } else {
        d.sqrt()
    }
}

/// Proximal alternating minimization at fixed ρ.
///
/// Each outer iteration runs the image step then the filter step, both with
/// cost-to-move weight λ, then shrinks λ by Δ. The loop ends at `max_iter`,
/// when the residual whiteness drops, or when neither block moves; the
/// iterate with the largest whiteness is returned. `duals` carries the
/// primal–dual state between calls.
pub fn alternating_minimization(
    ws: &Workspace,
    config: &SolverConfig,
    rho: f64,
    x0: &[Array2<f64>],
    h0: &FilterEstimate,
    duals: &mut CpDuals,
    round: usize,
) -> Result<AlternatingOutcome> {
    config.validate()?;
    let p = ws.count();
    if x0.len() != p {
        return Err(Error::Shape(format!("{} initial images for {p} observations", x0.len())));
    }
    if h0.half_width() != ws.domain.border {
        return Err(Error::Filter(format!(
            "initial filter half-width {} differs from b = {}",
            h0.half_width(),
            ws.domain.border
        )));
    }
    let mut images: Vec<Array2<f64>> = x0.to_vec();
    let mut filter = h0.clone();
    let mut lambda = rho;
    let mut records = Vec::new();
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, Vec<Array2<f64>>, FilterEstimate, f64)> = None;
    let mut prev_white = f64::NAN;

    for k in 1..=config.max_iter {
        let op = ws.operator(&filter)?;
        let problem = ImageProblem {
            dict: &ws.dict,
            op: &op,
            observations: &ws.z,
            masks: &ws.sets.theta,
            zero_sets: &ws.zero_sets,
            rho,
            lambda,
            anchors: &images,
        };
        let img = solve_image_step(&problem, &images, duals, &config.inner, k)?;
        trace.extend(img.trace);

        let fp = FilterProblem::new(ws.domain, ws.fft.clone(), &ws.z, &img.images, ws.prefilter.as_ref(), &filter, lambda)?;
        let flt = solve_filter_step(&fp, &filter, &config.inner, k)?;
        trace.extend(flt.trace);

        let dx = img
            .images
            .iter()
            .zip(&images)
            .map(|(a, b)| relative_change(a.view(), b.view()))
            .fold(0.0, f64::max);
        let dh = relative_change(flt.filter.data().view(), filter.data().view());
        images = img.images;
        filter = flt.filter;
        let used_lambda = lambda;
        lambda *= config.decay;

        let res = ws.residuals(&images, &filter)?;
        let residual_norm = res.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        let white = whiteness_measure(&res, config.whiteness_lag)?;
        let mut sparsity = 0.0;
        for (x, mask) in images.iter().zip(&ws.sets.theta) {
            sparsity += mask.l1(&ws.dict.analyze(x.view())?);
        }
        let objective = rho * sparsity + 0.5 * residual_norm * residual_norm;
        if !objective.is_finite() {
            return Err(Error::Numerical {
                solver: "alternating minimization",
                iteration: k,
                reason: "non-finite outer objective".into(),
                trace: records.iter().map(|r: &OuterRecord| r.objective).collect(),
            });
        }
        records.push(OuterRecord {
            round,
            k,
            rho,
            lambda: used_lambda,
            objective,
            residual_norm,
            whiteness: white,
            cp_iterations: img.iterations,
            apg_iterations: flt.iterations,
        });
        if best.as_ref().is_none_or(|b| white > b.0) {
            best = Some((white, k, images.clone(), filter.clone(), residual_norm));
        }
        // spectrally whiter residuals stop improving
        if k > 1 && white < prev_white {
            break;
        }
        if dx <= config.inner.tol && dh <= config.inner.tol {
            break;
        }
        prev_white = white;
    }
    let (whiteness, best_k, images, filter, residual_norm) = best.expect("max_iter >= 1");
    Ok(AlternatingOutcome { images, filter, whiteness, residual_norm, best_k, records, trace })
}

/// Warm-start state for a run on a grown observation stack.
#[derive(Debug, Clone)]
pub struct WarmStart {
    /// Expanded images of the first observations; missing ones start trivially.
    pub images: Vec<Array2<f64>>,
    pub filter: FilterEstimate,
    pub rho: f64,
}

/// Iterative estimation of ρ around the alternating scheme.
///
/// Starts at `√2σ²/τ_Z` (or the configured/warm value), and after each round
/// rescales ρ by `ε/‖R‖_F`, where `ε` is the noise bound. Rounds stop when the
/// whiteness of the round's result drops; the best round is returned.
pub fn iterative_rho(ws: &Workspace, config: &SolverConfig, warm: Option<&WarmStart>) -> Result<BlindOutcome> {
    config.validate()?;
    let start = Instant::now();
    let sigma = config.sigma;
    let epsilon = noise_bound(sigma, ws.observed_pixels(), config.noise_c);
    let (mut images, mut filter) = ws.trivial_init();
    let mut rho = match (warm, config.rho0) {
        (Some(w), _) => w.rho,
        (None, Some(r)) => r,
        (None, None) => {
            let tau = ws.tau_z()?;
            if !(tau > 0.0) {
                return Err(Error::Degenerate("tau_Z is zero: observations carry no detail outside the disk".into()));
            }
            std::f64::consts::SQRT_2 * sigma * sigma / tau
        }
    };
    if let Some(w) = warm {
        if w.images.len() > images.len() {
            return Err(Error::Shape("warm start holds more images than observations".into()));
        }
        for (dst, src) in images.iter_mut().zip(&w.images) {
            if src.dim() != dst.dim() {
                return Err(Error::Shape("warm-start image size differs from the expanded grid".into()));
            }
            dst.assign(src);
        }
        filter = w.filter.clone();
    }
    rho = rho.max(config.rho_min);
    let rho_initial = rho;

    let mut duals = CpDuals::zeros(ws.count(), &ws.dict, ws.domain.inner);
    let mut report = RunReport { sigma, mu: config.mu, epsilon, rho_initial, ..Default::default() };
    let mut trace = Vec::new();
    let mut best: Option<(AlternatingOutcome, f64, f64)> = None;

    for round in 1..=config.max_rho_iter {
        let am = alternating_minimization(ws, config, rho, &images, &filter, &mut duals, round)?;
        report.iterations.extend(am.records.iter().cloned());
        trace.extend(am.trace.iter().cloned());
        report.rounds.push(RoundRecord {
            round,
            rho,
            residual_norm: am.residual_norm,
            whiteness: am.whiteness,
            best_k: am.best_k,
        });
        let prev_white = best.as_ref().map(|b| b.0.whiteness);
        let next_rho = if am.residual_norm > 0.0 {
            (rho * epsilon / am.residual_norm).max(config.rho_min)
        } else {
            rho
        };
        images = am.images.clone();
        filter = am.filter.clone();
        let worse = prev_white.is_some_and(|w| am.whiteness < w);
        if !worse {
            best = Some((am, rho, next_rho));
        }
        if worse || next_rho == rho {
            break;
        }
        rho = next_rho;
    }
    let (am, rho_best, rho_next) = best.expect("max_rho_iter >= 1");
    report.rho = rho_best;
    report.rho_next = rho_next;
    report.whiteness = am.whiteness;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(BlindOutcome { images: am.images, filter: am.filter, report, trace })
}

/// Runs [`iterative_rho`] for `σ = m·σ_RME` over the multipliers and keeps
/// the run with the whitest final residual.
pub fn adaptive_sigma(
    ws: &Workspace,
    config: &SolverConfig,
    sigma_rme: f64,
    multipliers: &[f64],
    warm: Option<&WarmStart>,
) -> Result<BlindOutcome> {
    if multipliers.is_empty() || multipliers.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
        return Err(Error::Config("sigma multipliers must be a non-empty list of finite values >= 0".into()));
    }
    let runs: Vec<Result<BlindOutcome>> = multipliers
        .par_iter()
        .map(|&m| {
            let cfg = SolverConfig { sigma: m * sigma_rme, ..config.clone() };
            iterative_rho(ws, &cfg, warm)
        })
        .collect();
    let mut candidates = Vec::with_capacity(runs.len());
    let mut best: Option<BlindOutcome> = None;
    for (r, &m) in runs.into_iter().zip(multipliers) {
        let out = r?;
        candidates.push(SigmaCandidate {
            multiplier: m,
            sigma: out.report.sigma,
            whiteness: out.report.whiteness,
            rho: out.report.rho,
        });
        if best.as_ref().is_none_or(|b| out.report.whiteness > b.report.whiteness) {
            best = Some(out);
        }
    }
    let mut out = best.expect("non-empty multipliers");
    out.report.sigma_rme = Some(sigma_rme);
    out.report.sigma_candidates = candidates;
    Ok(out)
}

/// Runs the estimator on the first 1, 2, …, P observations in turn, each run
/// warm-started from the previous one (images, filter and ρ).
pub fn warm_start_sweep(ws: &Workspace, config: &SolverConfig) -> Result<Vec<BlindOutcome>> {
    let mut outs: Vec<BlindOutcome> = Vec::with_capacity(ws.count());
    for p in 1..=ws.count() {
        let sub = ws.prefix(p)?;
        let warm = outs.last().map(|o| WarmStart {
            images: o.images.clone(),
            filter: o.filter.clone(),
            rho: o.report.rho,
        });
        outs.push(iterative_rho(&sub, config, warm.as_ref())?);
    }
    Ok(outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn white_noise_is_nearly_white() {
        let m = whiteness_measure(&[gaussian(128, 1)], 4).unwrap();
        assert!(m <= 0.0 && m > -0.02, "{m}");
    }

    #[test]
    fn ramp_is_strongly_correlated() {
        let r = Array2::from_shape_fn((64, 64), |(i, j)| i as f64 + j as f64);
        assert!(whiteness_measure(&[r], 4).unwrap() < -0.5);
        let flat = Array2::from_elem((16, 16), 2.0);
        assert_eq!(whiteness_measure(&[flat], 4).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn whiteness_is_invariant_to_affine_rescaling() {
        let r = gaussian(32, 5);
        let a = whiteness_measure(&[r.clone()], 3).unwrap();
        let b = whiteness_measure(&[r.mapv(|v| 7.0 * v - 3.0)], 3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn noise_bound_formula() {
        assert_eq!(noise_bound(0.0, 100, 2.0), 0.0);
        assert!((noise_bound(2.0, 100, 2.0) - 2.0 * 120f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mu_estimate() {
        let g = DiskGeometry::new((20.0, 20.0), 12.0).unwrap();
        let mut a = Array2::from_elem((41, 41), 100.0);
        for &i in &disk_pixels((20.0, 20.0), 11.0, 41) {
            a[(i / 41, i % 41)] = 43.3;
        }
        let p = ImagePatch::new(a).unwrap();
        assert!((estimate_mu(&[p.clone(), p.clone()], &[g, g], 10.0).unwrap() - 43.3).abs() < 1e-12);
        let z = ImagePatch::new(Array2::zeros((41, 41))).unwrap();
        assert_eq!(estimate_mu(&[z], &[g], 10.0).unwrap(), 0.0);
        let small = DiskGeometry::new((20.0, 20.0), 5.0).unwrap();
        assert!(estimate_mu(&[p], &[small], 10.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { decay: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { sigma: -1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { whiteness_lag: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { max_iter: 0, ..Default::default() }.validate().is_err());
    }
}
