use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use transit_deconv::blind::{
    adaptive_sigma, estimate_mu, iterative_rho, BlindOutcome, RunReport, SolverConfig, WarmStart, Workspace,
    MU_DISK_RADIUS,
};
use transit_deconv::grid::{derive_omega, disk_pixels};
use transit_deconv::io::{read_array, write_array, write_pgm, write_profile_csv, PgmScale};
use transit_deconv::nonblind::{
    bsnr, compute_isnr, compute_rsnr, deconvolve_adaptive, disk_intensity_ratio, DeconvSettings, MetricSet,
    RHO_BASE_FRACTION,
};
use transit_deconv::simkit::{longrange_constant_check, power_law_psf, simulate_observations, solar_texture, SyntheticScenario};
use transit_deconv::wavelet::{estimate_sigma_rme, WaveletDictionary};
use transit_deconv::{DiskGeometry, FilterEstimate, ImagePatch};

use crate::config::{GeometrySpec, Mode, MuSource, PipelineConfig, SigmaSource};
use crate::CliError;

pub const MANIFEST_NAME: &str = "scenario.json";
pub const REPORT_NAME: &str = "RunReport.json";

/// One simulated cutout; stems are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPatch {
    pub observation: PathBuf,
    pub truth: PathBuf,
    pub geometry: GeometrySpec,
}

/// Written by `simulate`, readable as `inputs.manifest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: SyntheticScenario,
    pub sigma: f64,
    /// Realised BSNR; absent for noiseless data.
    pub bsnr_db: Option<f64>,
    pub filter: PathBuf,
    pub patches: Vec<ManifestPatch>,
    pub held_out: Option<ManifestPatch>,
}

/// Runs the configured mode and returns a one-line JSON summary.
pub fn run(cfg: &PipelineConfig) -> Result<serde_json::Value, CliError> {
    let mode = cfg.mode.ok_or_else(|| CliError::config("config_error", "no mode selected"))?;
    fs::create_dir_all(&cfg.out_dir)?;
    match mode {
        Mode::Simulate => simulate(cfg),
        Mode::Blind => blind(cfg),
        Mode::Deconv => deconv(cfg),
        Mode::Validate => validate(cfg),
        Mode::LongrangeCheck => longrange(cfg),
    }
}

/// Inputs after the manifest has filled in whatever the config left empty.
#[derive(Debug, Default)]
struct Resolved {
    observations: Vec<PathBuf>,
    geometry: Vec<GeometrySpec>,
    truth: Vec<PathBuf>,
    truth_filter: Option<PathBuf>,
    held_out: Option<PathBuf>,
    held_out_geometry: Option<GeometrySpec>,
    held_out_truth: Option<PathBuf>,
}

fn resolve(cfg: &PipelineConfig) -> Result<Resolved, CliError> {
    let i = &cfg.inputs;
    let mut r = Resolved {
        observations: i.observations.clone(),
        geometry: i.geometry.clone(),
        truth: i.truth.clone(),
        truth_filter: i.truth_filter.clone(),
        held_out: i.held_out.clone(),
        held_out_geometry: i.held_out_geometry,
        held_out_truth: i.held_out_truth.clone(),
    };
    if let Some(path) = &i.manifest {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config("missing_input", format!("cannot read manifest {}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if r.observations.is_empty() {
            r.observations = m.patches.iter().map(|p| dir.join(&p.observation)).collect();
            r.truth = m.patches.iter().map(|p| dir.join(&p.truth)).collect();
        }
        if r.geometry.is_empty() {
            r.geometry = m.patches.iter().map(|p| p.geometry).collect();
        }
        r.truth_filter.get_or_insert_with(|| dir.join(&m.filter));
        if let Some(h) = &m.held_out {
            r.held_out.get_or_insert_with(|| dir.join(&h.observation));
            r.held_out_geometry.get_or_insert(h.geometry);
            r.held_out_truth.get_or_insert_with(|| dir.join(&h.truth));
        }
    }
    Ok(r)
}

fn load(stem: &Path) -> Result<Array2<f64>, CliError> {
    let data = transit_deconv::io::array_paths(stem).0;
    if !data.exists() {
        return Err(CliError::config("missing_input", format!("{} does not exist", data.display())));
    }
    Ok(read_array(stem)?)
}

fn load_patch(stem: &Path) -> Result<ImagePatch, CliError> {
    Ok(ImagePatch::new(load(stem)?)?)
}

fn load_filter(stem: &Path) -> Result<FilterEstimate, CliError> {
    Ok(FilterEstimate::new(load(stem)?)?)
}

fn load_prefilter(cfg: &PipelineConfig) -> Result<Option<Array2<f64>>, CliError> {
    cfg.prefilter.as_deref().map(load).transpose()
}

fn geometries(specs: &[GeometrySpec], count: usize) -> Result<Vec<DiskGeometry>, CliError> {
    if specs.is_empty() {
        return Err(CliError::config("geometry_missing", "no disk geometry was given for the observations"));
    }
    if specs.len() != count {
        return Err(CliError::config(
            "geometry_mismatch",
            format!("{count} observations but {} disk geometries", specs.len()),
        ));
    }
    specs.iter().map(GeometrySpec::build).collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn simulate(cfg: &PipelineConfig) -> Result<serde_json::Value, CliError> {
    let scenario = cfg.scenario()?;
    if cfg.simulate.held_out && scenario.origins.len() < 2 {
        return Err(CliError::config("config_error", "a held-out patch needs at least two cutouts"));
    }
    let stack = simulate_observations(&scenario)?;
    let out = &cfg.out_dir;
    write_array(&out.join("h_GT"), stack.filter.data().view())?;
    let truth = stack.truth_inner();
    let mut patches = Vec::new();
    for (j, (y, x)) in stack.observations.iter().zip(&truth).enumerate() {
        let (obs, gt) = (PathBuf::from(format!("Y_{j}")), PathBuf::from(format!("X_GT_{j}")));
        write_array(&out.join(&obs), y.view())?;
        write_array(&out.join(&gt), x.view())?;
        if cfg.emit_pgm {
            write_pgm(&out.join(format!("Y_{j}.pgm")), y.view(), PgmScale::Linear)?;
            write_pgm(&out.join(format!("X_GT_{j}.pgm")), x.view(), PgmScale::Linear)?;
        }
        patches.push(ManifestPatch { observation: obs, truth: gt, geometry: stack.geoms[j].into() });
    }
    if cfg.emit_pgm {
        write_pgm(&out.join("h_GT.pgm"), stack.filter.data().view(), PgmScale::Linear)?;
        write_pgm(&out.join("h_GT_log.pgm"), stack.filter.data().view(), PgmScale::Log)?;
    }
    let held_out = if cfg.simulate.held_out { patches.pop() } else { None };
    let manifest = Manifest {
        bsnr_db: Some(bsnr(&stack.blurred, stack.sigma)).filter(|v| v.is_finite()),
        scenario,
        sigma: stack.sigma,
        filter: PathBuf::from("h_GT"),
        patches,
        held_out,
    };
    write_json(&out.join(MANIFEST_NAME), &manifest)?;
    Ok(serde_json::json!({
        "status": "ok",
        "manifest": out.join(MANIFEST_NAME),
        "patches": manifest.patches.len(),
        "sigma": manifest.sigma,
        "bsnr_db": manifest.bsnr_db,
    }))
}

fn resolve_mu(cfg: &PipelineConfig, patches: &[ImagePatch], geoms: &[DiskGeometry]) -> Result<f64, CliError> {
    match cfg.mu {
        MuSource::Fixed(v) => Ok(v),
        MuSource::Estimate => Ok(estimate_mu(patches, geoms, MU_DISK_RADIUS)?),
    }
}

fn mean_sigma_rme(patches: &[ImagePatch], levels: usize) -> Result<f64, CliError> {
    let dict = WaveletDictionary::new(patches[0].side(), levels)?;
    let mut total = 0.0;
    for p in patches {
        total += estimate_sigma_rme(p, &dict)?;
    }
    Ok(total / patches.len() as f64)
}

fn estimate(ws: &Workspace, cfg: &SolverConfig, sigma: &SigmaSource, rme: Option<f64>, warm: Option<&WarmStart>) -> Result<BlindOutcome, CliError> {
    let out = match (sigma, rme) {
        (SigmaSource::Adaptive(m), Some(r)) => adaptive_sigma(ws, cfg, r, m, warm)?,
        _ => {
            let mut o = iterative_rho(ws, cfg, warm)?;
            o.report.sigma_rme = rme;
            o
        }
    };
    Ok(out)
}

struct Truth {
    images: Vec<Array2<f64>>,
    filter: Option<FilterEstimate>,
}

/// ISNR pooled over the patches a run used, and RSNR of the filter.
fn blind_metrics(out: &BlindOutcome, ws: &Workspace, patches: &[ImagePatch], truth: &Truth) -> Result<Option<serde_json::Value>, CliError> {
    let mut metrics = MetricSet::default();
    let count = out.images.len();
    if truth.images.len() >= count {
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..count {
            let est = ws.domain.crop(out.images[j].view());
            num += sq_dist(patches[j].view(), truth.images[j].view());
            den += sq_dist(est.view(), truth.images[j].view());
        }
        metrics.isnr = Some(10.0 * (num / den).log10());
    }
    if let Some(h) = &truth.filter {
        metrics.rsnr = Some(compute_rsnr(h, &out.filter)?);
    }
    if metrics.isnr.is_none() && metrics.rsnr.is_none() {
        return Ok(None);
    }
    Ok(Some(serde_json::to_value(metrics)?))
}

fn sq_dist(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn write_blind_outputs(dir: &Path, out: &BlindOutcome, ws: &Workspace, cfg: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let h = out.filter.data().view();
    write_array(&dir.join("h"), h)?;
    for (j, x) in out.images.iter().enumerate() {
        let inner = ws.domain.crop(x.view());
        write_array(&dir.join(format!("X_{j}")), inner.view())?;
        if cfg.emit_pgm {
            write_pgm(&dir.join(format!("X_{j}.pgm")), inner.view(), PgmScale::Linear)?;
        }
    }
    if cfg.emit_pgm {
        write_pgm(&dir.join("h.pgm"), h, PgmScale::Linear)?;
        write_pgm(&dir.join("h_log.pgm"), h, PgmScale::Log)?;
    }
    write_json(&dir.join(REPORT_NAME), &out.report)?;
    if cfg.trace {
        let mut w = BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?);
        for rec in &out.trace {
            writeln!(w, "{}", serde_json::to_string(rec)?)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn blind(cfg: &PipelineConfig) -> Result<serde_json::Value, CliError> {
    let r = resolve(cfg)?;
    if r.observations.is_empty() {
        return Err(CliError::config("observations_missing", "no observation patches were given"));
    }
    let geoms = geometries(&r.geometry, r.observations.len())?;
    let patches = r.observations.iter().map(|p| load_patch(p)).collect::<Result<Vec<_>, _>>()?;
    let truth = Truth {
        images: r.truth.iter().map(|p| load(p)).collect::<Result<_, _>>()?,
        filter: r.truth_filter.as_deref().map(load_filter).transpose()?,
    };
    let prefilter = load_prefilter(cfg)?;

    let mut solver = cfg.solver_config();
    solver.mu = resolve_mu(cfg, &patches, &geoms)?;
    let rme = match cfg.sigma {
        SigmaSource::Fixed(v) => {
            solver.sigma = v;
            None
        }
        SigmaSource::Rme | SigmaSource::Adaptive(_) => {
            let r = mean_sigma_rme(&patches, cfg.levels)?;
            solver.sigma = r;
            Some(r)
        }
    };
    let ws = Workspace::new(&patches, &geoms, prefilter.as_ref().map(|p| p.view()), &solver)?;

    let first = if cfg.sweep { 1 } else { ws.count() };
    let mut prev: Option<BlindOutcome> = None;
    for p in first..=ws.count() {
        let sub = ws.prefix(p)?;
        let warm = prev.as_ref().map(|o| WarmStart { images: o.images.clone(), filter: o.filter.clone(), rho: o.report.rho });
        let mut out = estimate(&sub, &solver, &cfg.sigma, rme, warm.as_ref())?;
        out.report.metrics = blind_metrics(&out, &sub, &patches, &truth)?;
        if cfg.sweep {
            write_blind_outputs(&cfg.out_dir.join(format!("P{p}")), &out, &sub, cfg)?;
        }
        prev = Some(out);
    }
    let out = prev.expect("at least one run");
    write_blind_outputs(&cfg.out_dir, &out, &ws, cfg)?;
    Ok(serde_json::json!({
        "status": "ok",
        "report": cfg.out_dir.join(REPORT_NAME),
        "rho": out.report.rho,
        "sigma": out.report.sigma,
        "whiteness": out.report.whiteness,
        "metrics": out.report.metrics,
    }))
}

fn read_report(cfg: &PipelineConfig) -> Result<Option<RunReport>, CliError> {
    let Some(path) = &cfg.inputs.report else { return Ok(None) };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config("missing_input", format!("cannot read report {}: {e}", path.display())))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Filter, base ρ, μ and solver settings shared by `deconv` and `validate`.
struct NonBlindSetup {
    filter: FilterEstimate,
    base_rho: f64,
    report_mu: Option<f64>,
    settings: DeconvSettings,
    prefilter: Option<Array2<f64>>,
}

fn nonblind_setup(cfg: &PipelineConfig) -> Result<NonBlindSetup, CliError> {
    let stem = cfg.inputs.filter.as_deref().ok_or_else(|| CliError::config("filter_missing", "inputs.filter is required"))?;
    let filter = load_filter(stem)?;
    let report = read_report(cfg)?;
    let base_rho = match (cfg.deconv.rho, &report) {
        (Some(r), _) => r,
        (None, Some(rep)) => RHO_BASE_FRACTION * rep.rho,
        (None, None) => {
            return Err(CliError::config("rho_missing", "set deconv.rho or point inputs.report at a blind run report"))
        }
    };
    let settings = DeconvSettings {
        border: cfg.b,
        levels: cfg.levels,
        whiteness_lag: cfg.solver.whiteness_lag,
        inner: cfg.solver.inner,
    };
    Ok(NonBlindSetup { filter, base_rho, report_mu: report.map(|r| r.mu), settings, prefilter: load_prefilter(cfg)? })
}

impl NonBlindSetup {
    fn mu(&self, cfg: &PipelineConfig, patches: &[ImagePatch], geoms: Option<&[DiskGeometry]>) -> Result<f64, CliError> {
        match (&cfg.mu, self.report_mu, geoms) {
            (MuSource::Fixed(v), _, _) => Ok(*v),
            (MuSource::Estimate, Some(mu), _) => Ok(mu),
            (MuSource::Estimate, None, Some(g)) => Ok(estimate_mu(patches, g, MU_DISK_RADIUS)?),
            (MuSource::Estimate, None, None) => Err(CliError::config(
                "geometry_missing",
                "estimating mu needs a disk geometry or a blind run report",
            )),
        }
    }
}

#[derive(Debug, Serialize)]
struct PatchResult {
    rho: f64,
    whiteness: f64,
    tried: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    isnr: Option<f64>,
}

fn deconv(cfg: &PipelineConfig) -> Result<serde_json::Value, CliError> {
    let r = resolve(cfg)?;
    if r.observations.is_empty() {
        return Err(CliError::config("observations_missing", "no observation patches were given"));
    }
    let setup = nonblind_setup(cfg)?;
    let patches = r.observations.iter().map(|p| load_patch(p)).collect::<Result<Vec<_>, _>>()?;
    let geoms = if r.geometry.is_empty() { None } else { Some(geometries(&r.geometry, patches.len())?) };
    let mu = setup.mu(cfg, &patches, geoms.as_deref())?;
    let mut results = Vec::new();
    for (j, y) in patches.iter().enumerate() {
        let z = ImagePatch::new(y.data() - mu)?;
        let (out, tried) =
            deconvolve_adaptive(&z, &setup.filter, setup.prefilter.as_ref().map(|p| p.view()), setup.base_rho, &setup.settings)?;
        write_array(&cfg.out_dir.join(format!("X_{j}")), out.image.view())?;
        if cfg.emit_pgm {
            write_pgm(&cfg.out_dir.join(format!("X_{j}.pgm")), out.image.view(), PgmScale::Linear)?;
        }
        let isnr = match r.truth.get(j) {
            Some(t) => Some(compute_isnr(z.view(), out.image.view(), load(t)?.view())?),
            None => None,
        };
        results.push(PatchResult { rho: out.rho, whiteness: out.whiteness, tried, isnr });
    }
    let summary = serde_json::json!({ "mu": mu, "base_rho": setup.base_rho, "patches": results });
    write_json(&cfg.out_dir.join("deconv.json"), &summary)?;
    Ok(serde_json::json!({ "status": "ok", "result": summary }))
}

fn validate(cfg: &PipelineConfig) -> Result<serde_json::Value, CliError> {
    let r = resolve(cfg)?;
    let stem = r.held_out.as_deref().ok_or_else(|| CliError::config("held_out_missing", "no held-out patch was given"))?;
    let spec = r.held_out_geometry.ok_or_else(|| CliError::config("geometry_missing", "the held-out patch has no disk geometry"))?;
    let geom = spec.build()?;
    let setup = nonblind_setup(cfg)?;
    let y = load_patch(stem)?;
    let n = y.side();
    geom.check_fits(n)?;
    let mu = setup.mu(cfg, std::slice::from_ref(&y), Some(&[geom]))?;
    let z = ImagePatch::new(y.data() - mu)?;
    let (out, tried) =
        deconvolve_adaptive(&z, &setup.filter, setup.prefilter.as_ref().map(|p| p.view()), setup.base_rho, &setup.settings)?;

    let omega = derive_omega(&geom, n)?;
    let mut metrics = MetricSet { disk_intensity_ratio: Some(disk_intensity_ratio(z.view(), out.image.view(), &omega)?), ..Default::default() };
    if let Some(t) = &r.held_out_truth {
        metrics.isnr = Some(compute_isnr(z.view(), out.image.view(), load(t)?.view())?);
    }
    if let Some(t) = &r.truth_filter {
        metrics.rsnr = Some(compute_rsnr(&load_filter(t)?, &setup.filter)?);
    }
    write_json(&cfg.out_dir.join("metrics.json"), &metrics)?;
    write_array(&cfg.out_dir.join("X_validate"), out.image.view())?;
    if cfg.emit_pgm {
        write_pgm(&cfg.out_dir.join("X_validate.pgm"), out.image.view(), PgmScale::Linear)?;
    }
    if cfg.deconv.profile_csv {
        let row = (geom.center.0.round().max(0.0) as usize).min(n - 1);
        let col: Vec<f64> = (0..n).map(|c| c as f64).collect();
        let observed: Vec<f64> = z.data().row(row).to_vec();
        let restored: Vec<f64> = out.image.row(row).to_vec();
        let ratio: Vec<f64> = restored.iter().zip(&observed).map(|(x, y)| x / y).collect();
        write_profile_csv(
            &cfg.out_dir.join("profile.csv"),
            &[("col", &col), ("observed", &observed), ("deconvolved", &restored), ("ratio", &ratio)],
        )?;
    }
    Ok(serde_json::json!({
        "status": "ok",
        "metrics": metrics,
        "rho": out.rho,
        "whiteness": out.whiteness,
        "tried": tried,
        "mu": mu,
    }))
}

fn longrange(cfg: &PipelineConfig) -> Result<serde_json::Value, CliError> {
    let lr = &cfg.longrange;
    let geom = lr.disk.build()?;
    geom.check_fits(lr.texture_side)?;
    let mut image = solar_texture(lr.texture_side, lr.texture_seed);
    let side = lr.texture_side;
    for i in disk_pixels(geom.center, geom.radius, side) {
        image[(i / side, i % side)] = 0.0;
    }
    let psf = power_law_psf(lr.psf_half_width, lr.exponent);
    let rep = longrange_constant_check(psf.view(), image.view(), cfg.b, geom.center, lr.window_radius)?;
    if cfg.emit_pgm {
        write_pgm(&cfg.out_dir.join("longrange.pgm"), rep.convolved.view(), PgmScale::Linear)?;
    }
    let summary = serde_json::json!({
        "spread": rep.spread,
        "mean": rep.mean,
        "relative_spread": rep.relative_spread(),
    });
    write_json(&cfg.out_dir.join("longrange.json"), &summary)?;
    Ok(serde_json::json!({ "status": "ok", "result": summary }))
}
