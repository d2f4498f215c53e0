//! Deconvolution with a known filter, and the quality metrics.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::blind::whiteness_measure;
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{prefilter_spectrum, ConvOperator, DiskGeometry, ExpandedDomain, FilterEstimate, ImagePatch};
use crate::prox::project_p0;
use crate::solvers::{solve_image_step, CpDuals, ImageProblem, InnerOptions};
use crate::wavelet::{build_theta, CoeffMask, WaveletDictionary};

/// Value reported for a dB metric whose error term is exactly zero.
pub const DB_SENTINEL: f64 = f64::MAX;

/// ρ multipliers tried by [`deconvolve_adaptive`], applied to the base value.
pub const RHO_SWEEP: [f64; 3] = [1.0, 0.5, 0.25];

/// Fraction of the blind estimate's ρ used as the base of the sweep.
pub const RHO_BASE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeconvSettings {
    pub border: usize,
    pub levels: usize,
    pub whiteness_lag: usize,
    pub inner: InnerOptions,
}

impl Default for DeconvSettings {
    fn default() -> Self {
        Self { border: 16, levels: WaveletDictionary::DEFAULT_LEVELS, whiteness_lag: 4, inner: InnerOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct DeconvOutcome {
    /// Estimate on the expanded grid.
    pub expanded: Array2<f64>,
    /// Central `n × n` window of the estimate.
    pub image: Array2<f64>,
    pub rho: f64,
    pub whiteness: f64,
    pub iterations: usize,
}

/// `min_x ρ‖S_Δ Ψᵀ x‖₁ + ½‖z − S_N Φ(h) x‖² s.t. x ≥ 0`, with Δ the detail
/// coefficients untouched by the unknown border.
pub fn deconvolve(
    z: &ImagePatch,
    h: &FilterEstimate,
    prefilter: Option<ArrayView2<f64>>,
    rho: f64,
    settings: &DeconvSettings,
) -> Result<DeconvOutcome> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("rho must be finite and >= 0, got {rho}")));
    }
    if h.half_width() > settings.border {
        return Err(Error::Filter(format!(
            "filter half-width {} exceeds the border {}",
            h.half_width(),
            settings.border
        )));
    }
    let n = z.side();
    let domain = ExpandedDomain::new(n, settings.border);
    let m = domain.side();
    let fft = Arc::new(Fft2::new(m));
    let dict = WaveletDictionary::new(m, settings.levels)?;
    let pre = match prefilter {
        Some(p) => Some(prefilter_spectrum(&fft, p)?),
        None => None,
    };
    let kernel = if h.half_width() == settings.border {
        h.clone()
    } else {
        pad_filter(h, settings.border)?
    };
    let op = ConvOperator::new(domain, fft, &kernel, pre.as_ref())?;
    let mask = interior_details(domain, &dict)?;

    let obs = vec![z.data().clone()];
    let mut x0 = domain.replicate_pad(z.view());
    project_p0(&mut x0, &[]);
    let problem = ImageProblem {
        dict: &dict,
        op: &op,
        observations: &obs,
        masks: std::slice::from_ref(&mask),
        zero_sets: &[Vec::new()],
        rho,
        lambda: 0.0,
        anchors: &[],
    };
    let mut duals = CpDuals::zeros(1, &dict, n);
    let out = solve_image_step(&problem, &[x0], &mut duals, &settings.inner, 0)?;
    let expanded = out.images.into_iter().next().expect("one image");
    let image = domain.crop(expanded.view());
    let residual = z.data() - &op.apply(expanded.view())?;
    let whiteness = whiteness_measure(&[residual], settings.whiteness_lag)?;
    Ok(DeconvOutcome { expanded, image, rho, whiteness, iterations: out.iterations[0] })
}

/// Runs [`deconvolve`] for `ρ = base·s` over [`RHO_SWEEP`] and keeps the
/// whitest residual. `base` is normally half the blind run's ρ.
pub fn deconvolve_adaptive(
    z: &ImagePatch,
    h: &FilterEstimate,
    prefilter: Option<ArrayView2<f64>>,
    base: f64,
    settings: &DeconvSettings,
) -> Result<(DeconvOutcome, Vec<(f64, f64)>)> {
    let mut tried = Vec::new();
    let mut best: Option<DeconvOutcome> = None;
    for s in RHO_SWEEP {
        let out = deconvolve(z, h, prefilter, base * s, settings)?;
        tried.push((out.rho, out.whiteness));
        if best.as_ref().is_none_or(|b| out.whiteness > b.whiteness) {
            best = Some(out);
        }
    }
    Ok((best.expect("sweep is non-empty"), tried))
}

fn interior_details(domain: ExpandedDomain, dict: &WaveletDictionary) -> Result<CoeffMask> {
    // the border-affected set does not depend on the disk; any valid one will do
    let n = domain.inner as f64;
    let dummy = DiskGeometry::with_radii((n / 2.0, n / 2.0), 0.5, 0.25, 0.75)?;
    let sets = build_theta(&[dummy], domain, dict, 1, 0)?;
    Ok(sets.delta_interior())
}

/// Zero-pads a filter to a larger half-width.
pub fn pad_filter(h: &FilterEstimate, half_width: usize) -> Result<FilterEstimate> {
    if half_width < h.half_width() {
        return Err(Error::Filter("cannot pad a filter to a smaller support".into()));
    }
    let off = half_width - h.half_width();
    let w = 2 * half_width + 1;
    let mut out = Array2::zeros((w, w));
    out.slice_mut(ndarray::s![off..off + h.width(), off..off + h.width()]).assign(h.data());
    FilterEstimate::new(out)
}

fn distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("metric inputs differ: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(ndarray::Zip::from(a).and(b).fold(0.0, |s, x, y| s + (x - y) * (x - y)).sqrt())
}

fn db_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        DB_SENTINEL
    } else {
        20.0 * (num / den).log10()
    }
}

/// `20 log10(‖Y − X_GT‖ / ‖X* − X_GT‖)`.
pub fn compute_isnr(y: ArrayView2<f64>, x_est: ArrayView2<f64>, x_gt: ArrayView2<f64>) -> Result<f64> {
    Ok(db_ratio(distance(y, x_gt)?, distance(x_est, x_gt)?))
}

/// `20 log10(‖h_GT‖ / ‖h_GT − h*‖)` on a common Γ window (the smaller filter
/// is zero-padded).
pub fn compute_rsnr(h_gt: &FilterEstimate, h_est: &FilterEstimate) -> Result<f64> {
    let b = h_gt.half_width().max(h_est.half_width());
    let a = pad_filter(h_gt, b)?;
    let e = pad_filter(h_est, b)?;
    let num = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(db_ratio(num, distance(a.data().view(), e.data().view())?))
}

/// `Σ_Ω x* / Σ_Ω y`.
pub fn disk_intensity_ratio(y: ArrayView2<f64>, x_est: ArrayView2<f64>, omega: &[usize]) -> Result<f64> {
    if y.dim() != x_est.dim() {
        return Err(Error::Shape("disk ratio inputs differ in shape".into()));
    }
    if omega.is_empty() {
        return Err(Error::Geometry("disk set is empty".into()));
    }
    let ny = y.ncols();
    let sy: f64 = omega.iter().map(|&i| y[(i / ny, i % ny)]).sum();
    let sx: f64 = omega.iter().map(|&i| x_est[(i / ny, i % ny)]).sum();
    if sy == 0.0 {
        return Err(Error::Degenerate("observed disk intensity is zero".into()));
    }
    Ok(sx / sy)
}

/// `10 log10(var(blurred) / σ²)`; infinite when σ = 0.
pub fn bsnr(blurred: &[Array2<f64>], sigma: f64) -> f64 {
    let count: usize = blurred.iter().map(|b| b.len()).sum();
    let mean = blurred.iter().map(|b| b.sum()).sum::<f64>() / count as f64;
    let var = blurred.iter().flat_map(|b| b.iter()).map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    10.0 * (var / (sigma * sigma)).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricSet {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rsnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disk_intensity_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bsnr: Option<f64>,
}
