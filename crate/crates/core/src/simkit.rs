//! Synthetic transit experiments: ground-truth filters, a procedural
//! solar-like texture, simulated observation stacks and the long-range
//! constant check.

use std::f64::consts::PI;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{convolve_circular, disk_pixels, embed_kernel, DiskGeometry, ExpandedDomain, FilterEstimate, ImagePatch};
use crate::nonblind::bsnr;

/// Decay length (pixels along the diagonal) of the X-shaped filter.
pub const X_FILTER_DECAY: f64 = 4.0;

pub const DEFAULT_TEXTURE_SIDE: usize = 1024;
pub const DEFAULT_TEXTURE_SEED: u64 = 2012;
/// Default minimum distance between cutout origins.
/// Texture area (px²) per coronal loop.
pub const LOOP_AREA: usize = 30_000;
/// Per-sample loop amplitude as a fraction of the loop's peak brightness.
pub const LOOP_GAIN: f64 = 0.15;

pub const MIN_CUTOUT_SEPARATION: f64 = 256.0;

/// Cutout origins (top-left corners on the texture). The first three feed the
/// blind runs, the fourth is held out for validation.
pub const DEFAULT_ORIGINS: [(usize, usize); 6] = [(40, 40), (40, 420), (420, 40), (420, 420), (730, 200), (200, 730)];

/// Rotated anisotropic Gaussian sampled on the `(2b+1)²` grid and normalized.
/// `sigma_h` is along columns and `sigma_v` along rows before rotating
/// counter-clockwise by `rotation_deg`.
pub fn make_gaussian_filter(half_width: usize, sigma_h: f64, sigma_v: f64, rotation_deg: f64) -> Result<FilterEstimate> {
    if half_width == 0 || !(sigma_h > 0.0 && sigma_v > 0.0) {
        return Err(Error::Filter("gaussian filter needs b >= 1 and positive widths".into()));
    }
    let (sn, cs) = rotation_deg.to_radians().sin_cos();
    let b = half_width as f64;
    let w = 2 * half_width + 1;
    let raw = Array2::from_shape_fn((w, w), |(i, j)| {
        let x = j as f64 - b;
        let y = b - i as f64;
        let u = x * cs + y * sn;
        let v = -x * sn + y * cs;
        (-0.5 * (u * u / (sigma_h * sigma_h) + v * v / (sigma_v * sigma_v))).exp()
    });
    normalize(raw)
}

/// Mass `exp(−d/4)` at diagonal step `d` from the center along both
/// diagonals (the center counts once per diagonal), normalized.
pub fn make_x_filter(half_width: usize) -> Result<FilterEstimate> {
    if half_width == 0 {
        return Err(Error::Filter("X filter needs b >= 1".into()));
    }
    let w = 2 * half_width + 1;
    let mut raw = Array2::<f64>::zeros((w, w));
    for i in 0..w {
        let d = (i as f64 - half_width as f64).abs();
        let v = (-d / X_FILTER_DECAY).exp();
        raw[(i, i)] += v;
        raw[(i, w - 1 - i)] += v;
    }
    normalize(raw)
}

fn normalize(raw: Array2<f64>) -> Result<FilterEstimate> {
    let s = raw.sum();
    FilterEstimate::new(raw / s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterSpec {
    Gaussian { half_width: usize, sigma_h: f64, sigma_v: f64, rotation_deg: f64 },
    X { half_width: usize },
    Delta { half_width: usize },
}

impl FilterSpec {
    pub fn standard_gaussian() -> Self {
        FilterSpec::Gaussian { half_width: 16, sigma_h: 2.0, sigma_v: 4.0, rotation_deg: 45.0 }
    }

    pub fn half_width(&self) -> usize {
        match *self {
            FilterSpec::Gaussian { half_width, .. } | FilterSpec::X { half_width } | FilterSpec::Delta { half_width } => {
                half_width
            }
        }
    }

    pub fn build(&self) -> Result<FilterEstimate> {
        match *self {
            FilterSpec::Gaussian { half_width, sigma_h, sigma_v, rotation_deg } => {
                make_gaussian_filter(half_width, sigma_h, sigma_v, rotation_deg)
            }
            FilterSpec::X { half_width } => make_x_filter(half_width),
            FilterSpec::Delta { half_width } => Ok(FilterEstimate::delta(half_width)),
        }
    }
}

/// Periodic value noise: uniform values on a lattice of `cell`-pixel spacing,
/// smoothstep-interpolated.
fn value_noise(side: usize, cell: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = side.div_ceil(cell);
    let lattice = Array2::from_shape_fn((g, g), |_| rng.random::<f64>() * 2.0 - 1.0);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    Array2::from_shape_fn((side, side), |(i, j)| {
        let (fi, fj) = (i as f64 / cell as f64, j as f64 / cell as f64);
        let (i0, j0) = (fi.floor() as usize, fj.floor() as usize);
        let (ti, tj) = (smooth(fi - i0 as f64), smooth(fj - j0 as f64));
        let (i1, j1) = ((i0 + 1) % g, (j0 + 1) % g);
        let (i0, j0) = (i0 % g, j0 % g);
        let top = lattice[(i0, j0)] * (1.0 - tj) + lattice[(i0, j1)] * tj;
        let bot = lattice[(i1, j0)] * (1.0 - tj) + lattice[(i1, j1)] * tj;
        top * (1.0 - ti) + bot * ti
    })
}

/// Solar-like EUV texture in DN: a log-normal diffuse corona whose finest
/// octaves (16–32 px cells) play the role of network granulation, overlaid
/// with sparse bright coronal loops. Periodic in both directions and fully
/// determined by `seed`.
///
/// Loop density and contrast are kept moderate: dense sharp arcs make the
/// wavelet ℓ1 prior favour blurred images strongly enough that the disk
/// constraint no longer identifies the filter.
pub fn solar_texture(side: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = Array2::<f64>::zeros((side, side));
    for (cell, amp) in [(256, 0.55), (128, 0.4), (64, 0.3), (32, 0.2), (16, 0.15)] {
        if cell < side {
            field.scaled_add(amp, &value_noise(side, cell, &mut rng));
        }
    }
    let mut img = field.mapv(|f| 150.0 * f.exp());

    let loops = side * side / LOOP_AREA;
    for _ in 0..loops {
        let (cr, cc) = (rng.random::<f64>() * side as f64, rng.random::<f64>() * side as f64);
        let radius = 8.0 + 60.0 * rng.random::<f64>().powi(2);
        let flat = 0.3 + 0.7 * rng.random::<f64>();
        let theta = rng.random::<f64>() * 2.0 * PI;
        let width = 0.8 + 1.7 * rng.random::<f64>();
        let peak = 150.0 * (-(rng.random::<f64>()).ln()).min(6.0) + 50.0;
        let steps = (PI * radius / 0.5).ceil() as usize;
        let (st, ct) = theta.sin_cos();
        let reach = (3.0 * width).ceil() as isize;
        for k in 0..=steps {
            let a = PI * k as f64 / steps as f64;
            // half ellipse in the loop frame, rotated into place
            let (lx, ly) = (radius * a.cos(), flat * radius * a.sin());
            let (pr, pc) = (cr + lx * st + ly * ct, cc + lx * ct - ly * st);
            let taper = 0.4 + 0.6 * (a.sin());
            // two samples per pixel of arc length
            let amp = LOOP_GAIN * peak * taper;
            let (ir, ic) = (pr.round() as isize, pc.round() as isize);
            for di in -reach..=reach {
                for dj in -reach..=reach {
                    let (r, c) = (ir + di, ic + dj);
                    let d2 = (r as f64 - pr).powi(2) + (c as f64 - pc).powi(2);
                    let v = amp * (-0.5 * d2 / (width * width)).exp();
                    let (r, c) = (r.rem_euclid(side as isize) as usize, c.rem_euclid(side as isize) as usize);
                    img[(r, c)] += v;
                }
            }
        }
    }
    img
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub texture_side: usize,
    pub texture_seed: u64,
    /// Observed patch side n.
    pub n: usize,
    /// Top-left corners of the `(n + 2b)²` cutouts on the texture.
    pub origins: Vec<(usize, usize)>,
    /// Disk in observed-patch coordinates, common to every cutout.
    pub disk: DiskGeometry,
    pub filter: FilterSpec,
    /// Target BSNR in dB; `None` simulates noiseless data.
    pub bsnr_db: Option<f64>,
    /// Noise seed; patch `j` draws from stream `j`.
    pub seed: u64,
    /// Minimum distance between cutout origins.
    #[serde(default = "default_separation")]
    pub min_separation: f64,
}

fn default_separation() -> f64 {
    MIN_CUTOUT_SEPARATION
}

impl SyntheticScenario {
    /// 256² patches with a radius-48 disk at (129, 129), BSNR 30 dB.
    pub fn standard(filter: FilterSpec, patches: usize, seed: u64) -> Result<Self> {
        if patches == 0 || patches > DEFAULT_ORIGINS.len() {
            return Err(Error::Config(format!("between 1 and {} patches are available", DEFAULT_ORIGINS.len())));
        }
        Ok(Self {
            texture_side: DEFAULT_TEXTURE_SIDE,
            texture_seed: DEFAULT_TEXTURE_SEED,
            n: 256,
            origins: DEFAULT_ORIGINS[..patches].to_vec(),
            disk: DiskGeometry::new((129.0, 129.0), 48.0)?,
            filter,
            bsnr_db: Some(30.0),
            seed,
            min_separation: MIN_CUTOUT_SEPARATION,
        })
    }

    pub fn domain(&self) -> ExpandedDomain {
        ExpandedDomain::new(self.n, self.filter.half_width())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.domain().side();
        if self.origins.is_empty() {
            return Err(Error::Config("scenario needs at least one cutout".into()));
        }
        for (i, &(r, c)) in self.origins.iter().enumerate() {
            if r + m > self.texture_side || c + m > self.texture_side {
                return Err(Error::Config(format!("cutout {i} at ({r}, {c}) leaves the texture")));
            }
            for &(r2, c2) in &self.origins[..i] {
                let d = ((r as f64 - r2 as f64).powi(2) + (c as f64 - c2 as f64).powi(2)).sqrt();
                if d < self.min_separation {
                    return Err(Error::Config(format!("cutouts ({r}, {c}) and ({r2}, {c2}) are only {d:.1} px apart")));
                }
            }
        }
        self.disk.check_fits(self.n)?;
        if self.bsnr_db.is_some_and(|b| !b.is_finite()) {
            return Err(Error::Config("BSNR must be finite".into()));
        }
        Ok(())
    }
}

/// Simulated stack and its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedStack {
    pub observations: Vec<ImagePatch>,
    /// Ground-truth images on the expanded grid (disk zeroed).
    pub truth: Vec<Array2<f64>>,
    /// Noiseless blurred observations.
    pub blurred: Vec<Array2<f64>>,
    pub filter: FilterEstimate,
    pub sigma: f64,
    pub geoms: Vec<DiskGeometry>,
    pub domain: ExpandedDomain,
}

impl SimulatedStack {
    /// Central windows of the ground-truth images.
    pub fn truth_inner(&self) -> Vec<Array2<f64>> {
        self.truth.iter().map(|t| self.domain.crop(t.view())).collect()
    }

    /// The stack restricted to the patches listed.
    pub fn select(&self, idx: &[usize]) -> SimulatedStack {
        SimulatedStack {
            observations: idx.iter().map(|&i| self.observations[i].clone()).collect(),
            truth: idx.iter().map(|&i| self.truth[i].clone()).collect(),
            blurred: idx.iter().map(|&i| self.blurred[i].clone()).collect(),
            filter: self.filter.clone(),
            sigma: self.sigma,
            geoms: idx.iter().map(|&i| self.geoms[i]).collect(),
            domain: self.domain,
        }
    }
}

/// Cuts, masks, blurs and adds noise. σ is set from the variance of all the
/// scenario's blurred patches, so selecting a subset never changes the
/// noise of the remaining ones.
pub fn simulate_observations(scenario: &SyntheticScenario) -> Result<SimulatedStack> {
    let texture = solar_texture(scenario.texture_side, scenario.texture_seed);
    simulate_from_texture(scenario, texture.view())
}

pub fn simulate_from_texture(scenario: &SyntheticScenario, texture: ArrayView2<f64>) -> Result<SimulatedStack> {
    scenario.validate()?;
    if texture.dim() != (scenario.texture_side, scenario.texture_side) {
        return Err(Error::Shape("texture does not match the scenario's texture side".into()));
    }
    let domain = scenario.domain();
    let (n, m) = (scenario.n, domain.side());
    let filter = scenario.filter.build()?;
    let kernel = embed_kernel(filter.data().view(), m)?;
    scenario.disk.check_fits(n)?;
    // the body itself spans the full radius R; Ω only covers R − 1
    let body = disk_pixels(scenario.disk.center, scenario.disk.radius, n);

    let mut truth = Vec::new();
    let mut blurred = Vec::new();
    for &(r, c) in &scenario.origins {
        let mut x = texture.slice(s![r..r + m, c..c + m]).to_owned();
        for &i in &body {
            let e = domain.to_expanded_index(i);
            x[(e / m, e % m)] = 0.0;
        }
        let full = convolve_circular(x.view(), kernel.view())?;
        blurred.push(domain.crop(full.view()));
        truth.push(x);
    }
    let sigma = match scenario.bsnr_db {
        None => 0.0,
        Some(db) => {
            let var = 10f64.powf(bsnr(&blurred, 1.0) / 10.0);
            (var / 10f64.powf(db / 10.0)).sqrt()
        }
    };
    let mut observations = Vec::new();
    for (j, b) in blurred.iter().enumerate() {
        let mut y = b.clone();
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            rng.set_stream(j as u64);
            y.mapv_inplace(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + sigma * e
            });
        }
        observations.push(ImagePatch::new(y)?);
    }
    let geoms = vec![scenario.disk; scenario.origins.len()];
    Ok(SimulatedStack { observations, truth, blurred, filter, sigma, geoms, domain })
}

/// Isotropic power-law PSF `(1 + r)^(−exponent)` on a `(2B+1)²` grid, unit mass.
pub fn power_law_psf(half_width: usize, exponent: f64) -> Array2<f64> {
    let w = 2 * half_width + 1;
    let b = half_width as f64;
    let raw = Array2::from_shape_fn((w, w), |(i, j)| {
        let r = ((i as f64 - b).powi(2) + (j as f64 - b).powi(2)).sqrt();
        (1.0 + r).powf(-exponent)
    });
    let s = raw.sum();
    raw / s
}

#[derive(Debug, Clone)]
pub struct LongRangeReport {
    /// Image convolved with the core-zeroed PSF.
    pub convolved: Array2<f64>,
    pub spread: f64,
    pub mean: f64,
}

impl LongRangeReport {
    pub fn relative_spread(&self) -> f64 {
        if self.mean == 0.0 {
            if self.spread == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.spread / self.mean.abs()
        }
    }
}

/// Zeroes the central `(2b+1)²` window of `full_psf`, convolves `image`
/// circularly with what remains and reports the max−min spread and mean over
/// the `window_radius` disk at `center`.
pub fn longrange_constant_check(
    full_psf: ArrayView2<f64>,
    image: ArrayView2<f64>,
    b: usize,
    center: (f64, f64),
    window_radius: f64,
) -> Result<LongRangeReport> {
    let (pr, pc) = full_psf.dim();
    if pr != pc || pr % 2 == 0 {
        return Err(Error::Shape("PSF must be odd and square".into()));
    }
    if pr <= 2 * b + 1 {
        return Err(Error::Filter(format!("PSF of width {pr} is not larger than the zeroed {}-wide core", 2 * b + 1)));
    }
    let side = image.nrows();
    if image.ncols() != side || pr > side {
        return Err(Error::Shape("image must be square and at least as large as the PSF".into()));
    }
    let half = pr / 2;
    let mut tail = full_psf.to_owned();
    tail.slice_mut(s![half - b..=half + b, half - b..=half + b]).fill(0.0);
    let convolved = convolve_circular(image, embed_kernel(tail.view(), side)?.view())?;
    let px = disk_pixels(center, window_radius, side);
    if px.is_empty() {
        return Err(Error::Geometry("measurement window holds no pixels".into()));
    }
    let flat = convolved.as_slice().expect("standard layout");
    let vals: Vec<f64> = px.iter().map(|&i| flat[i]).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(LongRangeReport { convolved, spread: hi - lo, mean })
}
