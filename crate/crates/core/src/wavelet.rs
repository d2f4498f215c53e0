//! Undecimated (à trous) Daubechies-2 wavelet transform with periodic
//! extension, the coefficient index sets used by the sparsity prior, and the
//! robust median noise estimator.
//!
//! The analysis filters are the orthonormal db2 pair scaled by `1/√2`, which
//! makes the undecimated transform a Parseval frame: `‖Ψᵀx‖ = ‖x‖` and the
//! synthesis operator (the adjoint) is an exact left inverse.
//!
//! Coefficient layout, each block `m²` long, row-major:
//! `[approx_J, detail_J(LH, HL, HH), …, detail_1(LH, HL, HH)]`.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{disk_pixels, DiskGeometry, ExpandedDomain, ImagePatch};

/// Magnitude below which a coefficient counts as untouched in [`build_theta`].
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// Robust median estimator constant (median of |N(0,1)|).
pub const MAD_CONSTANT: f64 = 0.6745;

/// Number of random fills intersected when building Θ.
pub const THETA_DRAWS: usize = 3;

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn db2_lowpass() -> [f64; 4] {
    let norm = 4.0 * std::f64::consts::SQRT_2;
    [
        (1.0 + SQRT3) / norm,
        (3.0 + SQRT3) / norm,
        (3.0 - SQRT3) / norm,
        (1.0 - SQRT3) / norm,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Low-pass along rows, high-pass along columns.
    Lh,
    Hl,
    Hh,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::Lh, Orientation::Hl, Orientation::Hh];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subband {
    Approx { level: usize },
    Detail { level: usize, orientation: Orientation },
}

/// Undecimated db2 dictionary on an `m × m` periodic grid.
#[derive(Debug, Clone)]
pub struct WaveletDictionary {
    side: usize,
    levels: usize,
    lo: [f64; 4],
    hi: [f64; 4],
}

impl WaveletDictionary {
    pub const DEFAULT_LEVELS: usize = 3;

    pub fn new(side: usize, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Config("wavelet levels must be >= 1".into()));
        }
        // the coarsest dilated filter must not wrap onto itself
        let extent = 3 * (1usize << (levels - 1)) + 1;
        if side < extent {
            return Err(Error::Shape(format!(
                "side {side} too small for {levels} levels (need >= {extent})"
            )));
        }
        let h0 = db2_lowpass();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let lo = h0.map(|v| v * s);
        let hi = [h0[3] * s, -h0[2] * s, h0[1] * s, -h0[0] * s];
        Ok(Self { side, levels, lo, hi })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Tight-frame constant `A` in `‖Ψᵀx‖² = A‖x‖²`.
    pub fn frame_constant(&self) -> f64 {
        1.0
    }

    pub fn num_subbands(&self) -> usize {
        3 * self.levels + 1
    }

    pub fn num_coefficients(&self) -> usize {
        self.num_subbands() * self.side * self.side
    }

    pub fn subband(&self, index: usize) -> Subband {
        if index == 0 {
            return Subband::Approx { level: self.levels };
        }
        let k = index - 1;
        Subband::Detail {
            level: self.levels - k / 3,
            orientation: Orientation::ALL[k % 3],
        }
    }

    pub fn detail_index(&self, level: usize, orientation: Orientation) -> usize {
        let o = Orientation::ALL.iter().position(|&x| x == orientation).unwrap();
        1 + 3 * (self.levels - level) + o
    }

    pub fn subbands(&self) -> Vec<Subband> {
        (0..self.num_subbands()).map(|i| self.subband(i)).collect()
    }

    fn check_image(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.dim() != (self.side, self.side) {
            return Err(Error::Shape(format!(
                "wavelet dictionary expects {0}x{0}, got {1:?}",
                self.side,
                x.dim()
            )));
        }
        Ok(())
    }

    /// `Ψᵀ x`.
    pub fn analyze(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_image(x)?;
        let m = self.side;
        let area = m * m;
        let mut out = vec![0.0; self.num_coefficients()];
        let mut approx: Vec<f64> = x.iter().copied().collect();
        let mut lo_rows = vec![0.0; area];
        let mut hi_rows = vec![0.0; area];
        for level in 1..=self.levels {
            let dil = 1usize << (level - 1);
            filter_rows(&approx, &mut lo_rows, m, &self.lo, dil);
            filter_rows(&approx, &mut hi_rows, m, &self.hi, dil);
            let base = |o: Orientation| self.detail_index(level, o) * area;
            let (lh, hl, hh) = (base(Orientation::Lh), base(Orientation::Hl), base(Orientation::Hh));
            filter_cols(&lo_rows, &mut out[lh..lh + area], m, &self.hi, dil);
            filter_cols(&hi_rows, &mut out[hl..hl + area], m, &self.lo, dil);
            filter_cols(&hi_rows, &mut out[hh..hh + area], m, &self.hi, dil);
            filter_cols(&lo_rows, &mut approx, m, &self.lo, dil);
        }
        out[..area].copy_from_slice(&approx);
        Ok(out)
    }

    /// `Ψ c`, the adjoint of [`analyze`](Self::analyze) and its exact left inverse.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Array2<f64>> {
        if coeffs.len() != self.num_coefficients() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                self.num_coefficients(),
                coeffs.len()
            )));
        }
        let m = self.side;
        let area = m * m;
        let mut approx = coeffs[..area].to_vec();
        let mut lo_rows = vec![0.0; area];
        let mut hi_rows = vec![0.0; area];
        let mut next = vec![0.0; area];
        for level in (1..=self.levels).rev() {
            let dil = 1usize << (level - 1);
            let band = |o: Orientation| {
                let b = self.detail_index(level, o) * area;
                &coeffs[b..b + area]
            };
            lo_rows.fill(0.0);
            hi_rows.fill(0.0);
            filter_cols_adjoint(&approx, &mut lo_rows, m, &self.lo, dil);
            filter_cols_adjoint(band(Orientation::Lh), &mut lo_rows, m, &self.hi, dil);
            filter_cols_adjoint(band(Orientation::Hl), &mut hi_rows, m, &self.lo, dil);
            filter_cols_adjoint(band(Orientation::Hh), &mut hi_rows, m, &self.hi, dil);
            next.fill(0.0);
            filter_rows_adjoint(&lo_rows, &mut next, m, &self.lo, dil);
            filter_rows_adjoint(&hi_rows, &mut next, m, &self.hi, dil);
            std::mem::swap(&mut approx, &mut next);
        }
        Ok(Array2::from_shape_vec((m, m), approx).expect("square"))
    }

    /// Flat coefficient range of one subband.
    pub fn subband_range(&self, index: usize) -> std::ops::Range<usize> {
        let area = self.side * self.side;
        index * area..(index + 1) * area
    }
}

// out[i, j] = Σ_k f[k] x[i, j - k·dil]
fn filter_rows(x: &[f64], out: &mut [f64], m: usize, f: &[f64; 4], dil: usize) {
    for (src, dst) in x.chunks_exact(m).zip(out.chunks_exact_mut(m)) {
        dst.fill(0.0);
        for (k, &fk) in f.iter().enumerate() {
            let shift = (k * dil) % m;
            // dst[j] += fk * src[(j - shift) mod m]
            let (head, tail) = dst.split_at_mut(shift);
            for (d, s) in tail.iter_mut().zip(src.iter()) {
                *d += fk * s;
            }
            for (d, s) in head.iter_mut().zip(src[m - shift..].iter()) {
                *d += fk * s;
            }
        }
    }
}

// out[i, j] += Σ_k f[k] x[i, j + k·dil]
fn filter_rows_adjoint(x: &[f64], out: &mut [f64], m: usize, f: &[f64; 4], dil: usize) {
    for (src, dst) in x.chunks_exact(m).zip(out.chunks_exact_mut(m)) {
        for (k, &fk) in f.iter().enumerate() {
            let shift = (k * dil) % m;
            let (head, tail) = dst.split_at_mut(m - shift);
            for (d, s) in head.iter_mut().zip(src[shift..].iter()) {
                *d += fk * s;
            }
            for (d, s) in tail.iter_mut().zip(src.iter()) {
                *d += fk * s;
            }
        }
    }
}

// out[i, :] = Σ_k f[k] x[i - k·dil, :]
fn filter_cols(x: &[f64], out: &mut [f64], m: usize, f: &[f64; 4], dil: usize) {
    for i in 0..m {
        let dst = &mut out[i * m..(i + 1) * m];
        dst.fill(0.0);
        for (k, &fk) in f.iter().enumerate() {
            let r = (i + m - (k * dil) % m) % m;
            for (d, s) in dst.iter_mut().zip(x[r * m..(r + 1) * m].iter()) {
                *d += fk * s;
            }
        }
    }
}

// out[i, :] += Σ_k f[k] x[i + k·dil, :]
fn filter_cols_adjoint(x: &[f64], out: &mut [f64], m: usize, f: &[f64; 4], dil: usize) {
    for i in 0..m {
        let dst = &mut out[i * m..(i + 1) * m];
        for (k, &fk) in f.iter().enumerate() {
            let r = (i + k * dil) % m;
            for (d, s) in dst.iter_mut().zip(x[r * m..(r + 1) * m].iter()) {
                *d += fk * s;
            }
        }
    }
}

/// Boolean selection over the coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffMask {
    bits: Vec<bool>,
}

impl CoeffMask {
    pub fn empty(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Zeroes every entry outside the mask (`S_Θᵀ S_Θ c`).
    pub fn apply(&self, c: &mut [f64]) {
        for (v, &keep) in c.iter_mut().zip(&self.bits) {
            if !keep {
                *v = 0.0;
            }
        }
    }

    /// `‖S c‖₁`.
    pub fn l1(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.bits).filter(|(_, &b)| b).map(|(v, _)| v.abs()).sum()
    }

    pub fn is_subset_of(&self, other: &CoeffMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn and_not(&self, other: &CoeffMask) -> CoeffMask {
        CoeffMask {
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect(),
        }
    }
}

/// Index sets over the coefficients of the expanded-domain dictionary.
#[derive(Debug, Clone)]
pub struct CoefficientSets {
    /// Θ_j: detail coefficients untouched by the disk of observation `j` and
    /// by the unknown border.
    pub theta: Vec<CoeffMask>,
    /// Δ: all detail coefficients.
    pub delta: CoeffMask,
    /// Λ: finest-scale detail coefficients.
    pub lambda: CoeffMask,
    /// Detail coefficients influenced by the unknown border.
    pub border_affected: CoeffMask,
}

impl CoefficientSets {
    /// Details that the unknown border cannot influence (non-blind prior).
    pub fn delta_interior(&self) -> CoeffMask {
        self.delta.and_not(&self.border_affected)
    }

    /// Total `Σ_j |Θ_j|`.
    pub fn theta_total(&self) -> usize {
        self.theta.iter().map(CoeffMask::count).sum()
    }
}

fn detail_mask(dict: &WaveletDictionary) -> CoeffMask {
    let area = dict.side() * dict.side();
    let mut bits = vec![true; dict.num_coefficients()];
    bits[..area].fill(false);
    CoeffMask::from_bits(bits)
}

fn finest_mask(dict: &WaveletDictionary) -> CoeffMask {
    let mut bits = vec![false; dict.num_coefficients()];
    for o in Orientation::ALL {
        let r = dict.subband_range(dict.detail_index(1, o));
        bits[r].fill(true);
    }
    CoeffMask::from_bits(bits)
}

/// Marks detail coefficients that respond to random values placed on `pixels`
/// (flat indices of the dictionary grid) over a constant background.
fn affected_details(
    dict: &WaveletDictionary,
    pixels: &[usize],
    draws: usize,
    seed: u64,
    stream: u64,
) -> Result<CoeffMask> {
    let m = dict.side();
    let details = detail_mask(dict);
    let mut hit = vec![false; dict.num_coefficients()];
    for draw in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream * 1024 + draw as u64);
        let mut img = Array2::from_elem((m, m), 1.0);
        for &p in pixels {
            img[(p / m, p % m)] = rng.random::<f64>();
        }
        let c = dict.analyze(img.view())?;
        for (i, v) in c.iter().enumerate() {
            if details.contains(i) && v.abs() > ZERO_THRESHOLD {
                hit[i] = true;
            }
        }
    }
    Ok(CoeffMask::from_bits(hit))
}

/// Builds Θ_j for every observation on the expanded domain, plus Δ and Λ.
///
/// For each of `draws` random fills, the `outer_radius` disk (and, separately,
/// the unknown border frame) is filled with U(0,1) values over a constant
/// background; a detail coefficient belongs to Θ_j only if it stays below
/// [`ZERO_THRESHOLD`] in every draw.
pub fn build_theta(
    geoms: &[DiskGeometry],
    domain: ExpandedDomain,
    dict: &WaveletDictionary,
    draws: usize,
    seed: u64,
) -> Result<CoefficientSets> {
    let m = domain.side();
    if dict.side() != m {
        return Err(Error::Shape(format!(
            "dictionary side {} does not match expanded side {m}",
            dict.side()
        )));
    }
    if geoms.is_empty() {
        return Err(Error::Geometry("at least one disk geometry is required".into()));
    }
    let details = detail_mask(dict);
    let border_pixels: Vec<usize> = (0..m * m)
        .filter(|&p| {
            let (r, c) = (p / m, p % m);
            let b = domain.border;
            r < b || c < b || r >= b + domain.inner || c >= b + domain.inner
        })
        .collect();
    let border_affected = affected_details(dict, &border_pixels, draws, seed, 0)?;
    let mut theta = Vec::with_capacity(geoms.len());
    for (j, g) in geoms.iter().enumerate() {
        g.check_fits(domain.inner)?;
        let eg = domain.to_expanded_geometry(g);
        let disk = disk_pixels(eg.center, eg.outer_radius, m);
        let disk_hit = affected_details(dict, &disk, draws, seed, j as u64 + 1)?;
        theta.push(details.and_not(&disk_hit).and_not(&border_affected));
    }
    Ok(CoefficientSets { theta, delta: details, lambda: finest_mask(dict), border_affected })
}

/// Robust median estimate of the noise standard deviation from the finest
/// scale detail coefficients of one observation.
///
/// Coefficients are rescaled to the orthonormal normalization (factor 2 at
/// the finest 2-D level) so that white noise of deviation σ yields
/// coefficients of deviation σ.
pub fn estimate_sigma_rme(y: &ImagePatch, dict: &WaveletDictionary) -> Result<f64> {
    let c = dict.analyze(y.view())?;
    let mut alpha: Vec<f64> = finest_mask(dict).indices().map(|i| 2.0 * c[i].abs()).collect();
    Ok(median(&mut alpha) / MAD_CONSTANT)
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
