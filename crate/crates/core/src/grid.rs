//! Array types, disk geometry and the circular convolution operators used on
//! the expanded (unknown-boundary) domain.
//!
//! Conventions:
//! - pixel `(i, j)` has its center at coordinates `(i, j)` (row, column);
//! - kernels are stored centered at `(b, b)` in a `(2b+1)²` array and moved to
//!   the wrap-around origin when embedded, so convolving introduces no shift;
//! - the expanded domain has side `m = n + 2b`, the observed window is the
//!   central `n × n` block.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{multiply, Fft2, Spectrum};

/// Tolerance on the unit mass of a filter.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// `n × n` pixel grid in detector units.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatch {
    data: Array2<f64>,
}

impl ImagePatch {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r == 0 || r != c {
            return Err(Error::Shape(format!("image patch must be square and non-empty, got {r}x{c}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("image patch contains non-finite values".into()));
        }
        Ok(Self { data })
    }

    pub fn side(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// Black-disk geometry of a transiting body, in pixels of the observed patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskGeometry {
    /// `(row, col)`, may be fractional.
    pub center: (f64, f64),
    pub radius: f64,
    /// Radius of the known-zero set Ω.
    pub inner_radius: f64,
    /// Radius of the disk excluded from the sparsity prior.
    pub outer_radius: f64,
}

impl DiskGeometry {
    /// Geometry with the one-pixel uncertainty margins `R - 1` and `R + 1`.
    pub fn new(center: (f64, f64), radius: f64) -> Result<Self> {
        Self::with_radii(center, radius, radius - 1.0, radius + 1.0)
    }

    pub fn with_radii(center: (f64, f64), radius: f64, inner: f64, outer: f64) -> Result<Self> {
        let ok = [center.0, center.1, radius, inner, outer].iter().all(|v| v.is_finite());
        if !ok || !(0.0 < inner && inner < radius && radius < outer) {
            return Err(Error::Geometry(format!(
                "need 0 < r_inner < R < r_outer, got {inner} / {radius} / {outer}"
            )));
        }
        Ok(Self { center, radius, inner_radius: inner, outer_radius: outer })
    }

    /// Errors unless the `outer_radius` disk lies inside an `n × n` patch.
    pub fn check_fits(&self, side: usize) -> Result<()> {
        let (r, c) = self.center;
        let hi = side as f64 - 1.0;
        let rad = self.outer_radius;
        if r - rad < 0.0 || c - rad < 0.0 || r + rad > hi || c + rad > hi {
            return Err(Error::Geometry(format!(
                "disk at ({r}, {c}) with outer radius {rad} exceeds a {side}x{side} patch"
            )));
        }
        Ok(())
    }

    pub fn translated(&self, dr: f64, dc: f64) -> Self {
        Self { center: (self.center.0 + dr, self.center.1 + dc), ..*self }
    }
}

/// Flat row-major indices of the pixels of a `side × side` grid whose centers
/// lie within `radius` of `center`. Sorted ascending.
pub fn disk_pixels(center: (f64, f64), radius: f64, side: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if radius < 0.0 {
        return out;
    }
    let r2 = radius * radius;
    let lo_r = (center.0 - radius).ceil().max(0.0) as usize;
    let hi_r = ((center.0 + radius).floor().max(-1.0) as i64).min(side as i64 - 1);
    let lo_c = (center.1 - radius).ceil().max(0.0) as usize;
    let hi_c = ((center.1 + radius).floor().max(-1.0) as i64).min(side as i64 - 1);
    if hi_r < 0 || hi_c < 0 {
        return out;
    }
    for i in lo_r..=hi_r as usize {
        for j in lo_c..=hi_c as usize {
            let di = i as f64 - center.0;
            let dj = j as f64 - center.1;
            if di * di + dj * dj <= r2 {
                out.push(i * side + j);
            }
        }
    }
    out
}

/// The known-zero pixel set Ω of one observation (indices into the `n × n` patch).
pub fn derive_omega(geom: &DiskGeometry, side: usize) -> Result<Vec<usize>> {
    geom.check_fits(side)?;
    Ok(disk_pixels(geom.center, geom.inner_radius, side))
}

/// Point-spread-function core on a `(2b+1)²` window: non-negative, unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEstimate {
    half_width: usize,
    data: Array2<f64>,
}

impl FilterEstimate {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c || r % 2 == 0 {
            return Err(Error::Filter(format!("filter must be odd and square, got {r}x{c}")));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Filter("filter entries must be finite and non-negative".into()));
        }
        let mass: f64 = data.sum();
        if (mass - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Filter(format!("filter mass is {mass}, expected 1")));
        }
        Ok(Self { half_width: r / 2, data })
    }

    /// Kronecker delta on a `(2b+1)²` window.
    pub fn delta(half_width: usize) -> Self {
        let w = 2 * half_width + 1;
        let mut data = Array2::zeros((w, w));
        data[(half_width, half_width)] = 1.0;
        Self { half_width, data }
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn width(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Places the core at the wrap-around origin of an `m × m` grid.
    pub fn embed(&self, side: usize) -> Result<Array2<f64>> {
        embed_kernel(self.data.view(), side)
    }

    /// Inverse of [`FilterEstimate::embed`]; validates the simplex invariants.
    pub fn extract(grid: ArrayView2<f64>, half_width: usize) -> Result<Self> {
        Self::new(extract_kernel(grid, half_width)?)
    }
}

/// Embeds an odd, centered kernel at the wrap-around origin of a `side²` grid.
pub fn embed_kernel(kernel: ArrayView2<f64>, side: usize) -> Result<Array2<f64>> {
    let (w, wc) = kernel.dim();
    if w != wc || w % 2 == 0 {
        return Err(Error::Shape(format!("kernel must be odd and square, got {w}x{wc}")));
    }
    if w > side {
        return Err(Error::Shape(format!("kernel of width {w} does not fit a {side}x{side} grid")));
    }
    let b = w / 2;
    let mut out = Array2::zeros((side, side));
    for ((i, j), &v) in kernel.indexed_iter() {
        let r = (i + side - b) % side;
        let c = (j + side - b) % side;
        out[(r, c)] = v;
    }
    Ok(out)
}

/// Reads the `(2b+1)²` window around the wrap-around origin of a grid.
pub fn extract_kernel(grid: ArrayView2<f64>, half_width: usize) -> Result<Array2<f64>> {
    let (side, sc) = grid.dim();
    let w = 2 * half_width + 1;
    if side != sc || w > side {
        return Err(Error::Shape(format!("cannot extract {w}x{w} kernel from {side}x{sc} grid")));
    }
    Ok(Array2::from_shape_fn((w, w), |(i, j)| {
        grid[((i + side - half_width) % side, (j + side - half_width) % side)]
    }))
}

/// Observed `n × n` window inside an `(n + 2b)²` expanded grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedDomain {
    pub inner: usize,
    pub border: usize,
}

impl ExpandedDomain {
    pub fn new(inner: usize, border: usize) -> Self {
        Self { inner, border }
    }

    pub fn side(&self) -> usize {
        self.inner + 2 * self.border
    }

    /// Selection `S_N`: central window of an expanded image.
    pub fn crop(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (b, n) = (self.border, self.inner);
        x.slice(s![b..b + n, b..b + n]).to_owned()
    }

    /// Adjoint of the selection: zero-insertion into the expanded grid.
    pub fn zero_pad(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let (b, n) = (self.border, self.inner);
        let mut out = Array2::zeros((self.side(), self.side()));
        out.slice_mut(s![b..b + n, b..b + n]).assign(&y);
        out
    }

    /// Expands by replicating edge pixels into the border.
    pub fn replicate_pad(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let (b, n) = (self.border as isize, self.inner as isize);
        let m = self.side();
        Array2::from_shape_fn((m, m), |(i, j)| {
            let r = (i as isize - b).clamp(0, n - 1) as usize;
            let c = (j as isize - b).clamp(0, n - 1) as usize;
            y[(r, c)]
        })
    }

    /// Maps a flat index of the observed window to one of the expanded grid.
    pub fn to_expanded_index(&self, idx: usize) -> usize {
        let (r, c) = (idx / self.inner, idx % self.inner);
        (r + self.border) * self.side() + c + self.border
    }

    /// Disk geometry expressed in expanded-grid coordinates.
    pub fn to_expanded_geometry(&self, g: &DiskGeometry) -> DiskGeometry {
        g.translated(self.border as f64, self.border as f64)
    }
}

/// `S_N Φ(k)`: circular convolution on the expanded grid followed by cropping,
/// with its adjoint. The kernel spectrum is computed once.
#[derive(Debug, Clone)]
pub struct ConvOperator {
    domain: ExpandedDomain,
    fft: Arc<Fft2>,
    kernel_hat: Spectrum,
}

impl ConvOperator {
    /// Operator for `h`, optionally composed with a parametric prefilter
    /// (`h_p ⊗ h`).
    pub fn new(
        domain: ExpandedDomain,
        fft: Arc<Fft2>,
        h: &FilterEstimate,
        prefilter: Option<&Spectrum>,
    ) -> Result<Self> {
        let m = domain.side();
        if fft.side() != m {
            return Err(Error::Shape(format!("fft side {} != domain side {m}", fft.side())));
        }
        let mut kernel_hat = fft.forward(h.embed(m)?.view())?;
        if let Some(p) = prefilter {
            if p.dim() != kernel_hat.dim() {
                return Err(Error::Shape("prefilter spectrum does not match the domain".into()));
            }
            kernel_hat = multiply(p, &kernel_hat, false);
        }
        Ok(Self { domain, fft, kernel_hat })
    }

    /// Operator for an arbitrary embedded kernel spectrum.
    pub fn from_spectrum(domain: ExpandedDomain, fft: Arc<Fft2>, kernel_hat: Spectrum) -> Self {
        Self { domain, fft, kernel_hat }
    }

    pub fn domain(&self) -> ExpandedDomain {
        self.domain
    }

    pub fn kernel_spectrum(&self) -> &Spectrum {
        &self.kernel_hat
    }

    /// Full circular convolution on the expanded grid (no cropping).
    pub fn convolve_full(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let xh = self.fft.forward(x)?;
        self.fft.inverse(multiply(&self.kernel_hat, &xh, false))
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.domain.crop(self.convolve_full(x)?.view()))
    }

    pub fn adjoint(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        if y.dim() != (self.domain.inner, self.domain.inner) {
            return Err(Error::Shape(format!(
                "adjoint expects {}x{}, got {:?}",
                self.domain.inner,
                self.domain.inner,
                y.dim()
            )));
        }
        let yh = self.fft.forward(self.domain.zero_pad(y).view())?;
        self.fft.inverse(multiply(&self.kernel_hat, &yh, true))
    }
}

/// 2-D circular convolution of two equally shaped square arrays; the kernel is
/// stored with its center at index `(0, 0)`.
pub fn convolve_circular(image: ArrayView2<f64>, kernel: ArrayView2<f64>) -> Result<Array2<f64>> {
    if image.dim() != kernel.dim() || image.nrows() != image.ncols() {
        return Err(Error::Shape(format!(
            "convolve_circular needs equal square shapes, got {:?} and {:?}",
            image.dim(),
            kernel.dim()
        )));
    }
    let fft = Fft2::new(image.nrows());
    let a = fft.forward(image)?;
    let b = fft.forward(kernel)?;
    fft.inverse(multiply(&a, &b, false))
}

/// `S_N Φ(h_p ⊗ h) x` for a single expanded image.
pub fn forward_operator(
    x: ArrayView2<f64>,
    h: &FilterEstimate,
    prefilter: Option<ArrayView2<f64>>,
    domain: ExpandedDomain,
) -> Result<Array2<f64>> {
    let m = domain.side();
    if x.dim() != (m, m) {
        return Err(Error::Shape(format!("expected {m}x{m} expanded image, got {:?}", x.dim())));
    }
    let fft = Arc::new(Fft2::new(m));
    let pre = match prefilter {
        Some(p) => Some(prefilter_spectrum(&fft, p)?),
        None => None,
    };
    ConvOperator::new(domain, fft, h, pre.as_ref())?.apply(x)
}

/// Adjoint of [`forward_operator`].
pub fn adjoint_operator(
    y: ArrayView2<f64>,
    h: &FilterEstimate,
    prefilter: Option<ArrayView2<f64>>,
    domain: ExpandedDomain,
) -> Result<Array2<f64>> {
    let fft = Arc::new(Fft2::new(domain.side()));
    let pre = match prefilter {
        Some(p) => Some(prefilter_spectrum(&fft, p)?),
        None => None,
    };
    ConvOperator::new(domain, fft, h, pre.as_ref())?.adjoint(y)
}

/// Spectrum of a centered (odd, square) parametric kernel or of one already
/// embedded at the wrap-around origin on the full grid.
pub fn prefilter_spectrum(fft: &Fft2, kernel: ArrayView2<f64>) -> Result<Spectrum> {
    let m = fft.side();
    if kernel.dim() == (m, m) {
        fft.forward(kernel)
    } else {
        fft.forward(embed_kernel(kernel, m)?.view())
    }
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
