//! Square 2-D real FFTs.
//!
//! Spectra are stored as the non-redundant half plane, transposed: shape
//! `(m/2 + 1, m)`, where row `k` holds the column transform of real-FFT bin
//! `k`. Every consumer in this crate only multiplies spectra element-wise, so
//! the layout never leaks beyond this module.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type Spectrum = Array2<Complex64>;

#[derive(Clone)]
pub struct Fft2 {
    side: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("side", &self.side).finish()
    }
}

impl Fft2 {
    pub fn new(side: usize) -> Self {
        assert!(side > 0, "fft side must be positive");
        let mut real = RealFftPlanner::<f64>::new();
        let mut cplx = FftPlanner::<f64>::new();
        Self {
            side,
            r2c: real.plan_fft_forward(side),
            c2r: real.plan_fft_inverse(side),
            col_fwd: cplx.plan_fft_forward(side),
            col_inv: cplx.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of stored rows of a spectrum (`m/2 + 1`).
    pub fn half(&self) -> usize {
        self.side / 2 + 1
    }

    pub fn forward(&self, image: ArrayView2<f64>) -> Result<Spectrum> {
        let m = self.side;
        if image.dim() != (m, m) {
            return Err(Error::Shape(format!(
                "fft expects {m}x{m}, got {:?}",
                image.dim()
            )));
        }
        let h = self.half();
        let mut row_in = vec![0.0; m];
        let mut row_out = vec![Complex64::default(); h];
        let mut scratch = self.r2c.make_scratch_vec();
        // transposed half spectrum: out[k, r] = rowfft(r)[k]
        let mut out = vec![Complex64::default(); h * m];
        for (r, row) in image.outer_iter().enumerate() {
            for (dst, &v) in row_in.iter_mut().zip(row.iter()) {
                *dst = v;
            }
            self.r2c
                .process_with_scratch(&mut row_in, &mut row_out, &mut scratch)
                .expect("row fft lengths are planned");
            for (k, &c) in row_out.iter().enumerate() {
                out[k * m + r] = c;
            }
        }
        let mut cscratch = vec![Complex64::default(); self.col_fwd.get_inplace_scratch_len()];
        self.col_fwd.process_with_scratch(&mut out, &mut cscratch);
        Ok(Array2::from_shape_vec((h, m), out).expect("spectrum shape"))
    }

    /// Inverse transform, normalized so that `inverse(forward(x)) == x`.
    pub fn inverse(&self, spectrum: Spectrum) -> Result<Array2<f64>> {
        let m = self.side;
        let h = self.half();
        if spectrum.dim() != (h, m) {
            return Err(Error::Shape(format!(
                "spectrum expects {h}x{m}, got {:?}",
                spectrum.dim()
            )));
        }
        let mut buf = spectrum.into_raw_vec_and_offset().0;
        let mut cscratch = vec![Complex64::default(); self.col_inv.get_inplace_scratch_len()];
        self.col_inv.process_with_scratch(&mut buf, &mut cscratch);

        let scale = 1.0 / (m * m) as f64;
        let mut row_in = vec![Complex64::default(); h];
        let mut row_out = vec![0.0; m];
        let mut scratch = self.c2r.make_scratch_vec();
        let mut out = Array2::<f64>::zeros((m, m));
        for (r, mut dst) in out.outer_iter_mut().enumerate() {
            for (k, c) in row_in.iter_mut().enumerate() {
                *c = buf[k * m + r];
            }
            // imaginary parts of the DC and Nyquist bins are round-off only
            row_in[0].im = 0.0;
            if m % 2 == 0 {
                row_in[h - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(&mut row_in, &mut row_out, &mut scratch)
                .expect("row ifft lengths are planned");
            for (d, &v) in dst.iter_mut().zip(row_out.iter()) {
                *d = v * scale;
            }
        }
        Ok(out)
    }
}

/// Element-wise `a * b` (or `conj(a) * b` when `conjugate_a`).
pub fn multiply(a: &Spectrum, b: &Spectrum, conjugate_a: bool) -> Spectrum {
    let mut out = b.clone();
    if conjugate_a {
        out.zip_mut_with(a, |o, &x| *o *= x.conj());
    } else {
        out.zip_mut_with(a, |o, &x| *o *= x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_complex_fft(x: &Array2<f64>) -> Array2<Complex64> {
        let m = x.nrows();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
        let mut a = x.mapv(|v| Complex64::new(v, 0.0));
        for mut row in a.outer_iter_mut() {
            let mut v = row.to_vec();
            fft.process(&mut v);
            row.assign(&ndarray::Array1::from(v));
        }
        for mut col in a.columns_mut() {
            let mut v = col.to_vec();
            fft.process(&mut v);
            col.assign(&ndarray::Array1::from(v));
        }
        a
    }

    #[test]
    fn half_spectrum_matches_complex_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [7usize, 8, 18] {
            let x = Array2::from_shape_fn((m, m), |_| rng.random::<f64>() - 0.5);
            let plan = Fft2::new(m);
            let half = plan.forward(x.view()).unwrap();
            let full = full_complex_fft(&x);
            for k in 0..plan.half() {
                for r in 0..m {
                    let d = half[(k, r)] - full[(r, k)];
                    assert!(d.norm() < 1e-12, "m={m} bin ({r},{k})");
                }
            }
            let back = plan.inverse(half).unwrap();
            for (a, b) in back.iter().zip(x.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_wrong_shape() {
        let plan = Fft2::new(8);
        assert!(plan.forward(Array2::zeros((8, 7)).view()).is_err());
    }
}
