//! Proximal operators and projections for the two subproblems.
//!
//! `prox_{νf}(z) = argmin_u f(u) + ‖u − z‖² / (2ν)`.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::grid::FilterEstimate;

/// Soft thresholding, the prox of `t‖·‖₁`.
pub fn prox_l1(v: &mut [f64], threshold: f64) {
    debug_assert!(threshold >= 0.0);
    for x in v {
        let a = x.abs() - threshold;
        *x = if a > 0.0 { a.copysign(*x) } else { 0.0 };
    }
}

/// Prox of `½‖Z − ·‖²` with step `ν`: `(v + νZ)/(1 + ν)`.
pub fn prox_quadratic_fidelity(v: &mut [f64], anchor: &[f64], step: f64) {
    let s = 1.0 / (1.0 + step);
    for (x, &z) in v.iter_mut().zip(anchor) {
        *x = (*x + step * z) * s;
    }
}

/// Prox of the cost-to-move `(λ/2)‖· − X⁽ᵏ⁾‖²` with step `ν`.
pub fn prox_cost_to_move(v: &mut [f64], anchor: &[f64], lambda: f64, step: f64) {
    debug_assert!(lambda >= 0.0);
    let w = step * lambda;
    let s = 1.0 / (1.0 + w);
    for (x, &a) in v.iter_mut().zip(anchor) {
        *x = (*x + w * a) * s;
    }
}

/// `prox_{νF*}(z) = z − ν prox_{F/ν}(z/ν)`, with `prox_f(buf, step)` evaluating
/// the prox of `F` in place for any positive step.
pub fn conjugate_prox<P>(z: &mut [f64], step: f64, prox_f: P)
where
    P: FnOnce(&mut [f64], f64),
{
    let mut scaled: Vec<f64> = z.iter().map(|v| v / step).collect();
    prox_f(&mut scaled, 1.0 / step);
    for (x, p) in z.iter_mut().zip(scaled) {
        *x -= step * p;
    }
}

/// Projection onto P₀: zero on Ω, non-negative elsewhere (border included).
///
/// `omega` holds flat indices into the image.
pub fn project_p0(x: &mut Array2<f64>, omega: &[usize]) {
    x.mapv_inplace(|v| v.max(0.0));
    let flat = x.as_slice_mut().expect("standard layout");
    for &i in omega {
        flat[i] = 0.0;
    }
}

/// Euclidean projection of `v` onto the probability simplex (sort based).
pub fn project_simplex(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Projection onto 𝒟: zero outside the `(2b+1)²` central window Γ, simplex
/// projection inside it. `grid` is an arbitrary `(2b+1)²` window array.
pub fn project_simplex_support(window: ArrayView2<f64>) -> Result<FilterEstimate> {
    let (r, c) = window.dim();
    if r != c || r % 2 == 0 {
        return Err(Error::Shape(format!("support window must be odd and square, got {r}x{c}")));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("cannot project a non-finite filter".into()));
    }
    let mut v: Vec<f64> = window.iter().copied().collect();
    project_simplex(&mut v);
    // renormalize away round-off so the unit-mass invariant holds tightly
    let mass: f64 = v.iter().sum();
    if mass > 0.0 {
        v.iter_mut().for_each(|x| *x /= mass);
    }
    FilterEstimate::new(Array2::from_shape_vec((r, c), v).expect("shape"))
}

/// Squared distance helper used by the solvers.
pub fn squared_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y))
}
