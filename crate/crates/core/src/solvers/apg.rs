use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;

use super::opnorm::{estimate_operator_norm, OPNORM_SAFETY};
use super::{InnerOptions, TraceRecord};
use crate::error::{Error, Result};
use crate::fft::{multiply, Fft2, Spectrum};
use crate::grid::{embed_kernel, extract_kernel, ExpandedDomain, FilterEstimate};
use crate::prox::project_simplex_support;

/// The filter subproblem
///
/// `min_h ½ Σ_j ‖z_j − S_N Φ(x_j) h‖² + (λ/2)‖h − h⁽ᵏ⁾‖² + ι_𝒟(h)`
///
/// with `h` restricted to the `(2b+1)²` window Γ. Image spectra are computed
/// once at construction.
pub struct FilterProblem<'a> {
    domain: ExpandedDomain,
    fft: Arc<Fft2>,
    observations: &'a [Array2<f64>],
    image_spectra: Vec<Spectrum>,
    anchor: Array2<f64>,
    half_width: usize,
    lambda: f64,
    lipschitz_bound: f64,
}

impl<'a> FilterProblem<'a> {
    /// `images` live on the expanded grid; with a prefilter `h_p` the images
    /// are replaced by `h_p ⊗ x_j`, which keeps the model `S_N Φ(h_p ⊗ h) x_j`.
    pub fn new(
        domain: ExpandedDomain,
        fft: Arc<Fft2>,
        observations: &'a [Array2<f64>],
        images: &[Array2<f64>],
        prefilter: Option<&Spectrum>,
        anchor: &FilterEstimate,
        lambda: f64,
    ) -> Result<Self> {
        let m = domain.side();
        let n = domain.inner;
        if images.len() != observations.len() || images.is_empty() {
            return Err(Error::Shape("filter step needs matching, non-empty image and observation stacks".into()));
        }
        if observations.iter().any(|z| z.dim() != (n, n)) || images.iter().any(|x| x.dim() != (m, m)) {
            return Err(Error::Shape(format!("expected {n}x{n} observations and {m}x{m} images")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda_h must be finite and >= 0, got {lambda}")));
        }
        if anchor.width() > m {
            return Err(Error::Shape("filter support exceeds the expanded grid".into()));
        }
        let mut image_spectra = Vec::with_capacity(images.len());
        let mut power: Option<Array2<f64>> = None;
        for x in images {
            let mut s = fft.forward(x.view())?;
            if let Some(p) = prefilter {
                s = multiply(p, &s, false);
            }
            let sq = s.mapv(|c| c.norm_sqr());
            power = Some(match power {
                None => sq,
                Some(acc) => acc + sq,
            });
            image_spectra.push(s);
        }
        // Differences of simplex points sum to zero, so the DC bin never
        // enters the curvature seen by the iterates.
        let mut power = power.unwrap_or_default();
        if let Some(dc) = power.get_mut((0, 0)) {
            *dc = 0.0;
        }
        let lipschitz_bound = lambda + power.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            domain,
            fft,
            observations,
            image_spectra,
            anchor: anchor.data().clone(),
            half_width: anchor.half_width(),
            lambda,
            lipschitz_bound,
        })
    }

    fn residuals(&self, h: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        let mut res = self.predictions(h)?;
        for (r, z) in res.iter_mut().zip(self.observations) {
            *r -= z;
        }
        Ok(res)
    }

    fn predictions(&self, h: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        let hh = self.fft.forward(embed_kernel(h, self.domain.side())?.view())?;
        self.image_spectra
            .iter()
            .map(|xs| {
                let full = self.fft.inverse(multiply(xs, &hh, false))?;
                Ok(self.domain.crop(full.view()))
            })
            .collect()
    }

    /// `Σ_j Φ(x_j)ᵀ S_Nᵀ r_j` restricted to Γ.
    fn back_project(&self, res: &[Array2<f64>]) -> Result<Array2<f64>> {
        let mut acc: Option<Spectrum> = None;
        for (r, xs) in res.iter().zip(&self.image_spectra) {
            let rs = self.fft.forward(self.domain.zero_pad(r.view()).view())?;
            let term = multiply(xs, &rs, true);
            acc = Some(match acc {
                None => term,
                Some(mut a) => {
                    a += &term;
                    a
                }
            });
        }
        let corr = self.fft.inverse(acc.unwrap_or_else(|| {
            Array2::from_elem((self.fft.half(), self.fft.side()), Complex64::default())
        }))?;
        extract_kernel(corr.view(), self.half_width)
    }

    /// Power-iteration estimate of the data term's curvature over zero-sum
    /// filters on Γ, scaled by the usual safety factor, plus `λ`.
    pub fn curvature_estimate(&self, iterations: usize) -> Result<f64> {
        let w = 2 * self.half_width + 1;
        let centered = |v: &mut Array2<f64>| {
            let mean = v.mean().unwrap_or(0.0);
            v.mapv_inplace(|x| x - mean);
        };
        let mut failure = None;
        let est = estimate_operator_norm(
            |d| {
                let mut d = Array2::from_shape_vec((w, w), d.to_vec()).expect("window-sized vector");
                centered(&mut d);
                let out = self.predictions(d.view()).and_then(|p| self.back_project(&p));
                match out {
                    Ok(mut g) => {
                        centered(&mut g);
                        g.into_raw_vec_and_offset().0
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        vec![0.0; w * w]
                    }
                }
            },
            w * w,
            iterations,
            0xf17e,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((est * OPNORM_SAFETY).powi(2) + self.lambda)
    }

    fn anchor_term(&self, h: ArrayView2<f64>) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        let d: f64 = h.iter().zip(self.anchor.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * self.lambda * d
    }

    pub fn value(&self, h: ArrayView2<f64>) -> Result<f64> {
        let data: f64 = self
            .residuals(h)?
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>())
            .sum();
        Ok(0.5 * data + self.anchor_term(h))
    }

    /// Objective and gradient over the Γ window.
    pub fn value_and_grad(&self, h: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        let res = self.residuals(h)?;
        let data: f64 = res.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum();
        let mut grad = self.back_project(&res)?;
        if self.lambda > 0.0 {
            ndarray::Zip::from(&mut grad).and(h).and(&self.anchor).for_each(|g, &x, &a| {
                *g += self.lambda * (x - a);
            });
        }
        Ok((0.5 * data + self.anchor_term(h), grad))
    }

    /// Lipschitz bound of the gradient on the simplex's affine hull
    /// (`max_{ω≠0} Σ_j |x̂_j(ω)|² + λ`).
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }
}

#[derive(Debug, Clone)]
pub struct FilterStepOutcome {
    pub filter: FilterEstimate,
    pub iterations: usize,
    pub objective: f64,
    /// Last accepted step size.
    pub step: f64,
    pub trace: Vec<TraceRecord>,
}

/// Accelerated proximal gradient with backtracking and a monotone safeguard.
///
/// Momentum weight is `t/(t+3)`; the trial step doubles the previous accepted
/// one and halves until the quadratic upper bound holds. A candidate that
/// would increase the objective is rejected and the momentum restarted.
pub fn solve_filter_step(
    problem: &FilterProblem,
    init: &FilterEstimate,
    opts: &InnerOptions,
    k: usize,
) -> Result<FilterStepOutcome> {
    if init.half_width() != problem.half_width {
        return Err(Error::Shape("initial filter support differs from the problem's".into()));
    }
    let mut u = init.data().clone();
    let mut u_prev = u.clone();
    let mut fu = problem.value(u.view())?;
    if !fu.is_finite() {
        return Err(numerical(0, "non-finite starting objective", vec![fu]));
    }
    let mut history = vec![fu];
    let mut trace = Vec::new();
    let curvature = if opts.norm_iterations > 0 {
        problem.curvature_estimate(opts.norm_iterations)?.min(problem.lipschitz_bound())
    } else {
        problem.lipschitz_bound()
    };
    let mut step = if curvature > 0.0 { 1.0 / curvature } else { 1.0 };
    let mut momentum_t = 0usize;
    let mut iterations = 0;

    for it in 1..=opts.max_apg_iter {
        iterations = it;
        let beta = momentum_t as f64 / (momentum_t as f64 + 3.0);
        let v = &u + &((&u - &u_prev) * beta);
        let (fv, g) = problem.value_and_grad(v.view())?;
        if g.iter().any(|x| !x.is_finite()) || !fv.is_finite() {
            return Err(numerical(it, "non-finite gradient", history));
        }
        if it > 1 {
            step *= 2.0;
        }
        let (cand, fc) = loop {
            let trial = &v - &(&g * step);
            let cand = project_simplex_support(trial.view())?.into_inner();
            let fc = problem.value(cand.view())?;
            let d = &cand - &v;
            let lin: f64 = g.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
            let quad: f64 = d.iter().map(|x| x * x).sum::<f64>() / (2.0 * step);
            let slack = 1e-12 * fv.abs().max(1.0);
            if fc <= fv + lin + quad + slack {
                break (cand, fc);
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(numerical(it, "backtracking step underflow", history));
            }
        };

        if fc > fu {
            // monotone safeguard: keep u, restart momentum
            u_prev = u.clone();
            momentum_t = 0;
            continue;
        }
        let diff: f64 = cand.iter().zip(u.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        u_prev = std::mem::replace(&mut u, cand);
        fu = fc;
        momentum_t += 1;
        history.push(fu);
        let change = diff / norm.max(f64::MIN_POSITIVE);
        let converged = change <= opts.tol;
        if it % opts.check_every.max(1) == 0 || converged || it == opts.max_apg_iter {
            trace.push(TraceRecord {
                solver: "apg".into(),
                k,
                t: it,
                image: None,
                objective: fu,
                primal_change: change,
                step,
            });
        }
        if converged {
            break;
        }
    }
    let filter = project_simplex_support(u.view())?;
    Ok(FilterStepOutcome { filter, iterations, objective: fu, step, trace })
}

fn numerical(iteration: usize, reason: &str, history: Vec<f64>) -> Error {
    let tail = history.len().saturating_sub(10);
    Error::Numerical {
        solver: "apg",
        iteration,
        reason: reason.into(),
        trace: history[tail..].to_vec(),
    }
}
