use ndarray::Array2;
use rayon::prelude::*;

use super::{estimate_operator_norm, InnerOptions, TraceRecord, DIVERGENCE_FACTOR, OPNORM_SAFETY};
use crate::error::{Error, Result};
use crate::grid::ConvOperator;
use crate::prox::{conjugate_prox, project_p0, prox_cost_to_move, prox_l1, prox_quadratic_fidelity};
use crate::wavelet::{CoeffMask, WaveletDictionary};

/// The image subproblem
///
/// `min_X ρ Σ_j ‖S_j Ψᵀ x_j‖₁ + ½‖Z − S_N Φ(h) X‖² + (λ/2)‖X − X⁽ᵏ⁾‖² + ι_{P₀}(X)`
///
/// on the expanded domain. The problem separates over observations, so each
/// image runs its own primal–dual iteration with the same step sizes.
pub struct ImageProblem<'a> {
    pub dict: &'a WaveletDictionary,
    /// `S_N Φ(h)`, prefilter already folded in.
    pub op: &'a ConvOperator,
    /// Modified observations `z_j` (`n × n`).
    pub observations: &'a [Array2<f64>],
    /// Coefficient selection of the sparsity term for each image.
    pub masks: &'a [CoeffMask],
    /// Known-zero pixels of each image, flat indices into the expanded grid.
    pub zero_sets: &'a [Vec<usize>],
    pub rho: f64,
    /// Cost-to-move weight; `0` drops the third dual block entirely.
    pub lambda: f64,
    /// Anchors `x_j⁽ᵏ⁾` of the cost-to-move term (ignored when `lambda == 0`).
    pub anchors: &'a [Array2<f64>],
}

impl ImageProblem<'_> {
    fn check(&self, init: &[Array2<f64>]) -> Result<()> {
        let p = self.observations.len();
        let m = self.op.domain().side();
        if p == 0 {
            return Err(Error::Shape("image step needs at least one observation".into()));
        }
        if self.masks.len() != p || self.zero_sets.len() != p || init.len() != p {
            return Err(Error::Shape("per-observation inputs have inconsistent lengths".into()));
        }
        if self.lambda > 0.0 && self.anchors.len() != p {
            return Err(Error::Shape("cost-to-move anchors missing".into()));
        }
        if self.rho < 0.0 || self.lambda < 0.0 || !self.rho.is_finite() || !self.lambda.is_finite() {
            return Err(Error::Config(format!("need rho, lambda >= 0, got {} / {}", self.rho, self.lambda)));
        }
        if init.iter().any(|x| x.dim() != (m, m)) {
            return Err(Error::Shape(format!("initial images must be {m}x{m}")));
        }
        Ok(())
    }

    /// Objective of image `j` at `u` (constraint excluded).
    pub fn objective(&self, j: usize, u: &Array2<f64>) -> Result<f64> {
        let c = self.dict.analyze(u.view())?;
        let sparsity = self.rho * self.masks[j].l1(&c);
        let fit = self.op.apply(u.view())?;
        let data: f64 = fit
            .iter()
            .zip(self.observations[j].iter())
            .map(|(a, z)| (z - a) * (z - a))
            .sum::<f64>();
        let mut total = sparsity + 0.5 * data;
        if self.lambda > 0.0 {
            let d: f64 = u.iter().zip(self.anchors[j].iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            total += 0.5 * self.lambda * d;
        }
        Ok(total)
    }

    pub fn total_objective(&self, images: &[Array2<f64>]) -> Result<f64> {
        let mut s = 0.0;
        for (j, u) in images.iter().enumerate() {
            s += self.objective(j, u)?;
        }
        Ok(s)
    }
}

/// Dual variables of one image: wavelet block, data block, cost-to-move block.
#[derive(Debug, Clone)]
pub struct ImageDuals {
    pub v1: Vec<f64>,
    pub v2: Array2<f64>,
    pub v3: Array2<f64>,
}

/// Dual state of the whole stack, kept between outer iterations for warm starts.
#[derive(Debug, Clone)]
pub struct CpDuals {
    pub images: Vec<ImageDuals>,
}

impl CpDuals {
    pub fn zeros(count: usize, dict: &WaveletDictionary, inner: usize) -> Self {
        let m = dict.side();
        let one = ImageDuals {
            v1: vec![0.0; dict.num_coefficients()],
            v2: Array2::zeros((inner, inner)),
            v3: Array2::zeros((m, m)),
        };
        Self { images: vec![one; count] }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ImageStepOutcome {
    pub images: Vec<Array2<f64>>,
    pub iterations: Vec<usize>,
    pub objective: f64,
    /// Common dual/primal step `ν = β`.
    pub step: f64,
    pub trace: Vec<TraceRecord>,
}

/// Approximately solves the image subproblem starting from `init`, updating
/// `duals` in place. Every returned image lies in P₀ exactly.
pub fn solve_image_step(
    problem: &ImageProblem,
    init: &[Array2<f64>],
    duals: &mut CpDuals,
    opts: &InnerOptions,
    k: usize,
) -> Result<ImageStepOutcome> {
    problem.check(init)?;
    let p = init.len();
    let inner = problem.op.domain().inner;
    if duals.len() != p {
        *duals = CpDuals::zeros(p, problem.dict, inner);
    }
    let norm = operator_norm_bound(problem, opts)?;
    let step = 0.99 / norm;

    let results: Vec<Result<(Array2<f64>, usize, f64, Vec<TraceRecord>)>> = init
        .par_iter()
        .zip(duals.images.par_iter_mut())
        .enumerate()
        .map(|(j, (x0, d))| cp_single(problem, j, x0, d, step, opts, k))
        .collect();

    let mut images = Vec::with_capacity(p);
    let mut iterations = Vec::with_capacity(p);
    let mut objective = 0.0;
    let mut trace = Vec::new();
    for r in results {
        let (u, it, obj, tr) = r?;
        images.push(u);
        iterations.push(it);
        objective += obj;
        trace.extend(tr);
    }
    Ok(ImageStepOutcome { images, iterations, objective, step, trace })
}

/// `‖K‖` bound for K = [S Ψᵀ; S_N Φ; I]: power iteration with the full
/// detail selection (which dominates every Θ_j), times the safety factor,
/// capped by the triangle bound `1 + max|Ĥ|² + 1`.
fn operator_norm_bound(problem: &ImageProblem, opts: &InnerOptions) -> Result<f64> {
    let dict = problem.dict;
    let op = problem.op;
    let m = dict.side();
    let with_identity = problem.lambda > 0.0;
    let max_gain = op.kernel_spectrum().iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let bound = (1.0 + max_gain + if with_identity { 1.0 } else { 0.0 }).sqrt();
    if opts.norm_iterations == 0 {
        return Ok(bound);
    }
    let area = m * m;
    let normal = |x: &[f64]| -> Vec<f64> {
        let img = Array2::from_shape_vec((m, m), x.to_vec()).expect("square");
        let mut c = dict.analyze(img.view()).expect("dictionary shape");
        c[..area].fill(0.0);
        let mut out = dict.synthesize(&c).expect("layout");
        let fit = op.apply(img.view()).expect("domain shape");
        out += &op.adjoint(fit.view()).expect("domain shape");
        if with_identity {
            out += &img;
        }
        out.into_raw_vec_and_offset().0
    };
    let est = estimate_operator_norm(normal, area, opts.norm_iterations, 0x5eed) * OPNORM_SAFETY;
    Ok(est.min(bound))
}

fn cp_single(
    problem: &ImageProblem,
    j: usize,
    x0: &Array2<f64>,
    duals: &mut ImageDuals,
    step: f64,
    opts: &InnerOptions,
    k: usize,
) -> Result<(Array2<f64>, usize, f64, Vec<TraceRecord>)> {
    let dict = problem.dict;
    let op = problem.op;
    let mask = &problem.masks[j];
    let z = problem.observations[j].as_slice().expect("standard layout");
    let rho = problem.rho;
    let lambda = problem.lambda;
    let with_identity = lambda > 0.0;
    let anchor = if with_identity { problem.anchors[j].as_slice() } else { None };

    let mut u = x0.clone();
    project_p0(&mut u, &problem.zero_sets[j]);
    let mut ubar = u.clone();
    if !with_identity {
        duals.v3.fill(0.0);
    }

    let mut trace = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let start_obj = problem.objective(j, &u)?;
    if !start_obj.is_finite() {
        return Err(numerical(0, "non-finite starting objective", history));
    }
    history.push(start_obj);
    let mut iterations = 0;

    for t in 1..=opts.max_cp_iter {
        iterations = t;
        // wavelet block: prox of (ρ‖·‖₁)* on the selected coefficients
        let c = dict.analyze(ubar.view())?;
        for ((v, &ci), &keep) in duals.v1.iter_mut().zip(&c).zip(mask.bits()) {
            *v = if keep { *v + step * ci } else { 0.0 };
        }
        conjugate_prox(&mut duals.v1, step, |w, s| prox_l1(w, rho * s));

        // data block: prox of (½‖z − ·‖²)*
        let fit = op.apply(ubar.view())?;
        duals.v2.zip_mut_with(&fit, |v, &a| *v += step * a);
        conjugate_prox(duals.v2.as_slice_mut().unwrap(), step, |w, s| {
            prox_quadratic_fidelity(w, z, s)
        });

        // cost-to-move block
        if let Some(a) = anchor {
            duals.v3.zip_mut_with(&ubar, |v, &x| *v += step * x);
            conjugate_prox(duals.v3.as_slice_mut().unwrap(), step, |w, s| {
                prox_cost_to_move(w, a, lambda, s)
            });
        }

        // primal: u⁺ = P₀(u − β Kᵀv)
        let mut grad = dict.synthesize(&duals.v1)?;
        grad += &op.adjoint(duals.v2.view())?;
        if with_identity {
            grad += &duals.v3;
        }
        let mut next = &u - &(grad * step);
        project_p0(&mut next, &problem.zero_sets[j]);

        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        ndarray::Zip::from(&mut ubar).and(&next).and(&u).for_each(|b, &n, &o| {
            *b = 2.0 * n - o;
            diff2 += (n - o) * (n - o);
            norm2 += n * n;
        });
        u = next;
        let change = if norm2 > 0.0 { (diff2 / norm2).sqrt() } else { diff2.sqrt() };
        if !change.is_finite() {
            return Err(numerical(t, "non-finite primal iterate", history));
        }

        let converged = change <= opts.tol;
        if t % opts.check_every.max(1) == 0 || converged || t == opts.max_cp_iter {
            let obj = problem.objective(j, &u)?;
            history.push(obj);
            if !obj.is_finite() {
                return Err(numerical(t, "non-finite objective", history));
            }
            if start_obj > 0.0 && obj > DIVERGENCE_FACTOR * start_obj {
                return Err(numerical(t, "objective grew tenfold (divergence)", history));
            }
            trace.push(TraceRecord {
                solver: "cp".into(),
                k,
                t,
                image: Some(j),
                objective: obj,
                primal_change: change,
                step,
            });
        }
        if converged {
            break;
        }
    }
    let obj = *history.last().unwrap();
    Ok((u, iterations, obj, trace))
}

fn numerical(iteration: usize, reason: &str, history: Vec<f64>) -> Error {
    let tail = history.len().saturating_sub(10);
    Error::Numerical {
        solver: "chambolle-pock",
        iteration,
        reason: reason.into(),
        trace: history[tail..].to_vec(),
    }
}
