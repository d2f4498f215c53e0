//! Independent reference computations shared by the oracle and acceptance
//! suites. Each returns the worst error it saw.
#![allow(dead_code)]

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transit_deconv::fft::Fft2;
use transit_deconv::grid::{prefilter_spectrum, ConvOperator, DiskGeometry, ExpandedDomain, FilterEstimate};
use transit_deconv::prox::{conjugate_prox, project_simplex, prox_l1, prox_quadratic_fidelity};
use transit_deconv::simkit::{FilterSpec, SyntheticScenario};
use transit_deconv::solvers::FilterProblem;
use transit_deconv::wavelet::WaveletDictionary;

/// 48² cutouts of a 160² texture, radius-8 disk at the patch center.
pub fn small_scenario(filter: FilterSpec, patches: usize, bsnr_db: Option<f64>, seed: u64) -> SyntheticScenario {
    let origins = [(0, 0), (0, 100), (100, 0), (100, 100)];
    SyntheticScenario {
        texture_side: 160,
        texture_seed: 11,
        n: 48,
        origins: origins[..patches].to_vec(),
        disk: DiskGeometry::new((24.0, 24.0), 8.0).unwrap(),
        filter,
        bsnr_db,
        seed,
        min_separation: 60.0,
    }
}

pub fn small_gaussian() -> FilterSpec {
    FilterSpec::Gaussian { half_width: 3, sigma_h: 0.8, sigma_v: 1.4, rotation_deg: 30.0 }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random::<f64>())
}

pub fn random_filter(r: &mut ChaCha8Rng, b: usize) -> FilterEstimate {
    let raw = uniform(r, 2 * b + 1, 2 * b + 1);
    let s = raw.sum();
    FilterEstimate::new(raw / s).unwrap()
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn rel(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let d: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let s: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / s.max(f64::MIN_POSITIVE)
}

/// Circular convolution by direct summation, kernel centered at `(b, b)`.
pub fn direct_circular(x: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let m = x.nrows();
    let b = (h.nrows() / 2) as isize;
    Array2::from_shape_fn((m, m), |(i, j)| {
        let mut acc = 0.0;
        for u in -b..=b {
            for v in -b..=b {
                let r = (i as isize - u).rem_euclid(m as isize) as usize;
                let c = (j as isize - v).rem_euclid(m as isize) as usize;
                acc += h[((u + b) as usize, (v + b) as usize)] * x[(r, c)];
            }
        }
        acc
    })
}

/// FFT convolution (full grid and cropped forward model) against direct sums.
pub fn fft_vs_direct(instances: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let mut r = rng(1000 + k as u64);
        let (n, b) = if k % 2 == 0 { (8, 1) } else { (12, 2) };
        let dom = ExpandedDomain::new(n, b);
        let m = dom.side();
        let h = random_filter(&mut r, b);
        let x = uniform(&mut r, m, m) - 0.3;
        let op = ConvOperator::new(dom, Arc::new(Fft2::new(m)), &h, None).unwrap();
        let direct = direct_circular(&x, h.data());
        worst = worst.max(rel(&op.convolve_full(x.view()).unwrap(), &direct));
        worst = worst.max(rel(&op.apply(x.view()).unwrap(), &dom.crop(direct.view())));
    }
    worst
}

/// `⟨A x, y⟩ = ⟨x, Aᵀ y⟩` for the cropped convolution (with and without a
/// prefilter) and for the wavelet analysis/synthesis pair.
pub fn adjoint_dot_tests(pairs: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let mut r = rng(2000 + k as u64);
        let (n, b) = (10 + 2 * (k % 3), 1 + k % 3);
        let dom = ExpandedDomain::new(n, b);
        let m = dom.side();
        let fft = Arc::new(Fft2::new(m));
        let h = random_filter(&mut r, b);
        let pre = if k % 2 == 1 { Some(prefilter_spectrum(&fft, uniform(&mut r, 3, 3).view()).unwrap()) } else { None };
        let op = ConvOperator::new(dom, fft, &h, pre.as_ref()).unwrap();
        let x = uniform(&mut r, m, m) - 0.5;
        let y = uniform(&mut r, n, n) - 0.5;
        let lhs = dot(&op.apply(x.view()).unwrap(), &y);
        let rhs = dot(&x, &op.adjoint(y.view()).unwrap());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));

        let side = 16 + 4 * (k % 3);
        let dict = WaveletDictionary::new(side, 1 + k % 3).unwrap();
        let u = uniform(&mut r, side, side) - 0.5;
        let c: Vec<f64> = (0..dict.num_coefficients()).map(|_| r.random::<f64>() - 0.5).collect();
        let lhs: f64 = dict.analyze(u.view()).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs = dot(&u, &dict.synthesize(&c).unwrap());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
    }
    worst
}

/// Simplex projection by enumerating every support set: on a support S the
/// KKT point is `v_i − θ` with `θ = (Σ_S v − 1)/|S|`; the best feasible one is
/// the projection.
pub fn simplex_by_enumeration(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << d) {
        let idx: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        let theta = (idx.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / idx.len() as f64;
        let mut p = vec![0.0; d];
        let mut ok = true;
        for &i in &idx {
            p[i] = v[i] - theta;
            ok &= p[i] >= -1e-15;
        }
        if !ok {
            continue;
        }
        let cost: f64 = p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, p));
        }
    }
    best.expect("some support is always feasible").1
}

pub fn simplex_vs_enumeration(instances: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng(3000);
    for _ in 0..instances {
        let v: Vec<f64> = (0..6).map(|_| 3.0 * r.random::<f64>() - 1.0).collect();
        let oracle = simplex_by_enumeration(&v);
        let mut p = v.clone();
        project_simplex(&mut p);
        worst = worst.max(p.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    worst
}

/// Moreau decomposition `z = prox_{νf}(z) + ν prox_{f*/ν}(z/ν)` with the
/// conjugate proxes written in closed form, for the ℓ1 term and the
/// quadratic fidelity.
pub fn moreau_identity() -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng(4000);
    for trial in 0..50 {
        let nu = 0.05 + 3.0 * r.random::<f64>();
        let t = 0.1 + r.random::<f64>();
        let z: Vec<f64> = (0..40).map(|_| 6.0 * r.random::<f64>() - 3.0).collect();
        let anchor: Vec<f64> = (0..40).map(|_| 4.0 * r.random::<f64>() - 2.0).collect();

        let mut p = z.clone();
        if trial % 2 == 0 {
            prox_l1(&mut p, nu * t);
        } else {
            prox_quadratic_fidelity(&mut p, &anchor, nu);
        }
        for i in 0..z.len() {
            let u = z[i] / nu;
            // (t‖·‖₁)* is the indicator of the t-box; ½‖a − ·‖² has conjugate ½‖w‖² + ⟨w, a⟩
            let conj = if trial % 2 == 0 { u.clamp(-t, t) } else { (nu * u - anchor[i]) / (1.0 + nu) };
            worst = worst.max((p[i] + nu * conj - z[i]).abs());
        }

        // the library's conjugate prox against the same closed forms
        let mut c = z.clone();
        if trial % 2 == 0 {
            conjugate_prox(&mut c, nu, |buf, s| prox_l1(buf, s * t));
            for (ci, zi) in c.iter().zip(&z) {
                worst = worst.max((ci - zi.clamp(-t, t)).abs());
            }
        } else {
            conjugate_prox(&mut c, nu, |buf, s| prox_quadratic_fidelity(buf, &anchor, s));
            for i in 0..z.len() {
                worst = worst.max((c[i] - (z[i] - nu * anchor[i]) / (1.0 + nu)).abs());
            }
        }
    }
    worst
}

pub fn udwt_round_trip() -> f64 {
    let mut worst: f64 = 0.0;
    for (k, (side, levels)) in [(16, 1), (24, 2), (40, 3), (64, 3), (96, 3)].into_iter().enumerate() {
        let mut r = rng(5000 + k as u64);
        let dict = WaveletDictionary::new(side, levels).unwrap();
        let x = uniform(&mut r, side, side) * 100.0 - 20.0;
        let back = dict.synthesize(&dict.analyze(x.view()).unwrap()).unwrap();
        worst = worst.max(rel(&back, &x));
    }
    worst
}

/// Filter-step gradient against central differences on random 5×5 windows.
pub fn filter_gradient_vs_fd(instances: u64) -> f64 {
    let (n, b) = (10, 2);
    let dom = ExpandedDomain::new(n, b);
    let m = dom.side();
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(6000 + seed);
        let xs: Vec<Array2<f64>> = (0..2).map(|_| uniform(&mut r, m, m)).collect();
        let zs: Vec<Array2<f64>> = (0..2).map(|_| uniform(&mut r, n, n)).collect();
        let anchor = random_filter(&mut r, b);
        let fft = Arc::new(Fft2::new(m));
        let pre = prefilter_spectrum(&fft, uniform(&mut r, 3, 3).view()).unwrap();
        let prefilter = if seed % 2 == 1 { Some(&pre) } else { None };
        let fp = FilterProblem::new(dom, fft.clone(), &zs, &xs, prefilter, &anchor, 0.7).unwrap();
        let h = uniform(&mut r, 5, 5) - 0.3;
        let (_, g) = fp.value_and_grad(h.view()).unwrap();
        let eps = 1e-5;
        let fd = Array2::from_shape_fn((5, 5), |(i, j)| {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[(i, j)] += eps;
            hm[(i, j)] -= eps;
            (fp.value(hp.view()).unwrap() - fp.value(hm.view()).unwrap()) / (2.0 * eps)
        });
        worst = worst.max(rel(&fd, &g));
    }
    worst
}
