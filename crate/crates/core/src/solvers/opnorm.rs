use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multiplier applied to power-iteration norm estimates before they set steps.
pub const OPNORM_SAFETY: f64 = 1.05;

/// Power-iteration estimate of `‖K‖`, given `normal(x) = KᵀK x` on vectors of
/// length `dim`. Deterministic for a fixed seed.
pub fn estimate_operator_norm<F>(mut normal: F, dim: usize, iterations: usize, seed: u64) -> f64
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut eig = 0.0;
    for _ in 0..iterations.max(1) {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = normal(&x);
        // Rayleigh quotient of KᵀK at the unit vector x
        eig = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        x = y;
    }
    eig.max(0.0).sqrt()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_norm() {
        let n = estimate_operator_norm(|x| x.to_vec(), 50, 5, 1);
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let n = estimate_operator_norm(
            |x| x.iter().zip(&d).map(|(v, s)| v * s * s).collect(),
            10,
            400,
            3,
        );
        assert!((n - 1.0).abs() < 1e-6);
    }
}
