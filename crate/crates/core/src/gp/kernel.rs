use crate::error::{dim_check, Result};
use crate::gp::ModelSpec;

#[cfg(not(feature = "corrupt-kernel"))]
const SQRT5: f64 = 2.236_067_977_499_79;
// Negative control for `qkg selftest`.
#[cfg(feature = "corrupt-kernel")]
const SQRT5: f64 = 2.3;

#[inline]
fn scaled_dist(x1: &[f64], x2: &[f64], length_scales: &[f64]) -> f64 {
    x1.iter()
        .zip(x2)
        .zip(length_scales)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// ARD Matérn 5/2 covariance without dimension checks.
#[inline]
pub fn matern52(x1: &[f64], x2: &[f64], spec: &ModelSpec) -> f64 {
    let r = scaled_dist(x1, x2, &spec.length_scales);
    let sr = SQRT5 * r;
    spec.signal_variance * (1.0 + sr + sr * sr / 3.0) * (-sr).exp()
}

/// Gradient of [`matern52`] in its first argument, written into `out`.
///
/// `dk/dx1_j = -(5/3) s² (1 + √5 r) e^{-√5 r} (x1_j - x2_j) / ℓ_j²`, which is
/// exactly zero at `x1 == x2`.
#[inline]
pub fn matern52_grad_x1(x1: &[f64], x2: &[f64], spec: &ModelSpec, out: &mut [f64]) {
    let r = scaled_dist(x1, x2, &spec.length_scales);
    let sr = SQRT5 * r;
    let c = -(5.0 / 3.0) * spec.signal_variance * (1.0 + sr) * (-sr).exp();
    for (j, o) in out.iter_mut().enumerate() {
        let l = spec.length_scales[j];
        *o = c * (x1[j] - x2[j]) / (l * l);
    }
}

pub fn kernel_eval(x1: &[f64], x2: &[f64], spec: &ModelSpec) -> Result<f64> {
    dim_check(spec.dim(), x1.len(), "kernel_eval x1")?;
    dim_check(spec.dim(), x2.len(), "kernel_eval x2")?;
    Ok(matern52(x1, x2, spec))
}

pub fn kernel_grad_x1(x1: &[f64], x2: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
    dim_check(spec.dim(), x1.len(), "kernel_grad_x1 x1")?;
    dim_check(spec.dim(), x2.len(), "kernel_grad_x1 x2")?;
    let mut g = vec![0.0; x1.len()];
    matern52_grad_x1(x1, x2, spec, &mut g);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec3() -> ModelSpec {
        ModelSpec {
            mean_const: 0.0,
            signal_variance: 1.7,
            length_scales: vec![0.4, 0.9, 1.3],
            noise_variance: 0.0,
        }
    }

    #[test]
    fn peak_and_symmetry() {
        let s = spec3();
        let a = [0.1, 0.5, 0.2];
        let b = [0.7, 0.3, 0.9];
        assert_eq!(kernel_eval(&a, &a, &s).unwrap(), 1.7);
        assert_eq!(
            kernel_eval(&a, &b, &s).unwrap(),
            kernel_eval(&b, &a, &s).unwrap()
        );
    }

    #[test]
    fn unit_distance_value() {
        // (1 + √5 + 5/3)·e^{-√5}, evaluated with 50-digit arithmetic.
        let s = ModelSpec::isotropic(1, 1.0, 1.0);
        let k = kernel_eval(&[0.0], &[1.0], &s).unwrap();
        assert!((k - 0.523_994_108_831_820_3).abs() < 1e-14, "{k}");
    }

    #[test]
    fn gradient_vanishes_at_coincidence_and_is_antisymmetric() {
        let s = spec3();
        let a = [0.1, 0.5, 0.2];
        let b = [0.7, 0.3, 0.9];
        assert_eq!(kernel_grad_x1(&a, &a, &s).unwrap(), vec![0.0; 3]);
        let gab = kernel_grad_x1(&a, &b, &s).unwrap();
        let gba = kernel_grad_x1(&b, &a, &s).unwrap();
        for (x, y) in gab.iter().zip(&gba) {
            assert!((x + y).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let s = spec3();
        let h = 1e-5;
        for _ in 0..30 {
            let a: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let g = kernel_grad_x1(&a, &b, &s).unwrap();
            for j in 0..3 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[j] += h;
                am[j] -= h;
                let fd = (matern52(&ap, &b, &s) - matern52(&am, &b, &s)) / (2.0 * h);
                let err = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                assert!(err < 1e-6, "j={j} fd={fd} g={}", g[j]);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let s = spec3();
        assert!(kernel_eval(&[0.0, 1.0], &[0.0, 1.0, 2.0], &s).is_err());
        assert!(kernel_grad_x1(&[0.0; 3], &[0.0; 2], &s).is_err());
    }
}
