//! Central finite differences, the gradient oracle used across the tests.

use super::tensor::{Real, Tensor};

/// Central-difference gradient of a scalar-valued function at `x`:
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
///
/// `f` receives a detached copy, so the probe never touches the graph of the
/// implementation under test.
pub fn finite_difference_grad<T: Real>(
    f: impl Fn(&Tensor<T>) -> T,
    x: &Tensor<T>,
    h: T,
) -> Vec<T> {
    let base = x.data().to_vec();
    let shape = x.shape().to_vec();
    let two = T::one() + T::one();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let fp = f(&Tensor::from_vec(&shape, plus));
            let fm = f(&Tensor::from_vec(&shape, minus));
            (fp - fm) / (two * h)
        })
        .collect()
}

/// Largest relative error between an analytic gradient and its
/// finite-difference estimate. Differences below 1e-9 count as exact:
/// zero-gradient coordinates carry finite-difference rounding noise
/// (~1e-11) that would otherwise dominate the relative measure.
pub fn max_rel_err<T: Real>(analytic: &[T], numeric: &[T]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let (a, n) = (a.into_f64(), n.into_f64());
            if (a - n).abs() < 1e-9 {
                return 0.0;
            }
            let denom = a.abs().max(n.abs()).max(1e-8);
            (a - n).abs() / denom
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]);
        let g = finite_difference_grad(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-6);
        assert!((g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn silu_sum_gradient_at_zero() {
        // silu'(0) = 1/2 per coordinate.
        let x = Tensor::<f64>::zeros(&[3]);
        let g = finite_difference_grad(|t| t.silu().sum_all().item(), &x, 1e-5);
        for v in g {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn tracked_matmul_gradient_matches_fd() {
        let mut rng = super::super::Rng::new(11);
        let a = rng.tensor_normal::<f64>(&[5, 7], 1.0).requiring_grad();
        let b = rng.tensor_normal::<f64>(&[7, 3], 1.0);
        let loss = a.matmul(&b).sum_all();
        loss.backward();
        let analytic = a.grad().unwrap();
        let numeric = finite_difference_grad(|t| t.matmul(&b).sum_all().item(), &a, 1e-6);
        assert!(max_rel_err(&analytic, &numeric) < 1e-6);
    }
}
