//! Newton–Schulz orthonormalization.

use super::tensor::{Real, Tensor};

/// Quintic iteration coefficients; the standard choice for fast convergence
/// of singular values toward 1 without exact orthogonality.
const NS_A: f64 = 3.4445;
const NS_B: f64 = -4.7750;
const NS_C: f64 = 2.0315;

/// Floor on the Frobenius norm in the initial scaling; keeps the zero matrix
/// a fixed point without perturbing the normalized start of nonzero inputs
/// (so the procedure is exactly scale-invariant).
const NS_EPS: f64 = 1e-7;

/// Drive the singular values of `g` toward 1.
///
/// The input is first scaled to unit Frobenius norm, then `iters` rounds of
/// `X <- a X + (b X + c X X^T X) X^T X` are applied (operating on the smaller
/// Gram side for rectangular inputs). An all-zero input is a fixed point and
/// maps to the all-zero matrix. All steps are ordinary tensor ops, so
/// gradients flow through the whole procedure.
pub fn newton_schulz_orthonormalize<T: Real>(g: &Tensor<T>, iters: usize) -> Tensor<T> {
    assert_eq!(g.rank(), 2, "newton_schulz expects a matrix, got {:?}", g.shape());
    let (rows, cols) = (g.dim(0), g.dim(1));
    let norm = g.frobenius_norm().clamp(T::from_f64(NS_EPS), T::infinity());
    let mut x = g.scale_by(&norm.recip());
    let transposed = rows > cols;
    if transposed {
        x = x.transpose2();
    }
    let (a, b, c) = (T::from_f64(NS_A), T::from_f64(NS_B), T::from_f64(NS_C));
    for _ in 0..iters {
        let gram = x.matmul_nt(&x); // X X^T, the small side
        let gram2 = gram.matmul(&gram);
        let poly = gram.mul_scalar(b).add(&gram2.mul_scalar(c));
        x = x.mul_scalar(a).add(&poly.matmul(&x));
    }
    if transposed {
        x = x.transpose2();
    }
    x
}

#[cfg(test)]
mod tests {
    use super::super::rng::Rng;
    use super::*;

    fn singular_values(t: &Tensor<f64>) -> Vec<f64> {
        let (m, n) = (t.dim(0), t.dim(1));
        let mat = nalgebra::DMatrix::from_row_slice(m, n, t.data());
        let mut sv: Vec<f64> = mat.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    #[test]
    fn orthogonal_input_stays_near_orthonormal() {
        // A 4x4 rotation-ish orthogonal matrix (block diagonal of 2-D rotations).
        let (c, s) = (0.6f64, 0.8f64);
        let q = Tensor::from_vec(
            &[4, 4],
            vec![c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, c, s, 0.0, 0.0, -s, c],
        );
        let y = newton_schulz_orthonormalize(&q, 5);
        for sv in singular_values(&y) {
            assert!((0.7..=1.3).contains(&sv), "singular value {sv} out of range");
        }
    }

    #[test]
    fn skewed_diagonal_is_equalized() {
        let g = Tensor::from_vec(&[2, 2], vec![10.0, 0.0, 0.0, 0.1]);
        let y = newton_schulz_orthonormalize(&g, 5);
        for sv in singular_values(&y) {
            assert!((0.5..=1.3).contains(&sv), "singular value {sv} out of range");
        }
    }

    #[test]
    fn zero_matrix_is_fixed_point() {
        let y = newton_schulz_orthonormalize(&Tensor::<f64>::zeros(&[3, 5]), 5);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scale_invariant_up_to_normalization_eps() {
        let mut rng = Rng::new(5);
        let g = rng.tensor_normal::<f64>(&[6, 4], 1.0);
        let base = newton_schulz_orthonormalize(&g, 5);
        for c in [1e-3, 0.1, 7.3, 1e3] {
            let scaled = newton_schulz_orthonormalize(&g.mul_scalar(c), 5);
            for (a, b) in base.data().iter().zip(scaled.data()) {
                assert!((a - b).abs() < 1e-5, "scale {c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gradients_flow_through_iterations() {
        let mut rng = Rng::new(9);
        let g = rng.tensor_normal::<f64>(&[3, 3], 1.0).requiring_grad();
        let y = newton_schulz_orthonormalize(&g, 3).sum_all();
        y.backward();
        let grad = g.grad().expect("gradient must reach the input");
        assert!(grad.iter().any(|&v| v != 0.0));
    }
}
