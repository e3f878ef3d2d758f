//! Matrix exponential of antisymmetric generators and its derivative.
//!
//! `exp(X)` for real antisymmetric `X` is evaluated through the Hermitian
//! eigendecomposition of `iX`. The directional derivative uses the divided
//! differences of the exponential in the eigenbasis (the diagonal limit is
//! `exp(lambda)`), and the adjoint of that linear map supplies the chain rule
//! from orbital-rotation gradients to generator gradients.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::df::DfError;
use crate::linalg::{self, CMatrix};

/// Tolerance on `‖X + X^T‖_∞` for inputs claiming antisymmetry.
const ANTISYM_TOL: f64 = 1e-10;

/// Eigen-data of `exp(X)` reusable for derivative evaluations.
pub struct ExpmAntisym {
    u: DMatrix<f64>,
    w: CMatrix,
    /// Divided differences `phi_kl = (e^{l_k} - e^{l_l}) / (l_k - l_l)` of
    /// the exponential over the (purely imaginary) eigenvalues of `X`.
    phi: CMatrix,
}

pub fn expm_antisymmetric(x: &DMatrix<f64>) -> Result<ExpmAntisym, DfError> {
    let n = x.nrows();
    if linalg::max_abs(&(x + x.transpose())) > ANTISYM_TOL {
        return Err(DfError::NotAntisymmetric);
    }
    let i = Complex64::new(0.0, 1.0);
    let mut b = CMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            b[(r, c)] = i * x[(r, c)];
        }
    }
    // b = iX is Hermitian; eigenvalues a are real, X = W diag(-i a) W^H
    let (a, w) = linalg::eigh_complex(&b);
    let lambda: Vec<Complex64> = a.iter().map(|&ak| -i * ak).collect();
    let mut phi = CMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let diff = lambda[k] - lambda[l];
            phi[(k, l)] = if diff.norm() < 1e-8 {
                ((lambda[k] + lambda[l]) * 0.5).exp()
            } else {
                (lambda[k].exp() - lambda[l].exp()) / diff
            };
        }
    }
    let mut diag = CMatrix::zeros(n, n);
    for k in 0..n {
        diag[(k, k)] = lambda[k].exp();
    }
    let uc = &w * diag * w.adjoint();
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut imag_max = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            u[(r, c)] = uc[(r, c)].re;
            imag_max = imag_max.max(uc[(r, c)].im.abs());
        }
    }
    debug_assert!(imag_max < 1e-10, "exp of antisymmetric must be real");
    Ok(ExpmAntisym { u, w, phi })
}

impl ExpmAntisym {
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `d exp(X)[dX] = W [(W^H dX W) ∘ phi] W^H`.
    pub fn directional_derivative(&self, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.u.nrows();
        let mut dxc = CMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                dxc[(r, c)] = Complex64::new(dx[(r, c)], 0.0);
            }
        }
        let mid = self.w.adjoint() * dxc * &self.w;
        let hadamard = mid.component_mul(&self.phi);
        let duc = &self.w * hadamard * self.w.adjoint();
        let mut du = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                du[(r, c)] = duc[(r, c)].re;
            }
        }
        du
    }

    /// Adjoint of the derivative map under the real trace inner product:
    /// given `G = dO/dU`, returns the dense `dO/dX` before antisymmetric
    /// projection. The caller restricts to independent parameters with
    /// `A - A^T`.
    pub fn adjoint_gradient(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.u.nrows();
        let mut gc = CMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                gc[(r, c)] = Complex64::new(g[(r, c)], 0.0);
            }
        }
        // tr(G^T dU) = tr(P (Q ∘ phi)) with P = W^H G^T W, Q = W^H dX W,
        // so dO/dX = conj(W) (P^T ∘ phi) W^T.
        let p = self.w.adjoint() * gc.transpose() * &self.w;
        let c = p.transpose().component_mul(&self.phi);
        let full = self.w.conjugate() * c * self.w.transpose();
        let mut out = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for cc in 0..n {
                out[(r, cc)] = full[(r, cc)].re;
            }
        }
        out
    }
}

/// Gradient of a scalar through `U = exp(X)` restricted to the antisymmetric
/// parameter space: entry `(p, q)` is the derivative along `E_pq - E_qp`.
pub fn antisym_gradient(expm: &ExpmAntisym, grad_u: &DMatrix<f64>) -> DMatrix<f64> {
    let a = expm.adjoint_gradient(grad_u);
    &a - a.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::df::test_support::random_antisym;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gives_identity() {
        let e = expm_antisymmetric(&DMatrix::zeros(3, 3)).unwrap();
        assert!(linalg::max_abs(&(e.u() - DMatrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn two_by_two_closed_form() {
        let theta = 0.37;
        let x = DMatrix::from_row_slice(2, 2, &[0.0, theta, -theta, 0.0]);
        let e = expm_antisymmetric(&x).unwrap();
        let expect = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()],
        );
        assert!(linalg::max_abs(&(e.u() - expect)) < 1e-14);
    }

    #[test]
    fn result_is_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x = random_antisym(5, &mut rng);
            let e = expm_antisymmetric(&x).unwrap();
            let u = e.u();
            assert!(linalg::max_abs(&(u * u.transpose() - DMatrix::identity(5, 5))) < 1e-12);
            assert_abs_diff_eq!(u.determinant(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_non_antisymmetric() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            expm_antisymmetric(&x),
            Err(DfError::NotAntisymmetric)
        ));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_antisym(4, &mut rng);
        let e = expm_antisymmetric(&x).unwrap();
        let eps = 1e-6;
        for p in 0..4 {
            for q in 0..p {
                let mut dx = DMatrix::<f64>::zeros(4, 4);
                dx[(p, q)] = 1.0;
                dx[(q, p)] = -1.0;
                let du = e.directional_derivative(&dx);
                let plus = expm_antisymmetric(&(&x + eps * &dx)).unwrap();
                let minus = expm_antisymmetric(&(&x - eps * &dx)).unwrap();
                let fd = (plus.u() - minus.u()) / (2.0 * eps);
                let denom = linalg::max_abs(&fd).max(1e-12);
                let rel = linalg::max_abs(&(&du - &fd)) / denom;
                assert!(rel < 1e-7, "({p},{q}) rel err {rel}");
            }
        }
    }

    #[test]
    fn adjoint_is_consistent_with_derivative() {
        // <G, L(dX)> = <L*(G), dX> for random real matrices
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_antisym(4, &mut rng);
        let e = expm_antisymmetric(&x).unwrap();
        for _ in 0..5 {
            let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let dx = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let lhs = (g.transpose() * e.directional_derivative(&dx)).trace();
            let rhs = (e.adjoint_gradient(&g).transpose() * &dx).trace();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }
}
