//! Nearest-neighbor Givens decomposition of special orthogonal matrices and
//! the two-spin-copy rotation networks built from it.

use nalgebra::DMatrix;

use crate::circuit::{Circuit, CircuitError, Gate, QubitLayout};
use crate::linalg;

/// Decomposes special orthogonal `u` into adjacent-row Givens rotations.
///
/// Below-diagonal entries are eliminated column by column, bottom up, each
/// with a rotation of rows `(r-1, r)`. The returned list `[(i, phi), ...]` is
/// in gate application order: with the single-particle rotation
/// `W(i, phi) = [[cos, sin], [-sin, cos]]` embedded at rows `(i, i+1)`,
/// the ordered matrix product `W(i_1, phi_1) W(i_2, phi_2) ...` equals `u`.
/// At most `M(M-1)/2` rotations; exact zero angles are dropped.
pub fn givens_decompose(u: &DMatrix<f64>) -> Result<Vec<(usize, f64)>, CircuitError> {
    let m = u.nrows();
    if linalg::max_abs(&(u * u.transpose() - DMatrix::identity(m, m))) > 1e-10 {
        return Err(CircuitError::NotOrthogonal);
    }
    if u.determinant() < 0.0 {
        return Err(CircuitError::DeterminantNegative);
    }
    let mut work = u.clone();
    let mut rotations = Vec::new();
    for col in 0..m.saturating_sub(1) {
        for row in (col + 1..m).rev() {
            let a = work[(row - 1, col)];
            let b = work[(row, col)];
            if b == 0.0 && a >= 0.0 {
                continue;
            }
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, s) = (a / h, b / h);
            // rotate rows (row-1, row): new row-1 = c a + s b, new row = 0
            for j in 0..m {
                let x = work[(row - 1, j)];
                let y = work[(row, j)];
                work[(row - 1, j)] = c * x + s * y;
                work[(row, j)] = -s * x + c * y;
            }
            let phi = (-s).atan2(c);
            if phi != 0.0 {
                rotations.push((row - 1, phi));
            }
        }
    }
    debug_assert!(
        linalg::max_abs(&(&work - DMatrix::identity(m, m))) < 1e-9,
        "elimination must reduce a special orthogonal matrix to the identity"
    );
    Ok(rotations)
}

/// Ordered product of the rotations returned by [`givens_decompose`].
pub fn givens_reconstruct(m: usize, rotations: &[(usize, f64)]) -> DMatrix<f64> {
    let mut acc = DMatrix::<f64>::identity(m, m);
    for &(i, phi) in rotations {
        let mut w = DMatrix::<f64>::identity(m, m);
        w[(i, i)] = phi.cos();
        w[(i, i + 1)] = phi.sin();
        w[(i + 1, i)] = -phi.sin();
        w[(i + 1, i + 1)] = phi.cos();
        acc = acc * w;
    }
    acc
}

/// Compiles the Fock-space rotation `R(w)` as two identical spin copies of
/// the Givens network. Gates touch only system qubits.
pub fn givens_network(layout: &QubitLayout, w: &DMatrix<f64>) -> Result<Circuit, CircuitError> {
    let m = layout.n_orbitals;
    debug_assert_eq!(w.nrows(), m);
    let rotations = givens_decompose(w)?;
    let mut circuit = Circuit::new(layout.n_qubits());
    for &(i, phi) in &rotations {
        circuit.push(Gate::Givens {
            a: layout.qubit(i, crate::Spin::Alpha),
            b: layout.qubit(i + 1, crate::Spin::Alpha),
            phi,
        });
        circuit.push(Gate::Givens {
            a: layout.qubit(i, crate::Spin::Beta),
            b: layout.qubit(i + 1, crate::Spin::Beta),
            phi,
        });
    }
    Ok(circuit)
}
