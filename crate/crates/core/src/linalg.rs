//! Dense linear-algebra helpers: sorted symmetric/Hermitian eigensolves,
//! deterministic sign conventions, and pseudoinverses.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigendecomposition of a real symmetric matrix with eigenvalues ascending.
pub fn eigh(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = nalgebra::SymmetricEigen::new(mat.clone());
    sort_eigenpairs(se.eigenvalues, se.eigenvectors)
}

/// Eigendecomposition of a complex Hermitian matrix with eigenvalues ascending.
pub fn eigh_complex(mat: &CMatrix) -> (DVector<f64>, CMatrix) {
    let se = nalgebra::SymmetricEigen::new(mat.clone());
    sort_eigenpairs(se.eigenvalues, se.eigenvectors)
}

fn sort_eigenpairs<T: nalgebra::Scalar + Copy>(
    vals: DVector<f64>,
    vecs: DMatrix<T>,
) -> (DVector<f64>, DMatrix<T>) {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    let sorted_vals = DVector::from_iterator(vals.len(), order.iter().map(|&i| vals[i]));
    let mut sorted_vecs = vecs.clone();
    for (dst, &src) in order.iter().enumerate() {
        sorted_vecs.set_column(dst, &vecs.column(src));
    }
    (sorted_vals, sorted_vecs)
}

/// Flips eigenvector columns so the entry of largest magnitude is positive.
/// Ties break toward the lowest row index.
pub fn fix_column_signs(vecs: &mut DMatrix<f64>) {
    for mut col in vecs.column_iter_mut() {
        let mut best = 0usize;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Forces `det(vecs) = +1` by negating the column paired with the eigenvalue
/// of smallest magnitude. Returns the index of the flipped column, if any.
pub fn force_special_orthogonal(
    vecs: &mut DMatrix<f64>,
    eigenvalues: &DVector<f64>,
) -> Option<usize> {
    if vecs.determinant() >= 0.0 {
        return None;
    }
    let mut idx = 0usize;
    for i in 1..eigenvalues.len() {
        if eigenvalues[i].abs() < eigenvalues[idx].abs() {
            idx = i;
        }
    }
    let mut col = vecs.column_mut(idx);
    col.neg_mut();
    Some(idx)
}

/// Sorted, sign-fixed, determinant-corrected symmetric eigendecomposition.
/// This is the convention every leaf/eigenvector matrix in the crate uses.
pub fn eigh_special_orthogonal(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (vals, mut vecs) = eigh(mat);
    fix_column_signs(&mut vecs);
    force_special_orthogonal(&mut vecs, &vals);
    (vals, vecs)
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix via its
/// eigendecomposition. Eigenvalues below `cutoff * max_eigenvalue` are
/// discarded.
pub fn pinv_symmetric(mat: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let (vals, vecs) = eigh(mat);
    let max_val = vals.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let threshold = cutoff * max_val.max(1e-300);
    let n = mat.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        if vals[k].abs() > threshold {
            let vk = vecs.column(k);
            let scale = 1.0 / vals[k];
            for i in 0..n {
                for j in 0..n {
                    inv[(i, j)] += scale * vk[i] * vk[j];
                }
            }
        }
    }
    inv
}

/// `exp(scale * H)` for Hermitian `H`, via eigendecomposition. With
/// `scale = -i dt` this is the exact propagator.
pub fn expm_hermitian(h: &CMatrix, scale: Complex64) -> CMatrix {
    let (vals, vecs) = eigh_complex(h);
    let n = h.nrows();
    let mut diag = CMatrix::zeros(n, n);
    for k in 0..n {
        diag[(k, k)] = (scale * vals[k]).exp();
    }
    &vecs * diag * vecs.adjoint()
}

/// Max absolute entry of a real matrix.
pub fn max_abs(mat: &DMatrix<f64>) -> f64 {
    mat.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

/// Max absolute entry of a complex matrix.
pub fn max_abs_c(mat: &CMatrix) -> f64 {
    mat.iter().fold(0.0_f64, |m, v| m.max(v.norm()))
}

/// `‖a - b‖_∞` over entries for complex matrices.
pub fn max_diff_c(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs_c(&(a - b))
}
