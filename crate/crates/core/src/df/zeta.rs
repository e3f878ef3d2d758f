//! Rewrite of the factorized Hamiltonian in terms of `zeta = 1 - 2n`
//! operators (eigenvalues +-1, Pauli-Z under Jordan-Wigner).
//!
//! Expanding `n = (1 - zeta)/2` in the factorized Hamiltonian folds all
//! `zeta^2 = 1` diagonals into the scalar term, collects every linear-in-zeta
//! contribution into a redefined one-body operator, and leaves per-layer
//! two-body factors that are purely quadratic in zeta:
//!
//! `H = E' + sum_ks f'_k zeta_ks(0') + sum_t sum*_pairs (Z^t_kl / 4) zeta zeta`
//!
//! where the starred sum runs over unordered spin-orbital pairs (the paper's
//! ordered-pair coefficient `Z/8` doubles). With row sums `z^t_k = sum_l
//! Z^t_kl`, the redefined one-body matrix in the reference frame is
//! `C = kappa + sum_t U^t diag(z^t) U^t^T = U0' diag(g) U0'^T`, giving
//! `f'_k = -g_k / 2` and
//! `E' = E_ext + tr(C) + sum_t (-1/2 sum_kl Z_kl + 1/4 sum_k Z_kk)`.
//!
//! The algebra is enforced by a dense Fock-space operator-equality test, not
//! trusted.

use nalgebra::{DMatrix, DVector};

use crate::df::DFDecomposition;
use crate::linalg;
use crate::Spin;

/// One starred quadratic term `coeff * zeta_{k,spin_k} zeta_{l,spin_l}` in
/// the layer's eigenframe; pairs are unordered, `coeff = Z_kl / 4`.
#[derive(Debug, Clone, Copy)]
pub struct ZetaPair {
    pub k: usize,
    pub spin_k: Spin,
    pub l: usize,
    pub spin_l: Spin,
    pub coeff: f64,
}

#[derive(Debug, Clone)]
pub struct ZetaLayer {
    pub u: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl ZetaLayer {
    /// Unordered starred pairs in lexicographic qubit order (alpha block
    /// before beta block). Every distinct spin-orbital pair is starred; terms
    /// with an exactly zero coefficient are skipped.
    pub fn starred_pairs(&self) -> Vec<ZetaPair> {
        let m = self.u.nrows();
        let orb = |q: usize| if q < m { (q, Spin::Alpha) } else { (q - m, Spin::Beta) };
        let mut out = Vec::new();
        for q1 in 0..2 * m {
            for q2 in q1 + 1..2 * m {
                let (k, sk) = orb(q1);
                let (l, sl) = orb(q2);
                let coeff = self.z[(k, l)] / 4.0;
                if coeff != 0.0 {
                    out.push(ZetaPair {
                        k,
                        spin_k: sk,
                        l,
                        spin_l: sl,
                        coeff,
                    });
                }
            }
        }
        out
    }

    /// Row sums `z_k = sum_l Z_kl`, the linear-in-zeta weight absorbed into
    /// the redefined one-body term.
    pub fn row_sums(&self) -> DVector<f64> {
        let m = self.z.nrows();
        DVector::from_iterator(m, (0..m).map(|k| self.z.row(k).sum()))
    }
}

/// The zeta rewrite of a [`DFDecomposition`].
#[derive(Debug, Clone)]
pub struct ZetaForm {
    pub e_ext_prime: f64,
    /// Coefficients of `zeta_{k,sigma}` in the primed one-body eigenframe.
    pub f_prime: DVector<f64>,
    pub u0_prime: DMatrix<f64>,
    pub layers: Vec<ZetaLayer>,
}

impl ZetaForm {
    pub fn n_orbitals(&self) -> usize {
        self.u0_prime.nrows()
    }

    pub fn n_df(&self) -> usize {
        self.layers.len()
    }
}

pub fn to_zeta_form(decomp: &DFDecomposition) -> ZetaForm {
    let m = decomp.n_orbitals();
    let kappa = &decomp.one_body.u0
        * DMatrix::from_diagonal(&decomp.one_body.f0)
        * decomp.one_body.u0.transpose();

    let mut c = kappa;
    let mut scalar = decomp.e_ext;
    for layer in &decomp.layers {
        let z = &layer.z;
        let row_sums = DVector::from_iterator(m, (0..m).map(|k| z.row(k).sum()));
        c += &layer.u * DMatrix::from_diagonal(&row_sums) * layer.u.transpose();
        let total: f64 = z.iter().sum();
        let diag: f64 = z.diagonal().sum();
        scalar += -0.5 * total + 0.25 * diag;
    }
    scalar += c.trace();

    let (g, u0_prime) = linalg::eigh_special_orthogonal(&c);
    let f_prime = DVector::from_iterator(m, g.iter().map(|&gk| -0.5 * gk));

    ZetaForm {
        e_ext_prime: scalar,
        f_prime,
        u0_prime,
        layers: decomp
            .layers
            .iter()
            .map(|l| ZetaLayer {
                u: l.u.clone(),
                z: l.z.clone(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::df::OneBodyFactor;
    use crate::fock;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_decomposition(m: usize, n_df: usize, seed: u64) -> DFDecomposition {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sym = crate::df::test_support::random_symmetric(m, &mut rng);
        let (f0, u0) = linalg::eigh_special_orthogonal(&sym);
        let layers = crate::df::test_support::random_layers(m, n_df, &mut rng);
        DFDecomposition {
            e_ext: rng.random_range(-1.0..1.0),
            one_body: OneBodyFactor { u0, f0 },
            layers,
            zeta: None,
        }
    }

    /// With no two-body layers only the one-body term is rewritten:
    /// `sum f0 n = sum f0 - (f0/2) zeta`, so `E' = E + sum f0`,
    /// `f' = -f0/2`, and the eigenframe is unchanged.
    #[test]
    fn empty_layers_rewrite_one_body_only() {
        let d = random_decomposition(3, 0, 5);
        let zf = to_zeta_form(&d);
        assert_abs_diff_eq!(
            zf.e_ext_prime,
            d.e_ext + d.one_body.f0.sum(),
            epsilon = 1e-12
        );
        for k in 0..3 {
            assert_abs_diff_eq!(zf.f_prime[k], -0.5 * d.one_body.f0[k], epsilon = 1e-12);
        }
        assert!(linalg::max_abs(&(&zf.u0_prime - &d.one_body.u0)) < 1e-12);
    }

    #[test]
    fn diagonal_core_leaves_only_cross_spin_pairs() {
        let m = 2;
        let mut d = random_decomposition(m, 1, 9);
        d.layers[0].u = DMatrix::identity(m, m);
        d.layers[0].z = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.7, -0.3]));
        let zf = to_zeta_form(&d);
        let pairs = zf.layers[0].starred_pairs();
        assert_eq!(pairs.len(), m);
        for p in &pairs {
            assert_eq!(p.k, p.l);
            assert_eq!(p.spin_k, Spin::Alpha);
            assert_eq!(p.spin_l, Spin::Beta);
            assert_abs_diff_eq!(p.coeff, d.layers[0].z[(p.k, p.k)] / 4.0, epsilon = 1e-15);
        }
    }

    /// The binding contract: the dense Fock-space operators of the rewrite
    /// and of the original decomposition are equal.
    #[test]
    fn dense_operator_equality() {
        for (m, n_df, seed) in [(1usize, 1usize, 1u64), (2, 1, 2), (2, 2, 3), (3, 2, 4)] {
            let d = random_decomposition(m, n_df, seed);
            let zf = to_zeta_form(&d);
            let h_df = fock::dense_from_df(&d);
            let h_zeta = fock::dense_from_zeta(&zf);
            let diff = linalg::max_abs(&(&h_df - &h_zeta));
            assert!(
                diff < 1e-10,
                "M={m} n_DF={n_df} seed={seed}: operator mismatch {diff}"
            );
        }
    }

    #[test]
    fn starred_pair_count_is_all_distinct_spin_orbital_pairs() {
        let d = random_decomposition(3, 1, 21);
        let zf = to_zeta_form(&d);
        let n_q = 2 * 3;
        assert_eq!(zf.layers[0].starred_pairs().len(), n_q * (n_q - 1) / 2);
    }
}
