//! Dense operators on the full Fock space of `2M` spin-orbitals under the
//! Jordan-Wigner ordering (alpha orbitals on qubits `0..M`, beta on `M..2M`,
//! basis index bit `q` = occupancy of spin-orbital `q`).
//!
//! Everything here is built directly from fermionic creation/annihilation
//! actions with explicit sign bookkeeping, independent of the circuit
//! compiler, so these matrices double as oracles for circuit tests.

use nalgebra::DMatrix;

use crate::df::{DFDecomposition, ZetaForm};
use crate::hamiltonian::apply_pq;
use crate::Spin;

/// Fock-space dimension for `M` spatial orbitals.
pub fn dim(m: usize) -> usize {
    1usize << (2 * m)
}

fn spin_qubit(m: usize, orb: usize, spin: Spin) -> usize {
    match spin {
        Spin::Alpha => orb,
        Spin::Beta => m + orb,
    }
}

/// Dense `sum_pq b_pq a^dag_{p,spin} a_{q,spin}` for a single spin species.
pub fn one_body_single_spin(m: usize, b: &DMatrix<f64>, spin: Spin) -> DMatrix<f64> {
    let n = dim(m);
    let mut out = DMatrix::<f64>::zeros(n, n);
    for x in 0..n as u32 {
        for p in 0..m {
            for q in 0..m {
                let v = b[(p, q)];
                if v == 0.0 {
                    continue;
                }
                let (qp, qq) = (spin_qubit(m, p, spin), spin_qubit(m, q, spin));
                if let Some((y, sign)) = apply_pq(x, qp, qq) {
                    out[(y as usize, x as usize)] += v * sign;
                }
            }
        }
    }
    out
}

/// Dense spin-summed one-body operator `sum_sigma sum_pq b_pq p+_s q_s`.
pub fn one_body(m: usize, b: &DMatrix<f64>) -> DMatrix<f64> {
    one_body_single_spin(m, b, Spin::Alpha) + one_body_single_spin(m, b, Spin::Beta)
}

/// Dense number operator of one spin-orbital in the rotated frame spanned by
/// `frame` column `orb` (i.e. `n_{k,sigma}` with orbital vector `u_k`).
pub fn framed_number_op(m: usize, frame: &DMatrix<f64>, orb: usize, spin: Spin) -> DMatrix<f64> {
    let col = frame.column(orb);
    let proj = &col * col.transpose();
    one_body_single_spin(m, &proj, spin)
}

/// Dense `zeta = 1 - 2 n` for a framed spin-orbital.
pub fn framed_zeta_op(m: usize, frame: &DMatrix<f64>, orb: usize, spin: Spin) -> DMatrix<f64> {
    let n = dim(m);
    DMatrix::<f64>::identity(n, n) - 2.0 * framed_number_op(m, frame, orb, spin)
}

/// Fock-space unitary of an orbital rotation `w` applied to both spin
/// species, normalized by `R(w)^dag a^dag_k R(w) = sum_p w_pk a^dag_p` and
/// `R(w)|vac> = |vac>`.
pub fn orbital_rotation_unitary(m: usize, w: &DMatrix<f64>) -> DMatrix<f64> {
    let block = rotation_block(m, w);
    // global index x = alpha_mask + 2^M * beta_mask, so beta is the slow index
    block.kronecker(&block)
}

/// Single-spin-block rotation matrix over `2^M` determinants.
fn rotation_block(m: usize, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = 1usize << m;
    let mut out = DMatrix::<f64>::zeros(n, n);
    for det in 0..n as u32 {
        // rotated creation string applied right-to-left (largest orbital first)
        let mut state = vec![0.0f64; n];
        state[0] = 1.0;
        for k in (0..m).rev() {
            if det & (1 << k) == 0 {
                continue;
            }
            let mut next = vec![0.0f64; n];
            for (x, &amp) in state.iter().enumerate() {
                if amp == 0.0 {
                    continue;
                }
                for p in 0..m {
                    if x & (1 << p) != 0 {
                        continue;
                    }
                    let below = (x as u32) & ((1u32 << p) - 1);
                    let sign = if below.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    next[x | (1 << p)] += w[(k, p)] * sign * amp;
                }
            }
            state = next;
        }
        for (x, amp) in state.into_iter().enumerate() {
            out[(x, det as usize)] = amp;
        }
    }
    out
}

/// Dense Fock-space Hamiltonian of a double-factorized decomposition,
/// `E_ext + sum_k f0_k E+_kk(0) + 1/2 sum_t sum_kl Z_kl E+_kk(t) E+_ll(t)`.
pub fn dense_from_df(decomp: &DFDecomposition) -> DMatrix<f64> {
    let m = decomp.n_orbitals();
    let n = dim(m);
    let kappa = &decomp.one_body.u0
        * DMatrix::from_diagonal(&decomp.one_body.f0)
        * decomp.one_body.u0.transpose();
    let mut h = DMatrix::<f64>::identity(n, n) * decomp.e_ext + one_body(m, &kappa);
    for layer in &decomp.layers {
        let number_ops: Vec<DMatrix<f64>> = (0..m)
            .map(|k| {
                framed_number_op(m, &layer.u, k, Spin::Alpha)
                    + framed_number_op(m, &layer.u, k, Spin::Beta)
            })
            .collect();
        for k in 0..m {
            for l in 0..m {
                let z = layer.z[(k, l)];
                if z != 0.0 {
                    h += 0.5 * z * &number_ops[k] * &number_ops[l];
                }
            }
        }
    }
    h
}

/// Dense Fock-space Hamiltonian of the zeta rewrite,
/// `E' + sum_ks f'_k zeta_ks(0') + sum_t sum*_pairs c zeta zeta`.
pub fn dense_from_zeta(zeta: &ZetaForm) -> DMatrix<f64> {
    let m = zeta.n_orbitals();
    let n = dim(m);
    let mut h = DMatrix::<f64>::identity(n, n) * zeta.e_ext_prime;
    for k in 0..m {
        for spin in Spin::BOTH {
            h += zeta.f_prime[k] * framed_zeta_op(m, &zeta.u0_prime, k, spin);
        }
    }
    for layer in &zeta.layers {
        for pair in layer.starred_pairs() {
            let za = framed_zeta_op(m, &layer.u, pair.k, pair.spin_k);
            let zb = framed_zeta_op(m, &layer.u, pair.l, pair.spin_l);
            h += pair.coeff * za * zb;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn number_operator_is_diagonal_occupancy() {
        let m = 2;
        let id = DMatrix::<f64>::identity(m, m);
        let n0a = framed_number_op(m, &id, 0, Spin::Alpha);
        for x in 0..dim(m) {
            let expect = if x & 1 != 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(n0a[(x, x)], expect);
        }
        let n1b = framed_number_op(m, &id, 1, Spin::Beta);
        for x in 0..dim(m) {
            let expect = if x & (1 << 3) != 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(n1b[(x, x)], expect);
        }
    }

    #[test]
    fn rotation_is_unitary_and_conjugates_one_body() {
        let m = 3;
        let theta: f64 = 0.4;
        // rotation in the (0,1) plane
        let mut w = DMatrix::<f64>::identity(m, m);
        w[(0, 0)] = theta.cos();
        w[(0, 1)] = theta.sin();
        w[(1, 0)] = -theta.sin();
        w[(1, 1)] = theta.cos();
        let r = orbital_rotation_unitary(m, &w);
        let n = dim(m);
        let id = DMatrix::<f64>::identity(n, n);
        assert!(linalg::max_abs(&(&r * r.transpose() - &id)) < 1e-12);

        // R^dag n_k R = one-body with projector onto column k of w
        let idm = DMatrix::<f64>::identity(m, m);
        for k in 0..m {
            let lhs = r.transpose() * framed_number_op(m, &idm, k, Spin::Alpha) * &r;
            let rhs = framed_number_op(m, &w, k, Spin::Alpha);
            assert!(linalg::max_abs(&(&lhs - &rhs)) < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn rotation_matches_exponential_of_generator() {
        let m = 2;
        let theta: f64 = 0.7;
        let x = DMatrix::from_row_slice(m, m, &[0.0, theta, -theta, 0.0]);
        let w = DMatrix::from_row_slice(
            m,
            m,
            &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()],
        );
        // R(exp X) = exp(-K) with K = sum X_pq p+ q, since
        // exp(K) a+_k exp(-K) = sum_p [exp X]_pk a+_p
        let k = one_body(m, &x);
        let n = dim(m);
        let mut kc = linalg::CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                kc[(i, j)] = num_complex::Complex64::new(0.0, k[(i, j)]);
            }
        }
        // kc = iK is Hermitian and exp(-K) = exp(i * (iK))
        let expk = linalg::expm_hermitian(&kc, num_complex::Complex64::new(0.0, 1.0));
        let r = orbital_rotation_unitary(m, &w);
        let mut max = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                max = max.max((expk[(i, j)] - num_complex::Complex64::new(r[(i, j)], 0.0)).norm());
            }
        }
        assert!(max < 1e-12, "R(exp X) vs exp(sum X pq): {max}");
    }

    #[test]
    fn rotations_compose_contravariantly() {
        // R(V) R(W) = R(WV)
        let m = 3;
        let mk_rot = |i: usize, j: usize, t: f64| {
            let mut w = DMatrix::<f64>::identity(m, m);
            w[(i, i)] = t.cos();
            w[(i, j)] = t.sin();
            w[(j, i)] = -t.sin();
            w[(j, j)] = t.cos();
            w
        };
        let v = mk_rot(0, 1, 0.3);
        let w = mk_rot(1, 2, -0.8);
        let lhs = orbital_rotation_unitary(m, &v) * orbital_rotation_unitary(m, &w);
        let rhs = orbital_rotation_unitary(m, &(&w * &v));
        assert!(linalg::max_abs(&(&lhs - &rhs)) < 1e-12);
    }

    #[test]
    fn one_body_spectrum_is_orbital_energy_sums() {
        let m = 2;
        let b = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.25, -0.75]));
        let h = one_body(m, &b);
        let (vals, _) = linalg::eigh(&h);
        let mut expect: Vec<f64> = (0..dim(m))
            .map(|x| {
                let mut e = 0.0;
                for k in 0..m {
                    if x & (1 << k) != 0 {
                        e += b[(k, k)];
                    }
                    if x & (1 << (m + k)) != 0 {
                        e += b[(k, k)];
                    }
                }
                e
            })
            .collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 0..vals.len() {
            assert_abs_diff_eq!(vals[i], expect[i], epsilon = 1e-12);
        }
    }
}
