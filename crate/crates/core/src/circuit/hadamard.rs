//! Hadamard-test circuits for QFD matrix elements and the diagonal
//! measurement circuits for individual Hamiltonian factors.
//!
//! The ancilla interferes the branches `U^m |ref>` and `U^n |ref>`: the step
//! power `m` is applied uncontrolled and only the remaining `n - m` powers
//! are controlled, exploiting the shared prefix. After the closing Hadamard
//! (preceded by S-dagger for the imaginary part) the requested factor's
//! basis-change network is appended so the factor value is a classical
//! function of the measured bitstring.

use crate::circuit::givens::givens_network;
use crate::circuit::trotter::{controlled_trotter_circuit, trotter_step_circuit};
use crate::circuit::{Circuit, CircuitError, Gate, QubitLayout};
use crate::df::ZetaForm;
use crate::sim::DiagonalFactor;

/// Which part of the matrix element the ancilla reads out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HadamardPart {
    Real,
    Imag,
}

/// Hamiltonian factor measured in its diagonal basis. The scalar `E'` term
/// is handled classically and never measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasuredFactor {
    /// Overlap-matrix runs: no factor, value 1.
    Identity,
    /// The redefined one-body term `sum f'_k zeta_ks`.
    OneBody,
    /// Two-body layer `t` (0-based).
    TwoBody(usize),
}

/// X gates preparing a reference determinant on the system register.
pub fn reference_prep(
    layout: &QubitLayout,
    alpha_occ: &[usize],
    beta_occ: &[usize],
) -> Result<Circuit, CircuitError> {
    let mut circuit = Circuit::new(layout.n_qubits());
    let mut seen = 0u64;
    for (occ, spin) in [(alpha_occ, crate::Spin::Alpha), (beta_occ, crate::Spin::Beta)] {
        for &orb in occ {
            if orb >= layout.n_orbitals {
                return Err(CircuitError::BadOccupation { orb });
            }
            let q = layout.qubit(orb, spin);
            if seen & (1 << q) != 0 {
                return Err(CircuitError::BadOccupation { orb });
            }
            seen |= 1 << q;
            circuit.push(Gate::X { q });
        }
    }
    Ok(circuit)
}

/// The factor's eigenframe rotation, or none for the identity.
fn factor_frame<'a>(
    zeta: &'a ZetaForm,
    factor: MeasuredFactor,
) -> Result<Option<&'a nalgebra::DMatrix<f64>>, CircuitError> {
    match factor {
        MeasuredFactor::Identity => Ok(None),
        MeasuredFactor::OneBody => Ok(Some(&zeta.u0_prime)),
        MeasuredFactor::TwoBody(t) => {
            if t >= zeta.n_df() {
                return Err(CircuitError::BadFactorIndex {
                    index: t,
                    n_df: zeta.n_df(),
                });
            }
            Ok(Some(&zeta.layers[t].u))
        }
    }
}

/// Classical bitstring function of a measured factor, on the layout's
/// qubits.
pub fn diagonal_factor(
    zeta: &ZetaForm,
    layout: &QubitLayout,
    factor: MeasuredFactor,
) -> Result<DiagonalFactor, CircuitError> {
    match factor {
        MeasuredFactor::Identity => Ok(DiagonalFactor::identity()),
        MeasuredFactor::OneBody => {
            let mut linear = Vec::new();
            for k in 0..zeta.n_orbitals() {
                for spin in crate::Spin::BOTH {
                    linear.push((layout.qubit(k, spin), zeta.f_prime[k]));
                }
            }
            Ok(DiagonalFactor {
                constant: 0.0,
                linear,
                quadratic: Vec::new(),
            })
        }
        MeasuredFactor::TwoBody(t) => {
            if t >= zeta.n_df() {
                return Err(CircuitError::BadFactorIndex {
                    index: t,
                    n_df: zeta.n_df(),
                });
            }
            let quadratic = zeta.layers[t]
                .starred_pairs()
                .into_iter()
                .map(|p| {
                    (
                        layout.qubit(p.k, p.spin_k),
                        layout.qubit(p.l, p.spin_l),
                        p.coeff,
                    )
                })
                .collect();
            Ok(DiagonalFactor {
                constant: 0.0,
                linear: Vec::new(),
                quadratic,
            })
        }
    }
}

/// Appends the factor's inverse change of basis (both spin copies) and a
/// terminal measurement; the factor value is then a classical function of
/// the outcome bits.
pub fn diagonal_measurement_circuit(
    zeta: &ZetaForm,
    layout: &QubitLayout,
    factor: MeasuredFactor,
) -> Result<Circuit, CircuitError> {
    let mut circuit = Circuit::new(layout.n_qubits());
    if let Some(frame) = factor_frame(zeta, factor)? {
        circuit.extend(&givens_network(layout, frame)?);
    }
    circuit.push(Gate::MeasureAll);
    Ok(circuit)
}

/// Full Hadamard-test circuit for `<Psi_m| h_factor |Psi_n>`, `m <= n`.
#[allow(clippy::too_many_arguments)]
pub fn hadamard_test_circuit(
    zeta: &ZetaForm,
    layout: &QubitLayout,
    alpha_occ: &[usize],
    beta_occ: &[usize],
    m: usize,
    n: usize,
    part: HadamardPart,
    factor: MeasuredFactor,
    dt: f64,
) -> Result<Circuit, CircuitError> {
    if m > n {
        return Err(CircuitError::BadPowers { m, n });
    }
    let anc = layout.ancilla().ok_or(CircuitError::MissingAncilla)?;
    let mut circuit = reference_prep(layout, alpha_occ, beta_occ)?;
    circuit.push(Gate::H { q: anc });
    // shared prefix, uncontrolled
    for _ in 0..m {
        circuit.extend(&trotter_step_circuit(zeta, dt, layout)?);
    }
    // remaining powers on the |1> branch only
    if n > m {
        circuit.extend(&controlled_trotter_circuit(zeta, dt, n - m, layout)?);
    }
    if part == HadamardPart::Imag {
        circuit.push(Gate::Sdg { q: anc });
    }
    circuit.push(Gate::H { q: anc });
    circuit.extend(&diagonal_measurement_circuit(zeta, layout, factor)?);
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::df::{to_zeta_form, DFDecomposition, OneBodyFactor};
    use crate::fock;
    use crate::linalg;
    use crate::sim::{
        apply_circuit, exact_expectation, prepare_determinant, sample_shots, Observable,
        StateVector,
    };
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_decomposition(m: usize, n_df: usize, seed: u64) -> DFDecomposition {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sym = crate::df::test_support::random_symmetric(m, &mut rng);
        let (f0, u0) = linalg::eigh_special_orthogonal(&sym);
        DFDecomposition {
            e_ext: -0.2,
            one_body: OneBodyFactor { u0, f0 },
            layers: crate::df::test_support::random_layers(m, n_df, &mut rng),
            zeta: None,
        }
    }

    #[test]
    fn trivial_overlap_measures_ancilla_zero() {
        // m = n = 0, identity factor: <Psi0|Psi0> = 1, ancilla always 0
        let d = random_decomposition(2, 1, 1);
        let zeta = to_zeta_form(&d);
        let layout = QubitLayout::with_ancilla(2);
        let c = hadamard_test_circuit(
            &zeta,
            &layout,
            &[0],
            &[0],
            0,
            0,
            HadamardPart::Real,
            MeasuredFactor::Identity,
            0.1,
        )
        .unwrap();
        let mut st = StateVector::zero_state(layout.n_qubits());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        apply_circuit(&mut st, &c, None, &mut rng).unwrap();
        let anc_bit = 1usize << layout.ancilla().unwrap();
        let p1: f64 = st
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| i & anc_bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!(p1 < 1e-20, "ancilla-1 probability {p1}");
    }

    /// Infinite-shot estimator identity: ancilla X/Y expectations of the
    /// circuit output equal Re/Im of `<Psi_m| h | Psi_n>` computed from
    /// direct statevector propagation and dense factor operators.
    #[test]
    fn estimator_matches_direct_inner_products() {
        let m_orb = 2;
        let d = random_decomposition(m_orb, 1, 7);
        let zeta = to_zeta_form(&d);
        let sys = QubitLayout::system(m_orb);
        let layout = QubitLayout::with_ancilla(m_orb);
        let dt = 0.13;
        let (aocc, bocc): (&[usize], &[usize]) = (&[0], &[0]);

        let step = trotter_step_circuit(&zeta, dt, &sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        // direct |Psi_k> on the system register
        let mut psi = Vec::new();
        let mut cur = prepare_determinant(&sys, aocc, bocc).unwrap();
        for _ in 0..3 {
            psi.push(cur.clone());
            apply_circuit(&mut cur, &step, None, &mut rng).unwrap();
        }

        for (m, n) in [(0usize, 1usize), (0, 2), (1, 2), (1, 1)] {
            for factor in [
                MeasuredFactor::Identity,
                MeasuredFactor::OneBody,
                MeasuredFactor::TwoBody(0),
            ] {
                // dense factor operator on the system
                let h_op: DMatrix<f64> = match factor {
                    MeasuredFactor::Identity => {
                        DMatrix::identity(fock::dim(m_orb), fock::dim(m_orb))
                    }
                    MeasuredFactor::OneBody => {
                        let mut acc =
                            DMatrix::<f64>::zeros(fock::dim(m_orb), fock::dim(m_orb));
                        for k in 0..m_orb {
                            for spin in crate::Spin::BOTH {
                                acc += zeta.f_prime[k]
                                    * fock::framed_zeta_op(m_orb, &zeta.u0_prime, k, spin);
                            }
                        }
                        acc
                    }
                    MeasuredFactor::TwoBody(t) => {
                        let mut acc =
                            DMatrix::<f64>::zeros(fock::dim(m_orb), fock::dim(m_orb));
                        for pair in zeta.layers[t].starred_pairs() {
                            acc += pair.coeff
                                * fock::framed_zeta_op(m_orb, &zeta.layers[t].u, pair.k, pair.spin_k)
                                * fock::framed_zeta_op(m_orb, &zeta.layers[t].u, pair.l, pair.spin_l);
                        }
                        acc
                    }
                };
                let mut h_psi_n = vec![Complex64::ZERO; fock::dim(m_orb)];
                for (i, row) in h_op.row_iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        h_psi_n[i] += *v * psi[n].amplitudes()[j];
                    }
                }
                let target: Complex64 = psi[m]
                    .amplitudes()
                    .iter()
                    .zip(&h_psi_n)
                    .map(|(a, b)| a.conj() * b)
                    .sum();

                let mut measured = Complex64::ZERO;
                for part in [HadamardPart::Real, HadamardPart::Imag] {
                    let circ = hadamard_test_circuit(
                        &zeta, &layout, aocc, bocc, m, n, part, factor, dt,
                    )
                    .unwrap();
                    let mut st = StateVector::zero_state(layout.n_qubits());
                    apply_circuit(&mut st, &circ, None, &mut rng).unwrap();
                    let df = diagonal_factor(&zeta, &layout, factor).unwrap();
                    // after the closing Hadamard the ancilla reads out in Z
                    let mut est = 0.0;
                    for (x, amp) in st.amplitudes().iter().enumerate() {
                        let p = amp.norm_sqr();
                        if p == 0.0 {
                            continue;
                        }
                        let anc = layout.ancilla().unwrap();
                        let sign = if x & (1 << anc) == 0 { 1.0 } else { -1.0 };
                        est += p * sign * df.value(x as u64);
                    }
                    match part {
                        HadamardPart::Real => measured += est,
                        HadamardPart::Imag => measured += Complex64::new(0.0, est),
                    }
                }
                assert!(
                    (measured - target).norm() < 1e-10,
                    "(m,n)=({m},{n}) factor {factor:?}: {measured} vs {target}"
                );
            }
        }
    }

    #[test]
    fn rejects_m_greater_than_n() {
        let d = random_decomposition(2, 1, 2);
        let zeta = to_zeta_form(&d);
        let layout = QubitLayout::with_ancilla(2);
        assert!(matches!(
            hadamard_test_circuit(
                &zeta,
                &layout,
                &[0],
                &[0],
                2,
                1,
                HadamardPart::Real,
                MeasuredFactor::Identity,
                0.1
            ),
            Err(CircuitError::BadPowers { .. })
        ));
    }

    #[test]
    fn one_body_frame_identity_is_measure_only() {
        let m = 2;
        let mut d = random_decomposition(m, 0, 3);
        // force a diagonal kappa so the primed frame is the identity
        d.one_body.u0 = DMatrix::identity(m, m);
        d.one_body.f0 = nalgebra::DVector::from_row_slice(&[0.1, 0.7]);
        let zeta = to_zeta_form(&d);
        let layout = QubitLayout::system(m);
        let c = diagonal_measurement_circuit(&zeta, &layout, MeasuredFactor::OneBody).unwrap();
        assert_eq!(c.gates.len(), 1);
        assert!(matches!(c.gates[0], Gate::MeasureAll));
    }

    #[test]
    fn all_zeros_bitstring_value_is_two_sum_f_prime() {
        let m = 2;
        let d = random_decomposition(m, 1, 4);
        let zeta = to_zeta_form(&d);
        let layout = QubitLayout::system(m);
        let df = diagonal_factor(&zeta, &layout, MeasuredFactor::OneBody).unwrap();
        let expect = 2.0 * zeta.f_prime.sum();
        assert_abs_diff_eq!(df.value(0), expect, epsilon = 1e-14);
    }

    /// Shot-averaged factor value converges to the statevector expectation.
    #[test]
    fn shot_average_matches_dense_expectation() {
        let m = 2;
        let d = random_decomposition(m, 1, 5);
        let zeta = to_zeta_form(&d);
        let layout = QubitLayout::system(m);
        // a correlated random state from a short circuit
        let mut st = prepare_determinant(&layout, &[0], &[1]).unwrap();
        let mut prep = Circuit::new(layout.n_qubits());
        prep.push(Gate::Givens { a: 0, b: 1, phi: 0.7 });
        prep.push(Gate::Givens { a: 2, b: 3, phi: -0.4 });
        prep.push(Gate::Rzz { a: 1, b: 2, theta: 0.9 });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        apply_circuit(&mut st, &prep, None, &mut rng).unwrap();

        // dense expectation of the layer factor
        let mut h_op = DMatrix::<f64>::zeros(fock::dim(m), fock::dim(m));
        for pair in zeta.layers[0].starred_pairs() {
            h_op += pair.coeff
                * fock::framed_zeta_op(m, &zeta.layers[0].u, pair.k, pair.spin_k)
                * fock::framed_zeta_op(m, &zeta.layers[0].u, pair.l, pair.spin_l);
        }
        let mut expect = 0.0;
        let mut hv = vec![Complex64::ZERO; fock::dim(m)];
        for i in 0..fock::dim(m) {
            for j in 0..fock::dim(m) {
                hv[i] += h_op[(i, j)] * st.amplitudes()[j];
            }
        }
        for (a, b) in st.amplitudes().iter().zip(&hv) {
            expect += (a.conj() * b).re;
        }

        // rotate into the factor frame, sample, average the classical value
        let meas = diagonal_measurement_circuit(&zeta, &layout, MeasuredFactor::TwoBody(0)).unwrap();
        let mut rotated = st.clone();
        apply_circuit(&mut rotated, &meas, None, &mut rng).unwrap();
        let df = diagonal_factor(&zeta, &layout, MeasuredFactor::TwoBody(0)).unwrap();
        let shots = 1_000_000u64;
        let rec = sample_shots(&rotated, shots, &mut rng, None);
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (bits, cnt) in rec.iter() {
            let v = df.value(bits);
            mean += v * cnt as f64;
            m2 += v * v * cnt as f64;
        }
        mean /= shots as f64;
        m2 /= shots as f64;
        let sigma = ((m2 - mean * mean) / shots as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sigma.max(1e-5),
            "shot mean {mean} vs dense {expect}"
        );
        // exact expectation through the rotated frame agrees too
        let exact_rot = exact_expectation(&rotated, &Observable::Diagonal(df));
        assert_abs_diff_eq!(exact_rot, expect, epsilon = 1e-10);
    }
}
