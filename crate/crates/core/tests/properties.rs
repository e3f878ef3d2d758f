//! Property tests for the structural invariants: parser round trips, Givens
//! reconstruction, and circuit unitarity/number conservation.

use nalgebra::DMatrix;
use proptest::prelude::*;

use dfqfd::circuit::{givens_decompose, givens_network, givens_reconstruct, Circuit, Gate, QubitLayout};
use dfqfd::df::expm::expm_antisymmetric;
use dfqfd::hamiltonian::{parse_fcidump, write_fcidump, ActiveSpaceHamiltonian, EriTensor};
use dfqfd::linalg;
use dfqfd::sim::{apply_gate, StateVector};
use num_complex::Complex64;

fn antisym_strategy(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-2.0f64..2.0, m * (m - 1) / 2).prop_map(move |v| {
        let mut x = DMatrix::<f64>::zeros(m, m);
        let mut idx = 0;
        for p in 0..m {
            for q in 0..p {
                x[(p, q)] = v[idx];
                x[(q, p)] = -v[idx];
                idx += 1;
            }
        }
        x
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any special orthogonal matrix round-trips through its adjacent-row
    /// Givens decomposition.
    #[test]
    fn givens_decomposition_round_trips(x in antisym_strategy(4)) {
        let u = expm_antisymmetric(&x).unwrap().u().clone();
        let rotations = givens_decompose(&u).unwrap();
        prop_assert!(rotations.len() <= 4 * 3 / 2);
        let back = givens_reconstruct(4, &rotations);
        prop_assert!(linalg::max_abs(&(&back - &u)) < 1e-10);
    }

    /// The compiled two-spin network conserves both spin occupation numbers
    /// on arbitrary basis states.
    #[test]
    fn givens_network_conserves_spin_numbers(
        x in antisym_strategy(3),
        basis in 0usize..64,
    ) {
        let u = expm_antisymmetric(&x).unwrap().u().clone();
        let layout = QubitLayout::system(3);
        let circuit = givens_network(&layout, &u).unwrap();
        let mut state = StateVector::zero_state(6);
        let mut amps = vec![Complex64::ZERO; 64];
        amps[basis] = Complex64::ONE;
        let state2 = StateVector::from_amplitudes(amps).unwrap();
        let _ = std::mem::replace(&mut state, state2);
        let mut st = state;
        for g in &circuit.gates {
            apply_gate(&mut st, g);
        }
        let (na, nb) = layout.spin_counts(basis as u64);
        for (idx, amp) in st.amplitudes().iter().enumerate() {
            if amp.norm_sqr() > 1e-20 {
                let (a2, b2) = layout.spin_counts(idx as u64);
                prop_assert_eq!((a2, b2), (na, nb));
            }
        }
        prop_assert!((st.norm() - 1.0).abs() < 1e-10);
    }

    /// FCIDUMP serialization round-trips arbitrary symmetric Hamiltonians.
    #[test]
    fn fcidump_round_trips(
        hvals in proptest::collection::vec(-3.0f64..3.0, 6),
        evals in proptest::collection::vec(-3.0f64..3.0, 21),
        e_ext in -5.0f64..5.0,
    ) {
        let m = 3;
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut idx = 0;
        for p in 0..m {
            for q in 0..=p {
                h[(p, q)] = hvals[idx];
                h[(q, p)] = hvals[idx];
                idx += 1;
            }
        }
        let mut eri = EriTensor::zeros(m);
        let mut idx = 0;
        for p in 0..m {
            for q in 0..=p {
                for r in 0..m {
                    for s in 0..=r {
                        if p * m + q >= r * m + s {
                            eri.set_symmetric(p, q, r, s, evals[idx]);
                            idx += 1;
                        }
                    }
                }
            }
        }
        let ham = ActiveSpaceHamiltonian {
            n_orbitals: m,
            e_ext,
            h,
            eri,
            n_alpha: 2,
            n_beta: 1,
        };
        let text = write_fcidump(&ham);
        let back = parse_fcidump(&text).unwrap();
        prop_assert_eq!(back.n_alpha, 2);
        prop_assert_eq!(back.n_beta, 1);
        prop_assert!((back.e_ext - ham.e_ext).abs() < 1e-12);
        prop_assert!(linalg::max_abs(&(&back.h - &ham.h)) < 1e-12);
        let max_diff = back
            .eri
            .as_slice()
            .iter()
            .zip(ham.eri.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        prop_assert!(max_diff < 1e-12);
    }

    /// Every unitary gate preserves the norm of arbitrary states.
    #[test]
    fn gates_preserve_norm(
        re in proptest::collection::vec(-1.0f64..1.0, 8),
        im in proptest::collection::vec(-1.0f64..1.0, 8),
        theta in -3.0f64..3.0,
    ) {
        let mut amps: Vec<Complex64> = re
            .iter()
            .zip(&im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        for a in amps.iter_mut() {
            *a /= norm;
        }
        let mut st = StateVector::from_amplitudes(amps).unwrap();
        let mut circuit = Circuit::new(3);
        for g in [
            Gate::Givens { a: 0, b: 1, phi: theta },
            Gate::Rz { q: 2, theta },
            Gate::Rzz { a: 0, b: 2, theta },
            Gate::Crz { ctrl: 2, q: 0, theta },
            Gate::Crzz { ctrl: 0, a: 1, b: 2, theta },
            Gate::H { q: 1 },
            Gate::Sdg { q: 0 },
            Gate::Cnot { ctrl: 1, tgt: 2 },
            Gate::Swap { a: 0, b: 2 },
            Gate::X { q: 1 },
        ] {
            circuit.push(g);
        }
        for g in &circuit.gates {
            apply_gate(&mut st, g);
            prop_assert!((st.norm() - 1.0).abs() < 1e-10);
        }
    }
}
