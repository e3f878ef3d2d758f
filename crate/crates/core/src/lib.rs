//! Double-factorized electronic Hamiltonians and quantum filter diagonalization.
//!
//! The crate covers the full pipeline from active-space integrals to spectra:
//!
//! * [`hamiltonian`] — FCIDUMP ingestion, integral symmetry checks, and a
//!   brute-force sector exact-diagonalization oracle.
//! * [`df`] — explicit (X-DF) and compressed (C-DF) double factorization of the
//!   ERI tensor, plus the diagonal "zeta" rewrite consumed by the compiler.
//! * [`circuit`] — Jordan-Wigner compilation of Trotter steps, Hadamard tests,
//!   diagonal measurements, echo insertion, and primitive-gate lowering.
//! * [`sim`] — dense statevector execution with optional stochastic Pauli
//!   noise and shot sampling.
//! * [`qfd`] — subspace matrix construction (exact or shot-based with
//!   post-selection and echo averaging) and the generalized eigensolve.
//!
//! Energies are in Hartree, times in inverse Hartree, angles in radians.

pub mod circuit;
pub mod df;
pub mod fock;
pub mod hamiltonian;
pub mod linalg;
pub mod qfd;
pub mod sim;

/// Spin species of a spatial orbital. Alpha maps to qubits `0..M`, beta to
/// qubits `M..2M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Spin {
    Alpha,
    Beta,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Alpha, Spin::Beta];
}
