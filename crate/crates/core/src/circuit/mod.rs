//! Jordan-Wigner circuit compilation of the zeta-form Hamiltonian.

mod echo;
mod givens;
mod hadamard;
mod lower;
mod trotter;

pub use echo::insert_echoes;
pub use givens::{givens_decompose, givens_network, givens_reconstruct};
pub use hadamard::{
    diagonal_factor, diagonal_measurement_circuit, hadamard_test_circuit, reference_prep,
    HadamardPart, MeasuredFactor,
};
pub use lower::{lower_and_count, route_linear, GateCountReport, GateCounts};
pub use trotter::{
    controlled_trotter_circuit, controlled_trotter_circuit_naive, trotter_step_circuit,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("leaf tensor has determinant -1; apply the determinant fix first")]
    DeterminantNegative,
    #[error("matrix is not special orthogonal")]
    NotOrthogonal,
    #[error("layout has no ancilla but the circuit requires one")]
    MissingAncilla,
    #[error("m = {m} exceeds n = {n} in the Hadamard test")]
    BadPowers { m: usize, n: usize },
    #[error("occupation {orb} out of range or duplicated")]
    BadOccupation { orb: usize },
    #[error("factor index {index} out of range for n_DF = {n_df}")]
    BadFactorIndex { index: usize, n_df: usize },
    #[error("circuit has no term-block markers; compile echoes from a Trotter circuit")]
    MissingBlockMarkers,
}

/// Gate alphabet. Angles are radians; rotation conventions are
/// `RZ(theta) = exp(-i theta Z / 2)` and `RZZ(theta) = exp(-i theta ZZ / 2)`,
/// with controlled variants applying the same rotation when the control is 1.
/// `Givens(a, b, phi)` rotates the odd-parity subspace of qubits `(a, b)` by
/// `phi` and leaves `|00>` and `|11>` fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    Givens { a: usize, b: usize, phi: f64 },
    Rz { q: usize, theta: f64 },
    Rzz { a: usize, b: usize, theta: f64 },
    Cnot { ctrl: usize, tgt: usize },
    H { q: usize },
    Sdg { q: usize },
    X { q: usize },
    Crz { ctrl: usize, q: usize, theta: f64 },
    Crzz { ctrl: usize, a: usize, b: usize, theta: f64 },
    Swap { a: usize, b: usize },
    MeasureAll,
    /// Start of a Trotter term block (echo insertion points).
    BlockBegin { id: usize },
    BlockEnd { id: usize },
}

impl Gate {
    /// Qubits the gate acts on (markers and measurement return none).
    pub fn support(&self) -> Vec<usize> {
        match *self {
            Gate::Givens { a, b, .. } | Gate::Rzz { a, b, .. } | Gate::Swap { a, b } => {
                vec![a, b]
            }
            Gate::Rz { q, .. } | Gate::H { q } | Gate::Sdg { q } | Gate::X { q } => vec![q],
            Gate::Cnot { ctrl, tgt } => vec![ctrl, tgt],
            Gate::Crz { ctrl, q, .. } => vec![ctrl, q],
            Gate::Crzz { ctrl, a, b, .. } => vec![ctrl, a, b],
            Gate::MeasureAll | Gate::BlockBegin { .. } | Gate::BlockEnd { .. } => vec![],
        }
    }

    pub fn is_marker(&self) -> bool {
        matches!(
            self,
            Gate::MeasureAll | Gate::BlockBegin { .. } | Gate::BlockEnd { .. }
        )
    }
}

/// An ordered gate list with a classically tracked global phase: the realized
/// unitary is `exp(i global_phase)` times the gate product. QFD matrix
/// elements are phase-sensitive through the ancilla, so the phase is part of
/// the circuit, not an afterthought.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub global_phase: f64,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gates: Vec::new(),
            global_phase: 0.0,
        }
    }

    pub fn push(&mut self, gate: Gate) {
        debug_assert!(gate.support().iter().all(|&q| q < self.n_qubits));
        self.gates.push(gate);
    }

    pub fn extend(&mut self, other: &Circuit) {
        debug_assert_eq!(self.n_qubits, other.n_qubits);
        self.gates.extend_from_slice(&other.gates);
        self.global_phase += other.global_phase;
    }

    pub fn count(&self, pred: impl Fn(&Gate) -> bool) -> usize {
        self.gates.iter().filter(|g| pred(g)).count()
    }
}

/// Spin-orbital to qubit assignment: alpha orbital `k` on qubit `k`, beta
/// orbital `k` on qubit `M + k`, optional ancilla on qubit `2M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitLayout {
    pub n_orbitals: usize,
    pub has_ancilla: bool,
}

impl QubitLayout {
    pub fn system(n_orbitals: usize) -> Self {
        Self {
            n_orbitals,
            has_ancilla: false,
        }
    }

    pub fn with_ancilla(n_orbitals: usize) -> Self {
        Self {
            n_orbitals,
            has_ancilla: true,
        }
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.n_orbitals + usize::from(self.has_ancilla)
    }

    pub fn n_system_qubits(&self) -> usize {
        2 * self.n_orbitals
    }

    pub fn qubit(&self, orb: usize, spin: crate::Spin) -> usize {
        debug_assert!(orb < self.n_orbitals);
        match spin {
            crate::Spin::Alpha => orb,
            crate::Spin::Beta => self.n_orbitals + orb,
        }
    }

    pub fn ancilla(&self) -> Option<usize> {
        self.has_ancilla.then_some(2 * self.n_orbitals)
    }

    /// Per-spin popcounts of the system bits of a measured bitstring.
    pub fn spin_counts(&self, bits: u64) -> (usize, usize) {
        let m = self.n_orbitals;
        let alpha = (bits & ((1u64 << m) - 1)).count_ones() as usize;
        let beta = ((bits >> m) & ((1u64 << m) - 1)).count_ones() as usize;
        (alpha, beta)
    }
}
