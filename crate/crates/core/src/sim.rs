//! Dense statevector execution with optional stochastic Pauli noise and
//! multinomial shot sampling.
//!
//! Noise uses the trajectory method: after each gate, with the channel
//! probability a Pauli string (identity included) is drawn uniformly over the
//! gate's support and applied. Each shot is its own trajectory; the
//! error-mitigation statistics operate on shots, matching how the mitigation
//! schemes are defined.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::circuit::{Circuit, Gate, QubitLayout};
use crate::linalg::CMatrix;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("qubit count mismatch: state has {state}, circuit has {circuit}")]
    QubitMismatch { state: usize, circuit: usize },
    #[error("duplicate or out-of-range occupation {orb}")]
    BadOccupation { orb: usize },
    #[error("amplitude vector length {len} is not a power of two")]
    BadLength { len: usize },
}

/// `2^n` complex amplitudes, bit `q` of the index = qubit `q`.
#[derive(Debug, Clone)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[0] = Complex64::ONE;
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(SimError::BadLength { len });
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, phase: Complex64) {
        for a in self.amps.iter_mut() {
            *a *= phase;
        }
    }
}

/// `<bra|ket>`.
pub fn inner_product(bra: &StateVector, ket: &StateVector) -> Result<Complex64, SimError> {
    if bra.n_qubits != ket.n_qubits {
        return Err(SimError::QubitMismatch {
            state: bra.n_qubits,
            circuit: ket.n_qubits,
        });
    }
    Ok(bra
        .amps
        .iter()
        .zip(&ket.amps)
        .map(|(b, k)| b.conj() * k)
        .sum())
}

/// Computational basis state with the listed spin-orbitals occupied; the
/// ancilla, when present, starts in `|0>`.
pub fn prepare_determinant(
    layout: &QubitLayout,
    alpha_occ: &[usize],
    beta_occ: &[usize],
) -> Result<StateVector, SimError> {
    let m = layout.n_orbitals;
    let mut mask = 0u64;
    for (occ, spin) in [(alpha_occ, crate::Spin::Alpha), (beta_occ, crate::Spin::Beta)] {
        for &orb in occ {
            if orb >= m {
                return Err(SimError::BadOccupation { orb });
            }
            let q = layout.qubit(orb, spin);
            if mask & (1 << q) != 0 {
                return Err(SimError::BadOccupation { orb });
            }
            mask |= 1 << q;
        }
    }
    let mut state = StateVector::zero_state(layout.n_qubits());
    state.amps[0] = Complex64::ZERO;
    state.amps[mask as usize] = Complex64::ONE;
    Ok(state)
}

// ---------------------------------------------------------------------------
// Gate application
// ---------------------------------------------------------------------------

#[inline]
fn apply_single(amps: &mut [Complex64], q: usize, u: [[Complex64; 2]; 2]) {
    let bit = 1usize << q;
    for base in 0..amps.len() {
        if base & bit == 0 {
            let i1 = base | bit;
            let a0 = amps[base];
            let a1 = amps[i1];
            amps[base] = u[0][0] * a0 + u[0][1] * a1;
            amps[i1] = u[1][0] * a0 + u[1][1] * a1;
        }
    }
}

/// Applies one gate in place.
pub fn apply_gate(state: &mut StateVector, gate: &Gate) {
    let amps = &mut state.amps;
    match *gate {
        Gate::Givens { a, b, phi } => {
            let (c, s) = (phi.cos(), phi.sin());
            let (ba, bb) = (1usize << a, 1usize << b);
            for i in 0..amps.len() {
                // visit each odd-parity pair once, from the (a=1, b=0) side
                if i & ba != 0 && i & bb == 0 {
                    let j = (i & !ba) | bb;
                    let x10 = amps[i];
                    let x01 = amps[j];
                    amps[i] = c * x10 - s * x01;
                    amps[j] = s * x10 + c * x01;
                }
            }
        }
        Gate::Rz { q, theta } => {
            let ph0 = Complex64::from_polar(1.0, -theta / 2.0);
            let ph1 = Complex64::from_polar(1.0, theta / 2.0);
            let bit = 1usize << q;
            for (i, a) in amps.iter_mut().enumerate() {
                *a *= if i & bit == 0 { ph0 } else { ph1 };
            }
        }
        Gate::Rzz { a, b, theta } => {
            let same = Complex64::from_polar(1.0, -theta / 2.0);
            let diff = Complex64::from_polar(1.0, theta / 2.0);
            let (ba, bb) = (1usize << a, 1usize << b);
            for (i, amp) in amps.iter_mut().enumerate() {
                let pa = i & ba != 0;
                let pb = i & bb != 0;
                *amp *= if pa == pb { same } else { diff };
            }
        }
        Gate::Cnot { ctrl, tgt } => {
            let (bc, bt) = (1usize << ctrl, 1usize << tgt);
            for i in 0..amps.len() {
                if i & bc != 0 && i & bt == 0 {
                    amps.swap(i, i | bt);
                }
            }
        }
        Gate::H { q } => {
            let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            apply_single(amps, q, [[s, s], [s, -s]]);
        }
        Gate::Sdg { q } => {
            let bit = 1usize << q;
            let mi = Complex64::new(0.0, -1.0);
            for (i, a) in amps.iter_mut().enumerate() {
                if i & bit != 0 {
                    *a *= mi;
                }
            }
        }
        Gate::X { q } => {
            let bit = 1usize << q;
            for i in 0..amps.len() {
                if i & bit == 0 {
                    amps.swap(i, i | bit);
                }
            }
        }
        Gate::Crz { ctrl, q, theta } => {
            let ph0 = Complex64::from_polar(1.0, -theta / 2.0);
            let ph1 = Complex64::from_polar(1.0, theta / 2.0);
            let (bc, bq) = (1usize << ctrl, 1usize << q);
            for (i, a) in amps.iter_mut().enumerate() {
                if i & bc != 0 {
                    *a *= if i & bq == 0 { ph0 } else { ph1 };
                }
            }
        }
        Gate::Crzz { ctrl, a, b, theta } => {
            let same = Complex64::from_polar(1.0, -theta / 2.0);
            let diff = Complex64::from_polar(1.0, theta / 2.0);
            let (bc, ba, bb) = (1usize << ctrl, 1usize << a, 1usize << b);
            for (i, amp) in amps.iter_mut().enumerate() {
                if i & bc != 0 {
                    let pa = i & ba != 0;
                    let pb = i & bb != 0;
                    *amp *= if pa == pb { same } else { diff };
                }
            }
        }
        Gate::Swap { a, b } => {
            let (ba, bb) = (1usize << a, 1usize << b);
            for i in 0..amps.len() {
                if i & ba != 0 && i & bb == 0 {
                    amps.swap(i, (i & !ba) | bb);
                }
            }
        }
        Gate::MeasureAll | Gate::BlockBegin { .. } | Gate::BlockEnd { .. } => {}
    }
}

/// Per-gate depolarizing strengths and a readout flip probability. With
/// probability `p` a Pauli string drawn uniformly over the gate's support
/// (identity included) is applied after the gate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseModel {
    /// 1-qubit-gate channel probability.
    pub p1: f64,
    /// Channel probability for gates on two or more qubits.
    pub p2: f64,
    /// Independent per-qubit readout flip probability.
    pub readout: f64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            p1: 0.0,
            p2: 0.0,
            readout: 0.0,
        }
    }
}

fn apply_pauli(state: &mut StateVector, q: usize, which: u8) {
    match which {
        1 => apply_gate(state, &Gate::X { q }),
        2 => {
            // Y = [[0, -i], [i, 0]]
            let bit = 1usize << q;
            let i = Complex64::new(0.0, 1.0);
            let mi = Complex64::new(0.0, -1.0);
            for base in 0..state.amps.len() {
                if base & bit == 0 {
                    let j = base | bit;
                    let a0 = state.amps[base];
                    let a1 = state.amps[j];
                    state.amps[base] = mi * a1;
                    state.amps[j] = i * a0;
                }
            }
        }
        3 => {
            let bit = 1usize << q;
            for (idx, a) in state.amps.iter_mut().enumerate() {
                if idx & bit != 0 {
                    *a = -*a;
                }
            }
        }
        _ => {}
    }
}

/// Applies the circuit in order. With a noise model, a depolarizing Pauli is
/// sampled after every non-marker gate. The classical global phase is applied
/// at the end.
pub fn apply_circuit(
    state: &mut StateVector,
    circuit: &Circuit,
    noise: Option<&NoiseModel>,
    rng: &mut impl Rng,
) -> Result<(), SimError> {
    if state.n_qubits != circuit.n_qubits {
        return Err(SimError::QubitMismatch {
            state: state.n_qubits,
            circuit: circuit.n_qubits,
        });
    }
    for gate in &circuit.gates {
        apply_gate(state, gate);
        if let Some(model) = noise {
            if !gate.is_marker() {
                let support = gate.support();
                let p = if support.len() == 1 { model.p1 } else { model.p2 };
                if p > 0.0 && rng.random::<f64>() < p {
                    for &q in &support {
                        let which = rng.random_range(0..4u8);
                        apply_pauli(state, q, which);
                    }
                }
            }
        }
    }
    if circuit.global_phase != 0.0 {
        state.scale(Complex64::from_polar(1.0, circuit.global_phase));
    }
    Ok(())
}

/// Dense unitary realized by the circuit (global phase included); the test
/// oracle for every compiler check.
pub fn circuit_unitary(circuit: &Circuit) -> CMatrix {
    use rand::SeedableRng;
    let dim = 1usize << circuit.n_qubits;
    let mut u = CMatrix::zeros(dim, dim);
    let mut dummy = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for col in 0..dim {
        let mut state = StateVector::zero_state(circuit.n_qubits);
        state.amps[0] = Complex64::ZERO;
        state.amps[col] = Complex64::ONE;
        apply_circuit(&mut state, circuit, None, &mut dummy).expect("dimensions match");
        for row in 0..dim {
            u[(row, col)] = state.amps[row];
        }
    }
    u
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

/// Measurement counts keyed by bitstring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotRecord {
    pub n_qubits: usize,
    pub counts: BTreeMap<u64, u64>,
    pub total: u64,
}

impl ShotRecord {
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// JSON form with hexadecimal bitstring keys.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, u64> = self
            .counts
            .iter()
            .map(|(&k, &v)| (format!("{k:x}"), v))
            .collect();
        serde_json::json!({
            "n_qubits": self.n_qubits,
            "total": self.total,
            "counts": map,
        })
    }
}

/// Multinomial sampling from `|amplitude|^2`, with optional independent
/// readout bit flips.
pub fn sample_shots(
    state: &StateVector,
    n_shots: u64,
    rng: &mut impl Rng,
    readout_flip: Option<f64>,
) -> ShotRecord {
    let mut cum = Vec::with_capacity(state.amps.len());
    let mut acc = 0.0f64;
    for a in &state.amps {
        acc += a.norm_sqr();
        cum.push(acc);
    }
    let total_prob = acc;
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let flip = readout_flip.unwrap_or(0.0);
    for _ in 0..n_shots {
        let u: f64 = rng.random::<f64>() * total_prob;
        let idx = cum.partition_point(|&c| c <= u).min(state.amps.len() - 1);
        let mut bits = idx as u64;
        if flip > 0.0 {
            for q in 0..state.n_qubits {
                if rng.random::<f64>() < flip {
                    bits ^= 1 << q;
                }
            }
        }
        *counts.entry(bits).or_insert(0) += 1;
    }
    ShotRecord {
        n_qubits: state.n_qubits,
        counts,
        total: n_shots,
    }
}

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// A classical function of measured bitstrings:
/// `constant + sum c_q zeta(q) + sum c_qq' zeta(q) zeta(q')` with
/// `zeta = +1` for bit 0 and `-1` for bit 1.
#[derive(Debug, Clone, Default)]
pub struct DiagonalFactor {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub quadratic: Vec<(usize, usize, f64)>,
}

impl DiagonalFactor {
    pub fn identity() -> Self {
        Self {
            constant: 1.0,
            linear: Vec::new(),
            quadratic: Vec::new(),
        }
    }

    #[inline]
    pub fn value(&self, bits: u64) -> f64 {
        let zeta = |q: usize| if bits & (1 << q) == 0 { 1.0 } else { -1.0 };
        let mut v = self.constant;
        for &(q, c) in &self.linear {
            v += c * zeta(q);
        }
        for &(a, b, c) in &self.quadratic {
            v += c * zeta(a) * zeta(b);
        }
        v
    }
}

/// Exactly evaluable observables: a diagonal zeta polynomial, or ancilla
/// `X`/`Y` tensored with one.
#[derive(Debug, Clone)]
pub enum Observable {
    Diagonal(DiagonalFactor),
    AncillaX { ancilla: usize, factor: DiagonalFactor },
    AncillaY { ancilla: usize, factor: DiagonalFactor },
}

/// Exact quadratic-form expectation on a statevector.
pub fn exact_expectation(state: &StateVector, obs: &Observable) -> f64 {
    match obs {
        Observable::Diagonal(f) => state
            .amps
            .iter()
            .enumerate()
            .map(|(x, a)| a.norm_sqr() * f.value(x as u64))
            .sum(),
        Observable::AncillaX { ancilla, factor } => {
            let bit = 1usize << ancilla;
            let mut acc = 0.0;
            for x in 0..state.amps.len() {
                if x & bit == 0 {
                    let pair = state.amps[x].conj() * state.amps[x | bit];
                    acc += 2.0 * pair.re * factor.value(x as u64);
                }
            }
            acc
        }
        Observable::AncillaY { ancilla, factor } => {
            let bit = 1usize << ancilla;
            let mut acc = 0.0;
            for x in 0..state.amps.len() {
                if x & bit == 0 {
                    let pair = state.amps[x].conj() * state.amps[x | bit];
                    acc += 2.0 * pair.im * factor.value(x as u64);
                }
            }
            acc
        }
    }
}
