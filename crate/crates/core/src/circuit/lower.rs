//! Lowering to primitive gates with exact gate accounting, plus the optional
//! linear-topology routing pass.
//!
//! Primitive set after lowering: `CNOT`, `RZ`, `H`, `SDG`, `X` (markers and
//! measurement pass through). The rewrites and their counts:
//!
//! * Givens -> 2 CNOT plus single-qubit rotations,
//! * RZZ    -> CNOT, RZ, CNOT,
//! * CRZZ   -> CNOT, CRZ, CNOT with only the inner rotation controlled,
//! * CRZ    -> 2 CNOT + 2 RZ,
//! * SWAP   -> 3 CNOT.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, QubitLayout};
use crate::df::DFDecomposition;

/// Gate totals keyed by kind name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts(pub BTreeMap<String, usize>);

impl GateCounts {
    pub fn of(circuit: &Circuit) -> Self {
        let mut map = BTreeMap::new();
        for gate in &circuit.gates {
            let name = match gate {
                Gate::Givens { .. } => "givens",
                Gate::Rz { .. } => "rz",
                Gate::Rzz { .. } => "rzz",
                Gate::Cnot { .. } => "cnot",
                Gate::H { .. } => "h",
                Gate::Sdg { .. } => "sdg",
                Gate::X { .. } => "x",
                Gate::Crz { .. } => "crz",
                Gate::Crzz { .. } => "crzz",
                Gate::Swap { .. } => "swap",
                Gate::MeasureAll => "measure",
                Gate::BlockBegin { .. } | Gate::BlockEnd { .. } => continue,
            };
            *map.entry(name.to_string()).or_insert(0) += 1;
        }
        Self(map)
    }

    pub fn get(&self, kind: &str) -> usize {
        self.0.get(kind).copied().unwrap_or(0)
    }

    pub fn cnot(&self) -> usize {
        self.get("cnot")
    }
}

/// `RY(theta) = S H RZ(theta) H S^dag` with the `S = e^{i pi/4} RZ(pi/2)`
/// phase tracked on the circuit.
fn push_ry(circuit: &mut Circuit, q: usize, theta: f64) {
    circuit.push(Gate::Sdg { q });
    circuit.push(Gate::H { q });
    circuit.push(Gate::Rz { q, theta });
    circuit.push(Gate::H { q });
    circuit.push(Gate::Rz {
        q,
        theta: std::f64::consts::FRAC_PI_2,
    });
    circuit.global_phase += std::f64::consts::FRAC_PI_4;
}

fn lower_gate(out: &mut Circuit, gate: &Gate) {
    match *gate {
        Gate::Givens { a, b, phi } => {
            // conjugating the two equal-angle RY rotations between a CNOT
            // pair by RY(+-pi/2) on b realizes the Givens generator with
            // exactly 2 CNOTs
            push_ry(out, b, std::f64::consts::FRAC_PI_2);
            out.push(Gate::Cnot { ctrl: b, tgt: a });
            push_ry(out, a, phi);
            push_ry(out, b, phi);
            out.push(Gate::Cnot { ctrl: b, tgt: a });
            push_ry(out, b, -std::f64::consts::FRAC_PI_2);
        }
        Gate::Rzz { a, b, theta } => {
            out.push(Gate::Cnot { ctrl: a, tgt: b });
            out.push(Gate::Rz { q: b, theta });
            out.push(Gate::Cnot { ctrl: a, tgt: b });
        }
        Gate::Crzz { ctrl, a, b, theta } => {
            out.push(Gate::Cnot { ctrl: a, tgt: b });
            lower_gate(out, &Gate::Crz { ctrl, q: b, theta });
            out.push(Gate::Cnot { ctrl: a, tgt: b });
        }
        Gate::Crz { ctrl, q, theta } => {
            out.push(Gate::Rz { q, theta: theta / 2.0 });
            out.push(Gate::Cnot { ctrl, tgt: q });
            out.push(Gate::Rz { q, theta: -theta / 2.0 });
            out.push(Gate::Cnot { ctrl, tgt: q });
        }
        Gate::Swap { a, b } => {
            out.push(Gate::Cnot { ctrl: a, tgt: b });
            out.push(Gate::Cnot { ctrl: b, tgt: a });
            out.push(Gate::Cnot { ctrl: a, tgt: b });
        }
        g => out.push(g),
    }
}

/// Rewrites the circuit into the primitive set; returns the lowered circuit
/// with counts before and after. The realized unitary is preserved exactly
/// (phase included).
pub fn lower_and_count(circuit: &Circuit) -> (Circuit, GateCounts, GateCounts) {
    let before = GateCounts::of(circuit);
    let mut out = Circuit::new(circuit.n_qubits);
    out.global_phase = circuit.global_phase;
    for gate in &circuit.gates {
        lower_gate(&mut out, gate);
    }
    let after = GateCounts::of(&out);
    (out, before, after)
}

/// Optional linear-topology pass: every ZZ-type pair on non-adjacent qubits
/// is bubbled together with SWAP chains and restored afterwards. Off by
/// default; controls stay where they are.
pub fn route_linear(circuit: &Circuit) -> Circuit {
    let mut out = Circuit::new(circuit.n_qubits);
    out.global_phase = circuit.global_phase;
    for gate in &circuit.gates {
        let pair = match *gate {
            Gate::Rzz { a, b, .. } => Some((a, b)),
            Gate::Crzz { a, b, .. } => Some((a, b)),
            _ => None,
        };
        match (pair, gate) {
            (Some((a, b)), _) if a.abs_diff(b) > 1 => {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                // walk lo up to hi-1
                for j in lo..hi - 1 {
                    out.push(Gate::Swap { a: j, b: j + 1 });
                }
                let moved = hi - 1;
                let retarget = |q: usize| if q == lo { moved } else { q };
                match *gate {
                    Gate::Rzz { a, b, theta } => out.push(Gate::Rzz {
                        a: retarget(a),
                        b: retarget(b),
                        theta,
                    }),
                    Gate::Crzz { ctrl, a, b, theta } => out.push(Gate::Crzz {
                        ctrl,
                        a: retarget(a),
                        b: retarget(b),
                        theta,
                    }),
                    _ => unreachable!(),
                }
                for j in (lo..hi - 1).rev() {
                    out.push(Gate::Swap { a: j, b: j + 1 });
                }
            }
            _ => out.push(*gate),
        }
    }
    out
}

/// Gate accounting for one decomposition: the Trotter step, the controlled
/// step against its naive (un-rewritten) compilation, and one Hadamard-test
/// circuit. The headline number is the CNOT saving of the zeta rewrite,
/// `2 * N * n_DF` with `N = 2M` system qubits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateCountReport {
    pub n_orbitals: usize,
    pub n_df: usize,
    pub trotter_step: GateCounts,
    pub trotter_step_lowered: GateCounts,
    /// Counts after the linear-topology SWAP routing pass, when requested.
    pub trotter_step_routed_lowered: Option<GateCounts>,
    pub controlled_step_lowered: GateCounts,
    pub controlled_step_naive_lowered: GateCounts,
    pub hadamard_test_lowered: GateCounts,
    pub cnot_saving: usize,
    pub cnot_saving_formula: usize,
    /// The literature accounting groups a controlled two-qubit ZZ term as
    /// 4 CNOT + 2 ZZ rotations; our per-pair lowering realizes it as
    /// 4 CNOT + 2 RZ. Both tallies describe the same circuit.
    pub controlled_two_body_paper_equivalent: (usize, usize),
}

impl GateCountReport {
    pub fn build(
        decomp: &DFDecomposition,
        dt: f64,
        power: usize,
    ) -> Result<Self, crate::circuit::CircuitError> {
        Self::build_with_routing(decomp, dt, power, false)
    }

    pub fn build_with_routing(
        decomp: &DFDecomposition,
        dt: f64,
        power: usize,
        route: bool,
    ) -> Result<Self, crate::circuit::CircuitError> {
        let zeta = decomp.zeta();
        let m = decomp.n_orbitals();
        let layout = QubitLayout::system(m);
        let anc_layout = QubitLayout::with_ancilla(m);

        let step = super::trotter_step_circuit(&zeta, dt, &layout)?;
        let (_, step_before, step_after) = lower_and_count(&step);
        let routed = route.then(|| {
            let (_, _, counts) = lower_and_count(&route_linear(&step));
            counts
        });

        let controlled = super::controlled_trotter_circuit(&zeta, dt, power, &anc_layout)?;
        let (_, _, controlled_after) = lower_and_count(&controlled);

        let naive = super::controlled_trotter_circuit_naive(decomp, dt, power, &anc_layout)?;
        let (_, _, naive_after) = lower_and_count(&naive);

        let hadamard = super::hadamard_test_circuit(
            &zeta,
            &anc_layout,
            &[],
            &[],
            0,
            power.max(1),
            super::HadamardPart::Real,
            super::MeasuredFactor::OneBody,
            dt,
        )?;
        let (_, _, hadamard_after) = lower_and_count(&hadamard);

        let saving = naive_after.cnot().saturating_sub(controlled_after.cnot());
        Ok(Self {
            n_orbitals: m,
            n_df: decomp.n_df(),
            trotter_step: step_before,
            trotter_step_lowered: step_after,
            trotter_step_routed_lowered: routed,
            controlled_step_lowered: controlled_after,
            controlled_step_naive_lowered: naive_after,
            hadamard_test_lowered: hadamard_after,
            cnot_saving: saving,
            cnot_saving_formula: 2 * (2 * m) * decomp.n_df() * power,
            controlled_two_body_paper_equivalent: (4, 2),
        })
    }
}
