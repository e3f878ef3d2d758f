//! Echo sequencing: each Trotter term block is wrapped in random
//! per-spin-species phase rotations `C = exp(i eta_a N_a) exp(i eta_b N_b)`.
//! The echoes commute with every term (the terms conserve both spin
//! numbers), so a noiseless circuit is unchanged up to an exactly cancelling
//! phase; under noise they twirl symmetry-breaking error components.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, CircuitError, Gate, QubitLayout};

/// Wraps every marked term block with fresh uniform angles from the seeded
/// generator.
pub fn insert_echoes(
    circuit: &Circuit,
    layout: &QubitLayout,
    seed: u64,
) -> Result<Circuit, CircuitError> {
    let n_blocks = circuit
        .gates
        .iter()
        .filter(|g| matches!(g, Gate::BlockBegin { .. }))
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<(f64, f64)> = (0..n_blocks)
        .map(|_| {
            (
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    insert_echoes_with_angles(circuit, layout, &angles)
}

/// Echo insertion with explicit per-block `(eta_alpha, eta_beta)` angles.
///
/// `exp(i eta n_q) = e^{i eta / 2} RZ(-eta)` per qubit, so each `C` costs
/// `2M` RZ gates; the tracked phases of `C` and `C^dag` cancel exactly.
pub fn insert_echoes_with_angles(
    circuit: &Circuit,
    layout: &QubitLayout,
    angles: &[(f64, f64)],
) -> Result<Circuit, CircuitError> {
    let n_blocks = circuit
        .gates
        .iter()
        .filter(|g| matches!(g, Gate::BlockBegin { .. }))
        .count();
    if n_blocks == 0 {
        return Err(CircuitError::MissingBlockMarkers);
    }
    assert_eq!(angles.len(), n_blocks, "one angle pair per term block");

    let m = layout.n_orbitals;
    let mut out = Circuit::new(circuit.n_qubits);
    out.global_phase = circuit.global_phase;
    let mut block = 0usize;
    for gate in &circuit.gates {
        match gate {
            Gate::BlockBegin { .. } => {
                let (ea, eb) = angles[block];
                // opening rotations; the closing ones after the block invert them
                for k in 0..m {
                    out.push(Gate::Rz {
                        q: layout.qubit(k, crate::Spin::Alpha),
                        theta: ea,
                    });
                    out.push(Gate::Rz {
                        q: layout.qubit(k, crate::Spin::Beta),
                        theta: eb,
                    });
                }
                out.push(*gate);
            }
            Gate::BlockEnd { .. } => {
                out.push(*gate);
                let (ea, eb) = angles[block];
                for k in 0..m {
                    out.push(Gate::Rz {
                        q: layout.qubit(k, crate::Spin::Alpha),
                        theta: -ea,
                    });
                    out.push(Gate::Rz {
                        q: layout.qubit(k, crate::Spin::Beta),
                        theta: -eb,
                    });
                }
                block += 1;
            }
            g => out.push(*g),
        }
    }
    Ok(out)
}
