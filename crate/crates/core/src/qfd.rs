//! Quantum filter diagonalization: overlap/Hamiltonian subspace matrices
//! from exact statevector propagation or from shot-sampled Hadamard tests
//! with post-selection and echo averaging, followed by a canonically
//! orthogonalized generalized eigensolve.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    diagonal_factor, hadamard_test_circuit, insert_echoes, trotter_step_circuit, CircuitError,
    Gate, HadamardPart, MeasuredFactor, QubitLayout,
};
use crate::df::{DFDecomposition, ZetaForm};
use crate::fock;
use crate::hamiltonian::ActiveSpaceHamiltonian;
use crate::linalg::{self, CMatrix};
use crate::sim::{
    apply_circuit, prepare_determinant, sample_shots, DiagonalFactor, NoiseModel, ShotRecord,
    SimError, StateVector,
};

/// Dense exact-mode operators above this orbital count are refused.
pub const EXACT_MODE_ORBITAL_CAP: usize = 5;

pub const DEFAULT_SHOTS: u64 = 8000;
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_EPS_S_EXACT: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum QfdError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("exact mode needs M <= {cap}, got {m}")]
    ExactModeTooLarge { m: usize, cap: usize },
    #[error(
        "all {shots} shots discarded by post-selection for element ({m},{n}) factor {factor}"
    )]
    AllShotsDiscarded {
        m: usize,
        n: usize,
        factor: String,
        shots: u64,
    },
    #[error("overlap matrix entirely discarded by the eigenvalue threshold")]
    EmptyOverlap,
    #[error("invalid config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QfdMode {
    Exact,
    HadamardShots,
}

/// A guess determinant and its symmetry sector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reference {
    pub label: String,
    pub alpha_occ: Vec<usize>,
    pub beta_occ: Vec<usize>,
}

impl Reference {
    pub fn rhf(n_alpha: usize, n_beta: usize) -> Self {
        Self {
            label: "rhf".into(),
            alpha_occ: (0..n_alpha).collect(),
            beta_occ: (0..n_beta).collect(),
        }
    }

    /// HOMO -> LUMO single alpha excitation: overlaps both the lowest
    /// triplet (S_z = 0 component) and the first excited singlet.
    pub fn homo_lumo_alpha(m: usize, n_alpha: usize, n_beta: usize) -> Option<Self> {
        if n_alpha == 0 || n_alpha >= m {
            return None;
        }
        let mut alpha: Vec<usize> = (0..n_alpha - 1).collect();
        alpha.push(n_alpha);
        Some(Self {
            label: "homo-lumo-alpha".into(),
            alpha_occ: alpha,
            beta_occ: (0..n_beta).collect(),
        })
    }

    pub fn sector(&self) -> SectorLabel {
        let n_alpha = self.alpha_occ.len();
        let n_beta = self.beta_occ.len();
        SectorLabel {
            n_alpha,
            n_beta,
            sz: 0.5 * (n_alpha as f64 - n_beta as f64),
        }
    }
}

/// The two-reference default: the RHF determinant plus the HOMO->LUMO
/// alpha excitation when it exists.
pub fn default_references(ham: &ActiveSpaceHamiltonian) -> Vec<Reference> {
    let mut refs = vec![Reference::rhf(ham.n_alpha, ham.n_beta)];
    if let Some(excited) = Reference::homo_lumo_alpha(ham.n_orbitals, ham.n_alpha, ham.n_beta) {
        refs.push(excited);
    }
    refs
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QfdConfig {
    pub n_qfd: usize,
    pub dt: f64,
    pub mode: QfdMode,
    pub shots: u64,
    /// Echo samples per matrix element; 0 disables echo sequencing.
    pub n_echo: usize,
    pub post_select: bool,
    /// Overlap eigenvalue threshold; defaults to `1e-8` in exact mode and
    /// `10 x` the median element standard error in shot mode.
    pub eps_s: Option<f64>,
    /// Dense matrix-exponential propagation instead of Trotter steps;
    /// exists for Toeplitz and convergence checks.
    pub exact_propagator: bool,
    pub noise: Option<NoiseModel>,
    pub seed: u64,
    /// Empty means the two-reference default.
    pub references: Vec<Reference>,
}

impl Default for QfdConfig {
    fn default() -> Self {
        Self {
            n_qfd: 2,
            dt: DEFAULT_DT,
            mode: QfdMode::Exact,
            shots: DEFAULT_SHOTS,
            n_echo: 0,
            post_select: false,
            eps_s: None,
            exact_propagator: false,
            noise: None,
            seed: 0,
            references: Vec::new(),
        }
    }
}

impl QfdConfig {
    fn validate(&self) -> Result<(), QfdError> {
        if self.n_qfd == 0 {
            return Err(QfdError::BadConfig("n_qfd must be at least 1".into()));
        }
        if self.dt <= 0.0 {
            return Err(QfdError::BadConfig("dt must be positive".into()));
        }
        if self.mode == QfdMode::HadamardShots && self.shots == 0 {
            return Err(QfdError::BadConfig("shot mode needs shots >= 1".into()));
        }
        Ok(())
    }
}

/// Overlap and Hamiltonian matrices over the time-propagated basis, with
/// per-element standard errors and discard statistics in shot mode.
#[derive(Debug, Clone)]
pub struct SubspaceMatrices {
    pub s: CMatrix,
    pub h: CMatrix,
    pub s_stderr: Option<DMatrix<f64>>,
    pub h_stderr: Option<DMatrix<f64>>,
    pub shots_discarded: u64,
    pub shots_total: u64,
    pub herm_residual_s: f64,
    pub herm_residual_h: f64,
    /// Max deviation from `S_{m,n} = S_{0,n-m}` (and the same for `H`),
    /// before Hermitization. Exact propagation drives this to zero; Trotter
    /// breaks it.
    pub toeplitz_deviation: f64,
}

impl SubspaceMatrices {
    pub fn discard_fraction(&self) -> f64 {
        if self.shots_total == 0 {
            0.0
        } else {
            self.shots_discarded as f64 / self.shots_total as f64
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mat = |m: &CMatrix| -> Vec<Vec<(f64, f64)>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| (m[(i, j)].re, m[(i, j)].im)).collect())
                .collect()
        };
        let err = |m: &Option<DMatrix<f64>>| -> Option<Vec<Vec<f64>>> {
            m.as_ref().map(|m| {
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect()
            })
        };
        serde_json::json!({
            "s": mat(&self.s),
            "h": mat(&self.h),
            "s_stderr": err(&self.s_stderr),
            "h_stderr": err(&self.h_stderr),
            "shots_discarded": self.shots_discarded,
            "shots_total": self.shots_total,
            "herm_residual_s": self.herm_residual_s,
            "herm_residual_h": self.herm_residual_h,
            "toeplitz_deviation": self.toeplitz_deviation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorLabel {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub sz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// Coefficient vectors in the original (non-orthogonal) basis, one per
    /// eigenvalue, entries as `(re, im)`.
    pub coefficients: Vec<Vec<(f64, f64)>>,
    pub retained_dim: usize,
    pub sector: SectorLabel,
}

// ---------------------------------------------------------------------------
// Exact mode
// ---------------------------------------------------------------------------

fn hermitize(m: &CMatrix) -> (CMatrix, f64) {
    let residual = linalg::max_abs_c(&(m - m.adjoint()));
    ((m + m.adjoint()) * Complex64::new(0.5, 0.0), residual)
}

fn toeplitz_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(0, j - i)]).norm());
        }
    }
    dev
}

/// `|Psi_m> = U^m |ref>` by Trotter circuits or the dense exact propagator;
/// `S` and `H` from direct inner products with the dense zeta-form operator.
pub fn build_matrices_exact(
    config: &QfdConfig,
    zeta: &ZetaForm,
    reference: &Reference,
) -> Result<SubspaceMatrices, QfdError> {
    config.validate()?;
    let m_orb = zeta.n_orbitals();
    if m_orb > EXACT_MODE_ORBITAL_CAP {
        return Err(QfdError::ExactModeTooLarge {
            m: m_orb,
            cap: EXACT_MODE_ORBITAL_CAP,
        });
    }
    let layout = QubitLayout::system(m_orb);
    let h_dense = fock::dense_from_zeta(zeta);
    let dim = h_dense.nrows();

    let mut states = Vec::with_capacity(config.n_qfd);
    let mut cur = prepare_determinant(&layout, &reference.alpha_occ, &reference.beta_occ)?;
    if config.exact_propagator {
        let hc = CMatrix::from_fn(dim, dim, |i, j| Complex64::new(h_dense[(i, j)], 0.0));
        let u = linalg::expm_hermitian(&hc, Complex64::new(0.0, -config.dt));
        for _ in 0..config.n_qfd {
            states.push(cur.clone());
            let amps = DVector::from_column_slice(cur.amplitudes());
            let next = &u * amps;
            cur = StateVector::from_amplitudes(next.iter().copied().collect())?;
        }
    } else {
        let step = trotter_step_circuit(zeta, config.dt, &layout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.n_qfd {
            states.push(cur.clone());
            apply_circuit(&mut cur, &step, None, &mut rng)?;
        }
    }

    let n = config.n_qfd;
    let mut s = CMatrix::zeros(n, n);
    let mut h = CMatrix::zeros(n, n);
    for (j, ket) in states.iter().enumerate() {
        // H |Psi_j>
        let mut h_ket = vec![Complex64::ZERO; dim];
        for (row, out) in h_ket.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            for col in 0..dim {
                let v = h_dense[(row, col)];
                if v != 0.0 {
                    acc += v * ket.amplitudes()[col];
                }
            }
            *out = acc;
        }
        for (i, bra) in states.iter().enumerate() {
            let mut sij = Complex64::ZERO;
            let mut hij = Complex64::ZERO;
            for (b, (k, hk)) in bra
                .amplitudes()
                .iter()
                .zip(ket.amplitudes().iter().zip(&h_ket))
            {
                sij += b.conj() * k;
                hij += b.conj() * hk;
            }
            s[(i, j)] = sij;
            h[(i, j)] = hij;
        }
    }

    let toeplitz = toeplitz_deviation(&s).max(toeplitz_deviation(&h));
    let (s, rs) = hermitize(&s);
    let (h, rh) = hermitize(&h);
    Ok(SubspaceMatrices {
        s,
        h,
        s_stderr: None,
        h_stderr: None,
        shots_discarded: 0,
        shots_total: 0,
        herm_residual_s: rs,
        herm_residual_h: rh,
        toeplitz_deviation: toeplitz,
    })
}

// ---------------------------------------------------------------------------
// Post-selection and estimators
// ---------------------------------------------------------------------------

/// Keeps bitstrings whose per-spin system popcounts match the sector; the
/// ancilla bit is excluded from the count.
pub fn post_select(
    shots: &ShotRecord,
    layout: &QubitLayout,
    n_alpha: usize,
    n_beta: usize,
) -> (ShotRecord, f64) {
    let mut kept = std::collections::BTreeMap::new();
    let mut kept_total = 0u64;
    for (bits, count) in shots.iter() {
        let (na, nb) = layout.spin_counts(bits);
        if na == n_alpha && nb == n_beta {
            *kept.entry(bits).or_insert(0) += count;
            kept_total += count;
        }
    }
    let discard_fraction = if shots.total == 0 {
        0.0
    } else {
        1.0 - kept_total as f64 / shots.total as f64
    };
    (
        ShotRecord {
            n_qubits: shots.n_qubits,
            counts: kept,
            total: kept_total,
        },
        discard_fraction,
    )
}

/// Shot estimator `mean( (-1)^ancilla * factor(bits) )` with its standard
/// error. Without an ancilla the sign is always `+1`.
pub fn estimate_factor_value(
    shots: &ShotRecord,
    factor: &DiagonalFactor,
    ancilla: Option<usize>,
) -> Result<(f64, f64), QfdError> {
    if shots.total == 0 {
        return Err(QfdError::BadConfig("no shots to estimate from".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (bits, count) in shots.iter() {
        let sign = match ancilla {
            Some(a) if bits & (1 << a) != 0 => -1.0,
            _ => 1.0,
        };
        let v = sign * factor.value(bits);
        mean += v * count as f64;
        m2 += v * v * count as f64;
    }
    let n = shots.total as f64;
    mean /= n;
    m2 /= n;
    let var = (m2 - mean * mean).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

// ---------------------------------------------------------------------------
// Hadamard-shots mode
// ---------------------------------------------------------------------------

fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    // splitmix64 over the tag stream
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &t in tags {
        state = state.wrapping_add(t).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

fn factor_name(f: MeasuredFactor) -> String {
    match f {
        MeasuredFactor::Identity => "identity".into(),
        MeasuredFactor::OneBody => "one-body".into(),
        MeasuredFactor::TwoBody(t) => format!("two-body-{t}"),
    }
}

struct ElementEstimate {
    value: Complex64,
    stderr: f64,
    discarded: u64,
    total: u64,
}

type FactorJob = (usize, usize, MeasuredFactor);

/// One matrix-element factor, averaged over echo samples.
#[allow(clippy::too_many_arguments)]
fn measure_factor(
    zeta: &ZetaForm,
    layout: &QubitLayout,
    reference: &Reference,
    config: &QfdConfig,
    m_idx: usize,
    n_idx: usize,
    factor: MeasuredFactor,
) -> Result<ElementEstimate, QfdError> {
    let (mm, nn, conjugate) = if m_idx <= n_idx {
        (m_idx, n_idx, false)
    } else {
        (n_idx, m_idx, true)
    };
    let df = diagonal_factor(zeta, layout, factor)?;
    let anc = layout.ancilla();
    let n_echo = config.n_echo.max(1);
    let sector = reference.sector();

    let mut parts = [Complex64::ZERO; 2];
    let mut variances = [0.0f64; 2];
    let mut discarded = 0u64;
    let mut total = 0u64;
    for (pi, part) in [HadamardPart::Real, HadamardPart::Imag].into_iter().enumerate() {
        let base = hadamard_test_circuit(
            zeta,
            layout,
            &reference.alpha_occ,
            &reference.beta_occ,
            mm,
            nn,
            part,
            factor,
            config.dt,
        )?;
        let has_blocks = base.count(|g| matches!(g, Gate::BlockBegin { .. })) > 0;
        let mut samples = Vec::with_capacity(n_echo);
        let mut shot_var_sum = 0.0;
        for e in 0..n_echo {
            let tag = [
                m_idx as u64,
                n_idx as u64,
                factor_tag(factor),
                pi as u64,
                e as u64,
            ];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &tag));
            let circuit = if config.n_echo > 0 && has_blocks {
                insert_echoes(&base, layout, derive_seed(config.seed, &[tag[0], tag[1], tag[2], tag[3], tag[4], 0xec40]))?
            } else {
                base.clone()
            };
            let mut state = StateVector::zero_state(layout.n_qubits());
            run_shot_batched(
                &mut state,
                &circuit,
                config,
                layout,
                &mut rng,
                &df,
                anc,
                sector,
                &mut samples,
                &mut shot_var_sum,
                &mut discarded,
                &mut total,
                (m_idx, n_idx, factor),
            )?;
        }
        let n_e = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n_e;
        let between = if samples.len() > 1 {
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_e * (n_e - 1.0))
        } else {
            0.0
        };
        parts[pi] = Complex64::new(mean, 0.0);
        variances[pi] = shot_var_sum / (n_e * n_e) + between;
    }

    let mut value = parts[0] + Complex64::new(0.0, parts[1].re);
    if conjugate {
        value = value.conj();
    }
    Ok(ElementEstimate {
        value,
        stderr: (variances[0] + variances[1]).sqrt(),
        discarded,
        total,
    })
}

fn factor_tag(f: MeasuredFactor) -> u64 {
    match f {
        MeasuredFactor::Identity => 0,
        MeasuredFactor::OneBody => 1,
        MeasuredFactor::TwoBody(t) => 2 + t as u64,
    }
}

/// Runs one circuit for `config.shots` trajectories, post-selects, and pushes
/// the estimate. Noiseless runs share a single trajectory.
#[allow(clippy::too_many_arguments)]
fn run_shot_batched(
    state: &mut StateVector,
    circuit: &crate::circuit::Circuit,
    config: &QfdConfig,
    layout: &QubitLayout,
    rng: &mut ChaCha8Rng,
    df: &DiagonalFactor,
    anc: Option<usize>,
    sector: SectorLabel,
    samples: &mut Vec<f64>,
    shot_var_sum: &mut f64,
    discarded: &mut u64,
    total: &mut u64,
    element: (usize, usize, MeasuredFactor),
) -> Result<(), QfdError> {
    let readout = config.noise.map(|n| n.readout).filter(|r| *r > 0.0);
    let record = match config.noise {
        Some(noise) if noise.p1 > 0.0 || noise.p2 > 0.0 => {
            // one trajectory per shot
            let mut counts = std::collections::BTreeMap::new();
            for _ in 0..config.shots {
                let mut st = state.clone();
                apply_circuit(&mut st, circuit, Some(&noise), rng)?;
                let one = sample_shots(&st, 1, rng, readout);
                for (bits, c) in one.iter() {
                    *counts.entry(bits).or_insert(0) += c;
                }
            }
            ShotRecord {
                n_qubits: state.n_qubits(),
                counts,
                total: config.shots,
            }
        }
        _ => {
            let mut st = state.clone();
            apply_circuit(&mut st, circuit, None, rng)?;
            sample_shots(&st, config.shots, rng, readout)
        }
    };
    *total += record.total;
    let record = if config.post_select {
        let (kept, _) = post_select(&record, layout, sector.n_alpha, sector.n_beta);
        *discarded += record.total - kept.total;
        kept
    } else {
        record
    };
    if record.total == 0 {
        return Err(QfdError::AllShotsDiscarded {
            m: element.0,
            n: element.1,
            factor: factor_name(element.2),
            shots: config.shots,
        });
    }
    let (value, stderr) = estimate_factor_value(&record, df, anc)?;
    samples.push(value);
    *shot_var_sum += stderr * stderr;
    Ok(())
}

/// Builds `S` and `H` from shot-sampled Hadamard tests. Every ordered element
/// is measured with its own circuits and seeds (`(n,m)` via the conjugated
/// `(m,n)` circuit with fresh shots), then the pair is Hermitized.
pub fn build_matrices_hadamard(
    config: &QfdConfig,
    zeta: &ZetaForm,
    reference: &Reference,
) -> Result<SubspaceMatrices, QfdError> {
    config.validate()?;
    let layout = QubitLayout::with_ancilla(zeta.n_orbitals());
    let n = config.n_qfd;
    let mut factors = vec![MeasuredFactor::Identity, MeasuredFactor::OneBody];
    for t in 0..zeta.n_df() {
        factors.push(MeasuredFactor::TwoBody(t));
    }

    let jobs: Vec<FactorJob> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .flat_map(|(i, j)| factors.iter().map(move |&f| (i, j, f)))
        .collect();
    let results: Result<Vec<ElementEstimate>, QfdError> = jobs
        .par_iter()
        .map(|&(i, j, f)| measure_factor(zeta, &layout, reference, config, i, j, f))
        .collect();
    let results = results?;

    let mut s = CMatrix::zeros(n, n);
    let mut h = CMatrix::zeros(n, n);
    let mut s_err = DMatrix::<f64>::zeros(n, n);
    let mut h_err = DMatrix::<f64>::zeros(n, n);
    let mut discarded = 0u64;
    let mut total = 0u64;
    for (&(i, j, f), est) in jobs.iter().zip(&results) {
        discarded += est.discarded;
        total += est.total;
        match f {
            MeasuredFactor::Identity => {
                s[(i, j)] = est.value;
                s_err[(i, j)] = est.stderr;
            }
            _ => {
                h[(i, j)] += est.value;
                h_err[(i, j)] = (h_err[(i, j)].powi(2) + est.stderr.powi(2)).sqrt();
            }
        }
    }
    // scalar term rides on the overlap estimate
    let e_prime = Complex64::new(zeta.e_ext_prime, 0.0);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += e_prime * s[(i, j)];
            h_err[(i, j)] =
                (h_err[(i, j)].powi(2) + (zeta.e_ext_prime * s_err[(i, j)]).powi(2)).sqrt();
        }
    }

    let toeplitz = toeplitz_deviation(&s).max(toeplitz_deviation(&h));
    let (s, rs) = hermitize(&s);
    let (h, rh) = hermitize(&h);
    Ok(SubspaceMatrices {
        s,
        h,
        s_stderr: Some(s_err),
        h_stderr: Some(h_err),
        shots_discarded: discarded,
        shots_total: total,
        herm_residual_s: rs,
        herm_residual_h: rh,
        toeplitz_deviation: toeplitz,
    })
}

/// Infinite-shot limit of the Hadamard pipeline: ancilla X/Y expectations
/// evaluated exactly on the circuit output states. Used by consistency
/// checks against [`build_matrices_exact`].
pub fn build_matrices_hadamard_exact(
    config: &QfdConfig,
    zeta: &ZetaForm,
    reference: &Reference,
) -> Result<SubspaceMatrices, QfdError> {
    config.validate()?;
    let layout = QubitLayout::with_ancilla(zeta.n_orbitals());
    let n = config.n_qfd;
    let mut factors = vec![MeasuredFactor::Identity, MeasuredFactor::OneBody];
    for t in 0..zeta.n_df() {
        factors.push(MeasuredFactor::TwoBody(t));
    }
    let mut s = CMatrix::zeros(n, n);
    let mut h = CMatrix::zeros(n, n);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..n {
        for j in 0..n {
            let (mm, nn, conjugate) = if i <= j { (i, j, false) } else { (j, i, true) };
            for &factor in &factors {
                let df = diagonal_factor(zeta, &layout, factor)?;
                let mut value = Complex64::ZERO;
                for part in [HadamardPart::Real, HadamardPart::Imag] {
                    let circuit = hadamard_test_circuit(
                        zeta,
                        &layout,
                        &reference.alpha_occ,
                        &reference.beta_occ,
                        mm,
                        nn,
                        part,
                        factor,
                        config.dt,
                    )?;
                    let mut st = StateVector::zero_state(layout.n_qubits());
                    apply_circuit(&mut st, &circuit, None, &mut rng)?;
                    let mut est = 0.0;
                    let anc = layout.ancilla().unwrap();
                    for (x, amp) in st.amplitudes().iter().enumerate() {
                        let p = amp.norm_sqr();
                        if p > 0.0 {
                            let sign = if x & (1 << anc) == 0 { 1.0 } else { -1.0 };
                            est += p * sign * df.value(x as u64);
                        }
                    }
                    match part {
                        HadamardPart::Real => value += est,
                        HadamardPart::Imag => value += Complex64::new(0.0, est),
                    }
                }
                if conjugate {
                    value = value.conj();
                }
                match factor {
                    MeasuredFactor::Identity => s[(i, j)] = value,
                    _ => h[(i, j)] += value,
                }
            }
            h[(i, j)] += Complex64::new(zeta.e_ext_prime, 0.0) * s[(i, j)];
        }
    }
    let toeplitz = toeplitz_deviation(&s).max(toeplitz_deviation(&h));
    let (s, rs) = hermitize(&s);
    let (h, rh) = hermitize(&h);
    Ok(SubspaceMatrices {
        s,
        h,
        s_stderr: None,
        h_stderr: None,
        shots_discarded: 0,
        shots_total: 0,
        herm_residual_s: rs,
        herm_residual_h: rh,
        toeplitz_deviation: toeplitz,
    })
}

// ---------------------------------------------------------------------------
// Generalized eigenproblem
// ---------------------------------------------------------------------------

/// Canonical orthogonalization: whiten by the overlap eigenbasis, drop
/// eigenpairs below `eps * max`, solve the ordinary Hermitian problem in the
/// retained subspace, and map the coefficients back.
pub fn solve_gevp(
    s: &CMatrix,
    h: &CMatrix,
    eps: f64,
    sector: SectorLabel,
) -> Result<SpectrumResult, QfdError> {
    let (s_sym, _) = hermitize(s);
    let (h_sym, _) = hermitize(h);
    let (s_vals, s_vecs) = linalg::eigh_complex(&s_sym);
    let s_max = s_vals.iter().fold(0.0f64, |m, &v| m.max(v));
    if s_max <= 0.0 {
        return Err(QfdError::EmptyOverlap);
    }
    let keep: Vec<usize> = (0..s_vals.len())
        .filter(|&k| s_vals[k] > eps * s_max && s_vals[k] > 0.0)
        .collect();
    if keep.is_empty() {
        return Err(QfdError::EmptyOverlap);
    }
    let n = s.nrows();
    let mut x = CMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let scale = Complex64::new(1.0 / s_vals[k].sqrt(), 0.0);
        for row in 0..n {
            x[(row, col)] = s_vecs[(row, k)] * scale;
        }
    }
    let h_tilde = x.adjoint() * &h_sym * &x;
    let (h_tilde, _) = hermitize(&h_tilde);
    let (vals, vecs) = linalg::eigh_complex(&h_tilde);
    let coeffs = &x * vecs;
    Ok(SpectrumResult {
        eigenvalues: vals.iter().copied().collect(),
        coefficients: (0..coeffs.ncols())
            .map(|c| {
                (0..coeffs.nrows())
                    .map(|r| (coeffs[(r, c)].re, coeffs[(r, c)].im))
                    .collect()
            })
            .collect(),
        retained_dim: keep.len(),
        sector,
    })
}

fn default_eps(config: &QfdConfig, matrices: &SubspaceMatrices) -> f64 {
    if let Some(eps) = config.eps_s {
        return eps;
    }
    match config.mode {
        QfdMode::Exact => DEFAULT_EPS_S_EXACT,
        QfdMode::HadamardShots => {
            let mut errs: Vec<f64> = matrices
                .s_stderr
                .as_ref()
                .map(|m| m.iter().copied().collect())
                .unwrap_or_default();
            if errs.is_empty() {
                return DEFAULT_EPS_S_EXACT;
            }
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            10.0 * errs[errs.len() / 2]
        }
    }
}

// ---------------------------------------------------------------------------
// End-to-end runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gaps {
    pub s0: f64,
    pub t1: Option<f64>,
    pub s1: Option<f64>,
    /// `T1 - S0`.
    pub singlet_triplet: Option<f64>,
    /// `S1 - S0`.
    pub singlet_singlet: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub reference: Reference,
    pub matrices: SubspaceMatrices,
    pub spectrum: SpectrumResult,
}

#[derive(Debug, Clone)]
pub struct QfdRun {
    pub per_reference: Vec<ReferenceRun>,
    pub gaps: Option<Gaps>,
}

/// Runs the full pipeline per reference determinant and merges the spectra.
/// Labeling convention: `S0` is the minimum of the first (RHF) run, `T1` the
/// minimum of the second (excited-reference) run, and `S1` its second state.
pub fn run_qfd(
    ham: &ActiveSpaceHamiltonian,
    decomp: &DFDecomposition,
    config: &QfdConfig,
) -> Result<QfdRun, QfdError> {
    config.validate()?;
    let zeta = decomp.zeta();
    let references = if config.references.is_empty() {
        default_references(ham)
    } else {
        config.references.clone()
    };
    let mut per_reference = Vec::with_capacity(references.len());
    for reference in &references {
        let matrices = match config.mode {
            QfdMode::Exact => build_matrices_exact(config, &zeta, reference)?,
            QfdMode::HadamardShots => build_matrices_hadamard(config, &zeta, reference)?,
        };
        let eps = default_eps(config, &matrices);
        let spectrum = solve_gevp(&matrices.s, &matrices.h, eps, reference.sector())?;
        per_reference.push(ReferenceRun {
            reference: reference.clone(),
            matrices,
            spectrum,
        });
    }

    let gaps = if per_reference.len() >= 2 {
        let s0 = per_reference[0].spectrum.eigenvalues[0];
        let t1 = per_reference[1].spectrum.eigenvalues.first().copied();
        let s1 = per_reference[1].spectrum.eigenvalues.get(1).copied();
        Some(Gaps {
            s0,
            t1,
            s1,
            singlet_triplet: t1.map(|t| t - s0),
            singlet_singlet: s1.map(|s| s - s0),
        })
    } else {
        per_reference.first().map(|r| Gaps {
            s0: r.spectrum.eigenvalues[0],
            t1: None,
            s1: None,
            singlet_triplet: None,
            singlet_singlet: None,
        })
    };
    Ok(QfdRun { per_reference, gaps })
}
