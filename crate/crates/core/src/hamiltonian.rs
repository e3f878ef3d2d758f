//! Active-space electronic Hamiltonians: FCIDUMP ingestion, integral symmetry
//! validation, the modified one-particle integrals, and a determinant-basis
//! exact-diagonalization oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Largest sector dimension the dense oracle will diagonalize.
pub const DEFAULT_SECTOR_CAP: usize = 4096;

/// Tolerance below which duplicate FCIDUMP records are considered consistent
/// and below which integral symmetries must hold.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FcidumpError {
    #[error("malformed FCIDUMP header: {0}")]
    MalformedHeader(String),
    #[error("orbital index out of range in record `{record}` (norb = {norb})")]
    IndexOutOfRange { record: String, norb: usize },
    #[error("malformed integral record: `{0}`")]
    MalformedRecord(String),
    #[error("conflicting duplicate record for ({p} {q} {r} {s}): {a} vs {b}")]
    ConflictingRecord {
        p: usize,
        q: usize,
        r: usize,
        s: usize,
        a: f64,
        b: f64,
    },
    #[error("electron count NELEC={nelec} MS2={ms2} is inconsistent with NORB={norb}")]
    BadElectronCount { nelec: i64, ms2: i64, norb: usize },
}

#[derive(Debug, Error)]
pub enum SectorError {
    #[error("sector dimension {dim} exceeds cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("occupation count out of range: n_alpha={n_alpha}, n_beta={n_beta}, M={m}")]
    BadOccupation { n_alpha: usize, n_beta: usize, m: usize },
}

/// Electron repulsion integrals `(pq|rs)` in chemists' notation, dense `M^4`
/// row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct EriTensor {
    m: usize,
    data: Vec<f64>,
}

impl EriTensor {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; m * m * m * m],
        }
    }

    pub fn n_orbitals(&self) -> usize {
        self.m
    }

    #[inline]
    fn idx(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * self.m + q) * self.m + r) * self.m + s
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.data[self.idx(p, q, r, s)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, r: usize, s: usize, value: f64) {
        let i = self.idx(p, q, r, s);
        self.data[i] = value;
    }

    /// Writes `value` into all eight symmetry images of `(pq|rs)`.
    pub fn set_symmetric(&mut self, p: usize, q: usize, r: usize, s: usize, value: f64) {
        for &(a, b, c, d) in &Self::images(p, q, r, s) {
            self.set(a, b, c, d, value);
        }
    }

    pub fn images(p: usize, q: usize, r: usize, s: usize) -> [(usize, usize, usize, usize); 8] {
        [
            (p, q, r, s),
            (q, p, r, s),
            (p, q, s, r),
            (q, p, s, r),
            (r, s, p, q),
            (s, r, p, q),
            (r, s, q, p),
            (s, r, q, p),
        ]
    }

    /// Averages over the 8-fold symmetry group.
    pub fn symmetrize(&mut self) {
        let m = self.m;
        let src = self.clone();
        for p in 0..m {
            for q in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        let avg = Self::images(p, q, r, s)
                            .iter()
                            .map(|&(a, b, c, d)| src.get(a, b, c, d))
                            .sum::<f64>()
                            / 8.0;
                        self.set(p, q, r, s, avg);
                    }
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Views the tensor as the `M^2 x M^2` pair matrix `A[(pq),(rs)]`.
    pub fn pair_matrix(&self) -> DMatrix<f64> {
        let m2 = self.m * self.m;
        DMatrix::from_row_slice(m2, m2, &self.data)
    }

    pub fn from_pair_matrix(m: usize, pair: &DMatrix<f64>) -> Self {
        assert_eq!(pair.nrows(), m * m);
        let mut data = Vec::with_capacity(m * m * m * m);
        for i in 0..m * m {
            for j in 0..m * m {
                data.push(pair[(i, j)]);
            }
        }
        Self { m, data }
    }

    /// Four-index transform `(pq|rs) -> sum C C C C (pq|rs)` with orbital
    /// rotation `C` (columns are new orbitals).
    pub fn rotate(&self, c: &DMatrix<f64>) -> Self {
        let m = self.m;
        let mut out = Self::zeros(m);
        // two-stage contraction through the pair matrix keeps this at O(M^5)
        let pair = self.pair_matrix();
        let mut cc = DMatrix::<f64>::zeros(m * m, m * m);
        for p in 0..m {
            for q in 0..m {
                for a in 0..m {
                    for b in 0..m {
                        cc[(p * m + q, a * m + b)] = c[(p, a)] * c[(q, b)];
                    }
                }
            }
        }
        let rotated = cc.transpose() * pair * &cc;
        for i in 0..m * m {
            for j in 0..m * m {
                out.data[i * m * m + j] = rotated[(i, j)];
            }
        }
        out
    }
}

/// Max violation per nontrivial symmetry image of the ERI tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub qp_rs: f64,
    pub pq_sr: f64,
    pub qp_sr: f64,
    pub rs_pq: f64,
    pub sr_pq: f64,
    pub rs_qp: f64,
    pub sr_qp: f64,
}

impl SymmetryReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.qp_rs, self.pq_sr, self.qp_sr, self.rs_pq, self.sr_pq, self.rs_qp, self.sr_qp,
        ]
        .into_iter()
        .fold(0.0_f64, f64::max)
    }
}

/// The classical input: external energy, one-body integrals, ERI tensor, and
/// particle numbers per spin.
#[derive(Debug, Clone)]
pub struct ActiveSpaceHamiltonian {
    pub n_orbitals: usize,
    pub e_ext: f64,
    pub h: DMatrix<f64>,
    pub eri: EriTensor,
    pub n_alpha: usize,
    pub n_beta: usize,
}

/// Modified one-particle integrals `kappa_pq = h_pq - 1/2 sum_r (pr|qr)`.
#[derive(Debug, Clone)]
pub struct KappaMatrix(pub DMatrix<f64>);

pub fn compute_kappa(h: &DMatrix<f64>, eri: &EriTensor) -> KappaMatrix {
    let m = eri.n_orbitals();
    let mut kappa = h.clone();
    for p in 0..m {
        for q in 0..m {
            let mut exch = 0.0;
            for r in 0..m {
                exch += eri.get(p, r, q, r);
            }
            kappa[(p, q)] -= 0.5 * exch;
        }
    }
    KappaMatrix(kappa)
}

pub fn validate_eri_symmetry(eri: &EriTensor) -> SymmetryReport {
    let m = eri.n_orbitals();
    let mut v = [0.0_f64; 7];
    for p in 0..m {
        for q in 0..m {
            for r in 0..m {
                for s in 0..m {
                    let base = eri.get(p, q, r, s);
                    let imgs = EriTensor::images(p, q, r, s);
                    for (slot, &(a, b, c, d)) in imgs.iter().skip(1).enumerate() {
                        v[slot] = v[slot].max((base - eri.get(a, b, c, d)).abs());
                    }
                }
            }
        }
    }
    SymmetryReport {
        qp_rs: v[0],
        pq_sr: v[1],
        qp_sr: v[2],
        rs_pq: v[3],
        sr_pq: v[4],
        rs_qp: v[5],
        sr_qp: v[6],
    }
}

// ---------------------------------------------------------------------------
// FCIDUMP
// ---------------------------------------------------------------------------

fn header_field(header: &str, key: &str) -> Option<i64> {
    // fields look like `NORB=10` separated by commas/whitespace
    let upper = header.to_uppercase();
    let pos = upper.find(&format!("{key}="))?;
    let rest = &header[pos + key.len() + 1..];
    let token: String = rest
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '-' || *c == '+')
        .collect();
    token.parse().ok()
}

/// Parses an FCIDUMP-format text into an [`ActiveSpaceHamiltonian`].
///
/// Records are `value p q r s` with 1-based indices in chemists' notation.
/// `value 0 0 0 0` is the external/core energy, records with `r = s = 0` are
/// one-body integrals, and every ERI record populates all eight symmetry
/// images. Duplicate records that disagree by more than `1e-10` are an error.
pub fn parse_fcidump(text: &str) -> Result<ActiveSpaceHamiltonian, FcidumpError> {
    let mut lines = text.lines();
    let mut header = String::new();
    let mut body_start: Vec<&str> = Vec::new();
    let mut in_header = true;
    for line in lines.by_ref() {
        if in_header {
            header.push_str(line);
            header.push(' ');
            let upper = line.to_uppercase();
            if upper.contains("&END") || upper.trim_end().ends_with('/') {
                in_header = false;
            }
        } else {
            body_start.push(line);
        }
    }
    if in_header {
        return Err(FcidumpError::MalformedHeader(
            "missing &END / terminator".into(),
        ));
    }
    let norb = header_field(&header, "NORB")
        .ok_or_else(|| FcidumpError::MalformedHeader("missing NORB".into()))?;
    let nelec = header_field(&header, "NELEC")
        .ok_or_else(|| FcidumpError::MalformedHeader("missing NELEC".into()))?;
    let ms2 = header_field(&header, "MS2").unwrap_or(0);
    if norb <= 0 {
        return Err(FcidumpError::MalformedHeader(format!(
            "NORB must be positive, got {norb}"
        )));
    }
    let m = norb as usize;
    if (nelec + ms2) % 2 != 0 || nelec < 0 {
        return Err(FcidumpError::BadElectronCount { nelec, ms2, norb: m });
    }
    let n_alpha = (nelec + ms2) / 2;
    let n_beta = (nelec - ms2) / 2;
    if n_alpha < 0 || n_beta < 0 || n_alpha as usize > m || n_beta as usize > m {
        return Err(FcidumpError::BadElectronCount { nelec, ms2, norb: m });
    }

    let mut e_ext = 0.0;
    let mut seen_core = false;
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut h_seen = vec![false; m * m];
    let mut eri = EriTensor::zeros(m);
    let mut eri_seen = vec![false; m * m * m * m];

    for line in body_start {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let value: f64 = it
            .next()
            .unwrap()
            .parse()
            .map_err(|_| FcidumpError::MalformedRecord(trimmed.into()))?;
        let mut idx = [0i64; 4];
        for slot in idx.iter_mut() {
            *slot = it
                .next()
                .ok_or_else(|| FcidumpError::MalformedRecord(trimmed.into()))?
                .parse()
                .map_err(|_| FcidumpError::MalformedRecord(trimmed.into()))?;
        }
        if it.next().is_some() {
            return Err(FcidumpError::MalformedRecord(trimmed.into()));
        }
        let [p, q, r, s] = idx;
        let in_range = |v: i64| v >= 1 && v <= m as i64;
        if p == 0 && q == 0 && r == 0 && s == 0 {
            if seen_core && (e_ext - value).abs() > SYMMETRY_TOL {
                return Err(FcidumpError::ConflictingRecord {
                    p: 0,
                    q: 0,
                    r: 0,
                    s: 0,
                    a: e_ext,
                    b: value,
                });
            }
            e_ext = value;
            seen_core = true;
        } else if r == 0 && s == 0 {
            if !in_range(p) || !in_range(q) {
                return Err(FcidumpError::IndexOutOfRange {
                    record: trimmed.into(),
                    norb: m,
                });
            }
            let (pi, qi) = (p as usize - 1, q as usize - 1);
            for (a, b) in [(pi, qi), (qi, pi)] {
                if h_seen[a * m + b] && (h[(a, b)] - value).abs() > SYMMETRY_TOL {
                    return Err(FcidumpError::ConflictingRecord {
                        p: a + 1,
                        q: b + 1,
                        r: 0,
                        s: 0,
                        a: h[(a, b)],
                        b: value,
                    });
                }
                h[(a, b)] = value;
                h_seen[a * m + b] = true;
            }
        } else {
            if !in_range(p) || !in_range(q) || !in_range(r) || !in_range(s) {
                return Err(FcidumpError::IndexOutOfRange {
                    record: trimmed.into(),
                    norb: m,
                });
            }
            let (pi, qi, ri, si) = (p as usize - 1, q as usize - 1, r as usize - 1, s as usize - 1);
            for &(a, b, c, d) in &EriTensor::images(pi, qi, ri, si) {
                let flat = ((a * m + b) * m + c) * m + d;
                if eri_seen[flat] && (eri.get(a, b, c, d) - value).abs() > SYMMETRY_TOL {
                    return Err(FcidumpError::ConflictingRecord {
                        p: a + 1,
                        q: b + 1,
                        r: c + 1,
                        s: d + 1,
                        a: eri.get(a, b, c, d),
                        b: value,
                    });
                }
                eri.set(a, b, c, d, value);
                eri_seen[flat] = true;
            }
        }
    }

    Ok(ActiveSpaceHamiltonian {
        n_orbitals: m,
        e_ext,
        h,
        eri,
        n_alpha: n_alpha as usize,
        n_beta: n_beta as usize,
    })
}

/// Serializes a Hamiltonian to FCIDUMP text (canonical unique records only).
pub fn write_fcidump(ham: &ActiveSpaceHamiltonian) -> String {
    let m = ham.n_orbitals;
    let nelec = ham.n_alpha + ham.n_beta;
    let ms2 = ham.n_alpha as i64 - ham.n_beta as i64;
    let mut out = format!("&FCI NORB={m},NELEC={nelec},MS2={ms2},\n&END\n");
    for p in 0..m {
        for q in 0..=p {
            for r in 0..m {
                for s in 0..=r {
                    if p * m + q < r * m + s {
                        continue;
                    }
                    let v = ham.eri.get(p, q, r, s);
                    if v != 0.0 {
                        out.push_str(&format!(
                            "{:.16e} {} {} {} {}\n",
                            v,
                            p + 1,
                            q + 1,
                            r + 1,
                            s + 1
                        ));
                    }
                }
            }
        }
    }
    for p in 0..m {
        for q in 0..=p {
            let v = ham.h[(p, q)];
            if v != 0.0 {
                out.push_str(&format!("{:.16e} {} {} 0 0\n", v, p + 1, q + 1));
            }
        }
    }
    out.push_str(&format!("{:.16e} 0 0 0 0\n", ham.e_ext));
    out
}

// ---------------------------------------------------------------------------
// Determinant sector basis and dense oracle
// ---------------------------------------------------------------------------

/// A Slater determinant as per-spin occupation bitmasks over spatial orbitals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Determinant {
    pub alpha: u32,
    pub beta: u32,
}

/// All determinants with fixed `(n_alpha, n_beta)`, alpha-mask major and both
/// masks ascending. The ordering fixes every sign convention downstream.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub m: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub dets: Vec<Determinant>,
}

fn masks_with_popcount(m: usize, n: usize) -> Vec<u32> {
    (0u32..(1u32 << m))
        .filter(|mask| mask.count_ones() as usize == n)
        .collect()
}

impl SectorBasis {
    pub fn new(m: usize, n_alpha: usize, n_beta: usize) -> Result<Self, SectorError> {
        if n_alpha > m || n_beta > m || m > 20 {
            return Err(SectorError::BadOccupation { n_alpha, n_beta, m });
        }
        let alphas = masks_with_popcount(m, n_alpha);
        let betas = masks_with_popcount(m, n_beta);
        let mut dets = Vec::with_capacity(alphas.len() * betas.len());
        for &a in &alphas {
            for &b in &betas {
                dets.push(Determinant { alpha: a, beta: b });
            }
        }
        Ok(Self {
            m,
            n_alpha,
            n_beta,
            dets,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dets.len()
    }

    pub fn index_of(&self, det: &Determinant) -> Option<usize> {
        self.dets.binary_search_by(|d| {
            (d.alpha, d.beta).cmp(&(det.alpha, det.beta))
        }).ok()
    }
}

/// Applies `p^dag q` within one spin mask. Returns the new mask and the
/// fermionic sign, or `None` if the action annihilates the state.
#[inline]
pub fn apply_pq(mask: u32, p: usize, q: usize) -> Option<(u32, f64)> {
    if mask & (1 << q) == 0 {
        return None;
    }
    let after_q = mask & !(1 << q);
    let sign_q = parity_below(mask, q);
    if after_q & (1 << p) != 0 {
        return None;
    }
    let sign_p = parity_below(after_q, p);
    Some((after_q | (1 << p), sign_q * sign_p))
}

#[inline]
fn parity_below(mask: u32, idx: usize) -> f64 {
    let below = mask & ((1u32 << idx) - 1);
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Applies the same-spin two-body string `p^dag r^dag s q` to one mask.
#[inline]
fn apply_prsq(mask: u32, p: usize, r: usize, s: usize, q: usize) -> Option<(u32, f64)> {
    let mut sign = 1.0;
    let mut cur = mask;
    // annihilate q
    if cur & (1 << q) == 0 {
        return None;
    }
    sign *= parity_below(cur, q);
    cur &= !(1 << q);
    // annihilate s
    if cur & (1 << s) == 0 {
        return None;
    }
    sign *= parity_below(cur, s);
    cur &= !(1 << s);
    // create r
    if cur & (1 << r) != 0 {
        return None;
    }
    sign *= parity_below(cur, r);
    cur |= 1 << r;
    // create p
    if cur & (1 << p) != 0 {
        return None;
    }
    sign *= parity_below(cur, p);
    cur |= 1 << p;
    Some((cur, sign))
}

/// Dense matrix of the spin-summed substitution operator `E+_pq` over a
/// sector basis. Used by tests to assemble operator forms independently.
pub fn sector_substitution_operator(basis: &SectorBasis, p: usize, q: usize) -> DMatrix<f64> {
    let dim = basis.dimension();
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    for (j, det) in basis.dets.iter().enumerate() {
        if let Some((a2, sign)) = apply_pq(det.alpha, p, q) {
            let img = Determinant {
                alpha: a2,
                beta: det.beta,
            };
            let i = basis.index_of(&img).expect("sector closed under E+");
            out[(i, j)] += sign;
        }
        if let Some((b2, sign)) = apply_pq(det.beta, p, q) {
            let img = Determinant {
                alpha: det.alpha,
                beta: b2,
            };
            let i = basis.index_of(&img).expect("sector closed under E+");
            out[(i, j)] += sign;
        }
    }
    out
}

/// Dense sector matrix of the active-space Hamiltonian
/// `E_ext + sum h_pq E+_pq + 1/2 sum (pq|rs) sum_{st} p+_s r+_t s_t q_s`
/// (one-body integrals with the normal-ordered two-body operator, which is
/// identical to the kappa form of the Hamiltonian with plain `E+ E+`
/// products).
pub fn build_sector_hamiltonian(
    ham: &ActiveSpaceHamiltonian,
    n_alpha: usize,
    n_beta: usize,
    cap: Option<usize>,
) -> Result<(SectorBasis, DMatrix<f64>), SectorError> {
    let basis = SectorBasis::new(ham.n_orbitals, n_alpha, n_beta)?;
    let dim = basis.dimension();
    let cap = cap.unwrap_or(DEFAULT_SECTOR_CAP);
    if dim > cap {
        return Err(SectorError::TooLarge { dim, cap });
    }
    let m = ham.n_orbitals;
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        mat[(i, i)] = ham.e_ext;
    }

    for (j, det) in basis.dets.iter().enumerate() {
        // one-body
        for p in 0..m {
            for q in 0..m {
                let hpq = ham.h[(p, q)];
                if hpq == 0.0 {
                    continue;
                }
                if let Some((a2, sign)) = apply_pq(det.alpha, p, q) {
                    let i = basis
                        .index_of(&Determinant {
                            alpha: a2,
                            beta: det.beta,
                        })
                        .unwrap();
                    mat[(i, j)] += hpq * sign;
                }
                if let Some((b2, sign)) = apply_pq(det.beta, p, q) {
                    let i = basis
                        .index_of(&Determinant {
                            alpha: det.alpha,
                            beta: b2,
                        })
                        .unwrap();
                    mat[(i, j)] += hpq * sign;
                }
            }
        }
        // two-body, normal ordered: 1/2 (pq|rs) p+_sigma r+_tau s_tau q_sigma
        for p in 0..m {
            for q in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        let v = 0.5 * ham.eri.get(p, q, r, s);
                        if v == 0.0 {
                            continue;
                        }
                        // same spin, alpha and beta
                        if let Some((a2, sign)) = apply_prsq(det.alpha, p, r, s, q) {
                            let i = basis
                                .index_of(&Determinant {
                                    alpha: a2,
                                    beta: det.beta,
                                })
                                .unwrap();
                            mat[(i, j)] += v * sign;
                        }
                        if let Some((b2, sign)) = apply_prsq(det.beta, p, r, s, q) {
                            let i = basis
                                .index_of(&Determinant {
                                    alpha: det.alpha,
                                    beta: b2,
                                })
                                .unwrap();
                            mat[(i, j)] += v * sign;
                        }
                        // mixed spin: (p+q)_alpha (r+s)_beta and vice versa;
                        // the even pair moves make cross-block parities cancel
                        if let Some((a2, sa)) = apply_pq(det.alpha, p, q) {
                            if let Some((b2, sb)) = apply_pq(det.beta, r, s) {
                                let i = basis
                                    .index_of(&Determinant {
                                        alpha: a2,
                                        beta: b2,
                                    })
                                    .unwrap();
                                mat[(i, j)] += v * sa * sb;
                            }
                        }
                        if let Some((b2, sb)) = apply_pq(det.beta, p, q) {
                            if let Some((a2, sa)) = apply_pq(det.alpha, r, s) {
                                let i = basis
                                    .index_of(&Determinant {
                                        alpha: a2,
                                        beta: b2,
                                    })
                                    .unwrap();
                                mat[(i, j)] += v * sa * sb;
                            }
                        }
                    }
                }
            }
        }
    }
    debug_assert!(
        linalg::max_abs(&(&mat - mat.transpose())) < 1e-12,
        "sector Hamiltonian must be symmetric"
    );
    Ok((basis, mat))
}

/// Ascending eigenvalues of the sector Hamiltonian; degenerate values are
/// repeated, never merged.
pub fn fci_oracle(
    ham: &ActiveSpaceHamiltonian,
    n_alpha: usize,
    n_beta: usize,
    cap: Option<usize>,
) -> Result<DVector<f64>, SectorError> {
    let (_, mat) = build_sector_hamiltonian(ham, n_alpha, n_beta, cap)?;
    let (vals, _) = linalg::eigh(&mat);
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_symmetric_eri(m: usize, rng: &mut impl Rng) -> EriTensor {
        let mut eri = EriTensor::zeros(m);
        for p in 0..m {
            for q in 0..=p {
                for r in 0..m {
                    for s in 0..=r {
                        if p * m + q >= r * m + s {
                            let v: f64 = rng.random_range(-1.0..1.0);
                            eri.set_symmetric(p, q, r, s, v);
                        }
                    }
                }
            }
        }
        eri
    }

    fn random_ham(m: usize, n_alpha: usize, n_beta: usize, seed: u64) -> ActiveSpaceHamiltonian {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = DMatrix::<f64>::zeros(m, m);
        for p in 0..m {
            for q in 0..=p {
                let v: f64 = rng.random_range(-1.0..1.0);
                h[(p, q)] = v;
                h[(q, p)] = v;
            }
        }
        ActiveSpaceHamiltonian {
            n_orbitals: m,
            e_ext: rng.random_range(-1.0..1.0),
            h,
            eri: random_symmetric_eri(m, &mut rng),
            n_alpha,
            n_beta,
        }
    }

    #[test]
    fn header_arithmetic() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 1 1 1\n";
        let ham = parse_fcidump(text).unwrap();
        assert_eq!(ham.n_orbitals, 2);
        assert_eq!(ham.n_alpha, 1);
        assert_eq!(ham.n_beta, 1);
    }

    #[test]
    fn single_record_populates_images_only() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 1 1 1\n";
        let ham = parse_fcidump(text).unwrap();
        assert_abs_diff_eq!(ham.eri.get(0, 0, 0, 0), 0.5);
        let total: f64 = ham.eri.as_slice().iter().map(|v| v.abs()).sum();
        assert_abs_diff_eq!(total, 0.5);
        assert_abs_diff_eq!(ham.h[(0, 0)], 0.0);
    }

    #[test]
    fn malformed_header_is_an_error() {
        assert!(matches!(
            parse_fcidump("&FCI NELEC=2\n&END\n"),
            Err(FcidumpError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_fcidump("no header at all"),
            Err(FcidumpError::MalformedHeader(_))
        ));
    }

    #[test]
    fn out_of_range_and_conflicts_are_errors() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 3 1 1 1\n";
        assert!(matches!(
            parse_fcidump(text),
            Err(FcidumpError::IndexOutOfRange { .. })
        ));
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 2 1 1\n0.7 2 1 1 1\n";
        assert!(matches!(
            parse_fcidump(text),
            Err(FcidumpError::ConflictingRecord { .. })
        ));
        // consistent duplicates are fine
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 2 1 1\n0.5 2 1 1 1\n";
        assert!(parse_fcidump(text).is_ok());
    }

    #[test]
    fn fcidump_round_trip() {
        let ham = random_ham(3, 2, 1, 7);
        let text = write_fcidump(&ham);
        let back = parse_fcidump(&text).unwrap();
        assert_eq!(back.n_alpha, 2);
        assert_eq!(back.n_beta, 1);
        assert!((back.e_ext - ham.e_ext).abs() < 1e-12);
        assert!(linalg::max_abs(&(&back.h - &ham.h)) < 1e-12);
        let mut max = 0.0_f64;
        for (a, b) in back.eri.as_slice().iter().zip(ham.eri.as_slice()) {
            max = max.max((a - b).abs());
        }
        assert!(max < 1e-12, "eri round trip max diff {max}");
        assert!(validate_eri_symmetry(&back.eri).max_violation() < 1e-10);
    }

    #[test]
    fn symmetry_report_flags_constructed_violation() {
        let mut eri = EriTensor::zeros(2);
        eri.set(0, 1, 0, 0, 1.0);
        let report = validate_eri_symmetry(&eri);
        assert_abs_diff_eq!(report.qp_rs, 1.0);
        let sym = {
            let mut e = eri.clone();
            e.symmetrize();
            e
        };
        assert!(validate_eri_symmetry(&sym).max_violation() < 1e-14);
    }

    #[test]
    fn kappa_closed_forms() {
        // eri = 0 -> kappa = h
        let m = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = DMatrix::<f64>::zeros(m, m);
        for p in 0..m {
            for q in 0..=p {
                let v: f64 = rng.random_range(-1.0..1.0);
                h[(p, q)] = v;
                h[(q, p)] = v;
            }
        }
        let kappa = compute_kappa(&h, &EriTensor::zeros(m));
        assert!(linalg::max_abs(&(&kappa.0 - &h)) < 1e-15);

        // M = 1, h = 0, (00|00) = U -> kappa = -U/2
        let mut eri = EriTensor::zeros(1);
        eri.set(0, 0, 0, 0, 2.5);
        let kappa = compute_kappa(&DMatrix::zeros(1, 1), &eri);
        assert_abs_diff_eq!(kappa.0[(0, 0)], -1.25);
    }

    #[test]
    fn kappa_matches_naive_loop() {
        let ham = random_ham(4, 2, 2, 3);
        let kappa = compute_kappa(&ham.h, &ham.eri);
        for p in 0..4 {
            for q in 0..4 {
                let mut expect = ham.h[(p, q)];
                for r in 0..4 {
                    expect -= 0.5 * ham.eri.get(p, r, q, r);
                }
                assert_abs_diff_eq!(kappa.0[(p, q)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn hubbard_site_double_occupancy() {
        // M = 1, h = 0, (00|00) = U: the doubly occupied sector pays U
        let mut eri = EriTensor::zeros(1);
        let u = 1.7;
        eri.set(0, 0, 0, 0, u);
        let ham = ActiveSpaceHamiltonian {
            n_orbitals: 1,
            e_ext: 0.0,
            h: DMatrix::zeros(1, 1),
            eri,
            n_alpha: 1,
            n_beta: 1,
        };
        let (_, mat) = build_sector_hamiltonian(&ham, 1, 1, None).unwrap();
        assert_eq!(mat.nrows(), 1);
        assert_abs_diff_eq!(mat[(0, 0)], u, epsilon = 1e-14);
        let vals = fci_oracle(&ham, 1, 1, None).unwrap();
        assert_abs_diff_eq!(vals[0], u, epsilon = 1e-14);
    }

    #[test]
    fn empty_sector_is_e_ext() {
        let ham = random_ham(3, 1, 1, 11);
        let (_, mat) = build_sector_hamiltonian(&ham, 0, 0, None).unwrap();
        assert_eq!(mat.nrows(), 1);
        assert_abs_diff_eq!(mat[(0, 0)], ham.e_ext, epsilon = 1e-14);
    }

    /// Two-site model at half filling against an independent closed form.
    ///
    /// For h = [[0,-t],[-t,0]], (pp|pp) = U: the singlet block in the site
    /// basis is spanned by {|20>, |02>, (|ud>+|du>)/sqrt2} and the ground
    /// energy is the smallest root of the 2x2 coupling problem,
    /// E0 = U/2 - sqrt((U/2)^2 + 4 t^2).
    #[test]
    fn two_site_model_ground_energy() {
        let (t, u) = (1.0, 4.0);
        let mut eri = EriTensor::zeros(2);
        eri.set(0, 0, 0, 0, u);
        eri.set(1, 1, 1, 1, u);
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 1)] = -t;
        h[(1, 0)] = -t;
        let ham = ActiveSpaceHamiltonian {
            n_orbitals: 2,
            e_ext: 0.0,
            h,
            eri,
            n_alpha: 1,
            n_beta: 1,
        };
        let vals = fci_oracle(&ham, 1, 1, None).unwrap();
        let expect = u / 2.0 - ((u / 2.0) * (u / 2.0) + 4.0 * t * t).sqrt();
        assert_abs_diff_eq!(vals[0], expect, epsilon = 1e-12);
        assert!(vals[0] < -2.0 * t + u / 2.0);
    }

    #[test]
    fn sector_too_large_is_an_error() {
        let ham = random_ham(4, 2, 2, 5);
        assert!(matches!(
            build_sector_hamiltonian(&ham, 2, 2, Some(10)),
            Err(SectorError::TooLarge { .. })
        ));
    }

    /// The h-form with the normal-ordered two-body operator must equal the
    /// kappa form `E_ext + sum (p|k|q) E+_pq + 1/2 sum (pq|rs) E+_pq E+_rs`
    /// assembled from explicit substitution-operator products.
    #[test]
    fn kappa_form_agrees_with_normal_ordered_form() {
        for seed in 0..10u64 {
            let m = 2 + (seed % 2) as usize;
            let ham = random_ham(m, 1, 1, 100 + seed);
            let (basis, mat) = build_sector_hamiltonian(&ham, 1, 1, None).unwrap();
            let dim = basis.dimension();
            let kappa = compute_kappa(&ham.h, &ham.eri);
            let mut alt = DMatrix::<f64>::identity(dim, dim) * ham.e_ext;
            let e_ops: Vec<Vec<DMatrix<f64>>> = (0..m)
                .map(|p| {
                    (0..m)
                        .map(|q| sector_substitution_operator(&basis, p, q))
                        .collect()
                })
                .collect();
            for p in 0..m {
                for q in 0..m {
                    alt += kappa.0[(p, q)] * &e_ops[p][q];
                }
            }
            for p in 0..m {
                for q in 0..m {
                    for r in 0..m {
                        for s in 0..m {
                            let v = 0.5 * ham.eri.get(p, q, r, s);
                            if v != 0.0 {
                                alt += v * &e_ops[p][q] * &e_ops[r][s];
                            }
                        }
                    }
                }
            }
            let diff = linalg::max_abs(&(&alt - &mat));
            assert!(diff < 1e-10, "seed {seed}: operator forms differ by {diff}");
        }
    }

    #[test]
    fn oracle_invariant_under_orbital_rotation() {
        let ham = random_ham(3, 2, 1, 42);
        let vals = fci_oracle(&ham, 2, 1, None).unwrap();
        // random special orthogonal rotation from a symmetric eigenbasis
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sym = DMatrix::<f64>::zeros(3, 3);
        for p in 0..3 {
            for q in 0..=p {
                let v: f64 = rng.random_range(-1.0..1.0);
                sym[(p, q)] = v;
                sym[(q, p)] = v;
            }
        }
        let (_, c) = linalg::eigh_special_orthogonal(&sym);
        let rotated = ActiveSpaceHamiltonian {
            n_orbitals: 3,
            e_ext: ham.e_ext,
            h: c.transpose() * &ham.h * &c,
            eri: ham.eri.rotate(&c),
            n_alpha: 2,
            n_beta: 1,
        };
        let vals_rot = fci_oracle(&rotated, 2, 1, None).unwrap();
        for i in 0..vals.len() {
            assert_abs_diff_eq!(vals[i], vals_rot[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn oracle_stable_under_symmetrization_noise() {
        let ham = random_ham(3, 1, 1, 13);
        let vals = fci_oracle(&ham, 1, 1, None).unwrap();
        let mut noisy = ham.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for v in noisy.eri.as_mut_slice().iter_mut() {
            *v += rng.random_range(-1e-12..1e-12);
        }
        noisy.eri.symmetrize();
        let vals_noisy = fci_oracle(&noisy, 1, 1, None).unwrap();
        for i in 0..vals.len() {
            assert_abs_diff_eq!(vals[i], vals_noisy[i], epsilon = 1e-8);
        }
    }
}
