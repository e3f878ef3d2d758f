//! Double factorization of the ERI tensor.
//!
//! The explicit route (X-DF) nests two eigendecompositions: the unrolled
//! `M^2 x M^2` pair matrix yields density-fitting factors, and each
//! symmetrized factor is eigendecomposed into a leaf/core pair. The
//! compressed route (C-DF) instead minimizes the least-squares objective
//! `O = 1/2 |eri - sum_t U U Z U U|_F^2` over orbital-rotation generators,
//! refitting the core tensors analytically at every step.

pub mod expm;
pub mod lbfgs;
mod zeta;

pub use zeta::{to_zeta_form, ZetaForm, ZetaLayer, ZetaPair};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::{compute_kappa, ActiveSpaceHamiltonian, EriTensor, KappaMatrix};
use crate::linalg;

#[derive(Debug, Error)]
pub enum DfError {
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not antisymmetric")]
    NotAntisymmetric,
    #[error("n_DF = {n_df} outside 1..={max} for M = {m}")]
    RankOutOfRange { n_df: usize, max: usize, m: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// One double-factorization layer: special orthogonal leaf `U` and symmetric
/// core `Z` (Hartree).
#[derive(Debug, Clone)]
pub struct DFLayer {
    pub u: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// Eigendecomposition of the modified one-body integrals:
/// `kappa = U0 diag(f0) U0^T`.
#[derive(Debug, Clone)]
pub struct OneBodyFactor {
    pub u0: DMatrix<f64>,
    pub f0: DVector<f64>,
}

/// The factorized Hamiltonian handed to the circuit compiler.
#[derive(Debug, Clone)]
pub struct DFDecomposition {
    pub e_ext: f64,
    pub one_body: OneBodyFactor,
    pub layers: Vec<DFLayer>,
    pub zeta: Option<ZetaForm>,
}

impl DFDecomposition {
    pub fn n_orbitals(&self) -> usize {
        self.one_body.u0.nrows()
    }

    pub fn n_df(&self) -> usize {
        self.layers.len()
    }

    /// Computes and caches the zeta rewrite.
    pub fn with_zeta(mut self) -> Self {
        self.zeta = Some(to_zeta_form(&self));
        self
    }

    pub fn zeta(&self) -> ZetaForm {
        self.zeta.clone().unwrap_or_else(|| to_zeta_form(self))
    }
}

/// Symmetric eigendecomposition of kappa with the crate's sign conventions:
/// eigenvalues ascending, columns sign-fixed, determinant forced to `+1`.
pub fn decompose_one_body(kappa: &KappaMatrix) -> Result<OneBodyFactor, DfError> {
    let k = &kappa.0;
    if linalg::max_abs(&(k - k.transpose())) > 1e-10 {
        return Err(DfError::NotSymmetric);
    }
    let sym = (k + k.transpose()) * 0.5;
    let (f0, u0) = linalg::eigh_special_orthogonal(&sym);
    Ok(OneBodyFactor { u0, f0 })
}

/// Pair vectors `P[(pq), k] = U_pk U_qk` of a leaf tensor.
pub fn pair_vectors(u: &DMatrix<f64>) -> DMatrix<f64> {
    let m = u.nrows();
    let mut p = DMatrix::<f64>::zeros(m * m, m);
    for k in 0..m {
        for a in 0..m {
            for b in 0..m {
                p[(a * m + b, k)] = u[(a, k)] * u[(b, k)];
            }
        }
    }
    p
}

/// `sum_t sum_kl U_pk U_qk Z_kl U_rl U_sl`; 8-fold symmetric by construction.
/// The within-pair symmetry is exact (identical rows of the pair vectors);
/// the pair-exchange symmetry is restored from matmul rounding by averaging
/// the two triangles.
pub fn reconstruct_eri(m: usize, layers: &[DFLayer]) -> EriTensor {
    let mut pair = DMatrix::<f64>::zeros(m * m, m * m);
    for layer in layers {
        let p = pair_vectors(&layer.u);
        pair += &p * &layer.z * p.transpose();
    }
    let pair = (&pair + pair.transpose()) * 0.5;
    let out = EriTensor::from_pair_matrix(m, &pair);
    debug_assert!(
        crate::hamiltonian::validate_eri_symmetry(&out).max_violation() < 1e-12,
        "reconstruction must be 8-fold symmetric"
    );
    out
}

/// Objective and maximum absolute deviation of a factorization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Diagnostics {
    pub objective: f64,
    pub mad: f64,
}

pub fn factorization_diagnostics(eri: &EriTensor, layers: &[DFLayer]) -> Diagnostics {
    let m = eri.n_orbitals();
    let recon = reconstruct_eri(m, layers);
    let mut obj = 0.0;
    let mut mad = 0.0f64;
    for (a, b) in eri.as_slice().iter().zip(recon.as_slice()) {
        let d = a - b;
        obj += d * d;
        mad = mad.max(d.abs());
    }
    Diagnostics {
        objective: 0.5 * obj,
        mad,
    }
}

/// Explicit double factorization: eigendecompose the unrolled pair matrix,
/// keep the `n_df` eigenpairs of largest magnitude, symmetrize each factor,
/// and eigendecompose it into a leaf/core pair.
pub fn xdf_factorize(eri: &EriTensor, n_df: usize) -> Result<Vec<DFLayer>, DfError> {
    let m = eri.n_orbitals();
    let max = m * (m + 1) / 2;
    if n_df == 0 || n_df > max {
        return Err(DfError::RankOutOfRange { n_df, max, m });
    }
    let pair = eri.pair_matrix();
    let sym_pair = (&pair + pair.transpose()) * 0.5;
    let (lambdas, vecs) = linalg::eigh(&sym_pair);
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].abs().partial_cmp(&lambdas[a].abs()).unwrap());

    let mut layers = Vec::with_capacity(n_df);
    for &t in order.iter().take(n_df) {
        let lambda = lambdas[t];
        let col = vecs.column(t);
        let mut v = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                v[(a, b)] = col[a * m + b];
            }
        }
        // symmetric up to numerical noise in accidental degeneracies
        let v = (&v + v.transpose()) * 0.5;
        let (gamma, u) = linalg::eigh_special_orthogonal(&v);
        let mut z = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            for l in 0..m {
                z[(k, l)] = gamma[k] * lambda * gamma[l];
            }
        }
        layers.push(DFLayer { u, z });
    }
    Ok(layers)
}

// ---------------------------------------------------------------------------
// C-DF objective and gradients
// ---------------------------------------------------------------------------

/// Antisymmetric orbital-rotation generators, one per layer (`U = exp(X)`).
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub x: Vec<DMatrix<f64>>,
}

impl GeneratorParams {
    pub fn zeros(m: usize, n_df: usize) -> Self {
        Self {
            x: vec![DMatrix::zeros(m, m); n_df],
        }
    }
}

/// `O`, `dO/dX` (per layer, antisymmetric), and `dO/dZ` (per layer) at
/// `U_t = exp(X_t)` with the given core tensors.
pub fn cdf_objective_gradient(
    params: &GeneratorParams,
    zs: &[DMatrix<f64>],
    eri: &EriTensor,
) -> Result<(f64, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>), DfError> {
    if params.x.len() != zs.len() {
        return Err(DfError::ShapeMismatch(format!(
            "{} generators vs {} core tensors",
            params.x.len(),
            zs.len()
        )));
    }
    let exps = params
        .x
        .iter()
        .map(expm::expm_antisymmetric)
        .collect::<Result<Vec<_>, _>>()?;
    let us: Vec<DMatrix<f64>> = exps.iter().map(|e| e.u().clone()).collect();
    let (obj, grad_u, grad_z) = objective_and_grads_u(&us, zs, eri);
    let grad_x = exps
        .iter()
        .zip(grad_u.iter())
        .map(|(e, gu)| expm::antisym_gradient(e, gu))
        .collect();
    Ok((obj, grad_x, grad_z))
}

/// Objective with gradients taken directly in the leaf tensors.
fn objective_and_grads_u(
    us: &[DMatrix<f64>],
    zs: &[DMatrix<f64>],
    eri: &EriTensor,
) -> (f64, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let m = eri.n_orbitals();
    let pairs: Vec<DMatrix<f64>> = us.iter().map(pair_vectors).collect();
    let mut delta = eri.pair_matrix();
    for (p, z) in pairs.iter().zip(zs) {
        delta -= p * z * p.transpose();
    }
    let obj = 0.5 * delta.iter().map(|d| d * d).sum::<f64>();

    let mut grad_u = Vec::with_capacity(us.len());
    let mut grad_z = Vec::with_capacity(us.len());
    for (t, p) in pairs.iter().enumerate() {
        // dO/dZ_kl = - P^T Delta P
        let dp = &delta * p;
        grad_z.push(-(p.transpose() * &dp));
        // dO/dU_pk = -4 sum_q Delta[(pq), l-contract] -> via G2 = (Delta P) Z
        let g2 = &dp * &zs[t];
        let mut gu = DMatrix::<f64>::zeros(m, m);
        for pp in 0..m {
            for k in 0..m {
                let mut acc = 0.0;
                for q in 0..m {
                    acc += g2[(pp * m + q, k)] * us[t][(q, k)];
                }
                gu[(pp, k)] = -4.0 * acc;
            }
        }
        grad_u.push(gu);
    }
    (obj, grad_u, grad_z)
}

// ---------------------------------------------------------------------------
// Analytical core-tensor fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZSolveMethod {
    Pseudoinverse,
    ConjugateGradient,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub z: Vec<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Eigenvalue cutoff of the pseudoinverse, relative to the largest
/// eigenvalue of the normal matrix.
pub const PINV_CUTOFF: f64 = 1e-10;
pub const CG_TOL: f64 = 1e-10;
pub const CG_MAX_ITERS: usize = 500;

/// Solves the normal equations `A Z = R` for the optimal core tensors given
/// fixed leaves: `R_t = P_t^T eri P_t`, `A[(tkl),(t'k'l')] = M^tt'_kk' M^tt'_ll'`
/// with `M^tt' = (U_t^T U_t')∘2`. The right-hand side lies in the range of
/// `A`, so both solvers reach a stationary point of the objective even though
/// `A` carries formal singularities of degeneracy `n_DF - 1`.
pub fn fit_core_tensors(
    us: &[DMatrix<f64>],
    eri: &EriTensor,
    method: ZSolveMethod,
) -> FitOutcome {
    let n_df = us.len();
    let m = eri.n_orbitals();
    if n_df == 0 {
        return FitOutcome {
            z: Vec::new(),
            converged: true,
            iterations: 0,
        };
    }
    let pairs: Vec<DMatrix<f64>> = us.iter().map(pair_vectors).collect();
    let eri_pair = eri.pair_matrix();
    // R_t = P_t^T eri P_t
    let rhs: Vec<DMatrix<f64>> = pairs
        .iter()
        .map(|p| p.transpose() * &eri_pair * p)
        .collect();
    // metric blocks M^tt' = (U_t^T U_t') elementwise squared
    let mut metric = vec![vec![DMatrix::<f64>::zeros(m, m); n_df]; n_df];
    for t in 0..n_df {
        for tp in 0..n_df {
            let s = us[t].transpose() * &us[tp];
            metric[t][tp] = s.component_mul(&s);
        }
    }

    match method {
        ZSolveMethod::Pseudoinverse => {
            let dim = n_df * m * m;
            let mut a = DMatrix::<f64>::zeros(dim, dim);
            for t in 0..n_df {
                for tp in 0..n_df {
                    let mm = &metric[t][tp];
                    for k in 0..m {
                        for l in 0..m {
                            for kp in 0..m {
                                for lp in 0..m {
                                    a[(t * m * m + k * m + l, tp * m * m + kp * m + lp)] =
                                        mm[(k, kp)] * mm[(l, lp)];
                                }
                            }
                        }
                    }
                }
            }
            let mut b = DVector::<f64>::zeros(dim);
            for t in 0..n_df {
                for k in 0..m {
                    for l in 0..m {
                        b[t * m * m + k * m + l] = rhs[t][(k, l)];
                    }
                }
            }
            let z_flat = linalg::pinv_symmetric(&a, PINV_CUTOFF) * b;
            let z = unflatten_symmetrized(&z_flat, m, n_df);
            FitOutcome {
                z,
                converged: true,
                iterations: 0,
            }
        }
        ZSolveMethod::ConjugateGradient => {
            // matrix-free product sigma_t = sum_t' M^tt' Z_t' M^tt'^T
            let apply = |zz: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> {
                (0..n_df)
                    .map(|t| {
                        let mut acc = DMatrix::<f64>::zeros(m, m);
                        for tp in 0..n_df {
                            acc += &metric[t][tp] * &zz[tp] * metric[t][tp].transpose();
                        }
                        acc
                    })
                    .collect()
            };
            let dot = |a: &[DMatrix<f64>], b: &[DMatrix<f64>]| -> f64 {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.iter().zip(y.iter()).map(|(u, v)| u * v).sum::<f64>())
                    .sum()
            };
            let mut z: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); n_df];
            let mut r = rhs.clone();
            let mut p = r.clone();
            let mut rs = dot(&r, &r);
            let b_norm = rs.sqrt().max(1.0);
            let mut converged = rs.sqrt() <= CG_TOL * b_norm;
            let mut iterations = 0;
            while !converged && iterations < CG_MAX_ITERS {
                let ap = apply(&p);
                let denom = dot(&p, &ap);
                if denom.abs() < 1e-300 {
                    break;
                }
                let alpha = rs / denom;
                for t in 0..n_df {
                    z[t] += alpha * &p[t];
                    r[t] -= alpha * &ap[t];
                }
                let rs_new = dot(&r, &r);
                if rs_new.sqrt() <= CG_TOL * b_norm {
                    converged = true;
                }
                let beta = rs_new / rs;
                for t in 0..n_df {
                    p[t] = &r[t] + beta * &p[t];
                }
                rs = rs_new;
                iterations += 1;
            }
            for zt in z.iter_mut() {
                let sym = (&*zt + zt.transpose()) * 0.5;
                *zt = sym;
            }
            FitOutcome {
                z,
                converged,
                iterations,
            }
        }
    }
}

fn unflatten_symmetrized(flat: &DVector<f64>, m: usize, n_df: usize) -> Vec<DMatrix<f64>> {
    (0..n_df)
        .map(|t| {
            let mut z = DMatrix::<f64>::zeros(m, m);
            for k in 0..m {
                for l in 0..m {
                    z[(k, l)] = flat[t * m * m + k * m + l];
                }
            }
            (&z + z.transpose()) * 0.5
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Two-step C-DF
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CdfOptions {
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub patience: usize,
    pub z_method: ZSolveMethod,
    /// Optimize `(X, Z)` jointly instead of refitting `Z` analytically at
    /// every objective evaluation. Slower to converge; kept for comparison.
    pub one_step: bool,
}

impl Default for CdfOptions {
    fn default() -> Self {
        Self {
            max_epochs: 100_000,
            grad_tol: 1e-8,
            seed: 0,
            patience: 500,
            z_method: ZSolveMethod::Pseudoinverse,
            one_step: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u8,
    pub objective: f64,
    pub mad: f64,
}

#[derive(Debug, Clone)]
pub struct CdfOutcome {
    pub layers: Vec<DFLayer>,
    pub history: Vec<StageRecord>,
    pub converged: bool,
    pub epochs: usize,
}

fn pack_antisym(mats: &[DMatrix<f64>], m: usize) -> DVector<f64> {
    let per = m * (m - 1) / 2;
    let mut out = DVector::<f64>::zeros(mats.len() * per);
    for (t, x) in mats.iter().enumerate() {
        let mut idx = 0;
        for p in 0..m {
            for q in 0..p {
                out[t * per + idx] = x[(p, q)];
                idx += 1;
            }
        }
    }
    out
}

fn unpack_antisym(v: &DVector<f64>, m: usize, n_df: usize) -> Vec<DMatrix<f64>> {
    let per = m * (m - 1) / 2;
    (0..n_df)
        .map(|t| {
            let mut x = DMatrix::<f64>::zeros(m, m);
            let mut idx = 0;
            for p in 0..m {
                for q in 0..p {
                    x[(p, q)] = v[t * per + idx];
                    x[(q, p)] = -v[t * per + idx];
                    idx += 1;
                }
            }
            x
        })
        .collect()
}

/// Two-step C-DF: X-DF seed (stage 0), analytical core refit (stage 1), then
/// a quasi-Newton loop over the orbital-rotation generators with the core
/// tensors refit at every objective evaluation (stage 2). Leaves are
/// parametrized as `U_t = U_t^{xdf} exp(X_t)`, so stage 2 starts at `X = 0`.
/// The returned layers are the best seen; the objective can only go down
/// across stages.
pub fn cdf_two_step(
    eri: &EriTensor,
    n_df: usize,
    opts: &CdfOptions,
) -> Result<CdfOutcome, DfError> {
    let m = eri.n_orbitals();
    let stage0 = xdf_factorize(eri, n_df)?;
    let d0 = factorization_diagnostics(eri, &stage0);

    let base_us: Vec<DMatrix<f64>> = stage0.iter().map(|l| l.u.clone()).collect();
    let fit1 = fit_core_tensors(&base_us, eri, opts.z_method);
    let stage1: Vec<DFLayer> = base_us
        .iter()
        .cloned()
        .zip(fit1.z.iter().cloned())
        .map(|(u, z)| DFLayer { u, z })
        .collect();
    let d1 = factorization_diagnostics(eri, &stage1);

    let mut history = vec![
        StageRecord {
            stage: 0,
            objective: d0.objective,
            mad: d0.mad,
        },
        StageRecord {
            stage: 1,
            objective: d1.objective,
            mad: d1.mad,
        },
    ];

    let leaves_from = |v: &DVector<f64>| -> Result<Vec<DMatrix<f64>>, DfError> {
        let xs = unpack_antisym(v, m, n_df);
        xs.iter()
            .zip(base_us.iter())
            .map(|(x, u0)| Ok(u0 * expm::expm_antisymmetric(x)?.u()))
            .collect()
    };

    let lbfgs_opts = lbfgs::LbfgsOptions {
        memory: 10,
        max_iters: opts.max_epochs,
        grad_tol: opts.grad_tol,
        patience: opts.patience,
        ..Default::default()
    };

    let (best_layers, converged, epochs, final_obj) = if opts.one_step {
        // simultaneous optimization over (X, Z)
        let per_x = m * (m - 1) / 2;
        let per_z = m * (m + 1) / 2;
        let dim = n_df * (per_x + per_z);
        let mut x0 = DVector::<f64>::zeros(dim);
        for (t, z) in fit1.z.iter().enumerate() {
            let mut idx = 0;
            for k in 0..m {
                for l in 0..=k {
                    x0[n_df * per_x + t * per_z + idx] = z[(k, l)];
                    idx += 1;
                }
            }
        }
        let objective = |v: &DVector<f64>| -> (f64, DVector<f64>) {
            let xv = DVector::from_iterator(n_df * per_x, v.iter().take(n_df * per_x).copied());
            let xs = unpack_antisym(&xv, m, n_df);
            let mut zs = Vec::with_capacity(n_df);
            for t in 0..n_df {
                let mut z = DMatrix::<f64>::zeros(m, m);
                let mut idx = 0;
                for k in 0..m {
                    for l in 0..=k {
                        let val = v[n_df * per_x + t * per_z + idx];
                        z[(k, l)] = val;
                        z[(l, k)] = val;
                        idx += 1;
                    }
                }
                zs.push(z);
            }
            let exps: Vec<_> = xs
                .iter()
                .map(|x| expm::expm_antisymmetric(x).expect("antisymmetric by construction"))
                .collect();
            let us: Vec<DMatrix<f64>> =
                exps.iter().zip(&base_us).map(|(e, u0)| u0 * e.u()).collect();
            let (obj, grad_u, grad_z) = objective_and_grads_u(&us, &zs, eri);
            let mut grad = DVector::<f64>::zeros(dim);
            for t in 0..n_df {
                let pulled = base_us[t].transpose() * &grad_u[t];
                let gx = expm::antisym_gradient(&exps[t], &pulled);
                let mut idx = 0;
                for p in 0..m {
                    for q in 0..p {
                        grad[t * per_x + idx] = gx[(p, q)];
                        idx += 1;
                    }
                }
                let mut idx = 0;
                for k in 0..m {
                    for l in 0..=k {
                        grad[n_df * per_x + t * per_z + idx] = if k == l {
                            grad_z[t][(k, k)]
                        } else {
                            grad_z[t][(k, l)] + grad_z[t][(l, k)]
                        };
                        idx += 1;
                    }
                }
            }
            (obj, grad)
        };
        let res = lbfgs::minimize(objective, x0, &lbfgs_opts);
        let xv =
            DVector::from_iterator(n_df * per_x, res.x.iter().take(n_df * per_x).copied());
        let us = leaves_from(&xv)?;
        let mut zs = Vec::with_capacity(n_df);
        for t in 0..n_df {
            let mut z = DMatrix::<f64>::zeros(m, m);
            let mut idx = 0;
            for k in 0..m {
                for l in 0..=k {
                    let val = res.x[n_df * per_x + t * per_z + idx];
                    z[(k, l)] = val;
                    z[(l, k)] = val;
                    idx += 1;
                }
            }
            zs.push(z);
        }
        let layers: Vec<DFLayer> = us
            .into_iter()
            .zip(zs)
            .map(|(u, z)| DFLayer { u, z })
            .collect();
        (layers, res.converged, res.iterations, res.f)
    } else {
        // two-step: Z is refit analytically inside the objective
        let objective = |v: &DVector<f64>| -> (f64, DVector<f64>) {
            let xs = unpack_antisym(v, m, n_df);
            let exps: Vec<_> = xs
                .iter()
                .map(|x| expm::expm_antisymmetric(x).expect("antisymmetric by construction"))
                .collect();
            let us: Vec<DMatrix<f64>> =
                exps.iter().zip(&base_us).map(|(e, u0)| u0 * e.u()).collect();
            let fit = fit_core_tensors(&us, eri, opts.z_method);
            let (obj, grad_u, _) = objective_and_grads_u(&us, &fit.z, eri);
            // dO/dZ = 0 at the refit optimum, so the partial U-gradient is
            // the total derivative
            let grads: Vec<DMatrix<f64>> = exps
                .iter()
                .zip(grad_u.iter())
                .enumerate()
                .map(|(t, (e, gu))| {
                    let pulled = base_us[t].transpose() * gu;
                    expm::antisym_gradient(e, &pulled)
                })
                .collect();
            (obj, pack_antisym(&grads, m))
        };
        let x0 = DVector::<f64>::zeros(n_df * m * (m - 1) / 2);
        let res = lbfgs::minimize(objective, x0, &lbfgs_opts);
        let us = leaves_from(&res.x)?;
        let fit = fit_core_tensors(&us, eri, opts.z_method);
        let layers: Vec<DFLayer> = us
            .into_iter()
            .zip(fit.z)
            .map(|(u, z)| DFLayer { u, z })
            .collect();
        (layers, res.converged, res.iterations, res.f)
    };

    // keep the stage-1 result if the optimizer somehow did not improve on it
    let (layers2, d2) = {
        let d2 = factorization_diagnostics(eri, &best_layers);
        if d2.objective <= d1.objective {
            (best_layers, d2)
        } else {
            (stage1, d1)
        }
    };
    debug_assert!(final_obj.is_finite());
    history.push(StageRecord {
        stage: 2,
        objective: d2.objective,
        mad: d2.mad,
    });

    Ok(CdfOutcome {
        layers: layers2,
        history,
        converged,
        epochs,
    })
}

// ---------------------------------------------------------------------------
// Hamiltonian-level assembly and JSON interchange
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorizeMethod {
    Xdf,
    Cdf,
    CdfOneStep,
}

/// Factorizes a Hamiltonian end to end: kappa eigendecomposition plus the
/// requested ERI factorization. Returns the per-stage history for reporting
/// (X-DF yields a single record).
pub fn factorize_hamiltonian(
    ham: &ActiveSpaceHamiltonian,
    n_df: usize,
    method: FactorizeMethod,
    opts: &CdfOptions,
) -> Result<(DFDecomposition, Vec<StageRecord>), DfError> {
    let kappa = compute_kappa(&ham.h, &ham.eri);
    let one_body = decompose_one_body(&kappa)?;
    let (layers, history, _converged) = match method {
        FactorizeMethod::Xdf => {
            let layers = xdf_factorize(&ham.eri, n_df)?;
            let d = factorization_diagnostics(&ham.eri, &layers);
            (
                layers,
                vec![StageRecord {
                    stage: 0,
                    objective: d.objective,
                    mad: d.mad,
                }],
                true,
            )
        }
        FactorizeMethod::Cdf | FactorizeMethod::CdfOneStep => {
            let mut o = opts.clone();
            o.one_step = method == FactorizeMethod::CdfOneStep;
            let outcome = cdf_two_step(&ham.eri, n_df, &o)?;
            (outcome.layers, outcome.history, outcome.converged)
        }
    };
    let decomp = DFDecomposition {
        e_ext: ham.e_ext,
        one_body,
        layers,
        zeta: None,
    }
    .with_zeta();
    Ok((decomp, history))
}



#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    u: MatrixJson,
    z: MatrixJson,
}

/// JSON interchange document between `factorize` and `qfd` runs.
#[derive(Serialize, Deserialize)]
pub struct DecompositionJson {
    e_ext: f64,
    f0: Vec<f64>,
    u0: MatrixJson,
    layers: Vec<LayerJson>,
}

impl DecompositionJson {
    pub fn from_decomposition(d: &DFDecomposition) -> Self {
        Self {
            e_ext: d.e_ext,
            f0: d.one_body.f0.iter().copied().collect(),
            u0: MatrixJson::from(&d.one_body.u0),
            layers: d
                .layers
                .iter()
                .map(|l| LayerJson {
                    u: MatrixJson::from(&l.u),
                    z: MatrixJson::from(&l.z),
                })
                .collect(),
        }
    }

    pub fn into_decomposition(self) -> DFDecomposition {
        DFDecomposition {
            e_ext: self.e_ext,
            one_body: OneBodyFactor {
                u0: self.u0.to_matrix(),
                f0: DVector::from_vec(self.f0),
            },
            layers: self
                .layers
                .into_iter()
                .map(|l| DFLayer {
                    u: l.u.to_matrix(),
                    z: l.z.to_matrix(),
                })
                .collect(),
            zeta: None,
        }
        .with_zeta()
    }
}
