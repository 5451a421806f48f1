//! Forward dynamics from a learned inverse-dynamics model.
//!
//! Probing an inverse model `f̂(q, q̇, q̈)` at structured inputs recovers
//!
//! - `ĝ(q) = f̂(q, 0, 0)`
//! - `B̂[:, j](q) = f̂(q, 0, 1_j) − ĝ(q)`
//! - `n̂(q, q̇) = f̂(q, q̇, 0)`
//!
//! and accelerations follow from `B̂ q̈ = τ − n̂`. Each prediction costs
//! `n + 2` model evaluations; the batched path issues all of them in one
//! call, and an optional per-configuration cache reuses `B̂` and `ĝ`.

mod ensemble;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::rbd::{inverse_dynamics, JointVector, RobotModel};
use crate::{Error, Result};

pub use ensemble::InverseDynamicsEnsemble;

/// A torque predictor `(q, q̇, q̈) → τ`.
pub trait InverseModel: Sync {
    fn dof(&self) -> usize;

    /// Predict torques for each input `[q | q̇ | q̈]`.
    fn predict_torques(&self, inputs: &[Vec<f64>]) -> Result<Vec<JointVector>>;
}

/// The rigid-body oracle as an inverse model.
impl InverseModel for RobotModel {
    fn dof(&self) -> usize {
        RobotModel::dof(self)
    }

    fn predict_torques(&self, inputs: &[Vec<f64>]) -> Result<Vec<JointVector>> {
        let n = self.dof();
        inputs
            .iter()
            .map(|x| {
                if x.len() != 3 * n {
                    return Err(Error::dim("inverse-model input", 3 * n, x.len()));
                }
                let v = |k: usize| DVector::from_column_slice(&x[k * n..(k + 1) * n]);
                inverse_dynamics(self, &v(0), &v(1), &v(2))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inv2FwdOptions {
    /// Acceleration probe magnitude (rad/s² or m/s²).
    pub probe: f64,
    pub symmetrize: bool,
    /// SPD floor relative to `|trace(B̂)|/n`.
    pub spd_floor_rel: f64,
    /// Absolute lower bound on the SPD floor.
    pub spd_floor_abs: f64,
    /// Reuse `B̂`/`ĝ` across queries with bit-identical `q`.
    pub cache: bool,
}

impl Default for Inv2FwdOptions {
    fn default() -> Self {
        Inv2FwdOptions {
            probe: 1.0,
            symmetrize: true,
            spd_floor_rel: 1e-6,
            spd_floor_abs: 1e-9,
            cache: false,
        }
    }
}

impl Inv2FwdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.probe > 0.0) || !self.probe.is_finite() {
            return Err(Error::Config(format!("probe magnitude must be > 0, got {}", self.probe)));
        }
        if !(self.spd_floor_rel >= 0.0) || !(self.spd_floor_abs > 0.0) {
            return Err(Error::Config("SPD floors must be nonnegative (absolute floor > 0)".into()));
        }
        Ok(())
    }
}

/// `B̂(q)` and `ĝ(q)` with repair bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaEstimate {
    pub raw: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub g_hat: JointVector,
    pub symmetrized: bool,
    /// Eigenvalue shift added during SPD repair (0 if none).
    pub regularization_added: f64,
    pub spd_floor: f64,
    /// `‖B̂ − B̂ᵀ‖_F / ‖B̂‖_F` of the raw estimate.
    pub asymmetry: f64,
    /// Eigenvalues of the symmetric part of the raw estimate, ascending.
    pub raw_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedComponents {
    pub q: JointVector,
    pub qd: JointVector,
    pub inertia: Arc<InertiaEstimate>,
    pub n_hat: JointVector,
}

impl EstimatedComponents {
    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.inertia.b_hat
    }

    pub fn g_hat(&self) -> &JointVector {
        &self.inertia.g_hat
    }
}

/// Per-batch diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub points: usize,
    pub probe: f64,
    pub symmetrized: bool,
    pub repairs: usize,
    pub max_regularization: f64,
    pub max_asymmetry: f64,
    pub mean_asymmetry: f64,
    pub raw_eigenvalue_min: f64,
    pub raw_eigenvalue_max: f64,
    pub cache_hits: usize,
}

fn join(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    crate::kernels::InputLayout::join(a, b, c)
}

fn check_len(what: &'static str, n: usize, v: &JointVector) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(what, n, v.len()));
    }
    Ok(())
}

fn probe_inputs(q: &JointVector, probe: f64) -> Vec<Vec<f64>> {
    let n = q.len();
    let zero = vec![0.0; n];
    let mut out = vec![join(q.as_slice(), &zero, &zero)];
    for j in 0..n {
        let mut e = zero.clone();
        e[j] = probe;
        out.push(join(q.as_slice(), &zero, &e));
    }
    out
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Assemble and repair `B̂` from `[f̂(q,0,0), f̂(q,0,p·1_1), …]`.
fn assemble_inertia(probes: &[JointVector], options: &Inv2FwdOptions) -> InertiaEstimate {
    let n = probes[0].len();
    let g = probes[0].clone();
    let raw = DMatrix::from_fn(n, n, |i, j| (probes[1 + j][i] - g[i]) / options.probe);
    let norm = frobenius(&raw);
    let asymmetry = if norm > 0.0 {
        frobenius(&(&raw - raw.transpose())) / norm
    } else {
        0.0
    };
    let sym = (&raw + raw.transpose()) * 0.5;
    let mut raw_eigenvalues: Vec<f64> = SymmetricEigen::new(sym.clone()).eigenvalues.iter().copied().collect();
    raw_eigenvalues.sort_by(f64::total_cmp);
    let spd_floor = (options.spd_floor_rel * raw.trace().abs() / n as f64).max(options.spd_floor_abs);
    let mut b_hat = if options.symmetrize { sym } else { raw.clone() };
    let min_eig = raw_eigenvalues[0];
    let regularization_added = if min_eig < spd_floor {
        let lambda = spd_floor - min_eig;
        for i in 0..n {
            b_hat[(i, i)] += lambda;
        }
        lambda
    } else {
        0.0
    };
    InertiaEstimate {
        raw,
        b_hat,
        g_hat: g,
        symmetrized: options.symmetrize,
        regularization_added,
        spd_floor,
        asymmetry,
        raw_eigenvalues,
    }
}

/// `ĝ(q) = f̂(q, 0, 0)`
pub fn estimate_gravity<M: InverseModel + ?Sized>(model: &M, q: &JointVector) -> Result<JointVector> {
    let n = model.dof();
    check_len("q", n, q)?;
    let zero = vec![0.0; n];
    Ok(model.predict_torques(&[join(q.as_slice(), &zero, &zero)])?.remove(0))
}

/// `B̂(q)` with optional symmetrization and SPD repair.
pub fn estimate_inertia<M: InverseModel + ?Sized>(
    model: &M,
    q: &JointVector,
    options: &Inv2FwdOptions,
) -> Result<InertiaEstimate> {
    options.validate()?;
    check_len("q", model.dof(), q)?;
    let probes = model.predict_torques(&probe_inputs(q, options.probe))?;
    Ok(assemble_inertia(&probes, options))
}

/// `n̂(q, q̇) = f̂(q, q̇, 0)`
pub fn estimate_bias<M: InverseModel + ?Sized>(model: &M, q: &JointVector, qd: &JointVector) -> Result<JointVector> {
    let n = model.dof();
    check_len("q", n, q)?;
    check_len("qd", n, qd)?;
    Ok(model
        .predict_torques(&[join(q.as_slice(), qd.as_slice(), &vec![0.0; n])])?
        .remove(0))
}

fn solve(inertia: &InertiaEstimate, rhs: &JointVector) -> Result<JointVector> {
    let fail = || Error::EstimationFailed {
        message: "estimated inertia matrix could not be factorized".into(),
        eigenvalues: inertia.raw_eigenvalues.clone(),
    };
    let x = if inertia.symmetrized {
        inertia.b_hat.clone().cholesky().ok_or_else(fail)?.solve(rhs)
    } else {
        inertia.b_hat.clone().lu().solve(rhs).ok_or_else(fail)?
    };
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(fail())
    }
}

/// `q̈ = B̂⁻¹(q)(τ − n̂(q, q̇))`
pub fn predict_acceleration<M: InverseModel + ?Sized>(
    model: &M,
    q: &JointVector,
    qd: &JointVector,
    tau: &JointVector,
    options: &Inv2FwdOptions,
) -> Result<(JointVector, EstimatedComponents)> {
    let mut r = Inverse2Forward::new(model, options.clone())?.predict_batch(&[(q.clone(), qd.clone(), tau.clone())])?;
    let (a, c) = r.0.remove(0);
    Ok((a, c))
}

type CacheKey = Vec<u64>;

/// Forward-dynamics estimator wrapping an inverse model.
pub struct Inverse2Forward<'a, M: InverseModel + ?Sized> {
    model: &'a M,
    options: Inv2FwdOptions,
    cache: Option<RwLock<HashMap<CacheKey, Arc<InertiaEstimate>>>>,
}

impl<'a, M: InverseModel + ?Sized> Inverse2Forward<'a, M> {
    pub fn new(model: &'a M, options: Inv2FwdOptions) -> Result<Self> {
        options.validate()?;
        let cache = options.cache.then(|| RwLock::new(HashMap::new()));
        Ok(Inverse2Forward { model, options, cache })
    }

    pub fn options(&self) -> &Inv2FwdOptions {
        &self.options
    }

    fn cached(&self, key: &CacheKey) -> Option<Arc<InertiaEstimate>> {
        self.cache.as_ref()?.read().ok()?.get(key).cloned()
    }

    /// Predict accelerations for `(q, q̇, τ)` queries with one batched model call.
    #[allow(clippy::type_complexity)]
    pub fn predict_batch(
        &self,
        queries: &[(JointVector, JointVector, JointVector)],
    ) -> Result<(Vec<(JointVector, EstimatedComponents)>, BatchDiagnostics)> {
        let n = self.model.dof();
        let mut inputs = Vec::new();
        let mut plan = Vec::with_capacity(queries.len());
        let mut cache_hits = 0;
        let mut pending: HashMap<CacheKey, usize> = HashMap::new();
        for (q, qd, tau) in queries {
            check_len("q", n, q)?;
            check_len("qd", n, qd)?;
            check_len("tau", n, tau)?;
            let key: CacheKey = q.iter().map(|v| v.to_bits()).collect();
            // inertia source: cached, shared with an earlier query, or probed
            let inertia = if let Some(hit) = self.cached(&key) {
                cache_hits += 1;
                Source::Cached(hit)
            } else if let Some(&start) = pending.get(&key).filter(|_| self.cache.is_some()) {
                cache_hits += 1;
                Source::Probe(start)
            } else {
                let start = inputs.len();
                inputs.extend(probe_inputs(q, self.options.probe));
                if self.cache.is_some() {
                    pending.insert(key.clone(), start);
                }
                Source::Probe(start)
            };
            let bias_at = inputs.len();
            inputs.push(join(q.as_slice(), qd.as_slice(), &vec![0.0; n]));
            plan.push((key, inertia, bias_at));
        }
        let out = if inputs.is_empty() {
            Vec::new()
        } else {
            self.model.predict_torques(&inputs)?
        };
        if out.len() != inputs.len() {
            return Err(Error::dim("inverse-model outputs", inputs.len(), out.len()));
        }

        let mut assembled: HashMap<usize, Arc<InertiaEstimate>> = HashMap::new();
        let mut results = Vec::with_capacity(queries.len());
        let mut diag = BatchDiagnostics {
            points: queries.len(),
            probe: self.options.probe,
            symmetrized: self.options.symmetrize,
            repairs: 0,
            max_regularization: 0.0,
            max_asymmetry: 0.0,
            mean_asymmetry: 0.0,
            raw_eigenvalue_min: f64::INFINITY,
            raw_eigenvalue_max: f64::NEG_INFINITY,
            cache_hits,
        };
        for ((q, qd, tau), (key, source, bias_at)) in queries.iter().zip(plan) {
            let inertia = match source {
                Source::Cached(e) => e,
                Source::Probe(start) => assembled
                    .entry(start)
                    .or_insert_with(|| Arc::new(assemble_inertia(&out[start..start + n + 1], &self.options)))
                    .clone(),
            };
            if let Some(c) = &self.cache {
                if let Ok(mut w) = c.write() {
                    w.entry(key).or_insert_with(|| inertia.clone());
                }
            }
            let n_hat = out[bias_at].clone();
            let acc = solve(&inertia, &(tau - &n_hat))?;
            if inertia.regularization_added > 0.0 {
                diag.repairs += 1;
            }
            diag.max_regularization = diag.max_regularization.max(inertia.regularization_added);
            diag.max_asymmetry = diag.max_asymmetry.max(inertia.asymmetry);
            diag.mean_asymmetry += inertia.asymmetry / queries.len() as f64;
            diag.raw_eigenvalue_min = diag.raw_eigenvalue_min.min(inertia.raw_eigenvalues[0]);
            diag.raw_eigenvalue_max = diag.raw_eigenvalue_max.max(inertia.raw_eigenvalues[n - 1]);
            results.push((
                acc,
                EstimatedComponents {
                    q: q.clone(),
                    qd: qd.clone(),
                    inertia,
                    n_hat,
                },
            ));
        }
        Ok((results, diag))
    }
}

enum Source {
    Cached(Arc<InertiaEstimate>),
    Probe(usize),
}
