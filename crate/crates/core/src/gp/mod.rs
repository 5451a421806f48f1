//! Exact Gaussian-process regression with a zero prior mean.

mod optimize;
mod persist;
mod train;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::{InputLayout, KernelFamily, KernelSpec};
use crate::{Error, Result};

pub use optimize::{optimize_hyperparameters, OptimizationResult, OptimizerOptions, NOISE_FLOOR};
pub use persist::{GpModelFile, MODEL_FORMAT_VERSION};
pub use train::{train_gp, TrainLog, TrainOptions};

/// Largest training set accepted by [`GpModel::fit`].
pub const MAX_TRAINING_POINTS: usize = 4000;

/// Jitter ladder relative to the mean Gram diagonal.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Named parameters stored in log space. Frozen entries are excluded from
/// optimization; a frozen entry may be `-inf`, meaning exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterVector {
    pub names: Vec<String>,
    pub log_values: Vec<f64>,
    pub frozen: Vec<bool>,
}

impl HyperparameterVector {
    pub fn zeros(names: Vec<String>) -> Self {
        let n = names.len();
        HyperparameterVector {
            names,
            log_values: vec![0.0; n],
            frozen: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.log_values[i].exp())
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.frozen[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_values.len() != self.names.len() || self.frozen.len() != self.names.len() {
            return Err(Error::Config("hyperparameter vector fields differ in length".into()));
        }
        for i in 0..self.len() {
            let v = self.log_values[i];
            let ok = v.is_finite() || (self.frozen[i] && v == f64::NEG_INFINITY);
            if !ok {
                return Err(Error::Config(format!(
                    "hyperparameter '{}' has invalid log value {v}",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }
}

/// Per-dimension affine input standardization (SE kernels only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn from_inputs(inputs: &[Vec<f64>]) -> Self {
        let d = inputs.first().map_or(0, Vec::len);
        let n = inputs.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            mean[j] = inputs.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = inputs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        InputScaling { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

fn prepare_all(kernel: &KernelSpec, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|x| kernel.prepare(x)).collect()
}

fn gram_prepared(kernel: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = a
        .par_iter()
        .map(|x| b.iter().map(|y| kernel.eval_prepared(x, y)).collect())
        .collect();
    DMatrix::from_fn(a.len(), b.len(), |i, j| rows[i][j])
}

/// Symmetric Gram matrix; only the upper triangle is evaluated.
fn gram_symmetric(kernel: &KernelSpec, a: &[Vec<f64>]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = a
        .par_iter()
        .enumerate()
        .map(|(i, x)| a[i..].iter().map(|y| kernel.eval_prepared(x, y)).collect())
        .collect();
    let n = a.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for (o, v) in rows[i].iter().enumerate() {
            k[(i, i + o)] = *v;
            k[(i + o, i)] = *v;
        }
    }
    k
}

/// `K[j, l] = k(a_j, b_l)`.
pub fn gram(kernel: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let pa = prepare_all(kernel, a)?;
    if std::ptr::eq(a, b) {
        return Ok(gram_symmetric(kernel, &pa));
    }
    let pb = prepare_all(kernel, b)?;
    Ok(gram_prepared(kernel, &pa, &pb))
}

/// Cholesky of `k + σ²I`, escalating diagonal jitter on failure.
/// Returns the factor and the jitter that was added.
fn factorize(mut k: DMatrix<f64>, noise_std: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mean_diag = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for i in 0..n {
        k[(i, i)] += noise_std * noise_std;
    }
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * base;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::IllConditioned {
        max_jitter: JITTER_MAX * base,
    })
}

fn check_training_set(kernel: &KernelSpec, inputs: &[Vec<f64>], targets: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("GP needs at least one training point".into()));
    }
    if inputs.len() > MAX_TRAINING_POINTS {
        return Err(Error::TooLarge {
            got: inputs.len(),
            cap: MAX_TRAINING_POINTS,
        });
    }
    if targets.len() != inputs.len() {
        return Err(Error::dim("GP targets", inputs.len(), targets.len()));
    }
    let d = kernel.input_dim();
    if let Some(x) = inputs.iter().find(|x| x.len() != d) {
        return Err(Error::dim("GP input", d, x.len()));
    }
    Ok(())
}

/// A fitted GP. Immutable after [`GpModel::fit`]; safe to share across threads.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    noise_std: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    prepared: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    scaling: Option<InputScaling>,
    /// SHA-256 of the dataset the model was trained on, if known.
    pub dataset_fingerprint: Option<String>,
}

impl GpModel {
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], kernel: &KernelSpec, noise_std: f64) -> Result<Self> {
        Self::fit_scaled(inputs, targets, kernel, noise_std, None)
    }

    /// Fit on standardized inputs; only the squared-exponential kernel accepts this.
    pub fn fit_standardized(
        inputs: &[Vec<f64>],
        targets: &[f64],
        kernel: &KernelSpec,
        noise_std: f64,
    ) -> Result<Self> {
        let s = InputScaling::from_inputs(inputs);
        Self::fit_scaled(inputs, targets, kernel, noise_std, Some(s))
    }

    pub(crate) fn fit_scaled(
        inputs: &[Vec<f64>],
        targets: &[f64],
        kernel: &KernelSpec,
        noise_std: f64,
        scaling: Option<InputScaling>,
    ) -> Result<Self> {
        check_training_set(kernel, inputs, targets)?;
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::Config(format!("noise std must be >= 0, got {noise_std}")));
        }
        if scaling.is_some() && kernel.family != KernelFamily::SquaredExponential {
            return Err(Error::Config("input standardization is only available for SE kernels".into()));
        }
        kernel.params().validate()?;
        let scaled: Vec<Vec<f64>>;
        let view = match &scaling {
            Some(s) => {
                scaled = inputs.iter().map(|x| s.apply(x)).collect();
                &scaled
            }
            None => inputs,
        };
        let prepared = prepare_all(kernel, view)?;
        let (chol, jitter) = factorize(gram_symmetric(kernel, &prepared), noise_std)?;
        let alpha = chol.solve(&DVector::from_column_slice(targets));
        Ok(GpModel {
            kernel: kernel.clone(),
            noise_std,
            inputs: inputs.to_vec(),
            targets: targets.to_vec(),
            prepared,
            alpha,
            chol,
            jitter,
            scaling,
            dataset_fingerprint: None,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn layout(&self) -> InputLayout {
        self.kernel.layout
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Diagonal jitter added on top of `σ²` during factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn scaling(&self) -> Option<&InputScaling> {
        self.scaling.as_ref()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn prepare_query(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.scaling {
            Some(s) => {
                if x.len() != s.mean.len() {
                    return Err(Error::dim("GP input", s.mean.len(), x.len()));
                }
                self.kernel.prepare(&s.apply(x))
            }
            None => self.kernel.prepare(x),
        }
    }

    fn cross(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.prepared.len(),
            self.prepared.iter().map(|t| self.kernel.eval_prepared(p, t)),
        )
    }

    /// Posterior mean `k(x*, X)·α`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let p = self.prepare_query(x)?;
        Ok(self
            .prepared
            .iter()
            .zip(self.alpha.iter())
            .map(|(t, a)| self.kernel.eval_prepared(&p, t) * a)
            .sum())
    }

    /// Posterior mean and variance (clamped at zero).
    pub fn predict_with_variance(&self, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.prepare_query(x)?;
        let ks = self.cross(&p);
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("Cholesky factor is nonsingular");
        let var = self.kernel.eval_prepared(&p, &p) - v.dot(&v);
        Ok((mean, var.max(0.0)))
    }

    /// Posterior means for many queries, evaluated in parallel.
    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    /// Negative log marginal likelihood of the training data at the fitted
    /// hyperparameters.
    pub fn neg_log_marginal_likelihood(&self) -> f64 {
        nll_from_factor(&self.chol, &self.alpha, &DVector::from_column_slice(&self.targets))
    }
}

fn nll_from_factor(chol: &Cholesky<f64, Dyn>, alpha: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    0.5 * y.dot(alpha) + 0.5 * logdet + 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// `½yᵀ(K+σ²I)⁻¹y + ½log det(K+σ²I) + (N/2)log 2π`.
pub fn neg_log_marginal_likelihood(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: &KernelSpec,
    noise_std: f64,
) -> Result<f64> {
    check_training_set(kernel, inputs, targets)?;
    let prepared = prepare_all(kernel, inputs)?;
    let (chol, _) = factorize(gram_symmetric(kernel, &prepared), noise_std)?;
    let y = DVector::from_column_slice(targets);
    let alpha = chol.solve(&y);
    Ok(nll_from_factor(&chol, &alpha, &y))
}

/// NLL and its gradient with respect to `[kernel log params..., log σ]`.
/// Frozen kernel parameters get a zero gradient.
pub fn nll_with_gradient(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: &KernelSpec,
    noise_std: f64,
) -> Result<(f64, Vec<f64>)> {
    check_training_set(kernel, inputs, targets)?;
    let prepared = prepare_all(kernel, inputs)?;
    nll_with_gradient_prepared(&prepared, targets, kernel, noise_std)
}

pub(crate) fn nll_with_gradient_prepared(
    prepared: &[Vec<f64>],
    targets: &[f64],
    kernel: &KernelSpec,
    noise_std: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = prepared.len();
    let (chol, _) = factorize(gram_symmetric(kernel, prepared), noise_std)?;
    let y = DVector::from_column_slice(targets);
    let alpha = chol.solve(&y);
    let nll = nll_from_factor(&chol, &alpha, &y);

    // W = (K+σ²I)⁻¹ − ααᵀ,  ∂NLL/∂θ = ½ tr(W ∂K/∂θ)
    let mut w = chol.inverse();
    w.ger(-1.0, &alpha, &alpha, 1.0);
    let p = kernel.n_params();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; p];
            let mut g = vec![0.0; p];
            for j in i..n {
                kernel.eval_prepared_grad(&prepared[i], &prepared[j], &mut g);
                let c = if i == j { w[(i, j)] } else { 2.0 * w[(i, j)] };
                for (a, gk) in acc.iter_mut().zip(&g) {
                    *a += c * gk;
                }
            }
            acc
        })
        .collect();
    let mut grad = vec![0.0; p + 1];
    for r in &rows {
        for (g, v) in grad.iter_mut().zip(r) {
            *g += 0.5 * v;
        }
    }
    // ∂(K+σ²I)/∂log σ = 2σ²I
    grad[p] = noise_std * noise_std * w.trace();
    Ok((nll, grad))
}
