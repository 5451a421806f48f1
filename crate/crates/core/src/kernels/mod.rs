//! Covariance functions for dynamics learning.
//!
//! All positive parameters live in log space (see [`HyperparameterVector`]),
//! and every kernel provides analytic derivatives with respect to its log
//! parameters so the marginal likelihood can be optimized by quasi-Newton.
//!
//! GP inputs are flat vectors laid out as `[q | q̇ | q̈]` for inverse dynamics
//! and `[q | q̇ | τ]` for direct forward-dynamics learning. Kernels first turn
//! an input into a *prepared* feature vector (e.g. `cos`/`sin` of revolute
//! coordinates for GIP, regressor rows for the semiparametric kernel) so
//! that Gram matrices pay that cost once per point, not once per pair.

mod gip;

use serde::{Deserialize, Serialize};

use crate::gp::HyperparameterVector;
use crate::rbd::{regressor, JointKind, RobotModel, PARAMS_PER_LINK};
use crate::{Error, Result};

pub use gip::{gip_kernel, gip_transform, TransformedConfiguration};

/// How `(q, q̇, ·)` are concatenated into a GP input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    /// `[q | q̇ | q̈] → τᵢ`
    Inverse,
    /// `[q | q̇ | τ] → q̈ᵢ`
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub kind: LayoutKind,
    pub dof: usize,
}

impl InputLayout {
    pub fn inverse(dof: usize) -> Self {
        InputLayout {
            kind: LayoutKind::Inverse,
            dof,
        }
    }

    pub fn forward(dof: usize) -> Self {
        InputLayout {
            kind: LayoutKind::Forward,
            dof,
        }
    }

    pub fn input_dim(&self) -> usize {
        3 * self.dof
    }

    /// Concatenate three joint vectors into one input.
    pub fn join(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(a.len() * 3);
        x.extend_from_slice(a);
        x.extend_from_slice(b);
        x.extend_from_slice(c);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum KernelFamily {
    SquaredExponential,
    Polynomial { degree: u32 },
    Gip,
    Semiparametric,
}

impl KernelFamily {
    pub fn label(&self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Polynomial { .. } => "poly",
            KernelFamily::Gip => "gip",
            KernelFamily::Semiparametric => "sp",
        }
    }
}

/// User-supplied initial values (natural domain) and frozen flags, applied
/// after the data-informed initialization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelOverride {
    pub init: std::collections::BTreeMap<String, f64>,
    pub frozen: Vec<String>,
}

impl KernelOverride {
    pub fn is_empty(&self) -> bool {
        self.init.is_empty() && self.frozen.is_empty()
    }

    pub fn apply(&self, spec: &mut KernelSpec) -> Result<()> {
        for (name, v) in &self.init {
            spec.set_value(name, *v)?;
        }
        for name in &self.frozen {
            spec.set_frozen(name, true)?;
        }
        Ok(())
    }
}

/// Source of the inertial-parameter regressor row used by the
/// semiparametric kernel. Only the kinematics of `model` matter.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSource {
    pub model: RobotModel,
    /// 0-based joint whose torque this kernel models.
    pub joint: usize,
}

impl RegressorSource {
    pub fn row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.model.dof();
        if x.len() != 3 * n {
            return Err(Error::dim("GP input", 3 * n, x.len()));
        }
        let v = |k: usize| nalgebra::DVector::from_column_slice(&x[k * n..(k + 1) * n]);
        let phi = regressor(&self.model, &v(0), &v(1), &v(2))?;
        Ok(phi.row(self.joint).iter().copied().collect())
    }
}

/// A covariance function together with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub layout: InputLayout,
    /// Joint types, used by GIP.
    pub joint_kinds: Vec<JointKind>,
    /// Used by the semiparametric kernel.
    pub regressor: Option<RegressorSource>,
    params: HyperparameterVector,
    values: Vec<f64>,
}

impl KernelSpec {
    fn build(
        family: KernelFamily,
        layout: InputLayout,
        joint_kinds: Vec<JointKind>,
        regressor: Option<RegressorSource>,
        names: Vec<String>,
    ) -> Self {
        let params = HyperparameterVector::zeros(names);
        let values = vec![1.0; params.len()];
        KernelSpec {
            family,
            layout,
            joint_kinds,
            regressor,
            params,
            values,
        }
    }

    /// Squared exponential on the full input, parameters
    /// `lambda, lengthscale_1..D`, all initialised to 1.
    pub fn squared_exponential(layout: InputLayout) -> Self {
        let d = layout.input_dim();
        let mut names = vec!["lambda".to_string()];
        names.extend((1..=d).map(|i| format!("lengthscale_{i}")));
        Self::build(KernelFamily::SquaredExponential, layout, Vec::new(), None, names)
    }

    /// Polynomial kernel `(bias + Σ w_d x_d x'_d)^degree` on the full input.
    pub fn polynomial(layout: InputLayout, degree: u32) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::Config(format!("polynomial degree must be 1 or 2, got {degree}")));
        }
        let mut names = vec!["bias".to_string()];
        names.extend((1..=layout.input_dim()).map(|i| format!("weight_{i}")));
        Ok(Self::build(
            KernelFamily::Polynomial { degree },
            layout,
            Vec::new(),
            None,
            names,
        ))
    }

    /// Geometrically inspired polynomial kernel for an inverse-dynamics layout.
    pub fn gip(kinds: &[JointKind]) -> Self {
        let n = kinds.len();
        let mut names = vec!["acc_bias".to_string()];
        names.extend((1..=n).map(|i| format!("acc_weight_{i}")));
        names.push("vel_bias".into());
        names.extend((1..=n).map(|i| format!("vel_weight_{i}")));
        for (i, k) in kinds.iter().enumerate() {
            names.push(format!("pos_bias_{}", i + 1));
            match k {
                JointKind::Revolute => {
                    names.push(format!("pos_weight_{}_cos", i + 1));
                    names.push(format!("pos_weight_{}_sin", i + 1));
                }
                JointKind::Prismatic => names.push(format!("pos_weight_{}", i + 1)),
            }
        }
        let mut spec = Self::build(
            KernelFamily::Gip,
            InputLayout::inverse(n),
            kinds.to_vec(),
            None,
            names,
        );
        // each factor's scale trades off exactly against the acceleration and
        // velocity terms; fixing the biases at 1 removes that null direction
        for i in 1..=n {
            spec.set_frozen(&format!("pos_bias_{i}"), true).expect("named above");
        }
        spec
    }

    /// `φ⁽ⁱ⁾(x) Σ_w φ⁽ⁱ⁾(x')ᵀ + k_SE(x, x')` for joint `joint` (0-based).
    /// Parameters: `w_var_1..10n` (diagonal of Σ_w), then the SE parameters.
    pub fn semiparametric(model: &RobotModel, joint: usize) -> Result<Self> {
        let n = model.dof();
        if joint >= n {
            return Err(Error::Config(format!("joint {joint} out of range for {n} joints")));
        }
        let model = model.without_friction();
        let mut names: Vec<String> = (1..=PARAMS_PER_LINK * n).map(|k| format!("w_var_{k}")).collect();
        names.push("lambda".into());
        names.extend((1..=3 * n).map(|i| format!("lengthscale_{i}")));
        Ok(Self::build(
            KernelFamily::Semiparametric,
            InputLayout::inverse(n),
            model.joint_kinds(),
            Some(RegressorSource { model, joint }),
            names,
        ))
    }

    pub fn params(&self) -> &HyperparameterVector {
        &self.params
    }

    /// Natural-domain parameter values (`exp` of the log values).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim()
    }

    /// Replace all log parameters (frozen flags are kept).
    pub fn set_log_params(&mut self, log: &[f64]) {
        assert_eq!(log.len(), self.params.len(), "parameter count");
        self.params.log_values.copy_from_slice(log);
        self.values = log.iter().map(|v| v.exp()).collect();
    }

    pub fn with_log_params(&self, log: &[f64]) -> Self {
        let mut s = self.clone();
        s.set_log_params(log);
        s
    }

    /// Set a parameter by name in the natural domain. A value of zero is
    /// stored as `-inf` in log space and requires the parameter to be frozen.
    pub fn set_value(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("kernel has no parameter '{name}'")))?;
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::Config(format!("parameter '{name}' must be >= 0, got {value}")));
        }
        self.params.log_values[i] = value.ln();
        self.values[i] = value;
        if value == 0.0 {
            self.params.frozen[i] = true;
        }
        Ok(())
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        let i = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("kernel has no parameter '{name}'")))?;
        self.params.frozen[i] = frozen;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut HyperparameterVector {
        &mut self.params
    }

    /// Feature vector consumed by `eval_prepared`.
    pub fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::dim("GP input", d, x.len()));
        }
        match self.family {
            KernelFamily::SquaredExponential | KernelFamily::Polynomial { .. } => Ok(x.to_vec()),
            KernelFamily::Gip => gip::prepare(self, x),
            KernelFamily::Semiparametric => {
                let src = self.regressor.as_ref().ok_or_else(|| {
                    Error::Config("semiparametric kernel has no regressor source".into())
                })?;
                let mut f = x.to_vec();
                f.extend(src.row(x)?);
                Ok(f)
            }
        }
    }

    pub fn eval_prepared(&self, a: &[f64], b: &[f64]) -> f64 {
        let v = &self.values;
        match self.family {
            KernelFamily::SquaredExponential => se_eval(v[0], &v[1..], a, b),
            KernelFamily::Polynomial { degree } => poly_eval(degree, v[0], &v[1..], a, b),
            KernelFamily::Gip => gip::eval(self, a, b, None),
            KernelFamily::Semiparametric => {
                let d = self.input_dim();
                let p = v.len() - d - 1;
                let lin: f64 = (0..p).map(|k| a[d + k] * v[k] * b[d + k]).sum();
                lin + se_eval(v[p], &v[p + 1..], &a[..d], &b[..d])
            }
        }
    }

    /// Kernel value and its gradient with respect to the log parameters.
    /// Frozen parameters get a zero gradient.
    pub fn eval_prepared_grad(&self, a: &[f64], b: &[f64], grad: &mut [f64]) -> f64 {
        let v = &self.values;
        let k = match self.family {
            KernelFamily::SquaredExponential => se_grad(v[0], &v[1..], a, b, grad),
            KernelFamily::Polynomial { degree } => poly_grad(degree, v[0], &v[1..], a, b, grad),
            KernelFamily::Gip => gip::eval(self, a, b, Some(grad)),
            KernelFamily::Semiparametric => {
                let d = self.input_dim();
                let p = v.len() - d - 1;
                let mut lin = 0.0;
                for k in 0..p {
                    let t = a[d + k] * v[k] * b[d + k];
                    grad[k] = t;
                    lin += t;
                }
                lin + se_grad(v[p], &v[p + 1..], &a[..d], &b[..d], &mut grad[p..])
            }
        };
        for (g, f) in grad.iter_mut().zip(&self.params.frozen) {
            if *f {
                *g = 0.0;
            }
        }
        k
    }

    /// Evaluate on raw GP inputs.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.eval_prepared(&self.prepare(x)?, &self.prepare(y)?))
    }

    /// Data-informed starting values: signal variance from the targets and
    /// input scales from the per-dimension spread of the inputs.
    pub fn initialized_from(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let d = self.input_dim();
        let stds: Vec<f64> = (0..d)
            .map(|j| {
                let s = std_dev(inputs.iter().map(|x| x[j]));
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let var_y = {
            let m = mean(targets.iter().copied());
            let second = mean(targets.iter().map(|t| t * t));
            // second moment: the zero prior mean has to absorb offsets too
            if second > 1e-12 {
                second.max(m * m)
            } else {
                1.0
            }
        };
        let mut out = self.clone();
        let mut vals = self.values.clone();
        match self.family {
            KernelFamily::SquaredExponential => {
                // √D keeps the summed squared distance O(1) for typical pairs
                let f = (d as f64).sqrt();
                vals[0] = var_y;
                for (l, s) in vals[1..].iter_mut().zip(&stds) {
                    *l = f * s;
                }
            }
            KernelFamily::Polynomial { .. } => {
                vals[0] = 1.0;
                for (w, s) in vals[1..].iter_mut().zip(&stds) {
                    *w = 1.0 / (d as f64 * s * s);
                }
            }
            KernelFamily::Gip => gip::initialize(self, &stds, var_y, &mut vals),
            KernelFamily::Semiparametric => {
                let p = vals.len() - d - 1;
                vals[..p].fill(1.0);
                vals[p] = 0.1 * var_y;
                let f = (d as f64).sqrt();
                for (l, s) in vals[p + 1..].iter_mut().zip(&stds) {
                    *l = f * s;
                }
            }
        }
        for (i, v) in vals.iter().enumerate() {
            if !self.params.frozen[i] {
                out.params.log_values[i] = v.ln();
                out.values[i] = *v;
            }
        }
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn std_dev(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(it.clone());
    mean(it.map(|v| (v - m) * (v - m))).sqrt()
}

fn se_eval(lambda: f64, ls: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut r = 0.0;
    for d in 0..ls.len() {
        let z = (a[d] - b[d]) / ls[d];
        r += z * z;
    }
    lambda * (-r).exp()
}

fn se_grad(lambda: f64, ls: &[f64], a: &[f64], b: &[f64], grad: &mut [f64]) -> f64 {
    let mut r = 0.0;
    for d in 0..ls.len() {
        let z = (a[d] - b[d]) / ls[d];
        grad[1 + d] = z * z;
        r += z * z;
    }
    let k = lambda * (-r).exp();
    grad[0] = k;
    for g in &mut grad[1..=ls.len()] {
        *g *= 2.0 * k;
    }
    k
}

fn poly_eval(degree: u32, bias: f64, w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = bias + (0..w.len()).map(|d| w[d] * a[d] * b[d]).sum::<f64>();
    s.powi(degree as i32)
}

fn poly_grad(degree: u32, bias: f64, w: &[f64], a: &[f64], b: &[f64], grad: &mut [f64]) -> f64 {
    let mut s = bias;
    for d in 0..w.len() {
        let t = w[d] * a[d] * b[d];
        grad[1 + d] = t;
        s += t;
    }
    grad[0] = bias;
    let (k, dk) = match degree {
        1 => (s, 1.0),
        _ => (s * s, 2.0 * s),
    };
    for g in &mut grad[..=w.len()] {
        *g *= dk;
    }
    k
}

/// `λ·exp(−Σ_d (x_d − x'_d)²/ℓ_d²)`.
pub fn se_kernel(x: &[f64], y: &[f64], lambda: f64, lengthscales: &[f64]) -> f64 {
    assert_eq!(x.len(), lengthscales.len());
    assert_eq!(y.len(), lengthscales.len());
    se_eval(lambda, lengthscales, x, y)
}

/// `(bias + Σ_d w_d x_d x'_d)^degree`, degree 1 or 2.
pub fn poly_kernel(x: &[f64], y: &[f64], degree: u32, weights: &[f64], bias: f64) -> f64 {
    assert!((1..=2).contains(&degree), "degree must be 1 or 2");
    assert_eq!(x.len(), weights.len());
    assert_eq!(y.len(), weights.len());
    poly_eval(degree, bias, weights, x, y)
}

/// Semiparametric kernel value; fails if `spec` is not a semiparametric
/// kernel with a regressor source.
pub fn sp_kernel(xj: &[f64], xl: &[f64], spec: &KernelSpec) -> Result<f64> {
    if spec.family != KernelFamily::Semiparametric || spec.regressor.is_none() {
        return Err(Error::Config(
            "sp_kernel needs a semiparametric kernel with a regressor source".into(),
        ));
    }
    spec.eval(xj, xl)
}
