//! Estimators, error metrics and the two benchmark protocols (DoF sweep and
//! data-efficiency sweep).

mod config;
mod sweep;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::gp::{train_gp, GpModel, TrainLog, TrainOptions};
use crate::inv2fwd::{InverseDynamicsEnsemble, InverseModel};
use crate::kernels::{InputLayout, KernelFamily, KernelSpec};
use crate::rbd::{JointVector, RobotModel};
use crate::trajgen::Dataset;
use crate::{Error, Result};

pub use config::{ExperimentConfig, OptimizerSection, TrajectorySection};
pub use sweep::{
    run_data_efficiency, run_dof_sweep, write_report, CellReport, DatasetRecord, MetricsReport, SummaryRow,
    SweepKind,
};

/// The estimators compared in the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// SE GPs mapping `(q, q̇, τ) → q̈ᵢ` directly.
    SeFd,
    /// SE inverse-dynamics GPs turned into forward dynamics.
    Se,
    /// GIP inverse-dynamics GPs turned into forward dynamics.
    Gip,
    /// Semiparametric inverse-dynamics GPs turned into forward dynamics.
    Sp,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::SeFd => "se_fd",
            Estimator::Se => "se",
            Estimator::Gip => "gip",
            Estimator::Sp => "sp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "se_fd" => Ok(Estimator::SeFd),
            "se" => Ok(Estimator::Se),
            "gip" => Ok(Estimator::Gip),
            "sp" => Ok(Estimator::Sp),
            _ => Err(Error::Config(format!("unknown estimator '{s}' (se_fd, se, gip, sp)"))),
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            Estimator::SeFd | Estimator::Se => KernelFamily::SquaredExponential,
            Estimator::Gip => KernelFamily::Gip,
            Estimator::Sp => KernelFamily::Semiparametric,
        }
    }
}

/// Inverse-dynamics inputs `[q | q̇ | q̈]` and torques of joint `i`.
pub fn inverse_inputs(data: &Dataset) -> Vec<Vec<f64>> {
    data.samples
        .iter()
        .map(|s| InputLayout::join(s.q.as_slice(), s.qd.as_slice(), s.qdd.as_slice()))
        .collect()
}

/// Forward-dynamics inputs `[q | q̇ | τ]`.
pub fn forward_inputs(data: &Dataset) -> Vec<Vec<f64>> {
    data.samples
        .iter()
        .map(|s| InputLayout::join(s.q.as_slice(), s.qd.as_slice(), s.tau.as_slice()))
        .collect()
}

fn column(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values.collect()
}

/// Kernel template for an inverse-dynamics estimator of joint `joint`.
pub fn inverse_kernel(family: KernelFamily, data: &Dataset, robot: Option<&RobotModel>, joint: usize) -> Result<KernelSpec> {
    let n = data.dof();
    match family {
        KernelFamily::SquaredExponential => Ok(KernelSpec::squared_exponential(InputLayout::inverse(n))),
        KernelFamily::Gip => Ok(KernelSpec::gip(data.joint_kinds())),
        KernelFamily::Polynomial { degree } => KernelSpec::polynomial(InputLayout::inverse(n), degree),
        KernelFamily::Semiparametric => {
            let robot = robot.ok_or_else(|| {
                Error::Config("the semiparametric kernel needs the robot kinematics for its regressor".into())
            })?;
            if robot.dof() != n {
                return Err(Error::dim("robot joints", n, robot.dof()));
            }
            KernelSpec::semiparametric(robot, joint)
        }
    }
}

fn noise_init(data: &Dataset) -> f64 {
    data.meta.noise_std
}

/// Fit one inverse-dynamics GP per joint.
pub fn fit_inverse_ensemble(
    train: &Dataset,
    family: KernelFamily,
    robot: Option<&RobotModel>,
    options: &TrainOptions,
) -> Result<(InverseDynamicsEnsemble, Vec<TrainLog>)> {
    let inputs = inverse_inputs(train);
    let fingerprint = train.fingerprint()?;
    let mut models = Vec::new();
    let mut logs = Vec::new();
    for i in 0..train.dof() {
        let y = column(train.samples.iter().map(|s| s.tau[i]));
        let kernel = inverse_kernel(family, train, robot, i)?;
        let (mut m, log) = train_gp(&inputs, &y, &kernel, noise_init(train), options)?;
        m.dataset_fingerprint = Some(fingerprint.clone());
        models.push(m);
        logs.push(log);
    }
    Ok((InverseDynamicsEnsemble::new(models)?, logs))
}

/// Direct forward-dynamics GPs `(q, q̇, τ) → q̈ᵢ`.
#[derive(Debug, Clone)]
pub struct ForwardEnsemble {
    models: Vec<GpModel>,
}

impl ForwardEnsemble {
    pub fn new(models: Vec<GpModel>) -> Result<Self> {
        let n = models.len();
        if n == 0 || models.iter().any(|m| m.layout() != InputLayout::forward(n)) {
            return Err(Error::Config(format!("forward ensemble needs {n} models on a [q | q̇ | τ] layout")));
        }
        Ok(ForwardEnsemble { models })
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    pub fn dof(&self) -> usize {
        self.models.len()
    }

    /// Predicted accelerations for each input `[q | q̇ | τ]`.
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<JointVector>> {
        let per_joint: Vec<Vec<f64>> = self.models.iter().map(|m| m.predict_many(inputs)).collect::<Result<_>>()?;
        Ok((0..inputs.len())
            .map(|t| DVector::from_iterator(self.dof(), per_joint.iter().map(|p| p[t])))
            .collect())
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let p = InverseDynamicsEnsemble::model_path(dir, i);
                m.save(&p)?;
                Ok(p)
            })
            .collect()
    }
}

/// Learn forward dynamics directly. Only the squared-exponential kernel is
/// accepted: GIP and semiparametric kernels encode the structure of
/// `τ(q, q̇, q̈)` and cannot be applied to `q̈(q, q̇, τ)`.
pub fn fit_forward_direct(
    train: &Dataset,
    kernel: &KernelSpec,
    options: &TrainOptions,
) -> Result<(ForwardEnsemble, Vec<TrainLog>)> {
    if kernel.family != KernelFamily::SquaredExponential {
        return Err(Error::Unsupported(format!(
            "the {} kernel models inverse dynamics (q, q̇, q̈) → τ and cannot be applied to forward dynamics (q, q̇, τ) → q̈; direct forward-dynamics learning uses the squared exponential kernel only",
            kernel.family.label()
        )));
    }
    let n = train.dof();
    if kernel.layout != InputLayout::forward(n) {
        return Err(Error::Config(format!("forward-dynamics kernel needs a [q | q̇ | τ] layout with {n} joints")));
    }
    let inputs = forward_inputs(train);
    let fingerprint = train.fingerprint()?;
    let mut models = Vec::new();
    let mut logs = Vec::new();
    for i in 0..n {
        let y = column(train.samples.iter().map(|s| s.qdd[i]));
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        let (mut m, log) = train_gp(&inputs, &y, kernel, 1e-2 * rms, options)?;
        m.dataset_fingerprint = Some(fingerprint.clone());
        models.push(m);
        logs.push(log);
    }
    Ok((ForwardEnsemble::new(models)?, logs))
}

/// `eᵢₜ = |q̈ᵢₜ − q̈̂ᵢₜ|`, grouped by joint.
pub fn acceleration_error_modules(predicted: &[JointVector], truth: &[JointVector]) -> Result<Vec<Vec<f64>>> {
    if predicted.len() != truth.len() {
        return Err(Error::dim("predictions", truth.len(), predicted.len()));
    }
    let n = truth.first().map_or(0, |v| v.len());
    if let Some(bad) = predicted.iter().chain(truth).find(|v| v.len() != n) {
        return Err(Error::dim("acceleration vector", n, bad.len()));
    }
    Ok((0..n)
        .map(|i| predicted.iter().zip(truth).map(|(p, t)| (t[i] - p[i]).abs()).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

impl JointStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("statistics of an empty sample".into()));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(JointStats {
            count: s.len(),
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
            mean: s.iter().sum::<f64>() / s.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub per_joint: Vec<f64>,
    /// RMSE over all joints and samples.
    pub aggregate: f64,
}

/// RMSE of predicted torques against the recorded (possibly noisy) torques.
pub fn inverse_rmse<M: InverseModel + ?Sized>(model: &M, test: &Dataset) -> Result<RmseReport> {
    let n = test.dof();
    if model.dof() != n {
        return Err(Error::dim("model joints", n, model.dof()));
    }
    if test.is_empty() {
        return Err(Error::Config("inverse RMSE needs a nonempty test set".into()));
    }
    let pred = model.predict_torques(&inverse_inputs(test))?;
    let mut sq = vec![0.0; n];
    for (p, s) in pred.iter().zip(&test.samples) {
        for i in 0..n {
            sq[i] += (p[i] - s.tau[i]).powi(2);
        }
    }
    let t = test.len() as f64;
    Ok(RmseReport {
        per_joint: sq.iter().map(|v| (v / t).sqrt()).collect(),
        aggregate: (sq.iter().sum::<f64>() / (t * n as f64)).sqrt(),
    })
}
