//! JSON model container. The Cholesky factor is rebuilt on load from the
//! stored inputs, targets and hyperparameters; the stored `alpha` is checked
//! against the rebuilt one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GpModel, HyperparameterVector, InputScaling};
use crate::kernels::{InputLayout, KernelFamily, KernelSpec};
use crate::rbd::{parse_robot, JointKind};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpModelFile {
    pub format_version: u32,
    pub family: KernelFamily,
    pub layout: InputLayout,
    pub joint_kinds: Vec<JointKind>,
    pub hyperparameters: HyperparameterVector,
    pub noise_std: f64,
    pub jitter: f64,
    pub prior_mean: String,
    pub scaling: Option<InputScaling>,
    /// Robot description text and joint index (semiparametric kernels).
    pub regressor_robot: Option<String>,
    pub regressor_joint: Option<usize>,
    pub dataset_fingerprint: Option<String>,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub alpha: Vec<f64>,
}

fn kernel_from_file(f: &GpModelFile) -> Result<KernelSpec> {
    let mut k = match f.family {
        KernelFamily::SquaredExponential => KernelSpec::squared_exponential(f.layout),
        KernelFamily::Polynomial { degree } => KernelSpec::polynomial(f.layout, degree)?,
        KernelFamily::Gip => KernelSpec::gip(&f.joint_kinds),
        KernelFamily::Semiparametric => {
            let text = f
                .regressor_robot
                .as_deref()
                .ok_or_else(|| Error::Config("semiparametric model without regressor robot".into()))?;
            let joint = f
                .regressor_joint
                .ok_or_else(|| Error::Config("semiparametric model without regressor joint".into()))?;
            KernelSpec::semiparametric(&parse_robot(text, "model file")?, joint)?
        }
    };
    if k.params().names != f.hyperparameters.names {
        return Err(Error::Config("model file hyperparameter names do not match its kernel".into()));
    }
    f.hyperparameters.validate()?;
    k.set_log_params(&f.hyperparameters.log_values);
    k.params_mut().frozen.clone_from(&f.hyperparameters.frozen);
    Ok(k)
}

impl GpModel {
    pub fn to_file(&self) -> GpModelFile {
        let k = self.kernel();
        GpModelFile {
            format_version: MODEL_FORMAT_VERSION,
            family: k.family,
            layout: k.layout,
            joint_kinds: k.joint_kinds.clone(),
            hyperparameters: k.params().clone(),
            noise_std: self.noise_std,
            jitter: self.jitter,
            prior_mean: "zero".into(),
            scaling: self.scaling.clone(),
            regressor_robot: k.regressor.as_ref().map(|r| r.model.to_text()),
            regressor_joint: k.regressor.as_ref().map(|r| r.joint),
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            alpha: self.alpha.iter().copied().collect(),
        }
    }

    pub fn from_file(f: &GpModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                f.format_version
            )));
        }
        if f.prior_mean != "zero" {
            return Err(Error::Config(format!("unsupported prior mean '{}'", f.prior_mean)));
        }
        let kernel = kernel_from_file(f)?;
        let mut m = GpModel::fit_scaled(&f.inputs, &f.targets, &kernel, f.noise_std, f.scaling.clone())?;
        let scale = f.alpha.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let drift = m
            .alpha
            .iter()
            .zip(&f.alpha)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if f.alpha.len() != m.alpha.len() || drift > 1e-6 * scale {
            return Err(Error::Config(format!(
                "stored coefficients disagree with the refactorized model (max drift {drift:e})"
            )));
        }
        m.dataset_fingerprint.clone_from(&f.dataset_fingerprint);
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_file())? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: GpModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(&f)
    }
}
