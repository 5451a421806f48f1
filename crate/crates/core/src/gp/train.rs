//! Training recipe shared by the inverse and forward estimators:
//! data-informed initialization, marginal-likelihood optimization on an
//! evenly strided subset, then an exact fit on all points.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{optimize_hyperparameters, GpModel, InputScaling, OptimizerOptions};
use crate::kernels::{KernelFamily, KernelOverride, KernelSpec};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub optimizer: OptimizerOptions,
    /// Maximum points used during hyperparameter optimization (0 = all).
    pub subset: usize,
    /// Standardize inputs (SE kernels only).
    pub standardize: bool,
    /// Skip the data-informed initialization and start from the kernel's
    /// current values.
    pub keep_initial: bool,
    /// Applied after initialization.
    pub overrides: KernelOverride,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            optimizer: OptimizerOptions::default(),
            subset: 400,
            standardize: false,
            keep_initial: false,
            overrides: KernelOverride::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub family: String,
    pub points: usize,
    pub subset_points: usize,
    pub evaluations: usize,
    /// NLL on the optimization subset at the initial and final hyperparameters.
    pub initial_nll: f64,
    pub final_subset_nll: f64,
    /// NLL of the full training set at the final hyperparameters.
    pub final_nll: f64,
    pub noise_std: f64,
    pub hyperparameters: Vec<(String, f64)>,
    pub jitter: f64,
    pub seconds: f64,
}

fn stride_indices(n: usize, cap: usize) -> Vec<usize> {
    if cap == 0 || n <= cap {
        return (0..n).collect();
    }
    (0..cap).map(|k| k * n / cap).collect()
}

/// Optimize hyperparameters and fit one GP.
pub fn train_gp(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: &KernelSpec,
    noise_init: f64,
    options: &TrainOptions,
) -> Result<(GpModel, TrainLog)> {
    let start = Instant::now();
    let standardize = options.standardize && kernel.family == KernelFamily::SquaredExponential;
    let scaling = standardize.then(|| InputScaling::from_inputs(inputs));
    let view: Vec<Vec<f64>> = match &scaling {
        Some(s) => inputs.iter().map(|x| s.apply(x)).collect(),
        None => inputs.to_vec(),
    };
    let idx = stride_indices(view.len(), options.subset);
    let sub_x: Vec<Vec<f64>> = idx.iter().map(|&i| view[i].clone()).collect();
    let sub_y: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
    let mut init = if options.keep_initial {
        kernel.clone()
    } else {
        kernel.initialized_from(&sub_x, &sub_y)
    };
    options.overrides.apply(&mut init)?;
    let opt = optimize_hyperparameters(&sub_x, &sub_y, &init, noise_init, &options.optimizer)?;
    let model = GpModel::fit_scaled(inputs, targets, &opt.kernel, opt.noise_std, scaling)?;
    let p = opt.kernel.params();
    let log = TrainLog {
        family: kernel.family.label().into(),
        points: inputs.len(),
        subset_points: idx.len(),
        evaluations: opt.evaluations,
        initial_nll: opt.trace[0],
        final_subset_nll: opt.nll,
        final_nll: model.neg_log_marginal_likelihood(),
        noise_std: opt.noise_std,
        hyperparameters: p.names.iter().cloned().zip(p.log_values.iter().map(|v| v.exp())).collect(),
        jitter: model.jitter(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_cover_the_range_evenly() {
        assert_eq!(stride_indices(5, 0), vec![0, 1, 2, 3, 4]);
        assert_eq!(stride_indices(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(stride_indices(10, 4), vec![0, 2, 5, 7]);
    }
}
