//! Marginal-likelihood maximization: projected BFGS in log space with
//! Armijo backtracking and seeded random restarts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_training_set, nll_with_gradient_prepared, prepare_all};
use crate::kernels::KernelSpec;
use crate::trajgen::stream_rng;
use crate::{Error, Result};

/// Lower bound on the optimized noise std.
pub const NOISE_FLOOR: f64 = 1e-4;

const LOG_BOUND: f64 = 11.5;
const MAX_STEP: f64 = 3.0;
const RESTART_SPREAD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Total NLL evaluations across all starts.
    pub budget: usize,
    /// Random restarts in addition to the initial point.
    pub restarts: usize,
    pub seed: u64,
    /// Stop a start when the relative NLL decrease falls below this.
    pub tolerance: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            budget: 200,
            restarts: 3,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub kernel: KernelSpec,
    pub noise_std: f64,
    pub nll: f64,
    pub evaluations: usize,
    /// Best NLL seen after each evaluation (non-increasing).
    pub trace: Vec<f64>,
}

struct Problem<'a> {
    prepared: Vec<Vec<f64>>,
    targets: &'a [f64],
    kernel: &'a KernelSpec,
    free: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    evaluations: usize,
    best: Option<(f64, Vec<f64>)>,
    trace: Vec<f64>,
}

impl Problem<'_> {
    fn full(&self, z: &[f64]) -> Vec<f64> {
        let mut theta = self.kernel.params().log_values.clone();
        theta.push(0.0);
        for (k, &i) in self.free.iter().enumerate() {
            theta[i] = z[k];
        }
        theta
    }

    /// `None` if the Gram matrix could not be factorized.
    fn eval(&mut self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.evaluations += 1;
        let p = self.kernel.n_params();
        let kernel = self.kernel.with_log_params(&theta[..p]);
        let res = nll_with_gradient_prepared(&self.prepared, self.targets, &kernel, theta[p].exp())
            .ok()
            .filter(|(f, g)| f.is_finite() && g.iter().all(|v| v.is_finite()));
        if let Some((f, _)) = &res {
            if self.best.as_ref().is_none_or(|b| *f < b.0) {
                self.best = Some((*f, theta.to_vec()));
            }
        }
        self.trace.push(self.best.as_ref().map_or(f64::INFINITY, |b| b.0));
        res.map(|(f, g)| (f, self.free.iter().map(|&i| g[i]).collect()))
    }

    fn clamp(&self, z: &mut [f64]) {
        for (k, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    /// Gradient with components pushing against an active bound removed.
    fn projected(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        g.iter()
            .enumerate()
            .map(|(k, &gk)| {
                let at_lower = z[k] <= self.lower[k] && gk > 0.0;
                let at_upper = z[k] >= self.upper[k] && gk < 0.0;
                if at_lower || at_upper {
                    0.0
                } else {
                    gk
                }
            })
            .collect()
    }

    fn run_start(&mut self, z0: Vec<f64>, allowance: usize, tol: f64) {
        let stop = self.evaluations + allowance;
        let m = z0.len();
        let Some((mut f, mut g)) = self.eval(&self.full(&z0)) else {
            return;
        };
        let mut z = z0;
        let mut h = DMatrix::<f64>::identity(m, m);
        let mut fresh = true;
        while self.evaluations < stop {
            let pg = self.projected(&z, &g);
            if pg.iter().all(|v| v.abs() < 1e-10) {
                return;
            }
            let pgv = DVector::from_vec(pg.clone());
            let mut d: Vec<f64> = (-(&h * &pgv)).iter().copied().collect();
            for k in 0..m {
                if pg[k] == 0.0 {
                    d[k] = 0.0;
                }
            }
            let slope: f64 = d.iter().zip(&pg).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                h.fill_with_identity();
                fresh = true;
                d = pg.iter().map(|v| -v).collect();
            }
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut t = if dmax > MAX_STEP { MAX_STEP / dmax } else { 1.0 };
            let mut accepted = None;
            while self.evaluations < stop {
                let mut zn: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                self.clamp(&mut zn);
                let decrease: f64 = zn.iter().zip(&z).zip(&g).map(|((a, b), c)| (a - b) * c).sum();
                if let Some((fn_, gn)) = self.eval(&self.full(&zn)) {
                    if fn_ <= f + 1e-4 * decrease.min(0.0) && fn_ <= f {
                        accepted = Some((zn, fn_, gn));
                        break;
                    }
                }
                t *= 0.25;
                if t * dmax < 1e-10 {
                    break;
                }
            }
            let Some((zn, fn_, gn)) = accepted else {
                if fresh {
                    return;
                }
                h.fill_with_identity();
                fresh = true;
                continue;
            };
            let s = DVector::from_iterator(m, zn.iter().zip(&z).map(|(a, b)| a - b));
            let y = DVector::from_iterator(m, gn.iter().zip(&g).map(|(a, b)| a - b));
            let sy = s.dot(&y);
            if sy > 1e-12 {
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(m, m);
                let a = &i - rho * &s * y.transpose();
                let b = &i - rho * &y * s.transpose();
                h = &a * &h * &b + rho * &s * s.transpose();
                fresh = false;
            }
            let done = (f - fn_) <= tol * (1.0 + f.abs());
            z = zn;
            f = fn_;
            g = gn;
            if done {
                return;
            }
        }
    }
}

/// Minimize the NLL over the free kernel log parameters and `log σ`,
/// starting from `kernel`'s current values and `noise_std`.
///
/// The initial point is always the first evaluation, so the result never
/// has a higher NLL than the initial hyperparameters. With `budget = 1`
/// the initial hyperparameters are returned unchanged, except that the
/// noise std is raised to [`NOISE_FLOOR`] if it starts below it.
pub fn optimize_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: &KernelSpec,
    noise_std: f64,
    options: &OptimizerOptions,
) -> Result<OptimizationResult> {
    check_training_set(kernel, inputs, targets)?;
    if options.budget == 0 {
        return Err(Error::Config("optimizer budget must be at least 1".into()));
    }
    kernel.params().validate()?;
    let params = kernel.params();
    let p = params.len();
    let mut free = params.free_indices();
    free.push(p);
    let init_log_noise = noise_std.max(NOISE_FLOOR).ln();
    let mut lower = Vec::with_capacity(free.len());
    let mut upper = Vec::with_capacity(free.len());
    let mut z0 = Vec::with_capacity(free.len());
    for &i in &free {
        let v = if i == p { init_log_noise } else { params.log_values[i] };
        z0.push(v);
        if i == p {
            lower.push(NOISE_FLOOR.ln());
            upper.push(v.max(0.0) + LOG_BOUND);
        } else {
            lower.push(v - LOG_BOUND);
            upper.push(v + LOG_BOUND);
        }
    }
    let mut prob = Problem {
        prepared: prepare_all(kernel, inputs)?,
        targets,
        kernel,
        free,
        lower,
        upper,
        evaluations: 0,
        best: None,
        trace: Vec::new(),
    };

    let starts = options.restarts + 1;
    let mut rng = stream_rng(options.seed, 0);
    for s in 0..starts {
        let remaining = options.budget.saturating_sub(prob.evaluations);
        if remaining == 0 {
            break;
        }
        let allowance = (remaining / (starts - s)).max(1);
        let mut z = z0.clone();
        if s > 0 {
            for v in z.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += RESTART_SPREAD * e;
            }
            prob.clamp(&mut z);
        }
        prob.run_start(z, allowance, options.tolerance);
    }

    let Some((nll, theta)) = prob.best.clone() else {
        return Err(Error::OptimizationFailed {
            evaluations: prob.evaluations,
            best_so_far: None,
        });
    };
    Ok(OptimizationResult {
        kernel: kernel.with_log_params(&theta[..p]),
        noise_std: theta[p].exp(),
        nll,
        evaluations: prob.evaluations,
        trace: prob.trace,
    })
}
