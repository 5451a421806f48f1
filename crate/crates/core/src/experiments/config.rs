//! Benchmark configuration (TOML). Unknown keys are rejected.
//!
//! ```toml
//! robot = "panda_like"          # built-in name or robot file, optional "@k"
//! dofs = [2, 3]                 # joints kept for the DoF sweep ([] = all)
//! seeds = [1, 2, 3, 4, 5]
//! estimators = ["se_fd", "se", "gip"]
//! torque_noise_std = 0.01       # N·m, train and test
//! train_seconds = [10, 20, 30]  # data-efficiency schedule
//! workers = 1
//! test_seed_offset = 1000003
//! full_scale = false           # lift the 2000-sample desk limit
//!
//! [trajectory]
//! duration = 100.0              # training trajectory, seconds
//! test_duration = 100.0
//! rate = 10.0                   # Hz
//! cutoff = 1.0                  # Hz
//! # amplitude = [0.5, 0.5]      # per joint, default from the robot file
//!
//! [optimizer]
//! budget = 200
//! restarts = 3
//! subset = 400
//! standardize = false
//!
//! [inv2fwd]
//! probe = 1.0
//! symmetrize = true
//!
//! [kernels.gip]
//! init = { acc_bias = 0.1 }
//! frozen = ["acc_bias"]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Estimator;
use crate::gp::{OptimizerOptions, TrainOptions};
use crate::inv2fwd::Inv2FwdOptions;
use crate::kernels::KernelOverride;
use crate::rbd::{resolve_robot, RobotModel};
use crate::trajgen::TrajectoryConfig;
use crate::{Error, Result};

/// Largest training set accepted without `full_scale`.
pub const DESK_SCALE_SAMPLES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub duration: f64,
    pub test_duration: Option<f64>,
    pub rate: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    pub amplitude: Option<Vec<f64>>,
}

fn default_cutoff() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub budget: usize,
    pub restarts: usize,
    pub subset: usize,
    pub standardize: bool,
    pub tolerance: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimizerOptions::default();
        let t = TrainOptions::default();
        OptimizerSection {
            budget: o.budget,
            restarts: o.restarts,
            subset: t.subset,
            standardize: t.standardize,
            tolerance: o.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub robot: String,
    #[serde(default)]
    pub dofs: Vec<usize>,
    pub seeds: Vec<u64>,
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_noise")]
    pub torque_noise_std: f64,
    #[serde(default)]
    pub train_seconds: Vec<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_test_offset")]
    pub test_seed_offset: u64,
    #[serde(default)]
    pub full_scale: bool,
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub inv2fwd: Inv2FwdOptions,
    #[serde(default)]
    pub kernels: BTreeMap<String, KernelOverride>,
}

fn default_noise() -> f64 {
    0.01
}

fn default_workers() -> usize {
    1
}

fn default_test_offset() -> u64 {
    1_000_003
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators must not be empty".into());
        }
        if !(self.torque_noise_std >= 0.0) {
            return bad(format!("torque_noise_std must be >= 0, got {}", self.torque_noise_std));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.optimizer.budget == 0 {
            return bad("optimizer.budget must be at least 1".into());
        }
        for name in self.kernels.keys() {
            if Estimator::parse(name).is_err() {
                return bad(format!("[kernels.{name}] does not name an estimator (se_fd, se, gip, sp)"));
            }
        }
        let robot = resolve_robot(&self.robot)?;
        for &k in &self.dofs {
            if k == 0 || k > robot.dof() {
                return bad(format!("dof {k} is not available on '{}' ({} joints)", self.robot, robot.dof()));
            }
        }
        let t = &self.trajectory;
        for s in &self.train_seconds {
            if !(*s > 0.0) || *s > t.duration * (1.0 + 1e-12) {
                return bad(format!("train_seconds entry {s} is outside (0, {}]", t.duration));
            }
        }
        if t.test_duration.is_some_and(|d| !(d > 0.0)) {
            return bad("trajectory.test_duration must be > 0".into());
        }
        let n_train = (t.duration * t.rate).round() as usize;
        if !self.full_scale && n_train > DESK_SCALE_SAMPLES {
            return bad(format!(
                "{n_train} training samples exceed the desk-scale limit of {DESK_SCALE_SAMPLES}; lower the rate or set full_scale = true"
            ));
        }
        self.inv2fwd.validate()?;
        for k in self.dof_list(&robot) {
            self.trajectory_for(&self.robot_for(&robot, k)?, 0, false)?
                .validate(k)?;
        }
        Ok(())
    }

    pub fn base_robot(&self) -> Result<RobotModel> {
        resolve_robot(&self.robot)
    }

    /// DoFs to run; the robot's own DoF when `dofs` is empty.
    pub fn dof_list(&self, robot: &RobotModel) -> Vec<usize> {
        if self.dofs.is_empty() {
            vec![robot.dof()]
        } else {
            self.dofs.clone()
        }
    }

    pub fn robot_for(&self, robot: &RobotModel, dof: usize) -> Result<RobotModel> {
        if dof == robot.dof() {
            Ok(robot.clone())
        } else {
            robot.lock_after(dof)
        }
    }

    pub fn trajectory_for(&self, robot: &RobotModel, seed: u64, test: bool) -> Result<TrajectoryConfig> {
        let t = &self.trajectory;
        let amplitude = match &t.amplitude {
            Some(a) if a.len() >= robot.dof() => a[..robot.dof()].to_vec(),
            Some(a) => {
                return Err(Error::Config(format!(
                    "trajectory.amplitude has {} entries, robot has {} joints",
                    a.len(),
                    robot.dof()
                )))
            }
            None => robot.amplitudes(),
        };
        Ok(TrajectoryConfig {
            duration: if test { t.test_duration.unwrap_or(t.duration) } else { t.duration },
            rate: t.rate,
            cutoff: t.cutoff,
            amplitude,
            seed: if test { seed.wrapping_add(self.test_seed_offset) } else { seed },
        })
    }

    pub fn train_options(&self, estimator: Estimator) -> TrainOptions {
        let o = &self.optimizer;
        TrainOptions {
            optimizer: OptimizerOptions {
                budget: o.budget,
                restarts: o.restarts,
                seed: 0,
                tolerance: o.tolerance,
            },
            subset: o.subset,
            standardize: o.standardize,
            keep_initial: false,
            overrides: self.kernels.get(estimator.label()).cloned().unwrap_or_default(),
        }
    }
}
