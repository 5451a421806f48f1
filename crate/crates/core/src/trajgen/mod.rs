//! Excitation trajectories and labelled datasets.
//!
//! Each joint follows a realization of white Gaussian noise passed forward
//! and backward through a fourth-order Butterworth low-pass filter. The
//! signal is synthesized at ten times the output rate so that velocities and
//! accelerations can be taken by central differences and then decimated.
//! Torques come from the exact inverse dynamics plus optional Gaussian noise.

pub mod filter;
mod io;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rbd::{inverse_dynamics, JointKind, JointVector, RobotModel};
use crate::{Error, Result};

pub use io::{meta_path_for, DatasetMeta};

/// Internal synthesis rate as a multiple of the output rate.
pub const OVERSAMPLING: usize = 10;
/// Butterworth order of each filter pass.
pub const FILTER_ORDER: usize = 4;
/// ChaCha stream reserved for torque noise; joint `j` uses stream `j`.
pub const NOISE_STREAM: u64 = 1 << 32;
const GENERATOR: &str = concat!("dynlearn-trajgen ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// seconds
    pub duration: f64,
    /// Hz
    pub rate: f64,
    /// Hz
    pub cutoff: f64,
    /// Standard deviation of each joint's position signal (rad or m).
    pub amplitude: Vec<f64>,
    pub seed: u64,
}

impl TrajectoryConfig {
    /// Reference protocol defaults (100 s at 100 Hz, 1 Hz cutoff) with the robot's
    /// own amplitudes.
    pub fn for_robot(model: &RobotModel, seed: u64) -> Self {
        TrajectoryConfig {
            duration: 100.0,
            rate: 100.0,
            cutoff: 1.0,
            amplitude: model.amplitudes(),
            seed,
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad(format!("duration must be > 0 s, got {}", self.duration));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return bad(format!("cutoff must be > 0 Hz, got {}", self.cutoff));
        }
        if !(self.rate > 2.0 * self.cutoff) || !self.rate.is_finite() {
            return bad(format!(
                "rate ({} Hz) must exceed twice the cutoff ({} Hz)",
                self.rate, self.cutoff
            ));
        }
        if self.samples() < 1 {
            return bad("duration × rate yields no samples".into());
        }
        if self.amplitude.len() != dof {
            return Err(Error::dim("amplitude", dof, self.amplitude.len()));
        }
        if self.amplitude.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return bad("amplitudes must be finite and nonnegative".into());
        }
        Ok(())
    }
}

/// Positions, velocities and accelerations on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub q: Vec<JointVector>,
    pub qd: Vec<JointVector>,
    pub qdd: Vec<JointVector>,
}

/// ChaCha generator for one random stream of a seeded experiment.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn filtered_noise_trajectory(cfg: &TrajectoryConfig, dof: usize) -> Result<Trajectory> {
    cfg.validate(dof)?;
    let n_out = cfg.samples();
    let fs = cfg.rate * OVERSAMPLING as f64;
    let h = 1.0 / fs;
    // filter transients decay well within ten periods of the cutoff
    let pad = (10.0 * fs / cfg.cutoff).ceil() as usize;
    let core = (n_out - 1) * OVERSAMPLING + 1;
    let total = core + 2 + 2 * pad;
    let first = pad + 1;
    let filter = filter::Butterworth::lowpass(FILTER_ORDER, cfg.cutoff, fs);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut q = vec![DVector::zeros(dof); n_out];
    let mut qd = vec![DVector::zeros(dof); n_out];
    let mut qdd = vec![DVector::zeros(dof); n_out];
    for j in 0..dof {
        let amplitude = cfg.amplitude[j];
        if amplitude == 0.0 {
            continue;
        }
        let mut rng = stream_rng(cfg.seed, j as u64);
        let white: Vec<f64> = (0..total).map(|_| normal.sample(&mut rng)).collect();
        let smooth = filter.filtfilt(&white);
        let window = &smooth[first..first + core];
        let mean = window.iter().sum::<f64>() / core as f64;
        let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / core as f64;
        let scale = if var > 0.0 { amplitude / var.sqrt() } else { 0.0 };
        for k in 0..n_out {
            let i = first + k * OVERSAMPLING;
            let (prev, here, next) = (smooth[i - 1], smooth[i], smooth[i + 1]);
            q[k][j] = scale * here;
            qd[k][j] = scale * (next - prev) / (2.0 * h);
            qdd[k][j] = scale * (next - 2.0 * here + prev) / (h * h);
        }
    }
    let t = (0..n_out).map(|k| k as f64 / cfg.rate).collect();
    Ok(Trajectory { t, q, qd, qdd })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSample {
    pub t: f64,
    pub q: JointVector,
    pub qd: JointVector,
    pub qdd: JointVector,
    pub tau: JointVector,
}

/// Uniformly sampled `(q, q̇, q̈, τ)` tuples plus the metadata needed to
/// reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<DynamicsSample>,
    pub meta: DatasetMeta,
}

pub fn generate_dataset(
    model: &RobotModel,
    cfg: &TrajectoryConfig,
    torque_noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    model.validate()?;
    if !(torque_noise_std >= 0.0) || !torque_noise_std.is_finite() {
        return Err(Error::Config(format!(
            "torque noise std must be finite and >= 0, got {torque_noise_std}"
        )));
    }
    let traj = filtered_noise_trajectory(cfg, model.dof())?;
    let mut noise_rng = stream_rng(seed, NOISE_STREAM);
    let noise = Normal::new(0.0, torque_noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut samples = Vec::with_capacity(traj.t.len());
    for k in 0..traj.t.len() {
        let mut tau = inverse_dynamics(model, &traj.q[k], &traj.qd[k], &traj.qdd[k])?;
        if torque_noise_std > 0.0 {
            for v in tau.iter_mut() {
                *v += noise.sample(&mut noise_rng);
            }
        }
        samples.push(DynamicsSample {
            t: traj.t[k],
            q: traj.q[k].clone(),
            qd: traj.qd[k].clone(),
            qdd: traj.qdd[k].clone(),
            tau,
        });
    }
    Ok(Dataset {
        samples,
        meta: DatasetMeta {
            robot_name: model.name.clone(),
            dof: model.dof(),
            joint_kinds: model.joint_kinds(),
            rate: cfg.rate,
            duration: cfg.duration,
            cutoff: cfg.cutoff,
            amplitude: cfg.amplitude.clone(),
            trajectory_seed: cfg.seed,
            noise_seed: seed,
            noise_std: torque_noise_std,
            start_index: 0,
            generator: GENERATOR.to_string(),
        },
    })
}

impl Dataset {
    pub fn dof(&self) -> usize {
        self.meta.dof
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn joint_kinds(&self) -> &[JointKind] {
        &self.meta.joint_kinds
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.meta.rate
    }

    /// Prefix of `train_seconds` on the time grid, and the remainder.
    pub fn split(&self, train_seconds: f64) -> Result<(Dataset, Dataset)> {
        let duration = self.duration();
        if !(train_seconds > 0.0) || train_seconds > duration * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "split at {train_seconds} s is outside (0, {duration}] s"
            )));
        }
        let count = ((train_seconds * self.meta.rate).round() as usize).clamp(1, self.len());
        let mut head = self.clone();
        let tail_samples = head.samples.split_off(count);
        let mut tail = Dataset {
            samples: tail_samples,
            meta: self.meta.clone(),
        };
        head.meta.duration = count as f64 / self.meta.rate;
        tail.meta.start_index = self.meta.start_index + count;
        tail.meta.duration = tail.len() as f64 / self.meta.rate;
        Ok((head, tail))
    }

    /// Every sample whose index is a multiple of `stride`.
    pub fn strided(&self, stride: usize) -> Dataset {
        let stride = stride.max(1);
        Dataset {
            samples: self.samples.iter().step_by(stride).cloned().collect(),
            meta: DatasetMeta {
                rate: self.meta.rate / stride as f64,
                ..self.meta.clone()
            },
        }
    }
}
