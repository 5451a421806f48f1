#![allow(dead_code)]

use dynlearn::rbd::{JointVector, RobotModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> JointVector {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

/// Random `(q, q̇, q̈)` with angles in ±π and rates in ±2.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> (JointVector, JointVector, JointVector) {
    (
        uniform(rng, n, std::f64::consts::PI),
        uniform(rng, n, 2.0),
        uniform(rng, n, 2.0),
    )
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Lagrangian equations of the shipped planar 2R arm, written out by hand:
/// links of length 1.0 and 0.8, masses 2.0 and 1.5, centres of mass 0.5 and
/// 0.4 from the proximal joint, rotational inertias 1/6 and 0.08 about the
/// centre of mass, gravity 9.81 along -y.
pub struct Planar2ClosedForm;

impl Planar2ClosedForm {
    const L1: f64 = 1.0;
    const M1: f64 = 2.0;
    const M2: f64 = 1.5;
    const C1: f64 = 0.5;
    const C2: f64 = 0.4;
    const I1: f64 = 1.0 / 6.0;
    const I2: f64 = 0.08;
    const G: f64 = 9.81;

    pub fn mass_matrix(q: &[f64]) -> DMatrix<f64> {
        let c2 = q[1].cos();
        let m11 = Self::M1 * Self::C1 * Self::C1
            + Self::I1
            + Self::M2 * (Self::L1 * Self::L1 + Self::C2 * Self::C2 + 2.0 * Self::L1 * Self::C2 * c2)
            + Self::I2;
        let m12 = Self::M2 * (Self::C2 * Self::C2 + Self::L1 * Self::C2 * c2) + Self::I2;
        let m22 = Self::M2 * Self::C2 * Self::C2 + Self::I2;
        DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
    }

    pub fn gravity(q: &[f64]) -> DVector<f64> {
        let g2 = Self::M2 * Self::C2 * Self::G * (q[0] + q[1]).cos();
        let g1 = (Self::M1 * Self::C1 + Self::M2 * Self::L1) * Self::G * q[0].cos() + g2;
        DVector::from_vec(vec![g1, g2])
    }

    pub fn coriolis(q: &[f64], qd: &[f64]) -> DVector<f64> {
        let h = Self::M2 * Self::L1 * Self::C2 * q[1].sin();
        DVector::from_vec(vec![-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]])
    }

    pub fn torque(q: &[f64], qd: &[f64], qdd: &[f64]) -> DVector<f64> {
        Self::mass_matrix(q) * DVector::from_column_slice(qdd) + Self::coriolis(q, qd) + Self::gravity(q)
    }
}

pub fn zero_gravity(model: &RobotModel) -> RobotModel {
    let mut m = model.clone();
    m.gravity = nalgebra::Vector3::zeros();
    m
}
