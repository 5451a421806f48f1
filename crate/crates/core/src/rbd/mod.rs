//! Rigid-body dynamics of serial manipulators.
//!
//! Kinematics follow the standard (distal) Denavit-Hartenberg convention:
//! frame `i` sits at the far end of link `i` and joint `i` moves about the
//! `z` axis of frame `i-1`. Link inertia is stored about the centre of mass,
//! expressed in the link frame.

mod builtin;
mod format;
mod rnea;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use builtin::{builtin, builtin_names, resolve_robot};
pub use format::{parse_robot, read_robot_file};
pub use rnea::{
    bias_torque, forward_dynamics, gravity_torque, inverse_dynamics, mass_matrix, regressor,
    LinkParameters, PARAMS_PER_LINK,
};

/// Positions, velocities, accelerations or torques of every joint.
pub type JointVector = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// Standard Denavit-Hartenberg parameters. For a revolute joint the joint
/// angle is `q + theta_offset`; for a prismatic joint the offset along `z`
/// is `q + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhParameters {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub kind: JointKind,
    pub dh: DhParameters,
    /// Default excitation amplitude (rad or m) used by trajectory generation.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkInertia {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia_com: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Friction {
    pub viscous: f64,
    pub coulomb: f64,
}

/// Kinematic and inertial description of a serial chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub joints: Vec<Joint>,
    pub links: Vec<LinkInertia>,
    pub gravity: Vector3<f64>,
    /// Per-joint friction; `None` means friction is off.
    pub friction: Option<Vec<Friction>>,
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_kinds(&self) -> Vec<JointKind> {
        self.joints.iter().map(|j| j.kind).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.amplitude).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        if n == 0 {
            return Err(Error::InvalidModel("a robot needs at least one joint".into()));
        }
        if self.links.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} joints but {} links",
                n,
                self.links.len()
            )));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidModel("gravity must be finite".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let dh = &j.dh;
            if ![dh.a, dh.alpha, dh.d, dh.theta_offset, j.amplitude]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::InvalidModel(format!("joint {}: non-finite DH value", i + 1)));
            }
            if j.amplitude < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "joint {}: amplitude must be nonnegative",
                    i + 1
                )));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.mass > 0.0) || !l.mass.is_finite() {
                return Err(Error::InvalidModel(format!("link {}: mass must be > 0", i + 1)));
            }
            if !l.com.iter().chain(l.inertia_com.iter()).all(|v| v.is_finite()) {
                return Err(Error::InvalidModel(format!("link {}: non-finite inertia", i + 1)));
            }
            let asym = (l.inertia_com - l.inertia_com.transpose()).amax();
            if asym > 1e-12 * l.inertia_com.amax().max(1.0) {
                return Err(Error::InvalidModel(format!("link {}: inertia not symmetric", i + 1)));
            }
            let min_eig = l.inertia_com.symmetric_eigenvalues().min();
            if min_eig < -1e-12 * l.inertia_com.amax().max(1.0) {
                return Err(Error::InvalidModel(format!(
                    "link {}: inertia has negative eigenvalue {min_eig:e}",
                    i + 1
                )));
            }
        }
        if let Some(f) = &self.friction {
            if f.len() != n {
                return Err(Error::InvalidModel(format!(
                    "{} friction entries for {} joints",
                    f.len(),
                    n
                )));
            }
        }
        Ok(())
    }

    /// Inertial parameters in the layout used by [`regressor`]: per link
    /// `[m, m·cx, m·cy, m·cz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]`, the inertia
    /// taken about the link-frame origin.
    pub fn inertial_parameters(&self) -> DVector<f64> {
        let params: Vec<LinkParameters> = self.links.iter().map(LinkParameters::from).collect();
        let mut w = DVector::zeros(PARAMS_PER_LINK * params.len());
        for (i, p) in params.iter().enumerate() {
            w.rows_mut(PARAMS_PER_LINK * i, PARAMS_PER_LINK)
                .copy_from_slice(&p.to_array());
        }
        w
    }

    /// Same robot with joints `k+1..n` locked at `q = 0`. The locked links are
    /// merged into link `k` as one composite rigid body, so the first `k`
    /// torques match the full model evaluated with the locked joints at rest.
    pub fn lock_after(&self, k: usize) -> Result<RobotModel> {
        let n = self.dof();
        if k == 0 || k > n {
            return Err(Error::Config(format!(
                "cannot keep {k} joints of the {n}-joint robot {}",
                self.name
            )));
        }
        if k == n {
            return Ok(self.clone());
        }
        // Accumulate mass, first moment and inertia of links k..n (0-based
        // indices k-1..n-1) expressed in frame k.
        let mut rot = Matrix3::identity();
        let mut origin = Vector3::zeros();
        let mut bodies = Vec::with_capacity(n - k + 1);
        for idx in (k - 1)..n {
            if idx > k - 1 {
                let (r, p) = rnea::dh_transform(&self.joints[idx], 0.0);
                origin += rot * p;
                rot *= r;
            }
            let link = &self.links[idx];
            bodies.push((
                link.mass,
                origin + rot * link.com,
                rot * link.inertia_com * rot.transpose(),
            ));
        }
        let mass: f64 = bodies.iter().map(|b| b.0).sum();
        let com = bodies.iter().map(|b| b.1 * b.0).sum::<Vector3<f64>>() / mass;
        let mut inertia = Matrix3::zeros();
        for (m, c, i_c) in &bodies {
            let d = c - com;
            inertia += i_c + (Matrix3::identity() * d.dot(&d) - d * d.transpose()) * *m;
        }
        inertia = (inertia + inertia.transpose()) * 0.5;

        let mut links = self.links[..k].to_vec();
        links[k - 1] = LinkInertia {
            mass,
            com,
            inertia_com: inertia,
        };
        let model = RobotModel {
            name: format!("{}@{}", self.name, k),
            joints: self.joints[..k].to_vec(),
            links,
            gravity: self.gravity,
            friction: self.friction.as_ref().map(|f| f[..k].to_vec()),
        };
        model.validate()?;
        Ok(model)
    }

    /// Copy of the model with friction removed.
    pub fn without_friction(&self) -> RobotModel {
        RobotModel {
            friction: None,
            ..self.clone()
        }
    }

    pub(crate) fn check_dim(&self, what: &'static str, v: &JointVector) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::dim(what, self.dof(), v.len()));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Config(format!("{what} contains non-finite values")));
        }
        Ok(())
    }
}

/// Build a symmetric inertia matrix from `[Ixx, Ixy, Ixz, Iyy, Iyz, Izz]`.
pub fn inertia_from_upper(v: [f64; 6]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5])
}
