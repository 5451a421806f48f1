use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{Joint, JointKind, JointVector, LinkInertia, RobotModel};
use crate::{Error, Result};

/// Inertial parameters per link: 1 mass, 3 first moments, 6 inertia entries.
pub const PARAMS_PER_LINK: usize = 10;

/// Inertial parameters of one link in the form the dynamics are linear in:
/// mass, first moment `m·c`, and inertia about the link-frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParameters {
    pub mass: f64,
    pub first_moment: Vector3<f64>,
    pub inertia_origin: Matrix3<f64>,
}

impl LinkParameters {
    pub fn to_array(&self) -> [f64; PARAMS_PER_LINK] {
        let h = &self.first_moment;
        let i = &self.inertia_origin;
        [
            self.mass,
            h.x,
            h.y,
            h.z,
            i[(0, 0)],
            i[(0, 1)],
            i[(0, 2)],
            i[(1, 1)],
            i[(1, 2)],
            i[(2, 2)],
        ]
    }

    pub fn from_slice(w: &[f64]) -> Self {
        LinkParameters {
            mass: w[0],
            first_moment: Vector3::new(w[1], w[2], w[3]),
            inertia_origin: super::inertia_from_upper([w[4], w[5], w[6], w[7], w[8], w[9]]),
        }
    }
}

impl From<&LinkInertia> for LinkParameters {
    fn from(l: &LinkInertia) -> Self {
        let c = l.com;
        // parallel-axis shift from the COM to the frame origin
        let shift = (Matrix3::identity() * c.dot(&c) - c * c.transpose()) * l.mass;
        LinkParameters {
            mass: l.mass,
            first_moment: c * l.mass,
            inertia_origin: l.inertia_com + shift,
        }
    }
}

/// Rotation and translation of the DH transform of one joint at position `q`.
pub(crate) fn dh_transform(joint: &Joint, q: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let dh = &joint.dh;
    let (theta, d) = match joint.kind {
        JointKind::Revolute => (q + dh.theta_offset, dh.d),
        JointKind::Prismatic => (dh.theta_offset, dh.d + q),
    };
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = dh.alpha.sin_cos();
    let r = Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca);
    (r, Vector3::new(dh.a * ct, dh.a * st, d))
}

/// Recursive Newton-Euler over an arbitrary parameter set. The result is
/// linear in `params`; gravity enters as a base acceleration of `-gravity`.
fn rnea_with(
    joints: &[Joint],
    params: &[LinkParameters],
    gravity: &Vector3<f64>,
    q: &[f64],
    qd: &[f64],
    qdd: &[f64],
) -> DVector<f64> {
    let n = joints.len();
    let mut rot = Matrix3::identity();
    let mut omega = Vector3::zeros();
    let mut omega_dot = Vector3::zeros();
    let mut acc = -gravity;

    // Per-link quantities needed by the backward pass, all in base coordinates.
    let mut axes = Vec::with_capacity(n);
    let mut arms = Vec::with_capacity(n);
    let mut forces = Vec::with_capacity(n);
    let mut moments = Vec::with_capacity(n);

    for i in 0..n {
        let z = rot.column(2).into_owned();
        let (r_local, p_local) = dh_transform(&joints[i], q[i]);
        let arm = rot * p_local;
        match joints[i].kind {
            JointKind::Revolute => {
                let omega_prev = omega;
                omega = omega_prev + z * qd[i];
                omega_dot += z * qdd[i] + omega_prev.cross(&z) * qd[i];
                acc += omega_dot.cross(&arm) + omega.cross(&omega.cross(&arm));
            }
            JointKind::Prismatic => {
                acc += z * qdd[i]
                    + omega.cross(&z) * (2.0 * qd[i])
                    + omega_dot.cross(&arm)
                    + omega.cross(&omega.cross(&arm));
            }
        }
        rot *= r_local;

        let p = &params[i];
        let h = rot * p.first_moment;
        let inertia = rot * p.inertia_origin * rot.transpose();
        let force = acc * p.mass + omega_dot.cross(&h) + omega.cross(&omega.cross(&h));
        let moment = inertia * omega_dot + omega.cross(&(inertia * omega)) + h.cross(&acc);
        axes.push(z);
        arms.push(arm);
        forces.push(force);
        moments.push(moment);
    }

    let mut tau = DVector::zeros(n);
    let mut f_next = Vector3::zeros();
    let mut mu_next = Vector3::zeros();
    for i in (0..n).rev() {
        let f = forces[i] + f_next;
        // moment about the joint-i origin (frame i-1)
        let mu = mu_next + moments[i] + arms[i].cross(&f);
        tau[i] = match joints[i].kind {
            JointKind::Revolute => mu.dot(&axes[i]),
            JointKind::Prismatic => f.dot(&axes[i]),
        };
        f_next = f;
        mu_next = mu;
    }
    tau
}

fn link_parameters(model: &RobotModel) -> Vec<LinkParameters> {
    model.links.iter().map(LinkParameters::from).collect()
}

fn friction_torque(model: &RobotModel, qd: &JointVector) -> Option<DVector<f64>> {
    model.friction.as_ref().map(|f| {
        DVector::from_iterator(
            qd.len(),
            f.iter().zip(qd.iter()).map(|(fr, &v)| {
                let sign = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                fr.viscous * v + fr.coulomb * sign
            }),
        )
    })
}

/// Joint torques `B(q)q̈ + c(q,q̇) + g(q) (+ F(q̇))` by recursive Newton-Euler.
pub fn inverse_dynamics(
    model: &RobotModel,
    q: &JointVector,
    qd: &JointVector,
    qdd: &JointVector,
) -> Result<JointVector> {
    model.check_dim("q", q)?;
    model.check_dim("qd", qd)?;
    model.check_dim("qdd", qdd)?;
    let mut tau = rnea_with(
        &model.joints,
        &link_parameters(model),
        &model.gravity,
        q.as_slice(),
        qd.as_slice(),
        qdd.as_slice(),
    );
    if let Some(f) = friction_torque(model, qd) {
        tau += f;
    }
    Ok(tau)
}

/// `g(q)`: torques at rest.
pub fn gravity_torque(model: &RobotModel, q: &JointVector) -> Result<JointVector> {
    model.check_dim("q", q)?;
    let zeros = vec![0.0; model.dof()];
    Ok(rnea_with(
        &model.joints,
        &link_parameters(model),
        &model.gravity,
        q.as_slice(),
        &zeros,
        &zeros,
    ))
}

/// `n(q,q̇) = c(q,q̇) + g(q) (+ F(q̇))`.
pub fn bias_torque(model: &RobotModel, q: &JointVector, qd: &JointVector) -> Result<JointVector> {
    inverse_dynamics(model, q, qd, &DVector::zeros(model.dof()))
}

/// Joint-space inertia matrix, one unit-acceleration RNEA pass per column
/// with gravity and velocities removed.
pub fn mass_matrix(model: &RobotModel, q: &JointVector) -> Result<DMatrix<f64>> {
    model.check_dim("q", q)?;
    let n = model.dof();
    let params = link_parameters(model);
    let zeros = vec![0.0; n];
    let mut b = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = rnea_with(
            &model.joints,
            &params,
            &Vector3::zeros(),
            q.as_slice(),
            &zeros,
            &unit,
        );
        b.set_column(j, &col);
        unit[j] = 0.0;
    }
    Ok(b)
}

/// Solves `B(q)q̈ = τ − n(q,q̇)` with a Cholesky factorization.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &JointVector,
    qd: &JointVector,
    tau: &JointVector,
) -> Result<JointVector> {
    model.check_dim("tau", tau)?;
    let b = mass_matrix(model, q)?;
    let rhs = tau - bias_torque(model, q, qd)?;
    let chol = b.cholesky().ok_or_else(|| {
        Error::InvalidModel(format!(
            "inertia matrix of {} is not positive definite at q = {:?}",
            model.name,
            q.as_slice()
        ))
    })?;
    Ok(chol.solve(&rhs))
}

/// Regressor `Φ(q,q̇,q̈)` with `τ = Φ·w` for `w = model.inertial_parameters()`.
/// Column `k` is the RNEA output for the parameter vector `e_k`.
pub fn regressor(
    model: &RobotModel,
    q: &JointVector,
    qd: &JointVector,
    qdd: &JointVector,
) -> Result<DMatrix<f64>> {
    if model.friction.is_some() {
        return Err(Error::Unsupported(
            "the inertial-parameter regressor is defined for friction-free models".into(),
        ));
    }
    model.check_dim("q", q)?;
    model.check_dim("qd", qd)?;
    model.check_dim("qdd", qdd)?;
    let n = model.dof();
    let cols = PARAMS_PER_LINK * n;
    let mut phi = DMatrix::zeros(n, cols);
    let zero = LinkParameters::from_slice(&[0.0; PARAMS_PER_LINK]);
    let mut params = vec![zero; n];
    let mut unit = [0.0; PARAMS_PER_LINK];
    for link in 0..n {
        for k in 0..PARAMS_PER_LINK {
            unit[k] = 1.0;
            params[link] = LinkParameters::from_slice(&unit);
            let col = rnea_with(
                &model.joints,
                &params,
                &model.gravity,
                q.as_slice(),
                qd.as_slice(),
                qdd.as_slice(),
            );
            phi.set_column(link * PARAMS_PER_LINK + k, &col);
            unit[k] = 0.0;
        }
        params[link] = zero;
    }
    Ok(phi)
}
