//! Geometrically inspired polynomial kernel
//! `(k_P1(q̈, q̈') + k_P2(q̇, q̇')) · ∏ᵢ (cᵢ + uᵢ·q̃ᵢ·q̃ᵢ')²`.
//!
//! Parameter order: `acc_bias, acc_weight_1..n, vel_bias, vel_weight_1..n`,
//! then per joint `pos_bias_i` followed by one weight (prismatic) or two
//! weights for `(cos, sin)` (revolute).

use serde::{Deserialize, Serialize};

use super::{KernelFamily, KernelSpec, LayoutKind};
use crate::rbd::JointKind;
use crate::{Error, Result};

/// Prismatic coordinates pass through, revolute `qᵢ ↦ (cos qᵢ, sin qᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedConfiguration(pub Vec<f64>);

pub fn gip_transform(q: &[f64], kinds: &[JointKind]) -> Result<TransformedConfiguration> {
    if q.len() != kinds.len() {
        return Err(Error::dim("joint kinds", q.len(), kinds.len()));
    }
    let mut out = Vec::with_capacity(2 * q.len());
    for (&qi, k) in q.iter().zip(kinds) {
        match k {
            JointKind::Revolute => {
                let (s, c) = qi.sin_cos();
                out.push(c);
                out.push(s);
            }
            JointKind::Prismatic => out.push(qi),
        }
    }
    Ok(TransformedConfiguration(out))
}

pub fn gip_kernel(xj: &[f64], xl: &[f64], spec: &KernelSpec) -> Result<f64> {
    if spec.family != KernelFamily::Gip || spec.layout.kind != LayoutKind::Inverse {
        return Err(Error::Config("gip_kernel needs a GIP kernel on a [q | q̇ | q̈] layout".into()));
    }
    spec.eval(xj, xl)
}

/// `[q̈ | q̇ | q̃]`
pub(super) fn prepare(spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    if spec.layout.kind != LayoutKind::Inverse {
        return Err(Error::Config("GIP kernel requires the [q | q̇ | q̈] input layout".into()));
    }
    let n = spec.layout.dof;
    let mut f = Vec::with_capacity(4 * n);
    f.extend_from_slice(&x[2 * n..3 * n]);
    f.extend_from_slice(&x[n..2 * n]);
    f.extend(gip_transform(&x[..n], &spec.joint_kinds)?.0);
    Ok(f)
}

fn width(k: JointKind) -> usize {
    match k {
        JointKind::Revolute => 2,
        JointKind::Prismatic => 1,
    }
}

pub(super) fn eval(spec: &KernelSpec, a: &[f64], b: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let n = spec.layout.dof;
    let v = spec.values();
    let w1 = &v[1..=n];
    let w2 = &v[n + 2..2 * n + 2];

    let mut p1 = v[0];
    for d in 0..n {
        p1 += w1[d] * a[d] * b[d];
    }
    let mut s2 = v[n + 1];
    for d in 0..n {
        s2 += w2[d] * a[n + d] * b[n + d];
    }
    let p = p1 + s2 * s2;

    // per-joint factor bases sᵢ, so that k_Q = ∏ sᵢ²
    let mut s = Vec::with_capacity(n);
    let (mut vi, mut fi) = (2 * n + 2, 2 * n);
    for &kind in &spec.joint_kinds {
        let mut si = v[vi];
        for c in 0..width(kind) {
            si += v[vi + 1 + c] * a[fi + c] * b[fi + c];
        }
        s.push(si);
        vi += 1 + width(kind);
        fi += width(kind);
    }
    let q: f64 = s.iter().map(|x| x * x).product();
    let k = p * q;

    let Some(g) = grad else { return k };
    g[0] = v[0] * q;
    for d in 0..n {
        g[1 + d] = w1[d] * a[d] * b[d] * q;
    }
    g[n + 1] = 2.0 * s2 * v[n + 1] * q;
    for d in 0..n {
        g[n + 2 + d] = 2.0 * s2 * w2[d] * a[n + d] * b[n + d] * q;
    }
    // ∏_{j≠i} sⱼ² via prefix/suffix products
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * s[i] * s[i];
    }
    let mut prefix = 1.0;
    let (mut vi, mut fi) = (2 * n + 2, 2 * n);
    for (i, &kind) in spec.joint_kinds.iter().enumerate() {
        let dsi = p * 2.0 * s[i] * prefix * suffix[i + 1];
        g[vi] = dsi * v[vi];
        for c in 0..width(kind) {
            g[vi + 1 + c] = dsi * v[vi + 1 + c] * a[fi + c] * b[fi + c];
        }
        prefix *= s[i] * s[i];
        vi += 1 + width(kind);
        fi += width(kind);
    }
    k
}

/// Scale weights so each block sees unit-variance inputs and
/// `k(x, x) ≈ var_y` on typical data.
pub(super) fn initialize(spec: &KernelSpec, stds: &[f64], var_y: f64, vals: &mut [f64]) {
    let n = spec.layout.dof;
    let nf = n as f64;
    // typical k_P ≈ (1 + 1) + (1 + 1)², typical factor (1 + 1)²
    let r = var_y / (6.0 * 4f64.powi(n as i32));
    let rs = r.sqrt();
    vals[0] = r;
    for d in 0..n {
        vals[1 + d] = r / (nf * stds[2 * n + d].powi(2));
    }
    vals[n + 1] = rs;
    for d in 0..n {
        vals[n + 2 + d] = rs / (nf * stds[n + d].powi(2));
    }
    let mut vi = 2 * n + 2;
    for (i, &kind) in spec.joint_kinds.iter().enumerate() {
        vals[vi] = 1.0;
        match kind {
            JointKind::Revolute => {
                vals[vi + 1] = 1.0;
                vals[vi + 2] = 1.0;
            }
            JointKind::Prismatic => vals[vi + 1] = 1.0 / stds[i].powi(2),
        }
        vi += 1 + width(kind);
    }
}
