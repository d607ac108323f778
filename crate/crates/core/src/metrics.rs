//! Error measures for reconstructions.

use alloc::vec;
use alloc::vec::Vec;

use crate::cq::CqWeights;
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, FemOperators};
use crate::forward::{Source, StateTrajectory};
use crate::math::sqrt;
use crate::mesh::{Dim, Mesh};
use crate::quadrature::{gauss_unit, TRI7};
use crate::sparse::CsrMatrix;

/// Errors of one reconstruction, together with the run parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub e_q: f64,
    pub e_u: f64,
    pub weighted_err: f64,
    /// Smallest element value of the weight density; negative values mean
    /// the weighted error is not a norm for this trajectory.
    pub min_density: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub h: f64,
    pub tau: f64,
}

/// Mass matrix over all nodes, boundary included.
pub fn full_mass(mesh: &Mesh) -> CsrMatrix {
    FemOperators::new(mesh).mass_full
}

fn check_nodes(mesh: &Mesh, v: &[f64]) -> Result<()> {
    if v.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            found: v.len(),
        });
    }
    Ok(())
}

/// `‖q* − I_h q†‖_{L²(Ω)}`.
pub fn coefficient_error(mesh: &Mesh, q_star: &[f64], q_dagger: impl Fn(&[f64]) -> f64) -> Result<f64> {
    check_nodes(mesh, q_star)?;
    let diff: Vec<f64> = (0..mesh.n_nodes()).map(|k| q_star[k] - q_dagger(mesh.point(k))).collect();
    Ok(sqrt(full_mass(mesh).bilinear(&diff, &diff).max(0.0)))
}

/// `‖q* − q†‖_{L²(Ω)}` with the exact coefficient integrated by a
/// high-order rule on every element.
pub fn coefficient_error_exact(mesh: &Mesh, q_star: &[f64], q_dagger: impl Fn(&[f64]) -> f64) -> Result<f64> {
    check_nodes(mesh, q_star)?;
    let mut acc = 0.0;
    let mut x = [0.0; 2];
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        let meas = mesh.geometry(e).measure;
        let mut visit = |lam: &[f64], w: f64| {
            x = [0.0; 2];
            let mut qh = 0.0;
            for (a, &k) in verts.iter().enumerate() {
                let p = mesh.node(k);
                x[0] += lam[a] * p[0];
                x[1] += lam[a] * p[1];
                qh += lam[a] * q_star[k];
            }
            let d = qh - q_dagger(&x[..mesh.dim().as_usize()]);
            acc += w * meas * d * d;
        };
        match mesh.dim() {
            Dim::One => {
                for &(s, w) in gauss_unit(5) {
                    visit(&[1.0 - s, s], w);
                }
            }
            Dim::Two => {
                for (lam, w) in TRI7.iter() {
                    visit(lam, *w);
                }
            }
        }
    }
    Ok(sqrt(acc))
}

/// `(τ Σ_{n=1}^N ‖Uⁿ − uⁿ‖²)^{1/2}` with the mass-matrix norm of the mesh
/// the trajectories live on.
pub fn state_error(mesh: &Mesh, traj: &StateTrajectory, reference: &StateTrajectory) -> Result<f64> {
    if traj.n_dof() != mesh.n_interior() || reference.n_dof() != traj.n_dof() || reference.n_steps() != traj.n_steps() {
        return Err(Error::MeshMismatch {
            expected: traj.as_flat().len(),
            found: reference.as_flat().len(),
        });
    }
    let mass = assemble_mass(mesh);
    let mut diff = vec![0.0; traj.n_dof()];
    let mut acc = 0.0;
    for n in 1..=traj.n_steps() {
        for ((d, a), b) in diff.iter_mut().zip(traj.state(n)).zip(reference.state(n)) {
            *d = a - b;
        }
        acc += mass.bilinear(&diff, &diff);
    }
    Ok(sqrt(traj.tau() * acc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedError {
    pub value: f64,
    pub min_density: f64,
}

/// Coefficient error weighted by the density
/// `q†|∇uⁿ|² + (fⁿ − ∂̄_τ^α(uⁿ − u⁰)) uⁿ` and accumulated in time,
///
/// ```text
///   τ² Σ_{m=1}^N Σ_{n=1}^m ∫_Ω ((q† − q*)/q†)² (q†|∇uⁿ|² + (fⁿ − ∂̄_τ^α(uⁿ−u⁰)) uⁿ),
/// ```
///
/// where `∂̄_τ^α` is the CQ derivative of `traj_dagger` and every factor
/// except the gradient is replaced by its element mean.
pub fn weighted_error(
    mesh: &Mesh,
    q_star: &[f64],
    q_dagger: &[f64],
    traj_dagger: &StateTrajectory,
    source: Option<&dyn Source>,
) -> Result<WeightedError> {
    check_nodes(mesh, q_star)?;
    check_nodes(mesh, q_dagger)?;
    if traj_dagger.n_dof() != mesh.n_interior() {
        return Err(Error::MeshMismatch {
            expected: mesh.n_interior(),
            found: traj_dagger.n_dof(),
        });
    }
    if q_dagger.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveCoefficient(q_dagger.iter().cloned().fold(f64::INFINITY, f64::min)));
    }
    let n_steps = traj_dagger.n_steps();
    let tau = traj_dagger.tau();
    let w = CqWeights::new(traj_dagger.alpha(), tau, n_steps + 1)?;
    let b = w.weights();
    let scale = w.scale();
    let nd = traj_dagger.n_dof();
    let nv = mesh.dim().verts();

    let ratio: Vec<f64> = (0..mesh.n_elements())
        .map(|e| {
            let verts = mesh.element(e);
            let qd = verts.iter().map(|&k| q_dagger[k]).sum::<f64>() / nv as f64;
            let qs = verts.iter().map(|&k| q_star[k]).sum::<f64>() / nv as f64;
            let r = (qd - qs) / qd;
            r * r
        })
        .collect();
    let qd_mean: Vec<f64> =
        (0..mesh.n_elements()).map(|e| mesh.element(e).iter().map(|&k| q_dagger[k]).sum::<f64>() / nv as f64).collect();

    let u0 = traj_dagger.state(0);
    let mut deriv = vec![0.0; nd];
    let mut uf = vec![0.0; mesh.n_nodes()];
    let mut df = vec![0.0; mesh.n_nodes()];
    let mut value = 0.0;
    let mut min_density = f64::INFINITY;
    for n in 1..=n_steps {
        // ∂̄_τ^α (uⁿ − u⁰) = τ^{−α} Σ_{j=0}^{n−1} b_j (u^{n−j} − u⁰)
        deriv.iter_mut().for_each(|v| *v = 0.0);
        for (j, &bj) in b.iter().enumerate().take(n) {
            for ((dv, u), z) in deriv.iter_mut().zip(traj_dagger.state(n - j)).zip(u0) {
                *dv += bj * (u - z);
            }
        }
        for (&k, (u, dv)) in mesh.interior_nodes().iter().zip(traj_dagger.state(n).iter().zip(&deriv)) {
            uf[k] = *u;
            df[k] = scale * dv;
        }
        let t = traj_dagger.time(n);
        let mult = (n_steps - n + 1) as f64 * tau * tau;
        for e in 0..mesh.n_elements() {
            let verts = mesh.element(e);
            let geo = mesh.geometry(e);
            let mut grad = [0.0; 2];
            let (mut u_bar, mut d_bar, mut f_bar) = (0.0, 0.0, 0.0);
            for (a, &k) in verts.iter().enumerate() {
                grad[0] += uf[k] * geo.grads[a][0];
                grad[1] += uf[k] * geo.grads[a][1];
                u_bar += uf[k];
                d_bar += df[k];
                if let Some(f) = source {
                    f_bar += f.value(mesh.point(k), t);
                }
            }
            let inv = 1.0 / nv as f64;
            let density = qd_mean[e] * (grad[0] * grad[0] + grad[1] * grad[1]) + (f_bar * inv - d_bar * inv) * u_bar * inv;
            min_density = min_density.min(density);
            value += mult * geo.measure * ratio[e] * density;
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("weighted error"));
    }
    Ok(WeightedError { value, min_density })
}
