//! P1 finite element assembly: mass and coefficient-weighted stiffness
//! matrices, load vectors, L² projection and nodal interpolation.
//!
//! State vectors live on interior nodes (homogeneous Dirichlet data).
//! Coefficient vectors live on all nodes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::{Dim, Mesh};
use crate::quadrature::{gauss_unit, TRI3};
use crate::sparse::{BandCholesky, CsrMatrix};

/// Nodal values of a P1 coefficient on every mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::MeshMismatch {
                expected: mesh.n_nodes(),
                found: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.n_nodes()],
        }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            values: interpolate_nodal(mesh, f),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Coefficient-independent operators of a mesh.
#[derive(Debug, Clone)]
pub struct FemOperators {
    /// Mass matrix on interior nodes.
    pub mass: CsrMatrix,
    /// Mass matrix on all nodes.
    pub mass_full: CsrMatrix,
    /// Stiffness with `q ≡ 1` on all nodes; `qᵀ K₁ q = ‖∇q‖²`.
    pub unit_stiffness_full: CsrMatrix,
}

impl FemOperators {
    pub fn new(mesh: &Mesh) -> Self {
        let ones = vec![1.0; mesh.n_nodes()];
        Self {
            mass: assemble_mass(mesh),
            mass_full: assemble(mesh, false, |e, a, b| local_mass(mesh, e, a, b)),
            unit_stiffness_full: assemble(mesh, false, |e, a, b| {
                local_stiffness(mesh, &ones, e, a, b)
            }),
        }
    }
}

fn local_mass(mesh: &Mesh, e: usize, a: usize, b: usize) -> f64 {
    let d = mesh.dim().as_usize() as f64;
    let m = mesh.geometry(e).measure / ((d + 1.0) * (d + 2.0));
    if a == b {
        2.0 * m
    } else {
        m
    }
}

fn local_stiffness(mesh: &Mesh, q: &[f64], e: usize, a: usize, b: usize) -> f64 {
    let g = mesh.geometry(e);
    let verts = mesh.element(e);
    let qbar = verts.iter().map(|&k| q[k]).sum::<f64>() / verts.len() as f64;
    let (ga, gb) = (g.grads[a], g.grads[b]);
    qbar * g.measure * (ga[0] * gb[0] + ga[1] * gb[1])
}

/// Scatters element contributions `local(e, a, b)` over interior nodes
/// (`interior_only`) or all nodes.
fn assemble(mesh: &Mesh, interior_only: bool, local: impl Fn(usize, usize, usize) -> f64) -> CsrMatrix {
    let nv = mesh.dim().verts();
    let map = |k: usize| {
        if interior_only {
            mesh.interior_index(k)
        } else {
            Some(k)
        }
    };
    let n = if interior_only {
        mesh.n_interior()
    } else {
        mesh.n_nodes()
    };
    let mut triplets = Vec::with_capacity(mesh.n_elements() * nv * nv);
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        for a in 0..nv {
            let Some(i) = map(verts[a]) else { continue };
            for b in 0..nv {
                let Some(j) = map(verts[b]) else { continue };
                triplets.push((i, j, local(e, a, b)));
            }
        }
    }
    CsrMatrix::from_triplets(n, triplets)
}

/// `(φ_i, φ_j)` over interior basis functions, integrated exactly.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    assemble(mesh, true, |e, a, b| local_mass(mesh, e, a, b))
}

fn check_coefficient(mesh: &Mesh, q: &CoefficientField) -> Result<()> {
    if q.len() != mesh.n_nodes() {
        return Err(Error::MeshMismatch {
            expected: mesh.n_nodes(),
            found: q.len(),
        });
    }
    Ok(())
}

/// `(q ∇φ_i, ∇φ_j)` over interior basis functions. Gradients are constant on
/// each element and `q` is P1, so the element mean of `q` makes the integral
/// exact.
pub fn assemble_stiffness(mesh: &Mesh, q: &CoefficientField) -> Result<CsrMatrix> {
    check_coefficient(mesh, q)?;
    Ok(assemble(mesh, true, |e, a, b| {
        local_stiffness(mesh, q.values(), e, a, b)
    }))
}

/// Same as [`assemble_stiffness`] but over all nodes.
pub fn assemble_stiffness_full(mesh: &Mesh, q: &CoefficientField) -> Result<CsrMatrix> {
    check_coefficient(mesh, q)?;
    Ok(assemble(mesh, false, |e, a, b| {
        local_stiffness(mesh, q.values(), e, a, b)
    }))
}

/// Calls `visit(element, weight, x, λ)` for each quadrature point of a rule
/// exact for quadratics: two-point Gauss on segments, three-point on
/// triangles. `weight` includes the element measure.
pub(crate) fn for_each_quad_point(mesh: &Mesh, mut visit: impl FnMut(usize, f64, &[f64], &[f64])) {
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        let meas = mesh.geometry(e).measure;
        match mesh.dim() {
            Dim::One => {
                let (x0, x1) = (mesh.node(verts[0])[0], mesh.node(verts[1])[0]);
                for &(s, w) in gauss_unit(2) {
                    let x = [x0 + s * (x1 - x0)];
                    visit(e, w * meas, &x, &[1.0 - s, s]);
                }
            }
            Dim::Two => {
                let p: [[f64; 2]; 3] = [mesh.node(verts[0]), mesh.node(verts[1]), mesh.node(verts[2])];
                for (l, w) in TRI3.iter() {
                    let x = [
                        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                    ];
                    visit(e, w * meas, &x, l);
                }
            }
        }
    }
}

/// `(f, φ_i)` for interior basis functions.
pub fn load_vector(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_interior()];
    for_each_quad_point(mesh, |e, w, x, lam| {
        let fx = f(x);
        for (a, &k) in mesh.element(e).iter().enumerate() {
            if let Some(i) = mesh.interior_index(k) {
                load[i] += w * fx * lam[a];
            }
        }
    });
    load
}

/// L² projection onto the interior P1 space; returns interior nodal values.
pub fn l2_project(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
    let chol = BandCholesky::factor(&assemble_mass(mesh))?;
    Ok(chol.solve(&load_vector(mesh, f)))
}

/// Nodal interpolation on all nodes.
pub fn interpolate_nodal(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..mesh.n_nodes()).map(|k| f(mesh.point(k))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;

    fn hat(mesh: &Mesh, k: usize) -> impl Fn(&[f64]) -> f64 + '_ {
        let mut full = vec![0.0; mesh.n_nodes()];
        full[k] = 1.0;
        move |x: &[f64]| mesh.evaluate(&full, x)
    }

    #[test]
    fn mass_hand_values() {
        let mesh = Mesh::new(Dim::One, 2).unwrap();
        let m = assemble_mass(&mesh);
        assert_eq!(m.n(), 1);
        assert_abs_diff_eq!(m.get(0, 0), 1.0 / 3.0, epsilon = 1e-15);
        for dim in [Dim::One, Dim::Two] {
            let mesh = Mesh::new(dim, 5).unwrap();
            let ops = FemOperators::new(&mesh);
            let total: f64 = (0..mesh.n_nodes()).map(|i| ops.mass_full.row(i).1.iter().sum::<f64>()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
            assert_eq!(ops.mass.symmetry_defect(), 0.0);
        }
    }

    #[test]
    fn stiffness_hand_values_and_scaling() {
        let mesh = Mesh::new(Dim::One, 2).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::constant(&mesh, 1.0)).unwrap();
        assert_abs_diff_eq!(k.get(0, 0), 4.0, epsilon = 1e-14);

        let mesh = Mesh::new(Dim::Two, 4).unwrap();
        let k1 = assemble_stiffness(&mesh, &CoefficientField::constant(&mesh, 1.0)).unwrap();
        let k3 = assemble_stiffness(&mesh, &CoefficientField::constant(&mesh, 3.0)).unwrap();
        let scaled = k1.linear_combination(3.0, &k1, 0.0).unwrap();
        for i in 0..k1.n() {
            for j in 0..k1.n() {
                assert_abs_diff_eq!(k3.get(i, j), scaled.get(i, j), epsilon = 1e-13);
            }
        }
        // 5-point Laplacian for this triangulation
        assert_abs_diff_eq!(k1.get(4, 4), 4.0, epsilon = 1e-13);
    }

    #[test]
    fn unit_stiffness_restricts_to_interior_stiffness() {
        let mesh = Mesh::new(Dim::Two, 5).unwrap();
        let ops = FemOperators::new(&mesh);
        let k = assemble_stiffness(&mesh, &CoefficientField::constant(&mesh, 1.0)).unwrap();
        for (i, &ki) in mesh.interior_nodes().iter().enumerate() {
            for (j, &kj) in mesh.interior_nodes().iter().enumerate() {
                assert_eq!(k.get(i, j), ops.unit_stiffness_full.get(ki, kj));
            }
        }
    }

    #[test]
    fn stiffness_is_monotone_in_coefficient() {
        let mesh = Mesh::new(Dim::Two, 6).unwrap();
        let q1 = CoefficientField::from_fn(&mesh, |x| 1.0 + x[0] * x[1]);
        let q2 = CoefficientField::from_fn(&mesh, |x| 1.5 + x[0] * x[1] + 0.3 * (5.0 * x[0]).sin().abs());
        let k1 = assemble_stiffness(&mesh, &q1).unwrap();
        let k2 = assemble_stiffness(&mesh, &q2).unwrap();
        for s in 0..10 {
            let v: Vec<f64> = (0..k1.n()).map(|i| ((i * 7 + s * 13) as f64 * 0.71).sin()).collect();
            assert!(k1.bilinear(&v, &v) <= k2.bilinear(&v, &v));
        }
    }

    #[test]
    fn stiffness_rejects_foreign_coefficient() {
        let mesh = Mesh::new(Dim::One, 4).unwrap();
        let other = Mesh::new(Dim::One, 5).unwrap();
        let q = CoefficientField::constant(&other, 1.0);
        assert!(matches!(assemble_stiffness(&mesh, &q), Err(Error::MeshMismatch { .. })));
        assert!(CoefficientField::new(&mesh, vec![1.0; 3]).is_err());
    }

    #[test]
    fn projection_reproduces_hat_functions() {
        for dim in [Dim::One, Dim::Two] {
            let mesh = Mesh::new(dim, 5).unwrap();
            let k = mesh.interior_nodes()[mesh.n_interior() / 2];
            let p = l2_project(&mesh, hat(&mesh, k)).unwrap();
            let target = mesh.interior_index(k).unwrap();
            for (i, v) in p.iter().enumerate() {
                let e = if i == target { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
            }
            let z = l2_project(&mesh, |_| 0.0).unwrap();
            assert!(z.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn projection_error_is_second_order() {
        let err = |m: usize| {
            let mesh = Mesh::new(Dim::One, m).unwrap();
            let p = l2_project(&mesh, |x| (PI * x[0]).sin()).unwrap();
            p.iter()
                .zip(mesh.interior_nodes())
                .map(|(v, &k)| (v - (PI * mesh.node(k)[0]).sin()).abs())
                .fold(0.0f64, f64::max)
        };
        let (e1, e2) = (err(50), err(200));
        let rate = (e1 / e2).ln() / 4f64.ln();
        assert!(rate > 1.8, "rate {rate}");
        assert!(e2 <= 1.0 * (1.0 / 200f64).powi(2));
    }

    #[test]
    fn interpolation_examples() {
        let mesh = Mesh::new(Dim::One, 9).unwrap();
        let v = interpolate_nodal(&mesh, |x| 3.0 - 2.0 * x[0]);
        for k in 0..mesh.n_nodes() {
            assert_abs_diff_eq!(v[k], 3.0 - 2.0 * mesh.node(k)[0], epsilon = 1e-15);
        }
        assert!(interpolate_nodal(&mesh, |_| 2.0).iter().all(|&v| v == 2.0));
    }
}
