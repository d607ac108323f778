//! Uniform simplicial meshes of the unit interval and the unit square.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::floor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dim::One),
            2 => Ok(Dim::Two),
            _ => Err(Error::InvalidSize("dimension must be 1 or 2")),
        }
    }

    pub fn as_usize(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    /// Vertices per simplex.
    pub fn verts(self) -> usize {
        self.as_usize() + 1
    }
}

/// Per-element data that is constant on a P1 simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub measure: f64,
    /// Gradients of the local barycentric basis functions. Only the first
    /// `dim` components and `dim + 1` rows are meaningful.
    pub grads: [[f64; 2]; 3],
}

/// Uniform mesh with `m` subdivisions per axis.
///
/// Nodes are numbered lexicographically with `x` fastest. In two dimensions
/// each square cell is split along the diagonal joining its lower-left and
/// upper-right corners.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: Dim,
    m: usize,
    coords: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
    boundary: Vec<bool>,
    /// full node index -> interior index
    to_interior: Vec<Option<usize>>,
    /// interior index -> full node index
    interior: Vec<usize>,
}

impl Mesh {
    pub fn new(dim: Dim, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidSize("mesh needs at least 2 subdivisions"));
        }
        let h = 1.0 / m as f64;
        let mut coords = Vec::new();
        let mut elements = Vec::new();
        let mut boundary = Vec::new();
        match dim {
            Dim::One => {
                for i in 0..=m {
                    coords.push([i as f64 * h, 0.0]);
                    boundary.push(i == 0 || i == m);
                }
                for i in 0..m {
                    elements.push([i, i + 1, usize::MAX]);
                }
            }
            Dim::Two => {
                let idx = |i: usize, j: usize| j * (m + 1) + i;
                for j in 0..=m {
                    for i in 0..=m {
                        coords.push([i as f64 * h, j as f64 * h]);
                        boundary.push(i == 0 || j == 0 || i == m || j == m);
                    }
                }
                for j in 0..m {
                    for i in 0..m {
                        let a = idx(i, j);
                        let b = idx(i + 1, j);
                        let c = idx(i + 1, j + 1);
                        let d = idx(i, j + 1);
                        elements.push([a, b, c]);
                        elements.push([a, c, d]);
                    }
                }
            }
        }
        let mut to_interior = Vec::with_capacity(coords.len());
        let mut interior = Vec::new();
        for (k, &b) in boundary.iter().enumerate() {
            if b {
                to_interior.push(None);
            } else {
                to_interior.push(Some(interior.len()));
                interior.push(k);
            }
        }
        let geometry = elements
            .iter()
            .map(|e| element_geometry(dim, &coords, e))
            .collect();
        Ok(Self {
            dim,
            m,
            coords,
            elements,
            geometry,
            boundary,
            to_interior,
            interior,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn subdivisions(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Coordinates of node `k`; the second component is 0 in 1D.
    pub fn node(&self, k: usize) -> [f64; 2] {
        self.coords[k]
    }

    /// Coordinates as a slice of length `dim`.
    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k][..self.dim.as_usize()]
    }

    /// Vertex indices of element `e`.
    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim.verts()]
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn interior_index(&self, k: usize) -> Option<usize> {
        self.to_interior[k]
    }

    /// Extends an interior vector by zero to all nodes.
    pub fn extend_by_zero(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = alloc::vec![0.0; self.n_nodes()];
        for (&k, v) in self.interior.iter().zip(interior) {
            full[k] = *v;
        }
        full
    }

    /// Restricts a full nodal vector to the interior nodes.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&k| full[k]).collect()
    }

    /// Evaluates the P1 function with nodal values `full` at `x`.
    pub fn evaluate(&self, full: &[f64], x: &[f64]) -> f64 {
        let m = self.m;
        let mf = m as f64;
        let cell = |v: f64| -> (usize, f64) {
            let s = (v.clamp(0.0, 1.0)) * mf;
            let i = (floor(s) as usize).min(m - 1);
            (i, s - i as f64)
        };
        match self.dim {
            Dim::One => {
                let (i, s) = cell(x[0]);
                (1.0 - s) * full[i] + s * full[i + 1]
            }
            Dim::Two => {
                let (i, s) = cell(x[0]);
                let (j, t) = cell(x[1]);
                let idx = |i: usize, j: usize| j * (m + 1) + i;
                let a = full[idx(i, j)];
                let b = full[idx(i + 1, j)];
                let c = full[idx(i + 1, j + 1)];
                let d = full[idx(i, j + 1)];
                if s >= t {
                    (1.0 - s) * a + (s - t) * b + t * c
                } else {
                    (1.0 - t) * a + s * c + (t - s) * d
                }
            }
        }
    }
}

fn element_geometry(dim: Dim, coords: &[[f64; 2]], e: &[usize; 3]) -> ElementGeometry {
    match dim {
        Dim::One => {
            let len = coords[e[1]][0] - coords[e[0]][0];
            ElementGeometry {
                measure: len,
                grads: [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0, 0.0]],
            }
        }
        Dim::Two => {
            let [p0, p1, p2] = [coords[e[0]], coords[e[1]], coords[e[2]]];
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            // ∇λ_i = rot(p_{i+2} − p_{i+1}) / det
            let g = |a: [f64; 2], b: [f64; 2]| [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
            ElementGeometry {
                measure: 0.5 * det.abs(),
                grads: [g(p1, p2), g(p2, p0), g(p0, p1)],
            }
        }
    }
}
