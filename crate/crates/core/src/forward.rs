//! Fully discrete subdiffusion solver: P1 Galerkin in space, backward-Euler
//! convolution quadrature in time.
//!
//! With `Wⁿ = Uⁿ − U⁰`, each step solves
//!
//! ```text
//!   (τ^{−α} b₀ M + K(q)) Wⁿ = Fⁿ − K(q) U⁰ − τ^{−α} M Σ_{j=1}^{n−1} b_j W^{n−j}
//! ```
//!
//! The system matrix does not depend on `n`, so it is factored once per
//! solve. The history sum is evaluated directly, which is `O(N²)` vector
//! updates per solve.

use alloc::vec;
use alloc::vec::Vec;

use crate::cq::CqWeights;
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, l2_project, load_vector, CoefficientField, FemOperators};
use crate::mesh::Mesh;
use crate::quadrature::gauss_unit;
use crate::sparse::{BandCholesky, CsrMatrix};
use crate::synthdata::ObservationData;

/// Space-time source term `f(x, t)`.
pub trait Source: Sync {
    fn value(&self, x: &[f64], t: f64) -> f64;
}

impl<F: Fn(&[f64], f64) -> f64 + Sync> Source for F {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self(x, t)
    }
}

pub type SpaceTimeFn<'a> = &'a dyn Source;

/// How the source enters step `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceMode {
    /// `f(t_n)`
    #[default]
    PointValue,
    /// `τ^{−1} ∫_{t_{n−1}}^{t_n} f(s) ds`, four-point Gauss per step.
    IntervalAverage,
}

#[derive(Clone, Copy, Default)]
pub struct SourceSpec<'a> {
    pub mode: SourceMode,
    /// `None` means `f ≡ 0`.
    pub f: Option<SpaceTimeFn<'a>>,
}

impl<'a> SourceSpec<'a> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn point(f: SpaceTimeFn<'a>) -> Self {
        Self {
            mode: SourceMode::PointValue,
            f: Some(f),
        }
    }

    pub fn averaged(f: SpaceTimeFn<'a>) -> Self {
        Self {
            mode: SourceMode::IntervalAverage,
            f: Some(f),
        }
    }
}

/// Interior nodal states `U⁰..U^N` on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    alpha: f64,
    tau: f64,
    n_dof: usize,
    data: Vec<f64>,
}

impl StateTrajectory {
    pub fn new(alpha: f64, tau: f64, n_dof: usize, data: Vec<f64>) -> Result<Self> {
        if n_dof == 0 || !data.len().is_multiple_of(n_dof) || data.len() < 2 * n_dof {
            return Err(Error::InvalidSize("trajectory data is not (N + 1) x n_dof"));
        }
        Ok(Self {
            alpha,
            tau,
            n_dof,
            data,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `N`, the number of time steps.
    pub fn n_steps(&self) -> usize {
        self.data.len() / self.n_dof - 1
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_dof..(n + 1) * self.n_dof]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_dof)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Forward solver with the coefficient-independent data precomputed:
/// mesh operators, CQ weights, `U⁰ = P_h u₀` and the load vectors.
#[derive(Debug, Clone)]
pub struct ForwardSolver {
    mesh: Mesh,
    ops: FemOperators,
    weights: CqWeights,
    t_final: f64,
    u0: Vec<f64>,
    /// Fⁿ for n = 1..=N at index n − 1; `None` if the source vanishes.
    loads: Option<Vec<Vec<f64>>>,
}

impl ForwardSolver {
    pub fn new(
        mesh: Mesh,
        alpha: f64,
        n_steps: usize,
        t_final: f64,
        u0: impl Fn(&[f64]) -> f64,
        source: SourceSpec<'_>,
    ) -> Result<Self> {
        let u0 = l2_project(&mesh, u0)?;
        Self::with_initial_state(mesh, alpha, n_steps, t_final, u0, source)
    }

    /// Same as [`new`](Self::new) with `U⁰` given as interior nodal values.
    pub fn with_initial_state(
        mesh: Mesh,
        alpha: f64,
        n_steps: usize,
        t_final: f64,
        u0: Vec<f64>,
        source: SourceSpec<'_>,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidSize("need at least one time step"));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter("final time must be positive"));
        }
        if u0.len() != mesh.n_interior() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_interior(),
                found: u0.len(),
            });
        }
        let tau = t_final / n_steps as f64;
        let weights = CqWeights::new(alpha, tau, n_steps + 1)?;
        let loads = source.f.map(|f| {
            (1..=n_steps)
                .map(|n| {
                    let tn = n as f64 * tau;
                    match source.mode {
                        SourceMode::PointValue => load_vector(&mesh, |x| f.value(x, tn)),
                        SourceMode::IntervalAverage => load_vector(&mesh, |x| {
                            gauss_unit(4)
                                .iter()
                                .map(|&(s, w)| w * f.value(x, tn - tau + s * tau))
                                .sum()
                        }),
                    }
                })
                .collect()
        });
        let ops = FemOperators::new(&mesh);
        Ok(Self {
            mesh,
            ops,
            weights,
            t_final,
            u0,
            loads,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn operators(&self) -> &FemOperators {
        &self.ops
    }

    pub fn weights(&self) -> &CqWeights {
        &self.weights
    }

    pub fn alpha(&self) -> f64 {
        self.weights.alpha()
    }

    pub fn tau(&self) -> f64 {
        self.weights.tau()
    }

    pub fn n_steps(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.u0
    }

    pub fn load(&self, n: usize) -> Option<&[f64]> {
        self.loads.as_ref().map(|l| l[n - 1].as_slice())
    }

    pub fn has_source(&self) -> bool {
        self.loads.is_some()
    }

    fn check_coefficient(&self, q: &CoefficientField) -> Result<()> {
        if q.len() != self.mesh.n_nodes() {
            return Err(Error::MeshMismatch {
                expected: self.mesh.n_nodes(),
                found: q.len(),
            });
        }
        let qmin = q.min();
        if !(qmin > 0.0) {
            return Err(Error::NonPositiveCoefficient(qmin));
        }
        Ok(())
    }

    /// Interior stiffness `K(q)` and the factored step matrix
    /// `τ^{−α} b₀ M + K(q)`.
    pub fn factor(&self, q: &CoefficientField) -> Result<(CsrMatrix, BandCholesky)> {
        self.check_coefficient(q)?;
        let k = assemble_stiffness(&self.mesh, q)?;
        let a = k.linear_combination(1.0, &self.ops.mass, self.weights.scale() * self.weights.weights()[0])?;
        let chol = BandCholesky::factor(&a)?;
        Ok((k, chol))
    }

    pub fn solve(&self, q: &CoefficientField) -> Result<StateTrajectory> {
        let (k, chol) = self.factor(q)?;
        self.solve_factored(&k, &chol)
    }

    /// Time stepping with a stiffness matrix and step factorization from
    /// [`factor`](Self::factor).
    pub fn solve_factored(&self, k: &CsrMatrix, chol: &BandCholesky) -> Result<StateTrajectory> {
        let n_dof = self.mesh.n_interior();
        let n_steps = self.n_steps();
        let b = self.weights.weights();
        let s = self.weights.scale();

        let ku0 = k.mul_vec(&self.u0);
        // Holds Wⁿ = Uⁿ − U⁰ until the end.
        let mut data = vec![0.0; (n_steps + 1) * n_dof];
        let mut hist = vec![0.0; n_dof];
        let mut mh = vec![0.0; n_dof];
        for n in 1..=n_steps {
            hist.iter_mut().for_each(|v| *v = 0.0);
            for j in 1..n {
                let w = &data[(n - j) * n_dof..(n - j + 1) * n_dof];
                let bj = b[j];
                for (h, x) in hist.iter_mut().zip(w) {
                    *h += bj * x;
                }
            }
            self.ops.mass.mul_vec_into(&hist, &mut mh);
            let rhs = &mut data[n * n_dof..(n + 1) * n_dof];
            for i in 0..n_dof {
                rhs[i] = -ku0[i] - s * mh[i];
            }
            if let Some(f) = self.load(n) {
                rhs.iter_mut().zip(f).for_each(|(r, f)| *r += f);
            }
            chol.solve_in_place(rhs);
        }
        for level in data.chunks_exact_mut(n_dof) {
            level.iter_mut().zip(&self.u0).for_each(|(w, u)| *w += u);
        }
        let traj = StateTrajectory::new(self.alpha(), self.tau(), n_dof, data)?;
        if !traj.is_finite() {
            return Err(Error::NonFinite("forward solve"));
        }
        Ok(traj)
    }
}

/// One-shot convenience wrapper around [`ForwardSolver`].
pub fn solve_forward(
    mesh: &Mesh,
    q: &CoefficientField,
    u0: impl Fn(&[f64]) -> f64,
    source: SourceSpec<'_>,
    alpha: f64,
    n_steps: usize,
    t_final: f64,
) -> Result<StateTrajectory> {
    ForwardSolver::new(mesh.clone(), alpha, n_steps, t_final, u0, source)?.solve(q)
}

/// Time quadrature used in the data misfit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MisfitRule {
    /// Unit weights on every observed level `n ≥ 1`.
    Rectangle,
    /// Trapezoid rule over the observed window: half weights at the window
    /// endpoints.
    #[default]
    Trapezoid,
}

/// First level `n` with `t_n ≥ t0`.
pub fn window_start(tau: f64, n_steps: usize, t0: f64) -> usize {
    let n = libm::ceil(t0 / tau - 1e-9);
    (n.max(0.0) as usize).min(n_steps)
}

/// Per-level weights `w_n`, zero outside the observation window, such that
/// the misfit is `τ/2 Σ_n w_n ‖Uⁿ − zⁿ‖²`.
pub fn time_weights(tau: f64, n_steps: usize, t0: f64, rule: MisfitRule) -> Vec<f64> {
    let start = window_start(tau, n_steps, t0);
    let mut w = vec![0.0; n_steps + 1];
    match rule {
        MisfitRule::Rectangle => {
            for wn in w.iter_mut().skip(start.max(1)) {
                *wn = 1.0;
            }
        }
        MisfitRule::Trapezoid => {
            for wn in w.iter_mut().skip(start) {
                *wn = 1.0;
            }
            w[start] = 0.5;
            w[n_steps] = 0.5;
        }
    }
    w
}

/// `τ/2 Σ_n w_n ‖Uⁿ − zⁿ‖²_{L²}` with mass-matrix norms.
pub fn trajectory_misfit(
    traj: &StateTrajectory,
    obs: &ObservationData,
    rule: MisfitRule,
    mass: &CsrMatrix,
) -> Result<f64> {
    if obs.n_steps() != traj.n_steps() || obs.n_dof() != traj.n_dof() || mass.n() != traj.n_dof() {
        return Err(Error::DimensionMismatch {
            expected: traj.n_steps() * traj.n_dof(),
            found: obs.n_steps() * obs.n_dof(),
        });
    }
    let w = time_weights(traj.tau(), traj.n_steps(), obs.t0(), rule);
    let mut diff = vec![0.0; traj.n_dof()];
    let mut total = 0.0;
    for (n, &wn) in w.iter().enumerate() {
        if wn == 0.0 {
            continue;
        }
        for ((d, u), z) in diff.iter_mut().zip(traj.state(n)).zip(obs.level(n)) {
            *d = u - z;
        }
        total += wn * mass.bilinear(&diff, &diff);
    }
    Ok(0.5 * traj.tau() * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Dim;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = Mesh::new(Dim::Two, 5).unwrap();
        let q = CoefficientField::constant(&mesh, 1.3);
        let traj = solve_forward(&mesh, &q, |_| 0.0, SourceSpec::zero(), 0.5, 8, 1.0).unwrap();
        assert_eq!(traj.n_steps(), 8);
        assert!(traj.as_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_state_is_projection() {
        let mesh = Mesh::new(Dim::One, 12).unwrap();
        let q = CoefficientField::constant(&mesh, 1.0);
        let u0 = |x: &[f64]| x[0] * (1.0 - x[0]);
        let traj = solve_forward(&mesh, &q, u0, SourceSpec::zero(), 0.5, 4, 1.0).unwrap();
        let p = l2_project(&mesh, u0).unwrap();
        assert_eq!(traj.state(0), p.as_slice());
    }

    #[test]
    fn rejects_nonpositive_coefficient() {
        let mesh = Mesh::new(Dim::One, 4).unwrap();
        let mut v = vec![1.0; 5];
        v[2] = 0.0;
        let q = CoefficientField::new(&mesh, v).unwrap();
        let err = solve_forward(&mesh, &q, |_| 1.0, SourceSpec::zero(), 0.5, 4, 1.0).unwrap_err();
        assert_eq!(err, Error::NonPositiveCoefficient(0.0));
    }

    #[test]
    fn unit_order_matches_backward_euler_heat_solver() {
        let mesh = Mesh::new(Dim::One, 16).unwrap();
        let q = CoefficientField::from_fn(&mesh, |x| 1.0 + x[0]);
        let f = |x: &[f64], t: f64| (PI * x[0]).sin() * (1.0 + t);
        let n_steps = 20;
        let tau = 1.0 / n_steps as f64;
        let u0 = |x: &[f64]| x[0] * (1.0 - x[0]);
        let traj = solve_forward(&mesh, &q, u0, SourceSpec::point(&f), 1.0, n_steps, 1.0).unwrap();

        // (M/τ + K) Uⁿ = M U^{n−1}/τ + Fⁿ, dense Gaussian elimination
        let m = crate::fem::assemble_mass(&mesh).to_dense();
        let k = assemble_stiffness(&mesh, &q).unwrap().to_dense();
        let nd = m.len();
        let mut u = l2_project(&mesh, u0).unwrap();
        for n in 1..=n_steps {
            let t = n as f64 * tau;
            let load = load_vector(&mesh, |x| f(x, t));
            let mut a: Vec<Vec<f64>> = (0..nd)
                .map(|i| (0..nd).map(|j| m[i][j] / tau + k[i][j]).collect())
                .collect();
            let mut rhs: Vec<f64> = (0..nd)
                .map(|i| (0..nd).map(|j| m[i][j] * u[j]).sum::<f64>() / tau + load[i])
                .collect();
            for c in 0..nd {
                for r in c + 1..nd {
                    let l = a[r][c] / a[c][c];
                    for cc in c..nd {
                        a[r][cc] -= l * a[c][cc];
                    }
                    rhs[r] -= l * rhs[c];
                }
            }
            for r in (0..nd).rev() {
                let s: f64 = (r + 1..nd).map(|c| a[r][c] * rhs[c]).sum();
                rhs[r] = (rhs[r] - s) / a[r][r];
            }
            u = rhs;
            for (x, y) in traj.state(n).iter().zip(&u) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn scheme_residual_vanishes() {
        // τ^{−α} M Σ b_j (U^{n−j} − U⁰) + K Uⁿ = Fⁿ
        let mesh = Mesh::new(Dim::Two, 6).unwrap();
        let q = CoefficientField::from_fn(&mesh, |x| 2.0 + x[0] - x[1]);
        let f = |x: &[f64], t: f64| x[0] * x[1] * t;
        let solver = ForwardSolver::new(mesh.clone(), 0.4, 10, 1.0, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), SourceSpec::averaged(&f)).unwrap();
        let traj = solver.solve(&q).unwrap();
        let k = assemble_stiffness(&mesh, &q).unwrap();
        let w = solver.weights();
        for n in 1..=10 {
            let nd = traj.n_dof();
            let mut acc = vec![0.0; nd];
            for j in 0..=n {
                for i in 0..nd {
                    acc[i] += w.weights()[j] * (traj.state(n - j)[i] - traj.state(0)[i]);
                }
            }
            let macc = solver.operators().mass.mul_vec(&acc);
            let ku = k.mul_vec(traj.state(n));
            let load = solver.load(n).unwrap();
            for i in 0..nd {
                let r = w.scale() * macc[i] + ku[i] - load[i];
                assert!(r.abs() < 1e-12, "residual {r}");
            }
        }
    }

    #[test]
    fn time_weights_follow_window() {
        let w = time_weights(0.25, 4, 0.0, MisfitRule::Trapezoid);
        assert_eq!(w, vec![0.5, 1.0, 1.0, 1.0, 0.5]);
        let w = time_weights(0.25, 4, 0.5, MisfitRule::Trapezoid);
        assert_eq!(w, vec![0.0, 0.0, 0.5, 1.0, 0.5]);
        let w = time_weights(0.25, 4, 0.0, MisfitRule::Rectangle);
        assert_eq!(w, vec![0.0, 1.0, 1.0, 1.0, 1.0]);
        let w = time_weights(0.25, 4, 1.0, MisfitRule::Trapezoid);
        assert_eq!(w, vec![0.0, 0.0, 0.0, 0.0, 0.5]);
        assert_eq!(window_start(1.0 / 1024.0, 1024, 0.75), 768);
    }
}
