//! Regularized output least-squares functional and its exact gradient.
//!
//! ```text
//!   J(q) = τ/2 Σ_n w_n ‖Uⁿ(q) − zⁿ‖² + γ/2 ‖∇q‖²
//! ```
//!
//! The gradient comes from the transpose of the linearized time stepper.
//! Writing the scheme as residuals
//! `Rⁿ = τ^{−α} M Σ_{j<n} b_j W^{n−j} + K(q)(U⁰ + Wⁿ) − Fⁿ = 0`, the adjoint
//! states solve the same CQ recursion backwards in time,
//!
//! ```text
//!   (τ^{−α} b₀ M + K(q)) Pⁿ = τ w_n M (Uⁿ − zⁿ) − τ^{−α} M Σ_{j=1}^{N−n} b_j P^{n+j},
//! ```
//!
//! and `∂J/∂q_k = −Σ_n (φ_k ∇Uⁿ, ∇Pⁿ) + γ (K₁ q)_k`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::CoefficientField;
use crate::forward::{time_weights, ForwardSolver, StateTrajectory};
use crate::sparse::{BandCholesky, CsrMatrix};
use crate::synthdata::ObservationData;

pub use crate::forward::MisfitRule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub misfit: f64,
    pub penalty: f64,
}

/// Nodal gradient on all mesh nodes, same layout as [`CoefficientField`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    values: Vec<f64>,
}

impl GradientField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Inner product in which the optimizer measures steepest descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMetric {
    /// Plain nodal coordinates.
    Euclidean,
    /// Full-node product `ℓ² (∇p, ∇q) + (p, q)` with length scale `ℓ`.
    Sobolev(f64),
}

/// Discrete objective over a fixed forward solver and data set.
#[derive(Debug, Clone)]
pub struct InverseProblem<'a> {
    solver: &'a ForwardSolver,
    obs: &'a ObservationData,
    gamma: f64,
    rule: MisfitRule,
    weights: Vec<f64>,
    riesz: Option<(BandCholesky, f64)>,
}

impl<'a> InverseProblem<'a> {
    pub fn new(solver: &'a ForwardSolver, obs: &'a ObservationData, gamma: f64, rule: MisfitRule) -> Result<Self> {
        if obs.n_dof() != solver.mesh().n_interior() || obs.n_steps() != solver.n_steps() {
            return Err(Error::DimensionMismatch {
                expected: solver.mesh().n_interior() * (solver.n_steps() + 1),
                found: obs.as_flat().len(),
            });
        }
        if !(gamma >= 0.0) {
            return Err(Error::InvalidParameter("regularization weight must be non-negative"));
        }
        let weights = time_weights(solver.tau(), solver.n_steps(), obs.t0(), rule);
        Ok(Self {
            solver,
            obs,
            gamma,
            rule,
            weights,
            riesz: None,
        })
    }

    pub fn with_metric(mut self, metric: GradientMetric) -> Result<Self> {
        self.riesz = match metric {
            GradientMetric::Euclidean => None,
            GradientMetric::Sobolev(length) => {
                if !(length > 0.0) {
                    return Err(Error::InvalidParameter("metric length scale must be positive"));
                }
                let ops = self.solver.operators();
                let a = ops.unit_stiffness_full.linear_combination(length * length, &ops.mass_full, 1.0)?;
                Some((BandCholesky::factor(&a)?, length))
            }
        };
        Ok(self)
    }

    pub fn metric(&self) -> GradientMetric {
        match &self.riesz {
            Some((_, l)) => GradientMetric::Sobolev(*l),
            None => GradientMetric::Euclidean,
        }
    }

    /// Representative of the gradient `g` in the chosen metric.
    pub fn riesz_map(&self, g: &[f64]) -> Vec<f64> {
        match &self.riesz {
            Some((chol, _)) => chol.solve(g),
            None => g.to_vec(),
        }
    }

    pub fn solver(&self) -> &ForwardSolver {
        self.solver
    }

    pub fn observations(&self) -> &ObservationData {
        self.obs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rule(&self) -> MisfitRule {
        self.rule
    }

    pub fn time_weights(&self) -> &[f64] {
        &self.weights
    }

    fn field(&self, q: &[f64]) -> Result<CoefficientField> {
        CoefficientField::new(self.solver.mesh(), q.to_vec())
    }

    /// `γ/2 qᵀ K₁ q` with the all-node unit stiffness.
    pub fn penalty(&self, q: &[f64]) -> f64 {
        0.5 * self.gamma * self.solver.operators().unit_stiffness_full.bilinear(q, q)
    }

    fn misfit(&self, traj: &StateTrajectory) -> f64 {
        let mass = &self.solver.operators().mass;
        let mut diff = vec![0.0; traj.n_dof()];
        let mut acc = 0.0;
        for (n, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for ((d, u), z) in diff.iter_mut().zip(traj.state(n)).zip(self.obs.level(n)) {
                *d = u - z;
            }
            acc += w * mass.bilinear(&diff, &diff);
        }
        0.5 * traj.tau() * acc
    }

    fn value_of(&self, q: &[f64], traj: &StateTrajectory) -> ObjectiveValue {
        let misfit = self.misfit(traj);
        let penalty = self.penalty(q);
        ObjectiveValue {
            total: misfit + penalty,
            misfit,
            penalty,
        }
    }

    pub fn evaluate(&self, q: &[f64]) -> Result<ObjectiveValue> {
        Ok(self.evaluate_with_state(q)?.0)
    }

    pub fn evaluate_with_state(&self, q: &[f64]) -> Result<(ObjectiveValue, StateTrajectory)> {
        let traj = self.solver.solve(&self.field(q)?)?;
        Ok((self.value_of(q, &traj), traj))
    }

    /// Adjoint states `P⁰..P^N` (with `P⁰ = 0`) for a trajectory computed
    /// with the same coefficient.
    pub fn solve_adjoint(&self, q: &[f64], traj: &StateTrajectory) -> Result<StateTrajectory> {
        let (_, chol) = self.solver.factor(&self.field(q)?)?;
        self.adjoint_factored(&chol, traj)
    }

    fn adjoint_factored(&self, chol: &BandCholesky, traj: &StateTrajectory) -> Result<StateTrajectory> {
        let mass: &CsrMatrix = &self.solver.operators().mass;
        let nd = traj.n_dof();
        let n_steps = traj.n_steps();
        let b = self.solver.weights().weights();
        let s = self.solver.weights().scale();
        let tau = traj.tau();
        let mut p = vec![0.0; (n_steps + 1) * nd];
        let mut hist = vec![0.0; nd];
        let mut mh = vec![0.0; nd];
        let mut res = vec![0.0; nd];
        let mut mres = vec![0.0; nd];
        for n in (1..=n_steps).rev() {
            hist.iter_mut().for_each(|v| *v = 0.0);
            for j in 1..=(n_steps - n) {
                let bj = b[j];
                let later = &p[(n + j) * nd..(n + j + 1) * nd];
                for (h, x) in hist.iter_mut().zip(later) {
                    *h += bj * x;
                }
            }
            mass.mul_vec_into(&hist, &mut mh);
            let w = self.weights[n];
            if w != 0.0 {
                for ((r, u), z) in res.iter_mut().zip(traj.state(n)).zip(self.obs.level(n)) {
                    *r = u - z;
                }
                mass.mul_vec_into(&res, &mut mres);
            } else {
                mres.iter_mut().for_each(|v| *v = 0.0);
            }
            let rhs = &mut p[n * nd..(n + 1) * nd];
            for i in 0..nd {
                rhs[i] = tau * w * mres[i] - s * mh[i];
            }
            chol.solve_in_place(rhs);
        }
        let adj = StateTrajectory::new(traj.alpha(), tau, nd, p)?;
        if !adj.is_finite() {
            return Err(Error::NonFinite("adjoint solve"));
        }
        Ok(adj)
    }

    /// Objective value and its gradient with respect to all nodal values of
    /// `q`. The descent direction is `−g`.
    pub fn gradient(&self, q: &[f64]) -> Result<(ObjectiveValue, GradientField)> {
        let field = self.field(q)?;
        let (k, chol) = self.solver.factor(&field)?;
        let traj = self.solver.solve_factored(&k, &chol)?;
        let value = self.value_of(q, &traj);
        let adj = self.adjoint_factored(&chol, &traj)?;

        let mesh = self.solver.mesh();
        let nv = mesh.dim().verts();
        let mut g = vec![0.0; mesh.n_nodes()];
        let mut uf = vec![0.0; mesh.n_nodes()];
        let mut pf = vec![0.0; mesh.n_nodes()];
        let mut per_element = vec![0.0; mesh.n_elements()];
        for n in 1..=traj.n_steps() {
            for (&k, (u, p)) in mesh.interior_nodes().iter().zip(traj.state(n).iter().zip(adj.state(n))) {
                uf[k] = *u;
                pf[k] = *p;
            }
            for (e, acc) in per_element.iter_mut().enumerate() {
                let geo = mesh.geometry(e);
                let verts = mesh.element(e);
                let (mut gu, mut gp) = ([0.0; 2], [0.0; 2]);
                for a in 0..nv {
                    for c in 0..2 {
                        gu[c] += uf[verts[a]] * geo.grads[a][c];
                        gp[c] += pf[verts[a]] * geo.grads[a][c];
                    }
                }
                *acc += gu[0] * gp[0] + gu[1] * gp[1];
            }
        }
        for (e, &acc) in per_element.iter().enumerate() {
            // ∫_T φ_k = |T| / (d + 1)
            let share = mesh.geometry(e).measure / nv as f64 * acc;
            for &k in mesh.element(e) {
                g[k] -= share;
            }
        }
        if self.gamma != 0.0 {
            let kq = self.solver.operators().unit_stiffness_full.mul_vec(q);
            g.iter_mut().zip(&kq).for_each(|(gi, k)| *gi += self.gamma * k);
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        Ok((value, GradientField { values: g }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{SourceMode, SourceSpec};
    use crate::mesh::{Dim, Mesh};
    use crate::synthdata::{ExampleId, ExampleSpec};
    use approx::assert_abs_diff_eq;

    fn setup(dim: Dim, m: usize, n: usize, t0: f64) -> (ForwardSolver, ObservationData, Vec<f64>) {
        let mesh = Mesh::new(dim, m).unwrap();
        let f = |x: &[f64], t: f64| x[0] * t;
        let solver = ForwardSolver::new(mesh.clone(), 0.6, n, 1.0, |x| x[0] * (1.0 - x[0]) * (1.0 + x[x.len() - 1]), SourceSpec::point(&f)).unwrap();
        let qt = CoefficientField::from_fn(&mesh, |x| 1.5 + 0.5 * (3.0 * x[0]).sin());
        let traj = solver.solve(&qt).unwrap();
        let obs = ObservationData::exact(&mesh, &traj, t0).unwrap();
        (solver, obs, qt.into_values())
    }

    #[test]
    fn exact_data_gives_zero_objective_and_gradient() {
        let (solver, obs, qt) = setup(Dim::One, 8, 10, 0.0);
        let prob = InverseProblem::new(&solver, &obs, 0.0, MisfitRule::Trapezoid).unwrap();
        let (v, g) = prob.gradient(&qt).unwrap();
        assert_eq!(v.total, 0.0);
        assert!(g.values().iter().all(|&x| x == 0.0));
        let adj = prob.solve_adjoint(&qt, &solver.solve(&CoefficientField::new(solver.mesh(), qt.clone()).unwrap()).unwrap()).unwrap();
        assert!(adj.as_flat().iter().all(|&x| x == 0.0));

        let gamma = 1e-3;
        let prob = InverseProblem::new(&solver, &obs, gamma, MisfitRule::Trapezoid).unwrap();
        let (v, g) = prob.gradient(&qt).unwrap();
        assert_eq!(v.misfit, 0.0);
        let kq = solver.operators().unit_stiffness_full.mul_vec(&qt);
        for (a, b) in g.values().iter().zip(&kq) {
            assert_eq!(*a, gamma * b);
        }
    }

    #[test]
    fn constant_coefficient_has_no_penalty() {
        let (solver, obs, _) = setup(Dim::Two, 4, 4, 0.5);
        let prob = InverseProblem::new(&solver, &obs, 1.0, MisfitRule::Trapezoid).unwrap();
        let q = vec![2.0; solver.mesh().n_nodes()];
        assert_abs_diff_eq!(prob.penalty(&q), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn two_step_single_unknown_matches_dense_transpose() {
        // M = 2 in 1D leaves a single interior node; with N = 2 the
        // linearized scheme is a 2x2 lower-triangular system L δW = −δK U.
        let mesh = Mesh::new(Dim::One, 2).unwrap();
        let solver = ForwardSolver::new(mesh.clone(), 0.5, 2, 1.0, |x| x[0] * (1.0 - x[0]), SourceSpec::zero()).unwrap();
        let q = vec![1.0, 1.3, 0.8];
        let traj = solver.solve(&CoefficientField::new(&mesh, q.clone()).unwrap()).unwrap();
        let z: Vec<f64> = traj.as_flat().iter().map(|v| v * 0.7 + 0.01).collect();
        let obs = ObservationData::from_levels(&mesh, 1.0, 0.0, z.clone()).unwrap();
        let prob = InverseProblem::new(&solver, &obs, 0.0, MisfitRule::Trapezoid).unwrap();
        let adj = prob.solve_adjoint(&q, &traj).unwrap();

        let m = solver.operators().mass.get(0, 0);
        let k = crate::fem::assemble_stiffness(&mesh, &CoefficientField::new(&mesh, q.clone()).unwrap()).unwrap().get(0, 0);
        let s = solver.weights().scale();
        let b = solver.weights().weights();
        let l = [[s * b[0] * m + k, 0.0], [s * b[1] * m, s * b[0] * m + k]];
        let tau = 0.5;
        let w = prob.time_weights();
        let rhs = [
            tau * w[1] * m * (traj.state(1)[0] - z[1]),
            tau * w[2] * m * (traj.state(2)[0] - z[2]),
        ];
        // Lᵀ P = rhs
        let p2 = rhs[1] / l[1][1];
        let p1 = (rhs[0] - l[1][0] * p2) / l[0][0];
        assert_abs_diff_eq!(adj.state(2)[0], p2, epsilon = 1e-14);
        assert_abs_diff_eq!(adj.state(1)[0], p1, epsilon = 1e-14);
    }

    #[test]
    fn terminal_window_only_drives_last_level() {
        let (solver, obs, qt) = setup(Dim::One, 6, 8, 1.0 - 1e-12);
        let _ = obs;
        let mesh = solver.mesh().clone();
        let traj = solver.solve(&CoefficientField::new(&mesh, qt.clone()).unwrap()).unwrap();
        let z: Vec<f64> = traj.as_flat().iter().map(|v| v + 0.1).collect();
        let obs = ObservationData::from_levels(&mesh, 1.0, 1.0 - 1e-12, z).unwrap();
        let prob = InverseProblem::new(&solver, &obs, 0.0, MisfitRule::Trapezoid).unwrap();
        assert_eq!(prob.time_weights().iter().filter(|&&w| w != 0.0).count(), 1);
        let adj = prob.solve_adjoint(&qt, &traj).unwrap();
        // P^N from the terminal residual alone; earlier levels inherit it
        // through the CQ coupling only
        let (_, chol) = solver.factor(&CoefficientField::new(&mesh, qt.clone()).unwrap()).unwrap();
        let r: Vec<f64> = vec![-0.1; traj.n_dof()];
        let mut pn = solver.operators().mass.mul_vec(&r);
        pn.iter_mut().for_each(|v| *v *= 0.5 * traj.tau());
        chol.solve_in_place(&mut pn);
        for (a, b) in adj.state(8).iter().zip(&pn) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    fn fd_check(dim: Dim, gamma: f64, seed: u64) -> f64 {
        let (solver, _, _) = setup(dim, 5, 8, 0.5);
        let mesh = solver.mesh().clone();
        let qd = CoefficientField::from_fn(&mesh, |x| 2.0 + 0.3 * (2.0 * x[0]).cos());
        let traj = solver.solve(&qd).unwrap();
        let obs = ObservationData::exact(&mesh, &traj, 0.5).unwrap();
        let prob = InverseProblem::new(&solver, &obs, gamma, MisfitRule::Trapezoid).unwrap();
        let h = |i: usize, salt: u64| (((i as u64 + 1) * 2654435761 + seed * 97 + salt) % 1000) as f64 / 1000.0;
        let q: Vec<f64> = (0..mesh.n_nodes()).map(|i| 1.0 + 2.0 * h(i, 1)).collect();
        let mut d: Vec<f64> = (0..mesh.n_nodes()).map(|i| h(i, 7) - 0.5).collect();
        let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        d.iter_mut().for_each(|v| *v /= dn);
        let (_, g) = prob.gradient(&q).unwrap();
        let gd: f64 = g.values().iter().zip(&d).map(|(a, b)| a * b).sum();
        let eps = 1e-5;
        let shift = |sgn: f64| -> Vec<f64> { q.iter().zip(&d).map(|(a, b)| a + sgn * eps * b).collect() };
        let fd = (prob.evaluate(&shift(1.0)).unwrap().total - prob.evaluate(&shift(-1.0)).unwrap().total) / (2.0 * eps);
        (gd - fd).abs() / gd.abs()
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..3 {
            for dim in [Dim::One, Dim::Two] {
                for gamma in [0.0, 1e-4] {
                    let rel = fd_check(dim, gamma, seed);
                    assert!(rel < 1e-6, "dim {dim:?} gamma {gamma} seed {seed}: {rel}");
                }
            }
        }
    }

    #[test]
    fn objective_decreases_along_negative_gradient() {
        let e = ExampleSpec::new(ExampleId::Smooth1d);
        let solver = e.forward_solver(10, 16, 0.5, SourceMode::PointValue).unwrap();
        let qd = CoefficientField::from_fn(solver.mesh(), |x| e.q_dagger(x));
        let obs = ObservationData::exact(solver.mesh(), &solver.solve(&qd).unwrap(), 0.5).unwrap();
        let prob = InverseProblem::new(&solver, &obs, 1e-8, MisfitRule::Trapezoid).unwrap();
        let q = vec![2.5; solver.mesh().n_nodes()];
        let (v0, g) = prob.gradient(&q).unwrap();
        let gn = g.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        let step = 1e-3 / gn;
        let q1: Vec<f64> = q.iter().zip(g.values()).map(|(a, b)| a - step * b).collect();
        assert!(prob.evaluate(&q1).unwrap().total < v0.total);
    }
}
