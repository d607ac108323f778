//! Projected Polak–Ribière+ nonlinear conjugate gradient over nodal box
//! constraints `c₀ ≤ q ≤ c₁`.
//!
//! Each line-search trial point is clamped to the box before it is tested,
//! so every objective value in the history belongs to a feasible iterate and
//! the history is non-increasing by construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{InverseProblem, ObjectiveValue};
use crate::error::{Error, Result};
use crate::math::{dot, norm2};

/// Anything that can be minimized by [`minimize`].
pub trait Objective {
    fn evaluate(&self, q: &[f64]) -> Result<ObjectiveValue>;
    fn evaluate_with_gradient(&self, q: &[f64]) -> Result<(ObjectiveValue, Vec<f64>)>;

    /// Maps a gradient to the search metric. Defaults to the Euclidean
    /// nodal inner product.
    fn precondition(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(g.to_vec())
    }
}

impl Objective for InverseProblem<'_> {
    fn evaluate(&self, q: &[f64]) -> Result<ObjectiveValue> {
        InverseProblem::evaluate(self, q)
    }

    fn evaluate_with_gradient(&self, q: &[f64]) -> Result<(ObjectiveValue, Vec<f64>)> {
        let (v, g) = self.gradient(q)?;
        Ok((v, g.into_values()))
    }

    fn precondition(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(self.riesz_map(g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgControls {
    pub max_iters: usize,
    /// Stop when the projected gradient norm falls below this fraction of
    /// its initial value.
    pub grad_tol: f64,
    /// Stop when `‖q_{k+1} − q_k‖ ≤ step_tol ‖q_k‖`.
    pub step_tol: f64,
    pub restart_every: usize,
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Largest nodal change of the first trial step of a (re)started
    /// direction.
    pub initial_step: f64,
    /// Largest multiple of the initial trial step the interpolated step
    /// may take.
    pub max_expand: f64,
    pub max_backtracks: usize,
    /// Gradient evaluations per line search before falling back to
    /// backtracking.
    pub line_search_iters: usize,
    /// Accept once `|∇J(q + s d)ᵀd| ≤ curvature · |∇J(q)ᵀd|`.
    pub curvature: f64,
}

impl Default for CgControls {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            restart_every: 20,
            shrink: 0.5,
            armijo: 1e-4,
            initial_step: 1.0,
            max_expand: 4.0,
            max_backtracks: 50,
            line_search_iters: 4,
            curvature: 0.1,
        }
    }
}

impl CgControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0 && self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidParameter("tolerances must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter("shrink factor must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0) || !(self.max_expand >= 1.0) {
            return Err(Error::InvalidParameter("initial step must be positive"));
        }
        if self.restart_every == 0 {
            return Err(Error::InvalidParameter("restart period must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The projected gradient vanished at the starting point.
    Stationary,
    GradTol,
    StepTol,
    MaxIters,
    /// The line search could not decrease the objective even along the
    /// projected steepest-descent direction.
    NoProgress,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Stationary => "stationary",
            Termination::GradTol => "grad_tol",
            Termination::StepTol => "step_tol",
            Termination::MaxIters => "max_iters",
            Termination::NoProgress => "no_progress",
        }
    }
}

impl core::fmt::Display for Termination {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub objective: f64,
    pub misfit: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    /// Euclidean length of the accepted update (0 at iteration 0).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub q_star: Vec<f64>,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub final_value: ObjectiveValue,
}

pub fn project_box(q: &[f64], c0: f64, c1: f64) -> Result<Vec<f64>> {
    check_bounds(c0, c1)?;
    Ok(q.iter().map(|v| v.clamp(c0, c1)).collect())
}

fn check_bounds(c0: f64, c1: f64) -> Result<()> {
    if !(c0 < c1) || !c0.is_finite() || !c1.is_finite() {
        return Err(Error::InvalidBounds(c0, c1));
    }
    Ok(())
}

/// Gradient with the components that would push an active bound outwards
/// removed.
fn projected_gradient(q: &[f64], g: &[f64], c0: f64, c1: f64) -> Vec<f64> {
    q.iter()
        .zip(g)
        .map(|(&qi, &gi)| if (qi <= c0 && gi > 0.0) || (qi >= c1 && gi < 0.0) { 0.0 } else { gi })
        .collect()
}

/// Zeroes the components of a direction that leave the box at active nodes.
fn mask_outward(d: &mut [f64], q: &[f64], c0: f64, c1: f64) {
    for (di, &qi) in d.iter_mut().zip(q) {
        if (qi <= c0 && *di < 0.0) || (qi >= c1 && *di > 0.0) {
            *di = 0.0;
        }
    }
}

/// Preconditioned projected gradient `z` such that `−z` points into the box.
fn steepest(obj: &dyn Objective, q: &[f64], pg: &[f64], c0: f64, c1: f64) -> Result<Vec<f64>> {
    let mut z = obj.precondition(pg)?;
    z.iter_mut().for_each(|v| *v = -*v);
    mask_outward(&mut z, q, c0, c1);
    z.iter_mut().for_each(|v| *v = -*v);
    Ok(z)
}

struct Trial {
    q: Vec<f64>,
    value: ObjectiveValue,
    grad: Option<Vec<f64>>,
    step: f64,
}

pub fn minimize(
    obj: &dyn Objective,
    q0: &[f64],
    c0: f64,
    c1: f64,
    controls: &CgControls,
    mut log: Option<&mut dyn FnMut(&IterationLog)>,
) -> Result<InversionResult> {
    controls.validate()?;
    check_bounds(c0, c1)?;
    if q0.iter().any(|v| !(*v >= c0 && *v <= c1)) {
        return Err(Error::InvalidParameter("initial coefficient outside the box"));
    }
    let mut q = q0.to_vec();
    let (mut value, mut g) = obj.evaluate_with_gradient(&q)?;
    let mut history = vec![value.total];
    let mut pg = projected_gradient(&q, &g, c0, c1);
    let pg0 = norm2(&pg);
    if let Some(f) = log.as_deref_mut() {
        f(&IterationLog {
            iteration: 0,
            objective: value.total,
            misfit: value.misfit,
            penalty: value.penalty,
            grad_norm: pg0,
            step: 0.0,
        });
    }
    let finish = |q, history, iterations, termination, final_value| InversionResult {
        q_star: q,
        history,
        iterations,
        termination,
        final_value,
    };
    if pg0 == 0.0 {
        return Ok(finish(q, history, 0, Termination::Stationary, value));
    }

    let mut z = steepest(obj, &q, &pg, c0, c1)?;
    let mut d: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut restarted = true;
    let mut prev: Option<(f64, f64)> = None; // (step, gᵀd) of the last accepted step

    for it in 1..=controls.max_iters {
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            d = z.iter().map(|v| -v).collect();
            restarted = true;
            gd = dot(&g, &d);
            if !(gd < 0.0) {
                return Err(Error::Stalled);
            }
        }
        let trial = loop {
            let s0 = match prev {
                Some((s, gd_prev)) if !restarted => s * gd_prev / gd,
                _ => controls.initial_step / d.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            };
            match line_search(obj, &q, value.total, &g, &d, s0, c0, c1, controls)? {
                Some(t) => break Some(t),
                None if !restarted => {
                    d = z.iter().map(|v| -v).collect();
                    restarted = true;
                    gd = dot(&g, &d);
                }
                None => break None,
            }
        };
        let Some(trial) = trial else {
            return Ok(finish(q, history, it - 1, Termination::NoProgress, value));
        };

        let (new_value, new_g) = match trial.grad {
            Some(g) => (trial.value, g),
            None => obj.evaluate_with_gradient(&trial.q)?,
        };
        let dq: Vec<f64> = trial.q.iter().zip(&q).map(|(a, b)| a - b).collect();
        let step_len = norm2(&dq);
        let q_len = norm2(&q);
        let new_pg = projected_gradient(&trial.q, &new_g, c0, c1);
        let pg_norm = norm2(&new_pg);
        history.push(new_value.total);
        if let Some(f) = log.as_deref_mut() {
            f(&IterationLog {
                iteration: it,
                objective: new_value.total,
                misfit: new_value.misfit,
                penalty: new_value.penalty,
                grad_norm: pg_norm,
                step: step_len,
            });
        }
        if pg_norm <= controls.grad_tol * pg0 {
            return Ok(finish(trial.q, history, it, Termination::GradTol, new_value));
        }
        if step_len <= controls.step_tol * q_len {
            return Ok(finish(trial.q, history, it, Termination::StepTol, new_value));
        }

        // PR+ in the metric of the objective
        let new_z = steepest(obj, &trial.q, &new_pg, c0, c1)?;
        let denom = dot(&z, &pg);
        let beta = if it % controls.restart_every == 0 || !(denom > 0.0) {
            0.0
        } else {
            let num: f64 = new_z.iter().zip(new_pg.iter().zip(&pg)).map(|(zi, (a, b))| zi * (a - b)).sum();
            (num / denom).max(0.0)
        };
        prev = Some((trial.step, gd));
        restarted = beta == 0.0;
        d = new_z.iter().zip(&d).map(|(zi, di)| -zi + beta * di).collect();
        mask_outward(&mut d, &trial.q, c0, c1);

        q = trial.q;
        value = new_value;
        g = new_g;
        pg = new_pg;
        z = new_z;

    }
    let iters = controls.max_iters;
    Ok(finish(q, history, iters, Termination::MaxIters, value))
}

/// Secant search on the directional derivative for a step that satisfies
/// the sufficient-decrease and curvature conditions, falling back to
/// value-only backtracking.
#[allow(clippy::too_many_arguments)]
fn line_search(
    obj: &dyn Objective,
    q: &[f64],
    j0: f64,
    g: &[f64],
    d: &[f64],
    s0: f64,
    c0: f64,
    c1: f64,
    controls: &CgControls,
) -> Result<Option<Trial>> {
    let point = |s: f64| -> (Vec<f64>, f64) {
        let qt: Vec<f64> = q.iter().zip(d).map(|(a, b)| (a + s * b).clamp(c0, c1)).collect();
        let decrease: f64 = g.iter().zip(qt.iter().zip(q)).map(|(gi, (a, b))| gi * (a - b)).sum();
        (qt, decrease)
    };
    let sufficient = |v: f64, decrease: f64| v.is_finite() && v <= j0 + controls.armijo * decrease && v < j0;

    let slope0 = dot(g, d);
    let mut best: Option<Trial> = None;
    let (mut s_a, mut slope_a) = (0.0, slope0);
    let mut s = s0;
    let mut smallest = s0;
    for _ in 0..controls.line_search_iters.max(1) {
        let (qt, decrease) = point(s);
        if qt == q || !(decrease < 0.0) {
            break;
        }
        smallest = smallest.min(s);
        let (v, gt) = obj.evaluate_with_gradient(&qt)?;
        let slope = dot(&gt, d);
        let ok = sufficient(v.total, decrease);
        if ok && best.as_ref().is_none_or(|b| v.total < b.value.total) {
            best = Some(Trial {
                q: qt,
                value: v,
                grad: Some(gt),
                step: s,
            });
            if slope.abs() <= controls.curvature * slope0.abs() {
                break;
            }
        }
        let next = if ok || slope >= 0.0 {
            let secant = if slope > slope_a {
                s - slope * (s - s_a) / (slope - slope_a)
            } else {
                controls.max_expand * s
            };
            secant.clamp(0.05 * s, controls.max_expand * s)
        } else {
            // the value went up while still descending: curvature is not
            // trustworthy, shrink instead
            controls.shrink * s
        };
        if slope < 0.0 && ok {
            s_a = s;
            slope_a = slope;
        }
        s = next;
    }
    if best.is_some() {
        return Ok(best);
    }
    let mut s = smallest;
    for _ in 0..controls.max_backtracks {
        s *= controls.shrink;
        let (qt, decrease) = point(s);
        if qt == q || !(decrease < 0.0) {
            continue;
        }
        let v = obj.evaluate(&qt)?;
        if sufficient(v.total, decrease) {
            return Ok(Some(Trial {
                q: qt,
                value: v,
                grad: None,
                step: s,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::MisfitRule;
    use crate::fem::CoefficientField;
    use crate::forward::{ForwardSolver, SourceSpec};
    use crate::mesh::{Dim, Mesh};
    use crate::synthdata::ObservationData;

    #[test]
    fn projection_examples() {
        assert_eq!(project_box(&[0.1, 2.0, 7.0], 0.5, 5.0).unwrap(), vec![0.5, 2.0, 5.0]);
        assert_eq!(project_box(&[1.0, 2.0], 0.5, 5.0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(project_box(&[0.0, -3.0, 0.2], 0.5, 5.0).unwrap(), vec![0.5; 3]);
        assert!(matches!(project_box(&[1.0], 2.0, 2.0), Err(Error::InvalidBounds(..))));
    }

    #[test]
    fn controls_are_validated() {
        let c = CgControls {
            shrink: 1.0,
            ..CgControls::default()
        };
        assert!(c.validate().is_err());
        assert!(CgControls::default().validate().is_ok());
    }

    fn problem(q_true: &CoefficientField, solver: &ForwardSolver, t0: f64) -> ObservationData {
        ObservationData::exact(solver.mesh(), &solver.solve(q_true).unwrap(), t0).unwrap()
    }

    fn solver(m: usize, n: usize) -> ForwardSolver {
        let mesh = Mesh::new(Dim::One, m).unwrap();
        ForwardSolver::new(mesh, 0.5, n, 1.0, |x| x[0] * (1.0 - x[0]), SourceSpec::zero()).unwrap()
    }

    #[test]
    fn exact_start_terminates_immediately() {
        let s = solver(10, 16);
        let q = CoefficientField::from_fn(s.mesh(), |x| 2.0 + x[0]);
        let obs = problem(&q, &s, 0.0);
        let prob = InverseProblem::new(&s, &obs, 0.0, MisfitRule::Trapezoid).unwrap();
        let r = minimize(&prob, q.values(), 0.5, 5.0, &CgControls::default(), None).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::Stationary);
        assert_eq!(r.q_star, q.values());
    }

    /// One-parameter family `q ≡ c` on top of a nodal problem.
    struct ConstantField<'a>(&'a InverseProblem<'a>, usize);

    impl Objective for ConstantField<'_> {
        fn evaluate(&self, c: &[f64]) -> Result<ObjectiveValue> {
            self.0.evaluate(&vec![c[0]; self.1])
        }
        fn evaluate_with_gradient(&self, c: &[f64]) -> Result<(ObjectiveValue, Vec<f64>)> {
            let (v, g) = self.0.gradient(&vec![c[0]; self.1])?;
            Ok((v, vec![g.values().iter().sum()]))
        }
    }

    #[test]
    fn recovers_unknown_constant_like_a_scan() {
        let s = solver(10, 16);
        let nn = s.mesh().n_nodes();
        let obs = problem(&CoefficientField::constant(s.mesh(), 2.0), &s, 0.0);
        let prob = InverseProblem::new(&s, &obs, 0.0, MisfitRule::Trapezoid).unwrap();
        let fam = ConstantField(&prob, nn);

        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=45_000 {
            let c = 0.5 + k as f64 * 1e-4;
            let v = fam.evaluate(&[c]).unwrap().total;
            if v < best.0 {
                best = (v, c);
            }
        }
        let r = minimize(&fam, &[1.0], 0.5, 5.0, &CgControls::default(), None).unwrap();
        assert!((r.q_star[0] - best.1).abs() < 1e-3, "{} vs scan {}", r.q_star[0], best.1);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nodal_inversion_is_feasible_and_monotone() {
        let s = solver(12, 16);
        let q_true = CoefficientField::from_fn(s.mesh(), |x| 2.0 + (6.0 * x[0]).sin());
        let obs = problem(&q_true, &s, 0.25);
        let prob = InverseProblem::new(&s, &obs, 1e-9, MisfitRule::Trapezoid).unwrap();
        let q0 = vec![1.0; s.mesh().n_nodes()];
        let ctl = CgControls {
            max_iters: 30,
            ..CgControls::default()
        };
        let mut logged = Vec::new();
        let mut sink = |l: &IterationLog| logged.push(*l);
        let r = minimize(&prob, &q0, 1.0, 2.5, &ctl, Some(&mut sink)).unwrap();
        assert!(r.q_star.iter().all(|&v| (1.0..=2.5).contains(&v)));
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(*r.history.last().unwrap() < 0.1 * r.history[0]);
        assert_eq!(logged.len(), r.history.len());
        assert_eq!(r.history.len(), r.iterations + 1);
    }

    #[test]
    fn rejects_infeasible_start() {
        let s = solver(6, 4);
        let obs = problem(&CoefficientField::constant(s.mesh(), 2.0), &s, 0.0);
        let prob = InverseProblem::new(&s, &obs, 0.0, MisfitRule::Trapezoid).unwrap();
        let q0 = vec![9.0; s.mesh().n_nodes()];
        assert!(minimize(&prob, &q0, 0.5, 5.0, &CgControls::default(), None).is_err());
    }
}
