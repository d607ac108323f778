//! Full reconstructions: data on the inversion grid, a coarse-to-fine
//! sequence of warm-started minimizations, and the error report.
//!
//! Starting from a constant coefficient the objective is strongly
//! nonlinear and the descent is slow; solving the same problem first on
//! grids with `M` and `N` halved (data drawn from the same fine
//! observations) and interpolating the result upwards moves most of that
//! work to cheap grids.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{GradientMetric, InverseProblem, MisfitRule};
use crate::error::{Error, Result};
use crate::fem::CoefficientField;
use crate::forward::{Source, SourceMode};
use crate::mesh::Mesh;
use crate::metrics::{coefficient_error, state_error, weighted_error, ErrorReport};
use crate::optimizer::{minimize, CgControls, InversionResult, IterationLog, Termination};
use crate::synthdata::{ExampleSpec, FineData, SyntheticData};

/// Callback receiving `(level index, iteration record)`.
pub type LevelLog<'a> = &'a mut dyn FnMut(usize, &IterationLog);

/// Coarsest mesh the continuation will descend to.
pub const MIN_LEVEL_SUBDIVISIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionSettings {
    pub alpha: f64,
    pub gamma: f64,
    pub c0: f64,
    pub c1: f64,
    pub mode: SourceMode,
    pub rule: MisfitRule,
    pub metric: GradientMetric,
    /// Controls on the requested grid.
    pub controls: CgControls,
    /// Controls on the coarser warm-start grids.
    pub coarse_controls: CgControls,
    /// Number of coarser grids to solve on first.
    pub levels: usize,
    pub start: Start,
}

/// Initial coefficient on the coarsest grid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Start {
    /// `(c0 + c1) / 2`.
    #[default]
    Midpoint,
    Constant(f64),
    /// The constant that best fits the data, found by a golden-section
    /// search over `[c0, c1]`. Nodes the data hardly sees keep their
    /// initial value, so a start far from the data-preferred level
    /// lingers there.
    BestConstant,
}

impl InversionSettings {
    pub fn new(example: &ExampleSpec, alpha: f64, gamma: f64) -> Self {
        Self {
            alpha,
            gamma,
            c0: example.c0,
            c1: example.c1,
            mode: SourceMode::PointValue,
            rule: MisfitRule::Trapezoid,
            metric: GradientMetric::Euclidean,
            controls: CgControls::default(),
            coarse_controls: CgControls {
                max_iters: 2000,
                ..CgControls::default()
            },
            levels: 0,
            start: Start::Midpoint,
        }
    }
}

/// Grids visited by the continuation, coarsest first and ending with
/// `(m, n)`. Halving stops early when either size turns odd or the mesh
/// would drop below [`MIN_LEVEL_SUBDIVISIONS`].
pub fn level_schedule(m: usize, n: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(m, n)];
    let (mut ml, mut nl) = (m, n);
    for _ in 0..levels {
        if ml % 2 != 0 || nl % 2 != 0 || ml / 2 < MIN_LEVEL_SUBDIVISIONS {
            break;
        }
        ml /= 2;
        nl /= 2;
        out.push((ml, nl));
    }
    out.reverse();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub m: usize,
    pub n: usize,
    pub iterations: usize,
    pub termination: Termination,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mesh: Mesh,
    pub result: InversionResult,
    pub data: SyntheticData,
    pub levels: Vec<LevelReport>,
}

/// Runs the continuation and returns the reconstruction on the `m`/`n`
/// grid. `log` receives `(level index, iteration record)`.
pub fn reconstruct(
    example: &ExampleSpec,
    fine: &FineData,
    m: usize,
    n: usize,
    settings: &InversionSettings,
    mut log: Option<LevelLog<'_>>,
) -> Result<Reconstruction> {
    let schedule = level_schedule(m, n, settings.levels);
    let mut previous: Option<(Mesh, Vec<f64>)> = None;
    let mut reports = Vec::with_capacity(schedule.len());
    let last = schedule.len() - 1;
    for (li, &(ml, nl)) in schedule.iter().enumerate() {
        let data = fine.observe(ml, nl)?;
        let solver = example.forward_solver(ml, nl, settings.alpha, settings.mode)?;
        let prob = InverseProblem::new(&solver, &data.observations, settings.gamma, settings.rule)?.with_metric(settings.metric)?;
        let mesh = solver.mesh().clone();
        let q0: Vec<f64> = match &previous {
            None => {
                let c = match settings.start {
                    Start::Midpoint => 0.5 * (settings.c0 + settings.c1),
                    Start::Constant(c) => c,
                    Start::BestConstant => best_constant(&prob, settings.c0, settings.c1)?,
                };
                vec![c; mesh.n_nodes()]
            }
            Some((cm, cq)) => (0..mesh.n_nodes())
                .map(|k| cm.evaluate(cq, mesh.point(k)).clamp(settings.c0, settings.c1))
                .collect(),
        };
        let controls = if li == last { &settings.controls } else { &settings.coarse_controls };
        let result = match log.as_deref_mut() {
            Some(f) => {
                let mut sink = |l: &IterationLog| f(li, l);
                minimize(&prob, &q0, settings.c0, settings.c1, controls, Some(&mut sink))?
            }
            None => minimize(&prob, &q0, settings.c0, settings.c1, controls, None)?,
        };
        reports.push(LevelReport {
            m: ml,
            n: nl,
            iterations: result.iterations,
            termination: result.termination,
            objective: result.final_value.total,
        });
        if li == last {
            return Ok(Reconstruction {
                mesh,
                result,
                data,
                levels: reports,
            });
        }
        previous = Some((mesh, result.q_star));
    }
    Err(Error::InvalidSize("empty level schedule"))
}

/// Golden-section minimization of the objective over constant fields.
pub fn best_constant(prob: &InverseProblem<'_>, c0: f64, c1: f64) -> Result<f64> {
    let n = prob.solver().mesh().n_nodes();
    let f = |c: f64| -> Result<f64> { Ok(prob.evaluate(&vec![c; n])?.total) };
    let g = 0.5 * (libm::sqrt(5.0) - 1.0);
    let (mut a, mut b) = (c0, c1);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > 1e-6 * (c1 - c0) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { x1 } else { x2 })
}

/// Errors of a reconstruction against the exact coefficient and the
/// noise-free data on the inversion grid.
pub fn evaluate_reconstruction(
    example: &ExampleSpec,
    rec: &Reconstruction,
    settings: &InversionSettings,
    epsilon: f64,
) -> Result<ErrorReport> {
    let mesh = &rec.mesh;
    let solver = example.forward_solver(mesh.subdivisions(), rec.data.clean.n_steps(), settings.alpha, settings.mode)?;
    let q_star = CoefficientField::new(mesh, rec.result.q_star.clone())?;
    let traj = solver.solve(&q_star)?;
    let e_q = coefficient_error(mesh, &rec.result.q_star, |x| example.q_dagger(x))?;
    let e_u = state_error(mesh, &traj, &rec.data.clean)?;
    let q_dagger = CoefficientField::from_fn(mesh, |x| example.q_dagger(x));
    let traj_dagger = solver.solve(&q_dagger)?;
    let source: Option<&dyn Source> = if example.has_source() { Some(example) } else { None };
    let w = weighted_error(mesh, &rec.result.q_star, q_dagger.values(), &traj_dagger, source)?;
    Ok(ErrorReport {
        e_q,
        e_u,
        weighted_err: w.value,
        min_density: w.min_density,
        alpha: settings.alpha,
        epsilon,
        gamma: settings.gamma,
        h: mesh.h(),
        tau: solver.tau(),
    })
}
