//! Self-contained verification checks with a pass/fail verdict. The cheap
//! ones back the `selftest` subcommand; all of them are used by the
//! acceptance suite.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subdiff_core::cq::generating_coefficients;
use subdiff_core::forward::{Source, SourceSpec};
use subdiff_core::metrics::weighted_error;
use subdiff_core::mittag_leffler::mittag_leffler;
use subdiff_core::quadrature::gauss_unit;
use subdiff_core::{
    CoefficientField, CqWeights, Dim, ExampleId, ExampleSpec, ForwardSolver, InverseProblem, Mesh, MisfitRule,
    ObservationData, SourceMode, StateTrajectory,
};

use crate::harness::loglog_slope;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Weight identities: `b₀ = 1`, negative tail, partial sums equal the
/// order-(α−1) weights, and `∂̄^{α−1} ∂̄ φ = ∂̄^α φ` for `φ⁰ = 0`.
pub fn cq_algebra(alphas: &[f64], n: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut sign_violations = 0usize;
    for &alpha in alphas {
        let b = generating_coefficients(alpha, n + 1);
        let shifted = generating_coefficients(alpha - 1.0, n + 1);
        worst = worst.max((b[0] - 1.0).abs());
        sign_violations += b[1..].iter().filter(|&&v| v >= 0.0).count();
        let mut sum = 0.0;
        for (&bj, &sj) in b.iter().zip(&shifted) {
            sum += bj;
            worst = worst.max((sum - sj).abs() / sj.abs());
        }

        // associativity on a random sequence with φ⁰ = 0
        let phi: Vec<f64> = (0..=n).map(|k| if k == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let diff: Vec<f64> = (0..=n).map(|k| if k == 0 { 0.0 } else { phi[k] - phi[k - 1] }).collect();
        let mut scale: f64 = 0.0;
        let mut err: f64 = 0.0;
        for m in 1..=n {
            let direct: f64 = (0..=m).map(|j| b[j] * phi[m - j]).sum();
            let composed: f64 = (1..=m).map(|j| shifted[m - j] * diff[j]).sum();
            scale = scale.max(direct.abs());
            err = err.max((direct - composed).abs());
        }
        worst = worst.max(err / scale.max(1.0));
    }
    outcome(
        "cq weight identities",
        worst <= 1e-12 && sign_violations == 0,
        format!("max residual {worst:.3e}, sign violations {sign_violations} (alpha {alphas:?}, N={n})"),
    )
}

/// `Σₙ (∂̄^α vⁿ) vⁿ ≥ 0` for random sequences with `v⁰ = 0`.
pub fn cq_positivity(alphas: &[f64], samples: usize, n: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for s in 0..samples {
        let alpha = alphas[s % alphas.len()];
        let w = CqWeights::new(alpha, 1.0 / n as f64, n + 1).expect("valid order");
        let mut v: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        v[0] = 0.0;
        let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let d = w.apply_scalar_all(&v).expect("matching length");
        let sum: f64 = (1..=n).map(|k| d[k] * v[k]).sum();
        worst = worst.min(sum / (vmax * vmax));
    }
    outcome(
        "cq positivity",
        worst >= -1e-12,
        format!("min normalized sum {worst:.3e} over {samples} sequences (N={n})"),
    )
}

fn sine_mode_solver(m: usize, n: usize, alpha: f64) -> (Mesh, ForwardSolver) {
    let mesh = Mesh::new(Dim::One, m).expect("mesh");
    let solver = ForwardSolver::new(mesh.clone(), alpha, n, 1.0, |x| (PI * x[0]).sin(), SourceSpec::zero())
        .expect("solver");
    (mesh, solver)
}

fn l2_distance_to_mode(mesh: &Mesh, nodal_interior: &[f64], amp: f64) -> f64 {
    let full = mesh.extend_by_zero(nodal_interior);
    let h = mesh.h();
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        for &(s, w) in gauss_unit(5) {
            let x = (e as f64 + s) * h;
            let uh = full[e] * (1.0 - s) + full[e + 1] * s;
            let d = uh - amp * (PI * x).sin();
            acc += w * h * d * d;
        }
    }
    acc.sqrt()
}

/// `L²` error at `t = 1` of the `q ≡ 1`, `u₀ = sin(πx)` solve against
/// `E_α(−π²) sin(πx)`.
pub fn single_mode_error(m: usize, n: usize, alpha: f64) -> f64 {
    let (mesh, solver) = sine_mode_solver(m, n, alpha);
    let traj = solver.solve(&CoefficientField::constant(&mesh, 1.0)).expect("solve");
    l2_distance_to_mode(&mesh, traj.state(n), mittag_leffler(alpha, -PI * PI))
}

/// Same solve, measured against the time-discrete amplitude `r_N` of the
/// exact mode (`∂̄^α (r − 1) + π² r = 0`), so only the spatial error is
/// left.
pub fn single_mode_spatial_error(m: usize, n: usize, alpha: f64) -> f64 {
    let (mesh, solver) = sine_mode_solver(m, n, alpha);
    let traj = solver.solve(&CoefficientField::constant(&mesh, 1.0)).expect("solve");
    l2_distance_to_mode(&mesh, traj.state(n), time_discrete_amplitude(n, alpha, PI * PI))
}

fn time_discrete_amplitude(n: usize, alpha: f64, lambda: f64) -> f64 {
    let tau = 1.0 / n as f64;
    let scale = tau.powf(-alpha);
    let b = generating_coefficients(alpha, n + 1);
    let mut r = vec![1.0; n + 1];
    for k in 1..=n {
        let hist: f64 = (1..k).map(|j| b[j] * (r[k - j] - 1.0)).sum();
        r[k] = scale * (1.0 - hist) / (scale + lambda);
    }
    r[n]
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub errors: Vec<f64>,
    pub slope: f64,
}

pub fn temporal_order(m: usize, steps: &[usize], alpha: f64) -> OrderStudy {
    let errors: Vec<f64> = steps.iter().map(|&n| single_mode_error(m, n, alpha)).collect();
    let pts: Vec<(f64, f64)> = steps.iter().zip(&errors).map(|(&n, &e)| (1.0 / n as f64, e)).collect();
    OrderStudy {
        slope: loglog_slope(&pts),
        errors,
    }
}

pub fn spatial_order(meshes: &[usize], n: usize, alpha: f64, time_discrete_reference: bool) -> OrderStudy {
    let errors: Vec<f64> = meshes
        .iter()
        .map(|&m| {
            if time_discrete_reference {
                single_mode_spatial_error(m, n, alpha)
            } else {
                single_mode_error(m, n, alpha)
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = meshes.iter().zip(&errors).map(|(&m, &e)| (1.0 / m as f64, e)).collect();
    OrderStudy {
        slope: loglog_slope(&pts),
        errors,
    }
}

/// Relative mismatch between the adjoint directional derivative and a
/// central difference, on random coefficients and directions.
pub fn gradient_check(cases: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let id = if case % 2 == 0 { ExampleId::Smooth1d } else { ExampleId::Smooth2d };
        let gamma = if (case / 2) % 2 == 0 { 0.0 } else { 1e-10 };
        let ex = ExampleSpec::new(id);
        let solver = ex.forward_solver(10, 16, 0.5, SourceMode::PointValue).expect("solver");
        let mesh = solver.mesh();
        let qd = CoefficientField::from_fn(mesh, |x| ex.q_dagger(x));
        let traj = solver.solve(&qd).expect("solve");
        let obs = ObservationData::exact(mesh, &traj, ex.t0).expect("observations");
        let prob = InverseProblem::new(&solver, &obs, gamma, MisfitRule::Trapezoid).expect("problem");
        let q: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random_range(1.0..3.0)).collect();
        let mut d: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        d.iter_mut().for_each(|v| *v /= dn);
        let (_, g) = prob.gradient(&q).expect("gradient");
        let gd: f64 = g.values().iter().zip(&d).map(|(a, b)| a * b).sum();
        let h = 1e-4;
        let at = |s: f64| {
            let p: Vec<f64> = q.iter().zip(&d).map(|(a, b)| a + s * b).collect();
            prob.evaluate(&p).expect("objective").total
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        worst = worst.max((gd - fd).abs() / gd.abs());
    }
    outcome(
        "adjoint gradient",
        worst <= 1e-5,
        format!("max relative error {worst:.3e} over {cases} cases (1D/2D, gamma 0 and 1e-10)"),
    )
}

/// Direct double time sum over `(m, n)` pairs and elements, with the CQ
/// derivative expanded from the weights at every level.
pub fn weighted_error_brute_force(
    mesh: &Mesh,
    q_star: &[f64],
    q_dagger: &[f64],
    traj: &StateTrajectory,
    f: &dyn Source,
) -> f64 {
    let nn = traj.n_steps();
    let tau = traj.tau();
    let b = generating_coefficients(traj.alpha(), nn + 1);
    let full = |n: usize| mesh.extend_by_zero(traj.state(n));
    let u0 = full(0);
    let d = mesh.dim().as_usize();
    let mut total = 0.0;
    for m in 1..=nn {
        for n in 1..=m {
            let un = full(n);
            let dn: Vec<f64> = (0..mesh.n_nodes())
                .map(|k| (0..n).map(|j| b[j] * (full(n - j)[k] - u0[k])).sum::<f64>() * tau.powf(-traj.alpha()))
                .collect();
            for e in 0..mesh.n_elements() {
                let v = mesh.element(e);
                let geo = mesh.geometry(e);
                let mean = |x: &dyn Fn(usize) -> f64| v.iter().map(|&k| x(k)).sum::<f64>() / v.len() as f64;
                let qdm = mean(&|k| q_dagger[k]);
                let qsm = mean(&|k| q_star[k]);
                let um = mean(&|k| un[k]);
                let dm = mean(&|k| dn[k]);
                let fm = mean(&|k| f.value(mesh.point(k), n as f64 * tau));
                let mut grad2 = 0.0;
                for c in 0..d {
                    let g: f64 = v.iter().enumerate().map(|(a, &k)| un[k] * geo.grads[a][c]).sum();
                    grad2 += g * g;
                }
                let r = (qdm - qsm) / qdm;
                total += tau * tau * geo.measure * r * r * (qdm * grad2 + (fm - dm) * um);
            }
        }
    }
    total
}

pub fn weighted_error_oracle(cases: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = |x: &[f64], t: f64| (1.0 + x[0]) * t * (x[0] * 3.0).cos();
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let dim = if case % 2 == 0 { Dim::One } else { Dim::Two };
        let mesh = Mesh::new(dim, 8).expect("mesh");
        let nodes = mesh.n_nodes();
        let qd: Vec<f64> = (0..nodes).map(|_| rng.random_range(1.0..2.0)).collect();
        let qs: Vec<f64> = (0..nodes).map(|_| rng.random_range(1.0..2.0)).collect();
        let alpha = rng.random_range(0.1..0.9);
        let solver = ForwardSolver::new(mesh.clone(), alpha, 8, 1.0, |x| x.iter().map(|v| v * (1.0 - v)).product(), SourceSpec::point(&f))
            .expect("solver");
        let traj = solver.solve(&CoefficientField::new(&mesh, qd.clone()).expect("field")).expect("solve");
        let got = weighted_error(&mesh, &qs, &qd, &traj, Some(&f)).expect("weighted error").value;
        let want = weighted_error_brute_force(&mesh, &qs, &qd, &traj, &f);
        worst = worst.max((got - want).abs() / want.abs());
    }
    outcome(
        "weighted error oracle",
        worst <= 1e-12,
        format!("max relative deviation {worst:.3e} over {cases} cases (M=8, N=8)"),
    )
}

/// The checks that finish within seconds.
pub fn quick_suite() -> Vec<CheckOutcome> {
    let fwd = temporal_order(100, &[16, 32, 64, 128], 0.5);
    vec![
        cq_algebra(&[0.25, 0.5, 0.75], 2048, 1),
        cq_positivity(&[0.25, 0.5, 0.75], 1000, 64, 2),
        gradient_check(8, 3),
        weighted_error_oracle(10, 4),
        outcome(
            "single-mode temporal order",
            (0.85..=1.15).contains(&fwd.slope),
            format!("slope {:.3} (M=100, N=16..128)", fwd.slope),
        ),
    ]
}
