//! Synthetic observations: fine-grid reference solves, relative Gaussian
//! noise and transfer to the inversion grid.
//!
//! Noise uses ChaCha8 seeded from a `u64` and the Box–Muller transform
//! evaluated with `libm`, so a given seed yields the same bits on every
//! platform. Normals are drawn level by level (increasing `n`), node by node
//! (increasing interior index), in pairs `(r cos θ, r sin θ)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::CoefficientField;
use crate::forward::{time_weights, window_start, ForwardSolver, MisfitRule, Source, SourceMode, SourceSpec, StateTrajectory};
use crate::math::{cos, exp, ln, sin, sqrt};
use crate::mesh::{Dim, Mesh};

/// The three benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExampleId {
    /// `u₀ = x(1−x)`, `f ≡ 0`, `q† = 2 + sin(2πx)`
    Smooth1d,
    /// `u₀ = x²(1−x)²`, `f = e^{x(1−x)} x(1−x) t`, `q† = 2 + min(½, sin⁴(2πx))`
    Kinked1d,
    /// `u₀ = x₁(1−x₁) sin(πx₂)`, `f ≡ 0`, `q† = 1 + sin(πx₁) x₂(1−x₂)`
    Smooth2d,
}

impl ExampleId {
    pub const ALL: [ExampleId; 3] = [ExampleId::Smooth1d, ExampleId::Kinked1d, ExampleId::Smooth2d];

    pub fn name(self) -> &'static str {
        match self {
            ExampleId::Smooth1d => "smooth1d",
            ExampleId::Kinked1d => "kinked1d",
            ExampleId::Smooth2d => "smooth2d",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ExampleId::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// Problem data and default observation window / bounds of an example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleSpec {
    pub id: ExampleId,
    pub t0: f64,
    pub c0: f64,
    pub c1: f64,
    pub t_final: f64,
}

impl ExampleSpec {
    pub fn new(id: ExampleId) -> Self {
        let (t0, c0, c1) = match id {
            ExampleId::Smooth1d => (0.75, 0.5, 5.0),
            ExampleId::Kinked1d => (0.75, 1.9, 2.7),
            ExampleId::Smooth2d => (0.8, 0.5, 5.0),
        };
        Self {
            id,
            t0,
            c0,
            c1,
            t_final: 1.0,
        }
    }

    pub fn dim(&self) -> Dim {
        match self.id {
            ExampleId::Smooth2d => Dim::Two,
            _ => Dim::One,
        }
    }

    pub fn u0(&self, x: &[f64]) -> f64 {
        match self.id {
            ExampleId::Smooth1d => x[0] * (1.0 - x[0]),
            ExampleId::Kinked1d => {
                let v = x[0] * (1.0 - x[0]);
                v * v
            }
            ExampleId::Smooth2d => x[0] * (1.0 - x[0]) * sin(PI * x[1]),
        }
    }

    pub fn q_dagger(&self, x: &[f64]) -> f64 {
        match self.id {
            ExampleId::Smooth1d => 2.0 + sin(2.0 * PI * x[0]),
            ExampleId::Kinked1d => {
                let s = sin(2.0 * PI * x[0]);
                let s2 = s * s;
                2.0 + (s2 * s2).min(0.5)
            }
            ExampleId::Smooth2d => 1.0 + sin(PI * x[0]) * x[1] * (1.0 - x[1]),
        }
    }

    pub fn has_source(&self) -> bool {
        self.id == ExampleId::Kinked1d
    }

    pub fn source(&self, x: &[f64], t: f64) -> f64 {
        match self.id {
            ExampleId::Kinked1d => {
                let v = x[0] * (1.0 - x[0]);
                exp(v) * v * t
            }
            _ => 0.0,
        }
    }

    /// Source term in the form the forward solver expects.
    pub fn source_spec(&self, mode: SourceMode) -> SourceSpec<'_> {
        if self.has_source() {
            SourceSpec {
                mode,
                f: Some(self),
            }
        } else {
            SourceSpec { mode, f: None }
        }
    }

    pub fn forward_solver(&self, m: usize, n_steps: usize, alpha: f64, mode: SourceMode) -> Result<ForwardSolver> {
        let mesh = Mesh::new(self.dim(), m)?;
        ForwardSolver::new(mesh, alpha, n_steps, self.t_final, |x| self.u0(x), self.source_spec(mode))
    }
}

impl Source for ExampleSpec {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.source(x, t)
    }
}

/// Observations `z^δ(t_n)`, `n = 0..N`, on the interior nodes of the
/// inversion mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationData {
    dim: Dim,
    m: usize,
    n_dof: usize,
    t_final: f64,
    t0: f64,
    epsilon: f64,
    seed: u64,
    noise_scale: f64,
    delta_realized: f64,
    levels: Vec<f64>,
}

impl ObservationData {
    /// Wraps noise-free levels (e.g. a solver trajectory) as observations.
    pub fn exact(mesh: &Mesh, traj: &StateTrajectory, t0: f64) -> Result<Self> {
        let t_final = traj.tau() * traj.n_steps() as f64;
        Self::from_levels(mesh, t_final, t0, traj.as_flat().to_vec())
    }

    pub fn from_levels(mesh: &Mesh, t_final: f64, t0: f64, levels: Vec<f64>) -> Result<Self> {
        let n_dof = mesh.n_interior();
        if !levels.len().is_multiple_of(n_dof) || levels.len() < 2 * n_dof {
            return Err(Error::InvalidSize("observation levels are not (N + 1) x n_dof"));
        }
        if !(t0 >= 0.0 && t0 < t_final) {
            return Err(Error::InvalidWindow(t0));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
        Ok(Self {
            dim: mesh.dim(),
            m: mesh.subdivisions(),
            n_dof,
            t_final,
            t0,
            epsilon: 0.0,
            seed: 0,
            noise_scale: 0.0,
            delta_realized: 0.0,
            levels,
        })
    }

    pub fn with_noise_metadata(mut self, epsilon: f64, seed: u64, noise_scale: f64, delta_realized: f64) -> Self {
        self.epsilon = epsilon;
        self.seed = seed;
        self.noise_scale = noise_scale;
        self.delta_realized = delta_realized;
        self
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn subdivisions(&self) -> usize {
        self.m
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn n_steps(&self) -> usize {
        self.levels.len() / self.n_dof - 1
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.n_steps() as f64
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `sup |u|` over the observation window used to scale the noise.
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// `(τ Σ a_n ‖z^δ(t_n) − u(t_n)‖²)^{1/2}` over the window.
    pub fn delta_realized(&self) -> f64 {
        self.delta_realized
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n * self.n_dof..(n + 1) * self.n_dof]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.levels
    }
}

/// Fine-grid solution with `q = I_h q†`.
pub fn generate_reference(
    example: &ExampleSpec,
    fine_m: usize,
    fine_n: usize,
    alpha: f64,
    mode: SourceMode,
) -> Result<(Mesh, StateTrajectory)> {
    let solver = example.forward_solver(fine_m, fine_n, alpha, mode)?;
    let q = CoefficientField::from_fn(solver.mesh(), |x| example.q_dagger(x));
    let traj = solver.solve(&q)?;
    Ok((solver.mesh().clone(), traj))
}

/// Checks that `(fine_m, fine_n)` refines `(m, n)`: the time grids must
/// nest and the fine mesh must be at least as fine in space.
pub fn check_refinement(fine_m: usize, fine_n: usize, m: usize, n: usize) -> Result<()> {
    if n == 0 || !fine_n.is_multiple_of(n) {
        return Err(Error::NonNestedGrid("fine step count is not a multiple of the coarse one"));
    }
    if fine_m < m {
        return Err(Error::NonNestedGrid("fine mesh is coarser than the inversion mesh"));
    }
    Ok(())
}

struct BoxMuller {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl BoxMuller {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in (0, 1].
    fn open_unit(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = sqrt(-2.0 * ln(self.open_unit()));
        let theta = 2.0 * PI * self.open_unit();
        self.spare = Some(r * sin(theta));
        r * cos(theta)
    }
}

/// Adds `ε · S · ξ` to every value at levels inside `[t0, T]`, where `S`
/// is the largest absolute value in the window and `ξ` is standard normal.
/// Returns the perturbed trajectory and `S`.
pub fn add_noise(traj: &StateTrajectory, epsilon: f64, t0: f64, seed: u64) -> Result<(StateTrajectory, f64)> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter("noise level must be non-negative"));
    }
    let start = window_start(traj.tau(), traj.n_steps(), t0);
    let scale = (start..=traj.n_steps())
        .flat_map(|n| traj.state(n).iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if epsilon == 0.0 {
        return Ok((traj.clone(), scale));
    }
    let mut data = traj.as_flat().to_vec();
    let mut normal = BoxMuller::new(seed);
    let amp = epsilon * scale;
    for v in &mut data[start * traj.n_dof()..] {
        *v += amp * normal.next();
    }
    Ok((StateTrajectory::new(traj.alpha(), traj.tau(), traj.n_dof(), data)?, scale))
}

/// Moves fine-grid levels to the inversion grid: time levels by
/// subsampling, space by nodal subsampling when the meshes nest and by
/// evaluating the fine P1 function at coarse nodes otherwise.
pub fn transfer_to_coarse(
    fine: &StateTrajectory,
    fine_mesh: &Mesh,
    coarse_mesh: &Mesh,
    coarse_n: usize,
) -> Result<Vec<f64>> {
    if fine_mesh.dim() != coarse_mesh.dim() {
        return Err(Error::NonNestedGrid("meshes have different dimensions"));
    }
    if fine.n_dof() != fine_mesh.n_interior() {
        return Err(Error::DimensionMismatch {
            expected: fine_mesh.n_interior(),
            found: fine.n_dof(),
        });
    }
    let (fm, m) = (fine_mesh.subdivisions(), coarse_mesh.subdivisions());
    check_refinement(fm, fine.n_steps(), m, coarse_n)?;
    let t_ratio = fine.n_steps() / coarse_n;
    let nested = fm % m == 0;
    let s_ratio = fm / m;
    let fine_index = |k: usize| -> usize {
        // coarse node k -> fine node with the same coordinates
        match coarse_mesh.dim() {
            Dim::One => k * s_ratio,
            Dim::Two => {
                let (i, j) = (k % (m + 1), k / (m + 1));
                j * s_ratio * (fm + 1) + i * s_ratio
            }
        }
    };
    let mut out = Vec::with_capacity((coarse_n + 1) * coarse_mesh.n_interior());
    for n in 0..=coarse_n {
        let level = fine.state(n * t_ratio);
        if nested {
            for &k in coarse_mesh.interior_nodes() {
                let i = fine_mesh
                    .interior_index(fine_index(k))
                    .expect("interior coarse nodes map to interior fine nodes");
                out.push(level[i]);
            }
        } else {
            let full = fine_mesh.extend_by_zero(level);
            for &k in coarse_mesh.interior_nodes() {
                out.push(fine_mesh.evaluate(&full, coarse_mesh.point(k)));
            }
        }
    }
    Ok(out)
}

/// Grid sizes of a synthetic experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grids {
    pub m: usize,
    pub n: usize,
    pub fine_m: usize,
    pub fine_n: usize,
}

/// Everything the inversion and the error metrics need from the data side.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub observations: ObservationData,
    /// Noise-free reference moved to the inversion grid.
    pub clean: StateTrajectory,
}

/// Noise-free and noisy fine-grid trajectories of one experiment, from
/// which observations on any nested inversion grid can be drawn.
#[derive(Debug, Clone)]
pub struct FineData {
    mesh: Mesh,
    clean: StateTrajectory,
    noisy: StateTrajectory,
    t_final: f64,
    t0: f64,
    epsilon: f64,
    seed: u64,
    noise_scale: f64,
}

impl FineData {
    /// Reference solve on `fine_m`/`fine_n` followed by noise injection.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        example: &ExampleSpec,
        fine_m: usize,
        fine_n: usize,
        alpha: f64,
        epsilon: f64,
        t0: f64,
        seed: u64,
        mode: SourceMode,
    ) -> Result<Self> {
        if !(t0 >= 0.0 && t0 < example.t_final) {
            return Err(Error::InvalidWindow(t0));
        }
        let (mesh, clean) = generate_reference(example, fine_m, fine_n, alpha, mode)?;
        let (noisy, noise_scale) = add_noise(&clean, epsilon, t0, seed)?;
        Ok(Self {
            mesh,
            clean,
            noisy,
            t_final: example.t_final,
            t0,
            epsilon,
            seed,
            noise_scale,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn clean(&self) -> &StateTrajectory {
        &self.clean
    }

    pub fn noisy(&self) -> &StateTrajectory {
        &self.noisy
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Observations and clean reference on the `m`/`n` inversion grid,
    /// with the realized noise level `(τ Σ aₙ ‖zⁿ − uⁿ‖²)^{1/2}` measured
    /// there using trapezoid window weights.
    pub fn observe(&self, m: usize, n: usize) -> Result<SyntheticData> {
        check_refinement(self.mesh.subdivisions(), self.clean.n_steps(), m, n)?;
        let coarse = Mesh::new(self.mesh.dim(), m)?;
        let clean_levels = transfer_to_coarse(&self.clean, &self.mesh, &coarse, n)?;
        let noisy_levels = if self.epsilon == 0.0 {
            clean_levels.clone()
        } else {
            transfer_to_coarse(&self.noisy, &self.mesh, &coarse, n)?
        };
        let tau = self.t_final / n as f64;
        let clean = StateTrajectory::new(self.clean.alpha(), tau, coarse.n_interior(), clean_levels)?;

        let mass = crate::fem::assemble_mass(&coarse);
        let w = time_weights(tau, n, self.t0, MisfitRule::Trapezoid);
        let nd = coarse.n_interior();
        let mut diff = vec![0.0; nd];
        let mut acc = 0.0;
        for (k, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            for (i, d) in diff.iter_mut().enumerate() {
                *d = noisy_levels[k * nd + i] - clean.state(k)[i];
            }
            acc += wk * mass.bilinear(&diff, &diff);
        }
        let delta = sqrt(tau * acc);
        let observations = ObservationData::from_levels(&coarse, self.t_final, self.t0, noisy_levels)?
            .with_noise_metadata(self.epsilon, self.seed, self.noise_scale, delta);
        Ok(SyntheticData { observations, clean })
    }
}

/// Reference solve, noise and transfer in one deterministic call.
pub fn synthesize(
    example: &ExampleSpec,
    grids: Grids,
    alpha: f64,
    epsilon: f64,
    t0: f64,
    seed: u64,
    mode: SourceMode,
) -> Result<SyntheticData> {
    check_refinement(grids.fine_m, grids.fine_n, grids.m, grids.n)?;
    FineData::generate(example, grids.fine_m, grids.fine_n, alpha, epsilon, t0, seed, mode)?.observe(grids.m, grids.n)
}
