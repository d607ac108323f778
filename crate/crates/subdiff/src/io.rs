//! File formats: result rows, meshes, trajectories, observation bundles,
//! iteration logs and run sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use subdiff_core::optimizer::IterationLog;
use subdiff_core::{Mesh, ObservationData, StateTrajectory};

use crate::error::{HarnessError, Result};

pub const CSV_HEADER: &str = "alpha,eps,gamma,M,N,T0,seed,e_q,e_u,weighted_err,iters,termination,delta_realized";

/// Scientific notation with six significant digits.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.5e}")
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub alpha: f64,
    pub eps: f64,
    pub gamma: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub seed: u64,
    pub e_q: f64,
    pub e_u: f64,
    pub weighted_err: f64,
    pub iters: usize,
    pub termination: String,
    pub delta_realized: f64,
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            sci(self.alpha),
            sci(self.eps),
            sci(self.gamma),
            self.m,
            self.n,
            sci(self.t0),
            self.seed,
            sci(self.e_q),
            sci(self.e_u),
            sci(self.weighted_err),
            self.iters,
            self.termination,
            sci(self.delta_realized)
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 13 {
            return Err(HarnessError::Config(format!("expected 13 fields, got {}: {line:?}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("bad number {s:?}")))
        };
        let int = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| HarnessError::Config(format!("bad integer {s:?}")))
        };
        Ok(Self {
            alpha: num(f[0])?,
            eps: num(f[1])?,
            gamma: num(f[2])?,
            m: int(f[3])? as usize,
            n: int(f[4])? as usize,
            t0: num(f[5])?,
            seed: int(f[6])?,
            e_q: num(f[7])?,
            e_u: num(f[8])?,
            weighted_err: num(f[9])?,
            iters: int(f[10])? as usize,
            termination: f[11].to_string(),
            delta_realized: num(f[12])?,
        })
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::with_capacity(128 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(HarnessError::Config(format!("unexpected header {other:?}"))),
    }
    lines.filter(|l| !l.is_empty()).map(ResultRow::from_csv).collect()
}

/// Two-column CSV, used for plot data.
pub fn xy_csv(x_name: &str, y_name: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("{x_name},{y_name}\n");
    for &(x, y) in points {
        let _ = writeln!(s, "{},{}", sci(x), sci(y));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub dim: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub nodes: Vec<Vec<f64>>,
    pub elements: Vec<Vec<usize>>,
    pub boundary: Vec<bool>,
}

impl MeshFile {
    pub fn new(mesh: &Mesh) -> Self {
        let d = mesh.dim().as_usize();
        Self {
            dim: d,
            m: mesh.subdivisions(),
            nodes: (0..mesh.n_nodes()).map(|k| mesh.point(k).to_vec()).collect(),
            elements: (0..mesh.n_elements()).map(|e| mesh.element(e).to_vec()).collect(),
            boundary: mesh.boundary_mask().to_vec(),
        }
    }
}

/// Long-format `n,t,node,value` table over interior nodes; `node` is the
/// global node index of the mesh file.
pub fn levels_csv(mesh: &Mesh, tau: f64, levels: impl Iterator<Item = Vec<f64>>) -> String {
    let interior = mesh.interior_nodes();
    let mut s = String::from("n,t,node,value\n");
    for (n, level) in levels.enumerate() {
        let t = sci(n as f64 * tau);
        for (i, &k) in interior.iter().enumerate() {
            let _ = writeln!(s, "{n},{t},{k},{:.16e}", level[i]);
        }
    }
    s
}

pub fn trajectory_csv(mesh: &Mesh, traj: &StateTrajectory) -> String {
    levels_csv(mesh, traj.tau(), traj.states().map(|s| s.to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub example: String,
    pub alpha: f64,
    pub eps: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "fine-M")]
    pub fine_m: usize,
    #[serde(rename = "fine-N")]
    pub fine_n: usize,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub noise_scale: f64,
    pub delta_realized: f64,
}

pub fn observation_csv(mesh: &Mesh, obs: &ObservationData) -> String {
    levels_csv(mesh, obs.tau(), (0..=obs.n_steps()).map(|n| obs.level(n).to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub level: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub iteration: usize,
    pub objective: f64,
    pub misfit: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    pub step: f64,
}

impl IterationRecord {
    pub fn new(level: usize, (m, n): (usize, usize), log: &IterationLog) -> Self {
        Self {
            level,
            m,
            n,
            iteration: log.iteration,
            objective: log.objective,
            misfit: log.misfit,
            penalty: log.penalty,
            grad_norm: log.grad_norm,
            step: log.step,
        }
    }
}

pub fn jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}
