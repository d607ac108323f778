//! Named sweeps. Noise tables pair each noise level with a hand-tuned γ;
//! the mesh and step tables measure errors against a reconstruction on a
//! finer grid from the same data.

use serde::{Deserialize, Serialize};
use subdiff_core::ExampleId;

use crate::config::{ConfigPatch, InversionConfig};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// `(eps, gamma)` pairs.
    Noise(Vec<(f64, f64)>),
    /// Mesh subdivisions `M` at fixed `N`.
    Mesh(Vec<usize>),
    /// Step counts `N` at fixed `M`.
    Steps(Vec<usize>),
}

impl Axis {
    pub fn len(&self) -> usize {
        match self {
            Axis::Noise(v) => v.len(),
            Axis::Mesh(v) => v.len(),
            Axis::Steps(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn strictly_increasing(&self) -> bool {
        fn inc<T: PartialOrd>(v: &[T]) -> bool {
            v.windows(2).all(|w| w[0] < w[1])
        }
        match self {
            Axis::Noise(v) => inc(&v.iter().map(|p| p.0).collect::<Vec<_>>()),
            Axis::Mesh(v) => inc(v),
            Axis::Steps(v) => inc(v),
        }
    }
}

/// Grid of the reference reconstruction used by the mesh and step tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    pub base: InversionConfig,
    pub alphas: Vec<f64>,
    pub axis: Axis,
    pub reference: Option<ReferenceGrid>,
}

pub const PRESETS: [&str; 6] = ["table1", "table2", "table3", "table4", "table5", "rate"];

const SMOOTH1D_NOISE: [(f64, f64); 6] = [(0.0, 1e-14), (1e-3, 1e-13), (5e-3, 3e-13), (1e-2, 5e-13), (3e-2, 1e-12), (5e-2, 3e-12)];
const KINKED1D_NOISE: [(f64, f64); 6] = [(0.0, 1e-15), (1e-3, 2e-13), (5e-3, 4e-13), (1e-2, 1e-12), (3e-2, 4e-12), (5e-2, 9e-12)];
const SMOOTH2D_NOISE: [(f64, f64); 6] = [(0.0, 1e-14), (1e-3, 3e-12), (5e-3, 1e-11), (1e-2, 3e-11), (3e-2, 2e-10), (5e-2, 5e-10)];

pub const ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];

/// Noise levels of the rate study; `M = round(1/√ε)`, `γ = 1e-4·ε²`.
pub const RATE_EPSILONS: [f64; 5] = [4e-4, 1e-3, 4e-3, 1e-2, 4e-2];

/// Table presets:
///
/// * `table1`, `table3`, `table4`: noise sweeps for `smooth1d`, `kinked1d`
///   and `smooth2d`.
/// * `table2`: mesh sweep `M = 10..320` at `τ = 2⁻¹⁰`, ε = 1e-2.
/// * `table5`: step sweep `τ = 2⁻⁵..2⁻¹⁰` at `M = 200`, ε = 1e-2.
///
/// `table2`/`table5` measure `e_q` against a reconstruction at `M = 800`,
/// `N = 2048` from the same data, generated at `1600 × 2048`.
pub fn table_preset(name: &str) -> Result<TableSpec> {
    let noise = |id: ExampleId, pairs: &[(f64, f64)]| {
        let base = InversionConfig::defaults(id);
        TableSpec {
            name: name.to_string(),
            base,
            alphas: ALPHAS.to_vec(),
            axis: Axis::Noise(pairs.to_vec()),
            reference: None,
        }
    };
    let convergence = |axis: Axis| {
        let mut base = InversionConfig::defaults(ExampleId::Smooth1d);
        base.eps = 1e-2;
        base.gamma = 5e-13;
        base.fine_m = 1600;
        base.fine_n = 2048;
        TableSpec {
            name: name.to_string(),
            base,
            alphas: ALPHAS.to_vec(),
            axis,
            reference: Some(ReferenceGrid {
                m: 800,
                n: 2048,
                levels: 5,
            }),
        }
    };
    Ok(match name {
        "table1" => noise(ExampleId::Smooth1d, &SMOOTH1D_NOISE),
        "table3" => noise(ExampleId::Kinked1d, &KINKED1D_NOISE),
        "table4" => noise(ExampleId::Smooth2d, &SMOOTH2D_NOISE),
        "table2" => convergence(Axis::Mesh(vec![10, 20, 40, 80, 160, 320])),
        "table5" => convergence(Axis::Steps(vec![32, 64, 128, 256, 512, 1024])),
        "rate" => {
            return Err(HarnessError::Config(
                "preset \"rate\" belongs to the rate-study subcommand".into(),
            ))
        }
        other => {
            return Err(HarnessError::Config(format!(
                "unknown preset {other:?} (known: {})",
                PRESETS.join(", ")
            )))
        }
    })
}

impl TableSpec {
    /// Applies command-line or file overrides to the base configuration.
    /// An `alpha` override restricts the table to that single order, and an
    /// `eps`/`gamma`/`M`/`N` override on the swept axis collapses it to one
    /// cell.
    pub fn with_overrides(mut self, patch: &ConfigPatch) -> Result<Self> {
        if let Some(name) = &patch.example {
            if *name != self.base.example {
                return Err(HarnessError::Config(format!(
                    "preset {} is fixed to example {}",
                    self.name, self.base.example
                )));
            }
        }
        self.base = patch.apply(&self.base);
        if let Some(a) = patch.alpha {
            self.alphas = vec![a];
        }
        match &mut self.axis {
            Axis::Noise(v) => {
                if patch.eps.is_some() || patch.gamma.is_some() {
                    *v = vec![(self.base.eps, self.base.gamma)];
                }
            }
            Axis::Mesh(v) => {
                if patch.m.is_some() {
                    *v = vec![self.base.m];
                }
            }
            Axis::Steps(v) => {
                if patch.n.is_some() {
                    *v = vec![self.base.n];
                }
            }
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.axis.is_empty() {
            return Err(HarnessError::Config(format!("table {} has no cells", self.name)));
        }
        if !self.axis.strictly_increasing() {
            return Err(HarnessError::Config(format!("table {} axis is not strictly increasing", self.name)));
        }
        for cell in self.cells() {
            cell.validate()?;
        }
        if let Some(r) = self.reference {
            self.reference_config(self.alphas[0], r).validate()?;
        }
        Ok(())
    }

    /// Configurations of all cells, ordered by α and then by axis value.
    pub fn cells(&self) -> Vec<InversionConfig> {
        let mut out = Vec::with_capacity(self.alphas.len() * self.axis.len());
        for &alpha in &self.alphas {
            for i in 0..self.axis.len() {
                let mut c = self.base.clone();
                c.alpha = alpha;
                match &self.axis {
                    Axis::Noise(v) => {
                        c.eps = v[i].0;
                        c.gamma = v[i].1;
                    }
                    Axis::Mesh(v) => c.m = v[i],
                    Axis::Steps(v) => c.n = v[i],
                }
                out.push(c);
            }
        }
        out
    }

    pub fn reference_config(&self, alpha: f64, r: ReferenceGrid) -> InversionConfig {
        let mut c = self.base.clone();
        c.alpha = alpha;
        c.m = r.m;
        c.n = r.n;
        c.levels = r.levels;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_table_presets_validate() {
        for name in PRESETS.iter().filter(|n| **n != "rate") {
            let t = table_preset(name).unwrap();
            t.validate().unwrap();
            assert_eq!(t.cells().len(), 18, "{name}");
        }
        assert!(table_preset("rate").is_err());
        assert!(table_preset("table9").is_err());
    }

    #[test]
    fn noise_columns_match_presets() {
        let t = table_preset("table1").unwrap();
        let cells = t.cells();
        assert_eq!((cells[0].eps, cells[0].gamma), (0.0, 1e-14));
        assert_eq!((cells[3].eps, cells[3].gamma), (1e-2, 5e-13));
        assert_eq!(cells[6].alpha, 0.5);
        let t4 = table_preset("table4").unwrap();
        assert_eq!((t4.base.m, t4.base.n, t4.base.fine_m, t4.base.fine_n), (40, 500, 100, 2000));
        assert_eq!(t4.base.t0, 0.8);
    }

    #[test]
    fn overrides_collapse_axes() {
        let p = ConfigPatch {
            alpha: Some(0.5),
            eps: Some(1e-2),
            gamma: Some(5e-13),
            m: Some(20),
            n: Some(32),
            fine_m: Some(40),
            fine_n: Some(64),
            ..Default::default()
        };
        let t = table_preset("table1").unwrap().with_overrides(&p).unwrap();
        t.validate().unwrap();
        let cells = t.cells();
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].m, cells[0].eps), (20, 1e-2));

        let t = table_preset("table2").unwrap();
        let p = ConfigPatch {
            example: Some("kinked1d".into()),
            ..Default::default()
        };
        assert!(t.with_overrides(&p).is_err());
    }
}
