//! Run configuration. A [`ConfigPatch`] is read from JSON and from the
//! command line (flags and keys share their spelling) and layered over
//! the defaults of the chosen example.

use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subdiff_core::optimizer::CgControls;
use subdiff_core::{ExampleId, ExampleSpec, InversionSettings, MisfitRule, SourceMode, Start};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SourceModeName {
    Point,
    Average,
}

impl From<SourceModeName> for SourceMode {
    fn from(s: SourceModeName) -> Self {
        match s {
            SourceModeName::Point => SourceMode::PointValue,
            SourceModeName::Average => SourceMode::IntervalAverage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MisfitRuleName {
    Trapezoid,
    Rectangle,
}

impl From<MisfitRuleName> for MisfitRule {
    fn from(s: MisfitRuleName) -> Self {
        match s {
            MisfitRuleName::Trapezoid => MisfitRule::Trapezoid,
            MisfitRuleName::Rectangle => MisfitRule::Rectangle,
        }
    }
}

/// Initial coefficient: a number, `midpoint` or `best-constant`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartName {
    Value(f64),
    Named(NamedStart),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedStart {
    Midpoint,
    BestConstant,
}

impl FromStr for StartName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "midpoint" => Ok(StartName::Named(NamedStart::Midpoint)),
            "best-constant" => Ok(StartName::Named(NamedStart::BestConstant)),
            _ => s
                .parse()
                .map(StartName::Value)
                .map_err(|_| format!("expected a number, `midpoint` or `best-constant`, got {s:?}")),
        }
    }
}

impl From<StartName> for Start {
    fn from(s: StartName) -> Self {
        match s {
            StartName::Value(c) => Start::Constant(c),
            StartName::Named(NamedStart::Midpoint) => Start::Midpoint,
            StartName::Named(NamedStart::BestConstant) => Start::BestConstant,
        }
    }
}

/// Fully resolved settings of one inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub example: String,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "fine-M")]
    pub fine_m: usize,
    #[serde(rename = "fine-N")]
    pub fine_n: usize,
    pub eps: f64,
    pub gamma: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub seed: u64,
    pub c0: f64,
    pub c1: f64,
    pub q0: StartName,
    #[serde(rename = "source-mode")]
    pub source_mode: SourceModeName,
    #[serde(rename = "misfit-rule")]
    pub misfit_rule: MisfitRuleName,
    /// Coarser warm-start grids solved before the requested one.
    pub levels: usize,
    #[serde(rename = "max-iters")]
    pub max_iters: usize,
    #[serde(rename = "coarse-max-iters")]
    pub coarse_max_iters: usize,
    #[serde(rename = "grad-tol")]
    pub grad_tol: f64,
    #[serde(rename = "step-tol")]
    pub step_tol: f64,
    #[serde(rename = "restart-every")]
    pub restart_every: usize,
}

/// Partial configuration. Every field is optional; `None` keeps the value
/// underneath.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[arg(long = "fine-M")]
    #[serde(rename = "fine-M")]
    pub fine_m: Option<usize>,
    #[arg(long = "fine-N")]
    #[serde(rename = "fine-N")]
    pub fine_n: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "T0")]
    #[serde(rename = "T0")]
    pub t0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long, value_parser = StartName::from_str)]
    pub q0: Option<StartName>,
    #[arg(long = "source-mode", value_enum)]
    #[serde(rename = "source-mode")]
    pub source_mode: Option<SourceModeName>,
    #[arg(long = "misfit-rule", value_enum)]
    #[serde(rename = "misfit-rule")]
    pub misfit_rule: Option<MisfitRuleName>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long = "max-iters")]
    #[serde(rename = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long = "coarse-max-iters")]
    #[serde(rename = "coarse-max-iters")]
    pub coarse_max_iters: Option<usize>,
    #[arg(long = "grad-tol")]
    #[serde(rename = "grad-tol")]
    pub grad_tol: Option<f64>,
    #[arg(long = "step-tol")]
    #[serde(rename = "step-tol")]
    pub step_tol: Option<f64>,
    #[arg(long = "restart-every")]
    #[serde(rename = "restart-every")]
    pub restart_every: Option<usize>,
}

impl ConfigPatch {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config file: {e}")))
    }

    /// `other` wins wherever it is set.
    pub fn merged(&self, other: &ConfigPatch) -> ConfigPatch {
        macro_rules! pick {
            ($($f:ident),*) => {
                ConfigPatch { $($f: other.$f.clone().or_else(|| self.$f.clone())),* }
            };
        }
        pick!(
            example,
            alpha,
            m,
            n,
            fine_m,
            fine_n,
            eps,
            gamma,
            t0,
            seed,
            c0,
            c1,
            q0,
            source_mode,
            misfit_rule,
            levels,
            max_iters,
            coarse_max_iters,
            grad_tol,
            step_tol,
            restart_every
        )
    }

    pub fn example_id(&self) -> Result<ExampleId> {
        match &self.example {
            None => Ok(ExampleId::Smooth1d),
            Some(name) => parse_example(name),
        }
    }

    /// Applies the patch to `base`. The example is not changed here; use
    /// [`InversionConfig::defaults`] with [`ConfigPatch::example_id`] first.
    pub fn apply(&self, base: &InversionConfig) -> InversionConfig {
        let mut c = base.clone();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(
            alpha,
            m,
            n,
            fine_m,
            fine_n,
            eps,
            gamma,
            t0,
            seed,
            c0,
            c1,
            q0,
            source_mode,
            misfit_rule,
            levels,
            max_iters,
            coarse_max_iters,
            grad_tol,
            step_tol,
            restart_every
        );
        c
    }

    pub fn resolve(&self) -> Result<InversionConfig> {
        let cfg = self.apply(&InversionConfig::defaults(self.example_id()?));
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_example(name: &str) -> Result<ExampleId> {
    ExampleId::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = ExampleId::ALL.iter().map(|e| e.name()).collect();
        HarnessError::Config(format!("unknown example {name:?} (known: {})", known.join(", ")))
    })
}

impl InversionConfig {
    /// The standard setup of each example: data on a grid twice as fine in
    /// space (and in time for the 1D problems), γ for exact data.
    pub fn defaults(id: ExampleId) -> Self {
        let spec = ExampleSpec::new(id);
        let (m, n, fine_m, fine_n, gamma, levels) = match id {
            ExampleId::Smooth1d => (200, 1024, 400, 2048, 1e-14, 3),
            ExampleId::Kinked1d => (200, 1024, 400, 2048, 1e-15, 3),
            ExampleId::Smooth2d => (40, 500, 100, 2000, 1e-14, 2),
        };
        // In 2D the data barely sees a band along the boundary, where the
        // reconstruction keeps its initial value. The midpoint of [0.5, 5]
        // is far above the coefficient there.
        let q0 = match id {
            ExampleId::Smooth2d => StartName::Named(NamedStart::BestConstant),
            _ => StartName::Named(NamedStart::Midpoint),
        };
        let cg = CgControls::default();
        Self {
            example: id.name().to_string(),
            alpha: 0.5,
            m,
            n,
            fine_m,
            fine_n,
            eps: 0.0,
            gamma,
            t0: spec.t0,
            seed: 1,
            c0: spec.c0,
            c1: spec.c1,
            q0,
            source_mode: SourceModeName::Point,
            misfit_rule: MisfitRuleName::Trapezoid,
            levels,
            max_iters: cg.max_iters,
            coarse_max_iters: 2000,
            grad_tol: cg.grad_tol,
            step_tol: cg.step_tol,
            restart_every: cg.restart_every,
        }
    }

    pub fn example_id(&self) -> Result<ExampleId> {
        parse_example(&self.example)
    }

    /// Example with the box bounds of this run.
    pub fn example_spec(&self) -> Result<ExampleSpec> {
        let mut spec = ExampleSpec::new(self.example_id()?);
        spec.c0 = self.c0;
        spec.c1 = self.c1;
        spec.t0 = self.t0;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.example_id()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha = {} outside (0, 1]", self.alpha));
        }
        if self.m == 0 || self.n == 0 {
            return bad("M and N must be positive".into());
        }
        if self.fine_m < self.m || !self.fine_n.is_multiple_of(self.n) {
            return bad(format!(
                "data grid {}x{} is not a refinement of the inversion grid {}x{}",
                self.fine_m, self.fine_n, self.m, self.n
            ));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("eps = {} must be finite and nonnegative", self.eps));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma = {} must be finite and nonnegative", self.gamma));
        }
        if !(self.t0 >= 0.0 && self.t0 < 1.0) {
            return bad(format!("T0 = {} outside [0, T)", self.t0));
        }
        if !(self.c0 > 0.0 && self.c0 < self.c1 && self.c1.is_finite()) {
            return bad(format!("bounds need 0 < c0 < c1, got [{}, {}]", self.c0, self.c1));
        }
        if let StartName::Value(q0) = self.q0 {
            if !(q0 >= self.c0 && q0 <= self.c1) {
                return bad(format!("q0 = {q0} outside [{}, {}]", self.c0, self.c1));
            }
        }
        if self.max_iters == 0 || (self.levels > 0 && self.coarse_max_iters == 0) {
            return bad("iteration limits must be positive".into());
        }
        self.controls(self.max_iters)
            .validate()
            .map_err(|e| HarnessError::Config(format!("optimizer controls: {e}")))?;
        Ok(())
    }

    fn controls(&self, max_iters: usize) -> CgControls {
        CgControls {
            max_iters,
            grad_tol: self.grad_tol,
            step_tol: self.step_tol,
            restart_every: self.restart_every,
            ..CgControls::default()
        }
    }

    pub fn settings(&self) -> Result<InversionSettings> {
        let spec = self.example_spec()?;
        let mut s = InversionSettings::new(&spec, self.alpha, self.gamma);
        s.mode = self.source_mode.into();
        s.rule = self.misfit_rule.into();
        s.controls = self.controls(self.max_iters);
        s.coarse_controls = self.controls(self.coarse_max_iters);
        s.levels = self.levels;
        s.start = self.q0.into();
        Ok(s)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
