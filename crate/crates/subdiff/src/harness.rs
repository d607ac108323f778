//! Single runs, tables and the noise-rate study.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use subdiff_core::inversion::{evaluate_reconstruction, reconstruct, LevelReport};
use subdiff_core::metrics::coefficient_error;
use subdiff_core::synthdata::FineData;
use subdiff_core::{ErrorReport, Mesh, Reconstruction};

use crate::config::InversionConfig;
use crate::error::{HarnessError, Result};
use crate::io::{IterationRecord, ObservationMeta, ResultRow};
use crate::presets::{TableSpec, RATE_EPSILONS};

/// Everything a single inversion produces.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub config: InversionConfig,
    pub report: ErrorReport,
    pub reconstruction: Reconstruction,
    pub iterations: Vec<IterationRecord>,
    pub row: ResultRow,
}

impl SingleRun {
    pub fn observation_meta(&self) -> ObservationMeta {
        let obs = &self.reconstruction.data.observations;
        ObservationMeta {
            example: self.config.example.clone(),
            alpha: self.config.alpha,
            eps: self.config.eps,
            seed: self.config.seed,
            m: self.config.m,
            n: self.config.n,
            fine_m: self.config.fine_m,
            fine_n: self.config.fine_n,
            t0: self.config.t0,
            noise_scale: obs.noise_scale(),
            delta_realized: obs.delta_realized(),
        }
    }

    pub fn sidecar(&self) -> RunSidecar {
        RunSidecar {
            config_hash: self.config.hash(),
            config: self.config.clone(),
            report: ReportJson::from(&self.report),
            iterations: self.reconstruction.result.iterations,
            termination: self.reconstruction.result.termination.as_str().to_string(),
            objective: self.reconstruction.result.final_value.total,
            misfit: self.reconstruction.result.final_value.misfit,
            penalty: self.reconstruction.result.final_value.penalty,
            levels: self.reconstruction.levels.iter().map(LevelJson::from).collect(),
            q_star: self.reconstruction.result.q_star.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub e_q: f64,
    pub e_u: f64,
    pub weighted_err: f64,
    pub min_density: f64,
    pub h: f64,
    pub tau: f64,
}

impl From<&ErrorReport> for ReportJson {
    fn from(r: &ErrorReport) -> Self {
        Self {
            e_q: r.e_q,
            e_u: r.e_u,
            weighted_err: r.weighted_err,
            min_density: r.min_density,
            h: r.h,
            tau: r.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelJson {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub iterations: usize,
    pub termination: String,
    pub objective: f64,
}

impl From<&LevelReport> for LevelJson {
    fn from(l: &LevelReport) -> Self {
        Self {
            m: l.m,
            n: l.n,
            iterations: l.iterations,
            termination: l.termination.as_str().to_string(),
            objective: l.objective,
        }
    }
}

/// JSON companion of a run: provenance plus the reconstructed coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub config_hash: String,
    pub config: InversionConfig,
    pub report: ReportJson,
    pub iterations: usize,
    pub termination: String,
    pub objective: f64,
    pub misfit: f64,
    pub penalty: f64,
    pub levels: Vec<LevelJson>,
    pub q_star: Vec<f64>,
}

fn context(cfg: &InversionConfig) -> String {
    format!(
        "{} alpha={} eps={} gamma={} M={} N={} seed={}",
        cfg.example, cfg.alpha, cfg.eps, cfg.gamma, cfg.m, cfg.n, cfg.seed
    )
}

/// Fine-grid data for `cfg`.
pub fn generate_data(cfg: &InversionConfig) -> Result<FineData> {
    let spec = cfg.example_spec()?;
    FineData::generate(
        &spec,
        cfg.fine_m,
        cfg.fine_n,
        cfg.alpha,
        cfg.eps,
        cfg.t0,
        cfg.seed,
        cfg.source_mode.into(),
    )
    .map_err(|e| HarnessError::core(format!("data for {}", context(cfg)), e))
}

/// Inversion on already generated data.
pub fn run_with_data(cfg: &InversionConfig, fine: &FineData) -> Result<SingleRun> {
    cfg.validate()?;
    let spec = cfg.example_spec()?;
    let settings = cfg.settings()?;
    let schedule = subdiff_core::inversion::level_schedule(cfg.m, cfg.n, cfg.levels);
    let mut records = Vec::new();
    let mut sink = |level: usize, log: &subdiff_core::optimizer::IterationLog| {
        records.push(IterationRecord::new(level, schedule[level], log));
    };
    let rec = reconstruct(&spec, fine, cfg.m, cfg.n, &settings, Some(&mut sink))
        .map_err(|e| HarnessError::core(context(cfg), e))?;
    let report = evaluate_reconstruction(&spec, &rec, &settings, cfg.eps)
        .map_err(|e| HarnessError::core(context(cfg), e))?;
    let row = ResultRow {
        alpha: cfg.alpha,
        eps: cfg.eps,
        gamma: cfg.gamma,
        m: cfg.m,
        n: cfg.n,
        t0: cfg.t0,
        seed: cfg.seed,
        e_q: report.e_q,
        e_u: report.e_u,
        weighted_err: report.weighted_err,
        iters: rec.result.iterations,
        termination: rec.result.termination.as_str().to_string(),
        delta_realized: rec.data.observations.delta_realized(),
    };
    Ok(SingleRun {
        config: cfg.clone(),
        report,
        reconstruction: rec,
        iterations: records,
        row,
    })
}

/// Data generation, inversion and error evaluation for one configuration.
pub fn run_single(cfg: &InversionConfig) -> Result<SingleRun> {
    cfg.validate()?;
    let fine = generate_data(cfg)?;
    run_with_data(cfg, &fine)
}

fn failed_row(cfg: &InversionConfig, err: &HarnessError) -> ResultRow {
    ResultRow {
        alpha: cfg.alpha,
        eps: cfg.eps,
        gamma: cfg.gamma,
        m: cfg.m,
        n: cfg.n,
        t0: cfg.t0,
        seed: cfg.seed,
        e_q: f64::NAN,
        e_u: f64::NAN,
        weighted_err: f64::NAN,
        iters: 0,
        termination: err.tag().to_string(),
        delta_realized: f64::NAN,
    }
}

/// Identifies configurations that share their fine-grid data.
fn data_key(cfg: &InversionConfig) -> String {
    format!(
        "{}|{}|{}|{}|{}|{}|{}|{:?}",
        cfg.example, cfg.alpha, cfg.eps, cfg.seed, cfg.fine_m, cfg.fine_n, cfg.t0, cfg.source_mode
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellJson {
    pub config_hash: String,
    pub config: InversionConfig,
    pub levels: Vec<LevelJson>,
    pub min_density: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSidecar {
    pub table: TableSpec,
    pub cells: Vec<CellJson>,
    /// Reference reconstructions, one per α, when the table has one.
    pub references: Vec<CellJson>,
}

#[derive(Debug, Clone)]
pub struct TableOutput {
    pub rows: Vec<ResultRow>,
    pub sidecar: TableSidecar,
    /// Successful runs in cell order; `None` where the cell failed.
    pub runs: Vec<Option<SingleRun>>,
}

fn cell_json(cfg: &InversionConfig, run: &Result<SingleRun>) -> CellJson {
    match run {
        Ok(r) => CellJson {
            config_hash: cfg.hash(),
            config: cfg.clone(),
            levels: r.reconstruction.levels.iter().map(LevelJson::from).collect(),
            min_density: Some(r.report.min_density),
            error: None,
        },
        Err(e) => CellJson {
            config_hash: cfg.hash(),
            config: cfg.clone(),
            levels: Vec::new(),
            min_density: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs `jobs` independent tasks at a time; output order follows input order.
pub fn parallel_map<T: Sync, U: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Copy of a shared data-generation failure for each cell that needed it.
fn replicate(e: &HarnessError) -> HarnessError {
    match e {
        HarnessError::Core { context, source } => HarnessError::core(context.clone(), source.clone()),
        HarnessError::InsufficientPoints { needed, got } => HarnessError::InsufficientPoints {
            needed: *needed,
            got: *got,
        },
        other => HarnessError::Config(other.to_string()),
    }
}

/// Runs every configuration, sharing fine-grid data between cells with
/// the same data key. Failures stay in their slot.
pub fn run_many(configs: &[InversionConfig], jobs: usize) -> Vec<Result<SingleRun>> {
    let mut keys: Vec<String> = Vec::new();
    let mut key_of = Vec::with_capacity(configs.len());
    let mut first_cfg: Vec<&InversionConfig> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for c in configs {
        let k = data_key(c);
        let i = *index.entry(k.clone()).or_insert_with(|| {
            keys.push(k);
            first_cfg.push(c);
            keys.len() - 1
        });
        key_of.push(i);
    }
    let data: Vec<Result<FineData>> = parallel_map(jobs, &first_cfg, |c| c.validate().and_then(|_| generate_data(c)));
    let idx: Vec<usize> = (0..configs.len()).collect();
    parallel_map(jobs, &idx, |&i| match &data[key_of[i]] {
        Ok(fine) => run_with_data(&configs[i], fine),
        Err(e) => Err(replicate(e)),
    })
}

/// All cells of a table; per-cell failures become rows with NaN metrics
/// and an `error:*` termination tag.
pub fn run_table(spec: &TableSpec, jobs: usize) -> Result<TableOutput> {
    spec.validate()?;
    let cells = spec.cells();
    let mut configs = cells.clone();
    let ref_cfgs: Vec<InversionConfig> = match spec.reference {
        Some(r) => spec.alphas.iter().map(|&a| spec.reference_config(a, r)).collect(),
        None => Vec::new(),
    };
    configs.extend(ref_cfgs.iter().cloned());
    let mut results = run_many(&configs, jobs);
    let ref_results: Vec<Result<SingleRun>> = results.split_off(cells.len());

    if spec.reference.is_some() {
        for (cfg, res) in cells.iter().zip(results.iter_mut()) {
            let ai = spec.alphas.iter().position(|&a| a == cfg.alpha).expect("cell alpha in table");
            let replaced = match (&*res, &ref_results[ai]) {
                (Ok(run), Ok(reference)) => against_reference(run, reference),
                (Ok(_), Err(e)) => Err(HarnessError::Config(format!("reference failed: {e}"))),
                (Err(_), _) => continue,
            };
            match replaced {
                Ok(e_q) => {
                    if let Ok(run) = res {
                        run.report.e_q = e_q;
                        run.row.e_q = e_q;
                    }
                }
                Err(e) => *res = Err(e),
            }
        }
    }

    let rows = cells
        .iter()
        .zip(&results)
        .map(|(c, r)| match r {
            Ok(run) => run.row.clone(),
            Err(e) => failed_row(c, e),
        })
        .collect();
    let sidecar = TableSidecar {
        table: spec.clone(),
        cells: cells.iter().zip(&results).map(|(c, r)| cell_json(c, r)).collect(),
        references: ref_cfgs.iter().zip(&ref_results).map(|(c, r)| cell_json(c, r)).collect(),
    };
    Ok(TableOutput {
        rows,
        sidecar,
        runs: results.into_iter().map(|r| r.ok()).collect(),
    })
}

/// `‖q* − q*_ref‖` on the cell mesh, with the reference evaluated at the
/// cell nodes.
pub fn against_reference(run: &SingleRun, reference: &SingleRun) -> Result<f64> {
    let ref_mesh: &Mesh = &reference.reconstruction.mesh;
    let ref_q = &reference.reconstruction.result.q_star;
    coefficient_error(&run.reconstruction.mesh, &run.reconstruction.result.q_star, |x| {
        ref_mesh.evaluate(ref_q, x)
    })
    .map_err(|e| HarnessError::core("reference comparison", e))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = x.ln() - mx;
        num += dx * (y.ln() - my);
        den += dx * dx;
    }
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudySpec {
    pub base: InversionConfig,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Steps `N` for every point.
    pub steps: usize,
}

impl RateStudySpec {
    pub fn new(base: InversionConfig) -> Self {
        Self {
            base,
            alphas: vec![0.5],
            epsilons: RATE_EPSILONS.to_vec(),
            steps: 2048,
        }
    }

    /// `h = √ε` (rounded to a whole number of subdivisions),
    /// `γ = 1e-4·ε²`, `T₀ = 0`, data on a grid four times finer in space.
    pub fn point(&self, alpha: f64, eps: f64) -> InversionConfig {
        let mut c = self.base.clone();
        c.alpha = alpha;
        c.eps = eps;
        c.gamma = 1e-4 * eps * eps;
        c.m = (1.0 / eps.sqrt()).round().max(1.0) as usize;
        c.n = self.steps;
        c.fine_m = 4 * c.m;
        c.fine_n = self.steps;
        c.t0 = 0.0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let mut eps = self.epsilons.clone();
        eps.sort_by(f64::total_cmp);
        eps.dedup();
        let spans_decade = eps.len() >= 2 && eps[0] > 0.0 && eps[eps.len() - 1] / eps[0] >= 10.0;
        if eps.len() < 4 || !spans_decade {
            return Err(HarnessError::InsufficientPoints {
                needed: 4,
                got: eps.len(),
            });
        }
        if self.alphas.is_empty() {
            return Err(HarnessError::Config("rate study needs at least one alpha".into()));
        }
        Ok(())
    }

    /// Configurations ordered by α, then by increasing ε.
    pub fn configs(&self) -> Vec<InversionConfig> {
        let mut eps = self.epsilons.clone();
        eps.sort_by(f64::total_cmp);
        eps.dedup();
        self.alphas
            .iter()
            .flat_map(|&a| eps.iter().map(move |&e| (a, e)))
            .map(|(a, e)| self.point(a, e))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub alpha: f64,
    /// `(eps, e_q, e_u)` by increasing ε.
    pub points: Vec<(f64, f64, f64)>,
    pub slope_q: f64,
    pub slope_u: f64,
}

#[derive(Debug, Clone)]
pub struct RateOutput {
    pub rows: Vec<ResultRow>,
    pub curves: Vec<RateCurve>,
    pub cells: Vec<CellJson>,
}

pub fn run_rate_study(spec: &RateStudySpec, jobs: usize) -> Result<RateOutput> {
    spec.validate()?;
    let configs = spec.configs();
    for c in &configs {
        c.validate()?;
    }
    let results = run_many(&configs, jobs);
    let mut rows = Vec::with_capacity(configs.len());
    let mut curves = Vec::new();
    let per_alpha = configs.len() / spec.alphas.len();
    for (ai, &alpha) in spec.alphas.iter().enumerate() {
        let mut points = Vec::with_capacity(per_alpha);
        for i in ai * per_alpha..(ai + 1) * per_alpha {
            match &results[i] {
                Ok(run) => {
                    rows.push(run.row.clone());
                    points.push((configs[i].eps, run.report.e_q, run.report.e_u));
                }
                Err(e) => rows.push(failed_row(&configs[i], e)),
            }
        }
        let fit = |sel: fn(&(f64, f64, f64)) -> f64| {
            let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.0, sel(p))).collect();
            if xy.len() >= 2 {
                loglog_slope(&xy)
            } else {
                f64::NAN
            }
        };
        curves.push(RateCurve {
            alpha,
            slope_q: fit(|p| p.1),
            slope_u: fit(|p| p.2),
            points,
        });
    }
    let cells = configs.iter().zip(&results).map(|(c, r)| cell_json(c, r)).collect();
    Ok(RateOutput { rows, curves, cells })
}
