use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use subdiff::harness::{RateCurve, RunSidecar};
use subdiff::io::{self, MeshFile};
use subdiff::{checks, harness, presets, ConfigPatch, HarnessError, InversionConfig, Result};
use subdiff_core::{CoefficientField, SourceMode};

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Subdiffusion forward solves and coefficient recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem with the exact coefficient and write the
    /// mesh and trajectory.
    SolveForward(RunArgs),
    /// Generate data, reconstruct the coefficient and report errors.
    Invert(RunArgs),
    /// Run a table preset.
    Table(TableArgs),
    /// Noise-level sweep with h = sqrt(eps), gamma = 1e-4 eps^2.
    RateStudy(RateArgs),
    /// Fast internal consistency checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    patch: ConfigPatch,
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = ["table1", "table2", "table3", "table4", "table5"])]
    preset: String,
    /// Cells solved concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = ["rate"])]
    preset: Option<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Fractional orders, comma separated (`--alpha` picks a single one).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Time steps of every point.
    #[arg(long)]
    steps: Option<usize>,
}

fn load_patch(args: &RunArgs) -> Result<ConfigPatch> {
    let file = match &args.config {
        Some(path) => ConfigPatch::from_json(&io::read(path)?)?,
        None => ConfigPatch::default(),
    };
    Ok(file.merged(&args.patch))
}

#[derive(Serialize)]
struct ForwardSidecar<'a> {
    config_hash: String,
    config: &'a InversionConfig,
    tau: f64,
    n_interior: usize,
}

fn solve_forward(args: &RunArgs) -> Result<()> {
    let cfg = load_patch(args)?.resolve()?;
    let spec = cfg.example_spec()?;
    let mode: SourceMode = cfg.source_mode.into();
    let solver = spec
        .forward_solver(cfg.m, cfg.n, cfg.alpha, mode)
        .map_err(|e| HarnessError::core("forward solver", e))?;
    let q = CoefficientField::from_fn(solver.mesh(), |x| spec.q_dagger(x));
    let traj = solver.solve(&q).map_err(|e| HarnessError::core("forward solve", e))?;
    io::write_json(&args.out.join("mesh.json"), &MeshFile::new(solver.mesh()))?;
    io::write(&args.out.join("trajectory.csv"), &io::trajectory_csv(solver.mesh(), &traj))?;
    io::write_json(
        &args.out.join("forward.json"),
        &ForwardSidecar {
            config_hash: cfg.hash(),
            config: &cfg,
            tau: solver.tau(),
            n_interior: solver.mesh().n_interior(),
        },
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn invert(args: &RunArgs) -> Result<()> {
    let cfg = load_patch(args)?.resolve()?;
    let run = harness::run_single(&cfg)?;
    let out = &args.out;
    let csv = io::results_csv(std::slice::from_ref(&run.row));
    io::write(&out.join("results.csv"), &csv)?;
    let sidecar: RunSidecar = run.sidecar();
    io::write_json(&out.join("result.json"), &sidecar)?;
    io::write(&out.join("iterations.jsonl"), &io::jsonl(&run.iterations)?)?;
    let mesh = &run.reconstruction.mesh;
    io::write(&out.join("observations.csv"), &io::observation_csv(mesh, &run.reconstruction.data.observations))?;
    io::write_json(&out.join("observations.json"), &run.observation_meta())?;
    io::write_json(&out.join("mesh.json"), &MeshFile::new(mesh))?;
    print!("{csv}");
    Ok(())
}

/// Number of failed cells, reported after the outputs are written.
fn report_failures(rows: &[io::ResultRow]) -> Result<()> {
    let failed = rows.iter().filter(|r| r.termination.starts_with("error:")).count();
    if failed == 0 {
        return Ok(());
    }
    Err(HarnessError::Numerical(format!("{failed} of {} cells failed", rows.len())))
}

fn table(args: &TableArgs) -> Result<()> {
    let patch = load_patch(&args.run)?;
    let spec = presets::table_preset(&args.preset)?.with_overrides(&patch)?;
    let out = harness::run_table(&spec, args.jobs)?;
    let csv = io::results_csv(&out.rows);
    io::write(&args.run.out.join(format!("{}.csv", args.preset)), &csv)?;
    io::write_json(&args.run.out.join(format!("{}.json", args.preset)), &out.sidecar)?;
    print!("{csv}");
    report_failures(&out.rows)
}

#[derive(Serialize)]
struct RateSidecar<'a> {
    spec: &'a harness::RateStudySpec,
    curves: &'a [RateCurve],
    cells: &'a [harness::CellJson],
}

fn rate_study(args: &RateArgs) -> Result<()> {
    let patch = load_patch(&args.run)?;
    let base = patch.resolve()?;
    let mut spec = harness::RateStudySpec::new(base);
    if let Some(e) = &args.epsilons {
        spec.epsilons = e.clone();
    }
    if let Some(a) = patch.alpha {
        spec.alphas = vec![a];
    }
    if let Some(a) = &args.alphas {
        spec.alphas = a.clone();
    }
    if let Some(n) = args.steps {
        spec.steps = n;
    }
    let out = harness::run_rate_study(&spec, args.jobs)?;
    let dir: &Path = &args.run.out;
    let csv = io::results_csv(&out.rows);
    io::write(&dir.join("rate.csv"), &csv)?;
    for c in &out.curves {
        let q: Vec<(f64, f64)> = c.points.iter().map(|p| (p.0, p.1)).collect();
        let u: Vec<(f64, f64)> = c.points.iter().map(|p| (p.0, p.2)).collect();
        io::write(&dir.join(format!("rate_q_alpha{}.csv", c.alpha)), &io::xy_csv("eps", "e_q", &q))?;
        io::write(&dir.join(format!("rate_u_alpha{}.csv", c.alpha)), &io::xy_csv("eps", "e_u", &u))?;
        println!("alpha {}: slope e_q {:.3}, slope e_u {:.3}", c.alpha, c.slope_q, c.slope_u);
    }
    io::write_json(
        &dir.join("rate.json"),
        &RateSidecar {
            spec: &spec,
            curves: &out.curves,
            cells: &out.cells,
        },
    )?;
    report_failures(&out.rows)
}

fn selftest() -> Result<()> {
    let results = checks::quick_suite();
    let mut ok = true;
    for r in &results {
        println!("{r}");
        ok &= r.passed;
    }
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Numerical("selftest failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::SolveForward(a) => solve_forward(a),
        Command::Invert(a) => invert(a),
        Command::Table(a) => table(a),
        Command::RateStudy(a) => rate_study(a),
        Command::Selftest => selftest(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
