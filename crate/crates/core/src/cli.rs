//! Batch command-line front end.
//!
//! Every subcommand reads a TOML experiment file, writes its artifacts into
//! `--out` and finishes with a `manifest.json` listing the config, seed,
//! tool version and the SHA-256 of each artifact. Failures print a JSON
//! object on stderr and exit with 2 (validation), 3 (numerical) or 1.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{ArrayD, Axis, Dimension, IxDyn};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::density::{geometric_grid, kde, sample_law, variance_bound_check};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::io::{write_binary, write_csv, write_json, ArtifactSink, Manifest};
use crate::regularity::{estimate_spatial, estimate_temporal, theoretical_exponents, EstimatorOptions, ExponentEstimate};
use crate::solver::{moment_from_paths, solve_ensemble, Solver, MIN_REPLICATES};
use crate::spectral_measure::{admissibility, critical_eta, cumulative_bound_check, QuadratureOptions};
use crate::stable_kernel::{check_properties, kernel, kernel_grid, KernelOptions};

#[derive(Debug, Parser)]
#[command(name = "fracspde", version, about = "Fractional stochastic heat equations: kernels, noise, solvers, diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel profiles and the identity suite.
    Kernel(CommonArgs),
    /// Admissibility table and the cumulative-integral sandwich.
    Measure(CommonArgs),
    /// Simulate replicate paths.
    Simulate(CommonArgs),
    /// Hölder exponent estimates.
    Holder(CommonArgs),
    /// Law of u(t,x), density estimate and variance bounds.
    Density(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernel(_) => "kernel",
            Command::Measure(_) => "measure",
            Command::Simulate(_) => "simulate",
            Command::Holder(_) => "holder",
            Command::Density(_) => "density",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Kernel(a) | Command::Measure(a) | Command::Simulate(a) | Command::Holder(a) | Command::Density(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            let report = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{report}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<Manifest> {
    let args = command.args();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let work = || dispatch(command.name(), &cfg, args);
    match args.threads {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?
            .install(work),
    }
}

fn dispatch(name: &str, cfg: &ExperimentConfig, args: &CommonArgs) -> Result<Manifest> {
    // Validate everything this command reads before any artifact is written.
    match name {
        "kernel" => {
            cfg.index()?;
            cfg.kernel_block()?;
            cfg.grid()?;
        }
        "measure" => {
            cfg.measure()?;
            cfg.measure_block()?;
        }
        "simulate" => {
            cfg.solver_config()?;
        }
        "holder" => {
            cfg.solver_config()?;
            cfg.holder_block()?;
        }
        _ => {
            cfg.solver_config()?;
            cfg.density_block()?;
        }
    }
    let mut sink = ArtifactSink::new(&args.out)?;
    let outcome = match name {
        "kernel" => run_kernel(cfg, args.format, &mut sink),
        "measure" => run_measure(cfg, args.format, &mut sink),
        "simulate" => run_simulate(cfg, args.format, &mut sink),
        "holder" => run_holder(cfg, args.format, &mut sink),
        _ => run_density(cfg, args.format, &mut sink),
    };
    let manifest = sink.finish(name, cfg.seed, serde_json::to_value(cfg)?)?;
    outcome.map(|_| manifest)
}

fn table(
    sink: &mut ArtifactSink,
    stem: &str,
    format: Format,
    comment: Option<&serde_json::Value>,
    header: &[&str],
    rows: Vec<Vec<f64>>,
) -> Result<()> {
    match format {
        Format::Csv => {
            let path = sink.path(&format!("{stem}.csv"));
            write_csv(&path, comment.map(|c| c.to_string()).as_deref(), header, &rows)
        }
        Format::Json => {
            let path = sink.path(&format!("{stem}.json"));
            write_json(&path, &json!({ "meta": comment, "columns": header, "rows": rows }))
        }
    }
}

fn report<T: Serialize>(sink: &mut ArtifactSink, name: &str, value: &T) -> Result<()> {
    let path = sink.path(name);
    write_json(&path, value)
}

fn field_rows(field: &Field) -> Result<Vec<Vec<f64>>> {
    let grid = field.grid();
    let coords = grid.coordinates();
    Ok(field
        .values()?
        .indexed_iter()
        .map(|(ix, &v)| {
            let mut row: Vec<f64> = ix.slice().iter().map(|&j| coords[j]).collect();
            row.push(v);
            row
        })
        .collect())
}

fn coordinate_header(d: usize) -> Vec<String> {
    if d == 1 {
        vec!["x".into()]
    } else {
        (0..d).map(|a| format!("x{a}")).collect()
    }
}

fn run_kernel(cfg: &ExperimentConfig, format: Format, sink: &mut ArtifactSink) -> Result<()> {
    let idx = cfg.index()?;
    let block = cfg.kernel_block()?;
    let t_min = block.times.iter().copied().fold(f64::INFINITY, f64::min);
    let grid = match cfg.grid()? {
        Some(g) => g,
        None => kernel_grid(idx, 0.4 * t_min, block.n.unwrap_or(if idx.dim() == 1 { 4096 } else { 64 }))?,
    };
    let mut header = coordinate_header(grid.dim());
    header.push("density".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut reports = Vec::new();
    for (i, &t) in block.times.iter().enumerate() {
        let k = kernel(idx, t, &grid)?;
        let meta = json!({ "t": t, "index": idx, "grid": grid, "diagnostics": k.diagnostics });
        table(sink, &format!("kernel_{i}"), format, Some(&meta), &header, field_rows(&k.field)?)?;
        if block.check {
            reports.push(check_properties(idx, t, &grid, &KernelOptions::default())?);
        }
    }
    let pass = reports.iter().all(|r| r.all_pass());
    report(sink, "kernel_report.json", &json!({ "grid": grid, "reports": reports, "pass": pass }))?;
    if pass {
        Ok(())
    } else {
        Err(Error::Consistency("kernel identity suite failed; see kernel_report.json".into()))
    }
}

fn run_measure(cfg: &ExperimentConfig, format: Format, sink: &mut ArtifactSink) -> Result<()> {
    let idx = cfg.index()?;
    let measure = cfg.measure()?;
    let block = cfg.measure_block()?;
    let verdicts = block.etas.iter().map(|&eta| admissibility(measure, idx, eta)).collect::<Result<Vec<_>>>()?;
    let rows = verdicts
        .iter()
        .map(|v| {
            vec![
                v.eta,
                if v.admissible { 1.0 } else { 0.0 },
                v.integral_value.unwrap_or(f64::INFINITY),
                v.threshold,
            ]
        })
        .collect();
    table(sink, "admissibility", format, None, &["eta", "admissible", "integral", "threshold"], rows)?;
    let eta_star = critical_eta(measure, idx, &QuadratureOptions::for_dim(idx.dim())).ok();
    let at_one = admissibility(measure, idx, 1.0)?;
    let sandwich = if at_one.admissible {
        Some(cumulative_bound_check(idx, measure, block.horizon)?)
    } else {
        None
    };
    report(
        sink,
        "measure_report.json",
        &json!({ "verdicts": verdicts, "critical_eta": eta_star, "cumulative_bound": sandwich }),
    )?;
    match &sandwich {
        Some(s) if !s.holds => Err(Error::Consistency("cumulative-integral sandwich violated".into())),
        _ => Ok(()),
    }
}

fn stacked_frames(frames: &[Field], grid: &Grid) -> Result<ArrayD<f64>> {
    let mut shape = vec![frames.len()];
    shape.extend(grid.shape());
    let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
    for (mut slot, f) in out.axis_iter_mut(Axis(0)).zip(frames) {
        slot.assign(f.values()?);
    }
    Ok(out)
}

fn run_simulate(cfg: &ExperimentConfig, format: Format, sink: &mut ArtifactSink) -> Result<()> {
    let solver = Solver::new(cfg.solver_config()?)?;
    let block = cfg.simulate_block()?;
    let paths = solve_ensemble(&solver, block.replicates)?;
    for p in &paths {
        let path = sink.path(&format!("frames_{:05}.bin", p.replicate));
        write_binary(&path, &stacked_frames(&p.frames, solver.grid())?)?;
    }
    let times = paths[0].times.iter().enumerate().map(|(k, &t)| vec![k as f64, t]).collect();
    table(sink, "times", format, None, &["frame", "t"], times)?;
    let mut summary = json!({ "replicates": paths.len(), "steps": solver.steps(), "frames": paths[0].frames.len() });
    if let Some(p) = block.moment_p {
        if paths.len() >= MIN_REPLICATES {
            summary["moment"] = serde_json::to_value(moment_from_paths(&paths, p)?)?;
        } else {
            summary["moment"] = serde_json::Value::Null;
            summary["warning"] = json!(format!("moment needs at least {MIN_REPLICATES} replicates"));
        }
    }
    let picard: Vec<_> = paths.iter().filter_map(|p| p.picard.as_ref().map(|t| t.iterations())).collect();
    if !picard.is_empty() {
        summary["picard_iterations"] = json!(picard);
    }
    report(sink, "simulate_report.json", &summary)
}

fn resolve_eta(cfg: &ExperimentConfig, explicit: Option<f64>) -> Result<f64> {
    match explicit {
        Some(e) => Ok(e),
        None => {
            let idx = cfg.index()?;
            let eta = critical_eta(cfg.measure()?, idx, &QuadratureOptions::for_dim(idx.dim()))?;
            // The window ends are suprema over η > η*.
            Ok(eta.max(f64::MIN_POSITIVE))
        }
    }
}

fn variogram_rows(e: &ExponentEstimate) -> Vec<Vec<f64>> {
    e.lags.iter().zip(&e.moments).map(|(h, m)| vec![*h, *m]).collect()
}

fn run_holder(cfg: &ExperimentConfig, format: Format, sink: &mut ArtifactSink) -> Result<()> {
    let solver = Solver::new(cfg.solver_config()?)?;
    let block = cfg.holder_block()?;
    let paths = solve_ensemble(&solver, cfg.simulate_block()?.replicates)?;
    let opts = EstimatorOptions { min_lag: block.min_lag, min_cells: block.min_cells, ..Default::default() };
    let eta = resolve_eta(cfg, block.eta)?;
    let (gamma1_max, gamma2_max) = theoretical_exponents(cfg.index()?, block.rho, eta)?;
    let temporal = estimate_temporal(&paths, &opts)?;
    let t_last = *paths[0].times.last().expect("non-empty");
    let spatial = estimate_spatial(&paths, t_last, &opts)?;
    table(sink, "holder_temporal", format, None, &["lag", "moment"], variogram_rows(&temporal))?;
    table(sink, "holder_spatial", format, None, &["lag", "moment"], variogram_rows(&spatial))?;
    report(
        sink,
        "holder_report.json",
        &json!({
            "gamma1_hat": temporal,
            "gamma2_hat": spatial,
            "gamma1_max": gamma1_max,
            "gamma2_max": gamma2_max,
            "eta": eta,
            "rho": block.rho,
        }),
    )
}

fn run_density(cfg: &ExperimentConfig, format: Format, sink: &mut ArtifactSink) -> Result<()> {
    let solver_cfg = cfg.solver_config()?;
    let block = cfg.density_block()?;
    let law = sample_law(&solver_cfg, block.t, &block.point, block.replicates)?;
    let est = kde(&law.samples, block.bandwidth)?;
    table(
        sink,
        "density",
        format,
        None,
        &["point", "density"],
        est.grid_1d.iter().zip(&est.values).map(|(x, v)| vec![*x, *v]).collect(),
    )?;
    let idx = &solver_cfg.idx;
    let measure = &solver_cfg.measure;
    let eta = critical_eta(measure, idx, &QuadratureOptions::for_dim(idx.dim()))?;
    let theta2 = block.theta2.unwrap_or(1.0 - eta);
    let cap = block.t.min(1.0);
    let rho = block.rho_grid.clone().unwrap_or_else(|| geometric_grid(1e-3 * cap, cap, 13));
    let bound = variance_bound_check(idx, measure, block.t, (block.theta1, theta2), &rho)?;
    let (mean, se) = crate::stats::mean_and_se(&law.samples);
    report(
        sink,
        "density_report.json",
        &json!({
            "time": law.time,
            "point": law.point,
            "replicates": law.samples.len(),
            "sample_mean": mean,
            "sample_mean_se": se,
            "min_sigma": law.min_sigma,
            "bandwidth": est.bandwidth,
            "integral": est.integral,
            "derivative_bounds": est.derivative_bounds,
            "point_mass": est.point_mass,
            "warnings": law.warnings.iter().chain(&est.warnings).collect::<Vec<_>>(),
            "variance_bound": bound,
        }),
    )
}

/// Run a subcommand given as a slice of arguments (without the program
/// name); convenience for tests.
pub fn run_args(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("fracspde").chain(args.iter().copied()))
}

