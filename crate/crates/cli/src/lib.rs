//! `rmp` command-line front end.

pub mod experiments;
pub mod output;
pub mod settings;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rmp_core::io::{read_instance, write_instance};
use rmp_core::{exact_minimax_joint, generate_ising, loc_lp, solve, Instance, Report};
use serde_json::json;

use experiments::{run_experiment1, run_experiment2, ORACLE_MAX_N};
use output::{ensure_dir, opt, write, write_json, Csv, PLOT_CONVERGENCE, PLOT_EXPERIMENT1, PLOT_EXPERIMENT2, VERSION};
use settings::{
    check_grid, default_alpha_grid, default_delta_grid, AdmmParams, Defaults, ExperimentConfig, FileConfig,
    DEFAULT_SAMPLES, GEN_DEFAULTS, SWEEP_DEFAULTS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, unreadable or invalid input, unwritable output.
    Usage(String),
    /// A numerical routine failed.
    Solver(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

#[derive(Debug, Parser)]
#[command(name = "rmp", version, about = "Robust max-product for minimax games on factor graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random-tree Ising instance.
    Gen(GenArgs),
    /// Run robust max-product on an instance.
    Solve(SolveArgs),
    /// Engineer's objective versus uncertainty width.
    Experiment1(Exp1Args),
    /// Payoff versus Nature's mixing weight, with sampled instantiations.
    Experiment2(Exp2Args),
    /// Per-iteration cost, objective and marginal inconsistency.
    Convergence(SolveArgs),
    /// Exact LP values for a small instance.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file with default values for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability that a tree edge is positive.
    #[arg(long)]
    pub edge_sign_prob: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct AdmmArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub primal_tol: Option<f64>,
    #[arg(long)]
    pub objective_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Instance JSON file.
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub admm: AdmmArgs,
    #[command(flatten)]
    pub common: Common,
    /// Add a wall-clock column to the trace (output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Exp1Args {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub admm: AdmmArgs,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub delta_grid: Option<Vec<f64>>,
    /// Largest n for which the LP oracle column is filled.
    #[arg(long, default_value_t = ORACLE_MAX_N)]
    pub oracle_max_n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct Exp2Args {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub admm: AdmmArgs,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Sampled instantiations per grid point and strategy.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

fn flags(model: Option<&ModelArgs>, admm: Option<&AdmmArgs>, common: &Common) -> FileConfig {
    let mut f = FileConfig {
        out: common.out.clone(),
        ..Default::default()
    };
    if let Some(m) = model {
        f.n = m.n;
        f.delta = m.delta;
        f.h = m.h;
        f.seed = m.seed;
        f.edge_sign_prob = m.edge_sign_prob;
    }
    if let Some(a) = admm {
        f.rho = a.rho;
        f.max_iter = a.max_iter;
        f.primal_tol = a.primal_tol;
        f.objective_tol = a.objective_tol;
    }
    f
}

fn resolve(model: Option<&ModelArgs>, admm: Option<&AdmmArgs>, common: &Common) -> Result<FileConfig, CliError> {
    let base = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    Ok(base.overlay(flags(model, admm, common)))
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: iteration cap reached before convergence");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Gen(a) => cmd_gen(&resolve(Some(&a.model), None, &a.common)?),
        Command::Solve(a) => {
            let cfg = resolve(None, Some(&a.admm), &a.common)?;
            cmd_solve(&a.instance, &cfg, a.timing)
        }
        Command::Convergence(a) => {
            let cfg = resolve(None, Some(&a.admm), &a.common)?;
            cmd_convergence(&a.instance, &cfg, a.timing)
        }
        Command::Experiment1(a) => {
            let mut cfg = resolve(Some(&a.model), Some(&a.admm), &a.common)?;
            if a.delta_grid.is_some() {
                cfg.delta_grid = a.delta_grid.clone();
            }
            cmd_experiment1(&cfg, a.oracle_max_n)
        }
        Command::Experiment2(a) => {
            let mut cfg = resolve(Some(&a.model), Some(&a.admm), &a.common)?;
            if a.alpha_grid.is_some() {
                cfg.alpha_grid = a.alpha_grid.clone();
            }
            if a.samples.is_some() {
                cfg.samples = a.samples;
            }
            cmd_experiment2(&cfg)
        }
        Command::Oracle(a) => cmd_oracle(&a.instance, &resolve(None, None, &a.common)?),
    }
}

pub fn cmd_gen(cfg: &FileConfig) -> Result<Outcome, CliError> {
    let spec = cfg.ising(&GEN_DEFAULTS)?;
    let model = generate_ising::<f64>(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let path = dir.join("instance.json");
    write_instance(&path, &model.instance).map_err(|e| CliError::Usage(e.to_string()))?;
    write_json(
        &dir,
        "instance.meta.json",
        &json!({
            "command": "gen",
            "version": VERSION,
            "spec": spec,
            "edges": model.edges,
            "classes": model.classes,
            "fields": model.fields,
        }),
    )?;
    println!("wrote {}", path.display());
    Ok(Outcome::Done)
}

fn load(path: &Path) -> Result<Instance, CliError> {
    read_instance(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn run_admm(instance: &Instance, admm: &AdmmParams) -> Result<Report, CliError> {
    solve(instance, &admm.config()).map_err(|e| CliError::Solver(e.to_string()))
}

fn trace_csv(report: &Report, timing: bool) -> Csv {
    let mut header = vec!["iteration", "C", "J", "residual"];
    if timing {
        header.push("wall_ms");
    }
    let mut csv = Csv::new(&header);
    for t in 0..report.iterations {
        let it = t + 1;
        let mut cells: Vec<&dyn std::fmt::Display> = vec![
            &it,
            &report.cost_trace[t],
            &report.objective_trace[t],
            &report.residual_trace[t],
        ];
        if timing {
            cells.push(&report.elapsed_ms[t]);
        }
        csv.row(&cells);
    }
    csv
}

fn solve_meta(command: &str, instance: &Path, admm: &AdmmParams, report: &Report, timing: bool) -> serde_json::Value {
    json!({
        "command": command,
        "version": VERSION,
        "instance": instance.display().to_string(),
        "admm": admm,
        "timing": timing,
        "iterations": report.iterations,
        "converged": report.converged,
        "engineer_objective": report.engineer_objective,
    })
}

fn outcome(report: &Report) -> Outcome {
    if report.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    }
}

pub fn cmd_solve(instance_path: &Path, cfg: &FileConfig, timing: bool) -> Result<Outcome, CliError> {
    let admm = cfg.admm(&GEN_DEFAULTS)?;
    let g = load(instance_path)?;
    let report = run_admm(&g, &admm)?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    write(&dir, "trace.csv", trace_csv(&report, timing).as_str())?;
    let marginals = serde_json::to_value(&report.marginals).expect("marginals serialize");
    write_json(&dir, "marginals.json", &marginals)?;
    write_json(&dir, "solve.meta.json", &solve_meta("solve", instance_path, &admm, &report, timing))?;
    println!(
        "J = {} after {} iterations (converged: {})",
        report.engineer_objective, report.iterations, report.converged
    );
    Ok(outcome(&report))
}

pub fn cmd_convergence(instance_path: &Path, cfg: &FileConfig, timing: bool) -> Result<Outcome, CliError> {
    let admm = cfg.admm(&GEN_DEFAULTS)?;
    let g = load(instance_path)?;
    let report = run_admm(&g, &admm)?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    write(&dir, "convergence.csv", trace_csv(&report, timing).as_str())?;
    write(&dir, "plot_convergence.py", PLOT_CONVERGENCE)?;
    write_json(
        &dir,
        "convergence.meta.json",
        &solve_meta("convergence", instance_path, &admm, &report, timing),
    )?;
    Ok(outcome(&report))
}

fn sweep_config(cfg: &FileConfig, d: &Defaults, grid: Vec<f64>, samples: usize) -> Result<ExperimentConfig, CliError> {
    Ok(ExperimentConfig {
        spec: cfg.ising(d)?,
        grid,
        samples_per_point: samples,
        admm: cfg.admm(d)?,
        output_dir: cfg.out_dir(),
    })
}

pub fn cmd_experiment1(cfg: &FileConfig, oracle_max_n: usize) -> Result<Outcome, CliError> {
    let grid = cfg.delta_grid.clone().unwrap_or_else(default_delta_grid);
    check_grid("delta grid", &grid, 0.0, f64::MAX)?;
    let exp = sweep_config(cfg, &SWEEP_DEFAULTS, grid, 1)?;
    let rows = run_experiment1(&exp, oracle_max_n);
    let mut csv = Csv::new(&[
        "delta",
        "j_robust",
        "j_nominal_worstcase",
        "robust_iterations",
        "robust_converged",
        "j_oracle",
        "oracle_status",
        "status",
    ]);
    for r in &rows {
        csv.row(&[
            &r.delta,
            &opt(r.j_robust),
            &opt(r.j_nominal_worstcase),
            &r.robust_iterations,
            &r.robust_converged,
            &opt(r.j_oracle),
            &r.oracle_status,
            &r.status,
        ]);
    }
    ensure_dir(&exp.output_dir)?;
    write(&exp.output_dir, "experiment1.csv", csv.as_str())?;
    write(&exp.output_dir, "plot_experiment1.py", PLOT_EXPERIMENT1)?;
    write_json(
        &exp.output_dir,
        "experiment1.meta.json",
        &json!({
            "command": "experiment1",
            "version": VERSION,
            "config": exp,
            "oracle_max_n": oracle_max_n,
        }),
    )?;
    if let Some(bad) = rows.iter().find(|r| r.failed()) {
        return Err(CliError::Solver(format!("delta = {}: {}", bad.delta, bad.status)));
    }
    Ok(if rows.iter().all(|r| r.robust_converged) {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

pub fn cmd_experiment2(cfg: &FileConfig) -> Result<Outcome, CliError> {
    let grid = cfg.alpha_grid.clone().unwrap_or_else(default_alpha_grid);
    check_grid("alpha grid", &grid, 0.0, 1.0)?;
    let samples = cfg.samples.unwrap_or(DEFAULT_SAMPLES);
    if samples == 0 {
        return Err(CliError::Usage("samples must be at least 1".into()));
    }
    let exp = sweep_config(cfg, &SWEEP_DEFAULTS, grid, samples)?;
    let result = run_experiment2(&exp)?;
    let mut summary = Csv::new(&[
        "alpha",
        "payoff_robust",
        "payoff_nominal",
        "sample_mean_robust",
        "sample_mean_nominal",
    ]);
    for r in &result.rows {
        summary.row(&[
            &r.alpha,
            &r.payoff_robust,
            &r.payoff_nominal,
            &r.sample_mean_robust,
            &r.sample_mean_nominal,
        ]);
    }
    let mut per_sample = Csv::new(&["alpha", "strategy", "sample", "payoff"]);
    for s in &result.samples {
        per_sample.row(&[&s.alpha, &s.strategy, &s.sample, &s.payoff]);
    }
    ensure_dir(&exp.output_dir)?;
    write(&exp.output_dir, "experiment2.csv", summary.as_str())?;
    write(&exp.output_dir, "experiment2_samples.csv", per_sample.as_str())?;
    write(&exp.output_dir, "plot_experiment2.py", PLOT_EXPERIMENT2)?;
    write_json(
        &exp.output_dir,
        "experiment2.meta.json",
        &json!({
            "command": "experiment2",
            "version": VERSION,
            "config": exp,
            "robust_iterations": result.robust_iterations,
            "robust_converged": result.robust_converged,
        }),
    )?;
    Ok(if result.robust_converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

pub fn cmd_oracle(instance_path: &Path, cfg: &FileConfig) -> Result<Outcome, CliError> {
    let g = load(instance_path)?;
    let loc = loc_lp(&g).map_err(|e| CliError::Solver(e.to_string()))?;
    let joint = match exact_minimax_joint(&g) {
        Ok(j) => json!({ "status": "ok", "value": j.value }),
        Err(rmp_core::GameError::Domain(m)) => json!({ "status": format!("skipped: {m}"), "value": null }),
        Err(e) => return Err(CliError::Solver(e.to_string())),
    };
    let record = json!({
        "command": "oracle",
        "version": VERSION,
        "instance": instance_path.display().to_string(),
        "loc_lp": { "status": "ok", "value": loc.value },
        "exact_minimax_joint": joint,
    });
    println!("{}", serde_json::to_string_pretty(&record).expect("JSON values serialize"));
    if cfg.out.is_some() {
        let dir = cfg.out_dir();
        ensure_dir(&dir)?;
        write_json(&dir, "oracle.json", &record)?;
    }
    Ok(Outcome::Done)
}
