//! The two sweeps: objective versus uncertainty width, and payoff versus
//! Nature's mixing weight.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rmp_core::{
    build_ising, expected_payoff, loc_lp, max_product_map, mix_with_uniform, nature_best_response, nominal_instance,
    pure_payoff, solve, EngineerStrategy, Instance, IsingSpec, NatureStrategy, TreeSampler,
};

use crate::settings::{AdmmParams, ExperimentConfig};
use crate::CliError;

/// Largest tree on which the sweep also solves the local-polytope LP.
pub const ORACLE_MAX_N: usize = 100;

/// Robust and nominal strategies for one instance.
pub struct Strategies {
    pub instance: Instance,
    pub robust: EngineerStrategy<f64>,
    pub robust_iterations: usize,
    pub robust_converged: bool,
    pub nominal: EngineerStrategy<f64>,
}

pub fn strategies(spec: &IsingSpec, admm: &AdmmParams) -> Result<Strategies, CliError> {
    let instance: Instance = build_ising(spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = solve(&instance, &admm.config()).map_err(|e| CliError::Solver(e.to_string()))?;
    let nominal = nominal_instance(&instance).map_err(|e| CliError::Usage(e.to_string()))?;
    let map = max_product_map(&nominal).map_err(|e| CliError::Solver(e.to_string()))?;
    Ok(Strategies {
        robust: EngineerStrategy::from_marginals(report.marginals),
        robust_iterations: report.iterations,
        robust_converged: report.converged,
        nominal: EngineerStrategy::from_assignment(&instance, &map.x),
        instance,
    })
}

/// Payoff of `p` against Nature's best response to it.
pub fn worst_case(instance: &Instance, p: &EngineerStrategy<f64>) -> Result<f64, CliError> {
    let q = nature_best_response(instance, p).map_err(|e| CliError::Solver(e.to_string()))?;
    expected_payoff(instance, p, &q).map_err(|e| CliError::Solver(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Row {
    pub delta: f64,
    pub j_robust: Option<f64>,
    pub j_nominal_worstcase: Option<f64>,
    pub robust_iterations: usize,
    pub robust_converged: bool,
    pub j_oracle: Option<f64>,
    pub oracle_status: String,
    /// `ok` or the failure message.
    pub status: String,
}

impl Exp1Row {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

pub fn experiment1_point(spec: &IsingSpec, admm: &AdmmParams, oracle_max_n: usize) -> Exp1Row {
    let mut row = Exp1Row {
        delta: spec.delta,
        j_robust: None,
        j_nominal_worstcase: None,
        robust_iterations: 0,
        robust_converged: false,
        j_oracle: None,
        oracle_status: String::new(),
        status: "ok".into(),
    };
    let s = match strategies(spec, admm) {
        Ok(s) => s,
        Err(e) => {
            row.status = e.to_string();
            row.oracle_status = "not run".into();
            return row;
        }
    };
    row.robust_iterations = s.robust_iterations;
    row.robust_converged = s.robust_converged;
    match (worst_case(&s.instance, &s.robust), worst_case(&s.instance, &s.nominal)) {
        (Ok(r), Ok(n)) => {
            row.j_robust = Some(r);
            row.j_nominal_worstcase = Some(n);
        }
        (Err(e), _) | (_, Err(e)) => row.status = e.to_string(),
    }
    row.oracle_status = if spec.n > oracle_max_n {
        format!("skipped: n > {oracle_max_n}")
    } else {
        match loc_lp(&s.instance) {
            Ok(sol) => {
                row.j_oracle = Some(sol.value);
                "ok".into()
            }
            Err(e) => format!("failed: {e}"),
        }
    };
    row
}

/// One row per grid value, in grid order; the tree, classes and fields are
/// shared across the sweep because only `delta` changes in the spec.
pub fn run_experiment1(cfg: &ExperimentConfig, oracle_max_n: usize) -> Vec<Exp1Row> {
    cfg.grid
        .par_iter()
        .map(|&delta| {
            let spec = IsingSpec { delta, ..cfg.spec };
            experiment1_point(&spec, &cfg.admm, oracle_max_n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Row {
    pub alpha: f64,
    pub payoff_robust: f64,
    pub payoff_nominal: f64,
    pub sample_mean_robust: f64,
    pub sample_mean_nominal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Sample {
    pub alpha: f64,
    pub strategy: &'static str,
    pub sample: usize,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Result {
    pub rows: Vec<Exp2Row>,
    pub samples: Vec<Exp2Sample>,
    pub robust_iterations: usize,
    pub robust_converged: bool,
}

/// Sampling stream for grid point `k` and strategy `which` (0 robust, 1 nominal).
fn sample_rng(seed: u64, k: usize, which: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * k as u64 + which);
    rng
}

pub fn run_experiment2(cfg: &ExperimentConfig) -> Result<Exp2Result, CliError> {
    let s = strategies(&cfg.spec, &cfg.admm)?;
    let g = &s.instance;
    let solver = |e: rmp_core::GameError| CliError::Solver(e.to_string());
    let q_robust = nature_best_response(g, &s.robust).map_err(solver)?;
    let q_nominal = nature_best_response(g, &s.nominal).map_err(solver)?;
    let robust_sampler = TreeSampler::new(g, &s.robust).map_err(solver)?;
    let nominal_sampler = TreeSampler::new(g, &s.nominal).map_err(solver)?;

    let points: Vec<Result<(Exp2Row, Vec<Exp2Sample>), CliError>> = cfg
        .grid
        .par_iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let mut samples = Vec::with_capacity(2 * cfg.samples_per_point);
            let mut score = |which: u64,
                             name: &'static str,
                             p: &EngineerStrategy<f64>,
                             q0: &NatureStrategy<f64>,
                             sampler: &TreeSampler<f64>|
             -> Result<(f64, f64), CliError> {
                let q = mix_with_uniform(q0, alpha).map_err(solver)?;
                let payoff = expected_payoff(g, p, &q).map_err(solver)?;
                let mut rng = sample_rng(cfg.spec.seed, k, which);
                let mut total = 0.0;
                for sample in 0..cfg.samples_per_point {
                    let x = sampler.sample(&mut rng).map_err(solver)?;
                    let v = pure_payoff(g, &x, &q).map_err(solver)?;
                    total += v;
                    samples.push(Exp2Sample {
                        alpha,
                        strategy: name,
                        sample,
                        payoff: v,
                    });
                }
                Ok((payoff, total / cfg.samples_per_point as f64))
            };
            let (payoff_robust, sample_mean_robust) = score(0, "robust", &s.robust, &q_robust, &robust_sampler)?;
            let (payoff_nominal, sample_mean_nominal) =
                score(1, "nominal", &s.nominal, &q_nominal, &nominal_sampler)?;
            Ok((
                Exp2Row {
                    alpha,
                    payoff_robust,
                    payoff_nominal,
                    sample_mean_robust,
                    sample_mean_nominal,
                },
                samples,
            ))
        })
        .collect();

    let mut rows = Vec::with_capacity(points.len());
    let mut samples = Vec::new();
    for p in points {
        let (row, s) = p?;
        rows.push(row);
        samples.extend(s);
    }
    Ok(Exp2Result {
        rows,
        samples,
        robust_iterations: s.robust_iterations,
        robust_converged: s.robust_converged,
    })
}
