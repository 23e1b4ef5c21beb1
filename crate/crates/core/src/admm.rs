//! Robust max-product: ADMM on the epigraph form of the local-polytope
//! relaxation of the Engineer's minimax problem.
//!
//! The consensus constraints `p_i(x_i) = sum_{x_{da \ i}} p_a(x_{da})` couple
//! factor blocks `(p_a, lambda_a)` with node blocks `p_i`. With scaled duals
//! `u_ai` the iteration is
//!
//! ```text
//!   (p_a, lambda_a) <- argmin lambda_a + rho/2 sum_{i in da} |M_ai p_a - (p_i - u_ai)|^2
//!                      s.t. lambda_a + <p_a, psi_a(., theta)> >= 0 for all theta, p_a >= 0
//!   p_i             <- Proj_simplex( mean_{a in di} (M_ai p_a + u_ai) )
//!   u_ai            <- u_ai + M_ai p_a - p_i
//! ```
//!
//! where `M_ai` sums a factor table down to the marginal of its `i` slot.
//! Factor updates are solved exactly by the active-set QP; node updates are
//! exact simplex projections.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{decode_assignment, FactorGraph};
use crate::numerics::{project_simplex, solve_qp_from, Matrix, NumericsError, QpProblem, QpSettings, QpStatus};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmmError {
    #[error("invalid ADMM configuration: {0}")]
    Config(String),
    #[error("factor {factor}: QP solver finished with status {status:?}")]
    Solver { factor: usize, status: QpStatus },
    #[error("factor {factor}: {source}")]
    Numerics {
        factor: usize,
        #[source]
        source: NumericsError,
    },
    #[error("non-finite ADMM state at iteration {0}")]
    NonFinite(usize),
}

/// Factor marginals `p_a` (flat tables) and node marginals `p_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MarginalSet<T> {
    pub factors: Vec<Vec<T>>,
    pub nodes: Vec<Vec<T>>,
}

impl<T: Real> MarginalSet<T> {
    /// Uniform node marginals and their product on every factor.
    pub fn uniform(graph: &FactorGraph<T>) -> Self {
        let q = graph.q();
        let node = vec![T::one() / T::from_usize_lossy(q); q];
        let factors = (0..graph.num_factors())
            .map(|a| {
                let size = graph.factor_size(a);
                vec![T::one() / T::from_usize_lossy(size); size]
            })
            .collect();
        Self {
            factors,
            nodes: vec![node; graph.num_variables()],
        }
    }

    /// Point masses on the pure assignment `x` (alphabet indices).
    pub fn point_mass(graph: &FactorGraph<T>, x: &[usize]) -> Self {
        let q = graph.q();
        let nodes = x
            .iter()
            .map(|&v| {
                let mut p = vec![T::zero(); q];
                p[v] = T::one();
                p
            })
            .collect();
        let factors = (0..graph.num_factors())
            .map(|a| {
                let mut p = vec![T::zero(); graph.factor_size(a)];
                p[graph.local_assignment(a, x)] = T::one();
                p
            })
            .collect();
        Self { factors, nodes }
    }

    /// Marginal of `p_a` on the variable in `slot`.
    pub fn marginalize(&self, graph: &FactorGraph<T>, a: usize, slot: usize) -> Vec<T> {
        marginalize(&self.factors[a], graph.q(), graph.factor(a).degree(), slot)
    }

    /// Largest `|sum_{x_{da\i}} p_a - p_i|` over all edges and symbols.
    pub fn max_inconsistency(&self, graph: &FactorGraph<T>) -> T {
        let mut worst = T::zero();
        for i in 0..graph.num_variables() {
            for inc in graph.incidences(i) {
                let m = self.marginalize(graph, inc.factor, inc.slot);
                for (a, b) in m.iter().zip(&self.nodes[i]) {
                    worst = worst.max((*a - *b).abs());
                }
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.factors.iter().chain(&self.nodes).flatten().all(|v| v.is_finite())
    }
}

/// Sums a factor table down to the marginal of one slot.
pub fn marginalize<T: Real>(table: &[T], q: usize, degree: usize, slot: usize) -> Vec<T> {
    let mut out = vec![T::zero(); q];
    // Row-major layout: the slot's digit has stride q^(degree-1-slot).
    let stride = q.pow((degree - 1 - slot) as u32);
    for (s, &v) in table.iter().enumerate() {
        out[(s / stride) % q] += v;
    }
    out
}

/// Worst-case payoff `sum_a min_theta <p_a, psi_a(., theta)>` of factor marginals.
pub fn engineer_objective<T: Real>(graph: &FactorGraph<T>, factor_marginals: &[Vec<T>]) -> T {
    (0..graph.num_factors())
        .map(|a| worst_case_term(graph, a, &factor_marginals[a]).1)
        .sum()
}

/// `(argmin, min)` over factor `a`'s domain of `<p_a, psi_a(., theta)>`; ties go to the lowest index.
pub fn worst_case_term<T: Real>(graph: &FactorGraph<T>, a: usize, p_a: &[T]) -> (usize, T) {
    let f = graph.factor(a);
    let mut best = (0, T::infinity());
    for t in 0..f.num_thetas() {
        let v = p_a
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (s, &p)| acc + p * f.psi(s, t));
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig<T> {
    pub rho: T,
    pub max_iter: usize,
    /// Threshold on the mean absolute marginal inconsistency.
    pub primal_tol: T,
    /// Threshold on `|C(t) - C(t-1)|`.
    pub objective_tol: T,
    pub qp: QpSettings<T>,
}

impl<T: Real> Default for AdmmConfig<T> {
    fn default() -> Self {
        Self {
            rho: T::one(),
            max_iter: 100,
            primal_tol: T::lit(1e-6),
            objective_tol: T::lit(1e-8),
            qp: QpSettings::default(),
        }
    }
}

impl<T: Real> AdmmConfig<T> {
    pub fn check(&self) -> Result<(), AdmmError> {
        let mut bad = Vec::new();
        if !(self.rho > T::zero() && self.rho.is_finite()) {
            bad.push(format!("rho = {} (need rho > 0)", self.rho));
        }
        if self.max_iter == 0 {
            bad.push("max_iter = 0 (need >= 1)".to_string());
        }
        if !(self.primal_tol > T::zero()) {
            bad.push(format!("primal_tol = {} (need > 0)", self.primal_tol));
        }
        if !(self.objective_tol > T::zero()) {
            bad.push(format!("objective_tol = {} (need > 0)", self.objective_tol));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(AdmmError::Config(bad.join(", ")))
        }
    }
}

/// Full iterate: marginals, scaled duals (one table per edge), epigraph values.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T> {
    pub marginals: MarginalSet<T>,
    /// `duals[e][x]` for global edge `e` (see [`FactorGraph::edge_offset`]).
    pub duals: Vec<Vec<T>>,
    pub epigraph: Vec<T>,
    pub iteration: usize,
}

impl<T: Real> AdmmState<T> {
    /// `C = sum_a lambda_a`.
    pub fn cost(&self) -> T {
        self.epigraph.iter().copied().sum()
    }
}

/// Uniform marginals, zero duals, tight epigraph values.
pub fn init<T: Real>(graph: &FactorGraph<T>) -> AdmmState<T> {
    let marginals = MarginalSet::uniform(graph);
    let epigraph = (0..graph.num_factors())
        .map(|a| -worst_case_term(graph, a, &marginals.factors[a]).1)
        .collect();
    AdmmState {
        marginals,
        duals: vec![vec![T::zero(); graph.q()]; graph.num_edges()],
        epigraph,
        iteration: 0,
    }
}

/// Residual vector `r_ai(x) = p_i(x) - sum p_a` (edge-major) and its mean absolute value.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals<T> {
    pub vector: Vec<T>,
    pub mean_l1: T,
}

pub fn residuals<T: Real>(graph: &FactorGraph<T>, state: &AdmmState<T>) -> Residuals<T> {
    let q = graph.q();
    let mut vector = vec![T::zero(); graph.num_edges() * q];
    for i in 0..graph.num_variables() {
        for inc in graph.incidences(i) {
            let m = state.marginals.marginalize(graph, inc.factor, inc.slot);
            for x in 0..q {
                vector[inc.edge * q + x] = state.marginals.nodes[i][x] - m[x];
            }
        }
    }
    let total: T = vector.iter().map(|v| v.abs()).sum();
    let mean_l1 = if vector.is_empty() {
        T::zero()
    } else {
        total / T::from_usize_lossy(vector.len())
    };
    Residuals { vector, mean_l1 }
}

/// The factor subproblem in canonical form over `z = (p_a, lambda_a)`.
///
/// `targets[slot]` is the vector each slot marginal is pulled towards.
pub fn factor_qp<T: Real>(graph: &FactorGraph<T>, a: usize, targets: &[Vec<T>], rho: T) -> QpProblem<T> {
    let f = graph.factor(a);
    let q = graph.q();
    let k = f.degree();
    let size = graph.factor_size(a);
    let d = size + 1;
    let digits: Vec<Vec<usize>> = (0..size)
        .map(|s| {
            let mut dg = vec![0; k];
            decode_assignment(s, q, &mut dg);
            dg
        })
        .collect();

    let mut qm = Matrix::zeros(d, d);
    for s1 in 0..size {
        for s2 in 0..size {
            let shared = digits[s1].iter().zip(&digits[s2]).filter(|(x, y)| x == y).count();
            qm[(s1, s2)] = rho * T::from_usize_lossy(shared);
        }
    }
    let mut c = vec![T::zero(); d];
    set_linear_term(&mut c, &digits, targets, rho);

    let mut g = Matrix::zeros(size + f.num_thetas(), d);
    let mut h = vec![T::zero(); size + f.num_thetas()];
    for s in 0..size {
        g[(s, s)] = T::one();
    }
    for t in 0..f.num_thetas() {
        let r = size + t;
        for s in 0..size {
            g[(r, s)] = f.psi(s, t);
        }
        g[(r, size)] = T::one();
        h[r] = T::zero();
    }
    QpProblem { q: qm, c, g, h }
}

fn set_linear_term<T: Real>(c: &mut [T], digits: &[Vec<usize>], targets: &[Vec<T>], rho: T) {
    let size = digits.len();
    for (s, dg) in digits.iter().enumerate() {
        let pull: T = dg.iter().enumerate().map(|(slot, &x)| targets[slot][x]).sum();
        c[s] = -rho * pull;
    }
    c[size] = T::one();
}

/// Targets `p_i - u_ai` for every slot of factor `a`.
fn factor_targets<T: Real>(graph: &FactorGraph<T>, a: usize, state: &AdmmState<T>) -> Vec<Vec<T>> {
    let off = graph.edge_offset(a);
    graph
        .factor(a)
        .neighbors
        .iter()
        .enumerate()
        .map(|(slot, &i)| {
            state.marginals.nodes[i]
                .iter()
                .zip(&state.duals[off + slot])
                .map(|(&p, &u)| p - u)
                .collect()
        })
        .collect()
}

fn solve_factor<T: Real>(
    graph: &FactorGraph<T>,
    a: usize,
    qp: &QpProblem<T>,
    previous: &[T],
    settings: &QpSettings<T>,
) -> Result<(Vec<T>, T), AdmmError> {
    let mut start: Vec<T> = previous.iter().map(|&v| v.max(T::zero())).collect();
    let lambda = -worst_case_term(graph, a, &start).1;
    start.push(lambda);
    let sol = solve_qp_from(qp, Some(&start), settings).map_err(|source| AdmmError::Numerics { factor: a, source })?;
    if sol.status != QpStatus::Optimal {
        return Err(AdmmError::Solver {
            factor: a,
            status: sol.status,
        });
    }
    let mut z = sol.z;
    z.pop();
    for v in &mut z {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    let lambda = -worst_case_term(graph, a, &z).1;
    Ok((z, lambda))
}

/// Exact minimiser of factor `a`'s block of the augmented Lagrangian.
///
/// Returns `(p_a, lambda_a)` with `lambda_a` tight.
pub fn factor_update<T: Real>(
    graph: &FactorGraph<T>,
    a: usize,
    state: &AdmmState<T>,
    cfg: &AdmmConfig<T>,
) -> Result<(Vec<T>, T), AdmmError> {
    let targets = factor_targets(graph, a, state);
    let qp = factor_qp(graph, a, &targets, cfg.rho);
    solve_factor(graph, a, &qp, &state.marginals.factors[a], &cfg.qp)
}

/// Simplex projection of the mean over adjacent factors of `M_ai p_a + u_ai`.
pub fn variable_update<T: Real>(graph: &FactorGraph<T>, i: usize, state: &AdmmState<T>) -> Vec<T> {
    let q = graph.q();
    let inc = graph.incidences(i);
    let mut avg = vec![T::zero(); q];
    for e in inc {
        let m = state.marginals.marginalize(graph, e.factor, e.slot);
        for x in 0..q {
            avg[x] += m[x] + state.duals[e.edge][x];
        }
    }
    let n = T::from_usize_lossy(inc.len());
    for v in &mut avg {
        *v /= n;
    }
    project_simplex(&avg).expect("finite state")
}

/// `u_ai += M_ai p_a - p_i` on every edge.
pub fn dual_update<T: Real>(graph: &FactorGraph<T>, state: &mut AdmmState<T>) {
    for i in 0..graph.num_variables() {
        for inc in graph.incidences(i) {
            let m = state.marginals.marginalize(graph, inc.factor, inc.slot);
            let p_i = &state.marginals.nodes[i];
            for (x, u) in state.duals[inc.edge].iter_mut().enumerate() {
                *u += m[x] - p_i[x];
            }
        }
    }
}

/// Everything recorded by [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub marginals: MarginalSet<T>,
    pub epigraph: Vec<T>,
    /// `J = sum_a min_theta <p_a, psi_a>` on the final factor marginals.
    pub engineer_objective: T,
    /// `C(t) = sum_a lambda_a(t)`, one entry per iteration.
    pub cost_trace: Vec<T>,
    /// `J(t)`, one entry per iteration.
    pub objective_trace: Vec<T>,
    /// Mean absolute marginal inconsistency, one entry per iteration.
    pub residual_trace: Vec<T>,
    /// Wall-clock milliseconds since the start of the solve, per iteration.
    pub elapsed_ms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
}

/// Reusable per-factor QPs; only the linear term changes between iterations.
struct FactorBlocks<T> {
    qps: Vec<QpProblem<T>>,
    digits: Vec<Vec<Vec<usize>>>,
}

impl<T: Real> FactorBlocks<T> {
    fn new(graph: &FactorGraph<T>, state: &AdmmState<T>, rho: T) -> Self {
        let q = graph.q();
        let mut qps = Vec::with_capacity(graph.num_factors());
        let mut digits = Vec::with_capacity(graph.num_factors());
        for a in 0..graph.num_factors() {
            qps.push(factor_qp(graph, a, &factor_targets(graph, a, state), rho));
            let k = graph.factor(a).degree();
            digits.push(
                (0..graph.factor_size(a))
                    .map(|s| {
                        let mut dg = vec![0; k];
                        decode_assignment(s, q, &mut dg);
                        dg
                    })
                    .collect(),
            );
        }
        Self { qps, digits }
    }
}

/// One full iteration: all factor blocks, then all node blocks, then duals.
fn iterate<T: Real>(
    graph: &FactorGraph<T>,
    state: &mut AdmmState<T>,
    blocks: &mut FactorBlocks<T>,
    cfg: &AdmmConfig<T>,
) -> Result<(), AdmmError> {
    for a in 0..graph.num_factors() {
        let targets = factor_targets(graph, a, state);
        let qp = &mut blocks.qps[a];
        set_linear_term(&mut qp.c, &blocks.digits[a], &targets, cfg.rho);
        let (p_a, lambda) = solve_factor(graph, a, qp, &state.marginals.factors[a], &cfg.qp)?;
        state.marginals.factors[a] = p_a;
        state.epigraph[a] = lambda;
    }
    for i in 0..graph.num_variables() {
        state.marginals.nodes[i] = variable_update(graph, i, state);
    }
    dual_update(graph, state);
    state.iteration += 1;
    if !(state.marginals.is_finite() && state.duals.iter().flatten().all(|v| v.is_finite())) {
        return Err(AdmmError::NonFinite(state.iteration));
    }
    Ok(())
}

/// Runs ADMM until the residual and cost-change tests both pass, or `max_iter`.
pub fn solve<T: Real>(graph: &FactorGraph<T>, cfg: &AdmmConfig<T>) -> Result<SolveReport<T>, AdmmError> {
    solve_from(graph, init(graph), cfg)
}

/// Like [`solve`], continuing from an existing state.
pub fn solve_from<T: Real>(
    graph: &FactorGraph<T>,
    mut state: AdmmState<T>,
    cfg: &AdmmConfig<T>,
) -> Result<SolveReport<T>, AdmmError> {
    cfg.check()?;
    let start = Instant::now();
    let mut blocks = FactorBlocks::new(graph, &state, cfg.rho);
    let mut cost_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut elapsed_ms = Vec::new();
    let mut previous_cost = state.cost();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        iterate(graph, &mut state, &mut blocks, cfg)?;
        let cost = state.cost();
        let res = residuals(graph, &state).mean_l1;
        cost_trace.push(cost);
        objective_trace.push(engineer_objective(graph, &state.marginals.factors));
        residual_trace.push(res);
        elapsed_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if res <= cfg.primal_tol && (cost - previous_cost).abs() <= cfg.objective_tol {
            converged = true;
            break;
        }
        previous_cost = cost;
    }
    Ok(SolveReport {
        engineer_objective: engineer_objective(graph, &state.marginals.factors),
        iterations: cost_trace.len(),
        marginals: state.marginals,
        epigraph: state.epigraph,
        cost_trace,
        objective_trace,
        residual_trace,
        elapsed_ms,
        converged,
        wall_time: start.elapsed(),
    })
}
