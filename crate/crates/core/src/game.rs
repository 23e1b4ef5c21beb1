//! Game-theoretic evaluation: payoffs, best responses, mixtures, sampling
//! from tree-structured strategies, and exact LP oracles for the game value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::admm::{worst_case_term, MarginalSet};
use crate::graph::{decode_assignment, FactorGraph};
use crate::numerics::{solve_lp, LpProblem, LpStatus, NumericsError, Sense};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("LP oracle finished with status {0:?}")]
    Lp(LpStatus),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Consistency tolerance for treating marginals as a point of the local polytope.
pub const LOC_TOL: f64 = 1e-6;

/// Largest `|X|^n` accepted by [`exact_minimax_joint`].
pub const JOINT_LIMIT: usize = 1 << 14;

/// Nature's product strategy: one distribution over each factor's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct NatureStrategy<T> {
    pub factors: Vec<Vec<T>>,
}

impl<T: Real> NatureStrategy<T> {
    pub fn point_mass(graph: &FactorGraph<T>, theta: &[usize]) -> Self {
        let factors = graph
            .factors()
            .iter()
            .zip(theta)
            .map(|(f, &t)| {
                let mut q = vec![T::zero(); f.num_thetas()];
                q[t] = T::one();
                q
            })
            .collect();
        Self { factors }
    }

    pub fn uniform(graph: &FactorGraph<T>) -> Self {
        let factors = graph
            .factors()
            .iter()
            .map(|f| vec![T::one() / T::from_usize_lossy(f.num_thetas()); f.num_thetas()])
            .collect();
        Self { factors }
    }

    fn check(&self, graph: &FactorGraph<T>) -> Result<(), GameError> {
        if self.factors.len() != graph.num_factors()
            || self
                .factors
                .iter()
                .zip(graph.factors())
                .any(|(q, f)| q.len() != f.num_thetas())
        {
            return Err(GameError::Domain("Nature strategy shape does not match the instance".into()));
        }
        Ok(())
    }
}

/// The Engineer's strategy, represented by its factor and node marginals
/// (sufficient for every payoff), optionally with the pure assignment it
/// came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineerStrategy<T> {
    pub marginals: MarginalSet<T>,
    pub pure: Option<Vec<usize>>,
}

impl<T: Real> EngineerStrategy<T> {
    pub fn from_marginals(marginals: MarginalSet<T>) -> Self {
        Self { marginals, pure: None }
    }

    pub fn from_assignment(graph: &FactorGraph<T>, x: &[usize]) -> Self {
        Self {
            marginals: MarginalSet::point_mass(graph, x),
            pure: Some(x.to_vec()),
        }
    }

    fn check_shape(&self, graph: &FactorGraph<T>) -> Result<(), GameError> {
        let m = &self.marginals;
        let ok = m.factors.len() == graph.num_factors()
            && m.nodes.len() == graph.num_variables()
            && m.factors.iter().enumerate().all(|(a, p)| p.len() == graph.factor_size(a))
            && m.nodes.iter().all(|p| p.len() == graph.q());
        if ok {
            Ok(())
        } else {
            Err(GameError::Domain("Engineer strategy shape does not match the instance".into()))
        }
    }

    /// Shape check plus local consistency within [`LOC_TOL`].
    pub fn check(&self, graph: &FactorGraph<T>) -> Result<(), GameError> {
        self.check_shape(graph)?;
        let gap = self.marginals.max_inconsistency(graph);
        if gap > T::lit(LOC_TOL) {
            return Err(GameError::Domain(format!(
                "marginals are not locally consistent (max gap {gap})"
            )));
        }
        Ok(())
    }
}

/// `sum_a sum_theta q_a(theta) sum_x p_a(x) psi_a(x; theta)`.
pub fn expected_payoff<T: Real>(
    graph: &FactorGraph<T>,
    p: &EngineerStrategy<T>,
    q: &NatureStrategy<T>,
) -> Result<T, GameError> {
    p.check_shape(graph)?;
    q.check(graph)?;
    let mut total = T::zero();
    for (a, f) in graph.factors().iter().enumerate() {
        for (t, &qt) in q.factors[a].iter().enumerate() {
            if qt == T::zero() {
                continue;
            }
            let e = p.marginals.factors[a]
                .iter()
                .enumerate()
                .fold(T::zero(), |acc, (s, &ps)| acc + ps * f.psi(s, t));
            total += qt * e;
        }
    }
    Ok(total)
}

/// Payoff of a pure assignment against a mixed Nature strategy.
pub fn pure_payoff<T: Real>(graph: &FactorGraph<T>, x: &[usize], q: &NatureStrategy<T>) -> Result<T, GameError> {
    q.check(graph)?;
    if x.len() != graph.num_variables() || x.iter().any(|&v| v >= graph.q()) {
        return Err(GameError::Domain("assignment does not match the instance".into()));
    }
    Ok(graph
        .factors()
        .iter()
        .enumerate()
        .map(|(a, f)| {
            let s = graph.local_assignment(a, x);
            q.factors[a]
                .iter()
                .enumerate()
                .fold(T::zero(), |acc, (t, &qt)| acc + qt * f.psi(s, t))
        })
        .sum())
}

/// Per-factor pure best response of Nature; ties go to the lowest index.
pub fn nature_best_response<T: Real>(
    graph: &FactorGraph<T>,
    p: &EngineerStrategy<T>,
) -> Result<NatureStrategy<T>, GameError> {
    p.check_shape(graph)?;
    let theta: Vec<usize> = (0..graph.num_factors())
        .map(|a| worst_case_term(graph, a, &p.marginals.factors[a]).0)
        .collect();
    Ok(NatureStrategy::point_mass(graph, &theta))
}

/// `(1 - alpha) q_a + alpha / |Theta_a|` on every factor.
pub fn mix_with_uniform<T: Real>(q: &NatureStrategy<T>, alpha: T) -> Result<NatureStrategy<T>, GameError> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(GameError::Domain(format!("mixing weight {alpha} outside [0, 1]")));
    }
    let factors = q
        .factors
        .iter()
        .map(|qa| {
            let u = alpha / T::from_usize_lossy(qa.len());
            qa.iter().map(|&v| (T::one() - alpha) * v + u).collect()
        })
        .collect();
    Ok(NatureStrategy { factors })
}

/// Draws pure assignments from the tree distribution with given marginals.
///
/// The tree is rooted at variable 0. The root is drawn from its node
/// marginal; every other factor, reached through a parent variable, draws
/// its remaining variables jointly from the slice of `p_a` selected by the
/// parent's value.
pub struct TreeSampler<'g, T> {
    graph: &'g FactorGraph<T>,
    root: Vec<T>,
    /// `(factor, parent slot)` in breadth-first order.
    order: Vec<(usize, usize)>,
    factors: Vec<Vec<T>>,
}

/// Attempts at redrawing a whole sample when a conditional slice is empty.
const MAX_REDRAWS: usize = 64;

/// Slices whose mass is at most this are structural zeros.
const SLICE_FLOOR: f64 = 1e-12;

impl<'g, T: Real> TreeSampler<'g, T> {
    pub fn new(graph: &'g FactorGraph<T>, p: &EngineerStrategy<T>) -> Result<Self, GameError> {
        if !graph.is_tree() {
            return Err(GameError::Domain("tree sampling requires a tree factor graph".into()));
        }
        p.check(graph)?;
        let mut order = Vec::with_capacity(graph.num_factors());
        let mut seen = vec![false; graph.num_factors()];
        let mut queue = vec![0usize];
        let mut head = 0;
        while head < queue.len() {
            let i = queue[head];
            head += 1;
            for inc in graph.incidences(i) {
                if std::mem::replace(&mut seen[inc.factor], true) {
                    continue;
                }
                order.push((inc.factor, inc.slot));
                queue.extend(graph.factor(inc.factor).neighbors.iter().filter(|&&j| j != i));
            }
        }
        let clamp = |v: &Vec<T>| v.iter().map(|&x| x.max(T::zero())).collect::<Vec<T>>();
        Ok(Self {
            graph,
            root: clamp(&p.marginals.nodes[0]),
            order,
            factors: p.marginals.factors.iter().map(clamp).collect(),
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<usize>, GameError> {
        for _ in 0..MAX_REDRAWS {
            if let Some(x) = self.try_sample(rng) {
                return Ok(x);
            }
        }
        Err(GameError::Domain(
            "every redraw hit a zero-probability conditional slice".into(),
        ))
    }

    fn try_sample<R: Rng>(&self, rng: &mut R) -> Option<Vec<usize>> {
        let g = self.graph;
        let q = g.q();
        let mut x = vec![usize::MAX; g.num_variables()];
        x[0] = draw(&self.root, rng)?;
        let mut digits = Vec::new();
        for &(a, slot) in &self.order {
            let f = g.factor(a);
            if f.degree() == 1 {
                continue;
            }
            let parent = x[f.neighbors[slot]];
            digits.resize(f.degree(), 0);
            let table = &self.factors[a];
            let weights: Vec<T> = (0..table.len())
                .map(|s| {
                    decode_assignment(s, q, &mut digits);
                    if digits[slot] == parent {
                        table[s]
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let s = draw(&weights, rng)?;
            decode_assignment(s, q, &mut digits);
            for (k, &j) in f.neighbors.iter().enumerate() {
                x[j] = digits[k];
            }
        }
        Some(x)
    }
}

/// Index drawn proportionally to `weights`; `None` for an (effectively) empty slice.
fn draw<T: Real, R: Rng>(weights: &[T], rng: &mut R) -> Option<usize> {
    let total: T = weights.iter().copied().sum();
    if !(total > T::lit(SLICE_FLOOR)) {
        return None;
    }
    let u = T::lit(rng.gen::<f64>()) * total;
    let mut acc = T::zero();
    let mut last = None;
    for (k, &w) in weights.iter().enumerate() {
        if w <= T::zero() {
            continue;
        }
        acc += w;
        last = Some(k);
        if u < acc {
            return Some(k);
        }
    }
    last
}

/// One seeded draw from the tree distribution of `p`.
pub fn sample_tree_mrf<T: Real>(
    graph: &FactorGraph<T>,
    p: &EngineerStrategy<T>,
    seed: u64,
) -> Result<Vec<usize>, GameError> {
    let sampler = TreeSampler::new(graph, p)?;
    sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Optimal value and an optimal joint distribution over `X^V`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution<T> {
    pub value: T,
    /// Indexed row-major over assignments, variable 0 most significant.
    pub joint: Vec<T>,
}

impl<T: Real> JointSolution<T> {
    /// Factor and node marginals of the joint distribution.
    pub fn marginals(&self, graph: &FactorGraph<T>) -> MarginalSet<T> {
        let q = graph.q();
        let n = graph.num_variables();
        let mut m = MarginalSet {
            factors: (0..graph.num_factors()).map(|a| vec![T::zero(); graph.factor_size(a)]).collect(),
            nodes: vec![vec![T::zero(); q]; n],
        };
        let mut x = vec![0; n];
        for (code, &p) in self.joint.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            decode_assignment(code, q, &mut x);
            for a in 0..graph.num_factors() {
                m.factors[a][graph.local_assignment(a, &x)] += p;
            }
            for (i, &v) in x.iter().enumerate() {
                m.nodes[i][v] += p;
            }
        }
        m
    }
}

/// Game value by an LP over the full joint simplex (no relaxation).
pub fn exact_minimax_joint<T: Real>(graph: &FactorGraph<T>) -> Result<JointSolution<T>, GameError> {
    let n = graph.num_variables();
    let q = graph.q();
    let total = q
        .checked_pow(n as u32)
        .filter(|&t| t <= JOINT_LIMIT)
        .ok_or_else(|| GameError::Domain(format!("|X|^n = {q}^{n} exceeds the joint oracle limit")))?;
    let m = graph.num_factors();
    let nv = total + m;
    let mut c = vec![T::zero(); nv];
    for cv in &mut c[total..] {
        *cv = T::one();
    }
    let mut lp = LpProblem::new(Sense::Maximize, c);
    for a in 0..m {
        lp.set_free(total + a);
    }
    let mut row = vec![T::zero(); nv];
    for r in &mut row[..total] {
        *r = T::one();
    }
    lp.add_eq(&row, T::one());

    let locals: Vec<Vec<usize>> = {
        let mut x = vec![0; n];
        (0..total)
            .map(|code| {
                decode_assignment(code, q, &mut x);
                (0..m).map(|a| graph.local_assignment(a, &x)).collect()
            })
            .collect()
    };
    for (a, f) in graph.factors().iter().enumerate() {
        for t in 0..f.num_thetas() {
            row.iter_mut().for_each(|v| *v = T::zero());
            for (code, loc) in locals.iter().enumerate() {
                row[code] = f.psi(loc[a], t);
            }
            row[total + a] = -T::one();
            lp.add_ge(&row, T::zero());
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(GameError::Lp(sol.status));
    }
    Ok(JointSolution {
        value: sol.objective,
        joint: sol.x[..total].iter().map(|&v| v.max(T::zero())).collect(),
    })
}

/// Optimal value of the local-polytope relaxation and optimal marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct LocSolution<T> {
    pub value: T,
    pub marginals: MarginalSet<T>,
}

/// Solves the local-polytope relaxation of the Engineer's problem as one LP
/// in `(p_a, p_i, lambda_a)`.
pub fn loc_lp<T: Real>(graph: &FactorGraph<T>) -> Result<LocSolution<T>, GameError> {
    let q = graph.q();
    let m = graph.num_factors();
    let n = graph.num_variables();
    let mut factor_off = Vec::with_capacity(m);
    let mut next = 0;
    for a in 0..m {
        factor_off.push(next);
        next += graph.factor_size(a);
    }
    let node_off = next;
    let lambda_off = node_off + n * q;
    let nv = lambda_off + m;

    let mut c = vec![T::zero(); nv];
    for cv in &mut c[lambda_off..] {
        *cv = T::one();
    }
    let mut lp = LpProblem::new(Sense::Maximize, c);
    for a in 0..m {
        lp.set_free(lambda_off + a);
    }
    let mut row = vec![T::zero(); nv];
    let mut digits = Vec::new();
    for a in 0..m {
        let f = graph.factor(a);
        digits.resize(f.degree(), 0);
        for (slot, &i) in f.neighbors.iter().enumerate() {
            for x in 0..q {
                row.iter_mut().for_each(|v| *v = T::zero());
                for s in 0..graph.factor_size(a) {
                    decode_assignment(s, q, &mut digits);
                    if digits[slot] == x {
                        row[factor_off[a] + s] = T::one();
                    }
                }
                row[node_off + i * q + x] = -T::one();
                lp.add_eq(&row, T::zero());
            }
        }
    }
    for i in 0..n {
        row.iter_mut().for_each(|v| *v = T::zero());
        for x in 0..q {
            row[node_off + i * q + x] = T::one();
        }
        lp.add_eq(&row, T::one());
    }
    for (a, f) in graph.factors().iter().enumerate() {
        for t in 0..f.num_thetas() {
            row.iter_mut().for_each(|v| *v = T::zero());
            for s in 0..graph.factor_size(a) {
                row[factor_off[a] + s] = f.psi(s, t);
            }
            row[lambda_off + a] = -T::one();
            lp.add_ge(&row, T::zero());
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(GameError::Lp(sol.status));
    }
    let clamp = |v: &[T]| v.iter().map(|&x| x.max(T::zero())).collect::<Vec<T>>();
    let marginals = MarginalSet {
        factors: (0..m)
            .map(|a| clamp(&sol.x[factor_off[a]..factor_off[a] + graph.factor_size(a)]))
            .collect(),
        nodes: (0..n).map(|i| clamp(&sol.x[node_off + i * q..node_off + (i + 1) * q])).collect(),
    };
    Ok(LocSolution {
        value: sol.objective,
        marginals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Alphabet, Factor, InstanceSpec};

    fn one_edge(thetas: Vec<f64>) -> FactorGraph<f64> {
        let al = Alphabet::spins();
        FactorGraph::new(InstanceSpec {
            alphabet: al.clone(),
            variables: 2,
            factors: vec![Factor::from_fn(vec![0, 1], thetas, &al, |x, t| t * x[0] * x[1])],
        })
        .unwrap()
    }

    /// Strategy on one edge with correlation `c` and uniform node marginals.
    fn correlated(c: f64) -> EngineerStrategy<f64> {
        let same = (1.0 + c) / 4.0;
        let diff = (1.0 - c) / 4.0;
        EngineerStrategy::from_marginals(MarginalSet {
            factors: vec![vec![same, diff, diff, same]],
            nodes: vec![vec![0.5, 0.5]; 2],
        })
    }

    #[test]
    fn pure_pair_payoff_equals_objective() {
        let g = one_edge(vec![-1.5, -1.0, -0.5]);
        let p = EngineerStrategy::from_assignment(&g, &[0, 1]);
        let q = NatureStrategy::point_mass(&g, &[2]);
        let s = crate::graph::PureStrategyPair { x: vec![0, 1], theta: vec![2] };
        assert_eq!(expected_payoff(&g, &p, &q).unwrap(), g.objective(&s).unwrap());
        assert_eq!(pure_payoff(&g, &[0, 1], &q).unwrap(), 0.5);
    }

    #[test]
    fn uniform_engineer_gets_zero() {
        let g = one_edge(vec![0.0, 1.0, 2.0]);
        let p = EngineerStrategy::from_marginals(MarginalSet::uniform(&g));
        for q in [NatureStrategy::uniform(&g), NatureStrategy::point_mass(&g, &[2])] {
            assert_eq!(expected_payoff(&g, &p, &q).unwrap(), 0.0);
        }
    }

    #[test]
    fn anticorrelated_against_uniform_nature() {
        let g = one_edge(vec![-1.5, -1.0, -0.5]);
        let v = expected_payoff(&g, &correlated(-1.0), &NatureStrategy::uniform(&g)).unwrap();
        // mean theta is -1 and E[x_i x_j] = -1.
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn best_responses() {
        let g = one_edge(vec![0.0, 1.0, 2.0]);
        let brute = |c: f64| {
            [0.0, 1.0, 2.0]
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |b, (k, t)| if t * c < b.1 { (k, t * c) } else { b })
                .0
        };
        for (c, want) in [(0.8, 0), (-0.5, 2)] {
            let q = nature_best_response(&g, &correlated(c)).unwrap();
            assert_eq!(brute(c), want);
            assert_eq!(q, NatureStrategy::point_mass(&g, &[want]));
        }
        let zero = one_edge(vec![0.0, 0.0, 0.0]);
        let q = nature_best_response(&zero, &correlated(0.3)).unwrap();
        assert_eq!(q.factors[0], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn mixtures() {
        let g = one_edge(vec![0.0, 1.0, 2.0]);
        let q = NatureStrategy::point_mass(&g, &[0]);
        assert_eq!(mix_with_uniform(&q, 0.0).unwrap(), q);
        assert_eq!(mix_with_uniform(&q, 1.0).unwrap(), NatureStrategy::uniform(&g));
        let half = mix_with_uniform(&q, 0.5).unwrap();
        let want = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for (a, b) in half.factors[0].iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(mix_with_uniform(&q, 1.5).is_err());
        assert!(mix_with_uniform(&q, f64::NAN).is_err());
    }

    #[test]
    fn sampling_degenerate_and_anticorrelated() {
        let g = one_edge(vec![1.0]);
        let p = EngineerStrategy::from_assignment(&g, &[1, 0]);
        for seed in 0..20 {
            assert_eq!(sample_tree_mrf(&g, &p, seed).unwrap(), vec![1, 0]);
        }
        let anti = correlated(-1.0);
        let sampler = TreeSampler::new(&g, &anti).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let x = sampler.sample(&mut rng).unwrap();
            assert_ne!(x[0], x[1]);
        }
    }

    #[test]
    fn sampling_rejects_inconsistent_or_loopy_inputs() {
        let g = one_edge(vec![1.0]);
        let mut bad = correlated(0.0);
        bad.marginals.nodes[0] = vec![0.9, 0.1];
        assert!(matches!(TreeSampler::new(&g, &bad), Err(GameError::Domain(_))));
    }

    #[test]
    fn hand_derived_game_values() {
        let pos = one_edge(vec![0.0, 1.0, 2.0]);
        let neg = one_edge(vec![-1.5, -1.0, -0.5]);
        for (g, want) in [(&pos, 0.0), (&neg, 0.5)] {
            let joint = exact_minimax_joint(g).unwrap();
            let loc = loc_lp(g).unwrap();
            assert!((joint.value - want).abs() < 1e-9, "{}", joint.value);
            assert!((loc.value - want).abs() < 1e-9, "{}", loc.value);
        }
        // The negative edge optimum is perfectly anticorrelated.
        let m = exact_minimax_joint(&neg).unwrap().marginals(&neg);
        let corr = m.factors[0][0] - m.factors[0][1] - m.factors[0][2] + m.factors[0][3];
        assert!((corr + 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_field_loc_lp() {
        let al = Alphabet::spins();
        let g: FactorGraph<f64> = FactorGraph::new(InstanceSpec {
            alphabet: al.clone(),
            variables: 1,
            factors: vec![Factor::from_fn(vec![0], vec![0.3], &al, |x, t| t * x[0])],
        })
        .unwrap();
        let s = loc_lp(&g).unwrap();
        assert!((s.value - 0.3).abs() < 1e-12);
        assert!(s.marginals.nodes[0][0].abs() < 1e-12 && (s.marginals.nodes[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_oracle_size_cap() {
        let al = Alphabet::spins();
        let factors = (0..15)
            .map(|i| Factor::from_fn(vec![i], vec![1.0], &al, |x, t| t * x[0]))
            .collect();
        let g = FactorGraph::new(InstanceSpec { alphabet: al, variables: 15, factors }).unwrap();
        assert!(matches!(exact_minimax_joint(&g), Err(GameError::Domain(_))));
    }
}
