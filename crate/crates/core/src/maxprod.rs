//! Classical max-product (max-sum in the log domain) on tree factor graphs,
//! and an exhaustive MAP oracle.

use thiserror::Error;

use crate::graph::{decode_assignment, FactorGraph, PureStrategyPair};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// A pure assignment (alphabet indices) and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSolution<T> {
    pub x: Vec<usize>,
    pub value: T,
}

impl<T: Real> MapSolution<T> {
    pub fn strategy(&self, graph: &FactorGraph<T>) -> PureStrategyPair {
        PureStrategyPair {
            x: self.x.clone(),
            theta: vec![0; graph.num_factors()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxProductOptions {
    /// Shift every message so its maximum is zero.
    pub normalize: bool,
    /// Root variable; `None` picks variable 0.
    pub root: Option<usize>,
}

impl Default for MaxProductOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            root: None,
        }
    }
}

fn require_nominal<T: Real>(graph: &FactorGraph<T>) -> Result<(), MapError> {
    match graph.factors().iter().position(|f| f.num_thetas() != 1) {
        Some(a) => Err(MapError::Domain(format!(
            "factor {a} has {} parameter values; MAP needs singleton domains",
            graph.factor(a).num_thetas()
        ))),
        None => Ok(()),
    }
}

/// Exact MAP on a tree by a leaf-to-root max-sum pass and root-to-leaf backtracking.
pub fn max_product_map<T: Real>(graph: &FactorGraph<T>) -> Result<MapSolution<T>, MapError> {
    max_product_map_with(graph, MaxProductOptions::default())
}

pub fn max_product_map_with<T: Real>(
    graph: &FactorGraph<T>,
    opts: MaxProductOptions,
) -> Result<MapSolution<T>, MapError> {
    require_nominal(graph)?;
    if !graph.is_tree() {
        return Err(MapError::Domain("max-product MAP requires a tree factor graph".into()));
    }
    let n = graph.num_variables();
    let q = graph.q();
    let root = opts.root.unwrap_or(0);
    if root >= n {
        return Err(MapError::Domain(format!("root {root} out of range")));
    }

    // Breadth-first order over factors: (factor, parent variable, parent slot).
    let mut factor_order = Vec::with_capacity(graph.num_factors());
    let mut var_order = vec![root];
    let mut seen_factor = vec![false; graph.num_factors()];
    let mut head = 0;
    while head < var_order.len() {
        let i = var_order[head];
        head += 1;
        for inc in graph.incidences(i) {
            if seen_factor[inc.factor] {
                continue;
            }
            seen_factor[inc.factor] = true;
            factor_order.push((inc.factor, i, inc.slot));
            for &j in &graph.factor(inc.factor).neighbors {
                if j != i {
                    var_order.push(j);
                }
            }
        }
    }

    // incoming[v]: sum of messages from child factors of v.
    let mut incoming = vec![vec![T::zero(); q]; n];
    // backpointer[a][x_parent] = best local assignment of factor a.
    let mut backpointer = vec![Vec::new(); graph.num_factors()];
    let mut digits = Vec::new();
    for &(a, _parent, slot) in factor_order.iter().rev() {
        let f = graph.factor(a);
        digits.resize(f.degree(), 0);
        let mut msg = vec![T::neg_infinity(); q];
        let mut arg = vec![0usize; q];
        for s in 0..graph.factor_size(a) {
            decode_assignment(s, q, &mut digits);
            let mut v = f.psi(s, 0);
            for (k, &j) in f.neighbors.iter().enumerate() {
                if k != slot {
                    v += incoming[j][digits[k]];
                }
            }
            let x = digits[slot];
            if v > msg[x] {
                msg[x] = v;
                arg[x] = s;
            }
        }
        if opts.normalize {
            let top = msg.iter().copied().fold(T::neg_infinity(), T::max);
            for m in &mut msg {
                *m -= top;
            }
        }
        let parent = f.neighbors[slot];
        for (acc, m) in incoming[parent].iter_mut().zip(&msg) {
            *acc += *m;
        }
        backpointer[a] = arg;
    }

    let mut x = vec![usize::MAX; n];
    x[root] = argmax(&incoming[root]);
    for &(a, parent, slot) in &factor_order {
        let f = graph.factor(a);
        let s = backpointer[a][x[parent]];
        digits.resize(f.degree(), 0);
        decode_assignment(s, q, &mut digits);
        for (k, &j) in f.neighbors.iter().enumerate() {
            if k != slot {
                x[j] = digits[k];
            }
        }
    }
    let value = objective_nominal(graph, &x);
    Ok(MapSolution { x, value })
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

fn objective_nominal<T: Real>(graph: &FactorGraph<T>, x: &[usize]) -> T {
    (0..graph.num_factors())
        .map(|a| graph.factor(a).psi(graph.local_assignment(a, x), 0))
        .sum()
}

/// Largest `|X|^n` the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: usize = 1 << 20;

/// Exhaustive MAP; ties go to the lexicographically smallest assignment.
pub fn brute_force_map<T: Real>(graph: &FactorGraph<T>) -> Result<MapSolution<T>, MapError> {
    require_nominal(graph)?;
    let n = graph.num_variables();
    let q = graph.q();
    let total = q
        .checked_pow(n as u32)
        .filter(|&t| t <= BRUTE_FORCE_LIMIT)
        .ok_or_else(|| MapError::Domain(format!("|X|^n = {q}^{n} exceeds the brute-force limit")))?;
    let mut x = vec![0usize; n];
    let mut best = (Vec::new(), T::neg_infinity());
    for code in 0..total {
        decode_assignment(code, q, &mut x);
        let v = objective_nominal(graph, &x);
        if v > best.1 {
            best = (x.clone(), v);
        }
    }
    Ok(MapSolution {
        x: best.0,
        value: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Alphabet, Factor, InstanceSpec};

    fn chain(edge: f64, fields: [f64; 3]) -> FactorGraph<f64> {
        let al = Alphabet::spins();
        let mut factors = vec![
            Factor::from_fn(vec![0, 1], vec![edge], &al, |x, t| t * x[0] * x[1]),
            Factor::from_fn(vec![1, 2], vec![edge], &al, |x, t| t * x[0] * x[1]),
        ];
        for (i, &h) in fields.iter().enumerate() {
            factors.push(Factor::from_fn(vec![i], vec![h], &al, |x, t| t * x[0]));
        }
        FactorGraph::new(InstanceSpec { alphabet: al, variables: 3, factors }).unwrap()
    }

    #[test]
    fn ferromagnetic_chain() {
        let g = chain(1.0, [0.0; 3]);
        let s = max_product_map(&g).unwrap();
        assert_eq!(s.value, 2.0);
        assert!(s.x == vec![0, 0, 0] || s.x == vec![1, 1, 1]);
    }

    #[test]
    fn chain_with_field_matches_brute_force() {
        let g = chain(1.0, [0.5, 0.0, 0.0]);
        let mp = max_product_map(&g).unwrap();
        let bf = brute_force_map(&g).unwrap();
        assert_eq!(mp.x, vec![1, 1, 1]);
        assert_eq!(mp.value, 2.5);
        assert_eq!(bf.value, 2.5);
        assert_eq!(bf.x, vec![1, 1, 1]);
    }

    #[test]
    fn antiferromagnetic_pair() {
        let al = Alphabet::spins();
        let g = FactorGraph::new(InstanceSpec {
            alphabet: al.clone(),
            variables: 2,
            factors: vec![Factor::from_fn(vec![0, 1], vec![-1.0], &al, |x, t| t * x[0] * x[1])],
        })
        .unwrap();
        let s = max_product_map(&g).unwrap();
        assert_eq!(s.value, 1.0);
        assert_ne!(s.x[0], s.x[1]);
    }

    #[test]
    fn single_variable_brute_force() {
        let al = Alphabet::new(vec![0.0, 1.0, 2.0]);
        let g: FactorGraph<f64> = FactorGraph::new(InstanceSpec {
            alphabet: al.clone(),
            variables: 1,
            factors: vec![Factor::from_fn(vec![0], vec![1.0], &al, |x, _| -(x[0] - 1.0f64).powi(2))],
        })
        .unwrap();
        let s = brute_force_map(&g).unwrap();
        assert_eq!(s.x, vec![1]);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn rejects_loops_and_uncertain_domains() {
        let al = Alphabet::spins();
        let e = |i, j| Factor::from_fn(vec![i, j], vec![1.0], &al, |x, t| t * x[0] * x[1]);
        let tri = FactorGraph::new(InstanceSpec {
            alphabet: al.clone(),
            variables: 3,
            factors: vec![e(0, 1), e(1, 2), e(0, 2)],
        })
        .unwrap();
        assert!(max_product_map(&tri).is_err());
        assert!(brute_force_map(&tri).is_ok());
        let robust = FactorGraph::new(InstanceSpec {
            alphabet: al.clone(),
            variables: 2,
            factors: vec![Factor::from_fn(vec![0, 1], vec![0.0, 1.0, 2.0], &al, |x, t| t * x[0] * x[1])],
        })
        .unwrap();
        assert!(max_product_map(&robust).is_err());
        assert!(brute_force_map(&robust).is_err());
    }

    #[test]
    fn brute_force_size_cap() {
        let al = Alphabet::spins();
        let factors = (0..21)
            .map(|i| Factor::from_fn(vec![i], vec![1.0], &al, |x, t| t * x[0]))
            .collect();
        let g = FactorGraph::new(InstanceSpec { alphabet: al, variables: 21, factors }).unwrap();
        assert!(matches!(brute_force_map(&g), Err(MapError::Domain(_))));
    }
}
