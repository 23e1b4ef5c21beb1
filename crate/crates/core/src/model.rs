//! Seeded Ising benchmark instances on random trees.
//!
//! Edges are either positive (nominal coupling `+1`) or negative (`-1`);
//! Nature may move each coupling by `±Δ`. Node fields are drawn once from
//! `U[-h, h]` and frozen as singleton parameter domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Alphabet, Factor, FactorGraph, GraphError, InstanceSpec};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parameters of one member of the Ising benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingSpec {
    pub n: usize,
    pub delta: f64,
    pub h: f64,
    pub seed: u64,
    #[serde(default = "default_sign_prob")]
    pub edge_sign_prob: f64,
}

fn default_sign_prob() -> f64 {
    0.5
}

impl IsingSpec {
    pub fn new(n: usize, delta: f64, h: f64, seed: u64) -> Self {
        Self {
            n,
            delta,
            h,
            seed,
            edge_sign_prob: default_sign_prob(),
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if self.n < 2 {
            problems.push(format!("n = {} (need n >= 2)", self.n));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            problems.push(format!("delta = {} (need finite delta >= 0)", self.delta));
        }
        if !(self.h >= 0.0 && self.h.is_finite()) {
            problems.push(format!("h = {} (need finite h >= 0)", self.h));
        }
        if !(0.0..=1.0).contains(&self.edge_sign_prob) {
            problems.push(format!(
                "edge_sign_prob = {} (need a probability)",
                self.edge_sign_prob
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidSpec(problems.join(", ")))
        }
    }
}

/// Class of a tree edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Positive,
    Negative,
}

impl EdgeClass {
    pub fn center(self) -> f64 {
        match self {
            EdgeClass::Positive => 1.0,
            EdgeClass::Negative => -1.0,
        }
    }
}

/// A generated instance together with the random draws behind it.
#[derive(Debug, Clone)]
pub struct IsingModel<T> {
    pub instance: FactorGraph<T>,
    pub edges: Vec<(usize, usize)>,
    pub classes: Vec<EdgeClass>,
    pub fields: Vec<f64>,
}

/// Uniform random labelled tree on `n` nodes, decoded from a Prüfer sequence.
///
/// Each edge is returned as `(min, max)`; the list order is the decoding order.
pub fn random_tree(n: usize, seed: u64) -> Result<Vec<(usize, usize)>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_tree(n, &mut rng)
}

fn draw_tree<R: Rng>(n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>, ModelError> {
    if n < 2 {
        return Err(ModelError::Domain(format!("a tree needs n >= 2 nodes, got {n}")));
    }
    let code: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    Ok(decode_prufer(&code, n))
}

/// Linear-time Prüfer decoding.
pub fn decode_prufer(code: &[usize], n: usize) -> Vec<(usize, usize)> {
    debug_assert_eq!(code.len() + 2, n);
    let mut degree = vec![1usize; n];
    for &c in code {
        degree[c] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    let mut ptr = degree.iter().position(|&d| d == 1).expect("a leaf exists");
    let mut leaf = ptr;
    for &c in code {
        edges.push((leaf.min(c), leaf.max(c)));
        degree[c] -= 1;
        if degree[c] == 1 && c < ptr {
            leaf = c;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    edges.push((leaf.min(n - 1), leaf.max(n - 1)));
    edges
}

/// Generates the instance and keeps the draws (tree, classes, fields).
///
/// The random stream is consumed in a fixed order: Prüfer code, edge classes,
/// fields. `delta` does not touch the stream, so a sweep over `delta` with a
/// fixed seed keeps the tree, classes and fields unchanged.
pub fn generate_ising<T: Real>(spec: &IsingSpec) -> Result<IsingModel<T>, ModelError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let edges = draw_tree(spec.n, &mut rng)?;
    let classes: Vec<EdgeClass> = edges
        .iter()
        .map(|_| {
            if rng.gen_bool(spec.edge_sign_prob) {
                EdgeClass::Positive
            } else {
                EdgeClass::Negative
            }
        })
        .collect();
    let fields: Vec<f64> = (0..spec.n)
        .map(|_| -spec.h + 2.0 * spec.h * rng.gen::<f64>())
        .collect();

    let alphabet = Alphabet::<T>::spins();
    let mut factors = Vec::with_capacity(2 * spec.n - 1);
    for (&(i, j), class) in edges.iter().zip(&classes) {
        let s = class.center();
        let thetas = if spec.delta == 0.0 {
            vec![T::lit(s)]
        } else {
            vec![T::lit(s - spec.delta), T::lit(s), T::lit(s + spec.delta)]
        };
        factors.push(Factor::from_fn(vec![i, j], thetas, &alphabet, |x, t| {
            t * x[0] * x[1]
        }));
    }
    for (i, &theta) in fields.iter().enumerate() {
        factors.push(Factor::from_fn(vec![i], vec![T::lit(theta)], &alphabet, |x, t| {
            t * x[0]
        }));
    }
    let instance = FactorGraph::new(InstanceSpec {
        alphabet,
        variables: spec.n,
        factors,
    })?;
    Ok(IsingModel {
        instance,
        edges,
        classes,
        fields,
    })
}

pub fn build_ising<T: Real>(spec: &IsingSpec) -> Result<FactorGraph<T>, ModelError> {
    generate_ising(spec).map(|m| m.instance)
}

/// Replaces every parameter domain by its centre element.
///
/// Domains of odd size are collapsed to their middle entry (singletons are
/// left alone); an even-sized domain has no centre and is rejected.
pub fn nominal_instance<T: Real>(instance: &FactorGraph<T>) -> Result<FactorGraph<T>, ModelError> {
    let mut spec = instance.spec().clone();
    for (a, f) in spec.factors.iter_mut().enumerate() {
        let k = f.thetas.len();
        if k % 2 == 0 {
            return Err(ModelError::Domain(format!(
                "factor {a} has a parameter domain of even size {k}, no centre"
            )));
        }
        if k == 1 {
            continue;
        }
        let mid = k / 2;
        f.table = f.psi_column(mid);
        f.thetas = vec![f.thetas[mid]];
    }
    Ok(FactorGraph::new(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_spanning_tree(n: usize, edges: &[(usize, usize)]) -> bool {
        let mut dsu = crate::graph::DisjointSets::new(n);
        edges.len() == n - 1 && edges.iter().all(|&(a, b)| a < b && b < n && dsu.union(a, b))
    }

    #[test]
    fn two_node_tree_is_single_edge() {
        for seed in 0..5 {
            assert_eq!(random_tree(2, seed).unwrap(), vec![(0, 1)]);
        }
    }

    #[test]
    fn tree_of_93_nodes() {
        let edges = random_tree(93, 7).unwrap();
        assert_eq!(edges.len(), 92);
        assert!(is_spanning_tree(93, &edges));
    }

    #[test]
    fn tree_is_deterministic() {
        assert_eq!(random_tree(5, 11).unwrap(), random_tree(5, 11).unwrap());
    }

    #[test]
    fn tiny_n_is_rejected() {
        assert!(matches!(random_tree(1, 0), Err(ModelError::Domain(_))));
        assert!(matches!(
            build_ising::<f64>(&IsingSpec::new(1, 0.0, 0.0, 0)),
            Err(ModelError::InvalidSpec(_))
        ));
        assert!(build_ising::<f64>(&IsingSpec::new(3, -0.1, 0.0, 0)).is_err());
        assert!(build_ising::<f64>(&IsingSpec::new(3, 0.0, f64::NAN, 0)).is_err());
    }

    #[test]
    fn prufer_decoding_known_code() {
        // Code (3, 3, 3) on 5 nodes is the star centred at 3.
        let edges = decode_prufer(&[3, 3, 3], 5);
        let mut sorted = edges.clone();
        sorted.sort();
        assert_eq!(sorted, vec![(0, 3), (1, 3), (2, 3), (3, 4)]);
        // Code (0, 1) on 4 nodes is the path 2-0-1-3.
        let mut path = decode_prufer(&[0, 1], 4);
        path.sort();
        assert_eq!(path, vec![(0, 1), (0, 2), (1, 3)]);
    }

    #[test]
    fn prufer_decoding_is_a_bijection_on_small_n() {
        // All 5^3 codes must give 125 distinct trees.
        let n = 5;
        let mut seen = std::collections::BTreeSet::new();
        for c in 0..n * n * n {
            let code = [c / 25, (c / 5) % 5, c % 5];
            let mut edges = decode_prufer(&code, n);
            assert!(is_spanning_tree(n, &edges));
            edges.sort();
            seen.insert(edges);
        }
        assert_eq!(seen.len(), 125);
    }

    #[test]
    fn degenerate_spec_collapses() {
        let m = generate_ising::<f64>(&IsingSpec::new(2, 0.0, 0.0, 3)).unwrap();
        let g = &m.instance;
        assert_eq!(g.num_factors(), 3);
        assert_eq!(g.factor(0).thetas, vec![m.classes[0].center()]);
        assert_eq!(g.factor(1).thetas, vec![0.0]);
        assert_eq!(g.factor(2).thetas, vec![0.0]);
    }

    #[test]
    fn positive_edge_with_unit_delta() {
        let mut spec = IsingSpec::new(2, 1.0, 0.0, 0);
        spec.edge_sign_prob = 1.0;
        let g = build_ising::<f64>(&spec).unwrap();
        assert_eq!(g.factor(0).thetas, vec![0.0, 1.0, 2.0]);
        spec.edge_sign_prob = 0.0;
        spec.delta = 0.5;
        let g = build_ising::<f64>(&spec).unwrap();
        assert_eq!(g.factor(0).thetas, vec![-1.5, -1.0, -0.5]);
    }

    #[test]
    fn draws_match_an_independent_redraw() {
        let spec = IsingSpec::new(3, 0.5, 0.3, 99);
        let m = generate_ising::<f64>(&spec).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let code: Vec<usize> = (0..1).map(|_| rng.gen_range(0..3)).collect();
        let signs: Vec<bool> = (0..2).map(|_| rng.gen_bool(0.5)).collect();
        let fields: Vec<f64> = (0..3).map(|_| -0.3 + 0.6 * rng.gen::<f64>()).collect();

        assert_eq!(m.edges, decode_prufer(&code, 3));
        for (a, &pos) in signs.iter().enumerate() {
            let s = if pos { 1.0 } else { -1.0 };
            assert_eq!(m.instance.factor(a).thetas, vec![s - 0.5, s, s + 0.5]);
        }
        for (i, &f) in fields.iter().enumerate() {
            assert!(f.abs() <= 0.3);
            assert_eq!(m.instance.factor(2 + i).thetas, vec![f]);
        }
    }

    #[test]
    fn nominal_collapses_to_centre() {
        let mut spec = IsingSpec::new(2, 1.0, 0.0, 0);
        spec.edge_sign_prob = 1.0;
        let g = build_ising::<f64>(&spec).unwrap();
        let nom = nominal_instance(&g).unwrap();
        assert_eq!(nom.factor(0).thetas, vec![1.0]);
        assert_eq!(nom.factor(0).table, vec![1.0, -1.0, -1.0, 1.0]);
        assert_eq!(nom.factor(1), g.factor(1));

        spec.edge_sign_prob = 0.0;
        spec.delta = 0.5;
        spec.h = 0.4;
        let g = build_ising::<f64>(&spec).unwrap();
        let nom = nominal_instance(&g).unwrap();
        assert_eq!(nom.factor(0).thetas, vec![-1.0]);
        assert_eq!(nom.factor(2), g.factor(2));
    }

    #[test]
    fn even_domain_has_no_centre() {
        let spec = InstanceSpec {
            alphabet: Alphabet::spins(),
            variables: 1,
            factors: vec![Factor::from_fn(vec![0], vec![0.0, 1.0], &Alphabet::spins(), |x, t| t * x[0])],
        };
        let g = FactorGraph::new(spec).unwrap();
        assert!(matches!(nominal_instance(&g), Err(ModelError::Domain(_))));
    }
}
