//! Factor-graph game instances.
//!
//! Variables (controlled by the Engineer) take values in a shared finite
//! [`Alphabet`]; each factor (controlled by Nature) carries a finite ordered
//! parameter domain and a dense potential table. The objective of a pure
//! strategy pair is the sum of the factor potentials.
//!
//! Joint assignments of a factor's neighbourhood are linearised row-major
//! over the neighbours in ascending variable order (first neighbour is the
//! most significant digit). Potential tables are stored assignment-major,
//! parameter-minor: `table[assignment * thetas.len() + theta]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// A single violated structural invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Issue {
    #[error("alphabet must have at least 2 symbols, found {0}")]
    AlphabetTooSmall(usize),
    #[error("alphabet symbol {0} is duplicated")]
    DuplicateSymbol(usize),
    #[error("alphabet symbol {0} is not finite")]
    NonFiniteSymbol(usize),
    #[error("factor {0} has no neighbours")]
    EmptyFactor(usize),
    #[error("factor {factor} references variable {variable} out of range")]
    NeighborOutOfRange { factor: usize, variable: usize },
    #[error("factor {0} neighbours are not strictly ascending (duplicate edge or bad order)")]
    UnsortedNeighbors(usize),
    #[error("variable {0} has no incident factor")]
    IsolatedVariable(usize),
    #[error("factor {0} has an empty parameter domain")]
    EmptyDomain(usize),
    #[error("factor {0} has a non-finite parameter label")]
    NonFiniteTheta(usize),
    #[error("factor {factor}: table shape mismatch, expected {expected} entries, found {found}")]
    TableShape {
        factor: usize,
        expected: usize,
        found: usize,
    },
    #[error("factor {factor}: non-finite potential at entry {entry}")]
    NonFinitePotential { factor: usize, entry: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid instance: {}", join_issues(.0))]
    Invalid(Vec<Issue>),
    #[error("domain error: {0}")]
    Domain(String),
}

fn join_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Ordered set of distinct variable labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "T: Real")]
pub struct Alphabet<T> {
    symbols: Vec<T>,
}

impl<T: Real> Alphabet<T> {
    pub fn new(symbols: Vec<T>) -> Self {
        Self { symbols }
    }

    /// The Ising alphabet `{-1, +1}`.
    pub fn spins() -> Self {
        Self::new(vec![-T::one(), T::one()])
    }

    pub fn symbols(&self) -> &[T] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, index: usize) -> T {
        self.symbols[index]
    }

    fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        if self.symbols.len() < 2 {
            out.push(Issue::AlphabetTooSmall(self.symbols.len()));
        }
        for (k, s) in self.symbols.iter().enumerate() {
            if !s.is_finite() {
                out.push(Issue::NonFiniteSymbol(k));
            } else if self.symbols[..k].iter().any(|t| t == s) {
                out.push(Issue::DuplicateSymbol(k));
            }
        }
        out
    }
}

/// One factor node: neighbourhood, parameter domain and potential table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Factor<T> {
    pub neighbors: Vec<usize>,
    pub thetas: Vec<T>,
    pub table: Vec<T>,
}

impl<T: Real> Factor<T> {
    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_thetas(&self) -> usize {
        self.thetas.len()
    }

    /// Potential `psi(x_assignment; theta)`.
    #[inline]
    pub fn psi(&self, assignment: usize, theta: usize) -> T {
        self.table[assignment * self.thetas.len() + theta]
    }

    /// Column of the table for one parameter value, indexed by assignment.
    pub fn psi_column(&self, theta: usize) -> Vec<T> {
        let k = self.thetas.len();
        self.table.iter().skip(theta).step_by(k).copied().collect()
    }

    /// Builds a factor by evaluating `psi(symbols, theta)` over the full table.
    pub fn from_fn<F>(neighbors: Vec<usize>, thetas: Vec<T>, alphabet: &Alphabet<T>, psi: F) -> Self
    where
        F: Fn(&[T], T) -> T,
    {
        let q = alphabet.len();
        let count = q.pow(neighbors.len() as u32);
        let mut table = Vec::with_capacity(count * thetas.len());
        let mut digits = vec![0usize; neighbors.len()];
        let mut symbols = vec![T::zero(); neighbors.len()];
        for assignment in 0..count {
            decode_assignment(assignment, q, &mut digits);
            for (s, &d) in symbols.iter_mut().zip(&digits) {
                *s = alphabet.symbol(d);
            }
            for &theta in &thetas {
                table.push(psi(&symbols, theta));
            }
        }
        Self {
            neighbors,
            thetas,
            table,
        }
    }
}

/// Writes the base-`q` digits of `assignment` into `digits` (most significant first).
#[inline]
pub fn decode_assignment(mut assignment: usize, q: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = assignment % q;
        assignment /= q;
    }
}

/// Inverse of [`decode_assignment`].
#[inline]
pub fn encode_assignment(digits: &[usize], q: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * q + d)
}

/// Unvalidated instance description; this is also the on-disk JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InstanceSpec<T> {
    pub alphabet: Alphabet<T>,
    pub variables: usize,
    pub factors: Vec<Factor<T>>,
}

impl<T: Real> InstanceSpec<T> {
    /// Every violated invariant, in a stable order. Empty means well formed.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = self.alphabet.issues();
        let q = self.alphabet.len();
        let mut degree = vec![0usize; self.variables];
        for (a, f) in self.factors.iter().enumerate() {
            if f.neighbors.is_empty() {
                out.push(Issue::EmptyFactor(a));
            }
            if f.neighbors.windows(2).any(|w| w[0] >= w[1]) {
                out.push(Issue::UnsortedNeighbors(a));
            }
            for &v in &f.neighbors {
                match degree.get_mut(v) {
                    Some(d) => *d += 1,
                    None => out.push(Issue::NeighborOutOfRange {
                        factor: a,
                        variable: v,
                    }),
                }
            }
            if f.thetas.is_empty() {
                out.push(Issue::EmptyDomain(a));
            }
            if f.thetas.iter().any(|t| !t.is_finite()) {
                out.push(Issue::NonFiniteTheta(a));
            }
            let expected = q
                .checked_pow(f.neighbors.len() as u32)
                .and_then(|c| c.checked_mul(f.thetas.len()));
            if expected != Some(f.table.len()) {
                out.push(Issue::TableShape {
                    factor: a,
                    expected: expected.unwrap_or(usize::MAX),
                    found: f.table.len(),
                });
            }
            if let Some(entry) = f.table.iter().position(|v| !v.is_finite()) {
                out.push(Issue::NonFinitePotential { factor: a, entry });
            }
        }
        for (i, &d) in degree.iter().enumerate() {
            if d == 0 {
                out.push(Issue::IsolatedVariable(i));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), Vec<Issue>> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}

/// Position of a variable inside one of its factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub factor: usize,
    /// Index of the variable within `factor.neighbors`.
    pub slot: usize,
    /// Global edge index.
    pub edge: usize,
}

/// A validated factor graph game. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph<T> {
    spec: InstanceSpec<T>,
    /// First global edge index of each factor; edges are numbered factor-major.
    edge_offsets: Vec<usize>,
    incidences: Vec<Vec<Incidence>>,
}

impl<T: Real> FactorGraph<T> {
    pub fn new(spec: InstanceSpec<T>) -> Result<Self, GraphError> {
        spec.validate().map_err(GraphError::Invalid)?;
        let mut edge_offsets = Vec::with_capacity(spec.factors.len());
        let mut incidences = vec![Vec::new(); spec.variables];
        let mut edge = 0;
        for (a, f) in spec.factors.iter().enumerate() {
            edge_offsets.push(edge);
            for (slot, &v) in f.neighbors.iter().enumerate() {
                incidences[v].push(Incidence {
                    factor: a,
                    slot,
                    edge,
                });
                edge += 1;
            }
        }
        Ok(Self {
            spec,
            edge_offsets,
            incidences,
        })
    }

    pub fn spec(&self) -> &InstanceSpec<T> {
        &self.spec
    }

    pub fn into_spec(self) -> InstanceSpec<T> {
        self.spec
    }

    pub fn alphabet(&self) -> &Alphabet<T> {
        &self.spec.alphabet
    }

    /// Alphabet size `|X|`.
    pub fn q(&self) -> usize {
        self.spec.alphabet.len()
    }

    pub fn num_variables(&self) -> usize {
        self.spec.variables
    }

    pub fn num_factors(&self) -> usize {
        self.spec.factors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.incidences.iter().map(Vec::len).sum()
    }

    pub fn factors(&self) -> &[Factor<T>] {
        &self.spec.factors
    }

    pub fn factor(&self, a: usize) -> &Factor<T> {
        &self.spec.factors[a]
    }

    /// Number of joint assignments of factor `a`'s neighbourhood.
    pub fn factor_size(&self, a: usize) -> usize {
        self.q().pow(self.factor(a).degree() as u32)
    }

    pub fn edge_offset(&self, a: usize) -> usize {
        self.edge_offsets[a]
    }

    /// Factors adjacent to variable `i`, in ascending factor order.
    pub fn incidences(&self, i: usize) -> &[Incidence] {
        &self.incidences[i]
    }

    /// True iff every parameter domain is a singleton.
    pub fn is_nominal(&self) -> bool {
        self.factors().iter().all(|f| f.thetas.len() == 1)
    }

    /// Checks `s` against the instance shape.
    pub fn check_strategy(&self, s: &PureStrategyPair) -> Result<(), GraphError> {
        if s.x.len() != self.num_variables() {
            return Err(GraphError::Domain(format!(
                "assignment covers {} variables, instance has {}",
                s.x.len(),
                self.num_variables()
            )));
        }
        if let Some(i) = s.x.iter().position(|&v| v >= self.q()) {
            return Err(GraphError::Domain(format!(
                "variable {i} assigned symbol index {} outside alphabet",
                s.x[i]
            )));
        }
        if s.theta.len() != self.num_factors() {
            return Err(GraphError::Domain(format!(
                "parameter assignment covers {} factors, instance has {}",
                s.theta.len(),
                self.num_factors()
            )));
        }
        for (a, (&t, f)) in s.theta.iter().zip(self.factors()).enumerate() {
            if t >= f.num_thetas() {
                return Err(GraphError::Domain(format!(
                    "factor {a} parameter index {t} outside its domain of size {}",
                    f.num_thetas()
                )));
            }
        }
        Ok(())
    }

    /// Index of factor `a`'s neighbourhood assignment under the full assignment `x`.
    #[inline]
    pub fn local_assignment(&self, a: usize, x: &[usize]) -> usize {
        let q = self.q();
        self.factor(a)
            .neighbors
            .iter()
            .fold(0, |acc, &v| acc * q + x[v])
    }

    /// Objective `sum_a psi_a(x_{da}; theta_a)` of a pure strategy pair.
    pub fn objective(&self, s: &PureStrategyPair) -> Result<T, GraphError> {
        self.check_strategy(s)?;
        Ok(self
            .factors()
            .iter()
            .enumerate()
            .map(|(a, f)| f.psi(self.local_assignment(a, &s.x), s.theta[a]))
            .sum())
    }

    /// Connected and acyclic as a bipartite graph on `V ∪ F`.
    pub fn is_tree(&self) -> bool {
        let n = self.num_variables();
        let nodes = n + self.num_factors();
        if self.num_edges() + 1 != nodes {
            return false;
        }
        let mut dsu = DisjointSets::new(nodes);
        for (a, f) in self.factors().iter().enumerate() {
            for &v in &f.neighbors {
                if !dsu.union(v, n + a) {
                    return false;
                }
            }
        }
        true
    }

    /// Places `other` alongside `self`, renumbering its variables after ours.
    pub fn disjoint_union(&self, other: &Self) -> Result<Self, GraphError> {
        if self.alphabet() != other.alphabet() {
            return Err(GraphError::Domain("alphabets differ".into()));
        }
        let shift = self.num_variables();
        let mut factors = self.spec.factors.clone();
        factors.extend(other.factors().iter().map(|f| Factor {
            neighbors: f.neighbors.iter().map(|v| v + shift).collect(),
            ..f.clone()
        }));
        Self::new(InstanceSpec {
            alphabet: self.alphabet().clone(),
            variables: shift + other.num_variables(),
            factors,
        })
    }
}

impl<T: Real> TryFrom<InstanceSpec<T>> for FactorGraph<T> {
    type Error = GraphError;

    fn try_from(spec: InstanceSpec<T>) -> Result<Self, Self::Error> {
        Self::new(spec)
    }
}

/// Pure strategies of both players, as indices: `x[i]` into the alphabet,
/// `theta[a]` into factor `a`'s parameter domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PureStrategyPair {
    pub x: Vec<usize>,
    pub theta: Vec<usize>,
}

pub(crate) struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false if `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(i: usize, j: usize, theta: f64) -> Factor<f64> {
        Factor::from_fn(vec![i, j], vec![theta], &Alphabet::spins(), |x, t| t * x[0] * x[1])
    }

    fn field(i: usize, theta: f64) -> Factor<f64> {
        Factor::from_fn(vec![i], vec![theta], &Alphabet::spins(), |x, t| t * x[0])
    }

    fn pair(theta: f64) -> FactorGraph<f64> {
        FactorGraph::new(InstanceSpec {
            alphabet: Alphabet::spins(),
            variables: 2,
            factors: vec![edge(0, 1, theta)],
        })
        .unwrap()
    }

    fn chain3() -> FactorGraph<f64> {
        FactorGraph::new(InstanceSpec {
            alphabet: Alphabet::spins(),
            variables: 3,
            factors: vec![
                edge(0, 1, 1.0),
                edge(1, 2, 1.0),
                field(0, 0.5),
                field(1, 0.5),
                field(2, 0.5),
            ],
        })
        .unwrap()
    }

    #[test]
    fn two_node_ising_is_valid() {
        assert!(pair(1.0).spec().validate().is_ok());
    }

    #[test]
    fn wrong_arity_table_is_rejected() {
        let mut f = edge(0, 1, 1.0);
        f.table.pop();
        let spec = InstanceSpec {
            alphabet: Alphabet::spins(),
            variables: 2,
            factors: vec![f],
        };
        let issues = spec.validate().unwrap_err();
        assert!(matches!(issues[..], [Issue::TableShape { factor: 0, expected: 4, found: 3 }]));
        assert!(issues[0].to_string().contains("table shape"));
    }

    #[test]
    fn nan_potential_is_rejected() {
        let mut f = edge(0, 1, 1.0);
        f.table[2] = f64::NAN;
        let spec = InstanceSpec {
            alphabet: Alphabet::spins(),
            variables: 2,
            factors: vec![f],
        };
        let issues = spec.validate().unwrap_err();
        assert_eq!(issues, vec![Issue::NonFinitePotential { factor: 0, entry: 2 }]);
        assert!(issues[0].to_string().contains("non-finite potential"));
    }

    #[test]
    fn structural_issues_are_all_reported() {
        let spec = InstanceSpec {
            alphabet: Alphabet::new(vec![1.0, 1.0]),
            variables: 4,
            factors: vec![
                Factor { neighbors: vec![1, 0], thetas: vec![0.0], table: vec![0.0; 4] },
                Factor { neighbors: vec![7], thetas: vec![], table: vec![] },
            ],
        };
        let issues = spec.issues();
        assert!(issues.contains(&Issue::DuplicateSymbol(1)));
        assert!(issues.contains(&Issue::UnsortedNeighbors(0)));
        assert!(issues.contains(&Issue::NeighborOutOfRange { factor: 1, variable: 7 }));
        assert!(issues.contains(&Issue::EmptyDomain(1)));
        assert!(issues.contains(&Issue::IsolatedVariable(2)));
        assert!(issues.contains(&Issue::IsolatedVariable(3)));
        assert!(FactorGraph::new(spec).is_err());
    }

    #[test]
    fn single_edge_objective() {
        let g = pair(1.0);
        let s = |x0, x1| PureStrategyPair { x: vec![x0, x1], theta: vec![0] };
        assert_eq!(g.objective(&s(1, 1)).unwrap(), 1.0);
        assert_eq!(g.objective(&s(1, 0)).unwrap(), -1.0);
    }

    #[test]
    fn chain_objective_matches_direct_sum() {
        let g = chain3();
        let s = PureStrategyPair { x: vec![1, 1, 1], theta: vec![0; 5] };
        // 1*1*1 + 1*1*1 + 3 * 0.5*1
        let direct = 1.0 + 1.0 + 0.5 + 0.5 + 0.5;
        assert_eq!(g.objective(&s).unwrap(), direct);
        assert_eq!(direct, 3.5);
    }

    #[test]
    fn malformed_strategy_is_a_domain_error() {
        let g = pair(1.0);
        let bad = [
            PureStrategyPair { x: vec![1], theta: vec![0] },
            PureStrategyPair { x: vec![1, 2], theta: vec![0] },
            PureStrategyPair { x: vec![1, 1], theta: vec![1] },
            PureStrategyPair { x: vec![1, 1], theta: vec![] },
        ];
        for s in &bad {
            assert!(matches!(g.objective(s), Err(GraphError::Domain(_))));
        }
    }

    #[test]
    fn tree_detection() {
        assert!(chain3().is_tree());
        let triangle = FactorGraph::new(InstanceSpec {
            alphabet: Alphabet::spins(),
            variables: 3,
            factors: vec![edge(0, 1, 1.0), edge(1, 2, 1.0), edge(0, 2, 1.0)],
        })
        .unwrap();
        assert!(!triangle.is_tree());
        let two_edges = FactorGraph::new(InstanceSpec {
            alphabet: Alphabet::spins(),
            variables: 4,
            factors: vec![edge(0, 1, 1.0), edge(2, 3, 1.0)],
        })
        .unwrap();
        assert!(!two_edges.is_tree());
    }

    #[test]
    fn assignment_codec_is_row_major() {
        let mut digits = [0; 3];
        decode_assignment(5, 2, &mut digits);
        assert_eq!(digits, [1, 0, 1]);
        assert_eq!(encode_assignment(&digits, 2), 5);
        decode_assignment(7, 3, &mut digits[..2]);
        assert_eq!(digits[..2], [2, 1]);
    }

    #[test]
    fn table_layout_is_assignment_major() {
        let f = Factor::from_fn(vec![0, 1], vec![1.0, 2.0], &Alphabet::spins(), |x, t| t * x[0] * x[1]);
        assert_eq!(f.table, vec![1.0, 2.0, -1.0, -2.0, -1.0, -2.0, 1.0, 2.0]);
        assert_eq!(f.psi_column(1), vec![2.0, -2.0, -2.0, 2.0]);
    }
}
