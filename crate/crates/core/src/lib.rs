//! Robust message passing for minimax games on factor graphs.

pub mod admm;
pub mod game;
pub mod graph;
pub mod io;
pub mod maxprod;
pub mod model;
pub mod numerics;
pub mod scalar;

pub use admm::{solve, solve_from, AdmmConfig, AdmmError, AdmmState, MarginalSet, SolveReport};
pub use game::{
    exact_minimax_joint, expected_payoff, loc_lp, mix_with_uniform, nature_best_response, pure_payoff,
    sample_tree_mrf, EngineerStrategy, GameError, NatureStrategy, TreeSampler,
};
pub use graph::{Alphabet, Factor, FactorGraph, GraphError, InstanceSpec, Issue, PureStrategyPair};
pub use maxprod::{brute_force_map, max_product_map, MapError, MapSolution};
pub use model::{build_ising, generate_ising, nominal_instance, random_tree, IsingModel, IsingSpec, ModelError};
pub use scalar::Real;

pub type Instance = FactorGraph<f64>;
pub type Marginals = MarginalSet<f64>;
pub type Config = AdmmConfig<f64>;
pub type Report = SolveReport<f64>;
pub type Ising = IsingModel<f64>;
