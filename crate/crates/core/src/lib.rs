//! Homotopy optimization for hard parameterized nonlinear programs.
//!
//! A parameterized NLP (see [`nlp::ParamNlp`]) gets harder or easier as its
//! parameter vector θ moves. This crate searches the homotopy parameter
//! space λ ∈ [0,1]^d — mapped to θ through [`nlp::ParamMap`] — for a chain
//! of intermediate problems whose solutions lead a numerical solver from an
//! easy problem (λ = 0) to the goal problem (λ = 1), using solutions of
//! already-solved problems as initial guesses.
//!
//! The pieces:
//!
//! * [`solver`] — an augmented-Lagrangian method over box-bounded NLPs,
//!   playing the role of the black-box solve operator.
//! * [`tree`] — the optimization tree of solved (solution, λ) pairs with
//!   its candidate-parameter and attempt bookkeeping.
//! * [`algorithms`] — the search drivers: probabilistic homotopy
//!   optimization, an RRT-style variant, a deterministic scalar march, and
//!   the one-depth baseline.
//! * [`problems`] — a cart-pole swing-up transcription and synthetic
//!   one-variable families with grid-search oracles.

pub mod algorithms;
pub mod error;
pub mod nlp;
pub mod problems;
pub mod solver;
pub mod tree;

pub use algorithms::{
    run_liho, run_one_depth, run_pho, run_rho, sample_attempt, Budget, GoalSolution,
    LihoHyperparams, Phase, PhoHyperparams, QueryLogEntry, RunResult, RunStatus,
};
pub use error::{Error, Result};
pub use nlp::{
    map_params, objective_value, ClosureNlp, FeasibilityTolerance, HomotopyPoint, ParamMap,
    ParamNlp,
};
pub use solver::{check_gradients, solve, SolveReport, SolveStatus, SolverSettings};
pub use tree::{OptimizationTree, TreeNode, GOAL_PARAM_ID, ROOT_PARAM_ID};
