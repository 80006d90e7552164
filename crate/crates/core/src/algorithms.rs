//! Drivers for the four homotopy optimization strategies.
//!
//! * [`run_pho`] — probabilistic homotopy optimization: alternates solve and
//!   sample phases by the solve/sample ratio, keeps multiple minima per λ,
//!   and keeps improving until the iteration or query budget runs out.
//! * [`run_rho`] — RRT-style search: samples λ, solves from the node with
//!   the nearest λ, and stops at the first goal solution.
//! * [`run_liho`] — deterministic scalar-λ march with adaptive step size.
//! * [`run_one_depth`] — attempts the goal directly from the easy solution.
//!
//! Every run owns its RNG stream (seeded ChaCha8), its tree, and its query
//! log; independent runs may execute in parallel.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nlp::{HomotopyPoint, ParamMap, ParamNlp};
use crate::solver::{solve, SolveReport, SolveStatus, SolverSettings};
use crate::tree::{OptimizationTree, GOAL_PARAM_ID};

/// Hyperparameters for [`run_pho`].
#[derive(Debug, Clone)]
pub struct PhoHyperparams {
    /// Iteration limit.
    pub q: usize,
    /// Solve/sample ratio threshold in [0, 1].
    pub rho_a: f64,
    /// Probability of proposing the goal in the solve phase, in [0, 1].
    pub p_g: f64,
}

impl Default for PhoHyperparams {
    fn default() -> Self {
        Self {
            q: 10_000,
            rho_a: 1.0,
            p_g: 0.3,
        }
    }
}

impl PhoHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::InvalidValue {
                what: "q",
                detail: "iteration limit must be at least 1".into(),
            });
        }
        for (what, v) in [("rho_a", self.rho_a), ("p_g", self.p_g)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue {
                    what,
                    detail: format!("must lie in [0, 1], got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Hyperparameters for [`run_liho`].
#[derive(Debug, Clone)]
pub struct LihoHyperparams {
    /// Consecutive successes before the step grows.
    pub k1: usize,
    /// Step growth factor, > 1.
    pub c1: f64,
    /// Consecutive failures before the step shrinks.
    pub k2: usize,
    /// Step shrink factor, in (0, 1).
    pub c2: f64,
    /// Terminate once the step falls below this.
    pub epsilon: f64,
    /// Initial step.
    pub delta_lambda_0: f64,
    /// Keep advancing λ past a failed solve instead of retrying from the
    /// last successful value. Off by default; matches the bare step-update
    /// rule with no rollback.
    pub literal_advance: bool,
}

impl Default for LihoHyperparams {
    fn default() -> Self {
        Self {
            k1: 2,
            c1: 1.5,
            k2: 1,
            c2: 0.3,
            epsilon: 1e-9,
            delta_lambda_0: 1e-2,
            literal_advance: false,
        }
    }
}

impl LihoHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 1.0) {
            return Err(Error::InvalidValue {
                what: "c1",
                detail: format!("growth factor must exceed 1, got {}", self.c1),
            });
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return Err(Error::InvalidValue {
                what: "c2",
                detail: format!("shrink factor must lie in (0, 1), got {}", self.c2),
            });
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidValue {
                what: "epsilon",
                detail: "termination step must be positive".into(),
            });
        }
        if !(self.delta_lambda_0 > 0.0 && self.delta_lambda_0 <= 1.0) {
            return Err(Error::InvalidValue {
                what: "delta_lambda_0",
                detail: format!("initial step must lie in (0, 1], got {}", self.delta_lambda_0),
            });
        }
        if self.k1 < 1 || self.k2 < 1 {
            return Err(Error::InvalidValue {
                what: "k1/k2",
                detail: "streak lengths must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Resource limits for a run. At least one limit must be finite.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_solver_queries: Option<usize>,
    pub max_wall_time: Option<f64>,
}

impl Budget {
    pub fn queries(n: usize) -> Self {
        Self {
            max_solver_queries: Some(n),
            max_wall_time: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_solver_queries.is_none() && self.max_wall_time.is_none() {
            return Err(Error::InvalidValue {
                what: "budget",
                detail: "at least one of the query and wall-time limits must be set".into(),
            });
        }
        Ok(())
    }

    fn exhausted(&self, queries: usize, start: Instant) -> bool {
        if let Some(q) = self.max_solver_queries {
            if queries >= q {
                return true;
            }
        }
        if let Some(t) = self.max_wall_time {
            if start.elapsed().as_secs_f64() >= t {
                return true;
            }
        }
        false
    }
}

/// Terminal state of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// At least one goal solution was found.
    Solved,
    /// Budget or iteration limit ran out with no goal solution.
    BudgetExhausted,
    /// The run could not get off the ground (or, for the deterministic
    /// march, its step underflowed before reaching the goal).
    Failed,
}

/// Which kind of work an iteration performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Solve,
    Sample,
}

/// One row of a run's query log.
#[derive(Debug, Clone)]
pub struct QueryLogEntry {
    pub iter: usize,
    pub phase: Phase,
    pub lambda: Vec<f64>,
    /// Present for solve phases.
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub violation: Option<f64>,
    /// Solve/sample ratio after this iteration (tree-based runs only).
    pub ratio: Option<f64>,
    pub cumulative_queries: usize,
    pub cumulative_seconds: f64,
}

/// A feasible solution of the goal problem.
#[derive(Debug, Clone)]
pub struct GoalSolution {
    pub x_star: Vec<f64>,
    pub objective: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: RunStatus,
    pub goal_solutions: Vec<GoalSolution>,
    /// Minimum objective over the goal solutions.
    pub best_objective: Option<f64>,
    pub solver_queries: usize,
    pub wall_time: f64,
    /// The search tree (tree-growing algorithms only).
    pub tree: Option<OptimizationTree>,
    pub query_log: Vec<QueryLogEntry>,
    pub seed: u64,
}

impl RunResult {
    pub fn solved(&self) -> bool {
        self.status == RunStatus::Solved
    }
}

fn best_objective(solutions: &[GoalSolution]) -> Option<f64> {
    solutions
        .iter()
        .map(|s| s.objective)
        .min_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
}

fn goal_solutions_from_tree(tree: &OptimizationTree) -> Vec<GoalSolution> {
    tree.solutions_at_goal()
        .into_iter()
        .map(|n| GoalSolution {
            x_star: n.x_star.clone(),
            objective: n.objective,
        })
        .collect()
}

struct RunLog {
    entries: Vec<QueryLogEntry>,
    queries: usize,
    start: Instant,
}

impl RunLog {
    fn new() -> Self {
        Self {
            entries: Vec::new(),
            queries: 0,
            start: Instant::now(),
        }
    }

    fn log_solve(&mut self, iter: usize, lambda: &[f64], report: &SolveReport, ratio: Option<f64>) {
        self.queries += 1;
        self.entries.push(QueryLogEntry {
            iter,
            phase: Phase::Solve,
            lambda: lambda.to_vec(),
            status: Some(report.status),
            objective: Some(report.objective),
            violation: Some(report.constraint_violation),
            ratio,
            cumulative_queries: self.queries,
            cumulative_seconds: self.start.elapsed().as_secs_f64(),
        });
    }

    fn log_sample(&mut self, iter: usize, lambda: &[f64], ratio: Option<f64>) {
        self.entries.push(QueryLogEntry {
            iter,
            phase: Phase::Sample,
            lambda: lambda.to_vec(),
            status: None,
            objective: None,
            violation: None,
            ratio,
            cumulative_queries: self.queries,
            cumulative_seconds: self.start.elapsed().as_secs_f64(),
        });
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, dim: usize) -> HomotopyPoint {
    let comps: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    HomotopyPoint::new(comps).expect("uniform draws lie in [0, 1]")
}

/// Pick the next (node, parameter) pair for the solve phase.
///
/// With probability `p_g` a node not yet attempted at the goal is paired
/// with 1_d; otherwise the pair is drawn uniformly from all untried pairs.
/// An empty branch falls through to the other; `None` means every pair has
/// been attempted and the driver should sample a new parameter instead.
pub fn sample_attempt(
    tree: &OptimizationTree,
    p_g: f64,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    let goal_first = rng.gen::<f64>() < p_g;

    let pick_goal = |rng: &mut ChaCha8Rng| -> Option<(usize, usize)> {
        let candidates: Vec<usize> = tree
            .nodes()
            .iter()
            .map(|n| n.id)
            .filter(|&id| !tree.is_attempted(id, GOAL_PARAM_ID))
            .collect();
        if candidates.is_empty() {
            None
        } else {
            Some((candidates[rng.gen_range(0..candidates.len())], GOAL_PARAM_ID))
        }
    };
    let pick_any = |rng: &mut ChaCha8Rng| -> Option<(usize, usize)> {
        let mut candidates = Vec::new();
        for node in tree.nodes() {
            for lambda_id in 0..tree.n_params() {
                if !tree.is_attempted(node.id, lambda_id) {
                    candidates.push((node.id, lambda_id));
                }
            }
        }
        if candidates.is_empty() {
            None
        } else {
            Some(candidates[rng.gen_range(0..candidates.len())])
        }
    };

    if goal_first {
        pick_goal(rng).or_else(|| pick_any(rng))
    } else {
        pick_any(rng).or_else(|| pick_goal(rng))
    }
}

/// Probabilistic homotopy optimization.
///
/// Solves the easy problem from `x0` to root the tree, then alternates:
/// while the solve/sample ratio is at or below `rho_a`, pick an untried
/// (node, parameter) pair, record the attempt, solve, and admit the result
/// if it converged and is not a duplicate; otherwise add a uniformly
/// sampled parameter point. The run does not stop at the first goal
/// solution — it keeps going until `q` iterations or the budget run out and
/// returns every goal solution found.
pub fn run_pho(
    nlp: &dyn ParamNlp,
    map: &ParamMap,
    x0: &[f64],
    hp: &PhoHyperparams,
    budget: &Budget,
    settings: &SolverSettings,
    seed: u64,
) -> Result<RunResult> {
    hp.validate()?;
    budget.validate()?;
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = RunLog::new();
    let dim = map.dim();

    let theta_easy = map.apply(&HomotopyPoint::zeros(dim))?;
    let root_report = solve(nlp, &theta_easy, x0, settings);
    log.log_solve(0, HomotopyPoint::zeros(dim).as_slice(), &root_report, None);
    if !root_report.converged() {
        return Ok(RunResult {
            status: RunStatus::Failed,
            goal_solutions: Vec::new(),
            best_objective: None,
            solver_queries: log.queries,
            wall_time: log.start.elapsed().as_secs_f64(),
            tree: None,
            query_log: log.entries,
            seed,
        });
    }

    let mut tree = OptimizationTree::init(&root_report, dim)?;
    for iter in 1..=hp.q {
        if budget.exhausted(log.queries, log.start) {
            break;
        }
        if tree.solve_sample_ratio() <= hp.rho_a {
            match sample_attempt(&tree, hp.p_g, &mut rng) {
                Some((node_id, lambda_id)) => {
                    tree.record_attempt(node_id, lambda_id)?;
                    let lambda = tree.param(lambda_id)?.clone();
                    let theta = map.apply(&lambda)?;
                    let x_init = tree.node(node_id)?.x_star.clone();
                    let report = solve(nlp, &theta, &x_init, settings);
                    if report.converged() {
                        tree.admit_node(&report.x_star, lambda_id, node_id, report.objective)?;
                    }
                    log.log_solve(
                        iter,
                        lambda.as_slice(),
                        &report,
                        Some(tree.solve_sample_ratio()),
                    );
                }
                None => {
                    // Every pair is exhausted; fall back to a sample phase.
                    let lambda = uniform_point(&mut rng, dim);
                    tree.add_param(lambda.clone());
                    log.log_sample(iter, lambda.as_slice(), Some(tree.solve_sample_ratio()));
                }
            }
        } else {
            let lambda = uniform_point(&mut rng, dim);
            tree.add_param(lambda.clone());
            log.log_sample(iter, lambda.as_slice(), Some(tree.solve_sample_ratio()));
        }
    }

    let goal_solutions = goal_solutions_from_tree(&tree);
    Ok(RunResult {
        status: if goal_solutions.is_empty() {
            RunStatus::BudgetExhausted
        } else {
            RunStatus::Solved
        },
        best_objective: best_objective(&goal_solutions),
        goal_solutions,
        solver_queries: log.queries,
        wall_time: log.start.elapsed().as_secs_f64(),
        tree: Some(tree),
        query_log: log.entries,
        seed,
    })
}

/// RRT-style homotopy optimization.
///
/// Each iteration proposes λ = 1_d with probability `p_g` (uniform in the
/// hypercube otherwise), solves from the solution of the node with the
/// nearest λ, and admits feasible results. The run returns immediately once
/// a goal solution is admitted, so a solved run has exactly one goal
/// solution. Every iteration costs one solver query.
pub fn run_rho(
    nlp: &dyn ParamNlp,
    map: &ParamMap,
    x0: &[f64],
    p_g: f64,
    budget: &Budget,
    q: usize,
    settings: &SolverSettings,
    seed: u64,
) -> Result<RunResult> {
    if !(0.0..=1.0).contains(&p_g) {
        return Err(Error::InvalidValue {
            what: "p_g",
            detail: format!("must lie in [0, 1], got {p_g}"),
        });
    }
    budget.validate()?;
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = RunLog::new();
    let dim = map.dim();

    let theta_easy = map.apply(&HomotopyPoint::zeros(dim))?;
    let root_report = solve(nlp, &theta_easy, x0, settings);
    log.log_solve(0, HomotopyPoint::zeros(dim).as_slice(), &root_report, None);
    if !root_report.converged() {
        return Ok(RunResult {
            status: RunStatus::Failed,
            goal_solutions: Vec::new(),
            best_objective: None,
            solver_queries: log.queries,
            wall_time: log.start.elapsed().as_secs_f64(),
            tree: None,
            query_log: log.entries,
            seed,
        });
    }

    let mut tree = OptimizationTree::init(&root_report, dim)?;
    for iter in 1..=q {
        if budget.exhausted(log.queries, log.start) {
            break;
        }
        let lambda = if rng.gen::<f64>() < p_g {
            HomotopyPoint::ones(dim)
        } else {
            uniform_point(&mut rng, dim)
        };
        let near = tree.nearest_node(&lambda);
        let (near_id, x_init) = (near.id, near.x_star.clone());
        let theta = map.apply(&lambda)?;
        let report = solve(nlp, &theta, &x_init, settings);
        let lambda_id = tree.add_param(lambda.clone());
        if !tree.is_attempted(near_id, lambda_id) {
            tree.record_attempt(near_id, lambda_id)?;
        }
        let mut admitted_goal = false;
        if report.converged() {
            let admitted = tree.admit_node(&report.x_star, lambda_id, near_id, report.objective)?;
            admitted_goal = admitted && lambda_id == GOAL_PARAM_ID;
        }
        log.log_solve(iter, lambda.as_slice(), &report, Some(tree.solve_sample_ratio()));
        if admitted_goal {
            let goal_solutions = goal_solutions_from_tree(&tree);
            return Ok(RunResult {
                status: RunStatus::Solved,
                best_objective: best_objective(&goal_solutions),
                goal_solutions,
                solver_queries: log.queries,
                wall_time: log.start.elapsed().as_secs_f64(),
                tree: Some(tree),
                query_log: log.entries,
                seed,
            });
        }
    }

    Ok(RunResult {
        status: RunStatus::BudgetExhausted,
        goal_solutions: Vec::new(),
        best_objective: None,
        solver_queries: log.queries,
        wall_time: log.start.elapsed().as_secs_f64(),
        tree: Some(tree),
        query_log: log.entries,
        seed,
    })
}

/// Linear-interpolation homotopy optimization (deterministic).
///
/// Requires a scalar map (d = 1). Marches λ toward 1 with an adaptive step:
/// after `k1` consecutive solvable steps the step grows by `c1`; after `k2`
/// consecutive failures it shrinks by `c2` and λ reverts to the last
/// successful value (unless `literal_advance` is set). Terminates with
/// `Failed` once the step drops below `epsilon`, and with `Solved` when a
/// feasible solution at λ = 1 is found.
pub fn run_liho(
    nlp: &dyn ParamNlp,
    map: &ParamMap,
    x0: &[f64],
    hp: &LihoHyperparams,
    budget: &Budget,
    settings: &SolverSettings,
) -> Result<RunResult> {
    hp.validate()?;
    budget.validate()?;
    settings.validate()?;
    if map.dim() != 1 {
        return Err(Error::InvalidValue {
            what: "map dimension",
            detail: format!("scalar homotopy required, got d = {}", map.dim()),
        });
    }
    let mut log = RunLog::new();

    let theta_easy = map.apply(&HomotopyPoint::zeros(1))?;
    let root_report = solve(nlp, &theta_easy, x0, settings);
    log.log_solve(0, &[0.0], &root_report, None);
    if !root_report.converged() {
        return Ok(RunResult {
            status: RunStatus::Failed,
            goal_solutions: Vec::new(),
            best_objective: None,
            solver_queries: log.queries,
            wall_time: log.start.elapsed().as_secs_f64(),
            tree: None,
            query_log: log.entries,
            seed: 0,
        });
    }

    let mut x_cur = root_report.x_star;
    let mut lambda_cur = 0.0f64;
    let mut lambda_pos = 0.0f64; // proposal base; equals λ_cur unless literal_advance
    let mut step = hp.delta_lambda_0;
    let mut successes = 0usize;
    let mut failures = 0usize;
    let mut iter = 0usize;

    loop {
        if step < hp.epsilon {
            return Ok(RunResult {
                status: RunStatus::Failed,
                goal_solutions: Vec::new(),
                best_objective: None,
                solver_queries: log.queries,
                wall_time: log.start.elapsed().as_secs_f64(),
                tree: None,
                query_log: log.entries,
                seed: 0,
            });
        }
        if budget.exhausted(log.queries, log.start) {
            return Ok(RunResult {
                status: RunStatus::BudgetExhausted,
                goal_solutions: Vec::new(),
                best_objective: None,
                solver_queries: log.queries,
                wall_time: log.start.elapsed().as_secs_f64(),
                tree: None,
                query_log: log.entries,
                seed: 0,
            });
        }
        iter += 1;
        let lambda_next = (lambda_pos + step).min(1.0);
        let lambda = HomotopyPoint::new(vec![lambda_next])?;
        let theta = map.apply(&lambda)?;
        let report = solve(nlp, &theta, &x_cur, settings);
        log.log_solve(iter, lambda.as_slice(), &report, None);

        if report.converged() {
            x_cur = report.x_star.clone();
            lambda_cur = lambda_next;
            lambda_pos = lambda_next;
            failures = 0;
            successes += 1;
            if lambda_next >= 1.0 {
                let solution = GoalSolution {
                    x_star: report.x_star,
                    objective: report.objective,
                };
                return Ok(RunResult {
                    status: RunStatus::Solved,
                    best_objective: Some(solution.objective),
                    goal_solutions: vec![solution],
                    solver_queries: log.queries,
                    wall_time: log.start.elapsed().as_secs_f64(),
                    tree: None,
                    query_log: log.entries,
                    seed: 0,
                });
            }
            if successes == hp.k1 {
                step *= hp.c1;
                successes = 0;
            }
        } else {
            successes = 0;
            failures += 1;
            if hp.literal_advance {
                lambda_pos = lambda_next;
            } else {
                lambda_pos = lambda_cur;
            }
            if failures == hp.k2 {
                step *= hp.c2;
                failures = 0;
            }
        }
    }
}

/// The one-depth baseline: solve the easy problem from `x0`, then attempt
/// the goal problem directly from the easy solution. Exactly two solver
/// queries.
pub fn run_one_depth(
    nlp: &dyn ParamNlp,
    map: &ParamMap,
    x0: &[f64],
    budget: &Budget,
    settings: &SolverSettings,
) -> Result<RunResult> {
    budget.validate()?;
    settings.validate()?;
    let mut log = RunLog::new();
    let dim = map.dim();

    let theta_easy = map.apply(&HomotopyPoint::zeros(dim))?;
    let root_report = solve(nlp, &theta_easy, x0, settings);
    log.log_solve(0, HomotopyPoint::zeros(dim).as_slice(), &root_report, None);
    if !root_report.converged() || budget.exhausted(log.queries, log.start) {
        return Ok(RunResult {
            status: RunStatus::Failed,
            goal_solutions: Vec::new(),
            best_objective: None,
            solver_queries: log.queries,
            wall_time: log.start.elapsed().as_secs_f64(),
            tree: None,
            query_log: log.entries,
            seed: 0,
        });
    }

    let goal = HomotopyPoint::ones(dim);
    let theta_goal = map.apply(&goal)?;
    let report = solve(nlp, &theta_goal, &root_report.x_star, settings);
    log.log_solve(1, goal.as_slice(), &report, None);

    let (status, goal_solutions) = if report.converged() {
        (
            RunStatus::Solved,
            vec![GoalSolution {
                x_star: report.x_star,
                objective: report.objective,
            }],
        )
    } else {
        (RunStatus::Failed, Vec::new())
    };
    Ok(RunResult {
        status,
        best_objective: best_objective(&goal_solutions),
        goal_solutions,
        solver_queries: log.queries,
        wall_time: log.start.elapsed().as_secs_f64(),
        tree: None,
        query_log: log.entries,
        seed: 0,
    })
}
