//! The optimization tree: solved (solution, λ) pairs, the candidate
//! parameter set, and the attempted (node, parameter) pairs.
//!
//! The tree is rooted at the easy problem's solution (λ = 0). An edge from a
//! parent to a child records that the child's problem was solved from the
//! parent's solution. The parameter set starts as {1_d, 0_d}; the attempt
//! set records every (initial guess, candidate problem) pair handed to the
//! solver, successful or not.
//!
//! Single-writer: drivers own and mutate the tree; concurrent reads are fine.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nlp::HomotopyPoint;
use crate::solver::SolveReport;

/// Parameter id of the goal point 1_d (always present).
pub const GOAL_PARAM_ID: usize = 0;
/// Parameter id of the easy point 0_d (always present; the root's λ).
pub const ROOT_PARAM_ID: usize = 1;

/// A solved problem: a local minimum together with the parameter id of the
/// problem it solves.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub x_star: Vec<f64>,
    pub lambda_id: usize,
    /// Absent only for the root.
    pub parent_id: Option<usize>,
    pub objective: f64,
}

/// Rooted tree over solved problems plus the candidate parameter set and
/// the attempt bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTree {
    nodes: Vec<TreeNode>,
    params: Vec<HomotopyPoint>,
    attempts: BTreeSet<(usize, usize)>,
    similarity_tol: f64,
    dim: usize,
}

impl OptimizationTree {
    /// Default ∞-norm radius within which two solutions at the same λ count
    /// as the same node.
    pub const DEFAULT_SIMILARITY_TOL: f64 = 1e-3;

    /// Initialize from a converged solve of the easy problem. The parameter
    /// set starts as {1_d, 0_d} and the attempt set empty.
    pub fn init(root: &SolveReport, dim: usize) -> Result<Self> {
        Self::init_with_tol(root, dim, Self::DEFAULT_SIMILARITY_TOL)
    }

    pub fn init_with_tol(root: &SolveReport, dim: usize, similarity_tol: f64) -> Result<Self> {
        if !root.converged() {
            return Err(Error::InfeasibleRoot);
        }
        if !(similarity_tol > 0.0) {
            return Err(Error::InvalidValue {
                what: "similarity_tol",
                detail: format!("must be strictly positive, got {similarity_tol}"),
            });
        }
        Ok(Self {
            nodes: vec![TreeNode {
                id: 0,
                x_star: root.x_star.clone(),
                lambda_id: ROOT_PARAM_ID,
                parent_id: None,
                objective: root.objective,
            }],
            params: vec![HomotopyPoint::ones(dim), HomotopyPoint::zeros(dim)],
            attempts: BTreeSet::new(),
            similarity_tol,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn similarity_tol(&self) -> f64 {
        self.similarity_tol
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_attempts(&self) -> usize {
        self.attempts.len()
    }

    pub fn node(&self, id: usize) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(Error::UnknownNodeId(id))
    }

    pub fn param(&self, id: usize) -> Result<&HomotopyPoint> {
        self.params.get(id).ok_or(Error::UnknownParamId(id))
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn params(&self) -> &[HomotopyPoint] {
        &self.params
    }

    pub fn attempts(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.attempts.iter().copied()
    }

    pub fn is_attempted(&self, node_id: usize, lambda_id: usize) -> bool {
        self.attempts.contains(&(node_id, lambda_id))
    }

    /// Fraction of unique (node, parameter) solve attempts already made:
    /// |attempts| / (|nodes| · |params|). Always in [0, 1].
    pub fn solve_sample_ratio(&self) -> f64 {
        self.attempts.len() as f64 / (self.nodes.len() as f64 * self.params.len() as f64)
    }

    /// Record that `node_id`'s solution was used as the initial guess for
    /// the problem at `lambda_id`, regardless of the eventual solve outcome.
    /// Recording the same pair twice is a logic error.
    pub fn record_attempt(&mut self, node_id: usize, lambda_id: usize) -> Result<()> {
        self.node(node_id)?;
        self.param(lambda_id)?;
        if !self.attempts.insert((node_id, lambda_id)) {
            return Err(Error::DuplicateAttempt { node_id, lambda_id });
        }
        Ok(())
    }

    /// Admit a solved point at `lambda_id` with an edge from `parent_id`,
    /// unless an existing node at the same λ lies within `similarity_tol`
    /// (∞-norm) of it. Returns whether the node was appended.
    ///
    /// The caller is responsible for having verified feasibility (a
    /// converged solve) before admission.
    pub fn admit_node(
        &mut self,
        x_new: &[f64],
        lambda_id: usize,
        parent_id: usize,
        objective: f64,
    ) -> Result<bool> {
        self.param(lambda_id)?;
        self.node(parent_id)?;
        let duplicate = self.nodes.iter().any(|n| {
            n.lambda_id == lambda_id
                && n.x_star
                    .iter()
                    .zip(x_new)
                    .all(|(a, b)| (a - b).abs() <= self.similarity_tol)
        });
        if duplicate {
            return Ok(false);
        }
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            x_star: x_new.to_vec(),
            lambda_id,
            parent_id: Some(parent_id),
            objective,
        });
        Ok(true)
    }

    /// Add a candidate parameter point. Exact duplicates are not re-added;
    /// the existing id is returned instead.
    pub fn add_param(&mut self, lambda: HomotopyPoint) -> usize {
        if let Some(existing) = self.params.iter().position(|p| *p == lambda) {
            return existing;
        }
        self.params.push(lambda);
        self.params.len() - 1
    }

    /// Node whose λ has the smallest Euclidean distance to `lambda`; ties
    /// break toward the lowest node id (insertion order).
    pub fn nearest_node(&self, lambda: &HomotopyPoint) -> &TreeNode {
        let mut best = &self.nodes[0];
        let mut best_dist = self.params[best.lambda_id].distance(lambda);
        for node in &self.nodes[1..] {
            let d = self.params[node.lambda_id].distance(lambda);
            if d < best_dist {
                best = node;
                best_dist = d;
            }
        }
        best
    }

    /// All nodes whose parameter point is exactly 1_d.
    pub fn solutions_at_goal(&self) -> Vec<&TreeNode> {
        self.nodes
            .iter()
            .filter(|n| n.lambda_id == GOAL_PARAM_ID)
            .collect()
    }

    /// Parent chain from the root down to `node_id`, inclusive.
    pub fn path_from_root(&self, node_id: usize) -> Result<Vec<&TreeNode>> {
        let mut path = Vec::new();
        let mut current = self.node(node_id)?;
        loop {
            path.push(current);
            match current.parent_id {
                Some(p) => current = self.node(p)?,
                None => break,
            }
        }
        path.reverse();
        Ok(path)
    }

    /// Write the tree as versioned structured text. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn serialize<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "homotopy-tree v1")?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "similarity_tol {}", self.similarity_tol)?;
        writeln!(w, "params {}", self.params.len())?;
        for (id, p) in self.params.iter().enumerate() {
            write!(w, "{id}")?;
            for v in p.as_slice() {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "nodes {}", self.nodes.len())?;
        for n in &self.nodes {
            match n.parent_id {
                Some(p) => write!(w, "{} {} {} {}", n.id, p, n.lambda_id, n.objective)?,
                None => write!(w, "{} - {} {}", n.id, n.lambda_id, n.objective)?,
            }
            for v in &n.x_star {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "attempts {}", self.attempts.len())?;
        for (n, l) in &self.attempts {
            writeln!(w, "{n} {l}")?;
        }
        Ok(())
    }

    /// Parse a tree previously written by [`serialize`]. Malformed input
    /// reports the offending line.
    pub fn deserialize<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(line))) => Ok((i + 1, line)),
                Some((i, Err(e))) => Err(Error::TreeParse {
                    line: i + 1,
                    message: e.to_string(),
                }),
                None => Err(Error::TreeParse {
                    line: 0,
                    message: format!("unexpected end of stream, expected {expect}"),
                }),
            }
        };
        let parse_err = |line: usize, message: String| Error::TreeParse { line, message };

        let (ln, header) = next("header")?;
        if header.trim() != "homotopy-tree v1" {
            return Err(parse_err(ln, format!("unrecognized header '{header}'")));
        }
        let field = |expect: &'static str, (ln, line): (usize, String)| -> Result<String> {
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(k), Some(v), None) if k == expect => Ok(v.to_string()),
                _ => Err(parse_err(ln, format!("expected '{expect} <value>', got '{line}'"))),
            }
        };
        let dim: usize = field("dim", next("dim")?)?
            .parse()
            .map_err(|e| parse_err(2, format!("bad dim: {e}")))?;
        let similarity_tol: f64 = field("similarity_tol", next("similarity_tol")?)?
            .parse()
            .map_err(|e| parse_err(3, format!("bad similarity_tol: {e}")))?;

        let n_params: usize = field("params", next("params")?)?
            .parse()
            .map_err(|e| parse_err(4, format!("bad params count: {e}")))?;
        let mut params = Vec::with_capacity(n_params);
        for k in 0..n_params {
            let (ln, line) = next("param row")?;
            let mut it = line.split_whitespace();
            let id: usize = it
                .next()
                .ok_or_else(|| parse_err(ln, "missing param id".into()))?
                .parse()
                .map_err(|e| parse_err(ln, format!("bad param id: {e}")))?;
            if id != k {
                return Err(parse_err(ln, format!("param id {id} out of order, expected {k}")));
            }
            let comps: Vec<f64> = it
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(ln, format!("bad λ component: {e}")))?;
            if comps.len() != dim {
                return Err(parse_err(
                    ln,
                    format!("λ has {} components, expected {dim}", comps.len()),
                ));
            }
            params.push(
                HomotopyPoint::new(comps)
                    .map_err(|e| parse_err(ln, e.to_string()))?,
            );
        }

        let n_nodes: usize = field("nodes", next("nodes")?)?
            .parse()
            .map_err(|e| parse_err(0, format!("bad nodes count: {e}")))?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for k in 0..n_nodes {
            let (ln, line) = next("node row")?;
            let mut it = line.split_whitespace();
            let mut take = |what: &str| {
                it.next()
                    .ok_or_else(|| parse_err(ln, format!("missing {what}")))
            };
            let id: usize = take("node id")?
                .parse()
                .map_err(|e| parse_err(ln, format!("bad node id: {e}")))?;
            if id != k {
                return Err(parse_err(ln, format!("node id {id} out of order, expected {k}")));
            }
            let parent_tok = take("parent id")?;
            let parent_id = if parent_tok == "-" {
                None
            } else {
                Some(
                    parent_tok
                        .parse::<usize>()
                        .map_err(|e| parse_err(ln, format!("bad parent id: {e}")))?,
                )
            };
            let lambda_id: usize = take("lambda id")?
                .parse()
                .map_err(|e| parse_err(ln, format!("bad lambda id: {e}")))?;
            if lambda_id >= params.len() {
                return Err(parse_err(ln, format!("lambda id {lambda_id} out of range")));
            }
            let objective: f64 = take("objective")?
                .parse()
                .map_err(|e| parse_err(ln, format!("bad objective: {e}")))?;
            let x_star: Vec<f64> = it
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(ln, format!("bad solution entry: {e}")))?;
            if let Some(p) = parent_id {
                if p >= k {
                    return Err(parse_err(ln, format!("parent id {p} not before node {k}")));
                }
            }
            nodes.push(TreeNode {
                id,
                x_star,
                lambda_id,
                parent_id,
                objective,
            });
        }
        if nodes.is_empty() {
            return Err(parse_err(0, "tree has no nodes".into()));
        }

        let n_attempts: usize = field("attempts", next("attempts")?)?
            .parse()
            .map_err(|e| parse_err(0, format!("bad attempts count: {e}")))?;
        let mut attempts = BTreeSet::new();
        for _ in 0..n_attempts {
            let (ln, line) = next("attempt row")?;
            let mut it = line.split_whitespace();
            let node_id: usize = it
                .next()
                .ok_or_else(|| parse_err(ln, "missing attempt node id".into()))?
                .parse()
                .map_err(|e| parse_err(ln, format!("bad attempt node id: {e}")))?;
            let lambda_id: usize = it
                .next()
                .ok_or_else(|| parse_err(ln, "missing attempt lambda id".into()))?
                .parse()
                .map_err(|e| parse_err(ln, format!("bad attempt lambda id: {e}")))?;
            if node_id >= nodes.len() || lambda_id >= params.len() {
                return Err(parse_err(ln, format!("attempt ({node_id}, {lambda_id}) out of range")));
            }
            if !attempts.insert((node_id, lambda_id)) {
                return Err(parse_err(ln, format!("duplicate attempt ({node_id}, {lambda_id})")));
            }
        }

        Ok(Self {
            nodes,
            params,
            attempts,
            similarity_tol,
            dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{SolveReport, SolveStatus};

    fn converged_report(x: Vec<f64>, objective: f64) -> SolveReport {
        SolveReport {
            status: SolveStatus::Converged,
            x_star: x,
            objective,
            constraint_violation: 0.0,
            outer_iters: 1,
            inner_iters_total: 1,
            wall_time: 0.0,
        }
    }

    fn fresh_tree() -> OptimizationTree {
        OptimizationTree::init(&converged_report(vec![0.0, 0.0], 1.0), 2).unwrap()
    }

    #[test]
    fn init_state() {
        let tree = fresh_tree();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.n_params(), 2);
        assert_eq!(tree.n_attempts(), 0);
        assert_eq!(tree.solve_sample_ratio(), 0.0);
        assert!(tree.param(GOAL_PARAM_ID).unwrap().is_ones());
        assert!(tree.param(ROOT_PARAM_ID).unwrap().is_zeros());
        assert!(tree.solutions_at_goal().is_empty());
    }

    #[test]
    fn init_rejects_failed_root() {
        let mut report = converged_report(vec![0.0], 0.0);
        report.status = SolveStatus::Diverged;
        assert!(matches!(
            OptimizationTree::init(&report, 1),
            Err(Error::InfeasibleRoot)
        ));
    }

    #[test]
    fn ratio_arithmetic() {
        let mut tree = fresh_tree();
        tree.record_attempt(0, GOAL_PARAM_ID).unwrap();
        tree.record_attempt(0, ROOT_PARAM_ID).unwrap();
        assert_eq!(tree.solve_sample_ratio(), 1.0);
        // Second node at the goal; 3 of 4 pairs attempted.
        assert!(tree.admit_node(&[2.0, 2.0], GOAL_PARAM_ID, 0, 0.5).unwrap());
        tree.record_attempt(1, ROOT_PARAM_ID).unwrap();
        assert_eq!(tree.solve_sample_ratio(), 0.75);
    }

    #[test]
    fn ratio_decreases_when_params_grow() {
        let mut tree = fresh_tree();
        for x in [[2.0, 2.0], [4.0, 4.0], [6.0, 6.0]] {
            tree.admit_node(&x, GOAL_PARAM_ID, 0, 0.0).unwrap();
        }
        for n in 0..4 {
            tree.record_attempt(n, GOAL_PARAM_ID).unwrap();
            tree.record_attempt(n, ROOT_PARAM_ID).unwrap();
        }
        assert_eq!(tree.solve_sample_ratio(), 1.0);
        tree.add_param(HomotopyPoint::new(vec![0.5, 0.5]).unwrap());
        assert!((tree.solve_sample_ratio() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_attempt_is_rejected() {
        let mut tree = fresh_tree();
        tree.record_attempt(0, GOAL_PARAM_ID).unwrap();
        assert!(matches!(
            tree.record_attempt(0, GOAL_PARAM_ID),
            Err(Error::DuplicateAttempt { .. })
        ));
    }

    #[test]
    fn admit_rejects_duplicate_solution_at_same_lambda() {
        let mut tree = fresh_tree();
        assert!(!tree.admit_node(&[0.0, 0.0], ROOT_PARAM_ID, 0, 1.0).unwrap());
        let tol = tree.similarity_tol();
        assert!(tree
            .admit_node(&[10.0 * tol, 0.0], ROOT_PARAM_ID, 0, 1.0)
            .unwrap());
    }

    #[test]
    fn admit_keeps_distinct_minima_at_same_lambda() {
        let mut tree = fresh_tree();
        assert!(tree.admit_node(&[1.0, 0.0], GOAL_PARAM_ID, 0, 0.3).unwrap());
        assert!(tree.admit_node(&[-1.0, 0.0], GOAL_PARAM_ID, 0, 0.3).unwrap());
        assert_eq!(tree.solutions_at_goal().len(), 2);
    }

    #[test]
    fn admit_validates_ids() {
        let mut tree = fresh_tree();
        assert!(tree.admit_node(&[1.0, 1.0], 9, 0, 0.0).is_err());
        assert!(tree.admit_node(&[1.0, 1.0], GOAL_PARAM_ID, 7, 0.0).is_err());
    }

    #[test]
    fn add_param_dedupes_exact_values() {
        let mut tree = fresh_tree();
        let id = tree.add_param(HomotopyPoint::new(vec![0.5, 0.5]).unwrap());
        assert_eq!(id, 2);
        assert_eq!(tree.n_params(), 3);
        let again = tree.add_param(HomotopyPoint::new(vec![0.5, 0.5]).unwrap());
        assert_eq!(again, id);
        assert_eq!(tree.n_params(), 3);
        assert_eq!(tree.add_param(HomotopyPoint::ones(2)), GOAL_PARAM_ID);
    }

    #[test]
    fn nearest_node_prefers_closest_lambda() {
        let mut tree = OptimizationTree::init(&converged_report(vec![0.0], 0.0), 1).unwrap();
        let id = tree.add_param(HomotopyPoint::new(vec![0.8]).unwrap());
        tree.admit_node(&[3.0], id, 0, 0.0).unwrap();
        let q = HomotopyPoint::new(vec![0.7]).unwrap();
        assert_eq!(tree.nearest_node(&q).id, 1);
        // Single-node tree returns its root.
        let single = OptimizationTree::init(&converged_report(vec![0.0], 0.0), 1).unwrap();
        assert_eq!(single.nearest_node(&q).id, 0);
    }

    #[test]
    fn nearest_node_breaks_ties_by_id() {
        let mut tree = OptimizationTree::init(&converged_report(vec![0.0], 0.0), 1).unwrap();
        let a = tree.add_param(HomotopyPoint::new(vec![0.4]).unwrap());
        let b = tree.add_param(HomotopyPoint::new(vec![0.6]).unwrap());
        tree.admit_node(&[1.0], a, 0, 0.0).unwrap();
        tree.admit_node(&[2.0], b, 0, 0.0).unwrap();
        let q = HomotopyPoint::new(vec![0.5]).unwrap();
        assert_eq!(tree.nearest_node(&q).id, 1);
    }

    #[test]
    fn serialize_round_trips() {
        let mut tree = fresh_tree();
        tree.record_attempt(0, GOAL_PARAM_ID).unwrap();
        let id = tree.add_param(HomotopyPoint::new(vec![0.25, 1.0 / 3.0]).unwrap());
        tree.admit_node(&[1.0e-17, -2.5], id, 0, -0.12345678901234567)
            .unwrap();
        let mut buf = Vec::new();
        tree.serialize(&mut buf).unwrap();
        let back = OptimizationTree::deserialize(buf.as_slice()).unwrap();
        assert_eq!(tree, back);
    }

    #[test]
    fn serialize_round_trips_many_nodes() {
        let mut tree = fresh_tree();
        for k in 0..100 {
            let lam = HomotopyPoint::new(vec![(k as f64) / 100.0, 1.0 / (k + 1) as f64]).unwrap();
            let id = tree.add_param(lam);
            tree.admit_node(&[k as f64 * 0.1, -(k as f64)], id, 0, k as f64)
                .unwrap();
            tree.record_attempt(k, id).unwrap();
        }
        let mut buf = Vec::new();
        tree.serialize(&mut buf).unwrap();
        let back = OptimizationTree::deserialize(buf.as_slice()).unwrap();
        assert_eq!(tree, back);
    }

    #[test]
    fn truncated_stream_is_a_parse_error() {
        let mut tree = fresh_tree();
        tree.record_attempt(0, GOAL_PARAM_ID).unwrap();
        let mut buf = Vec::new();
        tree.serialize(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            OptimizationTree::deserialize(truncated.as_bytes()),
            Err(Error::TreeParse { .. })
        ));
    }

    #[test]
    fn path_from_root_follows_parents() {
        let mut tree = fresh_tree();
        let mid = tree.add_param(HomotopyPoint::new(vec![0.5, 0.5]).unwrap());
        tree.admit_node(&[1.0, 1.0], mid, 0, 0.0).unwrap();
        tree.admit_node(&[2.0, 2.0], GOAL_PARAM_ID, 1, 0.0).unwrap();
        let path = tree.path_from_root(2).unwrap();
        let ids: Vec<usize> = path.iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }
}
