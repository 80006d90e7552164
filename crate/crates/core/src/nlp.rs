//! Parameterized NLP abstraction and homotopy parameter maps.
//!
//! A problem has the form
//!
//! ```text
//!     min_x  f(x, θ)
//!     s.t.   c(x, θ) = 0
//!            lb(θ) ≤ x ≤ ub(θ)
//! ```
//!
//! where θ is a parameter vector fixed before each solve. A homotopy point
//! λ ∈ [0,1]^d selects θ through a [`ParamMap`], with λ = 0 giving the easy
//! endpoint θ₀ and λ = 1 the goal endpoint θ*.

use crate::error::{Error, Result};

/// A parameterized nonlinear program with equality constraints and box bounds.
///
/// Evaluators must be deterministic and pure: identical `(x, θ)` always
/// yields identical output. Implementations are immutable after construction
/// and safe to share across threads.
pub trait ParamNlp: Send + Sync {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn param_dim(&self) -> usize;

    /// Objective value f(x, θ). Non-finite results propagate unchanged;
    /// they are never clamped.
    fn objective(&self, x: &[f64], theta: &[f64]) -> f64;

    /// Equality constraint residuals c(x, θ), written into `out`
    /// (length `n_eq`).
    fn eq_constraints(&self, x: &[f64], theta: &[f64], out: &mut [f64]);

    /// Box bounds, written into `lower` and `upper` (length `n_vars`).
    /// Entries may be infinite. Bounds may depend on θ (e.g. a force limit
    /// that is itself a homotopy parameter).
    fn bounds(&self, theta: &[f64], lower: &mut [f64], upper: &mut [f64]) {
        let _ = theta;
        lower.fill(f64::NEG_INFINITY);
        upper.fill(f64::INFINITY);
    }

    /// Gradient of the objective, written into `out` (length `n_vars`).
    /// The default uses central finite differences.
    fn objective_grad(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        fd_objective_grad(self, x, theta, out);
    }

    /// Jacobian-transpose product Jᵀv of the constraint Jacobian, written
    /// into `out` (length `n_vars`). The default uses central finite
    /// differences on the scalar x ↦ vᵀc(x, θ).
    fn constraints_jtvp(&self, x: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        fd_constraints_jtvp(self, x, theta, v, out);
    }

    /// Forward Jacobian product J·v of the constraint Jacobian, written
    /// into `out` (length `n_eq`). The default uses a central finite
    /// difference of the constraint vector along `v`.
    fn constraints_jvp(&self, x: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        fd_constraints_jvp(self, x, theta, v, out);
    }

    /// Objective Hessian product ∇²f·v, written into `out` (length
    /// `n_vars`). The default uses a central finite difference of the
    /// objective gradient along `v`.
    fn objective_hvp(&self, x: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        fd_objective_hvp(self, x, theta, v, out);
    }

    /// Column norms squared of the constraint Jacobian, diag(JᵀJ), written
    /// into `out` (length `n_vars`). Used as a preconditioner; accuracy is
    /// not critical. The default probes each column with a forward product.
    fn constraints_jtj_diag(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let m = self.n_eq();
        if m == 0 {
            out.fill(0.0);
            return;
        }
        let mut unit = vec![0.0; x.len()];
        let mut col = vec![0.0; m];
        for j in 0..x.len() {
            unit[j] = 1.0;
            self.constraints_jvp(x, theta, &unit, &mut col);
            unit[j] = 0.0;
            out[j] = col.iter().map(|v| v * v).sum();
        }
    }

    /// Diagonal of the objective Hessian, written into `out` (length
    /// `n_vars`). Used as a preconditioner; accuracy is not critical. The
    /// default probes each coordinate with a Hessian product.
    fn objective_hess_diag(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let mut unit = vec![0.0; x.len()];
        let mut col = vec![0.0; x.len()];
        for j in 0..x.len() {
            unit[j] = 1.0;
            self.objective_hvp(x, theta, &unit, &mut col);
            unit[j] = 0.0;
            out[j] = col[j];
        }
    }

    /// Characteristic magnitude of each decision variable, written into
    /// `out` (length `n_vars`, strictly positive). Solvers may use these as
    /// a diagonal preconditioner. Defaults to ones.
    fn variable_scales(&self, theta: &[f64], out: &mut [f64]) {
        let _ = theta;
        out.fill(1.0);
    }

    /// Membership test for the feasible set at tolerance `tol`.
    ///
    /// True iff ‖c(x, θ)‖_∞ ≤ eq_tol and every bound is violated by at most
    /// bound_tol. Non-finite entries anywhere report infeasible rather than
    /// raising an error.
    fn is_feasible(&self, x: &[f64], theta: &[f64], tol: &FeasibilityTolerance) -> bool {
        if x.len() != self.n_vars() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let mut c = vec![0.0; self.n_eq()];
        self.eq_constraints(x, theta, &mut c);
        if c.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if c.iter().any(|v| v.abs() > tol.eq_tol) {
            return false;
        }
        let mut lb = vec![0.0; self.n_vars()];
        let mut ub = vec![0.0; self.n_vars()];
        self.bounds(theta, &mut lb, &mut ub);
        x.iter()
            .zip(lb.iter().zip(ub.iter()))
            .all(|(&xi, (&l, &u))| xi >= l - tol.bound_tol && xi <= u + tol.bound_tol)
    }
}

/// Objective value f(x, θ); pure, no side effects. Non-finite results are
/// returned as-is so the caller can tag them.
pub fn objective_value(nlp: &dyn ParamNlp, x: &[f64], theta: &[f64]) -> f64 {
    nlp.objective(x, theta)
}

/// Central finite-difference objective gradient with step 1e-6·(1 + |xᵢ|).
pub fn fd_objective_grad<N: ParamNlp + ?Sized>(nlp: &N, x: &[f64], theta: &[f64], out: &mut [f64]) {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = nlp.objective(&xp, theta);
        xp[i] = x[i] - h;
        let fm = nlp.objective(&xp, theta);
        xp[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// Central finite-difference Jᵀv via the scalar function vᵀc(x, θ).
pub fn fd_constraints_jtvp<N: ParamNlp + ?Sized>(
    nlp: &N,
    x: &[f64],
    theta: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    let m = nlp.n_eq();
    let mut c = vec![0.0; m];
    let mut xp = x.to_vec();
    let dot = |c: &[f64], v: &[f64]| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        nlp.eq_constraints(&xp, theta, &mut c);
        let fp = dot(&c, v);
        xp[i] = x[i] - h;
        nlp.eq_constraints(&xp, theta, &mut c);
        let fm = dot(&c, v);
        xp[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// Central finite-difference J·v along the direction `v`.
pub fn fd_constraints_jvp<N: ParamNlp + ?Sized>(
    nlp: &N,
    x: &[f64],
    theta: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    let vnorm = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if vnorm == 0.0 {
        out.fill(0.0);
        return;
    }
    let xnorm = x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let h = 1e-6 * (1.0 + xnorm) / vnorm;
    let m = nlp.n_eq();
    let mut cp = vec![0.0; m];
    let mut shifted: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
    nlp.eq_constraints(&shifted, theta, &mut cp);
    for (xi, (a, b)) in shifted.iter_mut().zip(x.iter().zip(v)) {
        *xi = a - h * b;
    }
    nlp.eq_constraints(&shifted, theta, out);
    for (oi, pi) in out.iter_mut().zip(&cp) {
        *oi = (pi - *oi) / (2.0 * h);
    }
}

/// Central finite-difference ∇²f·v along the direction `v`.
pub fn fd_objective_hvp<N: ParamNlp + ?Sized>(
    nlp: &N,
    x: &[f64],
    theta: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    let vnorm = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if vnorm == 0.0 {
        out.fill(0.0);
        return;
    }
    let xnorm = x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let h = 1e-6 * (1.0 + xnorm) / vnorm;
    let n = nlp.n_vars();
    let mut gp = vec![0.0; n];
    let mut shifted: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
    nlp.objective_grad(&shifted, theta, &mut gp);
    for (xi, (a, b)) in shifted.iter_mut().zip(x.iter().zip(v)) {
        *xi = a - h * b;
    }
    nlp.objective_grad(&shifted, theta, out);
    for (oi, pi) in out.iter_mut().zip(&gp) {
        *oi = (pi - *oi) / (2.0 * h);
    }
}

/// Dense constraint Jacobian by central finite differences, row-major
/// `n_eq × n_vars`. Intended for gradient checking, not for solving.
pub fn fd_constraint_jacobian(nlp: &dyn ParamNlp, x: &[f64], theta: &[f64]) -> Vec<f64> {
    let (n, m) = (nlp.n_vars(), nlp.n_eq());
    let mut jac = vec![0.0; m * n];
    let mut cp = vec![0.0; m];
    let mut cm = vec![0.0; m];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        nlp.eq_constraints(&xp, theta, &mut cp);
        xp[j] = x[j] - h;
        nlp.eq_constraints(&xp, theta, &mut cm);
        xp[j] = x[j];
        for i in 0..m {
            jac[i * n + j] = (cp[i] - cm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Numerical tolerance for the feasible-set membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityTolerance {
    /// ∞-norm bound on the equality residual c(x, θ).
    pub eq_tol: f64,
    /// Allowed violation of each box bound.
    pub bound_tol: f64,
}

impl Default for FeasibilityTolerance {
    fn default() -> Self {
        Self {
            eq_tol: 1e-6,
            bound_tol: 1e-8,
        }
    }
}

impl FeasibilityTolerance {
    pub fn new(eq_tol: f64, bound_tol: f64) -> Result<Self> {
        if !(eq_tol > 0.0) {
            return Err(Error::InvalidValue {
                what: "eq_tol",
                detail: format!("must be strictly positive, got {eq_tol}"),
            });
        }
        if !(bound_tol > 0.0) {
            return Err(Error::InvalidValue {
                what: "bound_tol",
                detail: format!("must be strictly positive, got {bound_tol}"),
            });
        }
        Ok(Self { eq_tol, bound_tol })
    }
}

/// A point λ in the unit hypercube [0,1]^d.
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyPoint(Vec<f64>);

impl HomotopyPoint {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidValue {
                what: "homotopy point",
                detail: "must have at least one component".into(),
            });
        }
        for (i, &v) in components.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue {
                    what: "homotopy point",
                    detail: format!("component {i} = {v} outside [0, 1]"),
                });
            }
        }
        Ok(Self(components))
    }

    /// The easy endpoint 0_d.
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// The goal endpoint 1_d.
    pub fn ones(dim: usize) -> Self {
        Self(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_ones(&self) -> bool {
        self.0.iter().all(|&v| v == 1.0)
    }

    pub fn is_zeros(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Euclidean distance to another point of the same dimension.
    pub fn distance(&self, other: &HomotopyPoint) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for HomotopyPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Componentwise linear map from homotopy points to problem parameters.
///
/// Each θ entry is assigned to one λ component and interpolates linearly
/// between its θ₀ and θ* values as that component goes 0 → 1. The endpoints
/// are reproduced exactly: `apply(0_d) = θ₀` and `apply(1_d) = θ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMap {
    theta_easy: Vec<f64>,
    theta_goal: Vec<f64>,
    /// `assignment[k]` is the λ component driving θ entry k.
    assignment: Vec<usize>,
    dim: usize,
}

impl ParamMap {
    /// Scalar map (d = 1): all θ entries driven jointly by one λ.
    pub fn scalar(theta_easy: Vec<f64>, theta_goal: Vec<f64>) -> Result<Self> {
        let assignment = vec![0; theta_easy.len()];
        Self::with_assignment(theta_easy, theta_goal, 1, assignment)
    }

    /// One λ component per θ entry (d = p).
    pub fn componentwise(theta_easy: Vec<f64>, theta_goal: Vec<f64>) -> Result<Self> {
        let p = theta_easy.len();
        let assignment = (0..p).collect();
        Self::with_assignment(theta_easy, theta_goal, p, assignment)
    }

    /// Explicit assignment of λ components to θ entries. Every θ entry must
    /// be covered exactly once (guaranteed by the representation); every
    /// assignment entry must name a valid λ component.
    pub fn with_assignment(
        theta_easy: Vec<f64>,
        theta_goal: Vec<f64>,
        dim: usize,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        if theta_goal.len() != theta_easy.len() {
            return Err(Error::DimensionMismatch {
                what: "theta_goal",
                expected: theta_easy.len(),
                got: theta_goal.len(),
            });
        }
        if assignment.len() != theta_easy.len() {
            return Err(Error::DimensionMismatch {
                what: "component assignment",
                expected: theta_easy.len(),
                got: assignment.len(),
            });
        }
        if dim == 0 {
            return Err(Error::InvalidValue {
                what: "map dimension",
                detail: "must be at least 1".into(),
            });
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= dim) {
            return Err(Error::InvalidValue {
                what: "component assignment",
                detail: format!("entry {bad} out of range for dimension {dim}"),
            });
        }
        if theta_easy.iter().chain(theta_goal.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                what: "map endpoints",
                detail: "endpoint parameters must be finite".into(),
            });
        }
        Ok(Self {
            theta_easy,
            theta_goal,
            assignment,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_dim(&self) -> usize {
        self.theta_easy.len()
    }

    pub fn theta_easy(&self) -> &[f64] {
        &self.theta_easy
    }

    pub fn theta_goal(&self) -> &[f64] {
        &self.theta_goal
    }

    /// Map λ to θ. Each entry is (1 − λₐ)·θ₀ + λₐ·θ* for its assigned
    /// component a, which reproduces the endpoints bit-exactly at λ = 0, 1.
    pub fn apply(&self, lambda: &HomotopyPoint) -> Result<Vec<f64>> {
        if lambda.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "homotopy point",
                expected: self.dim,
                got: lambda.dim(),
            });
        }
        Ok(self
            .theta_easy
            .iter()
            .zip(self.theta_goal.iter())
            .zip(self.assignment.iter())
            .map(|((&e, &g), &a)| {
                let t = lambda[a];
                (1.0 - t) * e + t * g
            })
            .collect())
    }
}

/// Map λ through `map` to problem parameters θ.
pub fn map_params(map: &ParamMap, lambda: &HomotopyPoint) -> Result<Vec<f64>> {
    map.apply(lambda)
}

type ObjFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type ConFn = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
type JtvpFn = Box<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A [`ParamNlp`] assembled from closures. Convenient for small analytic
/// problems and test fixtures; derivatives fall back to finite differences
/// unless provided.
pub struct ClosureNlp {
    n_vars: usize,
    n_eq: usize,
    param_dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: ObjFn,
    constraints: Option<ConFn>,
    objective_grad: Option<GradFn>,
    jtvp: Option<JtvpFn>,
}

impl ClosureNlp {
    pub fn new<F>(n_vars: usize, n_eq: usize, param_dim: usize, objective: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            n_vars,
            n_eq,
            param_dim,
            lower: vec![f64::NEG_INFINITY; n_vars],
            upper: vec![f64::INFINITY; n_vars],
            objective: Box::new(objective),
            constraints: None,
            objective_grad: None,
            jtvp: None,
        }
    }

    pub fn with_constraints<F>(mut self, constraints: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.constraints = Some(Box::new(constraints));
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), self.n_vars);
        assert_eq!(upper.len(), self.n_vars);
        assert!(
            lower.iter().zip(upper.iter()).all(|(l, u)| l <= u),
            "lower bound above upper bound"
        );
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_objective_grad<F>(mut self, grad: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.objective_grad = Some(Box::new(grad));
        self
    }

    pub fn with_jtvp<F>(mut self, jtvp: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.jtvp = Some(Box::new(jtvp));
        self
    }
}

impl ParamNlp for ClosureNlp {
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn n_eq(&self) -> usize {
        self.n_eq
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn objective(&self, x: &[f64], theta: &[f64]) -> f64 {
        (self.objective)(x, theta)
    }

    fn eq_constraints(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        match &self.constraints {
            Some(f) => f(x, theta, out),
            None => debug_assert!(out.is_empty()),
        }
    }

    fn bounds(&self, _theta: &[f64], lower: &mut [f64], upper: &mut [f64]) {
        lower.copy_from_slice(&self.lower);
        upper.copy_from_slice(&self.upper);
    }

    fn objective_grad(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        match &self.objective_grad {
            Some(f) => f(x, theta, out),
            None => fd_objective_grad(self, x, theta, out),
        }
    }

    fn constraints_jtvp(&self, x: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        match &self.jtvp {
            Some(f) => f(x, theta, v, out),
            None => fd_constraints_jtvp(self, x, theta, v, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn quadratic() -> ClosureNlp {
        ClosureNlp::new(1, 0, 1, |x, theta| (x[0] - theta[0]).powi(2))
    }

    #[test]
    fn map_endpoints_are_exact() {
        let map = ParamMap::componentwise(vec![1.0, 0.6], vec![60.0, 2.0]).unwrap();
        assert_eq!(map.apply(&HomotopyPoint::zeros(2)).unwrap(), vec![1.0, 0.6]);
        assert_eq!(map.apply(&HomotopyPoint::ones(2)).unwrap(), vec![60.0, 2.0]);
    }

    #[test]
    fn scalar_map_midpoint() {
        let map = ParamMap::scalar(vec![1.0, 0.6], vec![60.0, 2.0]).unwrap();
        let mid = map
            .apply(&HomotopyPoint::new(vec![0.5]).unwrap())
            .unwrap();
        assert_abs_diff_eq!(mid[0], 30.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mid[1], 1.3, epsilon = 1e-15);
    }

    #[test]
    fn map_rejects_dimension_mismatch() {
        let map = ParamMap::scalar(vec![1.0], vec![2.0]).unwrap();
        assert!(map.apply(&HomotopyPoint::zeros(2)).is_err());
        assert!(ParamMap::with_assignment(vec![1.0], vec![2.0], 1, vec![3]).is_err());
    }

    #[test]
    fn homotopy_point_validates_range() {
        assert!(HomotopyPoint::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(HomotopyPoint::new(vec![-0.1]).is_err());
        assert!(HomotopyPoint::new(vec![1.1]).is_err());
        assert!(HomotopyPoint::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn objective_examples() {
        let nlp = quadratic();
        assert_eq!(objective_value(&nlp, &[1.0], &[1.0]), 0.0);
        assert_eq!(objective_value(&nlp, &[3.0], &[1.0]), 4.0);
    }

    #[test]
    fn feasibility_unconstrained_within_bounds() {
        let nlp = quadratic();
        let tol = FeasibilityTolerance::default();
        assert!(nlp.is_feasible(&[3.7], &[0.0], &tol));
        assert!(!nlp.is_feasible(&[f64::NAN], &[0.0], &tol));
        assert!(!nlp.is_feasible(&[f64::INFINITY], &[0.0], &tol));
    }

    #[test]
    fn feasibility_detects_violation() {
        let tol = FeasibilityTolerance::default();
        let nlp = ClosureNlp::new(1, 1, 0, |_, _| 0.0)
            .with_constraints(|x, _, out| out[0] = x[0] - 1.0);
        assert!(nlp.is_feasible(&[1.0 + 0.5 * tol.eq_tol], &[], &tol));
        assert!(!nlp.is_feasible(&[1.0 + 10.0 * tol.eq_tol], &[], &tol));
    }

    #[test]
    fn feasibility_tolerance_validation() {
        assert!(FeasibilityTolerance::new(1e-6, 1e-8).is_ok());
        assert!(FeasibilityTolerance::new(0.0, 1e-8).is_err());
        assert!(FeasibilityTolerance::new(1e-6, -1.0).is_err());
    }

    #[test]
    fn fd_gradient_matches_analytic_quadratic() {
        let nlp = ClosureNlp::new(2, 0, 0, |x, _| x[0] * x[0] + 2.0 * x[0] * x[1]);
        let mut g = [0.0; 2];
        nlp.objective_grad(&[1.0, 2.0], &[], &mut g);
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn endpoint_identity(
            easy in proptest::collection::vec(-100.0f64..100.0, 1..6),
            goal_offsets in proptest::collection::vec(-100.0f64..100.0, 1..6),
        ) {
            let p = easy.len().min(goal_offsets.len());
            let easy = easy[..p].to_vec();
            let goal: Vec<f64> = easy.iter().zip(&goal_offsets[..p]).map(|(a, b)| a + b).collect();
            let map = ParamMap::componentwise(easy.clone(), goal.clone()).unwrap();
            prop_assert_eq!(map.apply(&HomotopyPoint::zeros(p)).unwrap(), easy);
            prop_assert_eq!(map.apply(&HomotopyPoint::ones(p)).unwrap(), goal);
        }

        #[test]
        fn interpolation_is_monotone(
            easy in -100.0f64..100.0,
            goal in -100.0f64..100.0,
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let map = ParamMap::scalar(vec![easy], vec![goal]).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = map.apply(&HomotopyPoint::new(vec![lo]).unwrap()).unwrap()[0];
            let b = map.apply(&HomotopyPoint::new(vec![hi]).unwrap()).unwrap()[0];
            if goal >= easy {
                prop_assert!(b >= a - 1e-12);
            } else {
                prop_assert!(b <= a + 1e-12);
            }
        }

        #[test]
        fn feasibility_monotone_in_tolerance(
            x in -2.0f64..2.0,
            eq_tol in 1e-9f64..1e-2,
            factor in 1.0f64..100.0,
        ) {
            let nlp = ClosureNlp::new(1, 1, 0, |_, _| 0.0)
                .with_constraints(|x, _, out| out[0] = x[0] - 1.0);
            let tight = FeasibilityTolerance::new(eq_tol, 1e-8).unwrap();
            let loose = FeasibilityTolerance::new(eq_tol * factor, 1e-8 * factor).unwrap();
            if nlp.is_feasible(&[x], &[], &tight) {
                prop_assert!(nlp.is_feasible(&[x], &[], &loose));
            }
        }
    }
}
