//! Augmented-Lagrangian solver for box-bounded NLPs with equality
//! constraints.
//!
//! The outer loop runs classic multiplier updates μ ← μ + ρ·c(x) with
//! penalty growth whenever the constraint violation fails to drop by a
//! factor of ten. Each inner subproblem minimizes the augmented Lagrangian
//! over the box with spectral projected gradient descent: the trial step
//! uses a Barzilai-Borwein length and is backtracked with an Armijo
//! condition (factor 0.5, slope 1e-4) against a short non-monotone
//! reference.
//!
//! The solver is deterministic: identical inputs produce bitwise-identical
//! reports apart from wall time.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::nlp::{fd_constraint_jacobian, fd_objective_grad, FeasibilityTolerance, ParamNlp};

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK_FACTOR: f64 = 0.5;
const NONMONOTONE_MEMORY: usize = 10;
const BB_STEP_MIN: f64 = 1e-12;
const BB_STEP_MAX: f64 = 1e10;
/// Conjugate-gradient iteration cap per Newton step.
const CG_MAX_ITERS: usize = 120;
/// Violation must drop below this fraction of the best seen per outer
/// iteration, otherwise the penalty grows.
const OUTER_PROGRESS_FACTOR: f64 = 0.25;

/// Tunable parameters for [`solve`].
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub max_outer_iters: usize,
    /// Inner iteration cap per outer iteration.
    pub max_inner_iters: usize,
    /// Projected-gradient ∞-norm bound for stationarity.
    pub kkt_tol: f64,
    /// ∞-norm bound on the equality residual at convergence.
    pub eq_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    /// Line-search steps shorter than this stall the inner loop.
    pub inner_step_tol: f64,
    /// Emit a per-outer-iteration trace through the `log` crate.
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_outer_iters: 50,
            max_inner_iters: 2000,
            kkt_tol: 1e-4,
            eq_tol: 1e-6,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e10,
            inner_step_tol: 1e-14,
            trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 6] = [
            ("kkt_tol", self.kkt_tol),
            ("eq_tol", self.eq_tol),
            ("penalty_init", self.penalty_init),
            ("penalty_max", self.penalty_max),
            ("inner_step_tol", self.inner_step_tol),
            ("max_outer_iters", self.max_outer_iters as f64),
        ];
        for (what, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidValue {
                    what,
                    detail: format!("must be strictly positive, got {v}"),
                });
            }
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::InvalidValue {
                what: "penalty_growth",
                detail: format!("must exceed 1, got {}", self.penalty_growth),
            });
        }
        if self.penalty_init > self.penalty_max {
            return Err(Error::InvalidValue {
                what: "penalty_init",
                detail: format!(
                    "must not exceed penalty_max ({} > {})",
                    self.penalty_init, self.penalty_max
                ),
            });
        }
        Ok(())
    }

    /// Feasibility tolerance consistent with this solver configuration.
    pub fn feasibility_tolerance(&self) -> FeasibilityTolerance {
        FeasibilityTolerance {
            eq_tol: self.eq_tol,
            bound_tol: 1e-8,
        }
    }
}

/// Outcome category of one solver call. Anything other than `Converged`
/// means the returned point is unusable as a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Feasible at `eq_tol` and first-order stationary at `kkt_tol`.
    Converged,
    /// Iteration budget exhausted before the tolerances were met.
    MaxIterations,
    /// Penalty reached its cap without feasibility progress.
    Diverged,
    /// The objective or a constraint evaluated to a non-finite value.
    NonFinite,
}

/// Report from one [`solve`] call. `x_star` always has the problem's
/// dimension, even on failure.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x_star: Vec<f64>,
    pub objective: f64,
    /// ∞-norm of c(x_star, θ).
    pub constraint_violation: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// Seconds spent in the solver.
    pub wall_time: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

enum InnerStatus {
    Converged,
    MaxIters,
    Stalled,
    NonFinite,
}

/// Buffers for one solve. The inner loop works in scaled coordinates
/// y = x / σ; `x_phys` holds the corresponding physical point for problem
/// evaluations, and `lb`/`ub` are the scaled bounds.
struct Workspace {
    sigma: Vec<f64>,
    x_phys: Vec<f64>,
    g: Vec<f64>,
    g_new: Vec<f64>,
    d: Vec<f64>,
    y_try: Vec<f64>,
    jtv: Vec<f64>,
    c: Vec<f64>,
    w: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    mask: Vec<f64>,
    cg_r: Vec<f64>,
    cg_p: Vec<f64>,
    cg_hp: Vec<f64>,
    cg_u: Vec<f64>,
    cg_z: Vec<f64>,
    precond: Vec<f64>,
    jv: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            sigma: vec![1.0; n],
            x_phys: vec![0.0; n],
            g: vec![0.0; n],
            g_new: vec![0.0; n],
            d: vec![0.0; n],
            y_try: vec![0.0; n],
            jtv: vec![0.0; n],
            c: vec![0.0; m],
            w: vec![0.0; m],
            lb: vec![0.0; n],
            ub: vec![0.0; n],
            mask: vec![1.0; n],
            cg_r: vec![0.0; n],
            cg_p: vec![0.0; n],
            cg_hp: vec![0.0; n],
            cg_u: vec![0.0; n],
            cg_z: vec![0.0; n],
            precond: vec![1.0; n],
            jv: vec![0.0; m],
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}

/// Augmented Lagrangian value L(y) = f + μᵀc + (ρ/2)‖c‖² at x = σ⊙y.
#[allow(clippy::too_many_arguments)]
fn al_value(
    nlp: &dyn ParamNlp,
    theta: &[f64],
    y: &[f64],
    mu: &[f64],
    rho: f64,
    sigma: &[f64],
    x_phys: &mut [f64],
    c: &mut [f64],
) -> f64 {
    for i in 0..y.len() {
        x_phys[i] = sigma[i] * y[i];
    }
    let f = nlp.objective(x_phys, theta);
    nlp.eq_constraints(x_phys, theta, c);
    let mut val = f;
    for (ci, mi) in c.iter().zip(mu) {
        val += mi * ci + 0.5 * rho * ci * ci;
    }
    val
}

/// Value and scaled gradient of the augmented Lagrangian:
/// ∇_y L = σ ⊙ (∇f + Jᵀ(μ + ρ·c)).
#[allow(clippy::too_many_arguments)]
fn al_value_grad(
    nlp: &dyn ParamNlp,
    theta: &[f64],
    y: &[f64],
    mu: &[f64],
    rho: f64,
    sigma: &[f64],
    x_phys: &mut [f64],
    c: &mut [f64],
    w: &mut [f64],
    jtv: &mut [f64],
    grad: &mut [f64],
) -> f64 {
    for i in 0..y.len() {
        x_phys[i] = sigma[i] * y[i];
    }
    let f = nlp.objective(x_phys, theta);
    nlp.eq_constraints(x_phys, theta, c);
    let mut val = f;
    for ((ci, mi), wi) in c.iter().zip(mu.iter()).zip(w.iter_mut()) {
        val += mi * ci + 0.5 * rho * ci * ci;
        *wi = mi + rho * ci;
    }
    nlp.objective_grad(x_phys, theta, grad);
    if !c.is_empty() {
        nlp.constraints_jtvp(x_phys, theta, w, jtv);
        for (gi, ji) in grad.iter_mut().zip(jtv.iter()) {
            *gi += ji;
        }
    }
    for (gi, si) in grad.iter_mut().zip(sigma) {
        *gi *= si;
    }
    val
}

/// ∞-norm of the reduced gradient, divided by the gradient scale
/// max(1, ‖g‖_∞) so tolerances are relative to the problem's size. At an
/// active bound only the outward-pushing part of the gradient counts;
/// interior components count fully.
fn projected_gradient_norm(x: &[f64], g: &[f64], lb: &[f64], ub: &[f64]) -> f64 {
    let mut norm = 0.0f64;
    let mut gnorm = 0.0f64;
    for i in 0..x.len() {
        gnorm = gnorm.max(g[i].abs());
        let span = 1e-10 * (1.0 + x[i].abs());
        let residual = if x[i] - lb[i] <= span {
            (-g[i]).max(0.0)
        } else if ub[i] - x[i] <= span {
            g[i].max(0.0)
        } else {
            g[i].abs()
        };
        norm = norm.max(residual);
    }
    norm / gnorm.max(1.0)
}

/// Gauss-Newton Hessian product of the augmented Lagrangian in scaled
/// coordinates, restricted to the free variables:
/// hp = mask ⊙ σ ⊙ (∇²f + ρ·JᵀJ)(σ ⊙ mask ⊙ p).
/// The constraint-curvature term (μ + ρc)ᵀ∇²c is dropped; the model stays
/// positive semidefinite wherever ∇²f is.
#[allow(clippy::too_many_arguments)]
fn al_gauss_newton_hvp(
    nlp: &dyn ParamNlp,
    theta: &[f64],
    x_phys: &[f64],
    sigma: &[f64],
    rho: f64,
    p: &[f64],
    mask: &[f64],
    u: &mut [f64],
    jv: &mut [f64],
    jt: &mut [f64],
    hp: &mut [f64],
) {
    let n = p.len();
    for i in 0..n {
        u[i] = sigma[i] * mask[i] * p[i];
    }
    nlp.objective_hvp(x_phys, theta, u, hp);
    if !jv.is_empty() {
        nlp.constraints_jvp(x_phys, theta, u, jv);
        nlp.constraints_jtvp(x_phys, theta, jv, jt);
        for i in 0..n {
            hp[i] += rho * jt[i];
        }
    }
    for i in 0..n {
        hp[i] *= sigma[i] * mask[i];
    }
}

/// Jacobi preconditioner for the scaled Gauss-Newton system:
/// M = σ² ⊙ (diag ∇²f + ρ·diag JᵀJ), floored to stay positive.
fn build_preconditioner(nlp: &dyn ParamNlp, theta: &[f64], rho: f64, ws: &mut Workspace) {
    let n = ws.precond.len();
    nlp.objective_hess_diag(&ws.x_phys, theta, &mut ws.cg_u);
    nlp.constraints_jtj_diag(&ws.x_phys, theta, &mut ws.cg_z);
    let mut max_m = 0.0f64;
    for i in 0..n {
        let m = ws.sigma[i] * ws.sigma[i] * (ws.cg_u[i].max(0.0) + rho * ws.cg_z[i]);
        ws.precond[i] = m;
        max_m = max_m.max(m);
    }
    let floor = if max_m > 0.0 { 1e-10 * max_m } else { 1.0 };
    for m in ws.precond.iter_mut() {
        if !(*m > floor) {
            *m = floor;
        }
    }
}

/// Truncated preconditioned conjugate gradient on the free-variable
/// Gauss-Newton system H·d = −g. Stops on the forcing tolerance, the
/// iteration budget, or non-positive curvature (keeping the progress so
/// far, or the preconditioned steepest descent direction if none).
/// Returns CG iterations used.
#[allow(clippy::too_many_arguments)]
fn truncated_cg(
    nlp: &dyn ParamNlp,
    theta: &[f64],
    rho: f64,
    forcing: f64,
    budget: usize,
    ws: &mut Workspace,
) -> usize {
    let n = ws.d.len();
    let mut rz = 0.0;
    let mut r0 = 0.0f64;
    for i in 0..n {
        ws.d[i] = 0.0;
        ws.cg_r[i] = -ws.g[i] * ws.mask[i];
        ws.cg_z[i] = ws.cg_r[i] / ws.precond[i];
        ws.cg_p[i] = ws.cg_z[i];
        rz += ws.cg_r[i] * ws.cg_z[i];
        r0 = r0.max(ws.cg_r[i].abs());
    }
    if rz <= 0.0 || r0 == 0.0 {
        return 0;
    }
    let stop = (forcing * r0).max(1e-300);
    let mut iters = 0;
    while iters < budget {
        al_gauss_newton_hvp(
            nlp, theta, &ws.x_phys, &ws.sigma, rho, &ws.cg_p, &ws.mask, &mut ws.cg_u, &mut ws.jv,
            &mut ws.jtv, &mut ws.cg_hp,
        );
        iters += 1;
        let php: f64 = ws.cg_p.iter().zip(&ws.cg_hp).map(|(a, b)| a * b).sum();
        let pp: f64 = ws.cg_p.iter().map(|v| v * v).sum();
        if !php.is_finite() || php <= 1e-14 * pp {
            // Negative or vanishing curvature: keep what we have, or fall
            // back to preconditioned steepest descent on the first pass.
            let dd: f64 = ws.d.iter().map(|v| v * v).sum();
            if dd == 0.0 {
                for i in 0..n {
                    ws.d[i] = ws.cg_r[i] / ws.precond[i];
                }
            }
            break;
        }
        let alpha = rz / php;
        let mut r_inf = 0.0f64;
        for i in 0..n {
            ws.d[i] += alpha * ws.cg_p[i];
            ws.cg_r[i] -= alpha * ws.cg_hp[i];
            r_inf = r_inf.max(ws.cg_r[i].abs());
        }
        if r_inf <= stop {
            break;
        }
        let mut rz_new = 0.0;
        for i in 0..n {
            ws.cg_z[i] = ws.cg_r[i] / ws.precond[i];
            rz_new += ws.cg_r[i] * ws.cg_z[i];
        }
        if rz_new <= 0.0 {
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            ws.cg_p[i] = ws.cg_z[i] + beta * ws.cg_p[i];
        }
    }
    iters
}

/// Minimize the augmented Lagrangian over the (scaled) box from the current
/// `y`. Search directions come from a truncated-CG Newton step on the free
/// variables with a projected-gradient (spectral) fallback; step acceptance
/// is Armijo backtracking (factor 0.5, slope 1e-4) against a short
/// non-monotone reference. The iteration count includes CG iterations so
/// `max_inner_iters` bounds actual work. Returns the final projected-
/// gradient norm, iterations consumed, and the stop reason.
#[allow(clippy::too_many_arguments)]
fn inner_minimize(
    nlp: &dyn ParamNlp,
    theta: &[f64],
    y: &mut [f64],
    mu: &[f64],
    rho: f64,
    tol: f64,
    settings: &SolverSettings,
    ws: &mut Workspace,
) -> (f64, usize, InnerStatus) {
    let n = y.len();
    let mut f = al_value_grad(
        nlp, theta, y, mu, rho, &ws.sigma, &mut ws.x_phys, &mut ws.c, &mut ws.w, &mut ws.jtv,
        &mut ws.g,
    );
    if !f.is_finite() || ws.g.iter().any(|v| !v.is_finite()) {
        return (f64::INFINITY, 0, InnerStatus::NonFinite);
    }

    let mut pg = projected_gradient_norm(y, &ws.g, &ws.lb, &ws.ub);
    if pg <= tol {
        return (pg, 0, InnerStatus::Converged);
    }

    let mut memory = [f; NONMONOTONE_MEMORY];
    let mut mem_len = 1usize;
    let mut mem_pos = 0usize;
    let mut bb_alpha = (1.0 / inf_norm(&ws.g).max(1e-10)).clamp(BB_STEP_MIN, BB_STEP_MAX);
    let mut consumed = 0usize;
    let mut newton_steps = 0usize;

    while consumed < settings.max_inner_iters {
        // Variables pinned at a bound with the gradient pushing outward.
        for i in 0..n {
            let span = 1e-10 * (1.0 + y[i].abs());
            let at_lower = y[i] - ws.lb[i] <= span && ws.g[i] > 0.0;
            let at_upper = ws.ub[i] - y[i] <= span && ws.g[i] < 0.0;
            ws.mask[i] = if at_lower || at_upper { 0.0 } else { 1.0 };
        }
        build_preconditioner(nlp, theta, rho, ws);
        let forcing = pg.sqrt().clamp(0.01, 0.5);
        let cg_budget = CG_MAX_ITERS.min(settings.max_inner_iters - consumed);
        let cg_iters = truncated_cg(nlp, theta, rho, forcing, cg_budget, ws);
        consumed += cg_iters + 1;
        newton_steps += 1;

        let mut gtd: f64 = ws.g.iter().zip(ws.d.iter()).map(|(g, d)| g * d).sum();
        let dnorm = inf_norm(&ws.d);
        let gnorm = inf_norm(&ws.g);
        if !(gtd < -1e-12 * dnorm * gnorm) || !dnorm.is_finite() {
            // Fall back to a projected-gradient (spectral) step.
            for i in 0..n {
                ws.d[i] = (y[i] - bb_alpha * ws.g[i]).clamp(ws.lb[i], ws.ub[i]) - y[i];
            }
            gtd = ws.g.iter().zip(ws.d.iter()).map(|(g, d)| g * d).sum();
            if gtd >= 0.0 {
                return (pg, consumed, InnerStatus::Stalled);
            }
        }
        let f_ref = memory[..mem_len]
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));

        let mut t = 1.0f64;
        let f_new = loop {
            let mut actual_gtd = 0.0;
            for i in 0..n {
                ws.y_try[i] = (y[i] + t * ws.d[i]).clamp(ws.lb[i], ws.ub[i]);
                actual_gtd += ws.g[i] * (ws.y_try[i] - y[i]);
            }
            let f_try = al_value(
                nlp, theta, &ws.y_try, mu, rho, &ws.sigma, &mut ws.x_phys, &mut ws.c,
            );
            if f_try.is_finite() && f_try <= f_ref + ARMIJO_SLOPE * actual_gtd.min(0.0) {
                break f_try;
            }
            t *= BACKTRACK_FACTOR;
            if t * inf_norm(&ws.d) < settings.inner_step_tol {
                return (pg, consumed, InnerStatus::Stalled);
            }
        };

        let f_grad = al_value_grad(
            nlp, theta, &ws.y_try, mu, rho, &ws.sigma, &mut ws.x_phys, &mut ws.c, &mut ws.w,
            &mut ws.jtv, &mut ws.g_new,
        );
        if !f_grad.is_finite() || ws.g_new.iter().any(|v| !v.is_finite()) {
            return (pg, consumed, InnerStatus::NonFinite);
        }

        // Barzilai-Borwein length for fallback steps.
        let mut sts = 0.0;
        let mut sty = 0.0;
        for i in 0..n {
            let s = ws.y_try[i] - y[i];
            let dg = ws.g_new[i] - ws.g[i];
            sts += s * s;
            sty += s * dg;
        }
        if sty > 1e-30 {
            bb_alpha = (sts / sty).clamp(BB_STEP_MIN, BB_STEP_MAX);
        }

        y.copy_from_slice(&ws.y_try);
        std::mem::swap(&mut ws.g, &mut ws.g_new);
        f = f_new;
        if mem_len < NONMONOTONE_MEMORY {
            memory[mem_len] = f;
            mem_len += 1;
        } else {
            memory[mem_pos] = f;
            mem_pos = (mem_pos + 1) % NONMONOTONE_MEMORY;
        }

        pg = projected_gradient_norm(y, &ws.g, &ws.lb, &ws.ub);
        if settings.trace && newton_steps % 25 == 0 {
            log::trace!(
                "  newton {newton_steps}: f = {f:.6e}, pg = {pg:.3e}, cg = {cg_iters}, t = {t:.2e}"
            );
        }
        if pg <= tol {
            return (pg, consumed, InnerStatus::Converged);
        }
    }
    (pg, consumed, InnerStatus::MaxIters)
}

/// Solve the NLP at parameters θ from the initial guess `x_init`.
///
/// The initial guess need not be feasible. On `Converged` the returned point
/// satisfies the feasibility test at solver tolerances and first-order
/// stationarity of the augmented Lagrangian projected onto the bounds; any
/// other status marks the report unusable.
///
/// Multipliers always start at zero; nothing is warm-started across calls.
pub fn solve(
    nlp: &dyn ParamNlp,
    theta: &[f64],
    x_init: &[f64],
    settings: &SolverSettings,
) -> SolveReport {
    let start = Instant::now();
    let n = nlp.n_vars();
    let m = nlp.n_eq();
    assert_eq!(x_init.len(), n, "initial guess has wrong dimension");
    assert_eq!(theta.len(), nlp.param_dim(), "theta has wrong dimension");

    let mut ws = Workspace::new(n, m);
    nlp.variable_scales(theta, &mut ws.sigma);
    debug_assert!(ws.sigma.iter().all(|&s| s > 0.0));
    nlp.bounds(theta, &mut ws.lb, &mut ws.ub);
    for i in 0..n {
        ws.lb[i] /= ws.sigma[i];
        ws.ub[i] /= ws.sigma[i];
    }

    let mut y: Vec<f64> = x_init
        .iter()
        .enumerate()
        .map(|(i, &v)| (v / ws.sigma[i]).clamp(ws.lb[i], ws.ub[i]))
        .collect();

    let physical = |y: &[f64], sigma: &[f64]| -> Vec<f64> {
        y.iter().zip(sigma).map(|(yi, si)| yi * si).collect()
    };
    let report = |status, y: &[f64], ws: &Workspace, outer, inner| {
        let x = physical(y, &ws.sigma);
        let objective = nlp.objective(&x, theta);
        SolveReport {
            status,
            x_star: x,
            objective,
            constraint_violation: inf_norm(&ws.c),
            outer_iters: outer,
            inner_iters_total: inner,
            wall_time: start.elapsed().as_secs_f64(),
        }
    };

    let mut mu = vec![0.0; m];
    let mut rho = settings.penalty_init;
    {
        let x = physical(&y, &ws.sigma);
        nlp.eq_constraints(&x, theta, &mut ws.c);
        if ws.c.iter().any(|v| !v.is_finite()) || !nlp.objective(&x, theta).is_finite() {
            return report(SolveStatus::NonFinite, &y, &ws, 0, 0);
        }
    }
    let mut viol_best = inf_norm(&ws.c);
    let mut inner_total = 0usize;
    // Loose-to-tight inner stationarity schedule.
    let mut omega = 0.1f64.max(settings.kkt_tol);
    let mut unfinished_streak = 0usize;

    for outer in 1..=settings.max_outer_iters {
        let (pg, inner_iters, inner_status) =
            inner_minimize(nlp, theta, &mut y, &mu, rho, omega, settings, &mut ws);
        inner_total += inner_iters;

        if let InnerStatus::NonFinite = inner_status {
            return report(SolveStatus::NonFinite, &y, &ws, outer, inner_total);
        }

        let x = physical(&y, &ws.sigma);
        nlp.eq_constraints(&x, theta, &mut ws.c);
        let viol = inf_norm(&ws.c);
        if settings.trace {
            log::debug!(
                "outer {outer}: f = {:.6e}, viol = {viol:.3e}, pg = {pg:.3e}, rho = {rho:.1e}, omega = {omega:.1e}, inner = {inner_iters}",
                nlp.objective(&x, theta)
            );
        }

        if viol <= settings.eq_tol && pg <= settings.kkt_tol {
            return report(SolveStatus::Converged, &y, &ws, outer, inner_total);
        }

        let finished = !matches!(inner_status, InnerStatus::MaxIters);
        unfinished_streak = if finished { 0 } else { unfinished_streak + 1 };

        // Reduction target per outer iteration: multiplier step when met,
        // penalty growth when missed. An unfinished inner solve gets one
        // further round before it counts as a miss.
        if viol <= (OUTER_PROGRESS_FACTOR * viol_best).max(settings.eq_tol) {
            for (mi, &ci) in mu.iter_mut().zip(ws.c.iter()) {
                *mi += rho * ci;
            }
            viol_best = viol;
            omega = (omega * 0.1).max(settings.kkt_tol);
        } else if finished || unfinished_streak >= 2 {
            if rho >= settings.penalty_max {
                return report(SolveStatus::Diverged, &y, &ws, outer, inner_total);
            }
            rho = (rho * settings.penalty_growth).min(settings.penalty_max);
        }
    }

    report(
        SolveStatus::MaxIterations,
        &y,
        &ws,
        settings.max_outer_iters,
        inner_total,
    )
}

/// Where a flagged derivative entry lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    Objective,
    Constraint,
}

/// One derivative entry whose analytic and finite-difference values disagree.
#[derive(Debug, Clone)]
pub struct GradFlag {
    pub target: GradTarget,
    /// Constraint row (0 for the objective).
    pub row: usize,
    /// Variable index.
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Result of [`check_gradients`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err_objective: f64,
    pub max_rel_err_constraints: f64,
    /// Entries whose relative error exceeded the requested tolerance.
    pub flagged: Vec<GradFlag>,
}

impl GradCheckReport {
    pub fn ok(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

/// Compare analytic derivatives of the objective and constraints against
/// central finite differences, flagging entries whose relative error exceeds
/// `rel_tol`. Purely a reporting operation.
pub fn check_gradients(
    nlp: &dyn ParamNlp,
    theta: &[f64],
    x: &[f64],
    rel_tol: f64,
) -> GradCheckReport {
    let n = nlp.n_vars();
    let m = nlp.n_eq();
    let mut flagged = Vec::new();

    let mut analytic = vec![0.0; n];
    let mut numeric = vec![0.0; n];
    nlp.objective_grad(x, theta, &mut analytic);
    fd_objective_grad(nlp, x, theta, &mut numeric);
    let mut max_obj = 0.0f64;
    for j in 0..n {
        let e = rel_err(analytic[j], numeric[j]);
        max_obj = max_obj.max(e);
        if e > rel_tol {
            flagged.push(GradFlag {
                target: GradTarget::Objective,
                row: 0,
                col: j,
                analytic: analytic[j],
                numeric: numeric[j],
                rel_err: e,
            });
        }
    }

    let mut max_con = 0.0f64;
    if m > 0 {
        let fd_jac = fd_constraint_jacobian(nlp, x, theta);
        let mut unit = vec![0.0; m];
        let mut row = vec![0.0; n];
        for i in 0..m {
            unit[i] = 1.0;
            nlp.constraints_jtvp(x, theta, &unit, &mut row);
            unit[i] = 0.0;
            for j in 0..n {
                let e = rel_err(row[j], fd_jac[i * n + j]);
                max_con = max_con.max(e);
                if e > rel_tol {
                    flagged.push(GradFlag {
                        target: GradTarget::Constraint,
                        row: i,
                        col: j,
                        analytic: row[j],
                        numeric: fd_jac[i * n + j],
                        rel_err: e,
                    });
                }
            }
        }
    }

    GradCheckReport {
        max_rel_err_objective: max_obj,
        max_rel_err_constraints: max_con,
        flagged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::ClosureNlp;
    use approx::assert_abs_diff_eq;

    fn shifted_quadratic() -> ClosureNlp {
        ClosureNlp::new(1, 0, 0, |x, _| (x[0] - 2.0).powi(2))
            .with_objective_grad(|x, _, out| out[0] = 2.0 * (x[0] - 2.0))
    }

    fn constrained_quadratic() -> ClosureNlp {
        ClosureNlp::new(2, 1, 0, |x, _| x[0] * x[0] + x[1] * x[1])
            .with_objective_grad(|x, _, out| {
                out[0] = 2.0 * x[0];
                out[1] = 2.0 * x[1];
            })
            .with_constraints(|x, _, out| out[0] = x[0] + x[1] - 1.0)
            .with_jtvp(|_, _, v, out| {
                out[0] = v[0];
                out[1] = v[0];
            })
    }

    #[test]
    fn unconstrained_quadratic_converges() {
        let nlp = shifted_quadratic();
        let report = solve(&nlp, &[], &[0.0], &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Converged);
        assert_abs_diff_eq!(report.x_star[0], 2.0, epsilon = 1e-4);
        assert!(report.objective < 1e-8);
    }

    #[test]
    fn equality_quadratic_reaches_kkt_point() {
        // min x₁² + x₂² s.t. x₁ + x₂ = 1 has its optimum at (1/2, 1/2).
        let nlp = constrained_quadratic();
        let settings = SolverSettings {
            kkt_tol: 1e-9,
            eq_tol: 1e-10,
            ..SolverSettings::default()
        };
        for x_init in [[0.0, 0.0], [5.0, -3.0], [-100.0, 42.0]] {
            let report = solve(&nlp, &[], &x_init, &settings);
            assert_eq!(report.status, SolveStatus::Converged);
            assert_abs_diff_eq!(report.x_star[0], 0.5, epsilon = 1e-6);
            assert_abs_diff_eq!(report.x_star[1], 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn converged_point_is_feasible() {
        let nlp = constrained_quadratic();
        let settings = SolverSettings::default();
        let report = solve(&nlp, &[], &[3.0, 3.0], &settings);
        assert!(report.converged());
        assert!(nlp.is_feasible(&report.x_star, &[], &settings.feasibility_tolerance()));
    }

    #[test]
    fn solution_lies_in_its_own_basin() {
        let nlp = constrained_quadratic();
        let settings = SolverSettings::default();
        let first = solve(&nlp, &[], &[7.0, -2.0], &settings);
        assert!(first.converged());
        let second = solve(&nlp, &[], &first.x_star, &settings);
        assert!(second.converged());
        let drift = first
            .x_star
            .iter()
            .zip(&second.x_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(drift <= 1e-5, "re-solve drifted by {drift}");
    }

    #[test]
    fn descent_on_convex_objective() {
        let nlp = shifted_quadratic();
        let x_init = [13.0];
        let report = solve(&nlp, &[], &x_init, &SolverSettings::default());
        assert!(report.objective <= nlp.objective(&x_init, &[]));
    }

    #[test]
    fn nonfinite_objective_is_tagged() {
        let nlp = ClosureNlp::new(1, 0, 0, |_, _| f64::NAN);
        let report = solve(&nlp, &[], &[0.0], &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::NonFinite);
        assert_eq!(report.x_star.len(), 1);
    }

    #[test]
    fn infeasible_constraints_diverge() {
        // c(x) = x² + 1 has no root; the penalty must max out.
        let nlp = ClosureNlp::new(1, 1, 0, |x, _| x[0] * x[0])
            .with_constraints(|x, _, out| out[0] = x[0] * x[0] + 1.0);
        let report = solve(&nlp, &[], &[0.5], &SolverSettings::default());
        assert_ne!(report.status, SolveStatus::Converged);
    }

    #[test]
    fn bounds_are_respected() {
        let nlp = ClosureNlp::new(1, 0, 0, |x, _| (x[0] - 5.0).powi(2))
            .with_objective_grad(|x, _, out| out[0] = 2.0 * (x[0] - 5.0))
            .with_bounds(vec![-1.0], vec![1.0]);
        let report = solve(&nlp, &[], &[0.0], &SolverSettings::default());
        assert!(report.converged());
        assert_abs_diff_eq!(report.x_star[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn reports_are_deterministic() {
        let nlp = constrained_quadratic();
        let settings = SolverSettings::default();
        let a = solve(&nlp, &[], &[0.3, 9.1], &settings);
        let b = solve(&nlp, &[], &[0.3, 9.1], &settings);
        assert_eq!(a.x_star, b.x_star);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.inner_iters_total, b.inner_iters_total);
    }

    #[test]
    fn settings_validation() {
        assert!(SolverSettings::default().validate().is_ok());
        let bad = SolverSettings {
            penalty_growth: 1.0,
            ..SolverSettings::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverSettings {
            penalty_init: 1e12,
            ..SolverSettings::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gradient_check_linear_objective_is_exact() {
        let nlp = ClosureNlp::new(3, 0, 0, |x, _| 2.0 * x[0] - x[1] + 0.5 * x[2])
            .with_objective_grad(|_, _, out| out.copy_from_slice(&[2.0, -1.0, 0.5]));
        let report = check_gradients(&nlp, &[], &[0.3, -1.2, 4.0], 1e-6);
        assert!(report.ok());
        assert!(report.max_rel_err_objective < 1e-9);
    }

    #[test]
    fn gradient_check_flags_corrupted_entry() {
        // Analytic gradient with its second entry scaled by 2.
        let nlp = ClosureNlp::new(2, 1, 0, |x, _| x[0] * x[0] + x[1] * x[1])
            .with_objective_grad(|x, _, out| {
                out[0] = 2.0 * x[0];
                out[1] = 4.0 * x[1];
            })
            .with_constraints(|x, _, out| out[0] = x[0] - x[1]);
        let report = check_gradients(&nlp, &[], &[1.0, 1.0], 1e-4);
        assert!(!report.ok());
        assert_eq!(report.flagged.len(), 1);
        let flag = &report.flagged[0];
        assert_eq!(flag.target, GradTarget::Objective);
        assert_eq!(flag.col, 1);
    }
}
