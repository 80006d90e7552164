//! Cart-pole swing-up as a direct transcription.
//!
//! Frictionless cart on a rail with a point-mass pole; the only input is a
//! horizontal force on the cart. The pole angle φ is measured from hanging
//! (φ = 0 down, φ = π upright). The task is to move from hanging rest to
//! upright rest within a fixed horizon while the cart stays inside its rail
//! limits and the force inside its actuator limits.
//!
//! Decision variables are the states at N knots followed by the force at
//! each knot: `[z_0 … z_{N-1}, F_0 … F_{N-1}]` with z = [x, ẋ, φ, φ̇].
//! Equality constraints are trapezoidal collocation defects between
//! adjacent knots plus the boundary conditions; the objective is the
//! control effort Δt·ΣF².

use crate::error::{Error, Result};
use crate::nlp::{ParamMap, ParamNlp};

pub const GRAVITY: f64 = 9.81;

/// Physical parameters; each one doubles as a homotopy parameter.
/// θ order: [m_cart, m_pole, f_max, l_pole, x_max].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    /// Cart mass (kg).
    pub m_cart: f64,
    /// Pole point mass (kg).
    pub m_pole: f64,
    /// Force limit (N): |F| ≤ f_max.
    pub f_max: f64,
    /// Pole length (m).
    pub l_pole: f64,
    /// Rail limit (m): |x| ≤ x_max.
    pub x_max: f64,
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("m_cart", self.m_cart),
            ("m_pole", self.m_pole),
            ("f_max", self.f_max),
            ("l_pole", self.l_pole),
            ("x_max", self.x_max),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidValue {
                    what,
                    detail: format!("must be strictly positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn to_theta(self) -> Vec<f64> {
        vec![self.m_cart, self.m_pole, self.f_max, self.l_pole, self.x_max]
    }

    pub fn from_theta(theta: &[f64]) -> Self {
        Self {
            m_cart: theta[0],
            m_pole: theta[1],
            f_max: theta[2],
            l_pole: theta[3],
            x_max: theta[4],
        }
    }

    /// Easy endpoint used throughout the benchmarks: light short pole,
    /// strong actuator.
    pub fn easy() -> Self {
        Self {
            m_cart: 20.0,
            m_pole: 1.0,
            f_max: 200.0,
            l_pole: 0.6,
            x_max: 1.6,
        }
    }

    /// Hardest benchmark corner: heavy long pole, weak actuator.
    pub fn hard() -> Self {
        Self {
            m_cart: 20.0,
            m_pole: 60.0,
            f_max: 100.0,
            l_pole: 2.0,
            x_max: 1.6,
        }
    }
}

/// Discretization of the swing-up problem.
#[derive(Debug, Clone, Copy)]
pub struct TranscriptionSettings {
    /// Trajectory duration in seconds.
    pub horizon: f64,
    /// Number of knot points, at least 2.
    pub knots: usize,
    pub gravity: f64,
}

impl Default for TranscriptionSettings {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            knots: 101,
            gravity: GRAVITY,
        }
    }
}

impl TranscriptionSettings {
    pub fn with_knots(knots: usize) -> Self {
        Self {
            knots,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots < 2 {
            return Err(Error::InvalidValue {
                what: "knots",
                detail: format!("need at least 2 knot points, got {}", self.knots),
            });
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidValue {
                what: "horizon",
                detail: format!("must be strictly positive, got {}", self.horizon),
            });
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.knots - 1) as f64
    }
}

/// State derivative [ẋ, ẍ, φ̇, φ̈] for state [x, ẋ, φ, φ̇] under force `f`.
/// Smooth in all arguments and defined everywhere.
pub fn cartpole_dynamics(state: &[f64; 4], force: f64, p: &CartPoleParams, gravity: f64) -> [f64; 4] {
    let (xdot, phi, w) = (state[1], state[2], state[3]);
    let (s, c) = phi.sin_cos();
    let den = p.m_cart + p.m_pole * s * s;
    let xdd = (force + p.m_pole * s * (p.l_pole * w * w + gravity * c)) / den;
    let wdd = (-force * c - p.m_pole * p.l_pole * w * w * s * c - (p.m_cart + p.m_pole) * gravity * s)
        / (p.l_pole * den);
    [xdot, xdd, w, wdd]
}

/// Partials of the state derivative: `a` is ∂f/∂z (row-major 4×4) and `b`
/// is ∂f/∂F.
fn dynamics_jacobian(
    state: &[f64; 4],
    force: f64,
    p: &CartPoleParams,
    gravity: f64,
) -> ([[f64; 4]; 4], [f64; 4]) {
    let (phi, w) = (state[2], state[3]);
    let (s, c) = phi.sin_cos();
    let cos2 = c * c - s * s;
    let den = p.m_cart + p.m_pole * s * s;
    let dden = 2.0 * p.m_pole * s * c;

    let num1 = force + p.m_pole * s * (p.l_pole * w * w + gravity * c);
    let dnum1_dphi = p.m_pole * (c * p.l_pole * w * w + gravity * cos2);
    let xdd = num1 / den;
    let dxdd_dphi = (dnum1_dphi - xdd * dden) / den;
    let dxdd_dw = 2.0 * p.m_pole * s * p.l_pole * w / den;
    let dxdd_df = 1.0 / den;

    let num2 = -force * c - p.m_pole * p.l_pole * w * w * s * c - (p.m_cart + p.m_pole) * gravity * s;
    let dnum2_dphi = force * s - p.m_pole * p.l_pole * w * w * cos2 - (p.m_cart + p.m_pole) * gravity * c;
    let wdd = num2 / (p.l_pole * den);
    let dwdd_dphi = (dnum2_dphi / p.l_pole - wdd * dden) / den;
    let dwdd_dw = -2.0 * p.m_pole * w * s * c / den;
    let dwdd_df = -c / (p.l_pole * den);

    let a = [
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, dxdd_dphi, dxdd_dw],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, dwdd_dphi, dwdd_dw],
    ];
    let b = [0.0, dxdd_df, 0.0, dwdd_df];
    (a, b)
}

/// Total mechanical energy of the cart-pole; conserved along force-free
/// motion.
pub fn cartpole_energy(state: &[f64; 4], p: &CartPoleParams, gravity: f64) -> f64 {
    let (xdot, phi, w) = (state[1], state[2], state[3]);
    let kinetic = 0.5 * (p.m_cart + p.m_pole) * xdot * xdot
        + p.m_pole * p.l_pole * xdot * w * phi.cos()
        + 0.5 * p.m_pole * p.l_pole * p.l_pole * w * w;
    let potential = -p.m_pole * gravity * p.l_pole * phi.cos();
    kinetic + potential
}

/// Swing-up transcription over θ = [m_cart, m_pole, f_max, l_pole, x_max].
#[derive(Debug, Clone)]
pub struct CartPoleNlp {
    settings: TranscriptionSettings,
}

impl CartPoleNlp {
    pub fn new(settings: TranscriptionSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self { settings })
    }

    pub fn settings(&self) -> &TranscriptionSettings {
        &self.settings
    }

    pub fn knots(&self) -> usize {
        self.settings.knots
    }

    /// Index of the state vector at knot `k`.
    pub fn state_index(&self, k: usize) -> usize {
        4 * k
    }

    /// Index of the force variable at knot `k`.
    pub fn force_index(&self, k: usize) -> usize {
        4 * self.settings.knots + k
    }

    pub fn state_at(&self, vars: &[f64], k: usize) -> [f64; 4] {
        let i = self.state_index(k);
        [vars[i], vars[i + 1], vars[i + 2], vars[i + 3]]
    }

    pub fn force_at(&self, vars: &[f64], k: usize) -> f64 {
        vars[self.force_index(k)]
    }

    /// Componentwise 5-dimensional map between two parameter sets.
    pub fn map(easy: CartPoleParams, goal: CartPoleParams) -> ParamMap {
        ParamMap::componentwise(easy.to_theta(), goal.to_theta())
            .expect("endpoint dimensions agree")
    }

    /// Scalar map driving all five parameters jointly.
    pub fn scalar_map(easy: CartPoleParams, goal: CartPoleParams) -> ParamMap {
        ParamMap::scalar(easy.to_theta(), goal.to_theta()).expect("endpoint dimensions agree")
    }

    /// The all-zeros initial guess used by the benchmarks.
    pub fn zero_guess(&self) -> Vec<f64> {
        vec![0.0; self.n_vars()]
    }
}

impl ParamNlp for CartPoleNlp {
    fn n_vars(&self) -> usize {
        5 * self.settings.knots
    }

    fn n_eq(&self) -> usize {
        4 * (self.settings.knots - 1) + 8
    }

    fn param_dim(&self) -> usize {
        5
    }

    fn objective(&self, x: &[f64], _theta: &[f64]) -> f64 {
        let dt = self.settings.dt();
        let n = self.settings.knots;
        let forces = &x[4 * n..5 * n];
        dt * forces.iter().map(|f| f * f).sum::<f64>()
    }

    fn objective_grad(&self, x: &[f64], _theta: &[f64], out: &mut [f64]) {
        let dt = self.settings.dt();
        let n = self.settings.knots;
        out[..4 * n].fill(0.0);
        for k in 0..n {
            out[4 * n + k] = 2.0 * dt * x[4 * n + k];
        }
    }

    fn eq_constraints(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let p = CartPoleParams::from_theta(theta);
        let g = self.settings.gravity;
        let n = self.settings.knots;
        let dt = self.settings.dt();

        // Defects in rate form: (z⁺ − z)/Δt − (f + f⁺)/2. Dividing by Δt
        // keeps the constraint rows on the same scale as the dynamics and
        // the boundary rows, which keeps the penalty parameter small.
        let mut f_prev = cartpole_dynamics(&self.state_at(x, 0), self.force_at(x, 0), &p, g);
        for k in 0..n - 1 {
            let z0 = self.state_at(x, k);
            let z1 = self.state_at(x, k + 1);
            let f_next = cartpole_dynamics(&z1, self.force_at(x, k + 1), &p, g);
            for i in 0..4 {
                out[4 * k + i] = (z1[i] - z0[i]) / dt - 0.5 * (f_prev[i] + f_next[i]);
            }
            f_prev = f_next;
        }

        // Boundary conditions: hanging rest at t = 0, upright rest centered
        // on the rail at t = T.
        let base = 4 * (n - 1);
        let z_first = self.state_at(x, 0);
        let z_last = self.state_at(x, n - 1);
        for i in 0..4 {
            out[base + i] = z_first[i];
        }
        out[base + 4] = z_last[0];
        out[base + 5] = z_last[1];
        out[base + 6] = z_last[2] - std::f64::consts::PI;
        out[base + 7] = z_last[3];
    }

    fn constraints_jtvp(&self, x: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        let p = CartPoleParams::from_theta(theta);
        let g = self.settings.gravity;
        let n = self.settings.knots;
        let dt = self.settings.dt();
        out.fill(0.0);

        // One jacobian per knot; each feeds the defect rows on both sides.
        let mut jacs = Vec::with_capacity(n);
        for k in 0..n {
            jacs.push(dynamics_jacobian(
                &self.state_at(x, k),
                self.force_at(x, k),
                &p,
                g,
            ));
        }

        let inv_dt = 1.0 / dt;
        for k in 0..n - 1 {
            let vk = &v[4 * k..4 * k + 4];
            let (a0, b0) = &jacs[k];
            let (a1, b1) = &jacs[k + 1];
            let i0 = self.state_index(k);
            let i1 = self.state_index(k + 1);
            for j in 0..4 {
                let mut acc0 = -inv_dt * vk[j];
                let mut acc1 = inv_dt * vk[j];
                for i in 0..4 {
                    acc0 -= 0.5 * a0[i][j] * vk[i];
                    acc1 -= 0.5 * a1[i][j] * vk[i];
                }
                out[i0 + j] += acc0;
                out[i1 + j] += acc1;
            }
            let mut accf0 = 0.0;
            let mut accf1 = 0.0;
            for i in 0..4 {
                accf0 -= 0.5 * b0[i] * vk[i];
                accf1 -= 0.5 * b1[i] * vk[i];
            }
            out[self.force_index(k)] += accf0;
            out[self.force_index(k + 1)] += accf1;
        }

        let base = 4 * (n - 1);
        let last = self.state_index(n - 1);
        for i in 0..4 {
            out[i] += v[base + i];
            out[last + i] += v[base + 4 + i];
        }
    }

    fn constraints_jvp(&self, x: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        let p = CartPoleParams::from_theta(theta);
        let g = self.settings.gravity;
        let n = self.settings.knots;
        let dt = self.settings.dt();
        let inv_dt = 1.0 / dt;

        // Directional derivative of the dynamics at each knot.
        let mut dfv = vec![[0.0f64; 4]; n];
        for k in 0..n {
            let (a, b) = dynamics_jacobian(&self.state_at(x, k), self.force_at(x, k), &p, g);
            let vz = &v[self.state_index(k)..self.state_index(k) + 4];
            let vf = v[self.force_index(k)];
            for i in 0..4 {
                dfv[k][i] = a[i][0] * vz[0] + a[i][1] * vz[1] + a[i][2] * vz[2] + a[i][3] * vz[3]
                    + b[i] * vf;
            }
        }

        for k in 0..n - 1 {
            let v0 = &v[self.state_index(k)..self.state_index(k) + 4];
            let v1 = &v[self.state_index(k + 1)..self.state_index(k + 1) + 4];
            for i in 0..4 {
                out[4 * k + i] = (v1[i] - v0[i]) * inv_dt - 0.5 * (dfv[k][i] + dfv[k + 1][i]);
            }
        }
        let base = 4 * (n - 1);
        let last = self.state_index(n - 1);
        for i in 0..4 {
            out[base + i] = v[i];
            out[base + 4 + i] = v[last + i];
        }
    }

    fn objective_hvp(&self, _x: &[f64], _theta: &[f64], v: &[f64], out: &mut [f64]) {
        let dt = self.settings.dt();
        let n = self.settings.knots;
        out[..4 * n].fill(0.0);
        for k in 0..n {
            out[4 * n + k] = 2.0 * dt * v[4 * n + k];
        }
    }

    fn objective_hess_diag(&self, _x: &[f64], _theta: &[f64], out: &mut [f64]) {
        let dt = self.settings.dt();
        let n = self.settings.knots;
        out[..4 * n].fill(0.0);
        out[4 * n..].fill(2.0 * dt);
    }

    fn constraints_jtj_diag(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let p = CartPoleParams::from_theta(theta);
        let g = self.settings.gravity;
        let n = self.settings.knots;
        let inv_dt = 1.0 / self.settings.dt();
        out.fill(0.0);
        for k in 0..n {
            let (a, b) = dynamics_jacobian(&self.state_at(x, k), self.force_at(x, k), &p, g);
            // State columns of the defect blocks left and right of knot k.
            for j in 0..4 {
                let mut acc = 0.0;
                for i in 0..4 {
                    let ident = if i == j { inv_dt } else { 0.0 };
                    let col = -ident - 0.5 * a[i][j];
                    if k + 1 < n {
                        acc += col * col;
                    }
                    let col = ident - 0.5 * a[i][j];
                    if k > 0 {
                        acc += col * col;
                    }
                }
                out[4 * k + j] = acc;
            }
            let mut accf = 0.0;
            for bi in b {
                let col = 0.5 * bi;
                accf += col * col;
            }
            let sides = if k == 0 || k == n - 1 { 1.0 } else { 2.0 };
            out[self.force_index(k)] = sides * accf;
        }
        // Boundary rows pin the first and last state with unit entries.
        let last = self.state_index(n - 1);
        for i in 0..4 {
            out[i] += 1.0;
            out[last + i] += 1.0;
        }
    }

    fn bounds(&self, theta: &[f64], lower: &mut [f64], upper: &mut [f64]) {
        let p = CartPoleParams::from_theta(theta);
        let n = self.settings.knots;
        lower.fill(f64::NEG_INFINITY);
        upper.fill(f64::INFINITY);
        for k in 0..n {
            lower[4 * k] = -p.x_max;
            upper[4 * k] = p.x_max;
            lower[4 * n + k] = -p.f_max;
            upper[4 * n + k] = p.f_max;
        }
    }

    fn variable_scales(&self, theta: &[f64], out: &mut [f64]) {
        // Forces live on the actuator scale; states are O(1). Without this
        // the force columns of the collocation Jacobian are ~dt/(2·m_cart)
        // and first-order steps crawl in the force subspace.
        let p = CartPoleParams::from_theta(theta);
        let n = self.settings.knots;
        out[..4 * n].fill(1.0);
        out[4 * n..].fill(p.f_max);
    }
}

/// One sample of a simulated trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: [f64; 4],
    pub force: f64,
}

/// Simulate the dynamics under the transcription's force trajectory
/// (linearly interpolated between knots) with fixed-step RK4.
pub fn simulate(
    nlp: &CartPoleNlp,
    vars: &[f64],
    p: &CartPoleParams,
    sim_dt: f64,
) -> Vec<TrajectorySample> {
    let horizon = nlp.settings().horizon;
    let dt_knot = nlp.settings().dt();
    let n = nlp.knots();
    let g = nlp.settings().gravity;
    let force_at = |t: f64| -> f64 {
        let pos = (t / dt_knot).min((n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        let frac = pos - k as f64;
        (1.0 - frac) * nlp.force_at(vars, k) + frac * nlp.force_at(vars, k + 1)
    };

    let mut state = nlp.state_at(vars, 0);
    let mut out = vec![TrajectorySample {
        t: 0.0,
        state,
        force: force_at(0.0),
    }];
    let steps = (horizon / sim_dt).ceil() as usize;
    let h = horizon / steps as f64;
    let mut t = 0.0;
    for _ in 0..steps {
        let k1 = cartpole_dynamics(&state, force_at(t), p, g);
        let mid1 = add_scaled(&state, &k1, h / 2.0);
        let k2 = cartpole_dynamics(&mid1, force_at(t + h / 2.0), p, g);
        let mid2 = add_scaled(&state, &k2, h / 2.0);
        let k3 = cartpole_dynamics(&mid2, force_at(t + h / 2.0), p, g);
        let end = add_scaled(&state, &k3, h);
        let k4 = cartpole_dynamics(&end, force_at(t + h), p, g);
        for i in 0..4 {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        out.push(TrajectorySample {
            t,
            state,
            force: force_at(t),
        });
    }
    out
}

fn add_scaled(state: &[f64; 4], rate: &[f64; 4], h: f64) -> [f64; 4] {
    [
        state[0] + h * rate[0],
        state[1] + h * rate[1],
        state[2] + h * rate[2],
        state[3] + h * rate[3],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equilibria_have_zero_derivative() {
        let p = CartPoleParams::easy();
        let hanging = cartpole_dynamics(&[0.0, 0.0, 0.0, 0.0], 0.0, &p, GRAVITY);
        assert_eq!(hanging, [0.0, 0.0, 0.0, 0.0]);
        let upright = cartpole_dynamics(&[0.0, 0.0, std::f64::consts::PI, 0.0], 0.0, &p, GRAVITY);
        for d in upright {
            assert!(d.abs() < 1e-12, "upright derivative {d}");
        }
    }

    #[test]
    fn force_free_motion_conserves_energy() {
        // dE/dt = ∇E · f(z, 0) must vanish along the vector field.
        let p = CartPoleParams::easy();
        for state in [
            [0.3, -0.7, 1.9, 2.4],
            [0.0, 1.3, 0.4, -3.1],
            [-1.2, 0.05, 2.9, 0.7],
        ] {
            let rate = cartpole_dynamics(&state, 0.0, &p, GRAVITY);
            let (xdot, phi, w) = (state[1], state[2], state[3]);
            let (s, c) = phi.sin_cos();
            let grad = [
                0.0,
                (p.m_cart + p.m_pole) * xdot + p.m_pole * p.l_pole * w * c,
                -p.m_pole * p.l_pole * xdot * w * s + p.m_pole * GRAVITY * p.l_pole * s,
                p.m_pole * p.l_pole * xdot * c + p.m_pole * p.l_pole * p.l_pole * w,
            ];
            let de: f64 = grad.iter().zip(&rate).map(|(g, r)| g * r).sum();
            assert!(
                de.abs() <= 1e-10,
                "energy drift rate {de} for state {state:?}"
            );
        }
    }

    #[test]
    fn transcription_dimensions() {
        let nlp = CartPoleNlp::new(TranscriptionSettings::default()).unwrap();
        assert_eq!(nlp.n_vars(), 505);
        assert_eq!(nlp.n_eq(), 408);
        let small = CartPoleNlp::new(TranscriptionSettings::with_knots(21)).unwrap();
        assert_eq!(small.n_vars(), 105);
        assert_eq!(small.n_eq(), 88);
    }

    #[test]
    fn zero_controls_cost_nothing() {
        let nlp = CartPoleNlp::new(TranscriptionSettings::with_knots(21)).unwrap();
        let theta = CartPoleParams::easy().to_theta();
        assert_eq!(nlp.objective(&nlp.zero_guess(), &theta), 0.0);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let nlp = CartPoleNlp::new(TranscriptionSettings::with_knots(7)).unwrap();
        let theta = CartPoleParams::easy().to_theta();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..nlp.n_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = check_gradients(&nlp, &theta, &x, 1e-4);
        assert!(
            report.ok(),
            "flagged {} entries, worst obj {:.2e}, worst con {:.2e}",
            report.flagged.len(),
            report.max_rel_err_objective,
            report.max_rel_err_constraints
        );
    }

    #[test]
    fn bounds_follow_theta() {
        let nlp = CartPoleNlp::new(TranscriptionSettings::with_knots(5)).unwrap();
        let theta = CartPoleParams::hard().to_theta();
        let mut lb = vec![0.0; nlp.n_vars()];
        let mut ub = vec![0.0; nlp.n_vars()];
        nlp.bounds(&theta, &mut lb, &mut ub);
        assert_eq!(lb[0], -1.6);
        assert_eq!(ub[nlp.force_index(2)], 100.0);
        assert_eq!(ub[1], f64::INFINITY);
    }
}
