//! One-variable problem families whose solution manifolds exhibit the
//! classic failure modes of path-following: bifurcation, folds, disconnected
//! branches, and paths that end before the goal. Every family's local
//! minima at any λ are enumerable by dense grid search, which makes these
//! problems the ground truth for algorithm tests.
//!
//! All families share the form
//!
//! ```text
//!     f(x, θ) = (x² − s)² + b·x + w·(x − a)²
//! ```
//!
//! with (s, b, w) derived from θ per family. The well parameter s controls
//! the split into two wells, the tilt b breaks their symmetry, and the
//! anchor w·(x − a)² pins the easy problem's minimum.

use crate::error::Result;
use crate::nlp::{ParamMap, ParamNlp};

/// Which manifold pathology a family realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// One well splits into two as λ crosses the middle of the range; which
    /// branch a descent from the root reaches depends on λ, so the search
    /// can discover both.
    Bifurcation,
    /// The branch containing the root's minimum folds away mid-range and
    /// reappears near the goal.
    Fold,
    /// The root's branch is interrupted by a wide band of λ where its well
    /// does not exist, splitting the manifold into disjoint components.
    Disconnected,
    /// The root's branch terminates partway and never returns.
    AbbreviatedPath,
    /// Two wells at every λ. The canonical variant is symmetric and
    /// constant in λ; the asymmetric variant tilts the goal wells to give
    /// them distinct objective values.
    DoubleWell,
}

/// Anchor weight at the easy endpoint for the anchored families.
const ANCHOR_WEIGHT: f64 = 3.0;

/// A concrete one-variable family with a scalar homotopy.
#[derive(Debug, Clone)]
pub struct Synthetic {
    kind: SyntheticKind,
    theta_easy: Vec<f64>,
    theta_goal: Vec<f64>,
    anchor_center: f64,
    /// Amplitude of the sine tilt for the band families (0 elsewhere).
    sine_tilt: f64,
    x0: f64,
}

impl Synthetic {
    /// Pitchfork with a faint unfolding: the anchor pins the easy minimum
    /// at x = 0 and fades quintically, while the tilt crosses zero at
    /// λ = 0.85 so that descents from the root reach the left branch for
    /// mid-range λ and the right branch near the goal. The residual goal
    /// tilt shifts the minima off ±√½ by less than 5e-4.
    pub fn bifurcation() -> Self {
        let b_easy = 0.0102;
        let b_goal = -0.0018;
        Self {
            kind: SyntheticKind::Bifurcation,
            theta_easy: vec![-0.5, b_easy, 1.0],
            theta_goal: vec![0.5, b_goal, 0.0],
            anchor_center: b_easy / (2.0 * ANCHOR_WEIGHT),
            sine_tilt: 0.0,
            x0: 0.25,
        }
    }

    /// Symmetric λ-independent double well with minima at ±1.
    pub fn double_well() -> Self {
        Self {
            kind: SyntheticKind::DoubleWell,
            theta_easy: vec![1.0],
            theta_goal: vec![1.0],
            anchor_center: 0.0,
            sine_tilt: 0.0,
            x0: 0.5,
        }
    }

    /// Same unfolding scheme as [`Synthetic::bifurcation`] but with a tilt
    /// strong enough that the two goal minima have clearly distinct
    /// objective values (the right one is cheaper). Mid-range descents from
    /// the root land on the left branch, direct jumps to the goal on the
    /// right one, so searches that keep only one solution per λ return a
    /// branch-dependent cost.
    pub fn double_well_asymmetric() -> Self {
        let b_easy = 0.36;
        let b_goal = -0.12;
        Self {
            kind: SyntheticKind::DoubleWell,
            theta_easy: vec![-0.5, b_easy, 1.0],
            theta_goal: vec![0.5, b_goal, 0.0],
            anchor_center: b_easy / (2.0 * ANCHOR_WEIGHT),
            sine_tilt: 0.0,
            x0: 0.25,
        }
    }

    /// The right well folds out over λ ∈ (0.35, 0.65) and folds back in.
    pub fn fold() -> Self {
        Self {
            kind: SyntheticKind::Fold,
            theta_easy: vec![0.0],
            theta_goal: vec![1.0],
            anchor_center: 0.0,
            sine_tilt: 1.7,
            x0: 0.5,
        }
    }

    /// Like [`Synthetic::fold`] but with a wider band, λ ∈ (0.25, 0.75),
    /// isolating the right branch's endpoints into disjoint components.
    pub fn disconnected() -> Self {
        Self {
            kind: SyntheticKind::Disconnected,
            theta_easy: vec![0.0],
            theta_goal: vec![1.0],
            anchor_center: 0.0,
            sine_tilt: 2.2,
            x0: 0.5,
        }
    }

    /// The right well dies at λ ≈ 0.64 and never returns; only the left
    /// branch reaches the goal.
    pub fn abbreviated_path() -> Self {
        Self {
            kind: SyntheticKind::AbbreviatedPath,
            theta_easy: vec![0.0],
            theta_goal: vec![2.4],
            anchor_center: 0.0,
            sine_tilt: 0.0,
            x0: 0.5,
        }
    }

    /// Canonical family for a kind.
    pub fn new(kind: SyntheticKind) -> Self {
        match kind {
            SyntheticKind::Bifurcation => Self::bifurcation(),
            SyntheticKind::Fold => Self::fold(),
            SyntheticKind::Disconnected => Self::disconnected(),
            SyntheticKind::AbbreviatedPath => Self::abbreviated_path(),
            SyntheticKind::DoubleWell => Self::double_well(),
        }
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }

    /// Scalar homotopy map for this family.
    pub fn map(&self) -> ParamMap {
        ParamMap::scalar(self.theta_easy.clone(), self.theta_goal.clone())
            .expect("family endpoints are valid")
    }

    /// Initial guess for the easy problem.
    pub fn default_x0(&self) -> Vec<f64> {
        vec![self.x0]
    }

    /// Resolve θ into the shared coefficients (s, b, w, a).
    fn coeffs(&self, theta: &[f64]) -> (f64, f64, f64, f64) {
        if theta.len() == 3 {
            // Anchored families: θ = [well, tilt, anchor progress].
            let w = ANCHOR_WEIGHT * theta[2].powi(5);
            (theta[0], theta[1], w, self.anchor_center)
        } else if self.sine_tilt != 0.0 {
            (1.0, self.sine_tilt * (std::f64::consts::PI * theta[0]).sin(), 0.0, 0.0)
        } else if self.kind == SyntheticKind::AbbreviatedPath {
            (1.0, theta[0], 0.0, 0.0)
        } else {
            // Canonical double well: θ = [well].
            (theta[0], 0.0, 0.0, 0.0)
        }
    }

    /// Enumerate every local minimum of f(·, Φ(λ)) by dense grid search
    /// with golden-section refinement. Independent of the solver.
    pub fn oracle_minima(&self, lambda: f64) -> Result<Vec<OracleMinimum>> {
        let map = self.map();
        let theta = map.apply(&crate::nlp::HomotopyPoint::new(vec![lambda])?)?;
        let eval = |x: f64| self.objective(&[x], &theta);
        Ok(grid_minima(eval, -2.5, 2.5, 5000))
    }
}

impl ParamNlp for Synthetic {
    fn n_vars(&self) -> usize {
        1
    }

    fn n_eq(&self) -> usize {
        0
    }

    fn param_dim(&self) -> usize {
        self.theta_easy.len()
    }

    fn objective(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (s, b, w, a) = self.coeffs(theta);
        let x = x[0];
        let q = x * x - s;
        q * q + b * x + w * (x - a) * (x - a)
    }

    fn eq_constraints(&self, _x: &[f64], _theta: &[f64], _out: &mut [f64]) {}

    fn objective_grad(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let (s, b, w, a) = self.coeffs(theta);
        let x = x[0];
        out[0] = 4.0 * x * (x * x - s) + b + 2.0 * w * (x - a);
    }

    fn objective_hvp(&self, x: &[f64], theta: &[f64], v: &[f64], out: &mut [f64]) {
        let (s, _, w, _) = self.coeffs(theta);
        let x = x[0];
        out[0] = (12.0 * x * x - 4.0 * s + 2.0 * w) * v[0];
    }

    fn objective_hess_diag(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let (s, _, w, _) = self.coeffs(theta);
        let x = x[0];
        out[0] = 12.0 * x * x - 4.0 * s + 2.0 * w;
    }

    fn constraints_jtj_diag(&self, _x: &[f64], _theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A local minimum found by the grid oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleMinimum {
    pub x: f64,
    pub objective: f64,
}

/// Dense grid scan for local minima followed by golden-section refinement
/// of each bracket. Assumes minima lie strictly inside [lo, hi].
fn grid_minima<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, cells: usize) -> Vec<OracleMinimum> {
    let h = (hi - lo) / cells as f64;
    let values: Vec<f64> = (0..=cells).map(|i| f(lo + i as f64 * h)).collect();
    let mut minima: Vec<OracleMinimum> = Vec::new();
    for i in 1..cells {
        if values[i] <= values[i - 1] && values[i] <= values[i + 1] {
            // Skip the flat side of a plateau duplicated by <=.
            if values[i] == values[i - 1] && i >= 2 && values[i - 1] <= values[i - 2] {
                continue;
            }
            let a = lo + (i - 1) as f64 * h;
            let b = lo + (i + 1) as f64 * h;
            let x = golden_section(&f, a, b, 1e-12);
            let obj = f(x);
            if minima.iter().all(|m| (m.x - x).abs() > 1e-6) {
                minima.push(OracleMinimum { x, objective: obj });
            }
        }
    }
    minima.sort_by(|p, q| p.x.partial_cmp(&q.x).unwrap());
    minima
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bifurcation_has_one_minimum_before_the_split() {
        let problem = Synthetic::bifurcation();
        let minima = problem.oracle_minima(0.0).unwrap();
        assert_eq!(minima.len(), 1);
        assert_abs_diff_eq!(minima[0].x, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn bifurcation_has_two_goal_minima_near_sqrt_half() {
        let problem = Synthetic::bifurcation();
        let minima = problem.oracle_minima(1.0).unwrap();
        assert_eq!(minima.len(), 2);
        let target = 0.5f64.sqrt();
        assert_abs_diff_eq!(minima[0].x, -target, epsilon = 1e-3);
        assert_abs_diff_eq!(minima[1].x, target, epsilon = 1e-3);
    }

    #[test]
    fn double_well_minima_at_plus_minus_one() {
        let problem = Synthetic::double_well();
        for lambda in [0.0, 0.37, 1.0] {
            let minima = problem.oracle_minima(lambda).unwrap();
            assert_eq!(minima.len(), 2);
            assert_abs_diff_eq!(minima[0].x, -1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(minima[1].x, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn asymmetric_goal_minima_have_distinct_costs() {
        let problem = Synthetic::double_well_asymmetric();
        let minima = problem.oracle_minima(1.0).unwrap();
        assert_eq!(minima.len(), 2);
        let gap = (minima[0].objective - minima[1].objective).abs();
        assert!(gap > 0.1, "objective gap {gap} too small to discriminate");
        assert!(minima[1].objective < minima[0].objective, "right well should be cheaper");
    }

    #[test]
    fn fold_band_removes_the_right_well() {
        let problem = Synthetic::fold();
        assert_eq!(problem.oracle_minima(0.0).unwrap().len(), 2);
        assert_eq!(problem.oracle_minima(0.5).unwrap().len(), 1);
        assert_eq!(problem.oracle_minima(1.0).unwrap().len(), 2);
    }

    #[test]
    fn disconnected_band_is_wider() {
        let problem = Synthetic::disconnected();
        assert_eq!(problem.oracle_minima(0.3).unwrap().len(), 1);
        assert_eq!(problem.oracle_minima(0.7).unwrap().len(), 1);
        assert_eq!(problem.oracle_minima(0.1).unwrap().len(), 2);
        assert_eq!(problem.oracle_minima(0.9).unwrap().len(), 2);
    }

    #[test]
    fn abbreviated_path_never_recovers() {
        let problem = Synthetic::abbreviated_path();
        assert_eq!(problem.oracle_minima(0.0).unwrap().len(), 2);
        assert_eq!(problem.oracle_minima(0.7).unwrap().len(), 1);
        assert_eq!(problem.oracle_minima(1.0).unwrap().len(), 1);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for problem in [
            Synthetic::bifurcation(),
            Synthetic::double_well(),
            Synthetic::double_well_asymmetric(),
            Synthetic::fold(),
            Synthetic::abbreviated_path(),
        ] {
            let map = problem.map();
            let theta = map
                .apply(&crate::nlp::HomotopyPoint::new(vec![0.63]).unwrap())
                .unwrap();
            let report = crate::solver::check_gradients(&problem, &theta, &[0.41], 1e-6);
            assert!(report.ok(), "{:?}: {:?}", problem.kind(), report.flagged);
        }
    }
}
