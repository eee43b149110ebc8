//! Projections, the `theta2` prox catalog, the x-subproblem solver and the
//! three-points relation.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{AdmmError, Result};
use crate::objective::soft_threshold;
use crate::types::{FeasibleSet, IterateState, Matrix, ProblemSpec, Vector};

/// Inner projected-gradient stopping tolerance (projected-gradient norm).
pub const INNER_TOL: f64 = 1e-10;
/// Inner projected-gradient iteration cap.
pub const INNER_MAX_ITER: usize = 10_000;

impl FeasibleSet {
    /// Euclidean projection onto the set.
    pub fn project(&self, z: &Vector) -> Vector {
        match self {
            FeasibleSet::Whole { .. } => z.clone(),
            FeasibleSet::Ball { radius } => {
                let n = z.norm();
                if n <= *radius {
                    z.clone()
                } else {
                    z * (radius / n)
                }
            }
            FeasibleSet::Box { lower, upper } => Vector::from_iterator(
                z.len(),
                z.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| v.clamp(*l, *u)),
            ),
        }
    }
}

/// Free-function form of [`FeasibleSet::project`].
pub fn project(z: &Vector, set: &FeasibleSet) -> Vector {
    set.project(z)
}

/// Closed-form `theta2` choices. Each entry solves
/// `min_y theta2(y) + (c/2)||y - z||^2` over Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProxCatalog {
    /// `weight * ||y||_1`
    L1 { weight: f64 },
    /// `(weight/2) ||y||^2`
    SquaredL2 { weight: f64 },
    /// `weight * sum_j max(0, 1 - y_j)`
    Hinge { weight: f64 },
    /// `theta2 = 0`; the update is a projection onto Y.
    Zero,
}

impl ProxCatalog {
    pub(crate) fn check(&self) -> Result<()> {
        let w = match self {
            ProxCatalog::L1 { weight }
            | ProxCatalog::SquaredL2 { weight }
            | ProxCatalog::Hinge { weight } => *weight,
            ProxCatalog::Zero => 0.0,
        };
        if !(w >= 0.0 && w.is_finite()) {
            return Err(AdmmError::InvalidProblem(format!(
                "theta2 weight must be nonnegative and finite, got {w}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, y: &Vector) -> f64 {
        match self {
            ProxCatalog::L1 { weight } => weight * y.lp_norm(1),
            ProxCatalog::SquaredL2 { weight } => 0.5 * weight * y.norm_squared(),
            ProxCatalog::Hinge { weight } => weight * y.iter().map(|v| (1.0 - v).max(0.0)).sum::<f64>(),
            ProxCatalog::Zero => 0.0,
        }
    }

    /// Curvature `w` when `theta2 = (w/2)||y||^2` (0 for the indicator-only entry).
    pub fn quadratic_weight(&self) -> Option<f64> {
        match self {
            ProxCatalog::SquaredL2 { weight } => Some(*weight),
            ProxCatalog::Zero => Some(0.0),
            _ => None,
        }
    }

    /// Unconstrained minimizer of `theta2(y) + (c/2)||y - z||^2`.
    pub fn prox_unconstrained(&self, z: &Vector, c: f64) -> Vector {
        match self {
            ProxCatalog::L1 { weight } => soft_threshold(z, weight / c),
            ProxCatalog::SquaredL2 { weight } => z * (c / (weight + c)),
            ProxCatalog::Hinge { weight } => {
                let t = weight / c;
                // kink region [1 - t, 1] maps to the kink; ties go to the kink
                z.map(|v| {
                    if v > 1.0 {
                        v
                    } else if v < 1.0 - t {
                        v + t
                    } else {
                        1.0
                    }
                })
            }
            ProxCatalog::Zero => z.clone(),
        }
    }

    /// Exact minimizer of `theta2(y) + (c/2)||y - z||^2` over `set`.
    pub fn prox(&self, z: &Vector, c: f64, set: &FeasibleSet) -> Vector {
        match set {
            FeasibleSet::Whole { .. } => self.prox_unconstrained(z, c),
            // separable: the 1-D constrained minimizer is the clamp
            FeasibleSet::Box { .. } => set.project(&self.prox_unconstrained(z, c)),
            FeasibleSet::Ball { radius } => match self {
                // isotropic quadratics: projection of the free minimizer is exact
                ProxCatalog::SquaredL2 { .. } | ProxCatalog::Zero => {
                    set.project(&self.prox_unconstrained(z, c))
                }
                _ => ball_constrained_prox(|zz, cc| self.prox_unconstrained(zz, cc), z, c, *radius),
            },
        }
    }
}

/// `prox_theta2(z, c)` over Y; `entry` is the catalog item.
pub fn prox_theta2(z: &Vector, c: f64, entry: &ProxCatalog, y_set: &FeasibleSet) -> Vector {
    entry.prox(z, c, y_set)
}

/// Minimizes `f(y) + (c/2)||y - z||^2` subject to `||y|| <= radius`, given the
/// unconstrained prox of `f`. The multiplier `nu` of the ball constraint turns
/// the problem into the prox at `c z / (c + nu)` with weight `c + nu`; `nu` is
/// found by bisection on `||y(nu)|| = radius`.
pub fn ball_constrained_prox<F>(prox: F, z: &Vector, c: f64, radius: f64) -> Vector
where
    F: Fn(&Vector, f64) -> Vector,
{
    let at = |nu: f64| prox(&(z * (c / (c + nu))), c + nu);
    let free = at(0.0);
    if free.norm() <= radius {
        return free;
    }
    let mut lo = 0.0;
    let mut hi = c.max(1.0);
    let mut y_hi = at(hi);
    let mut guard = 0;
    while y_hi.norm() > radius && guard < 200 {
        lo = hi;
        hi *= 4.0;
        y_hi = at(hi);
        guard += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = at(hi);
    // hi is feasible up to roundoff; snap onto the sphere if it drifted outside
    let n = y.norm();
    if n > radius {
        y * (radius / n)
    } else {
        y
    }
}

/// Returns `s` when `m` is `s * I` (square, exact zeros off the diagonal).
pub fn scaled_identity(m: &Matrix) -> Option<f64> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return None;
    }
    let s = m[(0, 0)];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if i == j {
                if (v - s).abs() > 1e-15 * s.abs() {
                    return None;
                }
            } else if v != 0.0 {
                return None;
            }
        }
    }
    Some(s)
}

/// Minimizes `0.5 x^T (S + shift I) x + q^T x` over a feasible set, for a fixed
/// symmetric PSD `S` whose eigendecomposition is computed once.
#[derive(Debug, Clone)]
pub struct QuadraticSolver {
    eigvals: Vector,
    eigvecs: Matrix,
    /// `Some(s)` when `S = s I`.
    isotropic: Option<f64>,
    base: Matrix,
}

impl QuadraticSolver {
    pub fn new(s: Matrix) -> Self {
        let sym = (&s + s.transpose()) * 0.5;
        let isotropic = scaled_identity(&sym).or_else(|| {
            let n = sym.nrows();
            (n > 0 && sym.iter().all(|v| *v == 0.0)).then_some(0.0)
        });
        let eig = SymmetricEigen::new(sym.clone());
        QuadraticSolver {
            eigvals: eig.eigenvalues,
            eigvecs: eig.eigenvectors,
            isotropic,
            base: sym,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.base
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigvals.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn solve_shifted(&self, coeffs: &Vector, shift: f64) -> Vector {
        // x = -V diag(1/(s_i + shift)) V^T q, with coeffs = V^T q
        let scaled = Vector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(self.eigvals.iter())
                .map(|(c, s)| -c / (s + shift)),
        );
        &self.eigvecs * scaled
    }

    fn norm_shifted(&self, coeffs: &Vector, shift: f64) -> f64 {
        coeffs
            .iter()
            .zip(self.eigvals.iter())
            .map(|(c, s)| (c / (s + shift)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Gradient `(S + shift I) x + q`.
    pub fn gradient(&self, x: &Vector, shift: f64, q: &Vector) -> Vector {
        &self.base * x + x * shift + q
    }

    pub fn solve(&self, shift: f64, q: &Vector, set: &FeasibleSet) -> Result<Vector> {
        let n = self.dim();
        if let Some(s) = self.isotropic {
            let curv = s + shift;
            if curv > 0.0 {
                return Ok(set.project(&(q * (-1.0 / curv))));
            }
        }
        let lmin = self.min_eigenvalue() + shift;
        match set {
            FeasibleSet::Whole { .. } => {
                if !(lmin > 0.0) {
                    return Err(AdmmError::InvalidProblem(
                        "quadratic subproblem is not strictly convex on the whole space".into(),
                    ));
                }
                let coeffs = self.eigvecs.tr_mul(q);
                Ok(self.solve_shifted(&coeffs, shift))
            }
            FeasibleSet::Ball { radius } => {
                let coeffs = self.eigvecs.tr_mul(q);
                let free_ok = lmin > 0.0 && self.norm_shifted(&coeffs, shift) <= *radius;
                if free_ok {
                    return Ok(self.solve_shifted(&coeffs, shift));
                }
                // ||x(nu)|| is decreasing in nu; bracket then bisect
                let floor = (-lmin).max(0.0);
                let mut lo = floor;
                let mut hi = floor + 1.0;
                while self.norm_shifted(&coeffs, shift + hi) > *radius {
                    lo = hi;
                    hi *= 2.0;
                    if !hi.is_finite() {
                        break;
                    }
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.norm_shifted(&coeffs, shift + mid) > *radius {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let x = self.solve_shifted(&coeffs, shift + hi);
                let nx = x.norm();
                Ok(if nx > *radius { x * (radius / nx) } else { x })
            }
            FeasibleSet::Box { .. } => {
                let lmax = self.max_eigenvalue() + shift;
                if !(lmax > 0.0) {
                    return Ok(set.project(&Vector::zeros(n)));
                }
                let step = 1.0 / lmax;
                let mut x = if lmin > 0.0 {
                    let coeffs = self.eigvecs.tr_mul(q);
                    set.project(&self.solve_shifted(&coeffs, shift))
                } else {
                    set.project(&Vector::zeros(n))
                };
                let mut residual = f64::INFINITY;
                for _ in 0..INNER_MAX_ITER {
                    let grad = self.gradient(&x, shift, q);
                    let next = set.project(&(&x - &grad * step));
                    residual = (&x - &next).norm() * lmax;
                    x = next;
                    if residual <= INNER_TOL {
                        return Ok(x);
                    }
                }
                Err(AdmmError::InnerSolve {
                    iterations: INNER_MAX_ITER,
                    residual,
                })
            }
        }
    }
}

/// Linear term and cached solver for Line 1 of stochastic ADMM.
#[derive(Debug, Clone)]
pub struct XSubproblem {
    beta: f64,
    solver: QuadraticSolver,
}

impl XSubproblem {
    /// Caches the eigendecomposition of `beta A^T A`.
    pub fn new(spec: &ProblemSpec, beta: f64) -> Self {
        let ata = spec.a_mat.tr_mul(&spec.a_mat) * beta;
        XSubproblem {
            beta,
            solver: QuadraticSolver::new(ata),
        }
    }

    /// Linear coefficient `g + A^T(beta (B y_k - b) - lambda_k) - x_k / eta`.
    fn linear_term(&self, g: &Vector, state: &IterateState, spec: &ProblemSpec, eta: f64) -> Vector {
        let inner = (&spec.b_mat * &state.y - &spec.rhs) * self.beta - &state.lambda;
        g + spec.a_mat.tr_mul(&inner) - &state.x / eta
    }

    /// `argmin_{x in X} <g, x> + (beta/2)||A x + B y_k - b - lambda_k/beta||^2 + ||x - x_k||^2/(2 eta)`.
    pub fn solve(&self, g: &Vector, state: &IterateState, spec: &ProblemSpec, eta: f64) -> Result<Vector> {
        if !(eta > 0.0) {
            return Err(AdmmError::InvalidConfig(format!("eta must be positive, got {eta}")));
        }
        let q = self.linear_term(g, state, spec, eta);
        self.solver.solve(1.0 / eta, &q, &spec.x_set)
    }

    /// Gradient at `x` of the smooth part `l(x) = <g, x> + (beta/2)||A x + B y_k - b - lambda_k/beta||^2`.
    pub fn smooth_gradient(&self, x: &Vector, g: &Vector, state: &IterateState, spec: &ProblemSpec) -> Vector {
        let r = spec.residual(x, &state.y) * self.beta - &state.lambda;
        g + spec.a_mat.tr_mul(&r)
    }
}

/// One-shot form of the x-subproblem. Solvers keep an [`XSubproblem`] to reuse
/// the factorization.
pub fn solve_x_subproblem(
    g: &Vector,
    state: &IterateState,
    spec: &ProblemSpec,
    beta: f64,
    eta: f64,
) -> Result<Vector> {
    if g.len() != spec.d1() {
        return Err(AdmmError::dim("subgradient", spec.d1(), g.len()));
    }
    XSubproblem::new(spec, beta).solve(g, state, spec, eta)
}

/// Signed residual of the three-points relation with `D(a, b) = ||a - b||^2 / 2`:
/// `<g(x*), x* - x> - s [D(x, u) - D(x, x*) - D(x*, u)]`, and the magnitude of
/// the terms involved.
pub fn three_points_residual(
    x_star: &Vector,
    u: &Vector,
    probe_x: &Vector,
    g_at_xstar: &Vector,
    s: f64,
) -> (f64, f64) {
    let lhs = g_at_xstar.dot(&(x_star - probe_x));
    let d_xu = 0.5 * (probe_x - u).norm_squared();
    let d_xxs = 0.5 * (probe_x - x_star).norm_squared();
    let d_xsu = 0.5 * (x_star - u).norm_squared();
    let rhs = s * (d_xu - d_xxs - d_xsu);
    let scale = lhs.abs() + s * (d_xu + d_xxs + d_xsu);
    (lhs - rhs, scale)
}

/// True when the three-points inequality holds within `tol` relative to the
/// magnitude of its terms (absolute below unit scale).
pub fn three_points_check(
    x_star: &Vector,
    u: &Vector,
    probe_x: &Vector,
    g_at_xstar: &Vector,
    s: f64,
    tol: f64,
) -> bool {
    let (res, scale) = three_points_residual(x_star, u, probe_x, g_at_xstar, s);
    res <= tol * scale.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::QuadraticForm;
    use crate::types::Constants;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn projection_examples() {
        let ball = FeasibleSet::Ball { radius: 1.0 };
        let inside = v(&[0.3, -0.2]);
        assert_eq!(project(&inside, &ball), inside);
        let p = project(&v(&[3.0, 4.0]), &ball);
        assert!((p - v(&[0.6, 0.8])).norm() < 1e-15);
        let bx = FeasibleSet::Box {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
        };
        assert_eq!(project(&v(&[2.0, -3.0]), &bx), v(&[1.0, -1.0]));
    }

    #[test]
    fn catalog_examples() {
        let l1 = ProxCatalog::L1 { weight: 1.0 };
        let y = prox_theta2(&v(&[2.0, -0.5, -3.0]), 1.0, &l1, &FeasibleSet::whole());
        assert_eq!(y, v(&[1.0, 0.0, -2.0]));

        let ball = FeasibleSet::Ball { radius: 0.5 };
        let z = v(&[1.0, 1.0]);
        assert_eq!(prox_theta2(&z, 3.0, &ProxCatalog::Zero, &ball), ball.project(&z));

        let hinge = ProxCatalog::Hinge { weight: 1.0 };
        let y = prox_theta2(&v(&[0.0]), 1.0, &hinge, &FeasibleSet::whole());
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn hinge_prox_matches_grid_search() {
        let hinge = ProxCatalog::Hinge { weight: 0.8 };
        for (z, c) in [(0.0, 1.0), (0.5, 2.0), (-1.0, 0.5), (1.3, 1.0), (0.9, 10.0)] {
            let got = hinge.prox_unconstrained(&v(&[z]), c)[0];
            let obj = |y: f64| 0.8 * (1.0 - y).max(0.0) + 0.5 * c * (y - z).powi(2);
            let mut best = (f64::INFINITY, 0.0);
            let n = 8_000_000;
            for i in 0..=n {
                let y = -4.0 + 8.0 * i as f64 / n as f64;
                let f = obj(y);
                if f < best.0 {
                    best = (f, y);
                }
            }
            assert!((got - best.1).abs() < 1e-6, "z={z} c={c}: {got} vs {}", best.1);
        }
    }

    #[test]
    fn ball_constrained_l1_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l1 = ProxCatalog::L1 { weight: 0.3 };
        let ball = FeasibleSet::Ball { radius: 0.7 };
        for _ in 0..20 {
            let z = Vector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let c = rng.random_range(0.2..3.0);
            let y = l1.prox(&z, c, &ball);
            assert!(y.norm() <= 0.7 + 1e-12);
            let obj = |p: &Vector| l1.value(p) + 0.5 * c * (p - &z).norm_squared();
            for _ in 0..200 {
                let p = ball.sample(4, &mut rng);
                assert!(obj(&y) <= obj(&p) + 1e-10);
            }
        }
    }

    #[test]
    fn quadratic_solver_ball_and_box_satisfy_vi() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let s = a.tr_mul(&a);
        let solver = QuadraticSolver::new(s);
        let q = Vector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
        let sets = [
            FeasibleSet::Ball { radius: 0.5 },
            FeasibleSet::Box {
                lower: vec![-0.2, -0.3, -0.1],
                upper: vec![0.2, 0.3, 0.1],
            },
        ];
        for set in &sets {
            let x = solver.solve(0.3, &q, set).unwrap();
            let grad = solver.gradient(&x, 0.3, &q);
            for _ in 0..100 {
                let p = set.sample(3, &mut rng);
                assert!(grad.dot(&(&p - &x)) >= -1e-9);
            }
        }
    }

    fn scalar_problem(x_set: FeasibleSet) -> ProblemSpec {
        ProblemSpec::new(
            Arc::new(QuadraticForm::isotropic(1, 1.0)),
            ProxCatalog::SquaredL2 { weight: 1.0 },
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, -1.0),
            Vector::zeros(1),
            x_set,
            FeasibleSet::whole(),
            Constants::new(1.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn x_subproblem_scalar_example() {
        // (1 + 1) x = -1
        let spec = scalar_problem(FeasibleSet::whole_with_diameter(10.0));
        let state = IterateState::zeros(&spec);
        let x = solve_x_subproblem(&v(&[1.0]), &state, &spec, 1.0, 1.0).unwrap();
        assert!((x[0] + 0.5).abs() < 1e-15);
        // dense 1x1 solve as the second route
        let sys = Matrix::from_element(1, 1, 2.0);
        let rhs = v(&[-1.0]);
        let dense = sys.lu().solve(&rhs).unwrap();
        assert!((x[0] - dense[0]).abs() < 1e-15);
    }

    #[test]
    fn x_subproblem_without_penalty_is_gradient_step() {
        let spec = scalar_problem(FeasibleSet::whole_with_diameter(10.0));
        let mut state = IterateState::zeros(&spec);
        state.x = v(&[0.7]);
        state.lambda = v(&[0.0]);
        let eta = 0.25;
        let x = XSubproblem::new(&spec, 0.0).solve(&v(&[2.0]), &state, &spec, eta).unwrap();
        assert!((x[0] - (0.7 - eta * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn three_points_degenerate_and_tight() {
        let p = v(&[0.4, -1.0]);
        assert!(three_points_check(&p, &p, &p, &v(&[3.0, 2.0]), 2.0, 1e-12));
        // unconstrained: g(x*) = -s (x* - u) makes the relation an identity
        let u = v(&[1.0, 2.0]);
        let xs = v(&[0.5, 1.0]);
        let s = 3.0;
        let g = (&xs - &u) * (-s);
        let probe = v(&[-2.0, 0.3]);
        let (res, _) = three_points_residual(&xs, &u, &probe, &g, s);
        assert!(res.abs() < 1e-13);
    }

    #[test]
    fn scaled_identity_detection() {
        assert_eq!(scaled_identity(&(Matrix::identity(3, 3) * -2.0)), Some(-2.0));
        let mut m = Matrix::identity(2, 2);
        m[(0, 1)] = 1e-3;
        assert_eq!(scaled_identity(&m), None);
        assert_eq!(scaled_identity(&Matrix::zeros(2, 3)), None);
    }
}
