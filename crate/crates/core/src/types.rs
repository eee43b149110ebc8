//! Problem data, stacked iterates, ergodic averages and the monotone operator `F`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AdmmError, Result};
use crate::objective::ConvexObjective;
use crate::prox::ProxCatalog;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Feasible set for one block of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeasibleSet {
    /// All of R^d. `declared_diameter` only feeds stepsize formulas and bounds.
    Whole { declared_diameter: Option<f64> },
    /// Origin-centred Euclidean ball.
    Ball { radius: f64 },
    /// Axis-aligned box `lower <= z <= upper`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl FeasibleSet {
    pub fn whole() -> Self {
        FeasibleSet::Whole {
            declared_diameter: None,
        }
    }

    pub fn whole_with_diameter(diameter: f64) -> Self {
        FeasibleSet::Whole {
            declared_diameter: Some(diameter),
        }
    }

    /// Euclidean diameter: `2R` for a ball, the diagonal length for a box,
    /// the declared value for the whole space.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            FeasibleSet::Whole { declared_diameter } => *declared_diameter,
            FeasibleSet::Ball { radius } => Some(2.0 * radius),
            FeasibleSet::Box { lower, upper } => Some(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| (u - l) * (u - l))
                    .sum::<f64>()
                    .sqrt(),
            ),
        }
    }

    pub fn is_whole(&self) -> bool {
        matches!(self, FeasibleSet::Whole { .. })
    }

    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        match self {
            FeasibleSet::Whole { .. } => true,
            FeasibleSet::Ball { radius } => z.norm() <= radius + tol,
            FeasibleSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
        }
    }

    pub(crate) fn check(&self, dim: usize, name: &str) -> Result<()> {
        match self {
            FeasibleSet::Whole { declared_diameter } => {
                if let Some(d) = declared_diameter {
                    if !(d.is_finite() && *d > 0.0) {
                        return Err(AdmmError::InvalidProblem(format!(
                            "{name}: declared diameter must be positive and finite, got {d}"
                        )));
                    }
                }
            }
            FeasibleSet::Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(AdmmError::InvalidProblem(format!(
                        "{name}: ball radius must be positive and finite, got {radius}"
                    )));
                }
            }
            FeasibleSet::Box { lower, upper } => {
                if lower.len() != dim {
                    return Err(AdmmError::dim(format!("{name} box lower"), dim, lower.len()));
                }
                if upper.len() != dim {
                    return Err(AdmmError::dim(format!("{name} box upper"), dim, upper.len()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
                    return Err(AdmmError::InvalidProblem(format!(
                        "{name}: box bounds must be finite with lower <= upper"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws a point of the set. Balls are sampled uniformly in volume, boxes
    /// uniformly per coordinate; the whole space is sampled in the ball of the
    /// declared diameter (radius 1 when none is declared).
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vector {
        match self {
            FeasibleSet::Whole { declared_diameter } => {
                let radius = declared_diameter.map_or(1.0, |d| 0.5 * d);
                sample_ball(dim, radius, rng)
            }
            FeasibleSet::Ball { radius } => sample_ball(dim, *radius, rng),
            FeasibleSet::Box { lower, upper } => Vector::from_iterator(
                dim,
                lower.iter().zip(upper).map(|(l, u)| {
                    if u > l {
                        rng.random_range(*l..=*u)
                    } else {
                        *l
                    }
                }),
            ),
        }
    }
}

fn sample_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vector {
    if dim == 0 {
        return Vector::zeros(0);
    }
    let dir = Vector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let n = dir.norm();
    if n == 0.0 {
        return Vector::zeros(dim);
    }
    let u: f64 = rng.random();
    dir * (radius * u.powf(1.0 / dim as f64) / n)
}

/// Structural constants of a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Bound `M` on the second moment of sampled subgradients over X.
    pub m_bound: f64,
    /// Bound `sigma` on the oracle noise standard deviation.
    pub sigma: f64,
    /// Strong convexity modulus of theta1 (0 when none).
    pub mu: f64,
    /// Lipschitz constant of the gradient of theta1, when smooth.
    pub lipschitz: Option<f64>,
    /// Optional hint for `||B (y0 - y*)||`; normally computed from the reference solution.
    pub d_y_star_b: Option<f64>,
}

impl Constants {
    pub fn new(m_bound: f64, sigma: f64) -> Self {
        Constants {
            m_bound,
            sigma,
            mu: 0.0,
            lipschitz: None,
            d_y_star_b: None,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.m_bound.is_finite() && self.m_bound > 0.0) {
            return Err(AdmmError::InvalidProblem(format!(
                "M must be positive, got {}",
                self.m_bound
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(AdmmError::InvalidProblem(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !(self.mu >= 0.0) {
            return Err(AdmmError::InvalidProblem(format!(
                "mu must be nonnegative, got {}",
                self.mu
            )));
        }
        if let Some(l) = self.lipschitz {
            if !(l.is_finite() && l > 0.0) {
                return Err(AdmmError::InvalidProblem(format!(
                    "L must be positive when present, got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// `min theta1(x) + theta2(y)` over `x in X, y in Y` subject to `A x + B y = b`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub theta1: Arc<dyn ConvexObjective>,
    pub theta2: ProxCatalog,
    pub a_mat: Matrix,
    pub b_mat: Matrix,
    pub rhs: Vector,
    pub x_set: FeasibleSet,
    pub y_set: FeasibleSet,
    pub constants: Constants,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("theta1", &self.theta1)
            .field("theta2", &self.theta2)
            .field("d1", &self.d1())
            .field("d2", &self.d2())
            .field("m", &self.m())
            .field("x_set", &self.x_set)
            .field("y_set", &self.y_set)
            .field("constants", &self.constants)
            .finish()
    }
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        theta1: Arc<dyn ConvexObjective>,
        theta2: ProxCatalog,
        a_mat: Matrix,
        b_mat: Matrix,
        rhs: Vector,
        x_set: FeasibleSet,
        y_set: FeasibleSet,
        constants: Constants,
    ) -> Result<Self> {
        let m = rhs.len();
        if a_mat.nrows() != m {
            return Err(AdmmError::dim("rows(A)", m, a_mat.nrows()));
        }
        if b_mat.nrows() != m {
            return Err(AdmmError::dim("rows(B)", m, b_mat.nrows()));
        }
        if theta1.dim() != a_mat.ncols() {
            return Err(AdmmError::dim("theta1 dimension vs cols(A)", a_mat.ncols(), theta1.dim()));
        }
        x_set.check(a_mat.ncols(), "X")?;
        y_set.check(b_mat.ncols(), "Y")?;
        match x_set.diameter() {
            Some(d) if d.is_finite() && d > 0.0 => {}
            _ => {
                return Err(AdmmError::InvalidProblem(
                    "X needs a positive finite diameter (declare one for the whole space)".into(),
                ))
            }
        }
        constants.check()?;
        theta2.check()?;
        Ok(ProblemSpec {
            theta1,
            theta2,
            a_mat,
            b_mat,
            rhs,
            x_set,
            y_set,
            constants,
        })
    }

    pub fn d1(&self) -> usize {
        self.a_mat.ncols()
    }

    pub fn d2(&self) -> usize {
        self.b_mat.ncols()
    }

    pub fn m(&self) -> usize {
        self.rhs.len()
    }

    /// Diameter of X, validated positive at construction.
    pub fn d_x(&self) -> f64 {
        self.x_set.diameter().expect("validated at construction")
    }

    /// `A x + B y - b`.
    pub fn residual(&self, x: &Vector, y: &Vector) -> Vector {
        &self.a_mat * x + &self.b_mat * y - &self.rhs
    }

    /// `theta(u) = theta1(x) + theta2(y)` using the exact expectation of theta1.
    pub fn theta(&self, x: &Vector, y: &Vector) -> Result<f64> {
        if !self.theta1.has_exact_expectation() {
            return Err(AdmmError::NoExactObjective);
        }
        Ok(self.theta1.value(x) + self.theta2.value(y))
    }

    pub(crate) fn check_dims(&self, x: &Vector, y: &Vector, lambda: &Vector) -> Result<()> {
        if x.len() != self.d1() {
            return Err(AdmmError::dim("x", self.d1(), x.len()));
        }
        if y.len() != self.d2() {
            return Err(AdmmError::dim("y", self.d2(), y.len()));
        }
        if lambda.len() != self.m() {
            return Err(AdmmError::dim("lambda", self.m(), lambda.len()));
        }
        Ok(())
    }
}

/// The stacked tuple `w = (x, y, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedW {
    pub x: Vector,
    pub y: Vector,
    pub lambda: Vector,
}

impl StackedW {
    pub fn zeros(d1: usize, d2: usize, m: usize) -> Self {
        StackedW {
            x: Vector::zeros(d1),
            y: Vector::zeros(d2),
            lambda: Vector::zeros(m),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.y.len() + self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenation `[x; y; lambda]`.
    pub fn to_vector(&self) -> Vector {
        let mut v = Vector::zeros(self.len());
        let (d1, d2) = (self.x.len(), self.y.len());
        v.rows_mut(0, d1).copy_from(&self.x);
        v.rows_mut(d1, d2).copy_from(&self.y);
        v.rows_mut(d1 + d2, self.lambda.len()).copy_from(&self.lambda);
        v
    }

    pub fn unstack(self) -> (Vector, Vector, Vector) {
        (self.x, self.y, self.lambda)
    }

    pub fn dot(&self, other: &StackedW) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y) + self.lambda.dot(&other.lambda)
    }

    pub fn sub(&self, other: &StackedW) -> StackedW {
        StackedW {
            x: &self.x - &other.x,
            y: &self.y - &other.y,
            lambda: &self.lambda - &other.lambda,
        }
    }
}

/// Packs `(x, y, lambda)` after checking the dimensions against `spec`.
pub fn stack(x: Vector, y: Vector, lambda: Vector, spec: &ProblemSpec) -> Result<StackedW> {
    spec.check_dims(&x, &y, &lambda)?;
    Ok(StackedW { x, y, lambda })
}

/// `F(w) = (-A^T lambda, -B^T lambda, A x + B y - b)`.
pub fn eval_f(w: &StackedW, spec: &ProblemSpec) -> Result<StackedW> {
    spec.check_dims(&w.x, &w.y, &w.lambda)?;
    Ok(StackedW {
        x: -(spec.a_mat.tr_mul(&w.lambda)),
        y: -(spec.b_mat.tr_mul(&w.lambda)),
        lambda: spec.residual(&w.x, &w.y),
    })
}

/// Which ergodic average of x to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// x averaged over iterates `0..k-1`, y over `1..k`.
    Shifted,
    /// x and y both averaged over iterates `1..k`.
    Aligned,
}

/// Current iterate `(x_k, y_k, lambda_k)` plus running sums for the ergodic averages.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vector,
    pub y: Vector,
    pub lambda: Vector,
    pub k: usize,
    sum_x_shifted: Vector,
    sum_x_aligned: Vector,
    sum_y: Vector,
    sum_lambda: Vector,
}

impl IterateState {
    /// Starts at `(x0, y0)` with `lambda_0 = 0`.
    pub fn new(x0: Vector, y0: Vector, m: usize) -> Self {
        let (d1, d2) = (x0.len(), y0.len());
        IterateState {
            x: x0,
            y: y0,
            lambda: Vector::zeros(m),
            k: 0,
            sum_x_shifted: Vector::zeros(d1),
            sum_x_aligned: Vector::zeros(d1),
            sum_y: Vector::zeros(d2),
            sum_lambda: Vector::zeros(m),
        }
    }

    pub fn zeros(spec: &ProblemSpec) -> Self {
        Self::new(Vector::zeros(spec.d1()), Vector::zeros(spec.d2()), spec.m())
    }

    /// Starting point with an explicit multiplier (used for fixed-point checks).
    pub fn with_lambda(mut self, lambda: Vector) -> Self {
        self.lambda = lambda;
        self
    }

    /// Moves to `(x_{k+1}, y_{k+1}, lambda_{k+1})` and updates every accumulator.
    pub fn advance(&self, x: Vector, y: Vector, lambda: Vector) -> IterateState {
        IterateState {
            sum_x_shifted: &self.sum_x_shifted + &self.x,
            sum_x_aligned: &self.sum_x_aligned + &x,
            sum_y: &self.sum_y + &y,
            sum_lambda: &self.sum_lambda + &lambda,
            x,
            y,
            lambda,
            k: self.k + 1,
        }
    }

    pub fn as_stacked(&self) -> StackedW {
        StackedW {
            x: self.x.clone(),
            y: self.y.clone(),
            lambda: self.lambda.clone(),
        }
    }

    fn mean(&self, sum: &Vector) -> Option<Vector> {
        (self.k > 0).then(|| sum / self.k as f64)
    }

    pub fn avg_x_shifted(&self) -> Option<Vector> {
        self.mean(&self.sum_x_shifted)
    }

    pub fn avg_x_aligned(&self) -> Option<Vector> {
        self.mean(&self.sum_x_aligned)
    }

    pub fn avg_y(&self) -> Option<Vector> {
        self.mean(&self.sum_y)
    }

    pub fn avg_lambda(&self) -> Option<Vector> {
        self.mean(&self.sum_lambda)
    }

    /// `u_bar_k` under the requested convention; `None` before the first step.
    pub fn u_bar(&self, averaging: Averaging) -> Option<(Vector, Vector)> {
        let x = match averaging {
            Averaging::Shifted => self.avg_x_shifted()?,
            Averaging::Aligned => self.avg_x_aligned()?,
        };
        Some((x, self.avg_y()?))
    }
}

/// `Err_rho` with its two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrRho {
    pub gap: f64,
    pub feasibility: f64,
    pub value: f64,
}

impl ErrRho {
    pub fn nan() -> Self {
        ErrRho {
            gap: f64::NAN,
            feasibility: f64::NAN,
            value: f64::NAN,
        }
    }
}

/// `theta(u_bar) - theta(u*) + rho ||A x_bar + B y_bar - b||`.
pub fn err_rho(
    u_bar: (&Vector, &Vector),
    spec: &ProblemSpec,
    u_star: (&Vector, &Vector),
    rho: f64,
) -> Result<ErrRho> {
    let theta_star = spec.theta(u_star.0, u_star.1)?;
    err_rho_with_value(u_bar, spec, theta_star, rho)
}

/// Same as [`err_rho`] with a known optimal value `theta(u*)`.
pub fn err_rho_with_value(
    u_bar: (&Vector, &Vector),
    spec: &ProblemSpec,
    theta_star: f64,
    rho: f64,
) -> Result<ErrRho> {
    if !(rho > 0.0) {
        return Err(AdmmError::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    let (x, y) = u_bar;
    if x.len() != spec.d1() {
        return Err(AdmmError::dim("x_bar", spec.d1(), x.len()));
    }
    if y.len() != spec.d2() {
        return Err(AdmmError::dim("y_bar", spec.d2(), y.len()));
    }
    let gap = spec.theta(x, y)? - theta_star;
    let feasibility = spec.residual(x, y).norm();
    Ok(ErrRho {
        gap,
        feasibility,
        value: gap + rho * feasibility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::QuadraticForm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_spec(a: f64, b: f64, rhs: f64) -> ProblemSpec {
        let q = QuadraticForm::isotropic(1, 1.0);
        ProblemSpec::new(
            Arc::new(q),
            ProxCatalog::SquaredL2 { weight: 1.0 },
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Vector::from_element(1, rhs),
            FeasibleSet::whole_with_diameter(4.0),
            FeasibleSet::whole(),
            Constants::new(1.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn stack_packs_and_unpacks() {
        let spec = scalar_spec(1.0, 1.0, 0.0);
        let w = stack(
            Vector::from_element(1, 1.0),
            Vector::from_element(1, 2.0),
            Vector::from_element(1, 3.0),
            &spec,
        )
        .unwrap();
        assert_eq!(w.to_vector().as_slice(), &[1.0, 2.0, 3.0]);
        let (x, y, l) = w.unstack();
        assert_eq!((x[0], y[0], l[0]), (1.0, 2.0, 3.0));
    }

    #[test]
    fn zero_stack_has_total_dimension() {
        let w = StackedW::zeros(2, 3, 1);
        assert_eq!(w.len(), 6);
        assert!(w.to_vector().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stack_rejects_bad_dims() {
        let spec = scalar_spec(1.0, 1.0, 0.0);
        let err = stack(Vector::zeros(2), Vector::zeros(1), Vector::zeros(1), &spec).unwrap_err();
        assert!(matches!(err, AdmmError::Dimension { .. }));
        assert!(err.to_string().contains("x"));
    }

    #[test]
    fn eval_f_zero_input() {
        let spec = scalar_spec(1.0, 1.0, 0.0);
        let f = eval_f(&StackedW::zeros(1, 1, 1), &spec).unwrap();
        assert_eq!(f.to_vector().as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn eval_f_hand_values() {
        // A=[1], B=[-1], b=0, w=(1,1,2): (-A^T l, -B^T l, Ax+By-b) = (-2, 2, 0)
        let spec = scalar_spec(1.0, -1.0, 0.0);
        let w = StackedW {
            x: Vector::from_element(1, 1.0),
            y: Vector::from_element(1, 1.0),
            lambda: Vector::from_element(1, 2.0),
        };
        let f = eval_f(&w, &spec).unwrap();
        assert_eq!(f.to_vector().as_slice(), &[-2.0, 2.0, 0.0]);
    }

    #[test]
    fn eval_f_matches_dense_block_operator() {
        // Independent route: build the (d1+d2+m)^2 block matrix [[0,0,-A^T],[0,0,-B^T],[A,B,0]].
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d1, d2, m) = (3, 2, 4);
        let a = Matrix::from_fn(m, d1, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(m, d2, |_, _| rng.random_range(-1.0..1.0));
        let rhs = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let spec = ProblemSpec::new(
            Arc::new(QuadraticForm::isotropic(d1, 1.0)),
            ProxCatalog::Zero,
            a.clone(),
            b.clone(),
            rhs.clone(),
            FeasibleSet::Ball { radius: 1.0 },
            FeasibleSet::whole(),
            Constants::new(1.0, 0.0),
        )
        .unwrap();
        let n = d1 + d2 + m;
        let mut big = Matrix::zeros(n, n);
        big.view_mut((0, d1 + d2), (d1, m)).copy_from(&(-a.transpose()));
        big.view_mut((d1, d1 + d2), (d2, m)).copy_from(&(-b.transpose()));
        big.view_mut((d1 + d2, 0), (m, d1)).copy_from(&a);
        big.view_mut((d1 + d2, d1), (m, d2)).copy_from(&b);
        let w = StackedW {
            x: Vector::from_fn(d1, |_, _| rng.random_range(-2.0..2.0)),
            y: Vector::from_fn(d2, |_, _| rng.random_range(-2.0..2.0)),
            lambda: Vector::from_fn(m, |_, _| rng.random_range(-2.0..2.0)),
        };
        let mut offset = Vector::zeros(n);
        offset.rows_mut(d1 + d2, m).copy_from(&(-rhs));
        let dense = &big * w.to_vector() + offset;
        let f = eval_f(&w, &spec).unwrap().to_vector();
        assert!((dense - f).norm() < 1e-14);
    }

    #[test]
    fn accumulators_track_index_ranges() {
        let mut s = IterateState::new(Vector::from_element(1, 5.0), Vector::zeros(1), 1);
        assert!(s.u_bar(Averaging::Shifted).is_none());
        for v in 1..=3 {
            let f = v as f64;
            s = s.advance(
                Vector::from_element(1, f),
                Vector::from_element(1, 10.0 * f),
                Vector::from_element(1, -f),
            );
        }
        // shifted x: (5 + 1 + 2)/3, aligned x: (1+2+3)/3, y: 20, lambda: -2
        assert!((s.avg_x_shifted().unwrap()[0] - 8.0 / 3.0).abs() < 1e-15);
        assert!((s.avg_x_aligned().unwrap()[0] - 2.0).abs() < 1e-15);
        assert!((s.avg_y().unwrap()[0] - 20.0).abs() < 1e-15);
        assert!((s.avg_lambda().unwrap()[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn diameters_from_descriptors() {
        assert_eq!(FeasibleSet::Ball { radius: 1.5 }.diameter(), Some(3.0));
        let bx = FeasibleSet::Box {
            lower: vec![-1.0, 0.0],
            upper: vec![2.0, 4.0],
        };
        assert_eq!(bx.diameter(), Some(5.0));
        assert_eq!(FeasibleSet::whole().diameter(), None);
    }

    #[test]
    fn spec_rejects_inconsistent_data() {
        let bad = ProblemSpec::new(
            Arc::new(QuadraticForm::isotropic(2, 1.0)),
            ProxCatalog::Zero,
            Matrix::zeros(1, 2),
            Matrix::zeros(2, 2),
            Vector::zeros(1),
            FeasibleSet::Ball { radius: 1.0 },
            FeasibleSet::whole(),
            Constants::new(1.0, 0.0),
        );
        assert!(matches!(bad, Err(AdmmError::Dimension { .. })));
        let no_diam = ProblemSpec::new(
            Arc::new(QuadraticForm::isotropic(1, 1.0)),
            ProxCatalog::Zero,
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 1),
            Vector::zeros(1),
            FeasibleSet::whole(),
            FeasibleSet::whole(),
            Constants::new(1.0, 0.0),
        );
        assert!(matches!(no_diam, Err(AdmmError::InvalidProblem(_))));
        let neg_mu = ProblemSpec::new(
            Arc::new(QuadraticForm::isotropic(1, 1.0)),
            ProxCatalog::Zero,
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 1),
            Vector::zeros(1),
            FeasibleSet::Ball { radius: 1.0 },
            FeasibleSet::whole(),
            Constants::new(1.0, 0.0).with_mu(-1.0),
        );
        assert!(neg_mu.is_err());
    }

    #[test]
    fn err_rho_components() {
        // theta = x^2/2 + y^2/2 with A=1, B=-1, b=0: optimum at 0.
        let spec = scalar_spec(1.0, -1.0, 0.0);
        let z = Vector::zeros(1);
        let at_opt = err_rho((&z, &z), &spec, (&z, &z), 3.0).unwrap();
        assert_eq!(at_opt.value, 0.0);

        // feasible point x=y=sqrt(0.5): gap 0.5 independent of rho
        let p = Vector::from_element(1, 0.5f64.sqrt());
        for rho in [0.1, 1.0, 10.0] {
            let e = err_rho((&p, &p), &spec, (&z, &z), rho).unwrap();
            assert!((e.value - 0.5).abs() < 1e-15);
            assert_eq!(e.feasibility, 0.0);
        }

        // infeasible: x=1, y=0 -> gap 0.5, residual 1
        let one = Vector::from_element(1, 1.0);
        let e = err_rho((&one, &z), &spec, (&z, &z), 2.0).unwrap();
        let r = (one[0] - z[0]).abs();
        assert!((e.gap - 0.5).abs() < 1e-15);
        assert!((e.value - (0.5 + 2.0 * r)).abs() < 1e-15);

        assert!(err_rho((&one, &z), &spec, (&z, &z), 0.0).is_err());
    }
}
