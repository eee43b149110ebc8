//! Convex functions usable as `theta1`.

use std::fmt;

use nalgebra::Cholesky;

use crate::types::{Matrix, Vector};

/// A convex function of x with exact value and subgradient.
///
/// `value` and `subgradient` return the expectation `theta1(x)` and one fixed
/// element of its subdifferential. Sampling is the oracle's job.
pub trait ConvexObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    fn subgradient(&self, x: &Vector) -> Vector;

    /// False for functions only accessible through samples.
    fn has_exact_expectation(&self) -> bool {
        true
    }

    /// Quadratic representation, when the function is a quadratic.
    fn quadratic(&self) -> Option<&QuadraticForm> {
        None
    }

    /// `argmin_x f(x) + (c/2)||x - z||^2` over all of R^d, when available.
    fn prox(&self, _z: &Vector, _c: f64) -> Option<Vector> {
        None
    }

    /// Coordinate-separable functions allow box-constrained prox by clamping.
    fn is_separable(&self) -> bool {
        false
    }
}

/// `f(x) = 0.5 x^T H x - linear^T x + constant` with `H` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: Matrix,
    pub linear: Vector,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn new(hessian: Matrix, linear: Vector, constant: f64) -> Self {
        assert_eq!(hessian.nrows(), hessian.ncols(), "hessian must be square");
        assert_eq!(hessian.nrows(), linear.len(), "hessian/linear size mismatch");
        QuadraticForm {
            hessian,
            linear,
            constant,
        }
    }

    /// `(curvature/2)||x||^2`.
    pub fn isotropic(dim: usize, curvature: f64) -> Self {
        Self::new(Matrix::identity(dim, dim) * curvature, Vector::zeros(dim), 0.0)
    }

    /// `(curvature/2)||x - center||^2`.
    pub fn centered(center: Vector, curvature: f64) -> Self {
        let dim = center.len();
        let constant = 0.5 * curvature * center.norm_squared();
        Self::new(Matrix::identity(dim, dim) * curvature, center * curvature, constant)
    }
}

impl ConvexObjective for QuadraticForm {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) - self.linear.dot(x) + self.constant
    }

    fn subgradient(&self, x: &Vector) -> Vector {
        &self.hessian * x - &self.linear
    }

    fn quadratic(&self) -> Option<&QuadraticForm> {
        Some(self)
    }

    fn prox(&self, z: &Vector, c: f64) -> Option<Vector> {
        let n = self.dim();
        let sys = &self.hessian + Matrix::identity(n, n) * c;
        let chol = Cholesky::new(sys)?;
        Some(chol.solve(&(&self.linear + z * c)))
    }
}

/// `f(x) = weight * ||x||_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Norm {
    pub dim: usize,
    pub weight: f64,
}

impl ConvexObjective for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.lp_norm(1)
    }

    fn subgradient(&self, x: &Vector) -> Vector {
        x.map(|v| self.weight * sign(v))
    }

    fn prox(&self, z: &Vector, c: f64) -> Option<Vector> {
        Some(soft_threshold(z, self.weight / c))
    }

    fn is_separable(&self) -> bool {
        true
    }
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Componentwise `sign(z) * max(|z| - tau, 0)`.
pub fn soft_threshold(z: &Vector, tau: f64) -> Vector {
    z.map(|v| {
        if v > tau {
            v - tau
        } else if v < -tau {
            v + tau
        } else {
            0.0
        }
    })
}

/// Per-sample loss of a [`FiniteSum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `0.5 (a^T x - t)^2`
    Squared,
    /// `max(0, 1 - t a^T x)` with labels `t` in {-1, +1}
    Hinge,
}

/// `theta1(x) = (1/n) sum_i loss(a_i, t_i; x) + (ridge/2)||x||^2`.
///
/// The oracle samples a row index uniformly; the exact expectation is the average.
#[derive(Debug, Clone)]
pub struct FiniteSum {
    features: Matrix,
    targets: Vector,
    loss: Loss,
    ridge: f64,
    quad: Option<QuadraticForm>,
}

impl FiniteSum {
    pub fn new(features: Matrix, targets: Vector, loss: Loss, ridge: f64) -> Self {
        assert_eq!(features.nrows(), targets.len(), "one target per row");
        assert!(features.nrows() > 0, "finite sum needs at least one component");
        let quad = match loss {
            Loss::Squared => {
                let n = features.nrows() as f64;
                let d = features.ncols();
                let hessian = features.tr_mul(&features) / n + Matrix::identity(d, d) * ridge;
                let linear = features.tr_mul(&targets) / n;
                let constant = 0.5 * targets.norm_squared() / n;
                Some(QuadraticForm::new(hessian, linear, constant))
            }
            Loss::Hinge => None,
        };
        FiniteSum {
            features,
            targets,
            loss,
            ridge,
            quad,
        }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &Vector {
        &self.targets
    }

    fn margin(&self, i: usize, x: &Vector) -> f64 {
        self.features.row(i).transpose().dot(x)
    }

    /// Value of component `i` (including the ridge term).
    pub fn component_value(&self, i: usize, x: &Vector) -> f64 {
        let m = self.margin(i, x);
        let loss = match self.loss {
            Loss::Squared => 0.5 * (m - self.targets[i]).powi(2),
            Loss::Hinge => (1.0 - self.targets[i] * m).max(0.0),
        };
        loss + 0.5 * self.ridge * x.norm_squared()
    }

    /// Subgradient of component `i`; the hinge kink uses the zero subgradient.
    pub fn component_subgradient(&self, i: usize, x: &Vector) -> Vector {
        let mut g = x * self.ridge;
        self.add_component_subgradient(i, x, 1.0, &mut g);
        g
    }

    pub(crate) fn add_component_subgradient(&self, i: usize, x: &Vector, scale: f64, out: &mut Vector) {
        let m = self.margin(i, x);
        let coef = match self.loss {
            Loss::Squared => m - self.targets[i],
            Loss::Hinge => {
                if 1.0 - self.targets[i] * m > 0.0 {
                    -self.targets[i]
                } else {
                    0.0
                }
            }
        };
        if coef != 0.0 {
            for (o, a) in out.iter_mut().zip(self.features.row(i).iter()) {
                *o += scale * coef * a;
            }
        }
    }

    /// Pointwise bound `sup_{i, ||x|| <= radius} ||component_subgradient(i, x)||`.
    pub fn certified_gradient_bound(&self, radius: f64) -> f64 {
        (0..self.len())
            .map(|i| {
                let an = self.features.row(i).norm();
                let loss_part = match self.loss {
                    Loss::Squared => an * (an * radius + self.targets[i].abs()),
                    Loss::Hinge => an,
                };
                loss_part + self.ridge * radius
            })
            .fold(0.0, f64::max)
    }

    /// Hinge prox by dual coordinate ascent on the box-constrained dual.
    fn hinge_prox(&self, z: &Vector, c: f64) -> Vector {
        let n = self.len();
        let nf = n as f64;
        let cc = c + self.ridge;
        let center = z * (c / cc);
        let mut alpha = vec![0.0; n];
        let mut x = center.clone();
        let sq: Vec<f64> = (0..n).map(|i| self.features.row(i).norm_squared()).collect();
        for _sweep in 0..100_000 {
            let mut max_step: f64 = 0.0;
            for i in 0..n {
                if sq[i] == 0.0 {
                    continue;
                }
                let ti = self.targets[i];
                let grad = 1.0 - ti * self.margin(i, &x);
                let new = (alpha[i] + grad * cc * nf / sq[i]).clamp(0.0, 1.0);
                let delta = new - alpha[i];
                if delta != 0.0 {
                    let s = delta * ti / (cc * nf);
                    for (xv, a) in x.iter_mut().zip(self.features.row(i).iter()) {
                        *xv += s * a;
                    }
                    alpha[i] = new;
                    max_step = max_step.max(delta.abs() * sq[i].sqrt());
                }
            }
            if max_step <= 1e-15 * (1.0 + x.norm()) * cc * nf {
                break;
            }
        }
        x
    }
}

impl ConvexObjective for FiniteSum {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        match &self.quad {
            Some(q) => q.value(x),
            None => {
                let n = self.len() as f64;
                let loss: f64 = (0..self.len())
                    .map(|i| (1.0 - self.targets[i] * self.margin(i, x)).max(0.0))
                    .sum();
                loss / n + 0.5 * self.ridge * x.norm_squared()
            }
        }
    }

    fn subgradient(&self, x: &Vector) -> Vector {
        match &self.quad {
            Some(q) => q.subgradient(x),
            None => {
                let n = self.len() as f64;
                let mut g = x * self.ridge;
                for i in 0..self.len() {
                    self.add_component_subgradient(i, x, 1.0 / n, &mut g);
                }
                g
            }
        }
    }

    fn quadratic(&self) -> Option<&QuadraticForm> {
        self.quad.as_ref()
    }

    fn prox(&self, z: &Vector, c: f64) -> Option<Vector> {
        match &self.quad {
            Some(q) => q.prox(z, c),
            None => Some(self.hinge_prox(z, c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sum(loss: Loss, ridge: f64, seed: u64) -> FiniteSum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (7, 3);
        let f = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let t = match loss {
            Loss::Squared => Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            Loss::Hinge => Vector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }),
        };
        FiniteSum::new(f, t, loss, ridge)
    }

    #[test]
    fn exact_subgradient_is_component_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for loss in [Loss::Squared, Loss::Hinge] {
            let fs = random_sum(loss, 0.3, 5);
            for _ in 0..10 {
                let x = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
                let avg = (0..fs.len())
                    .map(|i| fs.component_subgradient(i, &x))
                    .fold(Vector::zeros(3), |acc, g| acc + g)
                    / fs.len() as f64;
                let exact = fs.subgradient(&x);
                assert!((&avg - &exact).norm() <= 1e-12 * (1.0 + exact.norm()));
                let vavg: f64 =
                    (0..fs.len()).map(|i| fs.component_value(i, &x)).sum::<f64>() / fs.len() as f64;
                assert!((vavg - fs.value(&x)).abs() <= 1e-12 * (1.0 + vavg.abs()));
            }
        }
    }

    #[test]
    fn hinge_prox_minimizes() {
        let fs = random_sum(Loss::Hinge, 0.1, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let c = 0.7;
        let p = fs.prox(&z, c).unwrap();
        let obj = |x: &Vector| fs.value(x) + 0.5 * c * (x - &z).norm_squared();
        let best = obj(&p);
        for _ in 0..500 {
            let q = &p + Vector::from_fn(3, |_, _| rng.random_range(-0.05..0.05));
            assert!(obj(&q) >= best - 1e-12);
        }
    }

    #[test]
    fn quadratic_prox_solves_shifted_system() {
        let q = QuadraticForm::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            Vector::from_vec(vec![1.0, -1.0]),
            0.0,
        );
        let z = Vector::from_vec(vec![0.3, 0.2]);
        let p = q.prox(&z, 2.0).unwrap();
        let grad = q.subgradient(&p) + (&p - &z) * 2.0;
        assert!(grad.norm() < 1e-14);
    }

    #[test]
    fn soft_threshold_definition() {
        let z = Vector::from_vec(vec![2.0, -0.5, -3.0]);
        assert_eq!(soft_threshold(&z, 1.0).as_slice(), &[1.0, 0.0, -2.0]);
    }

    #[test]
    fn certified_bound_dominates_samples() {
        let fs = random_sum(Loss::Squared, 0.2, 1);
        let bound = fs.certified_gradient_bound(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut x = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            x *= 2.0 / x.norm().max(1.0);
            for i in 0..fs.len() {
                assert!(fs.component_subgradient(i, &x).norm() <= bound + 1e-12);
            }
        }
    }
}
