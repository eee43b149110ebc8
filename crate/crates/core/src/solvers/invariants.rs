//! Per-iteration inequalities that every step must satisfy.
//!
//! Residuals are signed `lhs - rhs` values; `scale` is the sum of the absolute
//! values of the terms so callers can compare against a relative tolerance.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{eval_f, IterateState, ProblemSpec, StackedW, Vector};

/// Default tolerance for the normalized residuals below.
pub const INVARIANT_TOL: f64 = 1e-9;

/// Signed residual together with the magnitude of its terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
}

impl Residual {
    /// `value / max(1, scale)`.
    pub fn normalized(&self) -> f64 {
        self.value / self.scale.max(1.0)
    }
}

/// Worst normalized residual per check over the probes of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantResiduals {
    pub dual_identity: f64,
    pub y_optimality: f64,
    pub three_points: Option<f64>,
    pub step_bound: Option<f64>,
}

impl InvariantResiduals {
    pub fn worst(&self) -> f64 {
        [
            Some(self.dual_identity),
            Some(self.y_optimality),
            self.three_points,
            self.step_bound,
        ]
        .into_iter()
        .flatten()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

/// `||lambda_{k+1} - lambda_k + beta (A x_{k+1} + B y_{k+1} - b)||`, relative to the
/// size of the update.
pub fn dual_identity_residual(prev: &IterateState, next: &IterateState, spec: &ProblemSpec, beta: f64) -> Residual {
    let r = spec.residual(&next.x, &next.y) * beta;
    let value = (&next.lambda - &prev.lambda + &r).norm();
    Residual {
        value,
        scale: prev.lambda.norm() + r.norm(),
    }
}

/// `theta2(y_{k+1}) - theta2(y') + <y_{k+1} - y', -B^T lambda_{k+1}>`, which is
/// nonpositive for every `y'` in Y when `y_{k+1}` solves the y-update exactly.
pub fn y_optimality_residual(next: &IterateState, probe_y: &Vector, spec: &ProblemSpec) -> Residual {
    let t_next = spec.theta2.value(&next.y);
    let t_probe = spec.theta2.value(probe_y);
    let bl = spec.b_mat.tr_mul(&next.lambda);
    let inner = -(&next.y - probe_y).dot(&bl);
    Residual {
        value: t_next - t_probe + inner,
        scale: t_next.abs() + t_probe.abs() + inner.abs(),
    }
}

/// Inputs of the per-step variational bound for one stochastic step.
#[derive(Debug, Clone, Copy)]
pub struct StepBoundInputs<'a> {
    pub prev: &'a IterateState,
    pub next: &'a IterateState,
    /// Sampled subgradient used in the x-update.
    pub g: &'a Vector,
    /// `g - theta1'(x_k)`.
    pub delta: &'a Vector,
    pub eta: f64,
    pub beta: f64,
}

/// `LHS - RHS` of the per-step bound of stochastic ADMM at probe `w`:
///
/// ```text
/// theta1(x_k) + theta2(y_{k+1}) - theta(u) + (w_{k+1} - w)^T F(w_{k+1})
///   <= eta ||g||^2 / 2 + (||x_k - x||^2 - ||x_{k+1} - x||^2) / (2 eta)
///    + beta/2 (||A x + B y_k - b||^2 - ||A x + B y_{k+1} - b||^2)
///    + <delta, x - x_k> + (||lambda - lambda_k||^2 - ||lambda - lambda_{k+1}||^2) / (2 beta)
/// ```
pub fn step_bound_residual(inp: StepBoundInputs<'_>, probe: &StackedW, spec: &ProblemSpec) -> Result<Residual> {
    let StepBoundInputs {
        prev,
        next,
        g,
        delta,
        eta,
        beta,
    } = inp;
    let w_next = next.as_stacked();
    let f_next = eval_f(&w_next, spec)?;
    let th1_k = spec.theta1.value(&prev.x);
    let th2_next = spec.theta2.value(&next.y);
    let th_u = spec.theta1.value(&probe.x) + spec.theta2.value(&probe.y);
    let vi = w_next.sub(probe).dot(&f_next);

    let t_grad = 0.5 * eta * g.norm_squared();
    let (xk2, xn2) = ((&prev.x - &probe.x).norm_squared(), (&next.x - &probe.x).norm_squared());
    let t_x = (xk2 - xn2) / (2.0 * eta);
    let ax = &spec.a_mat * &probe.x - &spec.rhs;
    let (pk2, pn2) = (
        (&ax + &spec.b_mat * &prev.y).norm_squared(),
        (&ax + &spec.b_mat * &next.y).norm_squared(),
    );
    let t_pen = 0.5 * beta * (pk2 - pn2);
    let t_noise = delta.dot(&(&probe.x - &prev.x));
    let (lk2, ln2) = (
        (&probe.lambda - &prev.lambda).norm_squared(),
        (&probe.lambda - &next.lambda).norm_squared(),
    );
    let t_dual = (lk2 - ln2) / (2.0 * beta);

    let lhs = th1_k + th2_next - th_u + vi;
    let rhs = t_grad + t_x + t_pen + t_noise + t_dual;
    // roundoff grows with the individual squared norms, not their differences
    let scale = th1_k.abs()
        + th2_next.abs()
        + th_u.abs()
        + vi.abs()
        + t_grad
        + (xk2 + xn2) / (2.0 * eta)
        + 0.5 * beta * (pk2 + pn2)
        + t_noise.abs()
        + (lk2 + ln2) / (2.0 * beta);
    Ok(Residual {
        value: lhs - rhs,
        scale,
    })
}
