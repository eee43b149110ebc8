//! Reference solutions, replication statistics, log-log rate fits and the
//! theoretical error bounds the trajectories are compared against.

use serde::{Deserialize, Serialize};

use crate::error::{AdmmError, Result};
use crate::prox::{scaled_identity, QuadraticSolver};
use crate::solvers::{constrained_prox, Solver, SolverConfig, Trajectory};
use crate::types::{Averaging, IterateState, Matrix, ProblemSpec, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMethod {
    KktDirect,
    LongDeterministicAdmm,
    GridSearch,
    /// `A = I, B = -I, b = 0` with `theta2 = (w/2)||y||^2`: `x* = prox_{theta1/w}(0)` over X.
    ReducedProx,
}

impl ReferenceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ReferenceMethod::KktDirect => "kkt-direct",
            ReferenceMethod::LongDeterministicAdmm => "long-deterministic-admm",
            ReferenceMethod::GridSearch => "grid-search",
            ReferenceMethod::ReducedProx => "reduced-prox",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            ReferenceMethod::KktDirect,
            ReferenceMethod::LongDeterministicAdmm,
            ReferenceMethod::GridSearch,
            ReferenceMethod::ReducedProx,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vector,
    pub y: Vector,
    pub theta_star: f64,
    pub lambda_star: Option<Vector>,
    pub method: ReferenceMethod,
    /// Bound on `||A x* + B y* - b||` (and on the KKT residual for the direct solve).
    pub certified_tolerance: f64,
}

impl ReferenceSolution {
    /// `||B (y0 - y*)||`.
    pub fn d_y_star_b(&self, spec: &ProblemSpec, y0: &Vector) -> f64 {
        (&spec.b_mat * (y0 - &self.y)).norm()
    }
}

/// Which method [`compute_reference_with`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferencePreference {
    Auto,
    KktDirect,
    LongDeterministicAdmm,
    ReducedProx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub method: ReferencePreference,
    /// Penalty of the long ADMM run; chosen from the spectrum of theta1 when absent.
    pub beta: Option<f64>,
    /// Stop once primal and dual residuals are below this.
    pub tol: f64,
    pub budget: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            method: ReferencePreference::Auto,
            beta: None,
            tol: 1e-10,
            budget: 1_000_000,
        }
    }
}

/// Optimal `u*` with the default options.
pub fn compute_reference(spec: &ProblemSpec) -> Result<ReferenceSolution> {
    compute_reference_with(spec, &ReferenceOptions::default())
}

pub fn compute_reference_with(spec: &ProblemSpec, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    if !spec.theta1.has_exact_expectation() {
        return Err(AdmmError::NoExactObjective);
    }
    match opts.method {
        ReferencePreference::KktDirect => kkt_reference(spec),
        ReferencePreference::LongDeterministicAdmm => admm_reference(spec, opts),
        ReferencePreference::ReducedProx => reduced_prox_reference(spec),
        ReferencePreference::Auto => {
            if spec.theta1.quadratic().is_some() && spec.theta2.quadratic_weight().is_some() {
                if let Ok(r) = kkt_reference(spec) {
                    return Ok(r);
                }
            }
            if is_consensus(spec) && matches!(spec.theta2.quadratic_weight(), Some(w) if w > 0.0) {
                if let Ok(r) = reduced_prox_reference(spec) {
                    return Ok(r);
                }
            }
            admm_reference(spec, opts)
        }
    }
}

fn is_consensus(spec: &ProblemSpec) -> bool {
    spec.a_mat.is_square()
        && spec.b_mat.is_square()
        && scaled_identity(&spec.a_mat) == Some(1.0)
        && scaled_identity(&spec.b_mat) == Some(-1.0)
        && spec.rhs.iter().all(|v| *v == 0.0)
}

/// Solves the KKT system of a problem with quadratic `theta1` and `theta2`:
///
/// ```text
/// [ H   0   -A^T ] [x]        [lin]
/// [ 0   wI  -B^T ] [y]      = [ 0 ]
/// [ A   B    0   ] [lambda]   [ b ]
/// ```
///
/// Fails when the solution leaves X or Y, where the constraint would be active.
pub fn kkt_reference(spec: &ProblemSpec) -> Result<ReferenceSolution> {
    let quad = spec
        .theta1
        .quadratic()
        .ok_or_else(|| AdmmError::NoClosedForm("KKT solve needs a quadratic theta1".into()))?;
    let w = spec
        .theta2
        .quadratic_weight()
        .ok_or_else(|| AdmmError::NoClosedForm("KKT solve needs a quadratic theta2".into()))?;
    let (d1, d2, m) = (spec.d1(), spec.d2(), spec.m());
    let n = d1 + d2 + m;
    let mut k = Matrix::zeros(n, n);
    k.view_mut((0, 0), (d1, d1)).copy_from(&quad.hessian);
    k.view_mut((0, d1 + d2), (d1, m)).copy_from(&(-spec.a_mat.transpose()));
    for i in 0..d2 {
        k[(d1 + i, d1 + i)] = w;
    }
    k.view_mut((d1, d1 + d2), (d2, m)).copy_from(&(-spec.b_mat.transpose()));
    k.view_mut((d1 + d2, 0), (m, d1)).copy_from(&spec.a_mat);
    k.view_mut((d1 + d2, d1), (m, d2)).copy_from(&spec.b_mat);
    let mut rhs = Vector::zeros(n);
    rhs.rows_mut(0, d1).copy_from(&quad.linear);
    rhs.rows_mut(d1 + d2, m).copy_from(&spec.rhs);
    let sol = k
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AdmmError::InvalidProblem("KKT matrix is singular".into()))?;
    let x = sol.rows(0, d1).into_owned();
    let y = sol.rows(d1, d2).into_owned();
    let lambda = sol.rows(d1 + d2, m).into_owned();
    let kkt_res = (&k * &sol - &rhs).norm();
    let scale = 1.0 + rhs.norm() + (k.norm() * sol.norm());
    if kkt_res > 1e-10 * scale {
        return Err(AdmmError::InvalidProblem(format!("KKT residual {kkt_res:e} above 1e-10")));
    }
    if !spec.x_set.contains(&x, 0.0) || !spec.y_set.contains(&y, 0.0) {
        return Err(AdmmError::InvalidProblem(
            "unconstrained KKT point leaves X or Y; the set constraint is active".into(),
        ));
    }
    let theta_star = spec.theta(&x, &y)?;
    Ok(ReferenceSolution {
        certified_tolerance: kkt_res.max(spec.residual(&x, &y).norm()),
        x,
        y,
        theta_star,
        lambda_star: Some(lambda),
        method: ReferenceMethod::KktDirect,
    })
}

/// Consensus problems with a quadratic `theta2`: eliminating `y = x` leaves
/// `min_{x in X} theta1(x) + (w/2)||x||^2`, which is one prox evaluation.
pub fn reduced_prox_reference(spec: &ProblemSpec) -> Result<ReferenceSolution> {
    if !is_consensus(spec) || !spec.y_set.is_whole() {
        return Err(AdmmError::NoClosedForm(
            "reduced prox reference needs A = I, B = -I, b = 0 and Y the whole space".into(),
        ));
    }
    let w = match spec.theta2.quadratic_weight() {
        Some(w) if w > 0.0 => w,
        _ => {
            return Err(AdmmError::NoClosedForm(
                "reduced prox reference needs theta2 = (w/2)||y||^2 with w > 0".into(),
            ))
        }
    };
    let zero = Vector::zeros(spec.d1());
    let x = constrained_prox(spec.theta1.as_ref(), &zero, w, &spec.x_set)?;
    let y = x.clone();
    let theta_star = spec.theta(&x, &y)?;
    // y-optimality: w y* - B^T lambda* = w y* + lambda* = 0
    let lambda = &y * (-w);
    Ok(ReferenceSolution {
        x,
        y,
        theta_star,
        lambda_star: Some(lambda),
        method: ReferenceMethod::ReducedProx,
        certified_tolerance: 0.0,
    })
}

/// Penalty for the reference run: geometric mean of the extreme curvatures of a
/// quadratic theta1 (scaled by `A^T A`), 1 otherwise.
fn default_beta(spec: &ProblemSpec) -> f64 {
    let Some(q) = spec.theta1.quadratic() else {
        return 1.0;
    };
    let h = QuadraticSolver::new(q.hessian.clone());
    let ata = QuadraticSolver::new(spec.a_mat.tr_mul(&spec.a_mat));
    let (lo, hi) = (h.min_eigenvalue().max(1e-12), h.max_eigenvalue().max(1e-12));
    let a = ata.max_eigenvalue().max(1e-12);
    (lo * hi).sqrt() / a
}

/// Deterministic ADMM until the primal residual `||A x + B y - b||` and the dual
/// residual `beta ||A^T B (y_{k+1} - y_k)||` are both below `opts.tol`.
pub fn admm_reference(spec: &ProblemSpec, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    let beta = opts.beta.unwrap_or_else(|| default_beta(spec));
    let cfg = SolverConfig::deterministic(beta, opts.budget);
    let solver = Solver::new(spec, cfg)?;
    let mut state = IterateState::zeros(spec);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.budget {
        let next = solver.step_deterministic(&state)?;
        let primal = spec.residual(&next.x, &next.y).norm();
        let dual = (spec.a_mat.tr_mul(&(&spec.b_mat * (&next.y - &state.y))) * beta).norm();
        residual = primal.max(dual);
        state = next;
        if residual <= opts.tol {
            let theta_star = spec.theta(&state.x, &state.y)?;
            return Ok(ReferenceSolution {
                theta_star,
                lambda_star: Some(state.lambda.clone()),
                x: state.x,
                y: state.y,
                method: ReferenceMethod::LongDeterministicAdmm,
                certified_tolerance: primal,
            });
        }
    }
    Err(AdmmError::ReferenceBudget {
        budget: opts.budget,
        residual,
    })
}

/// Brute-force minimization of `theta` over `x` in the box `center +/- half_width`
/// with `y = B^{-1}(b - A x)`. Refines the grid around the best point until the
/// cell size reaches `resolution`.
pub fn grid_search_reference(
    spec: &ProblemSpec,
    center: &Vector,
    half_width: f64,
    resolution: f64,
) -> Result<ReferenceSolution> {
    let d1 = spec.d1();
    if d1 + spec.d2() > 4 || d1 > 2 {
        return Err(AdmmError::InvalidProblem("grid search is limited to d1 + d2 <= 4, d1 <= 2".into()));
    }
    if !spec.b_mat.is_square() {
        return Err(AdmmError::UnsupportedB("grid search eliminates y and needs square B".into()));
    }
    let b_inv = spec
        .b_mat
        .clone()
        .try_inverse()
        .ok_or_else(|| AdmmError::UnsupportedB("grid search needs an invertible B".into()))?;
    let y_of = |x: &Vector| &b_inv * (&spec.rhs - &spec.a_mat * x);
    let eval = |x: &Vector| -> Option<f64> {
        let y = y_of(x);
        if !spec.x_set.contains(x, 0.0) || !spec.y_set.contains(&y, 0.0) {
            return None;
        }
        spec.theta(x, &y).ok()
    };
    let per_dim = 201usize;
    let mut c = center.clone();
    let mut hw = half_width;
    let mut best = (f64::INFINITY, c.clone());
    loop {
        let h = 2.0 * hw / (per_dim - 1) as f64;
        let total = per_dim.pow(d1 as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x = Vector::from_iterator(
                d1,
                (0..d1).map(|j| {
                    let i = rem % per_dim;
                    rem /= per_dim;
                    c[j] - hw + h * i as f64
                }),
            );
            if let Some(f) = eval(&x) {
                if f < best.0 {
                    best = (f, x);
                }
            }
        }
        if !best.0.is_finite() {
            return Err(AdmmError::InvalidProblem("grid contains no feasible point".into()));
        }
        if h <= resolution {
            break;
        }
        c = best.1.clone();
        hw = (4.0 * h).max(resolution * (per_dim - 1) as f64 / 2.0);
    }
    let x = best.1;
    let y = y_of(&x);
    Ok(ReferenceSolution {
        theta_star: best.0,
        certified_tolerance: (spec.residual(&x, &y)).norm(),
        x,
        y,
        lambda_star: None,
        method: ReferenceMethod::GridSearch,
    })
}

/// Pointwise replication statistics of `Err_rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCurve {
    pub t: Vec<usize>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (`n - 1` denominator); 0 for a single replication.
    pub std: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replications: usize,
}

impl ExpectationCurve {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.t.iter().map(|t| *t as f64).zip(self.mean.iter().cloned()).collect()
    }
}

/// Mean and standard error over replications of a per-record quantity.
pub fn estimate_expectation_by<F>(trajectories: &[Trajectory], t_grid: &[usize], f: F) -> Result<ExpectationCurve>
where
    F: Fn(&crate::solvers::StepRecord) -> f64,
{
    if trajectories.is_empty() {
        return Err(AdmmError::Expectation("no trajectories".into()));
    }
    let len = trajectories[0].final_state.k;
    if let Some(t) = trajectories.iter().find(|t| t.final_state.k != len) {
        return Err(AdmmError::Expectation(format!(
            "trajectories have different lengths ({len} and {})",
            t.final_state.k
        )));
    }
    let r = trajectories.len();
    let mut curve = ExpectationCurve {
        t: Vec::with_capacity(t_grid.len()),
        mean: Vec::with_capacity(t_grid.len()),
        std: Vec::with_capacity(t_grid.len()),
        stderr: Vec::with_capacity(t_grid.len()),
        replications: r,
    };
    for &t in t_grid {
        let mut vals = Vec::with_capacity(r);
        for (i, tr) in trajectories.iter().enumerate() {
            let rec = tr
                .record_at(t)
                .ok_or_else(|| AdmmError::Expectation(format!("replication {i} has no record at t = {t}")))?;
            vals.push(f(rec));
        }
        let (mean, std) = mean_std(&vals);
        curve.t.push(t);
        curve.mean.push(mean);
        curve.std.push(std);
        curve.stderr.push(std / (r as f64).sqrt());
    }
    Ok(curve)
}

/// `Err_rho(u_bar_t)` statistics under `averaging`.
pub fn estimate_expectation(
    trajectories: &[Trajectory],
    t_grid: &[usize],
    averaging: Averaging,
) -> Result<ExpectationCurve> {
    estimate_expectation_by(trajectories, t_grid, |r| r.err(averaging).value)
}

/// Sample mean and standard deviation (0 for fewer than two values).
pub fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Up to `n` distinct integers spaced geometrically from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    let lo = lo.max(1);
    if hi <= lo || n < 2 {
        return vec![hi.max(lo)];
    }
    let ratio = (hi as f64 / lo as f64).ln();
    let mut out: Vec<usize> = (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (lo as f64 * (ratio * i as f64 / (n - 1) as f64).exp()).round() as usize
            }
        })
        .collect();
    out.dedup();
    out
}

/// Least-squares line through `(log t, log err)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fits `log err = intercept + slope log t` over the points of `curve` whose
/// `t` lies in `window`.
pub fn fit_rate(curve: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(AdmmError::RateFit(format!("window must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = curve.iter().cloned().filter(|(t, _)| *t >= lo && *t <= hi).collect();
    if pts.len() < 5 {
        return Err(AdmmError::RateFit(format!(
            "need at least 5 points in [{lo}, {hi}], found {}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(AdmmError::RateFit(format!(
            "value {v:e} at t = {t} is not positive; the curve has hit the floating-point floor, use an earlier window"
        )));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window,
        n_points: pts.len(),
    })
}

/// Constants entering the error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d_x: f64,
    pub m_bound: f64,
    pub sigma: f64,
    pub mu: f64,
    pub lipschitz: Option<f64>,
    pub beta: f64,
    pub rho: f64,
    /// `||B (y0 - y*)||`.
    pub d_y_star_b: f64,
}

impl BoundInputs {
    pub fn new(spec: &ProblemSpec, beta: f64, rho: f64, d_y_star_b: f64) -> Self {
        let c = &spec.constants;
        BoundInputs {
            d_x: spec.d_x(),
            m_bound: c.m_bound,
            sigma: c.sigma,
            mu: c.mu,
            lipschitz: c.lipschitz,
            beta,
            rho,
            d_y_star_b,
        }
    }

    /// `(beta D_{y*,B}^2 + rho^2/beta) / (2t)`.
    pub fn m2(&self, t: f64) -> f64 {
        (self.beta * self.d_y_star_b.powi(2) + self.rho.powi(2) / self.beta) / (2.0 * t)
    }

    /// `sqrt(2) D_X M / sqrt(t)`.
    pub fn m1(&self, t: f64) -> f64 {
        2f64.sqrt() * self.d_x * self.m_bound / t.sqrt()
    }

    /// Expected `Err_rho` bound of the convex schedule.
    pub fn convex(&self, t: f64) -> f64 {
        self.m1(t) + self.m2(t)
    }

    /// Threshold exceeded with probability at most `2 exp(-omega)`.
    pub fn high_probability(&self, t: f64, omega: f64) -> f64 {
        (1.0 + omega / 2.0 + 2.0 * (2.0 * omega).sqrt()) * self.m1(t) + self.m2(t)
    }

    /// Exact variants: `beta D^2/(2t) + rho^2/(2 beta t)`.
    pub fn deterministic(&self, t: f64) -> f64 {
        self.m2(t)
    }

    /// `M^2 log t/(mu t) + mu D_X^2/(2t) + beta D^2/(2t) + rho^2/(2 beta t)`.
    pub fn strongly_convex(&self, t: f64) -> f64 {
        self.m_bound.powi(2) * t.ln() / (self.mu * t) + self.mu * self.d_x.powi(2) / (2.0 * t) + self.m2(t)
    }

    /// `sqrt(2) D_X sigma/sqrt(t) + L D_X^2/(2t) + beta D^2/(2t) + rho^2/(2 beta t)`.
    pub fn smooth(&self, t: f64) -> f64 {
        let l = self.lipschitz.unwrap_or(f64::NAN);
        2f64.sqrt() * self.d_x * self.sigma / t.sqrt() + l * self.d_x.powi(2) / (2.0 * t) + self.m2(t)
    }
}

/// Result of the tail-probability check at one `t` and `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighProbCheck {
    pub t: usize,
    pub omega: f64,
    pub threshold: f64,
    pub exceed_fraction: f64,
    /// `2 exp(-omega)`.
    pub probability_bound: f64,
    /// 95% binomial slack `1.96 sqrt(p(1-p)/R)` at `p = min(2 exp(-omega), 1)`.
    pub slack: f64,
    pub replications: usize,
    pub pass: bool,
}

/// Fraction of replications whose `Err_rho(u_bar_t)` exceeds the tail threshold.
pub fn high_prob_check(
    err_at_t: &[f64],
    t: usize,
    omega: f64,
    bounds: &BoundInputs,
    oracle_bounded: bool,
) -> Result<HighProbCheck> {
    if !oracle_bounded {
        return Err(AdmmError::UnboundedOracle(
            "the tail bound needs sampled subgradients bounded by M; use a finite-sum or uniform-noise oracle".into(),
        ));
    }
    if !(omega > 0.0) {
        return Err(AdmmError::InvalidConfig(format!("omega must be positive, got {omega}")));
    }
    if err_at_t.is_empty() {
        return Err(AdmmError::Expectation("no replications".into()));
    }
    let threshold = bounds.high_probability(t as f64, omega);
    let exceed = err_at_t.iter().filter(|v| **v > threshold).count();
    let r = err_at_t.len();
    let exceed_fraction = exceed as f64 / r as f64;
    let probability_bound = 2.0 * (-omega).exp();
    let p = probability_bound.min(1.0);
    let slack = 1.96 * (p * (1.0 - p) / r as f64).sqrt();
    Ok(HighProbCheck {
        t,
        omega,
        threshold,
        exceed_fraction,
        probability_bound,
        slack,
        replications: r,
        pass: exceed_fraction <= probability_bound + slack,
    })
}

/// Smallest finite value, or 0 when all are nonnegative. With `rho >= ||lambda*||`
/// the combined error of any point of `X x Y` is nonnegative, so a negative
/// result flags a bad reference.
pub fn most_negative(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().filter(|v| v.is_finite()).fold(0.0, f64::min)
}
