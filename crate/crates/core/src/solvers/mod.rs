//! Deterministic, linearized and stochastic ADMM.
//!
//! All three variants share Lines 2 and 3:
//!
//! ```text
//! y_{k+1}      = argmin_{y in Y} theta2(y) + (beta/2)||A x_{k+1} + B y - b - lambda_k/beta||^2
//! lambda_{k+1} = lambda_k - beta (A x_{k+1} + B y_{k+1} - b)
//! ```
//!
//! and differ in how `x_{k+1}` is produced.

pub mod invariants;
pub mod schedule;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AdmmError, Result};
use crate::objective::ConvexObjective;
use crate::oracle::{NoiseSample, StochasticOracle};
use crate::prox::{ball_constrained_prox, scaled_identity, three_points_residual, QuadraticSolver, XSubproblem};
use crate::types::{
    err_rho_with_value, Averaging, ErrRho, FeasibleSet, IterateState, Matrix, ProblemSpec, StackedW, Vector,
};

pub use invariants::{
    dual_identity_residual, step_bound_residual, y_optimality_residual, InvariantResiduals, StepBoundInputs, Residual,
    INVARIANT_TOL,
};
pub use schedule::StepSchedule;

/// Proximal matrix `G` of linearized ADMM.
#[derive(Debug, Clone, PartialEq)]
pub enum Linearization {
    /// Arbitrary symmetric PSD `G`.
    Matrix(Matrix),
    /// `G = r I - beta A^T A`, which turns Line 1 into a prox step of `theta1 / r`.
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Deterministic,
    Linearized(Linearization),
    Stochastic,
}

/// Which iterations end up in the trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordPolicy {
    Every,
    /// Only these iteration counts (sorted, deduplicated on use).
    At(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub beta: f64,
    /// Used by the stochastic variant only.
    pub schedule: StepSchedule,
    pub t_max: usize,
    pub rho: f64,
    /// Convention used by [`Trajectory::primary`]; both are always recorded.
    pub averaging: Option<Averaging>,
    pub check_invariants: bool,
    pub probe_count: usize,
    pub invariant_tol: f64,
    pub x0: Option<Vector>,
    pub y0: Option<Vector>,
    pub record: RecordPolicy,
    pub probe_seed: u64,
}

impl SolverConfig {
    pub fn new(variant: Variant, beta: f64, schedule: StepSchedule, t_max: usize) -> Self {
        SolverConfig {
            variant,
            beta,
            schedule,
            t_max,
            rho: 1.0,
            averaging: None,
            check_invariants: false,
            probe_count: 5,
            invariant_tol: INVARIANT_TOL,
            x0: None,
            y0: None,
            record: RecordPolicy::Every,
            probe_seed: 0x0b5e_55ed,
        }
    }

    pub fn deterministic(beta: f64, t_max: usize) -> Self {
        Self::new(Variant::Deterministic, beta, StepSchedule::Convex, t_max)
    }

    pub fn stochastic(beta: f64, schedule: StepSchedule, t_max: usize) -> Self {
        Self::new(Variant::Stochastic, beta, schedule, t_max)
    }

    pub fn linearized(g: Linearization, beta: f64, t_max: usize) -> Self {
        Self::new(Variant::Linearized(g), beta, StepSchedule::Convex, t_max)
    }

    pub fn with_checks(mut self, probe_count: usize) -> Self {
        self.check_invariants = true;
        self.probe_count = probe_count;
        self
    }

    pub fn with_record(mut self, record: RecordPolicy) -> Self {
        self.record = record;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_averaging(mut self, averaging: Averaging) -> Self {
        self.averaging = Some(averaging);
        self
    }

    /// Aligned for the smooth schedule and the exact variants, shifted otherwise.
    pub fn effective_averaging(&self) -> Averaging {
        if let Some(a) = self.averaging {
            return a;
        }
        match (&self.variant, self.schedule) {
            (Variant::Stochastic, StepSchedule::Smooth) => Averaging::Aligned,
            (Variant::Stochastic, _) => Averaging::Shifted,
            _ => Averaging::Aligned,
        }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(AdmmError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(AdmmError::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if self.check_invariants && self.probe_count == 0 {
            return Err(AdmmError::InvalidConfig("invariant checks need at least one probe".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != spec.d1() {
                return Err(AdmmError::dim("x0", spec.d1(), x0.len()));
            }
        }
        if let Some(y0) = &self.y0 {
            if y0.len() != spec.d2() {
                return Err(AdmmError::dim("y0", spec.d2(), y0.len()));
            }
        }
        match &self.variant {
            Variant::Stochastic => self.schedule.validate(spec)?,
            Variant::Deterministic => {}
            Variant::Linearized(Linearization::Matrix(g)) => {
                let d1 = spec.d1();
                if g.nrows() != d1 || g.ncols() != d1 {
                    return Err(AdmmError::dim("G", d1, g.nrows()));
                }
                let lmin = QuadraticSolver::new(g.clone()).min_eigenvalue();
                if lmin < -1e-10 {
                    return Err(AdmmError::NotPsd(format!("smallest eigenvalue of G is {lmin:e}")));
                }
            }
            Variant::Linearized(Linearization::Scalar(r)) => {
                let need = self.beta * ata_norm(spec);
                if !(*r >= need * (1.0 - 1e-12)) {
                    return Err(AdmmError::NotPsd(format!(
                        "G = r I - beta A^T A needs r >= beta ||A^T A|| = {need}, got r = {r}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn initial_state(&self, spec: &ProblemSpec) -> IterateState {
        IterateState::new(
            self.x0.clone().unwrap_or_else(|| Vector::zeros(spec.d1())),
            self.y0.clone().unwrap_or_else(|| Vector::zeros(spec.d2())),
            spec.m(),
        )
    }
}

/// Spectral norm of `A^T A`.
pub fn ata_norm(spec: &ProblemSpec) -> f64 {
    QuadraticSolver::new(spec.a_mat.tr_mul(&spec.a_mat)).max_eigenvalue().max(0.0)
}

/// Minimizer of `f(x) + (c/2)||x - z||^2` over `set`, from the unconstrained prox of `f`.
pub(crate) fn constrained_prox(f: &dyn ConvexObjective, z: &Vector, c: f64, set: &FeasibleSet) -> Result<Vector> {
    let free = f
        .prox(z, c)
        .ok_or_else(|| AdmmError::NoClosedForm(format!("theta1 has no prox operator: {f:?}")))?;
    match set {
        FeasibleSet::Whole { .. } => Ok(free),
        FeasibleSet::Ball { radius } => {
            if free.norm() <= *radius {
                return Ok(free);
            }
            Ok(ball_constrained_prox(
                |zz, cc| f.prox(zz, cc).expect("prox exists"),
                z,
                c,
                *radius,
            ))
        }
        FeasibleSet::Box { .. } => {
            if set.contains(&free, 0.0) {
                Ok(free)
            } else if f.is_separable() {
                Ok(set.project(&free))
            } else {
                Err(AdmmError::NoClosedForm(
                    "box-constrained prox of a non-separable theta1".into(),
                ))
            }
        }
    }
}

/// How Line 1 of the exact variants is carried out.
#[derive(Debug, Clone)]
enum ExactLine1 {
    /// Quadratic theta1: `(H + beta A^T A + G) x = ...` with a cached eigendecomposition.
    Quadratic(QuadraticSolver),
    /// `A = s I`: a prox step of theta1 with weight `beta s^2`.
    ScaledProx(f64),
    Unavailable(String),
}

#[derive(Debug, Clone)]
enum YUpdate {
    /// `B = s I`.
    Prox(f64),
    /// Quadratic theta2 with weight `w` and general `B`.
    Quadratic { solver: QuadraticSolver, weight: f64 },
    Unsupported(String),
}

/// What the three-points relation is checked against after a stochastic Line 1.
#[derive(Debug, Clone)]
pub struct ThreePointsData {
    pub grad_at_xstar: Vector,
    pub u: Vector,
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: IterateState,
    pub eta: Option<f64>,
    pub sample: Option<NoiseSample>,
    pub three_points: Option<ThreePointsData>,
}

/// Per-run solver with the factorizations every step reuses.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    spec: &'a ProblemSpec,
    cfg: SolverConfig,
    xsub: Option<XSubproblem>,
    line1: ExactLine1,
    /// Line 1 of linearized ADMM with scalar `r`, or `G = r I - beta A^T A` detected.
    lin_r: Option<f64>,
    y_update: YUpdate,
}

impl<'a> Solver<'a> {
    pub fn new(spec: &'a ProblemSpec, cfg: SolverConfig) -> Result<Self> {
        cfg.validate(spec)?;
        let beta = cfg.beta;
        let ata = spec.a_mat.tr_mul(&spec.a_mat) * beta;
        let (xsub, line1, lin_r) = match &cfg.variant {
            Variant::Stochastic => (Some(XSubproblem::new(spec, beta)), ExactLine1::Unavailable(String::new()), None),
            Variant::Deterministic => (None, exact_line1(spec, &ata, None), None),
            Variant::Linearized(Linearization::Scalar(r)) => (None, ExactLine1::Unavailable(String::new()), Some(*r)),
            Variant::Linearized(Linearization::Matrix(g)) => {
                if g.iter().all(|v| *v == 0.0) {
                    (None, exact_line1(spec, &ata, None), None)
                } else if let Some(r) = scaled_identity(&(g + &ata)) {
                    (None, ExactLine1::Unavailable(String::new()), Some(r))
                } else {
                    (None, exact_line1(spec, &ata, Some(g)), None)
                }
            }
        };
        let y_update = match scaled_identity(&spec.b_mat) {
            Some(s) if s != 0.0 && spec.b_mat.is_square() => YUpdate::Prox(s),
            _ => match spec.theta2.quadratic_weight() {
                Some(weight) => YUpdate::Quadratic {
                    solver: QuadraticSolver::new(spec.b_mat.tr_mul(&spec.b_mat) * beta),
                    weight,
                },
                None => YUpdate::Unsupported(format!(
                    "the y-update of {:?} needs B to be a nonzero multiple of the identity or a quadratic theta2",
                    spec.theta2
                )),
            },
        };
        Ok(Solver {
            spec,
            cfg,
            xsub,
            line1,
            lin_r,
            y_update,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn initial_state(&self) -> IterateState {
        self.cfg.initial_state(self.spec)
    }

    /// `B y_k - b - lambda_k / beta`.
    fn x_shift(&self, state: &IterateState) -> Vector {
        &self.spec.b_mat * &state.y - &self.spec.rhs - &state.lambda / self.cfg.beta
    }

    fn exact_x(&self, state: &IterateState, g_mat: Option<&Matrix>) -> Result<Vector> {
        let spec = self.spec;
        let beta = self.cfg.beta;
        let c = self.x_shift(state);
        match &self.line1 {
            ExactLine1::Quadratic(solver) => {
                let quad = spec.theta1.quadratic().expect("quadratic theta1");
                let mut q = spec.a_mat.tr_mul(&c) * beta - &quad.linear;
                if let Some(g) = g_mat {
                    q -= g * &state.x;
                }
                solver.solve(0.0, &q, &spec.x_set)
            }
            ExactLine1::ScaledProx(s) => {
                let z = &c * (-1.0 / s);
                constrained_prox(spec.theta1.as_ref(), &z, beta * s * s, &spec.x_set)
            }
            ExactLine1::Unavailable(msg) => Err(AdmmError::NoClosedForm(msg.clone())),
        }
    }

    fn y_step(&self, x_next: &Vector, lambda: &Vector) -> Result<Vector> {
        let spec = self.spec;
        let beta = self.cfg.beta;
        // v = A x_{k+1} - b - lambda_k / beta
        let v = &spec.a_mat * x_next - &spec.rhs - lambda / beta;
        match &self.y_update {
            YUpdate::Prox(s) => Ok(spec.theta2.prox(&(&v * (-1.0 / s)), beta * s * s, &spec.y_set)),
            YUpdate::Quadratic { solver, weight } => {
                let q = spec.b_mat.tr_mul(&v) * beta;
                solver.solve(*weight, &q, &spec.y_set)
            }
            YUpdate::Unsupported(msg) => Err(AdmmError::UnsupportedB(msg.clone())),
        }
    }

    fn finish(&self, state: &IterateState, x: Vector) -> Result<IterateState> {
        let y = self.y_step(&x, &state.lambda)?;
        let r = self.spec.residual(&x, &y);
        let lambda = &state.lambda - r * self.cfg.beta;
        Ok(state.advance(x, y, lambda))
    }

    pub fn step_deterministic(&self, state: &IterateState) -> Result<IterateState> {
        let x = self.exact_x(state, None)?;
        self.finish(state, x)
    }

    pub fn step_linearized(&self, state: &IterateState) -> Result<IterateState> {
        let x = match (&self.cfg.variant, self.lin_r) {
            (_, Some(r)) => {
                let spec = self.spec;
                let beta = self.cfg.beta;
                let pen = &spec.a_mat * &state.x + self.x_shift(state);
                let z = &state.x - spec.a_mat.tr_mul(&pen) * (beta / r);
                constrained_prox(spec.theta1.as_ref(), &z, r, &spec.x_set)?
            }
            (Variant::Linearized(Linearization::Matrix(g)), None) if !g.iter().all(|v| *v == 0.0) => {
                self.exact_x(state, Some(g))?
            }
            _ => self.exact_x(state, None)?,
        };
        self.finish(state, x)
    }

    pub fn step_stochastic(&self, state: &IterateState, oracle: &mut StochasticOracle) -> Result<StepOutcome> {
        let xsub = self
            .xsub
            .as_ref()
            .ok_or_else(|| AdmmError::InvalidConfig("solver was not configured for the stochastic variant".into()))?;
        let eta = self.cfg.schedule.eta(state.k + 1, self.spec);
        let sample = oracle.sample_subgradient(&state.x);
        let x = xsub.solve(&sample.g, state, self.spec, eta)?;
        let grad = xsub.smooth_gradient(&x, &sample.g, state, self.spec);
        let next = self.finish(state, x)?;
        Ok(StepOutcome {
            state: next,
            eta: Some(eta),
            three_points: Some(ThreePointsData {
                grad_at_xstar: grad,
                u: state.x.clone(),
                s: 1.0 / eta,
            }),
            sample: Some(sample),
        })
    }

    /// One step of the configured variant.
    pub fn step(&self, state: &IterateState, oracle: Option<&mut StochasticOracle>) -> Result<StepOutcome> {
        match &self.cfg.variant {
            Variant::Deterministic => Ok(StepOutcome {
                state: self.step_deterministic(state)?,
                eta: None,
                sample: None,
                three_points: None,
            }),
            Variant::Linearized(_) => Ok(StepOutcome {
                state: self.step_linearized(state)?,
                eta: None,
                sample: None,
                three_points: None,
            }),
            Variant::Stochastic => {
                let oracle = oracle.ok_or_else(|| {
                    AdmmError::InvalidConfig("the stochastic variant needs an oracle".into())
                })?;
                self.step_stochastic(state, oracle)
            }
        }
    }

    /// Probe points for step `k`: X samples, and y/lambda samples in a ball around
    /// the new iterate.
    pub fn probes(&self, next: &IterateState) -> Vec<StackedW> {
        let spec = self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.probe_seed);
        rng.set_stream(next.k as u64);
        let ball = |center: &Vector, rng: &mut ChaCha8Rng| {
            let r = 1.0 + center.norm();
            center + FeasibleSet::Ball { radius: r }.sample(center.len(), rng)
        };
        (0..self.cfg.probe_count)
            .map(|_| StackedW {
                x: spec.x_set.sample(spec.d1(), &mut rng),
                y: spec.y_set.project(&ball(&next.y, &mut rng)),
                lambda: ball(&next.lambda, &mut rng),
            })
            .collect()
    }

    /// Worst normalized residual of every per-step inequality over the probes.
    pub fn check_step(&self, prev: &IterateState, out: &StepOutcome) -> Result<InvariantResiduals> {
        let spec = self.spec;
        let next = &out.state;
        let probes = self.probes(next);
        let dual = dual_identity_residual(prev, next, spec, self.cfg.beta).normalized();
        let mut y_opt = f64::NEG_INFINITY;
        let mut tp = out.three_points.as_ref().map(|_| f64::NEG_INFINITY);
        let mut l1 = match (&out.sample, out.eta) {
            (Some(_), Some(_)) => Some(f64::NEG_INFINITY),
            _ => None,
        };
        for w in &probes {
            y_opt = y_opt.max(y_optimality_residual(next, &w.y, spec).normalized());
            if let (Some(t), Some(d)) = (tp.as_mut(), out.three_points.as_ref()) {
                let (res, scale) = three_points_residual(&next.x, &d.u, &w.x, &d.grad_at_xstar, d.s);
                *t = t.max(res / scale.max(1.0));
            }
            if let (Some(l), Some(sample), Some(eta)) = (l1.as_mut(), out.sample.as_ref(), out.eta) {
                let inp = StepBoundInputs {
                    prev,
                    next,
                    g: &sample.g,
                    delta: &sample.delta,
                    eta,
                    beta: self.cfg.beta,
                };
                *l = l.max(step_bound_residual(inp, w, spec)?.normalized());
            }
        }
        Ok(InvariantResiduals {
            dual_identity: dual,
            y_optimality: y_opt,
            three_points: tp,
            step_bound: l1,
        })
    }
}

fn exact_line1(spec: &ProblemSpec, ata: &Matrix, g: Option<&Matrix>) -> ExactLine1 {
    if let Some(q) = spec.theta1.quadratic() {
        let mut s = &q.hessian + ata;
        if let Some(g) = g {
            s += g;
        }
        let solver = QuadraticSolver::new(s);
        if spec.x_set.is_whole() && !(solver.min_eigenvalue() > 0.0) {
            return ExactLine1::Unavailable(
                "the x-update is not strictly convex on the whole space; use the stochastic or linearized variant".into(),
            );
        }
        return ExactLine1::Quadratic(solver);
    }
    if g.is_none() && spec.a_mat.is_square() {
        if let Some(s) = scaled_identity(&spec.a_mat) {
            if s != 0.0 {
                return ExactLine1::ScaledProx(s);
            }
        }
    }
    ExactLine1::Unavailable(format!(
        "no closed-form x-update for {:?} with this A; use the linearized or stochastic variant",
        spec.theta1
    ))
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// Stepsize used to reach iterate `k` (`NaN` for the exact variants).
    pub eta: f64,
    pub shifted: ErrRho,
    pub aligned: ErrRho,
    pub step_ms: f64,
    pub invariants: Option<InvariantResiduals>,
}

impl StepRecord {
    pub fn err(&self, averaging: Averaging) -> &ErrRho {
        match averaging {
            Averaging::Shifted => &self.shifted,
            Averaging::Aligned => &self.aligned,
        }
    }
}

/// A step whose invariant residual exceeded the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub k: usize,
    pub residuals: InvariantResiduals,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_state: IterateState,
    pub averaging: Averaging,
    /// Largest normalized invariant residual per check over the whole run.
    pub worst: Option<InvariantResiduals>,
    pub violations: Vec<Violation>,
    pub total_ms: f64,
}

impl Trajectory {
    /// `Err_rho` under the configured averaging convention, one value per record.
    pub fn primary(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.err(self.averaging).value).collect()
    }

    pub fn ks(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.k).collect()
    }

    pub fn record_at(&self, k: usize) -> Option<&StepRecord> {
        self.records
            .binary_search_by_key(&k, |r| r.k)
            .ok()
            .map(|i| &self.records[i])
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub partial: Box<Trajectory>,
    pub error: AdmmError,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run stopped after {} steps: {}", self.partial.final_state.k, self.error)
    }
}

impl std::error::Error for RunFailure {}

fn merge_worst(acc: &mut Option<InvariantResiduals>, r: &InvariantResiduals) {
    let opt_max = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    };
    *acc = Some(match acc.take() {
        None => *r,
        Some(a) => InvariantResiduals {
            dual_identity: a.dual_identity.max(r.dual_identity),
            y_optimality: a.y_optimality.max(r.y_optimality),
            three_points: opt_max(a.three_points, r.three_points),
            step_bound: opt_max(a.step_bound, r.step_bound),
        },
    });
}

/// Runs `cfg.t_max` steps from the configured start.
pub fn run(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    oracle: Option<&StochasticOracle>,
    theta_star: Option<f64>,
) -> std::result::Result<Trajectory, RunFailure> {
    run_from(spec, cfg, oracle, theta_star, None)
}

/// Like [`run`], starting from an explicit state when given.
pub fn run_from(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    oracle: Option<&StochasticOracle>,
    theta_star: Option<f64>,
    start: Option<IterateState>,
) -> std::result::Result<Trajectory, RunFailure> {
    let averaging = cfg.effective_averaging();
    let empty = |state: IterateState| Trajectory {
        records: Vec::new(),
        final_state: state,
        averaging,
        worst: None,
        violations: Vec::new(),
        total_ms: 0.0,
    };
    let solver = match Solver::new(spec, cfg.clone()) {
        Ok(s) => s,
        Err(error) => {
            let state = start.unwrap_or_else(|| cfg.initial_state(spec));
            return Err(RunFailure {
                partial: Box::new(empty(state)),
                error,
            });
        }
    };
    let mut state = start.unwrap_or_else(|| solver.initial_state());
    let mut oracle = oracle.cloned();
    let mut traj = empty(state.clone());
    let record_at: Option<Vec<usize>> = match &cfg.record {
        RecordPolicy::Every => None,
        RecordPolicy::At(ks) => {
            let mut ks = ks.clone();
            ks.sort_unstable();
            ks.dedup();
            Some(ks)
        }
    };
    let mut next_record = 0usize;
    let start_all = Instant::now();
    let fail = |traj: Trajectory, state: IterateState, error: AdmmError| {
        let mut partial = traj;
        partial.final_state = state;
        Err(RunFailure {
            partial: Box::new(partial),
            error,
        })
    };
    for _ in 0..cfg.t_max {
        let t0 = Instant::now();
        let out = match solver.step(&state, oracle.as_mut()) {
            Ok(o) => o,
            Err(e) => return fail(traj, state, e),
        };
        let step_ms = t0.elapsed().as_secs_f64() * 1e3;
        let invariants = if cfg.check_invariants {
            match solver.check_step(&state, &out) {
                Ok(r) => {
                    merge_worst(&mut traj.worst, &r);
                    if !r.passes(cfg.invariant_tol) {
                        traj.violations.push(Violation {
                            k: out.state.k,
                            residuals: r,
                        });
                    }
                    Some(r)
                }
                Err(e) => return fail(traj, out.state, e),
            }
        } else {
            None
        };
        state = out.state;
        let k = state.k;
        let wanted = match &record_at {
            None => true,
            Some(ks) => {
                while next_record < ks.len() && ks[next_record] < k {
                    next_record += 1;
                }
                next_record < ks.len() && ks[next_record] == k
            }
        };
        if wanted {
            let eval = |avg: Averaging| -> ErrRho {
                let (x, y) = state.u_bar(avg).expect("k >= 1");
                match theta_star {
                    Some(ts) => err_rho_with_value((&x, &y), spec, ts, cfg.rho).unwrap_or_else(|_| ErrRho::nan()),
                    None => {
                        let feasibility = spec.residual(&x, &y).norm();
                        ErrRho {
                            gap: f64::NAN,
                            feasibility,
                            value: f64::NAN,
                        }
                    }
                }
            };
            traj.records.push(StepRecord {
                k,
                eta: out.eta.unwrap_or(f64::NAN),
                shifted: eval(Averaging::Shifted),
                aligned: eval(Averaging::Aligned),
                step_ms,
                invariants,
            });
        }
    }
    traj.total_ms = start_all.elapsed().as_secs_f64() * 1e3;
    traj.final_state = state;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{L1Norm, QuadraticForm};
    use crate::oracle::{NoiseKind, OracleModel};
    use crate::prox::ProxCatalog;
    use crate::types::Constants;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    /// `theta1 = x^2/2`, `theta2 = y^2/2`, `x - y = 0`.
    fn one_d() -> ProblemSpec {
        ProblemSpec::new(
            Arc::new(QuadraticForm::isotropic(1, 1.0)),
            ProxCatalog::SquaredL2 { weight: 1.0 },
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, -1.0),
            v(&[0.0]),
            FeasibleSet::Ball { radius: 5.0 },
            FeasibleSet::whole(),
            Constants::new(6.0, 0.0).with_lipschitz(1.0).with_mu(1.0),
        )
        .unwrap()
    }

    fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
            .unwrap()
    }

    #[test]
    fn deterministic_step_by_hand() {
        let spec = one_d();
        let solver = Solver::new(&spec, SolverConfig::deterministic(1.0, 1)).unwrap();
        let s0 = IterateState::new(v(&[1.0]), v(&[0.0]), 1);
        let s1 = solver.step_deterministic(&s0).unwrap();
        // Line 1: argmin x^2/2 + (x - 0)^2/2, Line 2: argmin y^2/2 + (0 - y)^2/2
        let x1 = grid_argmin(|x| 0.5 * x * x + 0.5 * x * x, -2.0, 2.0, 40_000);
        let y1 = grid_argmin(|y| 0.5 * y * y + 0.5 * (x1 - y).powi(2), -2.0, 2.0, 40_000);
        assert!((s1.x[0] - x1).abs() < 1e-4 && s1.x[0].abs() < 1e-15);
        assert!((s1.y[0] - y1).abs() < 1e-4 && s1.y[0].abs() < 1e-15);
        assert_eq!(s1.lambda[0], 0.0);
    }

    #[test]
    fn stochastic_step_with_exact_gradient() {
        let spec = one_d();
        let cfg = SolverConfig::stochastic(1.0, StepSchedule::Constant { eta: 1.0 }, 1);
        let solver = Solver::new(&spec, cfg).unwrap();
        let model = OracleModel::AdditiveNoise {
            base: spec.theta1.clone(),
            noise: NoiseKind::Gaussian,
            sigma: 0.0,
        };
        let mut oracle = StochasticOracle::new(model, 1);
        let s0 = IterateState::new(v(&[1.0]), v(&[0.0]), 1);
        let out = solver.step_stochastic(&s0, &mut oracle).unwrap();
        // g = theta1'(1) = 1: argmin x + (x - 0)^2/2 + (x - 1)^2/2
        let brute = grid_argmin(|x| x + 0.5 * x * x + 0.5 * (x - 1.0).powi(2), -2.0, 2.0, 400_000);
        assert!((out.state.x[0] - brute).abs() < 1e-5);
        assert!(out.state.x[0].abs() < 1e-15);
    }

    #[test]
    fn scalar_linearization_is_a_prox_gradient_step() {
        // theta1 = ||x||_1, non-identity A, 2-D brute force
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let spec = ProblemSpec::new(
            Arc::new(L1Norm { dim: 2, weight: 1.0 }),
            ProxCatalog::Zero,
            a.clone(),
            -Matrix::identity(2, 2),
            v(&[0.2, -0.1]),
            FeasibleSet::whole_with_diameter(10.0),
            FeasibleSet::whole(),
            Constants::new(3.0, 0.0),
        )
        .unwrap();
        let beta = 0.7;
        let r = beta * ata_norm(&spec) * 1.1;
        let solver = Solver::new(&spec, SolverConfig::linearized(Linearization::Scalar(r), beta, 1)).unwrap();
        let state = IterateState::new(v(&[0.4, -0.8]), v(&[0.3, 0.1]), 2).with_lambda(v(&[0.5, -0.2]));
        let next = solver.step_linearized(&state).unwrap();

        let pen = spec.residual(&state.x, &state.y) - &state.lambda / beta;
        let grad = a.tr_mul(&pen) * beta;
        let obj = |x: &Vector| x.lp_norm(1) + grad.dot(&(x - &state.x)) + 0.5 * r * (x - &state.x).norm_squared();
        let (mut best, mut arg) = (f64::INFINITY, v(&[0.0, 0.0]));
        let h = 1e-4;
        for i in 0..=4000 {
            for j in 0..=4000 {
                let p = v(&[next.x[0] - 0.2 + h * i as f64, next.x[1] - 0.2 + h * j as f64]);
                let f = obj(&p);
                if f < best {
                    best = f;
                    arg = p;
                }
            }
        }
        assert!((&arg - &next.x).amax() <= 2e-4, "{arg} vs {}", next.x);
    }

    #[test]
    fn zero_linearization_matches_deterministic() {
        let spec = one_d();
        let det = Solver::new(&spec, SolverConfig::deterministic(2.0, 1)).unwrap();
        let lin = Solver::new(
            &spec,
            SolverConfig::linearized(Linearization::Matrix(Matrix::zeros(1, 1)), 2.0, 1),
        )
        .unwrap();
        let mut a = IterateState::new(v(&[3.0]), v(&[-1.0]), 1);
        let mut b = a.clone();
        for _ in 0..100 {
            a = det.step_deterministic(&a).unwrap();
            b = lin.step_linearized(&b).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_small_r_and_indefinite_g() {
        let spec = one_d();
        let bad_r = SolverConfig::linearized(Linearization::Scalar(0.5), 1.0, 1);
        assert!(matches!(bad_r.validate(&spec), Err(AdmmError::NotPsd(_))));
        let bad_g = SolverConfig::linearized(Linearization::Matrix(Matrix::from_element(1, 1, -1.0)), 1.0, 1);
        assert!(matches!(bad_g.validate(&spec), Err(AdmmError::NotPsd(_))));
    }

    #[test]
    fn empty_run_keeps_the_start() {
        let spec = one_d();
        let traj = run(&spec, &SolverConfig::deterministic(1.0, 0), None, Some(0.0)).unwrap();
        assert!(traj.records.is_empty());
        assert_eq!(traj.final_state, IterateState::zeros(&spec));
    }

    #[test]
    fn stochastic_without_oracle_fails_with_partial_trajectory() {
        let spec = one_d();
        let cfg = SolverConfig::stochastic(1.0, StepSchedule::Convex, 3);
        let err = run(&spec, &cfg, None, None).unwrap_err();
        assert_eq!(err.partial.final_state.k, 0);
        assert!(matches!(err.error, AdmmError::InvalidConfig(_)));
    }
}
