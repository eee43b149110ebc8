//! Replication runner: builds the preset, caches the reference point, runs R
//! seeded replications on a worker pool and writes the report files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{BoundKind, ExperimentConfig, VariantName};
pub use super::output::ensure_writable;
use super::output::{
    fingerprint, read_reference, trajectory_path, write_aggregate_csv, write_reference,
    write_trajectory_csv, AggregateCurves, CachedReference,
};
use crate::error::{AdmmError, Result};
use crate::metrics::{
    compute_reference, estimate_expectation_by, fit_rate, high_prob_check, most_negative, BoundInputs,
    ExpectationCurve, HighProbCheck, RateFit, ReferenceSolution,
};
use crate::presets::{build, Preset};
use crate::solvers::{run, InvariantResiduals, Trajectory, Violation};
use crate::types::Averaging;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "SADMM_OUT_DIR";

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const REPORT_FILE: &str = "report.json";
pub const INVARIANT_LOG: &str = "invariants.log";
pub const REFERENCE_FILE: &str = "reference.txt";

/// Command-line overrides of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Takes precedence over the environment variable and the config.
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Turns invariant probes on regardless of the config.
    pub check: bool,
    pub seed: Option<u64>,
}

/// `--out`, then [`OUT_DIR_ENV`], then `output.dir`.
pub fn resolve_out_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Largest `mean - bound - 3 stderr` over the grid.
    pub worst_margin: f64,
    pub worst_t: usize,
    pub violations: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceReport {
    pub method: String,
    pub theta_star: f64,
    pub certified_tolerance: f64,
    pub d_y_star_b: f64,
    pub from_cache: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub enabled: bool,
    pub worst: Option<InvariantResiduals>,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureReport {
    pub replication: usize,
    pub steps_completed: usize,
    pub error: String,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub preset: String,
    pub variant: VariantName,
    pub schedule: super::config::ScheduleName,
    pub averaging: Averaging,
    pub replications: usize,
    pub t_max: usize,
    pub seed: u64,
    pub constants: BoundInputs,
    pub reference: ReferenceReport,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub bound: Option<BoundReport>,
    pub high_probability: Vec<HighProbCheck>,
    pub invariants: InvariantReport,
    /// Smallest `Err_rho` seen in any record (0 when none is negative).
    pub most_negative_err: f64,
    pub failures: Vec<FailureReport>,
    pub criteria: Vec<CriterionResult>,
    pub exit_ok: bool,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: Report,
    /// Primary `Err_rho` curve over the record grid.
    pub curve: Option<ExpectationCurve>,
    pub trajectories: Vec<Trajectory>,
}

impl RunOutcome {
    pub fn exit_ok(&self) -> bool {
        self.report.exit_ok
    }
}

fn problem_fingerprint(preset: &Preset) -> String {
    let desc = serde_json::json!({
        "preset": preset.name.as_str(),
        "params": preset.params,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fingerprint(&desc.to_string())
}

/// Reference point for `preset`, read from `dir` when a matching cache exists
/// and computed (then cached) otherwise.
pub fn cached_reference(preset: &Preset, dir: &Path) -> Result<(ReferenceSolution, bool)> {
    let path = dir.join(REFERENCE_FILE);
    let fp = problem_fingerprint(preset);
    if let Some(sol) = read_reference(&path, &fp) {
        return Ok((sol, true));
    }
    let sol = compute_reference(&preset.spec)?;
    write_reference(
        &path,
        &CachedReference {
            fingerprint: fp,
            solution: sol.clone(),
        },
    )?;
    Ok((sol, false))
}

fn bound_fn(kind: BoundKind, b: &BoundInputs) -> Option<Box<dyn Fn(f64) -> f64 + '_>> {
    match kind {
        BoundKind::Auto | BoundKind::None => None,
        BoundKind::Convex => Some(Box::new(move |t| b.convex(t))),
        BoundKind::StronglyConvex => Some(Box::new(move |t| b.strongly_convex(t))),
        BoundKind::Deterministic => Some(Box::new(move |t| b.deterministic(t))),
        BoundKind::Smooth => Some(Box::new(move |t| b.smooth(t))),
    }
}

fn check_bound(kind: BoundKind, bounds: &BoundInputs, curve: &ExpectationCurve) -> Option<BoundReport> {
    let f = bound_fn(kind, bounds)?;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_t = 0;
    let mut violations = 0;
    for ((t, m), se) in curve.t.iter().zip(&curve.mean).zip(&curve.stderr) {
        let margin = m - f(*t as f64) - 3.0 * se;
        if !(margin <= 0.0) {
            violations += 1;
        }
        if margin > worst_margin || margin.is_nan() {
            worst_margin = margin;
            worst_t = *t;
        }
    }
    Some(BoundReport {
        kind,
        worst_margin,
        worst_t,
        violations,
        pass: violations == 0,
    })
}

fn log_violations(path: &Path, per_rep: &[(usize, &[Violation])]) -> Result<usize> {
    let mut text = String::new();
    let mut n = 0;
    for (rep, vs) in per_rep {
        for v in vs.iter() {
            let r = &v.residuals;
            let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into());
            text.push_str(&format!(
                "replication={rep} k={} dual_identity={:e} y_optimality={:e} three_points={} step_bound={}\n",
                v.k,
                r.dual_identity,
                r.y_optimality,
                opt(r.three_points),
                opt(r.step_bound)
            ));
            n += 1;
        }
    }
    fs::write(path, text).map_err(|e| AdmmError::Io(format!("{}: {e}", path.display())))?;
    Ok(n)
}

fn merge(acc: Option<InvariantResiduals>, r: Option<InvariantResiduals>) -> Option<InvariantResiduals> {
    let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    };
    match (acc, r) {
        (Some(a), Some(b)) => Some(InvariantResiduals {
            dual_identity: a.dual_identity.max(b.dual_identity),
            y_optimality: a.y_optimality.max(b.y_optimality),
            three_points: opt(a.three_points, b.three_points),
            step_bound: opt(a.step_bound, b.step_bound),
        }),
        (a, b) => a.or(b),
    }
}

/// Runs a validated config and writes trajectories, the aggregate curve,
/// `report.json`, `invariants.log` and the reference cache.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let out_dir = resolve_out_dir(cfg, opts);
    ensure_writable(&out_dir)?;
    fs::create_dir_all(out_dir.join("trajectories"))?;

    let seed = opts.seed.unwrap_or(cfg.experiment.seed);
    let preset = build(cfg.preset, &cfg.problem)?;
    let spec = &preset.spec;
    let (reference, from_cache) = cached_reference(&preset, &out_dir)?;

    let check = opts.check || cfg.solver.check_invariants;
    let base = cfg.solver_config(spec, check);
    let t_grid = cfg.t_grid();
    let y0 = base.initial_state(spec).y;
    let d_y_star_b = reference.d_y_star_b(spec, &y0);
    let bounds = BoundInputs::new(spec, cfg.solver.beta, cfg.solver.rho, d_y_star_b);
    let averaging = cfg.effective_averaging();
    let stochastic = cfg.solver.variant == VariantName::Stochastic;
    let oracle = preset.oracle(seed);

    let workers = opts
        .workers
        .or(cfg.experiment.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AdmmError::InvalidConfig(format!("worker pool: {e}")))?;

    let r_count = cfg.experiment.replications;
    let results: Vec<_> = pool.install(|| {
        (0..r_count)
            .into_par_iter()
            .map(|r| {
                let mut scfg = base.clone();
                scfg.probe_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64);
                let orc = oracle.with_stream(r as u64);
                run(spec, &scfg, stochastic.then_some(&orc), Some(reference.theta_star))
            })
            .collect()
    });

    // single-threaded from here on
    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    let mut worst = None;
    let mut violation_sets: Vec<(usize, Vec<Violation>)> = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(traj) => {
                write_trajectory_csv(&trajectory_path(&out_dir, r, false), &traj)?;
                worst = merge(worst, traj.worst);
                violation_sets.push((r, traj.violations.clone()));
                trajectories.push(traj);
            }
            Err(fail) => {
                write_trajectory_csv(&trajectory_path(&out_dir, r, true), &fail.partial)?;
                worst = merge(worst, fail.partial.worst);
                violation_sets.push((r, fail.partial.violations.clone()));
                failures.push(FailureReport {
                    replication: r,
                    steps_completed: fail.partial.final_state.k,
                    error: fail.error.to_string(),
                });
            }
        }
    }
    let refs: Vec<(usize, &[Violation])> = violation_sets.iter().map(|(r, v)| (*r, v.as_slice())).collect();
    let n_violations = log_violations(&out_dir.join(INVARIANT_LOG), &refs)?;

    let mut curve = None;
    let mut fit = None;
    let mut fit_error = None;
    let mut bound = None;
    let mut high_probability = Vec::new();
    let mut criteria = Vec::new();

    if !trajectories.is_empty() {
        let by = |avg: Averaging, which: usize| {
            estimate_expectation_by(&trajectories, &t_grid, move |rec| {
                let e = rec.err(avg);
                [e.gap, e.feasibility, e.value][which]
            })
        };
        let mut curves = Vec::with_capacity(6);
        for avg in [Averaging::Shifted, Averaging::Aligned] {
            for which in 0..3 {
                curves.push(by(avg, which)?);
            }
        }
        write_aggregate_csv(
            &out_dir.join(AGGREGATE_FILE),
            &AggregateCurves {
                curves: [&curves[0], &curves[1], &curves[2], &curves[3], &curves[4], &curves[5]],
            },
        )?;
        let primary = match averaging {
            Averaging::Shifted => curves.swap_remove(2),
            Averaging::Aligned => curves.swap_remove(5),
        };

        let fit_ts = cfg.fit_points(&t_grid);
        let pts: Vec<(f64, f64)> = primary
            .t
            .iter()
            .zip(&primary.mean)
            .filter(|(t, _)| fit_ts.binary_search(t).is_ok())
            .map(|(t, m)| (*t as f64, *m))
            .collect();
        match fit_rate(&pts, cfg.fit_window()) {
            Ok(f) => fit = Some(f),
            Err(e) => fit_error = Some(e.to_string()),
        }
        if let Some([lo, hi]) = cfg.checks.slope_band {
            let pass = fit.is_some_and(|f| f.slope >= lo && f.slope <= hi);
            criteria.push(CriterionResult {
                name: "slope_band".into(),
                pass,
                detail: match (&fit, &fit_error) {
                    (Some(f), _) => format!("slope {:.4} in [{lo}, {hi}]", f.slope),
                    (None, e) => format!("no fit: {}", e.as_deref().unwrap_or("")),
                },
            });
        }
        if let Some(max) = cfg.checks.slope_max {
            let pass = fit.is_some_and(|f| f.slope <= max);
            criteria.push(CriterionResult {
                name: "slope_max".into(),
                pass,
                detail: match &fit {
                    Some(f) => format!("slope {:.4} <= {max}", f.slope),
                    None => format!("no fit: {}", fit_error.as_deref().unwrap_or("")),
                },
            });
        }
        bound = check_bound(cfg.bound_kind(), &bounds, &primary);
        if let Some(b) = &bound {
            criteria.push(CriterionResult {
                name: "bound".into(),
                pass: b.pass,
                detail: format!(
                    "{} of {} grid points above the bound; worst margin {:e} at t = {}",
                    b.violations,
                    primary.t.len(),
                    b.worst_margin,
                    b.worst_t
                ),
            });
        }
        let t_hp = cfg.high_prob_t();
        for &omega in &cfg.experiment.omega {
            let errs: Vec<f64> = trajectories
                .iter()
                .filter_map(|tr| tr.record_at(t_hp).map(|r| r.err(averaging).value))
                .collect();
            let hp = high_prob_check(&errs, t_hp, omega, &bounds, oracle.is_bounded())?;
            criteria.push(CriterionResult {
                name: format!("high_probability_omega_{omega}"),
                pass: hp.pass,
                detail: format!(
                    "exceed fraction {:.4} <= {:.4} + {:.4}",
                    hp.exceed_fraction, hp.probability_bound, hp.slack
                ),
            });
            high_probability.push(hp);
        }
        curve = Some(primary);
    }

    if check {
        criteria.push(CriterionResult {
            name: "invariants".into(),
            pass: n_violations == 0,
            detail: format!(
                "{n_violations} violations; worst normalized residual {:e}",
                worst.map(|w| w.worst()).unwrap_or(f64::NAN)
            ),
        });
    }
    criteria.push(CriterionResult {
        name: "replications".into(),
        pass: failures.is_empty(),
        detail: format!("{} of {r_count} completed", trajectories.len()),
    });

    let most_negative_err = most_negative(
        trajectories
            .iter()
            .flat_map(|t| t.records.iter().map(|r| r.err(averaging).value)),
    );
    let exit_ok = criteria.iter().all(|c| c.pass);
    let report = Report {
        preset: cfg.preset.as_str().into(),
        variant: cfg.solver.variant,
        schedule: cfg.solver.schedule,
        averaging,
        replications: r_count,
        t_max: cfg.solver.t_max,
        seed,
        constants: bounds,
        reference: ReferenceReport {
            method: reference.method.name().into(),
            theta_star: reference.theta_star,
            certified_tolerance: reference.certified_tolerance,
            d_y_star_b,
            from_cache,
        },
        fit,
        fit_error,
        bound,
        high_probability,
        invariants: InvariantReport {
            enabled: check,
            worst,
            violations: n_violations,
        },
        most_negative_err,
        failures,
        criteria,
        exit_ok,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| AdmmError::Io(e.to_string()))?;
    fs::write(out_dir.join(REPORT_FILE), json + "\n")?;
    Ok(RunOutcome {
        out_dir,
        report,
        curve,
        trajectories,
    })
}
