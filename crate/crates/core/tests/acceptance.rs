//! Full-scale acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::path::Path;
use std::time::Instant;

use stochastic_admm::harness::{run_experiment, ExperimentConfig, RunOptions, RunOutcome, ScheduleName, VariantName};
use stochastic_admm::metrics::{admm_reference, grid_search_reference, kkt_reference, ReferenceOptions};
use stochastic_admm::presets::{build, OracleChoice, PresetName, PresetParams};
use stochastic_admm::solvers::{run, Linearization, RecordPolicy, Solver, SolverConfig, StepSchedule};
use stochastic_admm::types::{IterateState, Matrix};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn experiment(dir: &Path, cfg: &ExperimentConfig) -> Result<RunOutcome, String> {
    run_experiment(
        cfg,
        &RunOptions {
            out_dir: Some(dir.to_path_buf()),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())
}

fn criteria_summary(out: &RunOutcome) -> String {
    out.report
        .criteria
        .iter()
        .map(|c| format!("[{} {}: {}]", if c.pass { "ok" } else { "FAILED" }, c.name, c.detail))
        .collect::<Vec<_>>()
        .join(" ")
}

fn verdict(out: &RunOutcome) -> Outcome {
    let s = criteria_summary(out);
    if out.exit_ok() {
        Ok(s)
    } else {
        Err(s)
    }
}

fn convex_rate(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_preset(PresetName::LassoSplit);
    cfg.solver.schedule = ScheduleName::Convex;
    cfg.solver.t_max = 100_000;
    cfg.solver.rho = 1.0;
    cfg.experiment.replications = 50;
    cfg.experiment.fit_window = Some([1e3, 1e5]);
    cfg.checks.slope_band = Some([-0.65, -0.35]);
    verdict(&experiment(dir, &cfg)?)
}

fn strongly_convex_rate(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_preset(PresetName::StronglyConvexLasso);
    cfg.problem.mu = Some(0.1);
    cfg.solver.schedule = ScheduleName::StronglyConvex;
    cfg.solver.t_max = 100_000;
    cfg.experiment.replications = 50;
    cfg.experiment.fit_window = Some([1e3, 1e5]);
    cfg.checks.slope_band = Some([-1.15, -0.70]);
    verdict(&experiment(dir, &cfg)?)
}

fn deterministic_rate(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_preset(PresetName::LassoSplit);
    cfg.solver.variant = VariantName::Deterministic;
    cfg.solver.t_max = 10_000;
    cfg.experiment.fit_window = Some([1e2, 1e4]);
    cfg.checks.slope_max = Some(-0.9);
    let out = experiment(dir, &cfg)?;
    let n = out.curve.as_ref().map(|c| c.t.len()).unwrap_or(0);
    if n != cfg.solver.t_max {
        return Err(format!("bound checked at {n} iterations, expected every t"));
    }
    verdict(&out)
}

fn smooth_schedule(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_preset(PresetName::LassoSplit);
    cfg.problem.oracle = Some(OracleChoice::Exact);
    cfg.solver.schedule = ScheduleName::Smooth;
    cfg.solver.t_max = 100_000;
    cfg.experiment.fit_window = Some([1e3, 1e5]);
    cfg.checks.slope_max = Some(-0.9);
    let out = experiment(dir, &cfg)?;
    if out.report.averaging != stochastic_admm::types::Averaging::Aligned {
        return Err("smooth schedule did not use aligned averaging".into());
    }
    let l = out.report.constants.lipschitz.ok_or("no Lipschitz constant")?;
    let worst_eta = out.trajectories[0]
        .records
        .iter()
        .map(|r| (r.eta * l - 1.0).abs())
        .fold(0.0, f64::max);
    if worst_eta > 1e-12 {
        return Err(format!("eta deviates from 1/L by a relative {worst_eta:e}"));
    }
    verdict(&out).map(|s| format!("eta = 1/L at every step; {s}"))
}

fn step_bound(dir: &Path) -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    for preset in [PresetName::OneD, PresetName::LassoSplit] {
        let mut cfg = ExperimentConfig::for_preset(preset);
        cfg.solver.t_max = 1000;
        cfg.solver.check_invariants = true;
        cfg.solver.probe_count = 5;
        let out = experiment(&dir.join(preset.as_str()), &cfg)?;
        let worst = out.report.invariants.worst.ok_or("no invariant residuals recorded")?;
        let sb = worst.step_bound.ok_or("per-step bound not evaluated")?;
        let line = format!("{preset}: worst {sb:e}, {} violations", out.report.invariants.violations);
        if sb > 1e-9 || !out.exit_ok() {
            return Err(line);
        }
        lines.push(line);
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 30.0 {
        return Err(format!("took {secs:.1} s"));
    }
    Ok(format!("{} ({secs:.1} s)", lines.join("; ")))
}

fn run_checked(preset: PresetName, probes: usize, steps: usize) -> Result<stochastic_admm::solvers::Trajectory, String> {
    let p = build(preset, &PresetParams::default()).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::stochastic(1.0, StepSchedule::Convex, steps)
        .with_checks(probes)
        .with_record(RecordPolicy::At(vec![steps]));
    run(&p.spec, &cfg, Some(&p.oracle(3)), None).map_err(|e| e.to_string())
}

fn three_points() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for preset in PresetName::ALL {
        let tr = run_checked(preset, 5, 1000)?;
        let tp = tr
            .worst
            .and_then(|w| w.three_points)
            .ok_or_else(|| format!("{preset}: relation not evaluated"))?;
        if tp > 1e-9 {
            return Err(format!("{preset}: worst residual {tp:e}"));
        }
        worst = worst.max(tp);
    }
    Ok(format!("all {} presets, worst normalized residual {worst:e}", PresetName::ALL.len()))
}

fn structural() -> Outcome {
    let mut dual = 0f64;
    let mut y_opt = f64::NEG_INFINITY;
    for preset in PresetName::ALL {
        let tr = run_checked(preset, 20, 200)?;
        let w = tr.worst.ok_or("no residuals")?;
        dual = dual.max(w.dual_identity);
        y_opt = y_opt.max(w.y_optimality);
    }
    for preset in [PresetName::LassoSplit, PresetName::RidgeSplit, PresetName::TwoD] {
        let p = build(preset, &PresetParams::default()).map_err(|e| e.to_string())?;
        let cfg = SolverConfig::deterministic(1.0, 200).with_checks(20);
        let tr = run(&p.spec, &cfg, None, None).map_err(|e| e.to_string())?;
        let w = tr.worst.ok_or("no residuals")?;
        dual = dual.max(w.dual_identity);
        y_opt = y_opt.max(w.y_optimality);
    }
    if dual > 1e-14 {
        return Err(format!("dual identity residual {dual:e}"));
    }
    if y_opt > 1e-9 {
        return Err(format!("y-optimality residual {y_opt:e}"));
    }

    let mut g0 = 0f64;
    for preset in [PresetName::LassoSplit, PresetName::RidgeSplit, PresetName::TwoD, PresetName::OneD] {
        let p = build(preset, &PresetParams::default()).map_err(|e| e.to_string())?;
        let d1 = p.spec.d1();
        let det = Solver::new(&p.spec, SolverConfig::deterministic(1.0, 100)).map_err(|e| e.to_string())?;
        let lin = Solver::new(
            &p.spec,
            SolverConfig::linearized(Linearization::Matrix(Matrix::zeros(d1, d1)), 1.0, 100),
        )
        .map_err(|e| e.to_string())?;
        let (mut a, mut b) = (det.initial_state(), lin.initial_state());
        for _ in 0..100 {
            a = det.step_deterministic(&a).map_err(|e| e.to_string())?;
            b = lin.step_linearized(&b).map_err(|e| e.to_string())?;
            let diff = (&a.x - &b.x)
                .amax()
                .max((&a.y - &b.y).amax())
                .max((&a.lambda - &b.lambda).amax());
            g0 = g0.max(diff);
        }
    }
    if g0 > 1e-12 {
        return Err(format!("G = 0 linearized differs from deterministic by {g0:e}"));
    }

    let mut fixed = 0f64;
    for preset in [PresetName::OneD, PresetName::TwoD, PresetName::RidgeSplit] {
        let p = build(preset, &PresetParams::default()).map_err(|e| e.to_string())?;
        let r = kkt_reference(&p.spec).map_err(|e| e.to_string())?;
        let lambda = r.lambda_star.clone().ok_or("no multiplier")?;
        let scale = 1f64.max(r.x.norm() + r.y.norm() + lambda.norm());
        let solver = Solver::new(&p.spec, SolverConfig::deterministic(1.0, 100)).map_err(|e| e.to_string())?;
        let mut s = IterateState::new(r.x.clone(), r.y.clone(), p.spec.m()).with_lambda(lambda);
        for _ in 0..100 {
            let n = solver.step_deterministic(&s).map_err(|e| e.to_string())?;
            let mv = (&n.x - &s.x).norm() + (&n.y - &s.y).norm() + (&n.lambda - &s.lambda).norm();
            fixed = fixed.max(mv / scale);
            s = n;
        }
    }
    if fixed > 1e-10 {
        return Err(format!("step from the saddle point moves by {fixed:e}"));
    }
    Ok(format!(
        "dual identity {dual:e}, y-optimality {y_opt:e} (20 probes), G = 0 gap {g0:e}, fixed-point step {fixed:e}"
    ))
}

fn high_probability(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_preset(PresetName::LassoSplit);
    cfg.solver.t_max = 10_000;
    cfg.experiment.replications = 200;
    cfg.experiment.omega = vec![1.0, 2.0];
    cfg.experiment.high_prob_t = Some(10_000);
    cfg.checks.bound = stochastic_admm::harness::BoundKind::None;
    let out = experiment(dir, &cfg)?;
    if out.report.high_probability.len() != 2 {
        return Err("tail check did not run for both omegas".into());
    }
    verdict(&out)
}

fn reference_agreement() -> Outcome {
    let mut worst = 0f64;
    for preset in PresetName::ALL.into_iter().filter(|p| p.is_quadratic()) {
        let p = build(preset, &PresetParams::default()).map_err(|e| e.to_string())?;
        let kkt = kkt_reference(&p.spec).map_err(|e| format!("{preset}: {e}"))?;
        let admm = admm_reference(&p.spec, &ReferenceOptions::default()).map_err(|e| format!("{preset}: {e}"))?;
        let diff = (kkt.theta_star - admm.theta_star).abs();
        if diff > 1e-7 {
            return Err(format!("{preset}: objectives differ by {diff:e}"));
        }
        worst = worst.max(diff);
    }
    let p = build(PresetName::TwoD, &PresetParams::default()).map_err(|e| e.to_string())?;
    let kkt = kkt_reference(&p.spec).map_err(|e| e.to_string())?;
    let resolution = 1e-6;
    let grid = grid_search_reference(&p.spec, &kkt.x.map(|_| 0.0), p.spec.d_x() / 2.0, resolution)
        .map_err(|e| e.to_string())?;
    let dx = (&grid.x - &kkt.x).amax();
    let dtheta = grid.theta_star - kkt.theta_star;
    if dx > resolution || !(-1e-12..=1e-9).contains(&dtheta) {
        return Err(format!("grid point off by {dx:e}, objective gap {dtheta:e}"));
    }
    Ok(format!(
        "KKT vs long ADMM worst objective gap {worst:e}; grid search within {dx:e} of the KKT point"
    ))
}

fn determinism(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_preset(PresetName::LassoSplit);
    cfg.solver.t_max = 5000;
    cfg.experiment.replications = 8;
    cfg.experiment.seed = 17;
    let mut bytes = Vec::new();
    for (i, workers) in [1usize, 3].into_iter().enumerate() {
        let d = dir.join(format!("run{i}"));
        run_experiment(
            &cfg,
            &RunOptions {
                out_dir: Some(d.clone()),
                workers: Some(workers),
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(d.join("aggregate.csv")).map_err(|e| e.to_string())?);
    }
    if bytes[0] == bytes[1] {
        Ok(format!("aggregate CSV identical across runs ({} bytes)", bytes[0].len()))
    } else {
        Err("aggregate CSV differs between runs".into())
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let d = |s: &str| tmp.path().join(s);
    let criteria: Vec<Criterion> = vec![
        ("convex rate", Box::new(|| convex_rate(&d("c1")))),
        ("strongly convex rate", Box::new(|| strongly_convex_rate(&d("c2")))),
        ("deterministic O(1/t)", Box::new(|| deterministic_rate(&d("c3")))),
        ("smooth schedule", Box::new(|| smooth_schedule(&d("c4")))),
        ("per-step stochastic bound", Box::new(|| step_bound(&d("c5")))),
        ("three-points relation", Box::new(three_points)),
        ("structural identities", Box::new(structural)),
        ("high-probability bound", Box::new(|| high_probability(&d("c8")))),
        ("reference solutions", Box::new(reference_agreement)),
        ("determinism", Box::new(|| determinism(&d("c10")))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
