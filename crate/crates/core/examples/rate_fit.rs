//! Mean error curve over seeded replications, a log-log slope fit, and the
//! comparison against the expected-error bound.

use stochastic_admm::metrics::{compute_reference, estimate_expectation, fit_rate, geometric_grid, BoundInputs};
use stochastic_admm::presets::{build, PresetName, PresetParams};
use stochastic_admm::solvers::{run, RecordPolicy, SolverConfig, StepSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = build(PresetName::LassoSplit, &PresetParams::default())?;
    let reference = compute_reference(&p.spec)?;
    let t_max = 20_000;
    let grid = geometric_grid(10, t_max, 25);
    let cfg = SolverConfig::stochastic(1.0, StepSchedule::Convex, t_max).with_record(RecordPolicy::At(grid.clone()));
    let oracle = p.oracle(11);
    let trajs = (0..8)
        .map(|r| run(&p.spec, &cfg, Some(&oracle.with_stream(r)), Some(reference.theta_star)))
        .collect::<Result<Vec<_>, _>>()?;
    let curve = estimate_expectation(&trajs, &grid, cfg.effective_averaging())?;
    let fit = fit_rate(&curve.points(), (200.0, t_max as f64))?;
    println!("slope {:.3} (r^2 {:.4}) over {} points", fit.slope, fit.r_squared, fit.n_points);

    let y0 = cfg.initial_state(&p.spec).y;
    let b = BoundInputs::new(&p.spec, 1.0, cfg.rho, reference.d_y_star_b(&p.spec, &y0));
    for ((t, m), se) in curve.t.iter().zip(&curve.mean).zip(&curve.stderr).step_by(4) {
        println!("t = {t:>6}  mean {m:.3e} +- {se:.1e}  bound {:.3e}", b.convex(*t as f64));
    }
    Ok(())
}
