//! Stochastic ADMM on a generated lasso problem, printing the combined error
//! of the ergodic average as it decays.

use stochastic_admm::metrics::compute_reference;
use stochastic_admm::presets::{build, PresetName, PresetParams};
use stochastic_admm::solvers::{run, RecordPolicy, SolverConfig, StepSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let preset = build(PresetName::LassoSplit, &PresetParams::default())?;
    let reference = compute_reference(&preset.spec)?;
    println!("theta* = {:.6} ({})", reference.theta_star, reference.method.name());

    let ts = vec![10, 100, 1_000, 10_000];
    let cfg = SolverConfig::stochastic(1.0, StepSchedule::Convex, 10_000).with_record(RecordPolicy::At(ts));
    let traj = run(&preset.spec, &cfg, Some(&preset.oracle(1)), Some(reference.theta_star))?;
    for r in &traj.records {
        let e = r.err(traj.averaging);
        println!("t = {:>6}  gap {:>10.3e}  feas {:>10.3e}  err {:>10.3e}", r.k, e.gap, e.feasibility, e.value);
    }
    let x = &traj.final_state.x;
    let nnz = x.iter().filter(|v| v.abs() > 1e-3).count();
    println!("final x has {nnz} of {} entries above 1e-3", x.len());
    Ok(())
}
