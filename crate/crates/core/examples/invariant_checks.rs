//! Runs every variant with per-step invariant probes and reports the worst
//! normalized residual of each inequality.

use stochastic_admm::presets::{build, PresetName, PresetParams};
use stochastic_admm::solvers::{run, Linearization, RecordPolicy, SolverConfig, StepSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = build(PresetName::TwoD, &PresetParams::default())?;
    let spec = &p.spec;
    let r = 1.0 + stochastic_admm::solvers::ata_norm(spec);
    let configs = [
        ("stochastic", SolverConfig::stochastic(1.0, StepSchedule::Convex, 500)),
        ("deterministic", SolverConfig::deterministic(1.0, 500)),
        ("linearized", SolverConfig::linearized(Linearization::Scalar(r), 1.0, 500)),
    ];
    for (name, cfg) in configs {
        let cfg = cfg.with_checks(10).with_record(RecordPolicy::At(vec![500]));
        let traj = run(spec, &cfg, Some(&p.oracle(4)), None)?;
        let w = traj.worst.expect("checks were on");
        println!(
            "{name:>13}: dual {:.2e}  y-opt {:.2e}  three-points {}  per-step bound {}  violations {}",
            w.dual_identity,
            w.y_optimality,
            fmt(w.three_points),
            fmt(w.step_bound),
            traj.violations.len()
        );
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2e}"))
}
