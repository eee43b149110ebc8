//! Fraction of replications whose error exceeds the tail threshold, against
//! the `2 exp(-omega)` probability bound.

use stochastic_admm::metrics::{compute_reference, high_prob_check, BoundInputs};
use stochastic_admm::presets::{build, PresetName, PresetParams};
use stochastic_admm::solvers::{run, RecordPolicy, SolverConfig, StepSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = build(PresetName::LassoSplit, &PresetParams::default())?;
    let reference = compute_reference(&p.spec)?;
    let t = 2000;
    let cfg = SolverConfig::stochastic(1.0, StepSchedule::Convex, t).with_record(RecordPolicy::At(vec![t]));
    let oracle = p.oracle(5);
    let mut errs = Vec::new();
    for r in 0..60 {
        let traj = run(&p.spec, &cfg, Some(&oracle.with_stream(r)), Some(reference.theta_star))?;
        errs.push(traj.primary()[0]);
    }
    let y0 = cfg.initial_state(&p.spec).y;
    let b = BoundInputs::new(&p.spec, 1.0, cfg.rho, reference.d_y_star_b(&p.spec, &y0));
    for omega in [0.5, 1.0, 2.0, 4.0] {
        let c = high_prob_check(&errs, t, omega, &b, oracle.is_bounded())?;
        println!(
            "omega {omega}: threshold {:.3e}, exceed {:.3} vs {:.3} + {:.3} -> {}",
            c.threshold,
            c.exceed_fraction,
            c.probability_bound,
            c.slack,
            if c.pass { "pass" } else { "fail" }
        );
    }
    Ok(())
}
