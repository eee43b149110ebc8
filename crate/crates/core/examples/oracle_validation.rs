//! Empirical check that the sampled subgradients of each preset respect the
//! declared second-moment bound `M^2` and variance bound `sigma^2`.

use stochastic_admm::oracle::validate_assumptions;
use stochastic_admm::presets::{build, PresetName, PresetParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in PresetName::ALL {
        let p = build(name, &PresetParams::default())?;
        let oracle = p.oracle(0);
        let c = &p.spec.constants;
        let rep = validate_assumptions(&oracle, &p.spec.x_set, 400, 10, c.m_bound, c.sigma);
        println!(
            "{name:>22}: E||g||^2 {:.3e} +- {:.1e} (declared {:.3e})  E||delta||^2 {:.3e} +- {:.1e} (declared {:.3e})  {}",
            rep.second_moment.mean,
            rep.second_moment.radius,
            rep.declared_m_squared,
            rep.variance.mean,
            rep.variance.radius,
            rep.declared_sigma_squared,
            if rep.m_violated || rep.sigma_violated { "VIOLATED" } else { "ok" }
        );
    }
    Ok(())
}
