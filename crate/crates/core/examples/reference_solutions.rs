//! Three independent ways to compute the reference point on the 2-D instance:
//! the KKT linear system, a long deterministic ADMM run, and grid search.

use stochastic_admm::metrics::{admm_reference, grid_search_reference, kkt_reference, ReferenceOptions};
use stochastic_admm::presets::{build, PresetName, PresetParams};
use stochastic_admm::types::Vector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = build(PresetName::TwoD, &PresetParams::default())?;
    let spec = &p.spec;
    let kkt = kkt_reference(spec)?;
    let admm = admm_reference(spec, &ReferenceOptions::default())?;
    let grid = grid_search_reference(spec, &Vector::zeros(2), spec.d_x() / 2.0, 1e-6)?;
    for r in [&kkt, &admm, &grid] {
        println!(
            "{:>24}: theta* = {:.12}  x* = {:?}  tol {:.1e}",
            r.method.name(),
            r.theta_star,
            r.x.as_slice(),
            r.certified_tolerance
        );
    }
    if let Some(l) = &kkt.lambda_star {
        println!("lambda* = {:?}", l.as_slice());
    }
    Ok(())
}
