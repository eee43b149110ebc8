//! Closed-form proximal maps of the supported `theta2` terms, with and without
//! a ball constraint.

use stochastic_admm::prox::ProxCatalog;
use stochastic_admm::types::{FeasibleSet, Vector};

fn main() {
    let z = Vector::from_vec(vec![2.0, -0.3, 0.8, -1.5]);
    let c = 2.0;
    let entries = [
        ProxCatalog::L1 { weight: 1.0 },
        ProxCatalog::SquaredL2 { weight: 1.0 },
        ProxCatalog::Hinge { weight: 1.0 },
        ProxCatalog::Zero,
    ];
    let ball = FeasibleSet::Ball { radius: 1.0 };
    println!("z = {:?}", z.as_slice());
    for e in entries {
        let free = e.prox(&z, c, &FeasibleSet::whole());
        let boxed = e.prox(&z, c, &ball);
        println!("{e:?}");
        println!("  unconstrained {:?}", round(&free));
        println!("  in unit ball  {:?}  (norm {:.4})", round(&boxed), boxed.norm());
    }
}

fn round(v: &Vector) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
