//! Euclidean projections onto the supported feasible sets, and sampling from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochastic_admm::types::{FeasibleSet, Vector};

fn main() {
    let z = Vector::from_vec(vec![3.0, -4.0]);
    let sets = [
        FeasibleSet::whole_with_diameter(10.0),
        FeasibleSet::Ball { radius: 2.0 },
        FeasibleSet::Box {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 0.5],
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for s in &sets {
        let p = s.project(&z);
        let sample = s.sample(2, &mut rng);
        println!("{s:?}");
        println!("  project(z) = {:?}, diameter {:?}", p.as_slice(), s.diameter());
        println!("  sample     = {:?}", sample.as_slice());
    }
}
