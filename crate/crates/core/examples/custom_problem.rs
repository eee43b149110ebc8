//! Assembling a problem by hand: a hinge-loss classifier with a ridge penalty
//! on a split copy, solved by stochastic ADMM with sampled data rows.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochastic_admm::metrics::compute_reference;
use stochastic_admm::objective::{FiniteSum, Loss};
use stochastic_admm::oracle::{OracleModel, StochasticOracle};
use stochastic_admm::prox::ProxCatalog;
use stochastic_admm::solvers::{run, RecordPolicy, SolverConfig, StepSchedule};
use stochastic_admm::types::{Constants, FeasibleSet, Matrix, ProblemSpec, Vector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, d) = (300, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let w_true = Vector::from_fn(d, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let features = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let labels = (&features * &w_true).map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
    let data = Arc::new(FiniteSum::new(features, labels, Loss::Hinge, 0.0));

    let radius = 5.0;
    let m = data.certified_gradient_bound(radius);
    let spec = ProblemSpec::new(
        data.clone(),
        ProxCatalog::SquaredL2 { weight: 0.05 },
        Matrix::identity(d, d),
        -Matrix::identity(d, d),
        Vector::zeros(d),
        FeasibleSet::Ball { radius },
        FeasibleSet::whole(),
        Constants::new(m, m),
    )?;
    let reference = compute_reference(&spec)?;
    let oracle = StochasticOracle::new(OracleModel::FiniteSum { objective: data.clone(), batch: 1 }, 7);

    let cfg = SolverConfig::stochastic(1.0, StepSchedule::Convex, 20_000).with_record(RecordPolicy::At(vec![20_000]));
    let traj = run(&spec, &cfg, Some(&oracle), Some(reference.theta_star))?;
    let x = traj.final_state.avg_x_shifted().unwrap();
    let acc = (0..n)
        .filter(|&i| data.features().row(i).dot(&x.transpose()) * data.targets()[i] > 0.0)
        .count();
    println!("theta* = {:.5}, Err_rho = {:.3e}", reference.theta_star, traj.primary()[0]);
    println!("training accuracy of the averaged iterate: {:.1}%", 100.0 * acc as f64 / n as f64);
    Ok(())
}
