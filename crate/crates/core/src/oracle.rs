//! Stochastic first-order oracles for `theta1` and empirical checks of the
//! moment assumptions.
//!
//! Every draw is addressed by `(seed, stream, call index)`: call `i` of stream
//! `r` reseeds a ChaCha8 generator at word position `i << 32`, so replications
//! never share generator state and any draw can be regenerated in isolation.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::objective::{ConvexObjective, FiniteSum};
use crate::types::{FeasibleSet, Vector};

/// Zero-mean noise added to an exact subgradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// `N(0, sigma^2/d I)`.
    Gaussian,
    /// Uniform on the cube `[-a, a]^d` with `a = sigma sqrt(3/d)`, so `E||delta||^2 = sigma^2`.
    Uniform,
}

/// How sampled subgradients are produced.
#[derive(Debug, Clone)]
pub enum OracleModel {
    /// Average of `batch` uniformly drawn components.
    FiniteSum { objective: Arc<FiniteSum>, batch: usize },
    /// Exact subgradient of `base` plus independent noise of total variance `sigma^2`.
    AdditiveNoise {
        base: Arc<dyn ConvexObjective>,
        noise: NoiseKind,
        sigma: f64,
    },
}

/// One oracle draw: `g = theta1'(x, xi)` and `delta = g - theta1'(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub g: Vector,
    pub delta: Vector,
}

/// A seeded oracle. Cloning copies the call counter; use [`StochasticOracle::with_stream`]
/// to give each replication its own substream.
#[derive(Debug, Clone)]
pub struct StochasticOracle {
    model: OracleModel,
    seed: u64,
    stream: u64,
    calls: u64,
}

impl StochasticOracle {
    pub fn new(model: OracleModel, seed: u64) -> Self {
        StochasticOracle {
            model,
            seed,
            stream: 0,
            calls: 0,
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        StochasticOracle {
            model: self.model.clone(),
            seed: self.seed,
            stream,
            calls: 0,
        }
    }

    pub fn model(&self) -> &OracleModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            OracleModel::FiniteSum { objective, .. } => objective.dim(),
            OracleModel::AdditiveNoise { base, .. } => base.dim(),
        }
    }

    /// True when sampled subgradients are bounded on bounded sets.
    pub fn is_bounded(&self) -> bool {
        match &self.model {
            OracleModel::FiniteSum { .. } => true,
            OracleModel::AdditiveNoise { noise, sigma, .. } => {
                *sigma == 0.0 || *noise == NoiseKind::Uniform
            }
        }
    }

    /// Exact subgradient of the expectation.
    pub fn exact_subgradient(&self, x: &Vector) -> Vector {
        match &self.model {
            OracleModel::FiniteSum { objective, .. } => objective.subgradient(x),
            OracleModel::AdditiveNoise { base, .. } => base.subgradient(x),
        }
    }

    fn rng_for(&self, call: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos((call as u128) << 32);
        rng
    }

    /// Draw number `call` of this stream, without touching the counter.
    pub fn sample_at(&self, x: &Vector, call: u64) -> NoiseSample {
        let mut rng = self.rng_for(call);
        match &self.model {
            OracleModel::FiniteSum { objective, batch } => {
                let n = objective.len();
                let b = (*batch).max(1);
                let mut g = x * objective.ridge();
                let scale = 1.0 / b as f64;
                for _ in 0..b {
                    let i = rng.random_range(0..n);
                    objective.add_component_subgradient(i, x, scale, &mut g);
                }
                let delta = &g - objective.subgradient(x);
                NoiseSample { g, delta }
            }
            OracleModel::AdditiveNoise { base, noise, sigma } => {
                let exact = base.subgradient(x);
                let d = exact.len();
                let delta = if *sigma == 0.0 || d == 0 {
                    Vector::zeros(d)
                } else {
                    match noise {
                        NoiseKind::Gaussian => {
                            let s = sigma / (d as f64).sqrt();
                            Vector::from_iterator(
                                d,
                                (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)),
                            )
                        }
                        NoiseKind::Uniform => {
                            let a = sigma * (3.0 / d as f64).sqrt();
                            Vector::from_iterator(d, (0..d).map(|_| rng.random_range(-a..=a)))
                        }
                    }
                };
                NoiseSample {
                    g: &exact + &delta,
                    delta,
                }
            }
        }
    }

    /// Next draw of this stream.
    pub fn sample_subgradient(&mut self, x: &Vector) -> NoiseSample {
        let s = self.sample_at(x, self.calls);
        self.calls += 1;
        s
    }
}

/// Free-function form of [`StochasticOracle::sample_subgradient`].
pub fn sample_subgradient(x: &Vector, oracle: &mut StochasticOracle) -> NoiseSample {
    oracle.sample_subgradient(x)
}

/// Sample mean with a 95% normal-approximation confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub radius: f64,
}

/// Empirical check of the second-moment (`M^2`) and variance (`sigma^2`) bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Largest estimate of `E||g||^2` over the sampled points.
    pub second_moment: MomentEstimate,
    /// Largest estimate of `E||delta||^2` over the sampled points.
    pub variance: MomentEstimate,
    pub declared_m_squared: f64,
    pub declared_sigma_squared: f64,
    pub n_points: usize,
    pub n_samples: usize,
    pub m_violated: bool,
    pub sigma_violated: bool,
}

fn estimate(values: &[f64]) -> MomentEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MomentEstimate {
        mean,
        radius: 1.96 * (var / n).sqrt(),
    }
}

/// Estimates `E||g||^2` and `E||delta||^2` at `n_points` points drawn from `x_set`
/// (`n_samples` draws each) and flags estimates that exceed the declared bounds
/// beyond their confidence radius. Uses a dedicated stream of `oracle`.
pub fn validate_assumptions(
    oracle: &StochasticOracle,
    x_set: &FeasibleSet,
    n_samples: usize,
    n_points: usize,
    m_bound: f64,
    sigma: f64,
) -> AssumptionReport {
    let d = oracle.dim();
    let mut point_rng = ChaCha8Rng::seed_from_u64(oracle.seed ^ 0x005e_ed0f_a55e);
    let mut worst_m = MomentEstimate { mean: 0.0, radius: 0.0 };
    let mut worst_s = MomentEstimate { mean: 0.0, radius: 0.0 };
    let probe = oracle.with_stream(u64::MAX - 1);
    let mut call = 0u64;
    for _ in 0..n_points.max(1) {
        let x = x_set.sample(d, &mut point_rng);
        let mut g2 = Vec::with_capacity(n_samples);
        let mut d2 = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let s = probe.sample_at(&x, call);
            call += 1;
            g2.push(s.g.norm_squared());
            d2.push(s.delta.norm_squared());
        }
        let em = estimate(&g2);
        let es = estimate(&d2);
        if em.mean > worst_m.mean {
            worst_m = em;
        }
        if es.mean > worst_s.mean {
            worst_s = es;
        }
    }
    let m2 = m_bound * m_bound;
    let s2 = sigma * sigma;
    AssumptionReport {
        second_moment: worst_m,
        variance: worst_s,
        declared_m_squared: m2,
        declared_sigma_squared: s2,
        n_points: n_points.max(1),
        n_samples,
        m_violated: worst_m.mean - worst_m.radius > m2,
        sigma_violated: worst_s.mean - worst_s.radius > s2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Loss, QuadraticForm};
    use crate::types::Matrix;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn zero_noise_returns_exact_subgradient() {
        let base: Arc<dyn ConvexObjective> = Arc::new(QuadraticForm::centered(v(&[1.0, -2.0]), 3.0));
        let mut o = StochasticOracle::new(
            OracleModel::AdditiveNoise {
                base: base.clone(),
                noise: NoiseKind::Gaussian,
                sigma: 0.0,
            },
            1,
        );
        let x = v(&[0.5, 0.5]);
        let s = o.sample_subgradient(&x);
        assert_eq!(s.delta, Vector::zeros(2));
        assert_eq!(s.g, base.subgradient(&x));
    }

    #[test]
    fn single_component_sum_is_exact() {
        let fs = FiniteSum::new(Matrix::from_row_slice(1, 2, &[1.0, 2.0]), v(&[0.5]), Loss::Squared, 0.0);
        let x = v(&[0.3, -0.1]);
        let comp = fs.component_subgradient(0, &x);
        let mut o = StochasticOracle::new(
            OracleModel::FiniteSum {
                objective: Arc::new(fs),
                batch: 1,
            },
            7,
        );
        let s = o.sample_subgradient(&x);
        assert_eq!(s.g, comp);
        assert!(s.delta.norm() < 1e-15);
    }

    #[test]
    fn enumerated_components_average_to_exact_gradient() {
        // four hand-built least-squares rows
        let f = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let t = v(&[1.0, -1.0, 0.5, 2.0]);
        let fs = FiniteSum::new(f.clone(), t.clone(), Loss::Squared, 0.0);
        let x = v(&[0.25, -0.75]);
        let mut sum = Vector::zeros(2);
        for i in 0..4 {
            let a = f.row(i).transpose();
            sum += &a * (a.dot(&x) - t[i]);
        }
        let by_hand = sum / 4.0;
        assert!((by_hand - fs.subgradient(&x)).norm() < 1e-15);
    }

    #[test]
    fn draws_are_addressed_by_seed_stream_and_call() {
        let fs = FiniteSum::new(
            Matrix::from_fn(50, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0),
            Vector::from_fn(50, |i, _| (i % 5) as f64),
            Loss::Squared,
            0.0,
        );
        let o = StochasticOracle::new(
            OracleModel::FiniteSum {
                objective: Arc::new(fs),
                batch: 1,
            },
            99,
        );
        let x = v(&[0.1, 0.2, 0.3]);
        let mut a = o.with_stream(3);
        let mut b = o.with_stream(3);
        let seq_a: Vec<_> = (0..20).map(|_| a.sample_subgradient(&x).g).collect();
        let seq_b: Vec<_> = (0..20).map(|_| b.sample_subgradient(&x).g).collect();
        assert_eq!(seq_a, seq_b);
        assert_eq!(o.with_stream(3).sample_at(&x, 12).g, seq_a[12]);
        let mut c = o.with_stream(4);
        let seq_c: Vec<_> = (0..20).map(|_| c.sample_subgradient(&x).g).collect();
        assert_ne!(seq_a, seq_c);
    }

    #[test]
    fn zero_noise_variance_estimate_is_exactly_zero() {
        let base: Arc<dyn ConvexObjective> = Arc::new(QuadraticForm::isotropic(2, 1.0));
        let o = StochasticOracle::new(
            OracleModel::AdditiveNoise {
                base,
                noise: NoiseKind::Uniform,
                sigma: 0.0,
            },
            3,
        );
        let r = validate_assumptions(&o, &FeasibleSet::Ball { radius: 1.0 }, 1000, 3, 1.0, 0.0);
        assert_eq!(r.variance.mean, 0.0);
        assert_eq!(r.variance.radius, 0.0);
        assert!(!r.sigma_violated);
        assert!(!r.m_violated);
    }

    #[test]
    fn gaussian_variance_estimate_concentrates() {
        let base: Arc<dyn ConvexObjective> = Arc::new(QuadraticForm::isotropic(1, 1.0));
        let o = StochasticOracle::new(
            OracleModel::AdditiveNoise {
                base,
                noise: NoiseKind::Gaussian,
                sigma: 1.0,
            },
            2024,
        );
        let r = validate_assumptions(&o, &FeasibleSet::Ball { radius: 1.0 }, 100_000, 1, 10.0, 1.0);
        assert!(
            (0.97..=1.03).contains(&r.variance.mean),
            "variance estimate {}",
            r.variance.mean
        );
        assert!(!r.sigma_violated);
    }

    #[test]
    fn bounded_components_never_exceed_m_squared() {
        let fs = FiniteSum::new(
            Matrix::from_fn(30, 2, |i, j| ((i + 2 * j) % 7) as f64 / 7.0 - 0.5),
            Vector::from_fn(30, |i, _| if i % 3 == 0 { 1.0 } else { -1.0 }),
            Loss::Hinge,
            0.0,
        );
        let m = fs.certified_gradient_bound(1.0);
        let o = StochasticOracle::new(
            OracleModel::FiniteSum {
                objective: Arc::new(fs),
                batch: 1,
            },
            5,
        );
        let r = validate_assumptions(&o, &FeasibleSet::Ball { radius: 1.0 }, 1000, 10, m, m);
        assert!(r.second_moment.mean <= m * m);
        assert!(!r.m_violated);
    }

    #[test]
    fn declared_bounds_that_are_too_small_get_flagged() {
        let base: Arc<dyn ConvexObjective> = Arc::new(QuadraticForm::isotropic(4, 1.0));
        let o = StochasticOracle::new(
            OracleModel::AdditiveNoise {
                base,
                noise: NoiseKind::Uniform,
                sigma: 2.0,
            },
            8,
        );
        let r = validate_assumptions(&o, &FeasibleSet::Ball { radius: 1.0 }, 5000, 2, 0.5, 0.5);
        assert!(r.sigma_violated);
        assert!(r.m_violated);
    }
}
