//! Synthetic problem instances with certified constants.
//!
//! Least-squares designs draw whitened rows `a_i = Q diag(sqrt(ev)) z_i` with
//! `ev` geometric from 1 down to `1/condition`, so the empirical Hessian is
//! exactly `Q diag(ev) Q^T`. Ground-truth coefficients have equal magnitude along every
//! eigenvector. The ball radius of X defaults to `2 ||x*|| + 1`, where `x*`
//! solves the problem without the ball, so the set constraint is inactive at
//! the optimum.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AdmmError, Result};
use crate::metrics::compute_reference;
use crate::objective::{ConvexObjective, FiniteSum, Loss, QuadraticForm};
use crate::oracle::{NoiseKind, OracleModel, StochasticOracle};
use crate::prox::{ProxCatalog, QuadraticSolver};
use crate::types::{Constants, FeasibleSet, Matrix, ProblemSpec, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    /// `(1/2n) sum (a_i^T x - t_i)^2 + lambda ||y||_1`, `x = y`.
    LassoSplit,
    /// Same loss, `lambda ||y||_1` with `y = D x` for a graph difference matrix `D`.
    FusedLassoGraph,
    /// `(1/n) sum max(0, 1 - l_i a_i^T x) + (lambda/2)||y||^2`, `x = y`.
    HingeSvmSplit,
    /// Lasso split with `(mu/2)||x||^2` added to the loss.
    StronglyConvexLasso,
    /// Least squares plus `(lambda/2)||y||^2`, `x = y`.
    RidgeSplit,
    /// `x^2/2 + y^2/2` subject to `x = y`.
    OneD,
    /// Two-dimensional quadratic with a non-identity `B`.
    TwoD,
}

impl PresetName {
    pub const ALL: [PresetName; 7] = [
        PresetName::LassoSplit,
        PresetName::FusedLassoGraph,
        PresetName::HingeSvmSplit,
        PresetName::StronglyConvexLasso,
        PresetName::RidgeSplit,
        PresetName::OneD,
        PresetName::TwoD,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::LassoSplit => "lasso-split",
            PresetName::FusedLassoGraph => "fused-lasso-graph",
            PresetName::HingeSvmSplit => "hinge-svm-split",
            PresetName::StronglyConvexLasso => "strongly-convex-lasso",
            PresetName::RidgeSplit => "ridge-split",
            PresetName::OneD => "one-d",
            PresetName::TwoD => "two-d",
        }
    }

    /// Both objectives quadratic, so the KKT system gives the optimum directly.
    pub fn is_quadratic(&self) -> bool {
        matches!(self, PresetName::RidgeSplit | PresetName::OneD | PresetName::TwoD)
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = AdmmError;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| AdmmError::Config {
                field: "preset".into(),
                message: format!(
                    "unknown preset `{s}`; expected one of {}",
                    PresetName::ALL.map(|p| p.as_str()).join(", ")
                ),
            })
    }
}

/// How the oracle produces sampled subgradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    /// Uniformly sampled data row (finite-sum presets); uniform noise otherwise.
    #[default]
    Sample,
    /// Exact subgradient, `sigma = 0`.
    Exact,
    /// Exact subgradient plus Gaussian noise of variance `sigma^2`.
    Gaussian,
    /// Exact subgradient plus bounded uniform noise of variance `sigma^2`.
    Uniform,
}

/// Generator parameters; unset fields take per-preset defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetParams {
    pub dim: Option<usize>,
    pub samples: Option<usize>,
    pub condition: Option<f64>,
    pub label_noise: Option<f64>,
    pub lambda_reg: Option<f64>,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
    pub radius: Option<f64>,
    pub oracle: Option<OracleChoice>,
    pub batch: Option<usize>,
    pub sigma: Option<f64>,
    /// Edges added to the chain graph of the fused preset.
    pub extra_edges: Option<usize>,
}

/// Parameters with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub dim: usize,
    pub samples: usize,
    pub condition: f64,
    pub label_noise: f64,
    pub lambda_reg: f64,
    pub mu: f64,
    pub seed: u64,
    pub radius: Option<f64>,
    pub oracle: OracleChoice,
    pub batch: usize,
    pub sigma: f64,
    pub extra_edges: usize,
}

impl PresetParams {
    pub fn resolve(&self, name: PresetName) -> ResolvedParams {
        let dim = self.dim.unwrap_or(match name {
            PresetName::OneD => 1,
            PresetName::TwoD => 2,
            _ => 20,
        });
        ResolvedParams {
            dim,
            samples: self.samples.unwrap_or(200),
            condition: self.condition.unwrap_or(match name {
                PresetName::HingeSvmSplit => 10.0,
                _ => 1e4,
            }),
            label_noise: self.label_noise.unwrap_or(0.1),
            lambda_reg: self.lambda_reg.unwrap_or(match name {
                PresetName::RidgeSplit | PresetName::HingeSvmSplit => 0.1,
                _ => 0.001,
            }),
            mu: self.mu.unwrap_or(match name {
                PresetName::StronglyConvexLasso => 0.1,
                _ => 0.0,
            }),
            seed: self.seed.unwrap_or(0),
            radius: self.radius,
            oracle: self.oracle.unwrap_or_default(),
            batch: self.batch.unwrap_or(1),
            sigma: self.sigma.unwrap_or(match name {
                PresetName::OneD => 0.5,
                _ => 1.0,
            }),
            extra_edges: self.extra_edges.unwrap_or(dim / 2),
        }
    }

    pub fn check(&self, name: PresetName) -> Result<()> {
        let p = self.resolve(name);
        let bad = |field: &str, message: String| {
            Err(AdmmError::Config {
                field: format!("problem.{field}"),
                message,
            })
        };
        match name {
            PresetName::OneD if p.dim != 1 => return bad("dim", "the one-d preset has dimension 1".into()),
            PresetName::TwoD if p.dim != 2 => return bad("dim", "the two-d preset has dimension 2".into()),
            _ if p.dim == 0 => return bad("dim", "must be at least 1".into()),
            _ => {}
        }
        if p.samples == 0 {
            return bad("samples", "must be at least 1".into());
        }
        if !(p.condition >= 1.0 && p.condition.is_finite()) {
            return bad("condition", format!("must be a finite number >= 1, got {}", p.condition));
        }
        if !(p.label_noise >= 0.0 && p.label_noise.is_finite()) {
            return bad("label_noise", format!("must be nonnegative, got {}", p.label_noise));
        }
        if !(p.lambda_reg >= 0.0 && p.lambda_reg.is_finite()) {
            return bad("lambda_reg", format!("must be nonnegative, got {}", p.lambda_reg));
        }
        if !(p.mu >= 0.0 && p.mu.is_finite()) {
            return bad("mu", format!("must be nonnegative, got {}", p.mu));
        }
        if let Some(r) = p.radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad("radius", format!("must be positive, got {r}"));
            }
        }
        if p.batch == 0 {
            return bad("batch", "must be at least 1".into());
        }
        if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
            return bad("sigma", format!("must be nonnegative, got {}", p.sigma));
        }
        Ok(())
    }
}

/// A generated instance together with its oracle model.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: PresetName,
    pub params: ResolvedParams,
    pub spec: ProblemSpec,
    pub oracle_model: OracleModel,
    /// Data of the finite-sum presets.
    pub data: Option<Arc<FiniteSum>>,
}

impl Preset {
    pub fn oracle(&self, seed: u64) -> StochasticOracle {
        StochasticOracle::new(self.oracle_model.clone(), seed)
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Rescales `z` so that `z^T z / n = I` exactly (left as is when rank deficient).
fn whiten(z: Matrix) -> Matrix {
    let n = z.nrows() as f64;
    let eig = nalgebra::SymmetricEigen::new(z.tr_mul(&z) / n);
    if eig.eigenvalues.iter().any(|v| !(*v > 1e-12)) {
        return z;
    }
    let inv_sqrt = Matrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let w = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    z * w
}

/// Rows with empirical covariance `Q diag(ev) Q^T` and a ground truth of equal magnitude in
/// the eigenbasis.
fn design(p: &ResolvedParams, rng: &mut ChaCha8Rng) -> (Matrix, Vector, Vector) {
    let d = p.dim;
    let q = gaussian_matrix(rng, d, d).qr().q();
    let ev: Vec<f64> = (0..d)
        .map(|i| {
            if d == 1 {
                1.0
            } else {
                p.condition.powf(-(i as f64) / (d - 1) as f64)
            }
        })
        .collect();
    let z = whiten(gaussian_matrix(rng, p.samples, d));
    let scale = Matrix::from_diagonal(&Vector::from_iterator(d, ev.iter().map(|e| e.sqrt())));
    let features = z * scale * q.transpose();
    let signs = Vector::from_iterator(d, (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
    let truth = &q * signs;
    let margins = &features * &truth;
    (features, truth, margins)
}

fn chain_plus_random_edges(d: usize, extra: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut edges: Vec<(usize, usize)> = (0..d.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    let max_edges = d * (d - 1) / 2;
    let target = (edges.len() + extra).min(max_edges);
    while edges.len() < target {
        let i = rng.random_range(0..d);
        let j = rng.random_range(0..d);
        let e = (i.min(j), i.max(j));
        if i != j && !edges.contains(&e) {
            edges.push(e);
        }
    }
    let mut a = Matrix::zeros(edges.len().max(1), d);
    for (r, (i, j)) in edges.iter().enumerate() {
        a[(r, *i)] = 1.0;
        a[(r, *j)] = -1.0;
    }
    a
}

struct Parts {
    theta1: Arc<dyn ConvexObjective>,
    data: Option<Arc<FiniteSum>>,
    theta2: ProxCatalog,
    a: Matrix,
    b: Matrix,
    rhs: Vector,
    /// Lipschitz constant of the gradient of theta1, when smooth.
    lipschitz: Option<f64>,
}

fn parts(name: PresetName, p: &ResolvedParams) -> Parts {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let d = p.dim;
    let eye = Matrix::identity(d, d);
    let squared = |rng: &mut ChaCha8Rng, ridge: f64| {
        let (features, _, margins) = design(p, rng);
        let noise = Vector::from_iterator(p.samples, (0..p.samples).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let targets = margins + noise * p.label_noise;
        let fs = Arc::new(FiniteSum::new(features, targets, Loss::Squared, ridge));
        let l = QuadraticSolver::new(fs.quadratic().expect("squared loss").hessian.clone()).max_eigenvalue();
        (fs, l)
    };
    match name {
        PresetName::LassoSplit | PresetName::StronglyConvexLasso | PresetName::RidgeSplit => {
            let ridge = if name == PresetName::StronglyConvexLasso { p.mu } else { 0.0 };
            let (fs, l) = squared(&mut rng, ridge);
            let theta2 = if name == PresetName::RidgeSplit {
                ProxCatalog::SquaredL2 { weight: p.lambda_reg }
            } else {
                ProxCatalog::L1 { weight: p.lambda_reg }
            };
            Parts {
                theta1: fs.clone(),
                data: Some(fs),
                theta2,
                a: eye.clone(),
                b: -eye,
                rhs: Vector::zeros(d),
                lipschitz: Some(l),
            }
        }
        PresetName::FusedLassoGraph => {
            let (fs, l) = squared(&mut rng, 0.0);
            let a = chain_plus_random_edges(d, p.extra_edges, &mut rng);
            let m = a.nrows();
            Parts {
                theta1: fs.clone(),
                data: Some(fs),
                theta2: ProxCatalog::L1 { weight: p.lambda_reg },
                a,
                b: -Matrix::identity(m, m),
                rhs: Vector::zeros(m),
                lipschitz: Some(l),
            }
        }
        PresetName::HingeSvmSplit => {
            let (features, _, margins) = design(p, &mut rng);
            let labels = Vector::from_iterator(
                p.samples,
                margins.iter().map(|m| {
                    let l = if *m >= 0.0 { 1.0 } else { -1.0 };
                    if rng.random::<f64>() < p.label_noise {
                        -l
                    } else {
                        l
                    }
                }),
            );
            let fs = Arc::new(FiniteSum::new(features, labels, Loss::Hinge, 0.0));
            Parts {
                theta1: fs.clone(),
                data: Some(fs),
                theta2: ProxCatalog::SquaredL2 { weight: p.lambda_reg },
                a: eye.clone(),
                b: -eye,
                rhs: Vector::zeros(d),
                lipschitz: None,
            }
        }
        PresetName::OneD => Parts {
            theta1: Arc::new(QuadraticForm::isotropic(1, 1.0)),
            data: None,
            theta2: ProxCatalog::SquaredL2 { weight: 1.0 },
            a: Matrix::from_element(1, 1, 1.0),
            b: Matrix::from_element(1, 1, -1.0),
            rhs: Vector::zeros(1),
            lipschitz: Some(1.0),
        },
        PresetName::TwoD => {
            let h = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
            let c = Vector::from_column_slice(&[1.0, -0.5]);
            let lin = &h * &c;
            let constant = 0.5 * c.dot(&lin);
            let l = QuadraticSolver::new(h.clone()).max_eigenvalue();
            Parts {
                theta1: Arc::new(QuadraticForm::new(h, lin, constant)),
                data: None,
                theta2: ProxCatalog::SquaredL2 { weight: 0.5 },
                a: Matrix::identity(2, 2),
                b: Matrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -1.0]),
                rhs: Vector::from_column_slice(&[0.2, -0.1]),
                lipschitz: Some(l),
            }
        }
    }
}

/// `sup ||theta1'(x)||` over the ball of radius `r`, from the component bound for
/// finite sums and from `||H|| r + ||lin||` for quadratics.
fn gradient_bound(parts: &Parts, r: f64) -> f64 {
    if let Some(fs) = &parts.data {
        return fs.certified_gradient_bound(r);
    }
    let q = parts.theta1.quadratic().expect("non-data presets are quadratic");
    QuadraticSolver::new(q.hessian.clone()).max_eigenvalue() * r + q.linear.norm()
}

/// Generates the instance. Reproducible from `params.seed`.
pub fn build(name: PresetName, params: &PresetParams) -> Result<Preset> {
    params.check(name)?;
    let p = params.resolve(name);
    let parts = parts(name, &p);
    let d2 = parts.b.ncols();
    let radius = match p.radius {
        Some(r) => r,
        None => {
            let free = ProblemSpec::new(
                parts.theta1.clone(),
                parts.theta2,
                parts.a.clone(),
                parts.b.clone(),
                parts.rhs.clone(),
                FeasibleSet::whole_with_diameter(1.0),
                FeasibleSet::whole(),
                Constants::new(1.0, 0.0),
            )?;
            2.0 * compute_reference(&free)?.x.norm() + 1.0
        }
    };
    let g = gradient_bound(&parts, radius);
    let mu = match name {
        PresetName::OneD => 1.0,
        PresetName::TwoD => {
            QuadraticSolver::new(parts.theta1.quadratic().expect("quadratic").hessian.clone()).min_eigenvalue()
        }
        _ => p.mu,
    };
    let (oracle_model, m_bound, sigma) = match (p.oracle, &parts.data) {
        (OracleChoice::Sample, Some(fs)) => (
            OracleModel::FiniteSum {
                objective: fs.clone(),
                batch: p.batch,
            },
            g,
            // E||delta||^2 <= E||g||^2 <= M^2
            g,
        ),
        (OracleChoice::Exact, _) => (
            OracleModel::AdditiveNoise {
                base: parts.theta1.clone(),
                noise: NoiseKind::Gaussian,
                sigma: 0.0,
            },
            g,
            0.0,
        ),
        (choice, _) => {
            let noise = if choice == OracleChoice::Gaussian {
                NoiseKind::Gaussian
            } else {
                NoiseKind::Uniform
            };
            (
                OracleModel::AdditiveNoise {
                    base: parts.theta1.clone(),
                    noise,
                    sigma: p.sigma,
                },
                (g * g + p.sigma * p.sigma).sqrt(),
                p.sigma,
            )
        }
    };
    let mut constants = Constants::new(m_bound, sigma).with_mu(mu);
    if let Some(l) = parts.lipschitz {
        constants = constants.with_lipschitz(l);
    }
    let spec = ProblemSpec::new(
        parts.theta1,
        parts.theta2,
        parts.a,
        parts.b,
        parts.rhs,
        FeasibleSet::Ball { radius },
        FeasibleSet::whole(),
        constants,
    )?;
    debug_assert_eq!(spec.d2(), d2);
    Ok(Preset {
        name,
        params: p,
        spec,
        oracle_model,
        data: parts.data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.as_str().parse::<PresetName>().unwrap(), p);
        }
        assert!("nope".parse::<PresetName>().is_err());
    }

    #[test]
    fn generation_is_reproducible() {
        let params = PresetParams::default();
        let a = build(PresetName::LassoSplit, &params).unwrap();
        let b = build(PresetName::LassoSplit, &params).unwrap();
        assert_eq!(a.data.as_ref().unwrap().features(), b.data.as_ref().unwrap().features());
        assert_eq!(a.spec.constants, b.spec.constants);
        let other = build(
            PresetName::LassoSplit,
            &PresetParams {
                seed: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.data.unwrap().features(), other.data.unwrap().features());
    }

    #[test]
    fn lipschitz_is_top_eigenvalue_and_spread_matches_condition() {
        let p = build(PresetName::LassoSplit, &PresetParams::default()).unwrap();
        let h = p.spec.theta1.quadratic().unwrap().hessian.clone();
        let s = QuadraticSolver::new(h);
        assert_eq!(p.spec.constants.lipschitz, Some(s.max_eigenvalue()));
        let spread = s.max_eigenvalue() / s.min_eigenvalue();
        assert!(spread > 1e3 && spread < 1e5, "{spread}");
    }

    #[test]
    fn fused_graph_has_chain_edges() {
        let p = build(PresetName::FusedLassoGraph, &PresetParams::default()).unwrap();
        let a = &p.spec.a_mat;
        assert_eq!(a.nrows(), 19 + 10);
        for r in 0..a.nrows() {
            assert_eq!(a.row(r).sum(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_parameters_with_field_path() {
        let err = build(
            PresetName::LassoSplit,
            &PresetParams {
                condition: Some(0.5),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, AdmmError::Config { ref field, .. } if field == "problem.condition"));
    }
}
