//! Experiment configuration files (TOML).
//!
//! ```toml
//! preset = "lasso-split"
//!
//! [problem]          # generator parameters, all optional
//! seed = 0
//!
//! [solver]
//! variant = "stochastic"    # deterministic | linearized | stochastic
//! schedule = "convex"       # convex | strongly-convex | smooth | constant
//! beta = 1.0
//! t_max = 100000
//! rho = 1.0
//!
//! [experiment]
//! replications = 50
//! seed = 1
//! fit_window = [1000, 100000]
//! omega = [1.0, 2.0]
//!
//! [checks]
//! slope_band = [-0.65, -0.35]
//! bound = "auto"
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AdmmError, Result};
use crate::presets::{PresetName, PresetParams};
use crate::solvers::{Linearization, RecordPolicy, SolverConfig, StepSchedule, Variant};
use crate::types::{Averaging, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    Deterministic,
    Linearized,
    #[default]
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleName {
    #[default]
    Convex,
    StronglyConvex,
    Smooth,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub variant: VariantName,
    pub schedule: ScheduleName,
    /// Stepsize of the constant schedule.
    pub eta: Option<f64>,
    /// `r` of the linearized variant (`G = r I - beta A^T A`); defaults to `beta ||A^T A||`.
    pub linearization_r: Option<f64>,
    pub beta: f64,
    pub t_max: usize,
    pub rho: f64,
    pub averaging: Option<Averaging>,
    pub check_invariants: bool,
    pub probe_count: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            variant: VariantName::Stochastic,
            schedule: ScheduleName::Convex,
            eta: None,
            linearization_r: None,
            beta: 1.0,
            t_max: 1000,
            rho: 1.0,
            averaging: None,
            check_invariants: false,
            probe_count: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub replications: usize,
    pub seed: u64,
    /// Explicit record points; generated from `fit_window` when absent.
    pub t_grid: Option<Vec<usize>>,
    /// Geometric points inside the fit window.
    pub grid_points: usize,
    /// Defaults to `[t_max / 100, t_max]`.
    pub fit_window: Option<[f64; 2]>,
    pub omega: Vec<f64>,
    /// Iteration of the tail-probability check; defaults to `t_max`.
    pub high_prob_t: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            replications: 50,
            seed: 0,
            t_grid: None,
            grid_points: 20,
            fit_window: None,
            omega: Vec::new(),
            high_prob_t: None,
            workers: None,
        }
    }
}

/// Which error bound the mean curve is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// Picked from the variant and schedule.
    #[default]
    Auto,
    None,
    Convex,
    StronglyConvex,
    Deterministic,
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    /// `[lower, upper]` for the fitted slope.
    pub slope_band: Option<[f64; 2]>,
    /// Upper limit on the fitted slope.
    pub slope_max: Option<f64>,
    pub bound: BoundKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("sadmm-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: PresetName,
    #[serde(default)]
    pub problem: PresetParams,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn field_err(field: &str, message: impl Into<String>) -> AdmmError {
    AdmmError::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Defaults for everything but the preset.
    pub fn for_preset(preset: PresetName) -> Self {
        ExperimentConfig {
            preset,
            problem: PresetParams::default(),
            solver: SolverSection::default(),
            experiment: ExperimentSection::default(),
            checks: ChecksSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Iterations after which the fit window starts and ends.
    pub fn fit_window(&self) -> (f64, f64) {
        match self.experiment.fit_window {
            Some([lo, hi]) => (lo, hi),
            None => {
                let t = self.solver.t_max as f64;
                ((t / 100.0).max(1.0), t)
            }
        }
    }

    pub fn high_prob_t(&self) -> usize {
        self.experiment.high_prob_t.unwrap_or(self.solver.t_max)
    }

    pub fn effective_averaging(&self) -> Averaging {
        self.solver.averaging.unwrap_or(match (self.solver.variant, self.solver.schedule) {
            (VariantName::Stochastic, ScheduleName::Smooth) => Averaging::Aligned,
            (VariantName::Stochastic, _) => Averaging::Shifted,
            _ => Averaging::Aligned,
        })
    }

    pub fn bound_kind(&self) -> BoundKind {
        match self.checks.bound {
            BoundKind::Auto => match (self.solver.variant, self.solver.schedule) {
                (VariantName::Deterministic, _) => BoundKind::Deterministic,
                (VariantName::Linearized, _) => BoundKind::None,
                (VariantName::Stochastic, ScheduleName::Convex) => BoundKind::Convex,
                (VariantName::Stochastic, ScheduleName::StronglyConvex) => BoundKind::StronglyConvex,
                (VariantName::Stochastic, ScheduleName::Smooth) => BoundKind::Smooth,
                (VariantName::Stochastic, ScheduleName::Constant) => BoundKind::None,
            },
            other => other,
        }
    }

    /// Iterations at which every replication is recorded.
    pub fn t_grid(&self) -> Vec<usize> {
        let t_max = self.solver.t_max;
        let mut grid = match &self.experiment.t_grid {
            Some(g) => g.clone(),
            None if t_max <= 1000 || self.solver.variant != VariantName::Stochastic => (1..=t_max).collect(),
            None => {
                let (lo, hi) = self.fit_window();
                let (lo, hi) = (lo.round() as usize, (hi.round() as usize).min(t_max));
                let mut g = crate::metrics::geometric_grid(1, lo.saturating_sub(1).max(1), 30);
                g.retain(|t| *t < lo);
                g.extend(crate::metrics::geometric_grid(lo, hi, self.experiment.grid_points));
                g.push(t_max);
                g
            }
        };
        if !self.experiment.omega.is_empty() {
            grid.push(self.high_prob_t());
        }
        grid.retain(|t| *t >= 1 && *t <= t_max);
        grid.sort_unstable();
        grid.dedup();
        grid
    }

    /// Grid points used by the rate fit: a geometric subset of [`Self::t_grid`]
    /// inside the fit window.
    pub fn fit_points(&self, t_grid: &[usize]) -> Vec<usize> {
        let (lo, hi) = self.fit_window();
        let inside: Vec<usize> = t_grid
            .iter()
            .copied()
            .filter(|t| *t as f64 >= lo && *t as f64 <= hi)
            .collect();
        if inside.len() <= self.experiment.grid_points {
            return inside;
        }
        let (a, b) = (inside[0], *inside.last().unwrap());
        let mut picked: Vec<usize> = crate::metrics::geometric_grid(a, b, self.experiment.grid_points)
            .into_iter()
            .map(|g| match inside.binary_search(&g) {
                Ok(i) => inside[i],
                Err(i) => inside[i.min(inside.len() - 1)],
            })
            .collect();
        picked.dedup();
        picked
    }

    /// Schema and consistency checks; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.problem.check(self.preset)?;
        let s = &self.solver;
        let e = &self.experiment;
        if !(s.beta.is_finite() && s.beta > 0.0) {
            return Err(field_err("solver.beta", format!("must be positive, got {}", s.beta)));
        }
        if !(s.rho.is_finite() && s.rho > 0.0) {
            return Err(field_err("solver.rho", format!("must be positive, got {}", s.rho)));
        }
        if s.t_max < 10 {
            return Err(field_err("solver.t_max", format!("must be at least 10, got {}", s.t_max)));
        }
        if s.check_invariants && s.probe_count == 0 {
            return Err(field_err("solver.probe_count", "must be at least 1 when invariant checks are on"));
        }
        if e.replications < 1 {
            return Err(field_err("experiment.replications", "must be at least 1"));
        }
        if e.grid_points < 5 {
            return Err(field_err("experiment.grid_points", "a rate fit needs at least 5 points"));
        }
        if let Some(w) = e.workers {
            if w == 0 {
                return Err(field_err("experiment.workers", "must be at least 1"));
            }
        }
        if let Some([lo, hi]) = e.fit_window {
            if !(lo > 0.0 && lo < hi && hi <= s.t_max as f64) {
                return Err(field_err(
                    "experiment.fit_window",
                    format!("needs 0 < lo < hi <= t_max = {}, got [{lo}, {hi}]", s.t_max),
                ));
            }
        }
        if let Some(t) = e.high_prob_t {
            if t < 1 || t > s.t_max {
                return Err(field_err("experiment.high_prob_t", format!("must lie in [1, t_max], got {t}")));
            }
        }
        if let Some(o) = e.omega.iter().find(|o| !(**o > 0.0 && o.is_finite())) {
            return Err(field_err("experiment.omega", format!("values must be positive, got {o}")));
        }
        if !e.omega.is_empty() && (s.variant != VariantName::Stochastic || s.schedule != ScheduleName::Convex) {
            return Err(field_err(
                "experiment.omega",
                "the tail-probability check applies to the stochastic variant with the convex schedule",
            ));
        }
        if let Some([lo, hi]) = self.checks.slope_band {
            if !(lo < hi) {
                return Err(field_err("checks.slope_band", format!("needs lower < upper, got [{lo}, {hi}]")));
            }
        }
        if let Some(r) = s.linearization_r {
            if !(r > 0.0 && r.is_finite()) {
                return Err(field_err("solver.linearization_r", format!("must be positive, got {r}")));
            }
        }
        if s.variant == VariantName::Stochastic {
            let p = self.problem.resolve(self.preset);
            match s.schedule {
                ScheduleName::Constant => match s.eta {
                    Some(eta) if eta > 0.0 && eta.is_finite() => {}
                    _ => return Err(field_err("solver.eta", "the constant schedule needs a positive eta")),
                },
                ScheduleName::StronglyConvex => {
                    let mu = match self.preset {
                        PresetName::OneD | PresetName::TwoD => 1.0,
                        _ => p.mu,
                    };
                    if !(mu > 0.0) {
                        return Err(field_err(
                            "solver.schedule",
                            format!(
                                "the strongly-convex schedule eta_k = 1/(k mu) needs a strongly convex theta1 \
                                 (mu > 0); problem.mu is {mu}"
                            ),
                        ));
                    }
                }
                ScheduleName::Smooth => {
                    if self.preset == PresetName::HingeSvmSplit {
                        return Err(field_err(
                            "solver.schedule",
                            "the smooth schedule needs a Lipschitz-smooth theta1; the hinge loss is not smooth",
                        ));
                    }
                }
                ScheduleName::Convex => {}
            }
        }
        Ok(())
    }

    /// Solver settings for one replication on `spec`.
    pub fn solver_config(&self, spec: &ProblemSpec, check: bool) -> SolverConfig {
        let s = &self.solver;
        let variant = match s.variant {
            VariantName::Deterministic => Variant::Deterministic,
            VariantName::Stochastic => Variant::Stochastic,
            VariantName::Linearized => {
                let r = s
                    .linearization_r
                    .unwrap_or_else(|| s.beta * crate::solvers::ata_norm(spec));
                Variant::Linearized(Linearization::Scalar(r))
            }
        };
        let schedule = match s.schedule {
            ScheduleName::Convex => StepSchedule::Convex,
            ScheduleName::StronglyConvex => StepSchedule::StronglyConvex,
            ScheduleName::Smooth => StepSchedule::Smooth,
            ScheduleName::Constant => StepSchedule::Constant {
                eta: s.eta.unwrap_or(f64::NAN),
            },
        };
        let mut cfg = SolverConfig::new(variant, s.beta, schedule, s.t_max)
            .with_rho(s.rho)
            .with_averaging(self.effective_averaging())
            .with_record(RecordPolicy::At(self.t_grid()));
        cfg.check_invariants = check || s.check_invariants;
        cfg.probe_count = s.probe_count;
        cfg
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let field = field_from_toml_error(text, &e).unwrap_or_else(|| "<document>".into());
        field_err(&field, msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Dotted path of the key on the line a TOML error points at.
fn field_from_toml_error(text: &str, e: &toml::de::Error) -> Option<String> {
    let span = e.span()?;
    let before = &text[..span.start.min(text.len())];
    let mut table = String::new();
    for line in before.lines() {
        let l = line.trim();
        if l.starts_with('[') && l.ends_with(']') {
            table = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
    }
    let line = text[before.rfind('\n').map(|i| i + 1).unwrap_or(0)..].lines().next()?.trim();
    let key = line.split('=').next()?.trim();
    if key.is_empty() || key.starts_with('[') {
        return Some(if table.is_empty() { "<document>".into() } else { table });
    }
    Some(if table.is_empty() { key.to_string() } else { format!("{table}.{key}") })
}

/// Reads, parses and validates a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AdmmError::Io(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("preset = \"lasso-split\"\n").unwrap();
        assert_eq!(cfg.solver, SolverSection::default());
        assert_eq!(cfg.experiment, ExperimentSection::default());
        assert_eq!(cfg.problem, PresetParams::default());
    }

    #[test]
    fn strongly_convex_schedule_without_mu_is_rejected() {
        let text = "preset = \"lasso-split\"\n[solver]\nschedule = \"strongly-convex\"\n";
        let err = parse_config(text).unwrap_err();
        match err {
            AdmmError::Config { field, message } => {
                assert_eq!(field, "solver.schedule");
                assert!(message.contains("mu > 0"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let ok = "preset = \"strongly-convex-lasso\"\n[solver]\nschedule = \"strongly-convex\"\n";
        assert!(parse_config(ok).is_ok());
    }

    #[test]
    fn malformed_number_names_the_field() {
        let text = "preset = \"lasso-split\"\n[solver]\nbeta = \"fast\"\n";
        match parse_config(text).unwrap_err() {
            AdmmError::Config { field, .. } => assert_eq!(field, "solver.beta"),
            other => panic!("{other:?}"),
        }
        let text = "preset = \"lasso-split\"\n[problem]\ncondition = -3.0\n";
        match parse_config(text).unwrap_err() {
            AdmmError::Config { field, .. } => assert_eq!(field, "problem.condition"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_covers_fit_window_with_requested_points() {
        let mut cfg = ExperimentConfig::for_preset(PresetName::LassoSplit);
        cfg.solver.t_max = 100_000;
        let g = cfg.t_grid();
        let inside: Vec<_> = g.iter().filter(|t| **t >= 1000).collect();
        assert_eq!(inside.len(), 20);
        assert_eq!(*g.last().unwrap(), 100_000);
        cfg.solver.t_max = 10;
        assert_eq!(cfg.t_grid(), (1..=10).collect::<Vec<_>>());
    }
}
