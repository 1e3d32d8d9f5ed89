//! JSON experiment configuration.
//!
//! Every section is optional at parse time; each experiment kind demands the
//! sections it needs and reports a config error naming the missing one.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sfde_core::noise::c1_proxy;
use sfde_core::solver::regularize_initial_datum;
use sfde_core::{
    DirichletLaplacian, Domain, Grid64, Noise64, Regularization64, Scheme, SolverConfig64,
};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ScalarVerify,
    Simulate,
    Converge,
    Contraction,
    SviCheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Self::ScalarVerify => "scalar-verify",
            Self::Simulate => "simulate",
            Self::Converge => "converge",
            Self::Contraction => "contraction",
            Self::SviCheck => "svi-check",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    /// Path `i` uses seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    /// Worker cap for path-parallel loops (0 = all cores). Never affects results.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "one")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Profile>,
    /// Replace `x0` by `(I - Delta/n)^{-1} x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularize_initial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<ScalarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svi: Option<SviSpec>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub a: f64,
    #[serde(default = "unit")]
    pub b: f64,
    pub n: usize,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegSpec {
    Yosida(f64),
    Delta(f64),
    None,
}

impl RegSpec {
    pub fn build(self) -> Result<Regularization64, LabError> {
        Ok(match self {
            Self::Yosida(e) => Regularization64::yosida(e).map_err(config)?,
            Self::Delta(d) => Regularization64::delta(d).map_err(config)?,
            Self::None => Regularization64::None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSpec {
    Imex,
    Implicit,
}

impl From<SchemeSpec> for Scheme {
    fn from(s: SchemeSpec) -> Self {
        match s {
            SchemeSpec::Imex => Scheme::Imex,
            SchemeSpec::Implicit => Scheme::Implicit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub m: f64,
    #[serde(default)]
    pub eps_visc: f64,
    pub regularization: RegSpec,
    #[serde(default = "implicit")]
    pub scheme: SchemeSpec,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn implicit() -> SchemeSpec {
    SchemeSpec::Implicit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    LinearMultiplicative,
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    pub modes: Vec<ModeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub profile: Profile,
    /// Rescale the profile so that `sup|g| + sup|g'|` equals this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1_norm: Option<f64>,
}

/// A function on the interval, sampled at the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant(f64),
    /// `amplitude * sin(mode * pi * (x - a) / (b - a))`.
    Sine {
        mode: usize,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// `amplitude * e_mode`, the `L^2_h`-normalized discrete eigenvector.
    Eigenvector {
        mode: usize,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// Coefficients of `c0 + c1 x + c2 x^2 + ...`.
    Polynomial(Vec<f64>),
    /// Explicit interior values.
    Values(Vec<f64>),
    Sum(Vec<Profile>),
}

impl Profile {
    pub fn build(&self, d: Domain) -> Result<Grid64, LabError> {
        let len = d.length();
        Ok(match self {
            Self::Zero => Grid64::zeros(d),
            Self::Constant(c) => Grid64::from_fn(d, |_| *c),
            Self::Sine { mode, amplitude } => {
                let k = *mode as f64;
                Grid64::from_fn(d, |x| amplitude * (k * PI * (x - d.a()) / len).sin())
            }
            Self::Eigenvector { mode, amplitude } => {
                if *mode == 0 || *mode > d.n() {
                    return Err(LabError::Config(format!(
                        "eigenvector mode {mode} outside 1..={}",
                        d.n()
                    )));
                }
                DirichletLaplacian::new(d)
                    .eigenvector(*mode)
                    .scale(*amplitude)
            }
            Self::Polynomial(c) => {
                Grid64::from_fn(d, |x| c.iter().rev().fold(0.0, |acc, ci| acc * x + ci))
            }
            Self::Values(v) => Grid64::new(d, v.clone()).map_err(config)?,
            Self::Sum(terms) => {
                let mut acc = Grid64::zeros(d);
                for t in terms {
                    acc = acc.add(&t.build(d)?).map_err(config)?;
                }
                acc
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSpec {
    #[serde(default = "default_m")]
    pub m: Vec<f64>,
    #[serde(default = "default_params")]
    pub eps: Vec<f64>,
    #[serde(default = "default_params")]
    pub delta: Vec<f64>,
    #[serde(default = "minus_five")]
    pub r_min: f64,
    #[serde(default = "five")]
    pub r_max: f64,
    #[serde(default = "r_step")]
    pub r_step: f64,
    #[serde(default = "pair_points")]
    pub pair_points: usize,
    #[serde(default = "huber_tol")]
    pub huber_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operators: Option<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgradient: Option<SubgradientSpec>,
}

impl Default for ScalarSpec {
    fn default() -> Self {
        Self {
            m: default_m(),
            eps: default_params(),
            delta: default_params(),
            r_min: minus_five(),
            r_max: five(),
            r_step: r_step(),
            pair_points: pair_points(),
            huber_tol: huber_tol(),
            operators: None,
            subgradient: None,
        }
    }
}

fn default_m() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}
fn default_params() -> Vec<f64> {
    vec![1.0, 1e-1, 1e-2, 1e-3]
}
fn minus_five() -> f64 {
    -5.0
}
fn five() -> f64 {
    5.0
}
fn r_step() -> f64 {
    0.01
}
fn pair_points() -> usize {
    101
}
fn huber_tol() -> f64 {
    1e-12
}

impl ScalarSpec {
    /// `r_min + i * r_step` up to `r_max` (inclusive up to rounding).
    pub fn r_grid(&self) -> Result<Vec<f64>, LabError> {
        if !(self.r_step > 0.0) || !(self.r_max >= self.r_min) {
            return Err(LabError::Config(
                "scalar grid needs r_step > 0 and r_max >= r_min".into(),
            ));
        }
        let count = ((self.r_max - self.r_min) / self.r_step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| self.r_min + i as f64 * self.r_step)
            .collect())
    }

    pub fn pair_grid(&self) -> Result<Vec<f64>, LabError> {
        if self.pair_points < 2 {
            return Err(LabError::Config("pair_points must be at least 2".into()));
        }
        let w = (self.r_max - self.r_min) / (self.pair_points - 1) as f64;
        Ok((0..self.pair_points)
            .map(|i| self.r_min + i as f64 * w)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default = "operator_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "operator_m")]
    pub m: Vec<f64>,
    #[serde(default = "operator_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "operator_samples")]
    pub samples: usize,
}

fn operator_sizes() -> Vec<usize> {
    vec![15, 127, 511]
}
fn operator_m() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn operator_lambdas() -> Vec<f64> {
    vec![0.0, 1e-4, 1e-2, 1.0, 1e2]
}
fn operator_samples() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgradientSpec {
    #[serde(default = "subgradient_m")]
    pub m: Vec<f64>,
    #[serde(default = "subgradient_n")]
    pub n: usize,
    #[serde(default = "subgradient_trials")]
    pub trials: usize,
}

fn subgradient_m() -> Vec<f64> {
    vec![0.0, 0.5]
}
fn subgradient_n() -> usize {
    127
}
fn subgradient_trials() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Number of paths whose full trajectory is written as CSV.
    #[serde(default = "one")]
    pub csv_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extinction_threshold: Option<f64>,
    /// Assert per-step decay of the `H^-1` norm and the Lyapunov energy.
    #[serde(default)]
    pub check_dissipation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen_oracle: Option<EigenOracle>,
    /// Assert `sup |X_imex - X_implicit| <= factor * dt * ||x0||`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme_agreement: Option<f64>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            csv_paths: 1,
            extinction_threshold: None,
            check_dissipation: false,
            eigen_oracle: None,
            scheme_agreement: None,
        }
    }
}

/// Compares the run with `(1 + dt lambda_k)^{-n} x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOracle {
    pub mode: usize,
    #[serde(default = "oracle_tol")]
    pub tol: f64,
}

fn oracle_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderParam {
    Delta,
    Yosida,
    EpsVisc,
    Dt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub parameter: LadderParam,
    pub values: Vec<f64>,
    #[serde(default = "slope_min")]
    pub slope_min: f64,
    #[serde(default = "slope_max")]
    pub slope_max: f64,
    #[serde(default = "r2_min")]
    pub r2_min: f64,
}

fn slope_min() -> f64 {
    0.4
}
fn slope_max() -> f64 {
    1.1
}
fn r2_min() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionSpec {
    /// `y0 = x0 + a * perturbation` for every amplitude `a`.
    pub perturbation: Profile,
    pub amplitudes: Vec<f64>,
    /// Weight `e^{-K t}`; defaults to the smallest admissible `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default)]
    pub tol: f64,
    #[serde(default = "band")]
    pub band: [f64; 2],
}

fn band() -> [f64; 2] {
    [0.5, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSpec {
    Zero,
    Constant(Profile),
    RegularizedDrift {
        regularization: RegSpec,
        #[serde(default)]
        eps_visc: f64,
    },
}

impl TestSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::Constant(_) => "constant".into(),
            Self::RegularizedDrift { regularization, .. } => match regularization {
                RegSpec::Yosida(e) => format!("regularized_yosida_{e}"),
                RegSpec::Delta(d) => format!("regularized_delta_{d}"),
                RegSpec::None => "regularized_none".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SviSpec {
    pub test_processes: Vec<TestSpec>,
    /// Initial value of every test process; defaults to `x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Profile>,
    /// Constant `C`; defaults to the noise Lipschitz constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "slack_ladder")]
    pub slack_ladder: Vec<f64>,
    #[serde(default = "slack_slope_min")]
    pub slack_slope_min: f64,
}

fn slack_ladder() -> Vec<f64> {
    vec![1e-1, 5e-2, 2.5e-2, 1.25e-2]
}
fn slack_slope_min() -> f64 {
    0.9
}

pub(crate) fn config(e: impl fmt::Display) -> LabError {
    LabError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        serde_json::from_str(text).map_err(config)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    /// The per-path seeds `seed, seed + 1, ...`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.paths as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    fn section<'a, S>(&self, s: &'a Option<S>, name: &str) -> Result<&'a S, LabError> {
        s.as_ref()
            .ok_or_else(|| LabError::Config(format!("missing section `{name}`")))
    }

    pub fn domain(&self) -> Result<Domain, LabError> {
        let g = self.section(&self.grid, "grid")?;
        Domain::new(g.a, g.b, g.n).map_err(config)
    }

    pub fn noise_model(&self) -> Result<Noise64, LabError> {
        let d = self.domain()?;
        let Some(spec) = &self.noise else {
            return Ok(Noise64::none());
        };
        let mut modes = Vec::with_capacity(spec.modes.len());
        for (i, m) in spec.modes.iter().enumerate() {
            let mut g = m.profile.build(d)?;
            if let Some(target) = m.c1_norm {
                let c = c1_proxy(&g);
                if !(c > 0.0) {
                    return Err(LabError::Config(format!(
                        "noise mode {i} vanishes and cannot be rescaled"
                    )));
                }
                g = g.scale(target / c);
            }
            modes.push(g);
        }
        match spec.kind {
            NoiseKind::LinearMultiplicative => Noise64::linear_multiplicative(modes),
            NoiseKind::Additive => Noise64::additive(modes),
        }
        .map_err(config)
    }

    pub fn solver_config(&self) -> Result<SolverConfig64, LabError> {
        let s = self.section(&self.solver, "solver")?;
        let d = self.domain()?;
        let mut cfg = SolverConfig64::new(d, s.m, s.regularization.build()?, s.dt, s.t_end)
            .map_err(config)?;
        cfg.eps_visc = s.eps_visc;
        cfg.scheme = s.scheme.into();
        if let Some(t) = s.newton_tol {
            cfg.newton_tol = t;
        }
        if let Some(k) = s.newton_max_iter {
            cfg.newton_max_iter = k;
        }
        cfg.record_every = s.record_every;
        cfg.noise = self.noise_model()?;
        cfg.validate().map_err(config)?;
        Ok(cfg)
    }

    pub fn initial_datum(&self) -> Result<Grid64, LabError> {
        let d = self.domain()?;
        let x0 = self.section(&self.initial, "initial")?.build(d)?;
        match self.regularize_initial {
            Some(n) => {
                regularize_initial_datum(&DirichletLaplacian::new(d), &x0, n).map_err(config)
            }
            None => Ok(x0),
        }
    }

    pub fn require_paths(&self) -> Result<(), LabError> {
        if self.paths == 0 {
            return Err(LabError::Config("`paths` must be at least 1".into()));
        }
        Ok(())
    }

    pub fn scalar_spec(&self) -> ScalarSpec {
        self.scalar.clone().unwrap_or_default()
    }

    pub fn simulate_spec(&self) -> SimulateSpec {
        self.simulate.clone().unwrap_or_default()
    }

    pub fn ladder_spec(&self) -> Result<&LadderSpec, LabError> {
        self.section(&self.ladder, "ladder")
    }

    pub fn contraction_spec(&self) -> Result<&ContractionSpec, LabError> {
        self.section(&self.contraction, "contraction")
    }

    pub fn svi_spec(&self) -> Result<&SviSpec, LabError> {
        self.section(&self.svi, "svi")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = ExperimentConfig::from_json(r#"{"paths": 2, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"grid": {"n": 3, "size": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("size"), "{err}");
    }

    #[test]
    fn empty_config_has_defaults() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c.paths, 1);
        assert_eq!(c.scalar_spec().r_grid().unwrap().len(), 1001);
        assert_eq!(c.scalar_spec().pair_grid().unwrap().len(), 101);
        assert!(c.domain().is_err());
    }

    #[test]
    fn profiles_and_noise_scaling() {
        let c = ExperimentConfig::from_json(
            r#"{"grid": {"n": 31},
                "noise": {"modes": [{"profile": {"constant": 1.0}},
                                    {"profile": {"sine": {"mode": 1}}, "c1_norm": 1.0}]},
                "initial": {"sum": [{"polynomial": [0, 1, -1]}, {"eigenvector": {"mode": 2}}]}}"#,
        )
        .unwrap();
        let noise = c.noise_model().unwrap();
        assert_eq!(noise.modes(), 2);
        assert!((noise.lipschitz_constant() - 2.0).abs() < 1e-12);
        let x0 = c.initial_datum().unwrap();
        let d = c.domain().unwrap();
        let expected = Grid64::from_fn(d, |x| x - x * x)
            .add(&DirichletLaplacian::new(d).eigenvector(2))
            .unwrap();
        assert!(x0.sub(&expected).unwrap().sup_norm() < 1e-15);
    }

    #[test]
    fn round_trip_is_exact() {
        let text = r#"{"seed": 7, "paths": 3, "grid": {"n": 15},
            "solver": {"m": 0.0, "regularization": {"delta": 0.0125}, "dt": 0.0002, "t_end": 0.25},
            "initial": {"sine": {"mode": 1, "amplitude": 0.1}},
            "ladder": {"parameter": "delta", "values": [0.1, 0.05, 0.025]}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.seeds(), vec![7, 8, 9]);
    }

    #[test]
    fn invalid_solver_parameters_are_config_errors() {
        let c = ExperimentConfig::from_json(
            r#"{"grid": {"n": 15}, "solver": {"m": 0.0, "regularization": "none", "dt": 0.1, "t_end": 1.0}}"#,
        )
        .unwrap();
        assert!(matches!(c.solver_config(), Err(LabError::Config(_))));
    }
}
