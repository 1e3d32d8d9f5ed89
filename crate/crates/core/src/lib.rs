//! Numerical laboratory for singular-degenerate stochastic fast diffusion
//! `dX in Delta(|X|^{m-1} X) dt + B(t, X) dW`, `m in [0, 1]`, on a 1D
//! Dirichlet interval.
//!
//! The multivalued nonlinearity is approximated either by its Moreau-Yosida
//! regularization or by `delta`-smoothing, optionally with vanishing
//! viscosity, and driven by finitely many Brownian modes. Diagnostics
//! estimate the stability, energy and variational-inequality bounds that
//! characterize the limit.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

// `!(x > 0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod noise;
pub mod operators;
pub mod real;
pub mod scalar;
pub mod solver;
pub mod svi;

pub use diagnostics::{ContractionReport, EnergyReport, Ensemble, RateFit};
pub use error::{Error, Result};
pub use grid::{DirichletLaplacian, Domain1D, GridFunction};
pub use noise::{LipschitzNoise, NoiseModel, WienerPath};
pub use real::Real;
pub use scalar::{
    CertificateReport, DeltaSmoothing, InequalityCheck, Interval, PowerNonlinearity,
    Regularization, YosidaRegularization,
};
pub use solver::{simulate_coupled, Scheme, Solver, SolverConfig, Trajectory};
pub use svi::{DriftSpec, SelectionReport, SviReport, TestProcess};

pub type Domain = Domain1D<f64>;
pub type Grid64 = GridFunction<f64>;
pub type Laplacian64 = DirichletLaplacian<f64>;
pub type Noise64 = NoiseModel<f64>;
pub type Regularization64 = Regularization<f64>;
pub type Nonlinearity64 = PowerNonlinearity<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type Solver64 = Solver<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type Ensemble64 = Ensemble<f64>;
pub type TestProcess64 = TestProcess<f64>;

/// Crate version, recorded in experiment provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
