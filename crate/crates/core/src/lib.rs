//! Multilevel Monte Carlo, replicated quasi-Monte Carlo and fast Bayesian
//! quasi-Monte Carlo without replications.
//!
//! The crate is organised bottom-up:
//!
//! * [`ld`]: lattice and digital-net generators, shifts, scrambling, and
//!   generator files.
//! * [`transforms`]: orthonormal FWHT and bit-reversed FFT.
//! * [`kernels`]: SI / DSI product kernels.
//! * [`gp`]: structured GP algebra, hyperparameter fitting, and posterior
//!   cubature.
//! * [`estimators`]: the three multilevel algorithms.
//! * [`problems`]: test integrands and multilevel problems.
//! * [`experiment`]: the configuration-driven trial harness.

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod gp;
pub mod kernels;
pub mod ld;
pub mod problems;
pub mod rng;
pub mod transforms;

pub use error::{Error, Result};
pub use estimators::{LevelDiagnostics, MlEstimate};
pub use experiment::{ExperimentConfig, Method, TrialRecord};
pub use gp::{CubatureResult, GpLevelState, GpOptions};
pub use kernels::{KernelFamily, KernelParams};
pub use ld::{DigitalNetGen, Generator, LatticeGen, LdConfig, PointSet, SeqKind, Shift};
pub use problems::MlProblem;
pub use rng::StreamKey;
pub use transforms::TransformKind;
